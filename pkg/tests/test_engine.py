import math

import numpy as np
import pytest

from bisloop import (DisturbancePulse, NoiseKind, NoiseModel, Scenario,
                     ScenarioError, cohort_member, disturbance_at, noise_sample,
                     run_closed_loop, run_many, run_open_loop)
from bisloop.metrics import ce_at_bis, induction_time


class TestDisturbance:
    def test_empty_profile(self):
        assert disturbance_at((), 5.0) == 0.0

    def test_half_open_interval(self):
        pulse = (DisturbancePulse(30.0, 1.0, 10.0),)
        assert disturbance_at(pulse, 30.0) == 10.0
        assert disturbance_at(pulse, 30.5) == 10.0
        assert disturbance_at(pulse, 31.0) == 0.0
        assert disturbance_at(pulse, 29.999) == 0.0

    def test_overlapping_pulses_add(self):
        pulses = (DisturbancePulse(10.0, 5.0, 10.0), DisturbancePulse(12.0, 5.0, -4.0))
        assert disturbance_at(pulses, 13.0) == 6.0


class TestNoise:
    def test_none_model(self):
        rng = np.random.default_rng(0)
        assert noise_sample(NoiseModel(), rng) == 0.0

    def test_zero_sigma(self):
        rng = np.random.default_rng(0)
        assert noise_sample(NoiseModel(NoiseKind.GAUSSIAN, sigma=0.0), rng) == 0.0

    def test_large_sample_statistics(self):
        model = NoiseModel(NoiseKind.GAUSSIAN, sigma=2.0)
        rng = np.random.default_rng(0)
        samples = np.array([noise_sample(model, rng) for _ in range(1_000_000)])
        assert abs(samples.mean()) < 0.01
        assert abs(samples.std() - 2.0) < 0.01

    def test_stream_is_pure_function_of_seed(self):
        model = NoiseModel(NoiseKind.GAUSSIAN, sigma=2.0)
        a = [noise_sample(model, np.random.default_rng(42)) for _ in range(5)]
        b = [noise_sample(model, np.random.default_rng(42)) for _ in range(5)]
        assert a == b

    def test_negative_sigma_rejected(self):
        with pytest.raises(ScenarioError):
            NoiseModel(NoiseKind.GAUSSIAN, sigma=-1.0)


class TestClosedLoop:
    def test_single_step_run(self):
        traj = run_closed_loop(Scenario(patient_id=13, duration=1 / 60))
        assert len(traj) == 1
        assert traj.t == [0.0]
        assert traj.bis_true[0] == 93.1
        assert traj.u[0] > 0.0

    def test_nominal_patient13_run(self, p13_nominal_traj):
        traj = p13_nominal_traj
        t_in = induction_time(traj, 50.0)
        assert t_in is not None and t_in <= 4.0
        assert traj.ce_true[-1] == pytest.approx(6.905, abs=0.05)
        assert abs(traj.bis_true[-1] - 50.0) < 0.5

    def test_reproducible_with_noise(self):
        s = Scenario(patient_id=13, duration=5.0, seed=99,
                     noise=NoiseModel(NoiseKind.GAUSSIAN, sigma=2.0))
        a = run_closed_loop(s)
        b = run_closed_loop(s)
        assert a.bis_measured == b.bis_measured
        assert a.u == b.u
        assert a.ce_true == b.ce_true

    def test_different_seed_differs(self):
        base = dict(patient_id=13, duration=2.0,
                    noise=NoiseModel(NoiseKind.GAUSSIAN, sigma=2.0))
        a = run_closed_loop(Scenario(seed=1, **base))
        b = run_closed_loop(Scenario(seed=2, **base))
        assert a.bis_measured != b.bis_measured

    def test_measured_clamped_to_monitor_range(self):
        s = Scenario(patient_id=13, duration=2.0,
                     disturbance=(DisturbancePulse(0.0, 2.0, 500.0),))
        traj = run_closed_loop(s)
        assert all(v == 100.0 for v in traj.bis_measured)
        assert all(v <= 100.0 for v in traj.bis_measured)

    def test_all_signals_finite_and_bounded(self):
        s = Scenario(patient_id=13, duration=10.0, seed=3,
                     noise=NoiseModel(NoiseKind.GAUSSIAN, sigma=2.0),
                     disturbance=(DisturbancePulse(5.0, 1.0, 10.0),))
        traj = run_closed_loop(s)
        for col in (traj.bis_true, traj.bis_measured, traj.bis_filtered, traj.u,
                    traj.c1, traj.c2, traj.c3, traj.ce_true, traj.ce_model,
                    traj.i_t, traj.ce_ref):
            assert all(math.isfinite(v) for v in col)
        assert all(0.0 <= u <= s.controller.u_max for u in traj.u)
        assert all(0.0 <= v <= 100.0 for v in traj.bis_measured)

    def test_error_carries_step_index(self):
        # a huge negative artifact drags the filtered BIS below the reach of
        # the nominal curve; the run must abort naming the failing step
        from bisloop import ControllerError
        s = Scenario(patient_id=13, duration=2.0,
                     disturbance=(DisturbancePulse(0.0, 2.0, -1000.0),))
        with pytest.raises(ControllerError, match=r"step \d+"):
            run_closed_loop(s)

    def test_time_axis_strictly_increasing(self, p13_nominal_traj):
        ts = p13_nominal_traj.t
        assert all(b > a for a, b in zip(ts, ts[1:]))
        assert len(p13_nominal_traj) == 3600


@pytest.fixture(scope="module")
def pulsed():
    s = Scenario(patient_id=13,
                 disturbance=(DisturbancePulse(30.0, 1.0, 10.0),))
    return run_closed_loop(s)


class TestDisturbanceResponse:
    def test_positive_pulse_raises_mean_infusion(self, pulsed):
        traj = pulsed
        u_ss = traj.u[traj.t.index(29.0)]
        in_pulse = [u for t, u in zip(traj.t, traj.u) if 30.0 <= t < 31.0]
        assert sum(in_pulse) / len(in_pulse) > u_ss

    def test_negative_pulse_lowers_mean_infusion(self):
        s = Scenario(patient_id=13, duration=40.0,
                     disturbance=(DisturbancePulse(30.0, 1.0, -10.0),))
        traj = run_closed_loop(s)
        u_ss = traj.u[traj.t.index(29.0)]
        in_pulse = [u for t, u in zip(traj.t, traj.u) if 30.0 <= t < 31.0]
        assert sum(in_pulse) / len(in_pulse) < u_ss

    def test_recovery_within_ten_minutes(self, pulsed):
        traj = pulsed
        late = [b for t, b in zip(traj.t, traj.bis_true) if t >= 41.0]
        assert all(abs(b - 50.0) < 2.0 for b in late)


class TestOpenLoop:
    def test_no_infusion_stays_at_baseline(self):
        p = cohort_member(13)
        traj = run_open_loop(p, 0.0, duration=5.0)
        assert all(b == 93.1 for b in traj.bis_true)
        assert all(v == 0.0 for v in traj.c1)
        assert all(v == 0.0 for v in traj.ce_true)
        assert traj.bis_filtered[0] is None
        assert traj.ce_model[0] is None

    def test_constant_rate_converges_to_clearance_equilibrium(self):
        # fast-equilibrating parameter set: all poles settle well before 300 min
        from bisloop import Demographics, HillParams, PkPreset, Sex, VirtualPatient
        demo = Demographics(age=30, height_cm=190.0, weight_kg=95.0, sex=Sex.MALE)
        hill = HillParams(e0=93.1, emax=96.58, ce50=7.42, gamma=3.0)
        p = VirtualPatient.from_demographics(1, demo, hill, PkPreset.AS_PUBLISHED)
        u = 10.0
        traj = run_open_loop(p, u, duration=300.0, h=1 / 60)
        assert traj.c1[-1] == pytest.approx(u / p.pk.cl1, rel=0.01)
        assert traj.ce_true[-1] == pytest.approx(u / p.pk.cl1, rel=0.01)

    def test_deep_compartment_preset_converges_on_long_horizon(self):
        # the 238 L deep compartment drains into equilibrium over hours
        p = cohort_member(13)
        u = 10.0
        traj = run_open_loop(p, u, duration=1500.0, h=0.5)
        assert traj.c1[-1] == pytest.approx(u / p.pk.cl1, rel=0.01)

    def test_linearity_doubling_rate_doubles_concentrations(self):
        p = cohort_member(13)
        profile = ((0.0, 30.0), (2.0, 5.0), (4.0, 80.0))
        doubled = tuple((t, 2 * r) for t, r in profile)
        a = run_open_loop(p, profile, duration=6.0)
        b = run_open_loop(p, doubled, duration=6.0)
        for x, y in zip(a.ce_true, b.ce_true):
            assert y == pytest.approx(2 * x, rel=1e-9, abs=1e-300)
        for x, y in zip(a.c1, b.c1):
            assert y == pytest.approx(2 * x, rel=1e-9, abs=1e-300)

    def test_negative_rate_rejected(self):
        p = cohort_member(13)
        with pytest.raises(ScenarioError):
            run_open_loop(p, ((0.0, -5.0),), duration=1.0)


class TestStepSizeSensitivity:
    def test_open_loop_halving_h(self):
        p = cohort_member(13)
        a = run_open_loop(p, 25.0, duration=10.0, h=1 / 60)
        b = run_open_loop(p, 25.0, duration=10.0, h=1 / 120)
        for i in range(len(a)):
            for col in ("c1", "c2", "c3", "ce_true", "bis_true"):
                assert abs(getattr(a, col)[i] - getattr(b, col)[i * 2]) < 1e-6

    def test_closed_loop_halving_h(self):
        # the sampled feedback path makes the loop first-order in h, so the
        # transient shifts by O(h); outside it the runs coincide closely
        a = run_closed_loop(Scenario(patient_id=13, duration=20.0, h=1 / 60))
        b = run_closed_loop(Scenario(patient_id=13, duration=20.0, h=1 / 120))
        worst = 0.0
        for i in range(len(a)):
            for col in ("bis_true", "u", "c1", "ce_true"):
                worst = max(worst, abs(getattr(a, col)[i] - getattr(b, col)[2 * i]))
        assert worst < 0.5
        late = [abs(x - y) for x, y in zip(a.bis_true[600:], b.bis_true[1200::2])]
        assert max(late) < 2e-2


class TestRunMany:
    def test_preserves_order_and_matches_serial(self):
        scenarios = [Scenario(patient_id=i, duration=1.0) for i in (1, 5, 13)]
        serial = [run_closed_loop(s) for s in scenarios]
        batched = run_many(scenarios, workers=1)
        for a, b in zip(serial, batched):
            assert a.u == b.u

    def test_parallel_workers_give_identical_results(self):
        scenarios = [Scenario(patient_id=i, duration=0.5) for i in (2, 3)]
        serial = run_many(scenarios, workers=1)
        parallel = run_many(scenarios, workers=2)
        for a, b in zip(serial, parallel):
            assert a.u == b.u and a.bis_true == b.bis_true


class TestScenarioValidation:
    def test_bad_duration(self):
        with pytest.raises(ScenarioError):
            Scenario(patient_id=13, duration=0.0)

    def test_bad_h(self):
        with pytest.raises(ScenarioError):
            Scenario(patient_id=13, h=-1.0)

    def test_patient_and_id_mutually_exclusive(self):
        p = cohort_member(13)
        with pytest.raises(ScenarioError):
            Scenario(patient_id=1, patient=p)

    def test_default_patient_is_average_individual(self):
        assert Scenario().resolve_patient().id == 13

    def test_steady_state_equilibrium_identity_holds(self, p13_nominal_traj):
        # at the settled end of the run the true patient sits on its own
        # Hill curve at the target concentration
        p = cohort_member(13)
        ce_star = ce_at_bis(p.hill, 50.0)
        assert ce_star == pytest.approx(6.905034653589145)
        assert p13_nominal_traj.ce_true[-1] == pytest.approx(ce_star, abs=0.05)
