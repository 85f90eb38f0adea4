"""Closed-loop and open-loop simulation runner.

A run advances the true patient with the fixed-step integrator, produces the
measured BIS (monitor clamp, optional additive disturbance pulses plus
Gaussian noise), feeds the controller, and records every signal per step.
Runs are deterministic: the noise stream is a pure function of the scenario
seed.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .control import (ControllerConfig, ControllerState, DEFAULT_MODEL_DEMOGRAPHICS,
                      NominalHillParams, controller_step)
from .errors import ControllerError, ModelError, ScenarioError
from .patient import (PkParams, PkPreset, VirtualPatient, ZERO_STATE, cohort_member,
                      derive_pk_params, hill_bis, step_rk4)


class NoiseKind(str, Enum):
    NONE = "none"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseModel:
    """Additive measurement noise on the BIS channel."""

    kind: NoiseKind = NoiseKind.NONE
    sigma: float = 2.0    # BIS units

    def __post_init__(self):
        if self.sigma < 0:
            raise ScenarioError(f"noise sigma must be >= 0, got {self.sigma}")


def noise_sample(model: NoiseModel, rng: np.random.Generator) -> float:
    """Draw one BIS offset; 0 for the no-noise model."""
    if model.kind is NoiseKind.NONE or model.sigma == 0.0:
        return 0.0
    return float(rng.normal(0.0, model.sigma))


class DisturbancePulse(NamedTuple):
    """Additive BIS offset over [start, start + duration)."""

    start: float       # min
    duration: float    # min
    amplitude: float   # BIS units


def disturbance_at(profile: Sequence[DisturbancePulse], t: float) -> float:
    """Sum of all pulses active at time t (pulses may overlap)."""
    total = 0.0
    for p in profile:
        if p.start <= t < p.start + p.duration:
            total += p.amplitude
    return total


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one closed-loop run."""

    patient_id: int | None = None
    patient: VirtualPatient | None = None
    pk_preset: PkPreset = PkPreset.SCHNIDER_CORRECTED
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    duration: float = 60.0      # min
    h: float = 1.0 / 60.0       # min
    noise: NoiseModel = field(default_factory=NoiseModel)
    disturbance: tuple[DisturbancePulse, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0:
            raise ScenarioError(f"duration must be positive, got {self.duration}")
        if self.h <= 0:
            raise ScenarioError(f"h must be positive, got {self.h}")
        if self.patient_id is not None and self.patient is not None:
            raise ScenarioError("give either patient_id or an explicit patient, not both")

    def resolve_patient(self) -> VirtualPatient:
        if self.patient is not None:
            return self.patient
        pid = 13 if self.patient_id is None else self.patient_id
        return cohort_member(pid, self.pk_preset)

    @property
    def n_steps(self) -> int:
        # duration/h with a final partial step truncated
        return int(self.duration / self.h + 1e-9)


@dataclass
class Trajectory:
    """Per-step record of every loop signal.

    The controller columns (bis_filtered, ce_model, i_t, ce_ref) hold None
    on open-loop runs, where the infusion is prescribed.
    """

    t: list[float] = field(default_factory=list)
    bis_true: list[float] = field(default_factory=list)
    bis_measured: list[float] = field(default_factory=list)
    bis_filtered: list[float | None] = field(default_factory=list)
    u: list[float] = field(default_factory=list)
    c1: list[float] = field(default_factory=list)
    c2: list[float] = field(default_factory=list)
    c3: list[float] = field(default_factory=list)
    ce_true: list[float] = field(default_factory=list)
    ce_model: list[float | None] = field(default_factory=list)
    i_t: list[float | None] = field(default_factory=list)
    ce_ref: list[float | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)


def resolve_controller(cfg: ControllerConfig, patient: VirtualPatient
                       ) -> tuple[ControllerConfig, PkParams]:
    """Fill per-run controller pieces: nominal baseline and internal-model PK.

    The internal model always uses the standard covariate preset; its
    demographics default to the cohort average individual.
    """
    nominal = cfg.nominal
    if nominal is None:
        nominal = NominalHillParams(e0=patient.hill.e0)
    demo = cfg.model_demographics or DEFAULT_MODEL_DEMOGRAPHICS
    pk_nominal = derive_pk_params(demo, PkPreset.SCHNIDER_CORRECTED)
    resolved = replace(cfg, nominal=nominal)
    resolved.validate()
    return resolved, pk_nominal


def run_closed_loop(scenario: Scenario) -> Trajectory:
    """Simulate the full feedback loop and record every signal.

    The patient starts drug-free (BIS at the awake baseline).  Each step
    measures, controls, then advances the plant under the issued rate held
    constant for the step.  Controller or integration failures abort the
    run with the failing step index attached.
    """
    patient = scenario.resolve_patient()
    cfg, pk_nominal = resolve_controller(scenario.controller, patient)
    rng = np.random.default_rng(scenario.seed)
    cs = ControllerState.initial(cfg, awake_bis=patient.hill.e0)
    state = ZERO_STATE
    traj = Trajectory()
    h = scenario.h
    hill = patient.hill
    pk_true = patient.pk
    for k in range(scenario.n_steps):
        t = k * h
        try:
            bt = hill_bis(state.ce, hill)
            bm = bt + disturbance_at(scenario.disturbance, t) + noise_sample(scenario.noise, rng)
            bm = 0.0 if bm < 0.0 else (100.0 if bm > 100.0 else bm)
            u = controller_step(cs, cfg, pk_nominal, bm, h)
            traj.t.append(t)
            traj.bis_true.append(bt)
            traj.bis_measured.append(bm)
            traj.bis_filtered.append(cs.last_bis_filtered)
            traj.u.append(u)
            traj.c1.append(state.c1)
            traj.c2.append(state.c2)
            traj.c3.append(state.c3)
            traj.ce_true.append(state.ce)
            traj.ce_model.append(cs.last_model_ce)
            traj.i_t.append(cs.last_innovation)
            traj.ce_ref.append(cs.last_ce_ref)
            state = step_rk4(state, u, pk_true, h)
        except (ModelError, ControllerError) as e:
            raise type(e)(f"step {k} (t={t:.4f} min): {e}") from e
    return traj


InfusionProfile = Sequence[tuple[float, float]]


def _rate_at(profile: InfusionProfile, t: float) -> float:
    """Piecewise-constant rate: last breakpoint at or before t wins."""
    rate = 0.0
    for start, r in profile:
        if start <= t:
            rate = r
        else:
            break
    return rate


def run_open_loop(patient: VirtualPatient, profile: float | InfusionProfile,
                  duration: float, h: float = 1.0 / 60.0,
                  noise: NoiseModel | None = None,
                  disturbance: Sequence[DisturbancePulse] = (),
                  seed: int = 0) -> Trajectory:
    """Simulate a prescribed piecewise-constant infusion (no controller).

    profile is either a single constant rate in mg/min or a sequence of
    (start_min, rate) breakpoints sorted by start.  Controller columns are
    recorded as None.
    """
    if duration <= 0 or h <= 0:
        raise ScenarioError("duration and h must be positive")
    if isinstance(profile, (int, float)):
        profile = ((0.0, float(profile)),)
    else:
        profile = tuple((float(s), float(r)) for s, r in profile)
        if any(r < 0 for _, r in profile):
            raise ScenarioError("infusion rates must be >= 0")
    noise = noise or NoiseModel()
    rng = np.random.default_rng(seed)
    state = ZERO_STATE
    traj = Trajectory()
    n = int(duration / h + 1e-9)
    for k in range(n):
        t = k * h
        try:
            u = _rate_at(profile, t)
            if u < 0:
                raise ModelError(f"infusion rate must be >= 0, got {u}")
            bt = hill_bis(state.ce, patient.hill)
            bm = bt + disturbance_at(disturbance, t) + noise_sample(noise, rng)
            bm = 0.0 if bm < 0.0 else (100.0 if bm > 100.0 else bm)
            traj.t.append(t)
            traj.bis_true.append(bt)
            traj.bis_measured.append(bm)
            traj.bis_filtered.append(None)
            traj.u.append(u)
            traj.c1.append(state.c1)
            traj.c2.append(state.c2)
            traj.c3.append(state.c3)
            traj.ce_true.append(state.ce)
            traj.ce_model.append(None)
            traj.i_t.append(None)
            traj.ce_ref.append(None)
            state = step_rk4(state, u, patient.pk, h)
        except ModelError as e:
            raise type(e)(f"step {k} (t={t:.4f} min): {e}") from e
    return traj


def run_many(scenarios: Iterable[Scenario], workers: int | None = None) -> list[Trajectory]:
    """Run independent scenarios, preserving input order.

    Each run owns its state and RNG, so scenarios parallelize freely;
    results are aggregated deterministically in input order.
    """
    scenarios = list(scenarios)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(scenarios) <= 1:
        return [run_closed_loop(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_closed_loop, scenarios))
