"""Scenario JSON parsing and CSV export.

A scenario file is a JSON object mirroring Scenario and its sub-objects.
Unknown keys are rejected; defaults are applied only for absent keys, and
every validation failure names the offending key.
"""

from __future__ import annotations

import json
from typing import Any

from .control import ControllerConfig, NominalHillParams
from .engine import (DisturbancePulse, NoiseKind, NoiseModel, Scenario, Trajectory)
from .errors import ModelError, ScenarioError
from .metrics import MetricsReport, SweepResult
from .patient import (Demographics, HillParams, PkPreset, Sex, VirtualPatient,
                      builtin_cohort)

TRAJECTORY_CSV_HEADER = ("t_min,bis_true,bis_measured,bis_filtered,u_mg_min,"
                         "c1,c2,c3,ce_true,ce_model,i_t,ce_ref")

_SEX_ALIASES = {"f": Sex.FEMALE, "female": Sex.FEMALE, "m": Sex.MALE, "male": Sex.MALE}


def _require_mapping(obj: Any, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(obj).__name__}")
    return obj


def _check_keys(obj: dict, allowed: set[str], where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {sorted(unknown)}; "
                            f"allowed: {sorted(allowed)}")


def _number(obj: dict, key: str, where: str, default: float | None = None,
            positive: bool = False, non_negative: bool = False) -> float:
    if key not in obj:
        if default is None:
            raise ScenarioError(f"{where}.{key}: required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}.{key}: expected a number, got {v!r}")
    v = float(v)
    if positive and v <= 0:
        raise ScenarioError(f"{where}.{key}: must be > 0, got {v}")
    if non_negative and v < 0:
        raise ScenarioError(f"{where}.{key}: must be >= 0, got {v}")
    return v


def _integer(obj: dict, key: str, where: str, default: int | None = None) -> int:
    if key not in obj:
        if default is None:
            raise ScenarioError(f"{where}.{key}: required")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(f"{where}.{key}: expected an integer, got {v!r}")
    return v


def _parse_controller(obj: Any) -> ControllerConfig:
    obj = _require_mapping(obj, "controller")
    _check_keys(obj, {"target_bis", "tf1_min", "tf2_min", "kp", "ki",
                      "u_max_mg_min", "nominal_e0"}, "controller")
    defaults = ControllerConfig()
    nominal_e0 = None
    if "nominal_e0" in obj:
        nominal_e0 = _number(obj, "nominal_e0", "controller", positive=True)
    return ControllerConfig(
        target_bis=_number(obj, "target_bis", "controller", defaults.target_bis, positive=True),
        tf1=_number(obj, "tf1_min", "controller", defaults.tf1, non_negative=True),
        tf2=_number(obj, "tf2_min", "controller", defaults.tf2, non_negative=True),
        kp=_number(obj, "kp", "controller", defaults.kp, non_negative=True),
        ki=_number(obj, "ki", "controller", defaults.ki, non_negative=True),
        u_max=_number(obj, "u_max_mg_min", "controller", defaults.u_max, positive=True),
        nominal=None if nominal_e0 is None else NominalHillParams(e0=nominal_e0),
    )


def _parse_noise(obj: Any) -> NoiseModel:
    obj = _require_mapping(obj, "noise")
    _check_keys(obj, {"kind", "sigma_bis"}, "noise")
    kind_raw = obj.get("kind", "none")
    try:
        kind = NoiseKind(str(kind_raw).lower())
    except ValueError:
        raise ScenarioError(f"noise.kind: expected 'none' or 'gaussian', got {kind_raw!r}")
    return NoiseModel(kind=kind, sigma=_number(obj, "sigma_bis", "noise", 2.0,
                                               non_negative=True))


def _parse_disturbance(obj: Any) -> tuple[DisturbancePulse, ...]:
    if not isinstance(obj, list):
        raise ScenarioError("disturbance: expected a list of pulses")
    pulses = []
    for i, item in enumerate(obj):
        where = f"disturbance[{i}]"
        item = _require_mapping(item, where)
        _check_keys(item, {"start_min", "duration_min", "amplitude_bis"}, where)
        pulses.append(DisturbancePulse(
            start=_number(item, "start_min", where, non_negative=True),
            duration=_number(item, "duration_min", where, positive=True),
            amplitude=_number(item, "amplitude_bis", where),
        ))
    return tuple(pulses)


def _parse_patient(obj: Any, preset: PkPreset) -> VirtualPatient:
    obj = _require_mapping(obj, "patient")
    _check_keys(obj, {"id", "age", "height_cm", "weight_kg", "sex",
                      "ce50", "gamma", "e0", "emax"}, "patient")
    sex_raw = str(obj.get("sex", "")).lower()
    if sex_raw not in _SEX_ALIASES:
        raise ScenarioError(f"patient.sex: expected F/M, got {obj.get('sex')!r}")
    try:
        demo = Demographics(age=_integer(obj, "age", "patient"),
                            height_cm=_number(obj, "height_cm", "patient", positive=True),
                            weight_kg=_number(obj, "weight_kg", "patient", positive=True),
                            sex=_SEX_ALIASES[sex_raw])
        hill = HillParams(e0=_number(obj, "e0", "patient"),
                          emax=_number(obj, "emax", "patient"),
                          ce50=_number(obj, "ce50", "patient"),
                          gamma=_number(obj, "gamma", "patient"))
    except ModelError as e:
        raise ScenarioError(f"patient: {e}") from e
    return VirtualPatient.from_demographics(_integer(obj, "id", "patient", 0),
                                            demo, hill, preset)


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario JSON document."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"malformed JSON: {e}") from e
    raw = _require_mapping(raw, "scenario")
    _check_keys(raw, {"patient_id", "patient", "pk_preset", "controller",
                      "duration_min", "h_min", "noise", "disturbance", "seed"},
                "scenario")

    preset_raw = raw.get("pk_preset", PkPreset.SCHNIDER_CORRECTED.value)
    try:
        preset = PkPreset(str(preset_raw))
    except ValueError:
        raise ScenarioError(
            f"pk_preset: expected one of {[p.value for p in PkPreset]}, got {preset_raw!r}")

    patient = None
    patient_id = None
    if "patient" in raw and "patient_id" in raw:
        raise ScenarioError("give either patient_id or patient, not both")
    if "patient" in raw:
        patient = _parse_patient(raw["patient"], preset)
    else:
        patient_id = _integer(raw, "patient_id", "scenario", 13)
        if not 1 <= patient_id <= 13:
            raise ScenarioError(f"patient_id: unknown patient id {patient_id} "
                                "(cohort has 1-13)")

    controller = _parse_controller(raw["controller"]) if "controller" in raw \
        else ControllerConfig()
    noise = _parse_noise(raw["noise"]) if "noise" in raw else NoiseModel()
    disturbance = _parse_disturbance(raw["disturbance"]) if "disturbance" in raw else ()

    return Scenario(
        patient_id=patient_id,
        patient=patient,
        pk_preset=preset,
        controller=controller,
        duration=_number(raw, "duration_min", "scenario", 60.0, positive=True),
        h=_number(raw, "h_min", "scenario", 1.0 / 60.0, positive=True),
        noise=noise,
        disturbance=disturbance,
        seed=_integer(raw, "seed", "scenario", 0),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Scenario back to its JSON-document form (defaults written explicitly)."""
    out: dict[str, Any] = {}
    if scenario.patient is not None:
        p = scenario.patient
        out["patient"] = {
            "id": p.id, "age": p.demographics.age,
            "height_cm": p.demographics.height_cm,
            "weight_kg": p.demographics.weight_kg,
            "sex": p.demographics.sex.value,
            "ce50": p.hill.ce50, "gamma": p.hill.gamma,
            "e0": p.hill.e0, "emax": p.hill.emax,
        }
    else:
        out["patient_id"] = 13 if scenario.patient_id is None else scenario.patient_id
    cfg = scenario.controller
    out["pk_preset"] = scenario.pk_preset.value
    out["controller"] = {
        "target_bis": cfg.target_bis, "tf1_min": cfg.tf1, "tf2_min": cfg.tf2,
        "kp": cfg.kp, "ki": cfg.ki, "u_max_mg_min": cfg.u_max,
    }
    if cfg.nominal is not None:
        out["controller"]["nominal_e0"] = cfg.nominal.e0
    out["duration_min"] = scenario.duration
    out["h_min"] = scenario.h
    out["noise"] = {"kind": scenario.noise.kind.value, "sigma_bis": scenario.noise.sigma}
    out["disturbance"] = [
        {"start_min": p.start, "duration_min": p.duration, "amplitude_bis": p.amplitude}
        for p in scenario.disturbance
    ]
    out["seed"] = scenario.seed
    return out


def _fmt(value: float | None) -> str:
    return "" if value is None else format(value, ".6g")


def write_trajectory_csv(traj: Trajectory) -> str:
    """Trajectory as CSV text, floats at 6 significant digits.

    Open-loop runs emit empty fields for the controller columns.
    """
    lines = [TRAJECTORY_CSV_HEADER]
    for i in range(len(traj)):
        lines.append(",".join((
            _fmt(traj.t[i]), _fmt(traj.bis_true[i]), _fmt(traj.bis_measured[i]),
            _fmt(traj.bis_filtered[i]), _fmt(traj.u[i]), _fmt(traj.c1[i]),
            _fmt(traj.c2[i]), _fmt(traj.c3[i]), _fmt(traj.ce_true[i]),
            _fmt(traj.ce_model[i]), _fmt(traj.i_t[i]), _fmt(traj.ce_ref[i]),
        )))
    return "\n".join(lines) + "\n"


COHORT_CSV_HEADER = "id,age,height_cm,weight_kg,sex,ce50,gamma,e0,emax"


def cohort_csv(preset: PkPreset = PkPreset.SCHNIDER_CORRECTED) -> str:
    """Built-in cohort as CSV, formatted at the source table's precision."""
    lines = [COHORT_CSV_HEADER]
    for p in builtin_cohort(preset):
        d = p.demographics
        lines.append(f"{p.id},{d.age},{d.height_cm:.0f},{d.weight_kg:.0f},"
                     f"{d.sex.value},{p.hill.ce50:.2f},{p.hill.gamma:.2f},"
                     f"{p.hill.e0:.1f},{p.hill.emax:.2f}")
    return "\n".join(lines) + "\n"


METRICS_CSV_HEADER = ("patient_id,iae_bis_min,induction_time_min,"
                      "min_bis_post_crossing,steady_state_error_bis,max_u_mg_min")


def metrics_csv(reports: list[tuple[int, MetricsReport]]) -> str:
    lines = [METRICS_CSV_HEADER]
    for pid, r in reports:
        lines.append(",".join((
            str(pid), _fmt(r.iae), _fmt(r.induction_time),
            _fmt(r.min_bis_post_crossing), _fmt(r.steady_state_error), _fmt(r.max_u),
        )))
    return "\n".join(lines) + "\n"


SWEEP_CSV_HEADER = "tf2_min,degradation_ratio"


def sweep_csv(result: SweepResult) -> str:
    lines = [SWEEP_CSV_HEADER]
    for tf2, d in zip(result.grid, result.d_values):
        lines.append(f"{_fmt(tf2)},{_fmt(d)}")
    lines.append(f"# selected_tf2_min={_fmt(result.selected_tf2)} "
                 f"threshold={_fmt(result.threshold)}")
    return "\n".join(lines) + "\n"
