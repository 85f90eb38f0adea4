"""Model-based BIS controller.

The loop inverts the measured BIS through a population-average Hill curve to
get a measurement-implied effect-site concentration, compares it against an
internal linear patient model, and passes the discrepancy through a low-pass
filter to form an innovation signal.  A saturated PI tracking law on the
concentration error produces the infusion rate.  The innovation term cancels
the plant/model mismatch at low frequency, so the measured BIS settles on the
target with zero steady-state error even though the individual Hill
parameters are unknown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ControllerError
from .patient import Demographics, PatientState, PkParams, Sex, ZERO_STATE, step_rk4

# Population-average Hill parameters used by the controller; only the awake
# baseline e0 is measurable per patient before induction.
POPULATION_EMAX = 87.5
POPULATION_GAMMA = 2.69
POPULATION_CE50 = 4.92

# Innovation filter time constant [min].  0.16312 min (9.7871 s) keeps the
# mismatch-correction path fast enough for induction to finish inside the
# clinical 4-minute window while still smoothing measurement noise.
DEFAULT_TF2_MIN = 9.7871 / 60.0

# Demographics assumed for the internal model when the true patient's are
# not supplied: the cohort's average individual.
DEFAULT_MODEL_DEMOGRAPHICS = Demographics(age=38, height_cm=169.0,
                                          weight_kg=65.0, sex=Sex.FEMALE)


@dataclass(frozen=True)
class NominalHillParams:
    """Population Hill curve with a per-patient measured awake baseline."""

    e0: float
    emax: float = POPULATION_EMAX
    gamma: float = POPULATION_GAMMA
    ce50: float = POPULATION_CE50


def inverse_hill(bis: float, nominal: NominalHillParams) -> float:
    """Effect-site concentration (mg/L) implied by a BIS reading.

    Inverts the sigmoid: ce50 * ((e0 - bis)/(emax - e0 + bis))^(1/gamma).
    Readings at or above the awake baseline map to 0 (no drug needed).
    Raises ControllerError when emax - e0 + bis <= 0, where the nominal
    curve has no preimage.
    """
    if bis >= nominal.e0:
        return 0.0
    den = nominal.emax - nominal.e0 + bis
    if den <= 0.0:
        raise ControllerError(
            f"inverse Hill out of domain: bis={bis:.4g} with e0={nominal.e0:.4g}, "
            f"emax={nominal.emax:.4g}")
    return nominal.ce50 * ((nominal.e0 - bis) / den) ** (1.0 / nominal.gamma)


@dataclass
class Lp2State:
    """Two cascaded first-order lags 1/(tf*s + 1); unit DC gain.

    tf = 0 degenerates to an identity passthrough.
    """

    tf: float
    x1: float = 0.0
    x2: float = 0.0

    def __post_init__(self):
        if self.tf < 0:
            raise ControllerError(f"filter time constant must be >= 0, got {self.tf}")


def lp2_step(f: Lp2State, w: float, h: float) -> float:
    """Advance the filter by h minutes with input w held over the step.

    Each section is discretized exactly under zero-order hold:
    x <- x + (1 - exp(-h/tf)) * (in - x), which is unconditionally stable
    for any h.
    """
    if f.tf == 0.0:
        f.x1 = w
        f.x2 = w
        return w
    a = 1.0 - math.exp(-h / f.tf)
    f.x1 += a * (w - f.x1)
    f.x2 += a * (f.x1 - f.x2)
    return f.x2


class Saturation(Enum):
    LOW = "low"
    NONE = "none"
    HIGH = "high"


def saturate(u_raw: float, u_max: float) -> tuple[float, Saturation]:
    """Clamp to [0, u_max]; the flag feeds the anti-windup logic."""
    if u_max <= 0:
        raise ControllerError(f"u_max must be positive, got {u_max}")
    if u_raw < 0.0:
        return 0.0, Saturation.LOW
    if u_raw > u_max:
        return u_max, Saturation.HIGH
    return u_raw, Saturation.NONE


@dataclass
class ControllerConfig:
    """Tuning knobs for one closed-loop run.

    nominal is resolved per run (its e0 is the patient's measured awake
    BIS); model_demographics personalizes the internal linear model and
    falls back to the cohort average individual.
    """

    target_bis: float = 50.0
    tf1: float = 0.1                  # BIS pre-filter time constant [min]
    tf2: float = DEFAULT_TF2_MIN      # innovation filter time constant [min]
    kp: float = 16.0                  # proportional gain [L/min]
    ki: float = 2.5                   # integral gain [L/min^2]
    u_max: float = 200.0              # pump limit [mg/min]
    nominal: NominalHillParams | None = None
    model_demographics: Demographics | None = None

    def validate(self):
        if self.tf1 < 0 or self.tf2 < 0:
            raise ControllerError("filter time constants must be >= 0")
        if self.kp < 0 or self.ki < 0:
            raise ControllerError("controller gains must be >= 0")
        if self.u_max <= 0:
            raise ControllerError(f"u_max must be positive, got {self.u_max}")
        if self.nominal is not None and not (0 < self.target_bis < self.nominal.e0):
            raise ControllerError(
                f"target_bis must lie in (0, e0={self.nominal.e0}), "
                f"got {self.target_bis}")


@dataclass
class ControllerState:
    """Mutable per-run controller memory.

    The pre-filter starts at the awake baseline (that is what the monitor
    reads before induction); model and innovation states start drug-free.
    The last_* fields expose the most recent internal signals for logging.
    """

    f1: Lp2State
    f2: Lp2State
    model_state: PatientState = ZERO_STATE
    integrator: float = 0.0
    last_u: float = 0.0
    last_bis_filtered: float = 0.0
    last_innovation: float = 0.0
    last_ce_ref: float = 0.0
    last_model_ce: float = 0.0

    @classmethod
    def initial(cls, cfg: ControllerConfig, awake_bis: float) -> "ControllerState":
        return cls(f1=Lp2State(cfg.tf1, x1=awake_bis, x2=awake_bis),
                   f2=Lp2State(cfg.tf2),
                   last_bis_filtered=awake_bis)


def controller_step(cs: ControllerState, cfg: ControllerConfig,
                    pk_nominal: PkParams, measured_bis: float, h: float) -> float:
    """One control update: consume a BIS reading, return the infusion rate.

    Mutates cs.  Sequence: pre-filter the reading, invert it to a measured
    concentration, filter the model discrepancy into the innovation, form
    the tracking error against the inverted target, apply the PI law with
    conditional-integration anti-windup, clamp to the pump range, and
    advance the internal model under the issued rate.
    """
    if h <= 0:
        raise ControllerError(f"step size must be positive, got {h}")
    if cfg.nominal is None:
        raise ControllerError("ControllerConfig.nominal must be resolved before use")
    if not math.isfinite(measured_bis):
        raise ControllerError(f"measured BIS is not finite: {measured_bis!r}")

    ce_model = cs.model_state.ce
    bis_f = lp2_step(cs.f1, measured_bis, h)
    ce_meas = inverse_hill(bis_f, cfg.nominal)
    innovation = lp2_step(cs.f2, ce_meas - ce_model, h)
    ce_ref = inverse_hill(cfg.target_bis, cfg.nominal)
    err = ce_ref - (ce_model + innovation)

    proposed = cs.integrator + cfg.ki * err * h
    u, flag = saturate(cfg.kp * err + proposed, cfg.u_max)
    if (flag is Saturation.HIGH and err > 0) or (flag is Saturation.LOW and err < 0):
        # Integrating would push further into the active constraint: freeze.
        u, flag = saturate(cfg.kp * err + cs.integrator, cfg.u_max)
    else:
        cs.integrator = proposed

    if not math.isfinite(u):
        raise ControllerError(f"controller state diverged: u={u!r}, err={err!r}")

    cs.model_state = step_rk4(cs.model_state, u, pk_nominal, h)
    cs.last_u = u
    cs.last_bis_filtered = bis_f
    cs.last_innovation = innovation
    cs.last_ce_ref = ce_ref
    cs.last_model_ce = ce_model
    return u
