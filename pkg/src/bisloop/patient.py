"""Propofol PK/PD virtual patient model.

Plasma kinetics follow a linear three-compartment mammillary model plus a
first-order effect-site compartment, with rate constants derived from the
patient's demographics (Schnider-style covariate model).  The clinical
effect is the BIS depth-of-anesthesia index, produced from the effect-site
concentration by a sigmoid Hill curve.

Units: concentrations in mg/L, volumes in L, clearances in L/min, rate
constants in 1/min, infusion rates in mg/min, time in minutes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .errors import ModelError, NonPhysicalParameterError

# Effect-site equilibration constant: drug transfer into the effect site is
# taken equal to elimination out of it, so Ce tracks C1 with no steady-state
# offset.
KE0_PER_MIN = 0.456

_CENTRAL_VOLUME_L = 4.27


class Sex(str, Enum):
    FEMALE = "F"
    MALE = "M"


class PkPreset(str, Enum):
    """Covariate coefficient set used to derive the PK rate constants.

    SCHNIDER_CORRECTED is the standard Schnider adult parameter set
    (weight/height clearance coefficients 0.0456 and 0.0264, deep
    compartment volume 238 L) and is the default.

    AS_PUBLISHED keeps the coefficient set exactly as printed in the source
    parameter table this model was transcribed from (0.456, 0.264, deep
    volume 2.38 L).  Those coefficients produce a negative elimination
    clearance for most adults; the preset is retained for auditing and
    raises NonPhysicalParameterError whenever the result is non-physical.
    """

    SCHNIDER_CORRECTED = "schnider_corrected"
    AS_PUBLISHED = "as_published"


@dataclass(frozen=True)
class Demographics:
    """Patient covariates used to personalize the PK model."""

    age: int            # years
    height_cm: float
    weight_kg: float
    sex: Sex

    def __post_init__(self):
        if self.age <= 0:
            raise ModelError(f"age must be positive, got {self.age}")
        if self.height_cm <= 0:
            raise ModelError(f"height_cm must be positive, got {self.height_cm}")
        if self.weight_kg <= 0:
            raise ModelError(f"weight_kg must be positive, got {self.weight_kg}")
        # Reject body habitus outside the validity region of the LBM formula.
        lean_body_mass(self.sex, self.weight_kg, self.height_cm)


def lean_body_mass(sex: Sex | str, weight_kg: float, height_cm: float) -> float:
    """James lean body mass estimate in kg.

    Male:   1.1*w - 128*w^2/h^2
    Female: 1.07*w - 148*w^2/h^2

    Raises ModelError when the quadratic term dominates and the estimate
    turns non-positive (demographics outside the formula's domain).
    """
    if weight_kg <= 0 or height_cm <= 0:
        raise ModelError("weight and height must be positive")
    ratio = weight_kg * weight_kg / (height_cm * height_cm)
    if Sex(sex) is Sex.MALE:
        lbm = 1.1 * weight_kg - 128.0 * ratio
    else:
        lbm = 1.07 * weight_kg - 148.0 * ratio
    if lbm <= 0:
        raise NonPhysicalParameterError(
            f"non-physical LBM {lbm:.4g} kg for weight={weight_kg} kg, "
            f"height={height_cm} cm", value=lbm)
    return lbm


@dataclass(frozen=True)
class PkParams:
    """Compartment volumes, clearances and rate constants.

    The rate constants are clearance/volume ratios; clearances are retained
    for reporting.  Consistency of the two representations is enforced at
    construction.
    """

    v1: float
    v2: float
    v3: float
    k10: float
    k12: float
    k13: float
    k21: float
    k31: float
    k1e: float
    ke0: float
    cl1: float
    cl2: float
    cl3: float

    def __post_init__(self):
        for name in ("v1", "v2", "v3"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("k10", "k12", "k13", "k21", "k31", "k1e", "ke0"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be non-negative, got {getattr(self, name)}")
        if self.cl1 <= 0:
            raise NonPhysicalParameterError(
                f"non-physical PK parameters: cl1={self.cl1:.6g} L/min", value=self.cl1)
        for prod, cl, label in (
            (self.k10 * self.v1, self.cl1, "k10*v1 vs cl1"),
            (self.k12 * self.v1, self.cl2, "k12*v1 vs cl2"),
            (self.k13 * self.v1, self.cl3, "k13*v1 vs cl3"),
            (self.k21 * self.v2, self.cl2, "k21*v2 vs cl2"),
            (self.k31 * self.v3, self.cl3, "k31*v3 vs cl3"),
        ):
            scale = max(abs(prod), abs(cl), 1e-300)
            if abs(prod - cl) > 1e-12 * scale:
                raise ModelError(f"inconsistent PK parameters: {label} "
                                 f"({prod!r} vs {cl!r})")


def derive_pk_params(demo: Demographics,
                     preset: PkPreset = PkPreset.SCHNIDER_CORRECTED) -> PkParams:
    """Derive the PK parameter set from demographics.

    Pure and deterministic: identical inputs give bit-identical outputs.
    Raises NonPhysicalParameterError when the covariate model produces a
    non-positive elimination clearance or shallow-compartment volume
    (expected for AS_PUBLISHED on most adults).
    """
    preset = PkPreset(preset)
    lbm = lean_body_mass(demo.sex, demo.weight_kg, demo.height_cm)
    v1 = _CENTRAL_VOLUME_L
    v2 = 18.9 - 0.391 * (demo.age - 53)
    if preset is PkPreset.SCHNIDER_CORRECTED:
        v3 = 238.0
        cl1 = (1.89 + 0.0456 * (demo.weight_kg - 77)
               - 0.0681 * (lbm - 59) + 0.0264 * (demo.height_cm - 177))
    else:
        v3 = 2.38
        cl1 = (1.89 + 0.456 * (demo.weight_kg - 77)
               - 0.0681 * (lbm - 59) + 0.264 * (demo.height_cm - 177))
    cl2 = 1.29 - 0.024 * (demo.age - 53)
    cl3 = 0.836
    if cl1 <= 0:
        raise NonPhysicalParameterError(
            f"non-physical PK parameters: cl1={cl1:.6g} L/min "
            f"(preset={preset.value}, age={demo.age}, height={demo.height_cm}, "
            f"weight={demo.weight_kg}, sex={demo.sex.value})", value=cl1)
    if v2 <= 0:
        raise NonPhysicalParameterError(
            f"non-physical PK parameters: v2={v2:.6g} L (age={demo.age})", value=v2)
    return PkParams(
        v1=v1, v2=v2, v3=v3,
        k10=cl1 / v1, k12=cl2 / v1, k13=cl3 / v1,
        k21=cl2 / v2, k31=cl3 / v3,
        k1e=KE0_PER_MIN, ke0=KE0_PER_MIN,
        cl1=cl1, cl2=cl2, cl3=cl3,
    )


@dataclass(frozen=True)
class HillParams:
    """Sigmoid concentration-effect parameters mapping Ce to BIS."""

    e0: float      # awake baseline BIS
    emax: float    # maximal BIS depression
    ce50: float    # mg/L at half effect
    gamma: float   # curve steepness

    def __post_init__(self):
        if not 0 < self.e0 <= 100:
            raise ModelError(f"e0 must be in (0, 100], got {self.e0}")
        if self.emax <= 0:
            raise ModelError(f"emax must be positive, got {self.emax}")
        if self.ce50 <= 0:
            raise ModelError(f"ce50 must be positive, got {self.ce50}")
        if self.gamma <= 0:
            raise ModelError(f"gamma must be positive, got {self.gamma}")


def hill_bis(ce: float, hill: HillParams) -> float:
    """BIS produced by effect-site concentration ce (mg/L).

    Returns the raw sigmoid value e0 - emax*ce^g/(ce^g + ce50^g), which can
    leave [0, 100] when emax > e0; clamping to the monitor range is a
    sensor-stage concern, not a model one.
    """
    if ce <= 0.0:
        return hill.e0
    x = ce ** hill.gamma
    return hill.e0 - hill.emax * x / (x + hill.ce50 ** hill.gamma)


class PatientState(NamedTuple):
    """Compartment concentrations (mg/L): central, shallow, deep, effect site."""

    c1: float
    c2: float
    c3: float
    ce: float


ZERO_STATE = PatientState(0.0, 0.0, 0.0, 0.0)


def pk_derivatives(state: PatientState, u: float, pk: PkParams) -> PatientState:
    """Time derivatives of the compartment concentrations (mg/L/min).

    u is the infusion rate into the central compartment in mg/min.
    """
    c1, c2, c3, ce = state
    return PatientState(
        -(pk.k10 + pk.k12 + pk.k13) * c1 + pk.k21 * c2 + pk.k31 * c3 + u / pk.v1,
        pk.k12 * c1 - pk.k21 * c2,
        pk.k13 * c1 - pk.k31 * c3,
        pk.k1e * c1 - pk.ke0 * ce,
    )


def step_rk4(state: PatientState, u: float, pk: PkParams, h: float) -> PatientState:
    """Advance the compartment model one step of h minutes.

    Classical 4th-order Runge-Kutta with the infusion rate held constant
    over the step.  Negative concentrations caused by round-off are clamped
    to zero; a non-finite result raises ModelError.
    """
    if h <= 0:
        raise ModelError(f"step size must be positive, got {h}")
    k1 = pk_derivatives(state, u, pk)
    half = 0.5 * h
    s2 = PatientState(state.c1 + half * k1.c1, state.c2 + half * k1.c2,
                      state.c3 + half * k1.c3, state.ce + half * k1.ce)
    k2 = pk_derivatives(s2, u, pk)
    s3 = PatientState(state.c1 + half * k2.c1, state.c2 + half * k2.c2,
                      state.c3 + half * k2.c3, state.ce + half * k2.ce)
    k3 = pk_derivatives(s3, u, pk)
    s4 = PatientState(state.c1 + h * k3.c1, state.c2 + h * k3.c2,
                      state.c3 + h * k3.c3, state.ce + h * k3.ce)
    k4 = pk_derivatives(s4, u, pk)
    sixth = h / 6.0
    out = (
        state.c1 + sixth * (k1.c1 + 2.0 * (k2.c1 + k3.c1) + k4.c1),
        state.c2 + sixth * (k1.c2 + 2.0 * (k2.c2 + k3.c2) + k4.c2),
        state.c3 + sixth * (k1.c3 + 2.0 * (k2.c3 + k3.c3) + k4.c3),
        state.ce + sixth * (k1.ce + 2.0 * (k2.ce + k3.ce) + k4.ce),
    )
    if not all(math.isfinite(v) for v in out):
        raise ModelError(f"integration diverged: state={out}, u={u}, h={h}")
    return PatientState(*(0.0 if v < 0.0 else v for v in out))


@dataclass(frozen=True)
class VirtualPatient:
    """A simulated patient: demographics, derived PK, and individual Hill curve."""

    id: int
    demographics: Demographics
    pk: PkParams
    hill: HillParams
    pk_preset: PkPreset = PkPreset.SCHNIDER_CORRECTED
    fictitious_average: bool = False

    def __post_init__(self):
        derived = derive_pk_params(self.demographics, self.pk_preset)
        if derived != self.pk:
            raise ModelError(
                f"patient {self.id}: pk does not match parameters derived from "
                f"demographics with preset {self.pk_preset.value}")

    @classmethod
    def from_demographics(cls, id: int, demo: Demographics, hill: HillParams,
                          preset: PkPreset = PkPreset.SCHNIDER_CORRECTED,
                          fictitious_average: bool = False) -> "VirtualPatient":
        return cls(id=id, demographics=demo, pk=derive_pk_params(demo, preset),
                   hill=hill, pk_preset=PkPreset(preset),
                   fictitious_average=fictitious_average)


# Identified adult cohort used throughout: (id, age, height_cm, weight_kg,
# sex, ce50, gamma, e0, emax).  Row 13 is a fictitious individual whose
# parameters are the arithmetic average of rows 1-12 (as published, i.e.
# rounded to the table's precision).
_COHORT_ROWS: tuple[tuple, ...] = (
    (1, 40, 163, 54, Sex.FEMALE, 6.33, 2.24, 98.8, 94.10),
    (2, 36, 163, 50, Sex.FEMALE, 6.76, 4.29, 98.6, 86.00),
    (3, 28, 164, 52, Sex.FEMALE, 8.44, 4.10, 91.2, 80.70),
    (4, 50, 163, 83, Sex.FEMALE, 6.44, 2.18, 95.9, 102.00),
    (5, 28, 164, 60, Sex.MALE, 4.93, 2.46, 94.7, 85.30),
    (6, 43, 163, 59, Sex.FEMALE, 12.00, 2.42, 90.2, 147.00),
    (7, 37, 187, 75, Sex.MALE, 8.02, 2.10, 92.0, 104.00),
    (8, 38, 174, 80, Sex.FEMALE, 6.56, 4.12, 95.5, 76.40),
    (9, 41, 170, 70, Sex.FEMALE, 6.15, 6.89, 89.2, 63.80),
    (10, 37, 167, 58, Sex.FEMALE, 13.70, 1.65, 83.1, 151.00),
    (11, 42, 179, 78, Sex.MALE, 4.82, 1.85, 91.8, 77.90),
    (12, 34, 172, 58, Sex.FEMALE, 4.95, 1.84, 96.2, 90.80),
    (13, 38, 169, 65, Sex.FEMALE, 7.42, 3.00, 93.1, 96.58),
)

AVERAGE_PATIENT_ID = 13


def builtin_cohort(preset: PkPreset = PkPreset.SCHNIDER_CORRECTED) -> list[VirtualPatient]:
    """The built-in 13-patient cohort with PK derived under the given preset.

    Raises NonPhysicalParameterError for presets that cannot produce a valid
    PK set for every member (AS_PUBLISHED does not).
    """
    cohort = []
    for pid, age, height, weight, sex, ce50, gamma, e0, emax in _COHORT_ROWS:
        demo = Demographics(age=age, height_cm=float(height),
                            weight_kg=float(weight), sex=sex)
        hill = HillParams(e0=e0, emax=emax, ce50=ce50, gamma=gamma)
        cohort.append(VirtualPatient.from_demographics(
            pid, demo, hill, preset,
            fictitious_average=(pid == AVERAGE_PATIENT_ID)))
    return cohort


def cohort_member(patient_id: int,
                  preset: PkPreset = PkPreset.SCHNIDER_CORRECTED) -> VirtualPatient:
    """Single cohort member by id (1-13)."""
    for row in _COHORT_ROWS:
        if row[0] == patient_id:
            pid, age, height, weight, sex, ce50, gamma, e0, emax = row
            demo = Demographics(age=age, height_cm=float(height),
                                weight_kg=float(weight), sex=sex)
            hill = HillParams(e0=e0, emax=emax, ce50=ce50, gamma=gamma)
            return VirtualPatient.from_demographics(
                pid, demo, hill, preset,
                fictitious_average=(pid == AVERAGE_PATIENT_ID))
    raise ModelError(f"unknown patient id {patient_id} (cohort has 1-13)")
