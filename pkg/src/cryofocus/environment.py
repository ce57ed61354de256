"""Perturbation models for evacuation and cool-down.

Focal-length changes are returned as signed Δf = f' - f in mm.  Mechanical
stack changes are returned as Δz in mm, positive when the sample to front-lens
distance grows.  Objective-side equivalent shifts of a focal change are -Δf: a
shorter focal length acts like the sample moving away from the objective.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping, Optional, Sequence

from .errors import (
    DegenerateCompensationError,
    InfeasibleCompensationError,
    InvalidLensError,
    ParameterError,
    UnknownMaterialError,
)

AMBIENT_PRESSURE_HPA = 1013.0
AMBIENT_TEMPERATURE_K = 293.0
BASE_TEMPERATURE_K = 4.0

#: Refractive-index change of air per hPa of differential pressure.
AIR_INDEX_PER_HPA = 3e-7

OPENING = +1
CLOSING = -1

SOURCES = ("pressure", "thermo-optic", "lens-contraction", "stack")
THERMAL_SOURCES = ("thermo-optic", "lens-contraction", "stack")


@dataclass(frozen=True)
class EnvironmentState:
    delta_pressure: float = 0.0  # hPa, relative to ambient
    temperature: float = AMBIENT_TEMPERATURE_K  # K

    def __post_init__(self):
        if not self.temperature > 0:
            raise ParameterError(f"temperature must be positive, got {self.temperature} K")
        if self.delta_pressure < -1100:
            raise ParameterError(f"differential pressure below -1100 hPa: {self.delta_pressure}")


@dataclass(frozen=True)
class LensSpec:
    focal_length: float  # mm
    refractive_index: float
    cumulative_contraction: float = 0.0
    thermo_optic_shift: float = 0.0  # cumulative index change, ambient -> base

    def __post_init__(self):
        if not self.refractive_index > 1:
            raise InvalidLensError(f"lens index must exceed 1, got {self.refractive_index}")
        if self.cumulative_contraction < 0:
            raise InvalidLensError("cumulative contraction must be >= 0")


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    cumulative_contraction: float  # ΔL/L, ambient -> 4 K

    def __post_init__(self):
        if not 0 <= self.cumulative_contraction <= 0.05:
            raise ParameterError(
                f"{self.name}: cumulative contraction {self.cumulative_contraction} outside [0, 0.05]"
            )


# Cumulative linear contraction 293 K -> 4 K.  PMMA is chosen so that a 76 mm
# PMMA objective body against 95 mm of copper shifts the focus by +0.6 mm.
MATERIALS: dict[str, MaterialSpec] = {
    m.name: m
    for m in (
        MaterialSpec("Cu", 0.00324),
        MaterialSpec("Al", 0.00415),
        MaterialSpec("brass", 0.00384),
        MaterialSpec("Ti", 0.0015),
        MaterialSpec("PMMA", 0.0122),
    )
}


def material_table(overrides: Optional[Mapping[str, float]] = None) -> dict[str, MaterialSpec]:
    table = dict(MATERIALS)
    for name, alpha in (overrides or {}).items():
        table[name] = MaterialSpec(name, alpha)
    return table


def get_material(name: str, table: Optional[Mapping[str, MaterialSpec]] = None) -> MaterialSpec:
    table = MATERIALS if table is None else table
    if name in table:
        return table[name]
    folded = {k.lower(): v for k, v in table.items()}
    try:
        return folded[name.lower()]
    except KeyError:
        raise UnknownMaterialError(f"unknown material {name!r}; known: {', '.join(sorted(table))}") from None


@dataclass(frozen=True)
class Segment:
    material: MaterialSpec
    length: float  # mm
    orientation: int  # OPENING or CLOSING

    def __post_init__(self):
        if not self.length > 0:
            raise ParameterError(f"segment length must be positive, got {self.length}")
        if self.orientation not in (OPENING, CLOSING):
            raise ParameterError(f"orientation must be +1 (opening) or -1 (closing), got {self.orientation}")


@dataclass(frozen=True)
class ContractionStack:
    """Mechanical path between sample and front lens.

    A segment is OPENING when its contraction increases the sample to
    front-lens distance (the objective body hanging from its mount) and
    CLOSING when it decreases it (the copper parfocal spacer).
    """

    segments: tuple[Segment, ...] = ()
    name: str = ""

    def __init__(self, segments: Iterable[Segment] = (), name: str = ""):
        object.__setattr__(self, "segments", tuple(segments))
        object.__setattr__(self, "name", name)

    def appended(self, segment: Segment) -> "ContractionStack":
        return ContractionStack(self.segments + (segment,), self.name)


@dataclass(frozen=True)
class Contribution:
    source: str
    lower: float
    upper: float


@dataclass(frozen=True)
class ShiftEnvelope:
    """Objective-side shift interval (mm) built as a sum of per-source intervals."""

    lower: float
    upper: float
    contributions: tuple[Contribution, ...] = field(default_factory=tuple)


def air_index_shift(delta_pressure: float) -> float:
    return AIR_INDEX_PER_HPA * delta_pressure


def pressure_focal_shift(lens: LensSpec, delta_pressure: float) -> float:
    """Δf of a thin lens when the surrounding air index changes with pressure."""
    _check_index(lens)
    dn = air_index_shift(delta_pressure)
    factor = 1.0 + 1.0 / (lens.refractive_index - 1.0)
    return lens.focal_length / (1.0 - dn * factor) - lens.focal_length


def thermo_optic_focal_shift(lens: LensSpec) -> float:
    """Δf from the lens glass index changing by ``lens.thermo_optic_shift``."""
    _check_index(lens)
    ratio = lens.thermo_optic_shift / (lens.refractive_index - 1.0)
    return lens.focal_length / (1.0 + ratio) - lens.focal_length


def lens_contraction_shift(lens: LensSpec) -> float:
    """Δf from the lens radii shrinking with the glass."""
    return -lens.cumulative_contraction * lens.focal_length


def stack_contraction_shift(stack: ContractionStack) -> float:
    return sum(s.orientation * s.material.cumulative_contraction * s.length for s in stack.segments)


def compensate_stack(fixed: ContractionStack, free_material: MaterialSpec, target_shift: float = 0.0) -> float:
    """Length of an opening ``free_material`` segment that brings the stack to ``target_shift``."""
    alpha = free_material.cumulative_contraction
    if alpha <= 0:
        raise DegenerateCompensationError(f"{free_material.name} does not contract; nothing can compensate")
    length = (target_shift - stack_contraction_shift(fixed)) / alpha
    if length < 0:
        raise InfeasibleCompensationError(
            f"compensation needs a negative {free_material.name} length ({length:.6g} mm)"
        )
    if length == 0:
        warnings.warn("fixed stack already meets the target; compensating segment has zero length", stacklevel=2)
    return length


def cooldown_fraction(temperature: float) -> float:
    """Fraction of the ambient -> base thermal shift reached at ``temperature``.

    Thermal shifts are treated as linear in temperature and clamped at base.
    """
    frac = (AMBIENT_TEMPERATURE_K - temperature) / (AMBIENT_TEMPERATURE_K - BASE_TEMPERATURE_K)
    return min(max(frac, 0.0), 1.0)


def shift_envelope(
    objective: LensSpec | Sequence[LensSpec],
    variants: Sequence[ContractionStack],
    env: EnvironmentState,
    sources: Collection[str] = SOURCES,
) -> ShiftEnvelope:
    """Interval sum of the objective-side shifts from each selected source.

    Each lens and stack variant stands for one plausible construction; every
    contribution spans its extremes over the variants.  Focal-length changes
    enter as -Δf.  Thermal sources are scaled by :func:`cooldown_fraction`.
    """
    lenses = [objective] if isinstance(objective, LensSpec) else list(objective)
    if not lenses or not variants:
        raise ParameterError("shift envelope needs at least one lens and one stack variant")
    unknown = set(sources) - set(SOURCES)
    if unknown:
        raise ParameterError(f"unknown shift sources: {sorted(unknown)}")

    frac = cooldown_fraction(env.temperature)
    values = {
        "pressure": [-pressure_focal_shift(lens, env.delta_pressure) for lens in lenses],
        "thermo-optic": [-frac * thermo_optic_focal_shift(lens) for lens in lenses],
        "lens-contraction": [-frac * lens_contraction_shift(lens) for lens in lenses],
        "stack": [frac * stack_contraction_shift(v) for v in variants],
    }
    contributions = tuple(
        Contribution(name, min(values[name]), max(values[name])) for name in SOURCES if name in sources
    )
    return ShiftEnvelope(
        lower=sum(c.lower for c in contributions),
        upper=sum(c.upper for c in contributions),
        contributions=contributions,
    )


def _check_index(lens: LensSpec):
    if not lens.refractive_index > 1:
        raise InvalidLensError(f"lens index must exceed 1, got {lens.refractive_index}")
