"""Paraxial ray-transfer-matrix engine.

Rays are (height, angle) column vectors, distances in mm, and the thin lens and
free-space gap are the only element kinds.  System matrices are composed in
propagation order, so the first element acts first on the ray.

Sign conventions: distances grow along propagation.  Object distances are
positive to the left of the front principal plane and image distances
positive to the right of the back principal plane.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from .errors import AfocalImageError, EmptySystemError, InvalidElementError, ParameterError

#: |c| below this (mm^-1) counts as zero optical power.
AFOCAL_THRESHOLD = 1e-12


@dataclass(frozen=True)
class RayTransferMatrix:
    """2x2 ABCD matrix; ``b`` in mm, ``c`` in mm^-1."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "RayTransferMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, arr) -> "RayTransferMatrix":
        arr = np.asarray(arr, dtype=float)
        return cls(float(arr[0, 0]), float(arr[0, 1]), float(arr[1, 0]), float(arr[1, 1]))

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])

    @property
    def determinant(self) -> float:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "RayTransferMatrix") -> "RayTransferMatrix":
        """``self @ other`` applies ``other`` first, then ``self``."""
        return RayTransferMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def trace_ray(self, height: float, angle: float) -> tuple[float, float]:
        return self.a * height + self.b * angle, self.c * height + self.d * angle


@dataclass(frozen=True)
class OpticalElement:
    kind: Literal["thin-lens", "gap"]
    focal_length: Optional[float] = None
    length: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if self.kind == "thin-lens":
            if self.focal_length is None or not np.isfinite(self.focal_length) or self.focal_length == 0:
                raise InvalidElementError(f"thin lens needs a finite nonzero focal length, got {self.focal_length!r}")
        elif self.kind == "gap":
            if self.length is None or not np.isfinite(self.length) or self.length < 0:
                raise InvalidElementError(f"gap length must be >= 0, got {self.length!r}")
        else:
            raise InvalidElementError(f"unknown element kind {self.kind!r}")


def thin_lens(focal_length: float, label: str = "") -> OpticalElement:
    return OpticalElement("thin-lens", focal_length=focal_length, label=label)


def gap(length: float, label: str = "") -> OpticalElement:
    return OpticalElement("gap", length=length, label=label)


@dataclass(frozen=True)
class OpticalSystem:
    """Ordered elements, first element first in propagation order."""

    elements: tuple[OpticalElement, ...]

    def __init__(self, elements: Iterable[OpticalElement]):
        object.__setattr__(self, "elements", tuple(elements))

    def __len__(self):
        return len(self.elements)

    @property
    def lenses(self) -> list[OpticalElement]:
        return [e for e in self.elements if e.kind == "thin-lens"]


@dataclass(frozen=True)
class CardinalPoints:
    """Cardinal points of a system referenced to its input and output planes.

    ``front_focal_distance`` is measured from the input plane against the
    propagation direction, ``back_focal_distance`` from the output plane along
    it.  The principal offsets locate the principal planes relative to the
    input (front) and output (back) planes, positive along propagation.  All
    distances are None for an afocal system.
    """

    effective_focal_length: Optional[float]
    front_focal_distance: Optional[float]
    back_focal_distance: Optional[float]
    front_principal_offset: Optional[float]
    back_principal_offset: Optional[float]
    afocal: bool


@dataclass(frozen=True)
class ImagingState:
    s_o: float
    s_t: float
    magnification: float


def element_matrix(e: OpticalElement) -> RayTransferMatrix:
    if e.kind == "gap":
        return RayTransferMatrix(1.0, float(e.length), 0.0, 1.0)
    return RayTransferMatrix(1.0, 0.0, -1.0 / e.focal_length, 1.0)


def compose(system: OpticalSystem | Sequence[OpticalElement]) -> RayTransferMatrix:
    """Multiply element matrices in propagation order."""
    elements = system.elements if isinstance(system, OpticalSystem) else tuple(system)
    if not elements:
        raise EmptySystemError("cannot compose an empty optical system")
    return reduce(lambda acc, e: element_matrix(e) @ acc, elements, RayTransferMatrix.identity())


def cardinal_points(m: RayTransferMatrix) -> CardinalPoints:
    if abs(m.c) < AFOCAL_THRESHOLD:
        return CardinalPoints(None, None, None, None, None, afocal=True)
    return CardinalPoints(
        effective_focal_length=-1.0 / m.c,
        front_focal_distance=-m.d / m.c,
        back_focal_distance=-m.a / m.c,
        front_principal_offset=(m.d - 1.0) / m.c,
        back_principal_offset=(1.0 - m.a) / m.c,
        afocal=False,
    )


def _check_focal(name: str, f: float, positive: bool = False):
    if f == 0 or not np.isfinite(f) or (positive and f < 0):
        kind = "positive" if positive else "nonzero"
        raise InvalidElementError(f"{name} must be finite and {kind}, got {f!r}")


def compound_two_lens(f_o: float, f_t: float, d: float = 0.0) -> Optional[float]:
    """Effective focal length of two thin lenses whose principal planes are ``d`` apart.

    Returns None when the pair is afocal.
    """
    _check_focal("f_o", f_o)
    _check_focal("f_t", f_t)
    power = 1.0 / f_o + 1.0 / f_t - d / (f_o * f_t)
    if abs(power) < AFOCAL_THRESHOLD:
        return None
    return 1.0 / power


def relay_defocus_power(d67: float, f6: float, d89: float, f8: float) -> float:
    """Residual power (mm^-1) of an 8f relay whose 4f stages are mis-spaced.

    ``d67`` and ``d89`` are the spacing errors of the upper and lower 4f
    stages with first-lens focal lengths ``f6`` and ``f8``.
    """
    _check_focal("f6", f6, positive=True)
    _check_focal("f8", f8, positive=True)
    return d67 / f6**2 + d89 / f8**2


def relay_offsets(system: OpticalSystem) -> list[float]:
    """Spacing error of each consecutive lens pair of a chain of 4f stages.

    Lenses are paired (1, 2), (3, 4), ...; each offset is the axial separation
    of the pair minus the sum of their focal lengths.
    """
    positions = []
    z = 0.0
    for e in system.elements:
        if e.kind == "gap":
            z += e.length
        else:
            positions.append((z, e.focal_length))
    if len(positions) % 2:
        raise ParameterError("relay chain needs an even number of lenses")
    return [
        (z2 - z1) - (f1 + f2)
        for (z1, f1), (z2, f2) in zip(positions[0::2], positions[1::2])
    ]


def image_solve(f_eff: float, s_o: float) -> ImagingState:
    """Conjugate image distance and magnification for an object at ``s_o``."""
    _check_focal("f_eff", f_eff)
    if not s_o > 0:
        raise ParameterError(f"object distance must be positive, got {s_o!r}")
    vergence = 1.0 / f_eff - 1.0 / s_o
    if abs(vergence) < AFOCAL_THRESHOLD:
        raise AfocalImageError(f"object at the focal plane (s_o = f_eff = {f_eff} mm) images to infinity")
    s_t = 1.0 / vergence
    return ImagingState(s_o=s_o, s_t=s_t, magnification=s_t / s_o)
