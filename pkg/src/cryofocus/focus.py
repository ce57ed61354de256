"""Propagation of objective-side shifts to the tube-lens side and back.

Signs: Δs_tel > 0 moves the image plane away from the tube lens (toward the
camera); Δs_obj > 0 moves the sample away from the objective.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import FormatError, InsufficientDataError, ParameterError, SingularConfigurationError

TRACE_HEADER = ("abscissa", "ds_tel_mm", "magnification")


@dataclass(frozen=True)
class SensitivityReport:
    ds_t_per_ds_o: float
    ds_t_per_df: float


@dataclass(frozen=True, eq=False)
class FocusTrace:
    """Tube-side focus positions and magnifications sampled along a pump-down or cool-down.

    ``ds_tel`` is relative to an arbitrary constant; only increments matter.
    The abscissa (hPa or K) is carried as metadata and takes no part in the
    recovery integrals.
    """

    abscissa: np.ndarray
    ds_tel: np.ndarray
    magnification: np.ndarray
    abscissa_kind: Literal["pressure", "temperature"] = "temperature"

    def __post_init__(self):
        arrays = [np.array(a, dtype=float) for a in (self.abscissa, self.ds_tel, self.magnification)]
        for name, arr in zip(("abscissa", "ds_tel", "magnification"), arrays):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        x, s, m = arrays
        if not (x.ndim == s.ndim == m.ndim == 1 and len(x) == len(s) == len(m)):
            raise ParameterError("trace columns must be 1-D and of equal length")
        if len(x) < 2:
            raise InsufficientDataError(f"a focus trace needs at least 2 samples, got {len(x)}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(s)) and np.all(np.isfinite(m))):
            raise ParameterError("trace contains non-finite values")
        if np.any(m <= 0):
            raise ParameterError("magnifications must be positive")
        dx = np.diff(x)
        if not (np.all(dx > 0) or np.all(dx < 0)):
            raise ParameterError("trace abscissa must be strictly monotone")
        if self.abscissa_kind not in ("pressure", "temperature"):
            raise ParameterError(f"unknown abscissa kind {self.abscissa_kind!r}")

    def __len__(self):
        return len(self.abscissa)

    def __getitem__(self, sl: slice) -> "FocusTrace":
        return FocusTrace(self.abscissa[sl], self.ds_tel[sl], self.magnification[sl], self.abscissa_kind)


def telescope_shift(delta_s_obj: float, M: float) -> float:
    """Tube-side focal shift for an objective-side shift, to first order."""
    _check_magnification(M)
    return -(M**2) * delta_s_obj


def objective_shift_from_telescope(delta_s_tel: float, M: float) -> float:
    _check_magnification(M)
    return -delta_s_tel / M**2


def exact_shift(delta_s_obj: float, delta_f: float, M: float, s_o: float) -> float:
    """Tube-side shift for a sample shift and focal-length change of the compound lens.

    ``M`` and ``s_o`` describe the conjugate state before the shift.  The
    relation is exact in ``delta_s_obj`` for fixed focal length and first
    order in ``delta_f``.
    """
    _check_magnification(M)
    if not s_o > 0:
        raise ParameterError(f"object distance must be positive, got {s_o}")
    effective = delta_s_obj - delta_f * (1.0 + 1.0 / M**2)
    denom = 1.0 + effective * (M + 1.0) / s_o
    if abs(denom) < 1e-12:
        raise SingularConfigurationError("shift moves the object onto the focal plane")
    return -effective * M**2 / denom


def sensitivities(M: float) -> SensitivityReport:
    _check_magnification(M)
    m2 = M * M
    return SensitivityReport(ds_t_per_ds_o=-m2, ds_t_per_df=m2 + 1.0)


def _panels(trace: FocusTrace) -> tuple[np.ndarray, np.ndarray]:
    if len(trace) < 2:
        raise InsufficientDataError("need at least 2 samples")
    ds = np.diff(trace.ds_tel)
    m = trace.magnification
    m_mid = 0.5 * (m[1:] + m[:-1])
    return ds, m_mid


def recover_focal_change(trace: FocusTrace) -> float:
    """Δf (mm) of the compound lens implied by a pressure-driven trace."""
    ds, m_mid = _panels(trace)
    return float(np.sum(ds / (m_mid**2 + 1.0)))


def recover_objective_shift(trace: FocusTrace) -> float:
    """Δs_obj (mm) between sample and front principal plane implied by a thermal trace."""
    ds, m_mid = _panels(trace)
    return float(-np.sum(ds / m_mid**2))


def synthesize_trace(
    abscissa: Sequence[float],
    delta_s_obj: Sequence[float],
    magnification: Sequence[float],
    *,
    delta_f: Optional[Sequence[float]] = None,
    s_o: float = 20.0,
    substeps: int = 16,
    abscissa_kind: Literal["pressure", "temperature"] = "temperature",
) -> FocusTrace:
    """Forward-model a trace from objective-side profiles.

    Profiles are cumulative values at each abscissa.  Between samples they
    are interpolated linearly and stepped with :func:`exact_shift` in
    ``substeps`` increments, each evaluated at the sub-interval midpoint
    magnification.
    """
    x = np.asarray(abscissa, dtype=float)
    obj = np.asarray(delta_s_obj, dtype=float)
    mag = np.asarray(magnification, dtype=float)
    df = np.zeros_like(obj) if delta_f is None else np.asarray(delta_f, dtype=float)
    if not (len(x) == len(obj) == len(mag) == len(df)):
        raise ParameterError("profiles must have equal length")
    if substeps < 1:
        raise ParameterError("substeps must be >= 1")
    s_tel = np.zeros(len(x))
    frac = (np.arange(substeps) + 0.5) / substeps
    for k in range(len(x) - 1):
        step_obj = (obj[k + 1] - obj[k]) / substeps
        step_f = (df[k + 1] - df[k]) / substeps
        m_sub = mag[k] + frac * (mag[k + 1] - mag[k])
        s_tel[k + 1] = s_tel[k] + sum(exact_shift(step_obj, step_f, m, s_o) for m in m_sub)
    return FocusTrace(x, s_tel, mag, abscissa_kind)


def fov_from_magnification(M: float, sensor_diagonal: float) -> float:
    _check_magnification(M)
    if not sensor_diagonal > 0:
        raise ParameterError("sensor diagonal must be positive")
    return sensor_diagonal / M


def magnification_from_fov(fov_diagonal: float, sensor_diagonal: float) -> float:
    if not (fov_diagonal > 0 and sensor_diagonal > 0):
        raise ParameterError("diagonals must be positive")
    return sensor_diagonal / fov_diagonal


def pixel_scale(pixel_pitch: float, M: float) -> float:
    """Object-space size (µm) of one camera pixel of ``pixel_pitch`` µm."""
    _check_magnification(M)
    if not pixel_pitch > 0:
        raise ParameterError("pixel pitch must be positive")
    return pixel_pitch / M


def read_trace_csv(source, abscissa_kind: Literal["pressure", "temperature"] = "temperature") -> FocusTrace:
    """Read ``abscissa,ds_tel_mm,magnification`` rows from a path or text stream."""
    if isinstance(source, (str, Path)):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read trace {source}: {exc}") from exc
    else:
        text = source.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows or tuple(c.strip() for c in rows[0]) != TRACE_HEADER:
        raise FormatError(f"trace CSV must start with header {','.join(TRACE_HEADER)}")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise FormatError(f"line {lineno}: expected 3 columns, got {len(row)}")
        try:
            values.append([float(c) for c in row])
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value in {row}") from None
    if len(values) < 2:
        raise InsufficientDataError(f"trace has {len(values)} sample(s); at least 2 are required")
    arr = np.array(values)
    try:
        return FocusTrace(arr[:, 0], arr[:, 1], arr[:, 2], abscissa_kind)
    except ParameterError as exc:
        raise FormatError(str(exc)) from exc


def write_trace_csv(trace: FocusTrace, target) -> None:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for row in zip(trace.abscissa, trace.ds_tel, trace.magnification):
        writer.writerow([repr(float(v)) for v in row])
    if isinstance(target, (str, Path)):
        Path(target).write_text(buf.getvalue(), encoding="utf-8", newline="")
    else:
        target.write(buf.getvalue())


def _check_magnification(M: float):
    if not M > 0:
        raise ParameterError(f"magnification must be positive, got {M}")
