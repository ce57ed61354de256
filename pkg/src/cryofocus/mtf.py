"""Edge-based MTF measurement and analytic reference curves.

Frequencies are in lp/mm.  Measured curves are converted to object space by
multiplying the sensor-plane frequency by the magnification.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.optimize import brentq

from .errors import (
    AmbiguousEdgeError,
    DegenerateError,
    FormatError,
    InsufficientDataError,
    NoCrossingError,
    NoEdgeError,
    ParameterError,
)
from .images import GrayImage

SUPERSAMPLING = 4
MIN_ESF_SAMPLES = 32
MIN_EDGE_CONTRAST = 0.05
BACKGROUND_FRACTION = 0.2
MTF_THRESHOLD = 0.1
# flat core of the LSF window, and length of each cosine taper, in FWHM
WINDOW_CORE_FWHM = 4.0
WINDOW_TAPER_FWHM = 1.0

GAUSSIAN_MTF10_SIGMA = np.sqrt(np.log(10) / (2 * np.pi**2))  # cycles per µm times σ in µm

Provenance = Literal["measured", "gaussian-analytic", "diffraction-analytic"]


@dataclass(frozen=True)
class EdgeROI:
    """Half-open pixel box ``[x0, x1) x [y0, y1)`` holding one edge."""

    x0: int
    y0: int
    x1: int
    y1: int
    orientation: Literal["vertical", "horizontal"] = "vertical"

    def __post_init__(self):
        if self.orientation not in ("vertical", "horizontal"):
            raise ParameterError(f"ROI orientation must be 'vertical' or 'horizontal', got {self.orientation!r}")
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ParameterError(f"empty ROI {self.bounds}")
        if min(self.x1 - self.x0, self.y1 - self.y0) < 8:
            raise ParameterError(f"ROI {self.bounds} shorter side is below 8 px")

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        return self.x0, self.y0, self.x1, self.y1

    @classmethod
    def full(cls, img: GrayImage, orientation="vertical") -> "EdgeROI":
        return cls(0, 0, img.width, img.height, orientation)


@dataclass(frozen=True, eq=False)
class EdgeSpreadFunction:
    positions: np.ndarray  # µm at the sensor, 0 at the fitted edge
    values: np.ndarray
    spacing: float  # µm
    angle: float = 0.0  # fitted edge slant, degrees


@dataclass(frozen=True, eq=False)
class MTFCurve:
    frequencies: np.ndarray  # lp/mm
    modulation: np.ndarray
    provenance: Provenance = "measured"
    object_space: bool = True

    def __post_init__(self):
        f = np.array(self.frequencies, dtype=float)
        m = np.array(self.modulation, dtype=float)
        if f.ndim != 1 or f.shape != m.shape or len(f) < 2:
            raise ParameterError("MTF curve needs matching 1-D frequency and modulation arrays")
        if f[0] != 0 or np.any(np.diff(f) <= 0):
            raise ParameterError("MTF frequencies must start at 0 and increase strictly")
        if m[0] != 1:
            raise ParameterError("MTF must be normalised to 1 at zero frequency")
        f.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "modulation", m)


@dataclass(frozen=True)
class ResolutionReport:
    mtf10_lp_per_mm: float
    resolution_um: float
    values: tuple[float, ...]
    mean: float
    std: float

    @property
    def n(self) -> int:
        return len(self.values)


def resolution_from_mtf10(nu_lp_mm: float) -> float:
    """Resolved feature size ξ in µm: one line pair spans two features."""
    return 1000.0 / (2.0 * nu_lp_mm)


def _runs(mask: np.ndarray, max_gap: int = 2) -> list[tuple[int, int]]:
    """Contiguous True runs as ``[start, stop)``, merging gaps up to ``max_gap``."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    runs = []
    start = prev = idx[0]
    for i in idx[1:]:
        if i - prev > max_gap + 1:
            runs.append((start, prev + 1))
            start = i
        prev = i
    runs.append((start, prev + 1))
    return runs


def _fwhm(profile: np.ndarray) -> tuple[int, float]:
    """Peak index and full width at half maximum (samples) of a single hump."""
    peak = int(np.argmax(profile))
    half = profile[peak] / 2.0

    def walk(step):
        i = peak
        while 0 <= i + step < len(profile) and profile[i + step] >= half:
            i += step
        j = i + step
        if not 0 <= j < len(profile):
            return abs(i - peak)
        # interpolate the half-maximum crossing between i and j
        frac = (profile[i] - half) / (profile[i] - profile[j]) if profile[i] != profile[j] else 0.0
        return abs(i - peak) + frac

    return peak, walk(-1) + walk(1)


def _row_centroids(diffs: np.ndarray, centres: np.ndarray, half_width: float) -> np.ndarray:
    """Centroid of each row's derivative inside a window around ``centres``."""
    pos = np.arange(diffs.shape[1]) + 0.5
    win = np.abs(pos[None, :] - centres[:, None]) <= half_width
    weights = np.where(win, diffs, 0.0)
    total = weights.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cen = (weights * pos[None, :]).sum(axis=1) / total
    return np.where(total > 0, cen, np.nan)


def _fit_edge(rows: np.ndarray, cen: np.ndarray) -> tuple[float, float]:
    ok = np.isfinite(cen)
    if ok.sum() < 2:
        raise NoEdgeError("edge could not be located in enough rows")
    slope, offset = np.polyfit(rows[ok], cen[ok], 1)
    return float(offset), float(slope)


def _project(a: np.ndarray, offset: float, slope: float, spacing_px: float):
    """Bin pixels by perpendicular distance to the edge line ``x = offset + slope*y``."""
    nrows, ncols = a.shape
    rows = np.arange(nrows)
    cos_t = 1.0 / np.sqrt(1.0 + slope * slope)
    edge_x = offset + slope * rows
    dist = (np.arange(ncols)[None, :] - edge_x[:, None]) * cos_t
    lo = -edge_x.min() * cos_t
    hi = (ncols - 1 - edge_x.max()) * cos_t
    if hi - lo < MIN_ESF_SAMPLES * spacing_px:
        raise InsufficientDataError("ROI too narrow around the edge for a supersampled ESF")
    first = int(np.ceil(lo / spacing_px))
    nbins = int(np.floor(hi / spacing_px)) - first + 1
    idx = np.rint(dist / spacing_px).astype(int) - first
    keep = (idx >= 0) & (idx < nbins)
    counts = np.bincount(idx[keep], minlength=nbins)
    sums = np.bincount(idx[keep], weights=a[keep], minlength=nbins)
    centres = (np.arange(nbins) + first) * spacing_px
    filled = counts > 0
    if filled.sum() < 2:
        raise InsufficientDataError("too few populated ESF bins")
    values = np.interp(centres, centres[filled], sums[filled] / np.maximum(counts[filled], 1))
    return centres, values


def extract_esf(img: GrayImage, roi: EdgeROI, supersampling: int = SUPERSAMPLING) -> EdgeSpreadFunction:
    """Supersampled edge spread function across the single edge in ``roi``.

    The edge is located per row by derivative centroids, a straight line is
    fitted to them, and pixels are binned by their perpendicular distance at
    ``pixel_pitch / supersampling``.  The result always rises from the dark to
    the bright plateau.
    """
    if roi.x1 > img.width or roi.y1 > img.height or roi.x0 < 0 or roi.y0 < 0:
        raise ParameterError(f"ROI {roi.bounds} exceeds image {img.width}x{img.height}")
    a = img.samples[roi.y0 : roi.y1, roi.x0 : roi.x1]
    if roi.orientation == "horizontal":
        a = a.T
    nrows, ncols = a.shape

    dyn = float(a.max())
    profile = a.mean(axis=0)
    k = max(1, ncols // 10)
    step = float(profile[-k:].mean() - profile[:k].mean())
    if dyn <= 0 or abs(step) < MIN_EDGE_CONTRAST * dyn:
        raise NoEdgeError(f"plateau contrast {abs(step):.3g} below {MIN_EDGE_CONTRAST:.0%} of range {dyn:.3g}")
    across = a.mean(axis=1)
    kr = max(1, nrows // 10)
    if abs(float(across[-kr:].mean() - across[:kr].mean())) > abs(step):
        other = "vertical" if roi.orientation == "horizontal" else "horizontal"
        raise NoEdgeError(f"no {roi.orientation} edge found; the transition looks {other}")
    sign = 1.0 if step > 0 else -1.0

    dprof = np.diff(gaussian_filter1d(profile, 1.0))
    mag = np.abs(dprof)
    runs = _runs(mag > 0.3 * mag.max())
    if len(runs) != 1:
        raise AmbiguousEdgeError(f"found {len(runs)} transitions in the ROI; expected one")
    start, stop = runs[0]
    hump = np.clip(sign * dprof[start:stop], 0, None)
    coarse = float(np.sum(hump * (np.arange(start, stop) + 0.5)) / hump.sum()) if hump.sum() > 0 else (start + stop) / 2
    _, w50 = _fwhm(np.clip(sign * dprof, 0, None))

    diffs = sign * np.diff(a, axis=1)
    rows = np.arange(nrows, dtype=float)
    cen = _row_centroids(diffs, np.full(nrows, coarse), max(4.0, 2.0 * w50))
    offset, slope = _fit_edge(rows, cen)

    # refine with a window matched to the de-slanted edge width
    _, coarse_esf = _project(a, offset, slope, 1.0)
    _, w_row = _edge_centre_and_width(np.gradient(coarse_esf))
    cen = _row_centroids(diffs, offset + slope * rows, max(4.0, 3.0 * w_row))
    offset, slope = _fit_edge(rows, cen)

    spacing_px = 1.0 / supersampling
    pos, values = _project(a, offset, slope, spacing_px)
    if sign < 0:
        pos, values = -pos[::-1], values[::-1]
    return EdgeSpreadFunction(
        positions=pos * img.pixel_pitch,
        values=values,
        spacing=spacing_px * img.pixel_pitch,
        angle=float(np.rad2deg(np.arctan(slope))),
    )


def _edge_centre_and_width(lsf: np.ndarray) -> tuple[float, float]:
    """Rank-based centre and FWHM (samples) of an LSF.

    Counts the cumulative edge profile below its quartile levels, which is
    insensitive to the sample noise that defeats a half-maximum walk.  The
    width is scaled so that a Gaussian returns its FWHM.
    """
    esf = np.cumsum(lsf)
    k = max(1, len(esf) // 10)
    lo, hi = esf[:k].mean(), esf[-k:].mean()
    e = (esf - lo) / (hi - lo)
    q25, q50, q75 = (float(np.count_nonzero(e < q)) for q in (0.25, 0.5, 0.75))
    return q50, 2.0 * np.sqrt(2.0 * np.log(2.0)) / 1.3490 * (q75 - q25)


def lsf_window(lsf: np.ndarray) -> np.ndarray:
    """Flat-topped cosine window centred on the LSF.

    Flat across ``WINDOW_CORE_FWHM`` FWHM, then a cos² taper of
    ``WINDOW_TAPER_FWHM`` FWHM per side.
    """
    centre, fwhm = _edge_centre_and_width(lsf)
    fwhm = max(fwhm, 2.0)
    half_core = 0.5 * WINDOW_CORE_FWHM * fwhm
    taper = WINDOW_TAPER_FWHM * fwhm
    r = np.abs(np.arange(len(lsf)) - centre)
    t = np.clip((r - half_core) / taper, 0.0, 1.0)
    return np.cos(0.5 * np.pi * t) ** 2


def mtf_from_esf(esf: EdgeSpreadFunction | Sequence[float], sample_spacing: float | None = None, M: float = 1.0) -> MTFCurve:
    """MTF from a uniformly sampled ESF.

    ``sample_spacing`` is in µm at the sensor; it defaults to the spacing
    carried by an :class:`EdgeSpreadFunction`.
    """
    if isinstance(esf, EdgeSpreadFunction):
        values = esf.values
        sample_spacing = esf.spacing if sample_spacing is None else sample_spacing
    else:
        values = np.asarray(esf, dtype=float)
    if sample_spacing is None or not sample_spacing > 0:
        raise ParameterError("sample spacing must be positive")
    if not M > 0:
        raise ParameterError("magnification must be positive")
    if len(values) < MIN_ESF_SAMPLES:
        raise InsufficientDataError(f"ESF has {len(values)} samples; need {MIN_ESF_SAMPLES}")
    k = max(1, len(values) // 10)
    step = values[-k:].mean() - values[:k].mean()
    if step == 0 or not np.isfinite(step):
        raise DegenerateError("ESF has no plateau difference")

    lsf = np.sign(step) * np.gradient(values) / sample_spacing
    lsf = lsf * lsf_window(lsf)
    nfft = max(8192, 1 << int(np.ceil(np.log2(4 * len(lsf)))))
    spectrum = np.abs(np.fft.rfft(lsf, nfft))
    if spectrum[0] <= 0:
        raise DegenerateError("windowed LSF integrates to zero")
    modulation = spectrum / spectrum[0]
    modulation[0] = 1.0
    freqs = np.fft.rfftfreq(nfft, d=sample_spacing) * 1000.0 * M
    return MTFCurve(freqs, modulation, "measured", object_space=True)


def background_subtracted(curve: MTFCurve) -> np.ndarray:
    """Modulation with the high-frequency noise floor removed, renormalised to peak 1."""
    m = curve.modulation
    k = max(1, int(np.ceil(BACKGROUND_FRACTION * len(m))))
    floor = np.median(m[-k:])
    m = m - floor
    peak = m.max()
    if not peak > 0:
        raise NoCrossingError("MTF is flat at its noise floor")
    return m / peak


def mtf10(curve: MTFCurve, subtract_background: bool = True, threshold: float = MTF_THRESHOLD) -> float:
    """Frequency (lp/mm) of the first downward crossing of ``threshold`` after the maximum."""
    m = background_subtracted(curve) if subtract_background else curve.modulation / curve.modulation.max()
    f = curve.frequencies
    top = int(np.argmax(m))
    below = np.flatnonzero(m[top + 1 :] < threshold)
    if below.size == 0:
        raise NoCrossingError(f"MTF never falls below {threshold:g} within {f[-1]:.6g} lp/mm")
    i = top + 1 + int(below[0])
    m0, m1 = m[i - 1], m[i]
    return float(f[i - 1] + (m0 - threshold) / (m0 - m1) * (f[i] - f[i - 1]))


def diffraction_cutoff(NA: float, wavelength_nm: float) -> float:
    """Incoherent cutoff 2 NA / λ in lp/mm."""
    if not (0 < NA < 1 and wavelength_nm > 0):
        raise ParameterError("need 0 < NA < 1 and a positive wavelength")
    return 2.0 * NA / (wavelength_nm * 1e-6)


def diffraction_profile(x: np.ndarray | float) -> np.ndarray:
    """Circular-aperture incoherent MTF at normalised frequency ``x = ν / ν_c``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return (2.0 / np.pi) * (np.arccos(x) - x * np.sqrt(1.0 - x * x))


def diffraction_mtf(NA: float, wavelength_nm: float, n: int = 2049, extent: float = 1.25) -> MTFCurve:
    """Sampled from 0 to ``extent`` times the cutoff; zero at and beyond it."""
    nu_c = diffraction_cutoff(NA, wavelength_nm)
    freqs = np.linspace(0.0, extent * nu_c, n)
    m = diffraction_profile(freqs / nu_c)
    m[freqs >= nu_c] = 0.0
    m[0] = 1.0
    return MTFCurve(freqs, m, "diffraction-analytic")


def diffraction_mtf10(NA: float, wavelength_nm: float, threshold: float = MTF_THRESHOLD) -> float:
    """Root of the analytic diffraction MTF at ``threshold``, in lp/mm."""
    x = brentq(lambda t: float(diffraction_profile(t)) - threshold, 0.0, 1.0, xtol=1e-14)
    return x * diffraction_cutoff(NA, wavelength_nm)


def gaussian_mtf(sigma: float, n: int = 1025, extent: float = 3.0) -> MTFCurve:
    """MTF of a Gaussian PSF of width ``sigma`` µm, sampled to ``extent`` times its 10% point."""
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    nu10 = gaussian_mtf10(sigma)
    freqs = np.linspace(0.0, extent * nu10, n)
    nu_um = freqs / 1000.0
    m = np.exp(-2.0 * np.pi**2 * sigma**2 * nu_um**2)
    return MTFCurve(freqs, m, "gaussian-analytic")


def gaussian_mtf10(sigma: float) -> float:
    """Closed-form 10% frequency (lp/mm) of a Gaussian PSF of width ``sigma`` µm."""
    return GAUSSIAN_MTF10_SIGMA / sigma * 1000.0


def aggregate_resolution(values: Sequence[float]) -> ResolutionReport:
    """Mean MTF10 over edges, its sample standard deviation, and ξ of the mean."""
    vals = tuple(float(v) for v in values)
    if not vals:
        raise InsufficientDataError("no MTF10 values to aggregate")
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return ResolutionReport(mean, resolution_from_mtf10(mean), vals, mean, std)


def measure_edge(img: GrayImage, roi: EdgeROI, M: float, subtract_background: bool = True) -> tuple[MTFCurve, float]:
    curve = mtf_from_esf(extract_esf(img, roi), M=M)
    return curve, mtf10(curve, subtract_background)


def write_curve_csv(curve: MTFCurve, target) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frequency_lp_mm", "modulation"])
    for f, m in zip(curve.frequencies, curve.modulation):
        w.writerow([repr(float(f)), repr(float(m))])
    _emit(buf.getvalue(), target)


def read_curve_csv(source, provenance: Provenance = "measured") -> MTFCurve:
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) else source.read()
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows or [c.strip() for c in rows[0]] != ["frequency_lp_mm", "modulation"]:
        raise FormatError("MTF CSV must start with header frequency_lp_mm,modulation")
    try:
        arr = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError:
        raise FormatError("non-numeric value in MTF CSV") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FormatError("MTF CSV needs exactly two columns")
    try:
        return MTFCurve(arr[:, 0], arr[:, 1], provenance)
    except ParameterError as exc:
        raise FormatError(str(exc)) from exc


SUMMARY_HEADER = ("mtf10", "xi_um", "mean", "std", "n")


def write_summary_csv(report: ResolutionReport, target) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    w.writerow([repr(report.mtf10_lp_per_mm), repr(report.resolution_um), repr(report.mean), repr(report.std), report.n])
    _emit(buf.getvalue(), target)


def _emit(text: str, target) -> None:
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8", newline="")
    else:
        target.write(text)
