"""Grayscale image container, PGM/CSV I/O and synthetic edge targets."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import FormatError, ParameterError

MAX_SLANT_DEG = 15.0


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Linear-intensity image, row-major ``(height, width)``; ``pixel_pitch`` in µm at the sensor."""

    samples: np.ndarray
    pixel_pitch: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.ndim != 2:
            raise FormatError(f"grayscale image must be 2-D, got shape {arr.shape}")
        if min(arr.shape) < 8:
            raise FormatError(f"image must be at least 8x8 pixels, got {arr.shape[1]}x{arr.shape[0]}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise FormatError("image samples must be finite and non-negative")
        if not self.pixel_pitch > 0:
            raise ParameterError("pixel pitch must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


def _pnm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    if magic in (b"P3", b"P6"):
        raise FormatError("colour PPM input is not supported; convert to grayscale")
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"unsupported PNM variant {magic!r}")
    try:
        (_, w, h, maxval), pos = _pnm_tokens(data, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise FormatError("malformed PGM header") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError("invalid PGM dimensions or maxval")
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raster = data[pos + 1 : pos + 1 + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise FormatError("truncated PGM raster")
        values = np.frombuffer(raster, dtype=dtype).astype(float)
    else:
        try:
            values = np.array(data[pos:].split()[:count], dtype=float)
        except ValueError:
            raise FormatError("non-numeric sample in plain PGM") from None
        if values.size < count:
            raise FormatError("truncated PGM raster")
    if values.max(initial=0) > maxval:
        raise FormatError("sample exceeds PGM maxval")
    return values.reshape(height, width) / maxval


def _read_csv_matrix(data: bytes) -> np.ndarray:
    try:
        text = data.decode("ascii")
        arr = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
    except (UnicodeDecodeError, ValueError) as exc:
        raise FormatError(f"not a numeric CSV matrix: {exc}") from None
    return arr


def load_image(path, pixel_pitch: float) -> GrayImage:
    """Load a PGM (P2/P5, 8/16 bit, scaled to [0, 1]) or a CSV float matrix."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read image {path}: {exc}") from exc
    if data[:1] == b"P" and data[1:2].isdigit():
        arr = _read_pgm(data)
    elif path.suffix.lower() in (".csv", ".txt"):
        arr = _read_csv_matrix(data)
    else:
        raise FormatError(f"unsupported image format: {path.name}")
    return GrayImage(arr, pixel_pitch)


def save_pgm(img: GrayImage | np.ndarray, path, maxval: int = 65535) -> None:
    """Write binary PGM (P5, big-endian for 16-bit); samples are clipped to [0, 1]."""
    arr = img.samples if isinstance(img, GrayImage) else np.asarray(img, dtype=float)
    q = np.rint(np.clip(arr, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


def save_csv_matrix(img: GrayImage | np.ndarray, path) -> None:
    arr = img.samples if isinstance(img, GrayImage) else np.asarray(img, dtype=float)
    lines = (",".join(repr(float(v)) for v in row) for row in arr)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="")


def synth_edge_image(
    sigma_object: float,
    pixel_pitch: float,
    M: float,
    angle: float,
    *,
    seed: int,
    contrast: float = 0.8,
    noise_rms: float = 0.0,
    size: int = 256,
    orientation: str = "vertical",
    oversample: int = 4,
) -> GrayImage:
    """Square image of a slanted edge blurred by an object-space Gaussian PSF.

    The edge passes through the image centre, tilted ``angle`` degrees from
    the column (vertical) or row axis.  Each pixel integrates the blurred edge
    over its area on an ``oversample`` x ``oversample`` grid.  Plateaus sit at
    (1 ± contrast)/2 and Gaussian noise of ``noise_rms`` is added from a
    generator seeded with ``seed``; results are clipped at 0.
    """
    if not (sigma_object > 0 and pixel_pitch > 0 and M > 0):
        raise ParameterError("sigma, pixel pitch and magnification must be positive")
    if not 0 < abs(angle) <= MAX_SLANT_DEG:
        raise ParameterError(f"slant angle must satisfy 0 < |angle| <= {MAX_SLANT_DEG} deg, got {angle}")
    if not 0 < contrast <= 1:
        raise ParameterError("contrast must be in (0, 1]")
    if not 0 <= noise_rms <= 1:
        raise ParameterError("noise RMS must be in [0, 1]")
    if size < 64:
        raise ParameterError("image size must be at least 64 px")
    if orientation not in ("vertical", "horizontal"):
        raise ParameterError(f"orientation must be 'vertical' or 'horizontal', got {orientation!r}")
    if oversample < 1:
        raise ParameterError("oversample must be >= 1")

    sigma_px = sigma_object * M / pixel_pitch
    theta = np.deg2rad(angle)
    sub = (np.arange(oversample) + 0.5) / oversample - 0.5
    centre = (size - 1) / 2.0
    y = (np.arange(size)[:, None] + sub[None, :]).ravel() - centre
    x = (np.arange(size)[:, None] + sub[None, :]).ravel() - centre
    dist = x[None, :] * np.cos(theta) - y[:, None] * np.sin(theta)
    edge = ndtr(dist / sigma_px)
    edge = edge.reshape(size, oversample, size, oversample).mean(axis=(1, 3))

    lo, hi = (1 - contrast) / 2, (1 + contrast) / 2
    arr = lo + (hi - lo) * edge
    if noise_rms > 0:
        arr = arr + np.random.default_rng(seed).normal(0.0, noise_rms, arr.shape)
    arr = np.clip(arr, 0.0, None)
    if orientation == "horizontal":
        arr = arr.T
    return GrayImage(arr, pixel_pitch)
