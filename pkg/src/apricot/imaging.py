"""Silhouette segmentation and calibrated measurement of fruit views."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

_FOUR = ndimage.generate_binary_structure(2, 1)
_EIGHT = ndimage.generate_binary_structure(2, 2)


class DegenerateHistogramError(ValueError):
    pass


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if self.width < 1 or self.height < 1:
            raise ValueError("image must be at least 1x1")
        if px.size != self.width * self.height:
            raise ValueError(f"expected {self.width * self.height} pixels, got {px.size}")
        object.__setattr__(self, "pixels", px.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        arr = np.asarray(arr)
        return cls(arr.shape[1], arr.shape[0], arr)


@dataclass(frozen=True)
class BinaryImage:
    width: int
    height: int
    mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.size != self.width * self.height:
            raise ValueError(f"expected {self.width * self.height} mask entries, got {m.size}")
        object.__setattr__(self, "mask", m.reshape(self.height, self.width))

    @classmethod
    def from_array(cls, arr) -> "BinaryImage":
        arr = np.asarray(arr, dtype=bool)
        return cls(arr.shape[1], arr.shape[0], arr)

    def __eq__(self, other):
        return (isinstance(other, BinaryImage) and self.mask.shape == other.mask.shape
                and bool(np.array_equal(self.mask, other.mask)))

    __hash__ = None


@dataclass(frozen=True)
class CalibrationScale:
    mm_per_pixel: float
    mm2_per_pixel: float

    def __post_init__(self):
        if self.mm_per_pixel <= 0 or self.mm2_per_pixel <= 0:
            raise ValueError("calibration constants must be positive")
        if abs(self.mm2_per_pixel - self.mm_per_pixel ** 2) > 1e-12 * self.mm2_per_pixel:
            raise ValueError("mm2_per_pixel must equal mm_per_pixel squared")

    @classmethod
    def from_mm_per_pixel(cls, mm_per_pixel: float) -> "CalibrationScale":
        return cls(mm_per_pixel, mm_per_pixel * mm_per_pixel)


@dataclass(frozen=True)
class ViewMeasurement:
    extent_h: float
    extent_v: float
    area: float


# -- thresholding -------------------------------------------------------------

def otsu_threshold(img: GrayImage) -> int:
    """Otsu level k in [0, 254]; class 0 is pixels <= k.

    Between-class variance is compared in exact integer arithmetic, using
    sigma_b^2 * N^2 = (s0*n1 - s1*n0)^2 / (n0*n1), so equal scores are truly
    equal and the lowest k wins ties.
    """
    hist = np.bincount(img.pixels.ravel(), minlength=256)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError("image has a single intensity; no threshold separates it")
    counts = [int(c) for c in hist]
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    best_k, best_num, best_den = 0, 0, 1
    n0 = s0 = 0
    for k in range(255):
        n0 += counts[k]
        s0 += k * counts[k]
        n1, s1 = total_n - n0, total_s - s0
        if n0 == 0 or n1 == 0:
            num, den = 0, 1
        else:
            num, den = (s0 * n1 - s1 * n0) ** 2, n0 * n1
        if num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    return best_k


def binarize(img: GrayImage, k: int, polarity: str = "auto") -> BinaryImage:
    """Split at level ``k`` so that the fruit is always True.

    With ``polarity="auto"`` the class that covers most of the image border is
    taken as background; if the bright class is background the mask is
    complemented. A threshold that leaves one class empty returns ``pixels > k``.
    """
    if not 0 <= k <= 254:
        raise ValueError(f"threshold {k} outside [0, 254]")
    bright = img.pixels > k
    if polarity == "bright":
        return BinaryImage.from_array(bright)
    if polarity == "dark":
        return BinaryImage.from_array(~bright)
    if polarity != "auto":
        raise ValueError(f"unknown polarity {polarity!r}")
    if bright.all() or not bright.any():
        return BinaryImage.from_array(bright)
    border = np.concatenate([bright[0], bright[-1], bright[1:-1, 0], bright[1:-1, -1]])
    if border.mean() > 0.5:
        return BinaryImage.from_array(~bright)
    return BinaryImage.from_array(bright)


# -- morphology ---------------------------------------------------------------

def largest_component(mask: np.ndarray) -> np.ndarray:
    """Largest 4-connected component; ties go to the one met first in raster order."""
    labels, count = ndimage.label(mask, structure=_FOUR)
    if count == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=count + 1)
    sizes[0] = 0
    first = np.full(count + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    np.minimum.at(first, flat[nz], nz)
    best = max(range(1, count + 1), key=lambda lab: (sizes[lab], -first[lab]))
    return labels == best


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background regions (8-connected) that do not reach the border."""
    bg_labels, _ = ndimage.label(~mask, structure=_EIGHT)
    edge = np.unique(np.concatenate([
        bg_labels[0], bg_labels[-1], bg_labels[:, 0], bg_labels[:, -1]]))
    outside = np.isin(bg_labels, edge[edge > 0])
    return ~outside


def clean_silhouette(binary: BinaryImage) -> BinaryImage:
    if not binary.mask.any():
        raise EmptyMaskError("cannot clean an empty mask")
    return BinaryImage.from_array(fill_holes(largest_component(binary.mask)))


# -- calibration and measurement ----------------------------------------------

def calibrate(known_mm: tuple[float, float], measured_px: tuple[float, float]) -> CalibrationScale:
    """Scale from a target of known size: mean of the two per-axis ratios."""
    if min(*known_mm, *measured_px) <= 0:
        raise ValueError("calibration inputs must be positive")
    mm_per_pixel = 0.5 * (known_mm[0] / measured_px[0] + known_mm[1] / measured_px[1])
    return CalibrationScale.from_mm_per_pixel(mm_per_pixel)


def measure_view(binary: BinaryImage, scale: CalibrationScale) -> ViewMeasurement:
    rows = np.flatnonzero(binary.mask.any(axis=1))
    cols = np.flatnonzero(binary.mask.any(axis=0))
    if rows.size == 0:
        raise EmptyMaskError("cannot measure an empty mask")
    count = int(np.count_nonzero(binary.mask))
    return ViewMeasurement(
        extent_h=(cols[-1] - cols[0] + 1) * scale.mm_per_pixel,
        extent_v=(rows[-1] - rows[0] + 1) * scale.mm_per_pixel,
        area=count * scale.mm2_per_pixel,
    )


def assemble_features(m1: ViewMeasurement, m2: ViewMeasurement, m3: ViewMeasurement,
                      scale: CalibrationScale | None = None) -> tuple[float, ...]:
    """(L, W, T, PA1, PA2, PA3) from views of the (LxW), (LxT), (WxT) planes.

    Each dimension appears in two views; the two readings are averaged.
    """
    L = 0.5 * (m1.extent_h + m2.extent_h)
    W = 0.5 * (m1.extent_v + m3.extent_h)
    T = 0.5 * (m2.extent_v + m3.extent_v)
    return (L, W, T, m1.area, m2.area, m3.area)


def segment(img: GrayImage) -> BinaryImage:
    """Otsu threshold, polarity fix and silhouette cleanup in one call."""
    return clean_silhouette(binarize(img, otsu_threshold(img)))


def extract_features(views, scale: CalibrationScale) -> tuple[float, ...]:
    m = [measure_view(segment(v), scale) for v in views]
    return assemble_features(m[0], m[1], m[2], scale)


# -- PGM I/O ------------------------------------------------------------------

def write_pgm(path, img: GrayImage) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.astype(np.uint8).tobytes())


def read_pgm(path) -> GrayImage:
    """Read a binary (P5) PGM with maxval 255. Comment lines are skipped."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1  # single whitespace before raster
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != "P5" or maxval != 255:
        raise ValueError(f"{path}: only P5 with maxval 255 is supported (got {magic}, {maxval})")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return GrayImage(width, height, raster.copy())
