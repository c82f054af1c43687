"""Multi-resolution feature/confidence pyramids.

Levels are ordered coarse -> fine. Grid value (i, j) lives at continuous
coordinate (i, j) (pixel-center convention); mapping a coordinate between
resolutions multiplies it by the resolution ratio. Lookups use (u, v) order:
u indexes columns, v indexes rows.

Out-of-bounds lookups return zeros with in_bounds=False; downstream code
treats them as zero-weight rather than clamping, so borders contribute no
false gradients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .errors import FormatError

MAGIC = b"PACL"
VERSION = 1

# Gradient channels are expressed per grid cell, whose metric size differs
# between a perspective ground view and the overhead map, so across views they
# act as uncalibrated context rather than matchable values. They are scaled
# down so the calibrated channels (intensity, embeddings) dominate residuals.
GRADIENT_CHANNEL_SCALE = 0.2


@dataclass
class PyramidLevel:
    features: np.ndarray  # (h, w, c)
    view_consistent: np.ndarray  # V, (h, w), values in [0, 1]
    on_ground: np.ndarray  # O, (h, w), values in [0, 1]

    def __post_init__(self):
        h, w, _ = self.features.shape
        if self.view_consistent.shape != (h, w) or self.on_ground.shape != (h, w):
            raise ValueError("confidence maps must match the feature grid shape")
        for m in (self.view_consistent, self.on_ground):
            if m.size and (m.min() < 0.0 or m.max() > 1.0):
                raise ValueError("confidence values must lie in [0, 1]")


@dataclass
class FeaturePyramid:
    levels: List[PyramidLevel]  # coarse -> fine

    def __post_init__(self):
        shapes = [lvl.features.shape[:2] for lvl in self.levels]
        for (h0, w0), (h1, w1) in zip(shapes, shapes[1:]):
            if not (h1 > h0 and w1 > w0):
                raise ValueError(f"level shapes must strictly increase, got {shapes}")

    @property
    def finest(self) -> PyramidLevel:
        return self.levels[-1]


@dataclass
class LookupResult:
    value: np.ndarray
    in_bounds: bool


def _cell_indices(x: np.ndarray, n: int) -> np.ndarray:
    # Interior cell index so that the last grid node interpolates exactly.
    return np.clip(np.floor(x).astype(np.int64), 0, max(n - 2, 0))


def bilinear_lookup_batch(grid: np.ndarray, points: np.ndarray):
    """Bilinear interpolation at points (n, 2) in (u, v) order.

    Returns (values, in_bounds): values has shape (n,) for a 2-D grid and
    (n, c) for a 3-D grid; out-of-bounds rows are zero.
    """
    grid = np.asarray(grid)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h, w = grid.shape[:2]
    x, y = pts[:, 0], pts[:, 1]
    inb = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x0 = _cell_indices(np.where(inb, x, 0.0), w)
    y0 = _cell_indices(np.where(inb, y, 0.0), h)
    tx = (np.where(inb, x, 0.0) - x0)[:, None] if grid.ndim == 3 else np.where(inb, x, 0.0) - x0
    ty = (np.where(inb, y, 0.0) - y0)[:, None] if grid.ndim == 3 else np.where(inb, y, 0.0) - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    f00, f10 = grid[y0, x0], grid[y0, x1]
    f01, f11 = grid[y1, x0], grid[y1, x1]
    vals = (
        f00 * (1 - tx) * (1 - ty)
        + f10 * tx * (1 - ty)
        + f01 * (1 - tx) * ty
        + f11 * tx * ty
    )
    if grid.ndim == 3:
        vals = np.where(inb[:, None], vals, 0.0)
    else:
        vals = np.where(inb, vals, 0.0)
    return vals, inb


def bilinear_lookup(grid: np.ndarray, point) -> LookupResult:
    """Sub-pixel lookup of a feature/confidence grid at (u, v)."""
    vals, inb = bilinear_lookup_batch(grid, np.asarray(point, dtype=float)[None, :])
    return LookupResult(value=vals[0], in_bounds=bool(inb[0]))


def spatial_gradient_batch(grid: np.ndarray, points: np.ndarray):
    """Analytic gradient of the bilinear surface at points (n, 2).

    Returns (grads, in_bounds) with grads of shape (n, 2, c) (or (n, 2) for a
    2-D grid); row 0 is d/du, row 1 is d/dv. The derivative is piecewise
    bilinear: constant along the differentiated axis within each cell.
    """
    grid = np.asarray(grid)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h, w = grid.shape[:2]
    x, y = pts[:, 0], pts[:, 1]
    inb = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    x0 = _cell_indices(np.where(inb, x, 0.0), w)
    y0 = _cell_indices(np.where(inb, y, 0.0), h)
    tx = np.where(inb, x, 0.0) - x0
    ty = np.where(inb, y, 0.0) - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    f00, f10 = grid[y0, x0], grid[y0, x1]
    f01, f11 = grid[y1, x0], grid[y1, x1]
    if grid.ndim == 3:
        tx, ty, inbv = tx[:, None], ty[:, None], inb[:, None]
    else:
        inbv = inb
    du = (f10 - f00) * (1 - ty) + (f11 - f01) * ty
    dv = (f01 - f00) * (1 - tx) + (f11 - f10) * tx
    du = np.where(inbv, du, 0.0)
    dv = np.where(inbv, dv, 0.0)
    return np.stack([du, dv], axis=1), inb


def spatial_gradient(grid: np.ndarray, point) -> LookupResult:
    """Gradient of bilinear_lookup w.r.t. the lookup point; value shape (2, c)."""
    grads, inb = spatial_gradient_batch(grid, np.asarray(point, dtype=float)[None, :])
    return LookupResult(value=grads[0], in_bounds=bool(inb[0]))


def resize_bilinear(grid: np.ndarray, shape) -> np.ndarray:
    """Resample a 2-D grid to (h, w) using the resolution-ratio coordinate map.

    Target coordinates map to source as j_src = j_dst * (n_src / n_dst),
    clamped to the valid interpolation domain.
    """
    h_dst, w_dst = shape
    h_src, w_src = grid.shape[:2]
    u = np.clip(np.arange(w_dst) * (w_src / w_dst), 0, w_src - 1)
    v = np.clip(np.arange(h_dst) * (h_src / h_dst), 0, h_src - 1)
    uu, vv = np.meshgrid(u, v)
    pts = np.stack([uu.ravel(), vv.ravel()], axis=-1)
    vals, _ = bilinear_lookup_batch(grid, pts)
    return vals.reshape(h_dst, w_dst)


def _minmax_normalize(m: np.ndarray, flat_value: float = 0.5) -> np.ndarray:
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0.0:
        return np.full_like(m, flat_value)
    return (m - lo) / (hi - lo)


def _avg_pool(img: np.ndarray, factor: int) -> np.ndarray:
    """Centered average pooling by an integer factor.

    Pooled node j averages a window centered at full-resolution coordinate
    j * factor, so the pooled grid obeys the resolution-ratio coordinate map
    exactly (a plain block reshape would shift every node by half a block).
    The window is a symmetric (factor + 1)-tap box with half-weight ends.
    """
    if factor == 1:
        return img
    kernel = np.ones(factor + 1)
    kernel[0] = kernel[-1] = 0.5
    kernel /= factor
    sm = ndimage.correlate1d(img, kernel, axis=0, mode="nearest")
    sm = ndimage.correlate1d(sm, kernel, axis=1, mode="nearest")
    h = img.shape[0] // factor
    w = img.shape[1] // factor
    return sm[::factor, ::factor][:h, :w]


def toy_extract(
    image: np.ndarray,
    embedding: np.ndarray,
    levels: int = 3,
    on_ground: Optional[np.ndarray] = None,
) -> FeaturePyramid:
    """Deterministic stand-in for a trained extractor.

    Per level (2x average-pool chain, finest = half resolution): features are
    [normalized intensity, horizontal gradient, vertical gradient, gradient
    magnitude] concatenated with the pooled embedding channels. V is the
    min-max normalized gradient magnitude; O is all ones unless an on-ground
    oracle mask is supplied.
    """
    img = np.asarray(image, dtype=float)
    if img.size == 0:
        raise ValueError("empty image")
    intensity = img.mean(axis=-1) if img.ndim == 3 else img
    # Rescale only when the input is not already in [0, 1] (e.g. uint8);
    # stretching per-view would decalibrate intensities across views.
    if intensity.min() < 0.0 or intensity.max() > 1.0:
        intensity = _minmax_normalize(intensity, flat_value=0.0)

    out = []
    for l in range(1, levels + 1):
        factor = 2 ** (levels - l + 1)
        i_l = _avg_pool(intensity, factor)
        # Embeddings are smooth analytic maps, so downsample by point
        # sampling at the level nodes; averaging would bend their values
        # differently in each view and decalibrate the channels.
        e_l = embedding[::factor, ::factor][: i_l.shape[0], : i_l.shape[1]]
        gy, gx = np.gradient(i_l)
        mag = np.hypot(gx, gy)
        s = GRADIENT_CHANNEL_SCALE
        feats = np.concatenate(
            [np.stack([i_l, s * gx, s * gy, s * mag], axis=-1), e_l], axis=-1
        )
        v = _minmax_normalize(mag)
        if on_ground is None:
            o = np.ones_like(v)
        else:
            # Min-pool the mask: a cell counts as on-ground only when its whole
            # footprint is. Averaging would leave partially corrupted cells
            # active at reduced weight, which still drags the residuals.
            o_full = ndimage.minimum_filter(
                np.asarray(on_ground, dtype=float), size=factor + 1, mode="nearest"
            )
            o = np.clip(o_full[::factor, ::factor][: v.shape[0], : v.shape[1]], 0.0, 1.0)
        out.append(PyramidLevel(features=feats, view_consistent=v, on_ground=o))
    return FeaturePyramid(levels=out)


def write_pyramid(pyr: FeaturePyramid, path) -> None:
    """Serialize a pyramid: magic, u32 version, u32 L, then per level
    u32 h/w/c followed by float32 features (row-major, channel-last), V, O."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(pyr.levels)))
        for lvl in pyr.levels:
            h, w, c = lvl.features.shape
            f.write(struct.pack("<III", h, w, c))
            f.write(np.ascontiguousarray(lvl.features, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.view_consistent, dtype="<f4").tobytes())
            f.write(np.ascontiguousarray(lvl.on_ground, dtype="<f4").tobytes())


def read_pyramid(path) -> FeaturePyramid:
    """Read a pyramid file; raises FormatError with the byte offset on damage."""
    data = Path(path).read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise FormatError(f"truncated file while reading {what}", off)
        chunk = data[off : off + n]
        off += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise FormatError(f"bad magic, expected {MAGIC!r}", 0)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (n_levels,) = struct.unpack("<I", take(4, "level count"))
    if n_levels == 0:
        raise FormatError("pyramid has zero levels", 8)
    levels = []
    for li in range(n_levels):
        hdr_off = off
        h, w, c = struct.unpack("<III", take(12, f"level {li} header"))
        if h == 0 or w == 0 or c == 0:
            raise FormatError(f"level {li} has zero dimension {h}x{w}x{c}", hdr_off)
        feats = np.frombuffer(take(4 * h * w * c, f"level {li} features"), dtype="<f4")
        v = np.frombuffer(take(4 * h * w, f"level {li} view-consistent map"), dtype="<f4")
        o = np.frombuffer(take(4 * h * w, f"level {li} on-ground map"), dtype="<f4")
        try:
            levels.append(
                PyramidLevel(
                    features=feats.reshape(h, w, c).copy(),
                    view_consistent=v.reshape(h, w).copy(),
                    on_ground=o.reshape(h, w).copy(),
                )
            )
        except ValueError as e:
            raise FormatError(f"level {li}: {e}", hdr_off) from e
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes", off)
    try:
        return FeaturePyramid(levels=levels)
    except ValueError as e:
        raise FormatError(str(e), 8) from e
