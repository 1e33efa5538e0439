"""Dice, contour tracing and Hausdorff distance.

Hausdorff distances are computed on traced contours, in pixel units.
Two routes exist: :func:`hausdorff` looks distances up in an exact
Euclidean distance transform, :func:`hausdorff_bruteforce` compares every
pair of points and serves as the reference.
"""

from __future__ import annotations

import math
import statistics
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .core import Contour, MetricPair, SegMask, as_points

# Clockwise around a pixel in (row, col) with rows pointing down, starting west.
_MOORE_OFFSETS = ((0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1))
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)

# Grids larger than this fall back to the chunked brute force.
_MAX_DT_CELLS = 16_000_000


def _values(mask) -> np.ndarray:
    if isinstance(mask, SegMask):
        return mask.values
    return np.asarray(mask)


def dice(a, b) -> float:
    """Dice overlap ``2|A∩B| / (|A|+|B|)``; two empty masks score 1.0."""
    va, vb = _values(a).astype(bool), _values(b).astype(bool)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} vs {vb.shape}")
    total = int(va.sum()) + int(vb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(va, vb).sum()) / total


def largest_component(mask) -> SegMask:
    """Keep the largest 4-connected foreground component and fill its holes.

    Ties between equally large components go to the one whose first pixel
    comes first in raster order.
    """
    values = _values(mask).astype(bool)
    labels, n = ndimage.label(values, structure=_FOUR_CONNECTED)
    if n == 0:
        return SegMask(values)
    sizes = np.bincount(labels.ravel())[1:]
    keep = labels == (int(np.argmax(sizes)) + 1)
    return SegMask(ndimage.binary_fill_holes(keep, structure=_FOUR_CONNECTED))


def boundary_pixels(mask) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour or on the grid edge."""
    values = _values(mask).astype(bool)
    padded = np.pad(values, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return values & ~interior


def extract_contour(mask) -> Contour:
    """Trace the outer boundary with Moore-neighbour tracing.

    Tracing starts at the first foreground pixel in raster order, entered
    from the west, and stops by Jacob's criterion: when the start pixel is
    re-entered from the same direction as initially.

    Args:
        mask: Binary mask whose foreground is a single 4-connected region
            without holes (see :func:`largest_component`).

    Returns:
        The closed contour. Pixels of thin parts are visited once per pass,
        so a point can appear more than once.
    """
    values = _values(mask).astype(bool)
    if values.ndim != 2:
        raise ValueError("mask must be 2D")
    if not values.any():
        raise ValueError("cannot trace the contour of an empty mask")
    grid = np.pad(values, 1, constant_values=False)
    rows, cols = np.nonzero(grid)
    start = (int(rows[0]), int(cols[0]))

    # State is (pixel, index of the backtrack neighbour); the start is entered from the west.
    # Jacob's criterion: stop once the start pixel is left by the same move as the first one.
    point, back = start, 0
    points = [start]
    first_move = None
    limit = 8 * int(values.sum()) + 8
    for _ in range(limit):
        r, c = point
        found = None
        for step in range(1, 9):
            k = (back + step) % 8
            dr, dc = _MOORE_OFFSETS[k]
            if grid[r + dr, c + dc]:
                found = k
                break
        if found is None:
            break  # isolated pixel
        dr, dc = _MOORE_OFFSETS[found]
        nxt = (r + dr, c + dc)
        pr, pc = _MOORE_OFFSETS[(found - 1) % 8]
        # backtrack expressed relative to the new pixel
        back = _MOORE_OFFSETS.index((r + pr - nxt[0], c + pc - nxt[1]))
        move = (point, nxt, back)
        if first_move is None:
            first_move = move
        elif move == first_move:
            points.pop()  # the start pixel, appended when it was re-entered
            break
        point = nxt
        points.append(point)
    else:
        raise RuntimeError("contour tracing did not terminate")
    return Contour(tuple((r - 1, c - 1) for r, c in points), closed=True)


def hausdorff_bruteforce(a, b) -> float:
    """O(n·m) symmetric Hausdorff distance between two point sets."""
    pa, pb = as_points(a).astype(np.float64), as_points(b).astype(np.float64)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("Hausdorff distance needs two nonempty point sets")

    def directed(src, dst):
        worst = 0.0
        for chunk in range(0, len(src), 1024):
            diff = src[chunk:chunk + 1024, None, :] - dst[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            worst = max(worst, float(np.sqrt(d2.min(axis=1)).max()))
        return worst

    return max(directed(pa, pb), directed(pb, pa))


def hausdorff(a, b) -> float:
    """Exact symmetric Hausdorff distance between two contours, in pixels.

    Each direction rasterizes one point set inside the common bounding box
    and reads the other set's distances from an exact Euclidean distance
    transform.
    """
    pa, pb = as_points(a), as_points(b)
    if len(pa) == 0 or len(pb) == 0:
        raise ValueError("Hausdorff distance needs two nonempty contours")
    lo = np.minimum(pa.min(axis=0), pb.min(axis=0))
    hi = np.maximum(pa.max(axis=0), pb.max(axis=0))
    shape = tuple(int(v) for v in hi - lo + 1)
    if shape[0] * shape[1] > _MAX_DT_CELLS:
        return hausdorff_bruteforce(pa, pb)
    pa, pb = pa - lo, pb - lo

    def directed(src, dst):
        grid = np.ones(shape, dtype=bool)
        grid[dst[:, 0], dst[:, 1]] = False
        dt = ndimage.distance_transform_edt(grid)
        return float(dt[src[:, 0], src[:, 1]].max())

    return max(directed(pa, pb), directed(pb, pa))


def hd_fallback(shape: Tuple[int, int]) -> float:
    """Hausdorff value assigned to a failed (empty) segmentation: half the frame diagonal."""
    return math.hypot(shape[0], shape[1]) / 2.0


def evaluate_pair(pred, gt) -> MetricPair:
    """Dice on the masks and Hausdorff distance on their contours.

    Both masks are reduced to their largest 4-connected component before
    contouring. If exactly one mask is empty the pair is flagged as failed
    with Dice 0 and the fallback Hausdorff distance; if both are empty, Dice
    is 1 and the distance 0, also flagged.
    """
    vp, vg = _values(pred), _values(gt)
    if vp.shape != vg.shape:
        raise ValueError(f"shape mismatch: {vp.shape} vs {vg.shape}")
    empty_p, empty_g = not vp.any(), not vg.any()
    if empty_p and empty_g:
        return MetricPair(1.0, 0.0, failed=True)
    if empty_p or empty_g:
        return MetricPair(0.0, hd_fallback(vp.shape), failed=True)
    cp = extract_contour(largest_component(vp))
    cg = extract_contour(largest_component(vg))
    return MetricPair(dice(vp, vg), hausdorff(cp, cg))


def mean_sd(values: Iterable[float]) -> Tuple[float, float]:
    """Arithmetic mean and sample standard deviation (n-1); one value gives sd 0."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("mean_sd needs at least one value")
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, sd


def dilate(mask, iterations: int = 1) -> SegMask:
    """Binary dilation with the 4-neighbourhood, ``iterations`` times."""
    values = _values(mask).astype(bool)
    if iterations <= 0:
        return SegMask(values)
    return SegMask(ndimage.binary_dilation(values, structure=_FOUR_CONNECTED, iterations=iterations))
