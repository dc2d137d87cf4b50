"""
Per-cell statistics.

- ``VisitWindow``: visitation flags over the last frames and the monotone
  activation flag.
- ``SmoothedHistogram``: distances to the shape compressed into a short list
  of Gaussian kernels; its mode count separates flat from salient cells.
- ``ColorGrid``: 2^r x 2^r color points per cell, updated with
  depth-dependent neighborhoods.
- ``RunningMoments``: streaming mean / variance of shape parameters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from pxs.frame import CameraIntrinsics
from pxs.shape import GridSpec
from pxs.types import PxsValidationError

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 100
DEFAULT_ACTIVATION_RATIO = 0.25
DEFAULT_MERGE_WIDTH = 2.0
DEFAULT_MODE_PROMINENCE = 0.10
DEFAULT_COLOR_ALPHA = 3.0

CellKey = Tuple[int, int]


# ============== Visitation ==============


@dataclass
class VisitWindow:
    """
    Ring buffer of the last ``length`` visited flags, stored as a bitmask.

    Bit 0 is the most recent frame. ``activated`` never reverts once set.
    """
    bits: int = 0
    pushed: int = 0
    activated: bool = False
    length: int = DEFAULT_WINDOW
    ratio: float = DEFAULT_ACTIVATION_RATIO

    @property
    def visits(self) -> int:
        return bin(self.bits).count("1")

    @property
    def required(self) -> int:
        """Visits needed in the window to activate."""
        return max(1, int(math.ceil(self.ratio * self.length - 1e-9)))

    def push(self, visited: bool) -> "VisitWindow":
        self.bits = ((self.bits << 1) | int(bool(visited))) & ((1 << self.length) - 1)
        self.pushed += 1
        if not self.activated and self.visits >= self.required:
            self.activated = True
        return self

    def merge(self, other: "VisitWindow") -> None:
        """Fold another window in: flags are ORed frame by frame."""
        self.bits |= other.bits
        self.pushed = max(self.pushed, other.pushed)
        self.activated = self.activated or other.activated or self.visits >= self.required


def visit_and_activate(cell: VisitWindow, visited: bool) -> VisitWindow:
    """Push one frame's visited flag; activation is monotone."""
    return cell.push(visited)


# ============== Smoothed local histograms ==============


class SmoothedHistogram:
    """
    Distribution of distances to the shape as weighted Gaussian kernels.

    Every kernel has the histogram's bandwidth ``sigma``. A sample within
    ``merge_width * sigma`` of the nearest kernel folds into it (running
    mean, weight + 1); otherwise it starts a new kernel. Kernels drifting
    closer than that are folded together.
    """

    __slots__ = ("sigma", "merge_width", "prominence", "means", "weights", "_modes")

    def __init__(
        self,
        sigma: float,
        merge_width: float = DEFAULT_MERGE_WIDTH,
        prominence: float = DEFAULT_MODE_PROMINENCE,
    ):
        if not sigma > 0:
            raise PxsValidationError(f"histogram bandwidth must be positive, got {sigma}")
        self.sigma = float(sigma)
        self.merge_width = float(merge_width)
        self.prominence = float(prominence)
        self.means = np.zeros(0)
        self.weights = np.zeros(0)
        self._modes = 0

    @classmethod
    def from_kernels(
        cls,
        means: Sequence[float],
        weights: Sequence[float],
        sigma: float,
        merge_width: float = DEFAULT_MERGE_WIDTH,
        prominence: float = DEFAULT_MODE_PROMINENCE,
    ) -> "SmoothedHistogram":
        """Histogram with the given kernels (no folding applied)."""
        hist = cls(sigma, merge_width, prominence)
        hist.means = np.asarray(means, dtype=np.float64).copy()
        hist.weights = np.asarray(weights, dtype=np.float64).copy()
        if np.any(hist.weights < 1.0):
            raise PxsValidationError("kernel weights must be >= 1")
        hist._modes = hist.compute_mode_count()
        return hist

    def __len__(self) -> int:
        return len(self.means)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def mean_distance(self) -> float:
        """d_c: weighted mean of the kernel means (0 for an empty histogram)."""
        total = self.weights.sum()
        if total == 0:
            return 0.0
        return float(np.dot(self.weights, self.means) / total)

    @property
    def mode_count(self) -> int:
        """m_c, refreshed after every insert batch."""
        return self._modes

    def insert(self, d: float) -> "SmoothedHistogram":
        return self.insert_many(np.array([d], dtype=np.float64))

    def insert_many(self, values: np.ndarray) -> "SmoothedHistogram":
        """
        Insert a batch of distances.

        Samples within merge_width * sigma of an existing kernel fold into the
        nearest one; the rest are clustered greedily in ascending order.

        Raises:
            PxsValidationError: If any value is non-finite
        """
        d = np.asarray(values, dtype=np.float64).ravel()
        if d.size == 0:
            return self
        if not np.all(np.isfinite(d)):
            raise PxsValidationError("histogram samples must be finite")
        reach = self.merge_width * self.sigma

        leftover = d
        if len(self.means):
            gaps = np.abs(d[:, None] - self.means[None, :])
            nearest = np.argmin(gaps, axis=1)
            close = gaps[np.arange(len(d)), nearest] <= reach
            if close.any():
                k = nearest[close]
                sums = np.bincount(k, weights=d[close], minlength=len(self.means))
                counts = np.bincount(k, minlength=len(self.means)).astype(np.float64)
                new_w = self.weights + counts
                self.means = (self.means * self.weights + sums) / new_w
                self.weights = new_w
            leftover = d[~close]

        for x in np.sort(leftover):
            if len(self.means):
                k = int(np.argmin(np.abs(self.means - x)))
                if abs(self.means[k] - x) <= reach:
                    w = self.weights[k] + 1.0
                    self.means[k] += (x - self.means[k]) / w
                    self.weights[k] = w
                    continue
            self.means = np.append(self.means, x)
            self.weights = np.append(self.weights, 1.0)

        self._compact()
        self._modes = self.compute_mode_count()
        return self

    def merge(self, other: "SmoothedHistogram") -> "SmoothedHistogram":
        """Fold another histogram's kernels into this one."""
        if len(other) == 0:
            return self
        self.means = np.concatenate([self.means, other.means])
        self.weights = np.concatenate([self.weights, other.weights])
        self._compact()
        self._modes = self.compute_mode_count()
        return self

    def _compact(self) -> None:
        """Fold adjacent kernels closer than merge_width * sigma."""
        if len(self.means) < 2:
            return
        order = np.argsort(self.means, kind="stable")
        means, weights = list(self.means[order]), list(self.weights[order])
        reach = self.merge_width * self.sigma
        out_m, out_w = [means[0]], [weights[0]]
        for m, w in zip(means[1:], weights[1:]):
            if m - out_m[-1] <= reach:
                total = out_w[-1] + w
                out_m[-1] = (out_m[-1] * out_w[-1] + m * w) / total
                out_w[-1] = total
            else:
                out_m.append(m)
                out_w.append(w)
        self.means = np.asarray(out_m)
        self.weights = np.asarray(out_w)

    def density(self, s: np.ndarray) -> np.ndarray:
        """Weighted kernel sum evaluated at ``s``."""
        s = np.asarray(s, dtype=np.float64)
        z = (s[..., None] - self.means) / self.sigma
        return np.exp(-0.5 * z * z) @ self.weights / (self.sigma * math.sqrt(2.0 * math.pi))

    def derivative(self, s: np.ndarray) -> np.ndarray:
        """Analytic derivative of ``density``."""
        s = np.asarray(s, dtype=np.float64)
        diff = s[..., None] - self.means
        z = diff / self.sigma
        g = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))
        return (-(diff / self.sigma ** 2) * g) @ self.weights

    def compute_mode_count(self) -> int:
        """
        Number of local maxima of the kernel sum.

        Sign changes of the derivative are searched on a sigma/8 grid; maxima
        below ``prominence`` times the highest density are ignored.
        """
        if len(self.means) == 0:
            return 0
        if len(self.means) == 1:
            return 1
        step = self.sigma / 8.0
        lo = self.means.min() - 4.0 * self.sigma
        hi = self.means.max() + 4.0 * self.sigma
        s = np.arange(lo, hi + step, step)
        slope = self.derivative(s)
        peaks = np.nonzero((slope[:-1] > 0.0) & (slope[1:] <= 0.0))[0]
        if len(peaks) == 0:
            return 1
        heights = self.density(0.5 * (s[peaks] + s[peaks + 1]))
        return max(1, int(np.count_nonzero(heights >= self.prominence * heights.max())))


def slh_insert(hist: SmoothedHistogram, d: float) -> SmoothedHistogram:
    """Insert one distance sample; see ``SmoothedHistogram.insert_many``."""
    return hist.insert(d)


def slh_mode_count(hist: SmoothedHistogram) -> int:
    """Mode count of a histogram; equals ``hist.mode_count``."""
    return hist.compute_mode_count()


# ============== Color points ==============


class ColorGrid:
    """
    R x R color points of one cell (R = 2^r), each a running RGB mean.
    """

    __slots__ = ("res", "means", "weights")

    def __init__(self, res: int):
        if res < 1:
            raise PxsValidationError(f"color grid resolution must be >= 1, got {res}")
        self.res = res
        self.means = np.zeros((res, res, 3))
        self.weights = np.zeros((res, res))

    @property
    def observed(self) -> np.ndarray:
        return self.weights > 0.0

    def accumulate(self, k: np.ndarray, l: np.ndarray, rgb: np.ndarray, w: np.ndarray) -> None:
        """Fold weighted colors into points (k, l); repeated indices are summed."""
        k = np.asarray(k, dtype=np.int64)
        l = np.asarray(l, dtype=np.int64)
        w = np.asarray(w, dtype=np.float64)
        rgb = np.asarray(rgb, dtype=np.float64).reshape(-1, 3)
        sum_w = np.zeros((self.res, self.res))
        sum_c = np.zeros((self.res, self.res, 3))
        np.add.at(sum_w, (k, l), w)
        np.add.at(sum_c, (k, l), w[:, None] * rgb)
        hit = sum_w > 0.0
        total = self.weights + sum_w
        self.means[hit] = (self.means[hit] * self.weights[hit, None] + sum_c[hit]) / total[hit, None]
        self.weights = total

    def to_uint8(self) -> np.ndarray:
        """Rounded colors; unobserved points are black."""
        out = np.clip(np.rint(self.means), 0, 255).astype(np.uint8)
        out[~self.observed] = 0
        return out

    def merge(self, other: "ColorGrid") -> None:
        if other.res != self.res:
            raise PxsValidationError("cannot merge color grids of different resolution")
        k, l = np.nonzero(other.observed)
        if len(k):
            self.accumulate(k, l, other.means[k, l], other.weights[k, l])


def color_neighborhood(z: float, spec: GridSpec, intrinsics: CameraIntrinsics) -> Tuple[float, int]:
    """
    Influence radius and discrete color neighborhood of a sample at depth z.

    rho = (z / 2) tan(fov_h / res_h);  n = floor(rho 2^r / w), with w and r
    taken from the grid.
    """
    rho = 0.5 * z * math.tan(intrinsics.fov_h / intrinsics.res_h)
    return rho, int(math.floor(rho * (1 << spec.color_res_log2) / spec.cell_size))


def color_weights(n: int, color_res_log2: int, alpha: float = DEFAULT_COLOR_ALPHA) -> Tuple[np.ndarray, np.ndarray]:
    """
    Offsets in [-n, n]^2 and their contribution weights
    (1 / (1 + 2 n^2)) exp(-|(a, b)|^2 / (2 sigma^2)), sigma = alpha 2^r.
    """
    a, b = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    sigma = alpha * (1 << color_res_log2)
    w = np.exp(-(a * a + b * b) / (2.0 * sigma * sigma)) / (1.0 + 2.0 * n * n)
    return np.stack([a.ravel(), b.ravel()], axis=1), w.ravel()


def color_update(
    grid: ColorGrid,
    hit: Tuple[int, int],
    rgb: Sequence[float],
    n: int,
    color_res_log2: Optional[int] = None,
    alpha: float = DEFAULT_COLOR_ALPHA,
) -> ColorGrid:
    """
    Fold one color sample into the points of a single cell within
    Chebyshev radius ``n`` of color point ``hit``. Points of neighboring
    cells are handled by ``splat_colors``.
    """
    if n < 0:
        raise PxsValidationError(f"neighborhood must be >= 0, got {n}")
    r = color_res_log2 if color_res_log2 is not None else int(round(math.log2(grid.res)))
    offsets, weights = color_weights(n, r, alpha)
    k = hit[0] + offsets[:, 0]
    l = hit[1] + offsets[:, 1]
    inside = (k >= 0) & (k < grid.res) & (l >= 0) & (l < grid.res)
    grid.accumulate(k[inside], l[inside], np.tile(np.asarray(rgb, float), (int(inside.sum()), 1)), weights[inside])
    return grid


# ============== Cells ==============


@dataclass
class Cell:
    """
    One grid cell of a proxy.

    A decoded cell carries only its summary (d_c, m_c); a filled cell has no
    histogram and reads as (0, 1).
    """
    visit: VisitWindow
    hist: Optional[SmoothedHistogram]
    colors: ColorGrid
    filled: bool = False
    summary: Optional[Tuple[float, int]] = None

    @property
    def active(self) -> bool:
        return self.visit.activated

    @property
    def emitting(self) -> bool:
        """Contributes to outputs (activated or filled)."""
        return self.visit.activated or self.filled

    @property
    def mean_distance(self) -> float:
        if self.hist is not None and len(self.hist):
            return self.hist.mean_distance
        if self.summary is not None:
            return self.summary[0]
        return 0.0

    @property
    def mode_count(self) -> int:
        if self.hist is not None and len(self.hist):
            return self.hist.mode_count
        if self.summary is not None:
            return self.summary[1]
        return 1 if self.filled else 0

    def merge(self, other: "Cell") -> None:
        self.visit.merge(other.visit)
        if other.hist is not None:
            if self.hist is None:
                self.hist = other.hist
            else:
                self.hist.merge(other.hist)
        self.colors.merge(other.colors)
        self.filled = (self.filled or other.filled) and not self.visit.activated
        if self.summary is None:
            self.summary = other.summary


def splat_colors(
    cells: Dict[CellKey, Cell],
    color_res: int,
    gi: np.ndarray,
    gj: np.ndarray,
    rgb: np.ndarray,
    n: np.ndarray,
    weight_table: Dict[int, Tuple[np.ndarray, np.ndarray]],
    period_points: int = 0,
) -> None:
    """
    Proxy-wide color update.

    ``gi``/``gj`` are global color-point indices of each sample's hit (cell
    index * R + sub index). Each sample updates every existing color point
    within Chebyshev radius ``n`` of its hit, across cell borders.
    ``period_points`` wraps gi for periodic grids.
    """
    if len(gi) == 0:
        return
    all_i, all_j, all_c, all_w = [], [], [], []
    for radius in np.unique(n):
        sel = n == radius
        offsets, weights = weight_table[int(radius)]
        ii = (gi[sel][:, None] + offsets[None, :, 0]).ravel()
        jj = (gj[sel][:, None] + offsets[None, :, 1]).ravel()
        all_i.append(ii)
        all_j.append(jj)
        all_c.append(np.repeat(rgb[sel], len(offsets), axis=0))
        all_w.append(np.tile(weights, int(sel.sum())))
    ii = np.concatenate(all_i)
    jj = np.concatenate(all_j)
    cc = np.concatenate(all_c)
    ww = np.concatenate(all_w)
    if period_points:
        ii = np.mod(ii, period_points)

    ci, k = np.divmod(ii, color_res)
    cj, l = np.divmod(jj, color_res)
    keys = np.stack([ci, cj], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
    for g, (a, b) in enumerate(uniq):
        cell = cells.get((int(a), int(b)))
        if cell is None:
            continue
        idx = order[bounds[g]:bounds[g + 1]]
        cell.colors.accumulate(k[idx], l[idx], cc[idx], ww[idx])


# ============== Running moments ==============


class RunningMoments:
    """
    Streaming mean and variance of fixed-length vectors (Welford).
    """

    __slots__ = ("count", "mean", "m2")

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def push(self, x: Iterable[float]) -> None:
        x = np.asarray(x, dtype=np.float64)
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    def merge(self, other: "RunningMoments") -> None:
        """Combine with another accumulator (parallel Welford update)."""
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.count / total
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / total
        self.count = total

    @property
    def variance(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.maximum(self.m2 / (self.count - 1), 0.0)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)
