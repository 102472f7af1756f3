"""Poisson point patterns in a disc and Matérn type-II thinning.

Neighbour search uses a uniform cell grid whose cell side is at least the
hard-core distance, so every pair within distance ``d`` lies in the same or
an adjacent cell.  The sweep kernel is shared with the Monte Carlo driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numba
import numpy as np

__all__ = [
    "PointPattern",
    "ThinnedPattern",
    "Window",
    "independent_thinnings",
    "matern_thin",
    "paired_thinnings",
    "sample_ppp",
    "write_pattern",
]


@dataclass(frozen=True)
class Window:
    """Observation disc of ``radius`` plus a sampling margin ``guard``."""

    radius: float
    guard: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("window radius must be positive")
        if not self.guard >= 0:
            raise ValueError("guard margin must be non-negative")

    @property
    def sampling_radius(self) -> float:
        return self.radius + self.guard

    @property
    def sampling_area(self) -> float:
        return math.pi * self.sampling_radius**2


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointPattern:
    points: np.ndarray
    marks: np.ndarray
    window: Window

    def __post_init__(self):
        pts = _frozen(self.points).reshape(-1, 2)
        marks = _frozen(self.marks).reshape(-1)
        if len(pts) != len(marks):
            raise ValueError(f"{len(pts)} points but {len(marks)} marks")
        if marks.size and (marks.min() < 0 or marks.max() > 1):
            raise ValueError("marks must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "marks", marks)

    def __len__(self):
        return len(self.points)

    def distances(self) -> np.ndarray:
        """Distance of every point from the window centre."""
        return np.hypot(*(self.points - np.asarray(self.window.center)).T)

    def interior(self) -> np.ndarray:
        """Mask of points inside the observation disc (guard ring excluded)."""
        return self.distances() <= self.window.radius

    def with_marks(self, marks) -> PointPattern:
        return PointPattern(self.points, marks, self.window)


@dataclass(frozen=True)
class ThinnedPattern:
    parent: PointPattern
    retained: np.ndarray = field(repr=False)

    def __post_init__(self):
        flags = _frozen(self.retained, dtype=bool).reshape(-1)
        if len(flags) != len(self.parent):
            raise ValueError("one retention flag per parent point required")
        object.__setattr__(self, "retained", flags)

    @property
    def points(self) -> np.ndarray:
        return self.parent.points[self.retained]

    def __len__(self):
        return int(self.retained.sum())


def sample_ppp(intensity: float, window: Window, rng: np.random.Generator) -> PointPattern:
    """Homogeneous Poisson pattern on the sampling disc with uniform marks."""
    if not intensity >= 0:
        raise ValueError("intensity must be non-negative")
    n = rng.poisson(intensity * window.sampling_area) if intensity > 0 else 0
    rad = window.sampling_radius * np.sqrt(rng.random(n))
    theta = 2.0 * math.pi * rng.random(n)
    cx, cy = window.center
    pts = np.column_stack([cx + rad * np.cos(theta), cy + rad * np.sin(theta)])
    return PointPattern(pts, rng.random(n), window)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@numba.njit(cache=True, nogil=True)
def _sweep_cells(xs, ys, start, nc, marks, mn, d):
    """Running minimum of neighbour marks for cell-sorted points.

    Cells form an ``nc`` x ``nc`` grid indexed ``cx * nc + cy`` whose outer
    ring is empty; ``start`` holds CSR offsets.  ``mn[i, t]`` ends up as the
    smallest mark (thinning ``t``) among points within distance ``d`` of i.

    Each pair is visited once through the forward half of the 3x3 stencil.
    Row-major numbering makes that half two contiguous point ranges: the
    rest of cell c together with c + 1, and the three cells of the next row.
    """
    if marks.shape[1] == 2:
        _sweep_cells_pair(xs, ys, start, nc, marks, mn, d)
        return
    k = marks.shape[1]
    d2 = d * d
    for cx in range(1, nc - 1):
        for cy in range(1, nc - 1):
            c = cx * nc + cy
            a0 = start[c]
            a1 = start[c + 1]
            if a0 == a1:
                continue
            e1 = start[c + 2]
            f0 = start[c + nc - 1]
            f1 = start[c + nc + 2]
            for p in range(a0, a1):
                x = xs[p]
                y = ys[p]
                for s in range(p + 1, e1):
                    dx = x - xs[s]
                    dy = y - ys[s]
                    # branch-free: about a third of candidates are hits
                    hit = dx * dx + dy * dy <= d2
                    for t in range(k):
                        mn[p, t] = min(mn[p, t], marks[s, t] if hit else 2.0)
                        mn[s, t] = min(mn[s, t], marks[p, t] if hit else 2.0)
                for s in range(f0, f1):
                    dx = x - xs[s]
                    dy = y - ys[s]
                    hit = dx * dx + dy * dy <= d2
                    for t in range(k):
                        mn[p, t] = min(mn[p, t], marks[s, t] if hit else 2.0)
                        mn[s, t] = min(mn[s, t], marks[p, t] if hit else 2.0)


@numba.njit(cache=True, nogil=True)
def _sweep_cells_pair(xs, ys, start, nc, marks, mn, d):
    # two-thinning specialisation of _sweep_cells, the Monte Carlo hot loop
    d2 = d * d
    for cx in range(1, nc - 1):
        for cy in range(1, nc - 1):
            c = cx * nc + cy
            a0 = start[c]
            a1 = start[c + 1]
            if a0 == a1:
                continue
            e1 = start[c + 2]
            f0 = start[c + nc - 1]
            f1 = start[c + nc + 2]
            for p in range(a0, a1):
                x = xs[p]
                y = ys[p]
                mp0 = marks[p, 0]
                mp1 = marks[p, 1]
                b0 = mn[p, 0]
                b1 = mn[p, 1]
                for s in range(p + 1, e1):
                    dx = x - xs[s]
                    dy = y - ys[s]
                    hit = dx * dx + dy * dy <= d2
                    b0 = min(b0, marks[s, 0] if hit else 2.0)
                    b1 = min(b1, marks[s, 1] if hit else 2.0)
                    mn[s, 0] = min(mn[s, 0], mp0 if hit else 2.0)
                    mn[s, 1] = min(mn[s, 1], mp1 if hit else 2.0)
                for s in range(f0, f1):
                    dx = x - xs[s]
                    dy = y - ys[s]
                    hit = dx * dx + dy * dy <= d2
                    b0 = min(b0, marks[s, 0] if hit else 2.0)
                    b1 = min(b1, marks[s, 1] if hit else 2.0)
                    mn[s, 0] = min(mn[s, 0], mp0 if hit else 2.0)
                    mn[s, 1] = min(mn[s, 1], mp1 if hit else 2.0)
                mn[p, 0] = b0
                mn[p, 1] = b1


@numba.njit(cache=True, nogil=True)
def _cell_order(xs, ys, x0, y0, h, nc):
    n = xs.size
    start = np.zeros(nc * nc + 1, np.int64)
    cell = np.empty(n, np.int64)
    for i in range(n):
        c = (int((xs[i] - x0) / h) + 1) * nc + int((ys[i] - y0) / h) + 1
        cell[i] = c
        start[c + 1] += 1
    for c in range(nc * nc):
        start[c + 1] += start[c]
    pos = start[:-1].copy()
    order = np.empty(n, np.int64)
    for i in range(n):
        order[pos[cell[i]]] = i
        pos[cell[i]] += 1
    return order, start


def _retention_flags(points, marks, d):
    """Boolean (n, k) retention matrix for mark columns ``marks`` (n, k)."""
    n, k = marks.shape
    if n == 0 or d <= 0:
        return np.ones((n, k), dtype=bool)
    xs = np.ascontiguousarray(points[:, 0])
    ys = np.ascontiguousarray(points[:, 1])
    x0, y0 = xs.min(), ys.min()
    span = max(xs.max() - x0, ys.max() - y0)
    # cell side >= d, and no more cells than points
    h = max(d, span / math.sqrt(n), 1e-12)
    nc = int(span / h) + 3
    order, start = _cell_order(xs, ys, x0, y0, h, nc)
    sm = np.ascontiguousarray(marks[order])
    mn = np.full((n, k), 2.0)
    _sweep_cells(xs[order], ys[order], start, nc, sm, mn, d)
    flags = np.empty((n, k), dtype=bool)
    # equal marks never kill each other
    flags[order] = sm <= mn
    return flags


def matern_thin(pattern: PointPattern, hardcore_distance: float, marks=None) -> ThinnedPattern:
    """Matérn type-II thinning of ``pattern``.

    A point survives iff no other point within ``hardcore_distance`` carries
    a strictly smaller mark.  ``marks`` defaults to the pattern's own marks.
    """
    if not hardcore_distance >= 0:
        raise ValueError("hard-core distance must be non-negative")
    if marks is None:
        parent = pattern
    else:
        marks = np.asarray(marks, dtype=float).reshape(-1)
        if len(marks) != len(pattern):
            raise ValueError(f"{len(pattern)} points but {len(marks)} marks")
        parent = pattern.with_marks(marks)
    flags = _retention_flags(parent.points, parent.marks[:, None], hardcore_distance)
    return ThinnedPattern(parent, flags[:, 0])


def independent_thinnings(
    pattern: PointPattern, hardcore_distance: float, count: int, rng: np.random.Generator
) -> list[ThinnedPattern]:
    """``count`` Matérn thinnings of the same positions with fresh marks each."""
    if not hardcore_distance >= 0:
        raise ValueError("hard-core distance must be non-negative")
    marks = rng.random((len(pattern), count))
    flags = _retention_flags(pattern.points, marks, hardcore_distance)
    return [
        ThinnedPattern(pattern.with_marks(marks[:, t]), flags[:, t]) for t in range(count)
    ]


def paired_thinnings(pattern: PointPattern, hardcore_distance: float, rng: np.random.Generator):
    """Two independent thinnings (one per time slot) over the same positions."""
    first, second = independent_thinnings(pattern, hardcore_distance, 2, rng)
    return first, second


def write_pattern(stream: TextIO, thinnings: Sequence[ThinnedPattern]) -> None:
    """Dump ``x y mark retained1 [retained2 ...]``, one point per line.

    The mark column is that of the first thinning.
    """
    if not thinnings:
        raise ValueError("at least one thinning is required")
    base = thinnings[0].parent
    for t in thinnings[1:]:
        if t.parent.points is not base.points and not np.array_equal(t.parent.points, base.points):
            raise ValueError("thinnings must share the same positions")
    flags = np.column_stack([t.retained for t in thinnings]).astype(int)
    for (x, y), mark, row in zip(base.points, base.marks, flags):
        stream.write(f"{x:.17g} {y:.17g} {mark:.17g} " + " ".join(map(str, row)) + "\n")
