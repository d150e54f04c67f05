"""Frequency grids and their coarsening hierarchy, spatial mesh, angular quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyGrid:
    """Photon-frequency group edges in keV, ascending, edges[0] >= 0."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        object.__setattr__(self, "edges", edges)
        if edges.ndim != 1 or edges.size < 2:
            raise GridError("frequency grid needs at least two edges")
        if edges[0] < 0 or np.any(np.diff(edges) <= 0):
            raise GridError("frequency edges must be nonnegative and strictly increasing")

    @property
    def n_groups(self) -> int:
        return self.edges.size - 1


def build_fc_frequency_grid(n_groups: int) -> FrequencyGrid:
    """Standard benchmark grid: [0, 1e-4], n-2 log-spaced groups to 10 keV,
    and a closing group up to 1e7 keV."""
    if n_groups < 3:
        raise GridError("benchmark frequency grid needs at least 3 groups")
    interior = np.logspace(-4.0, 1.0, n_groups - 1)
    return FrequencyGrid(np.concatenate(([0.0], interior, [1e7])))


def _run_starts(n_fine: int, n_coarse: int) -> np.ndarray:
    """Start indices of contiguous runs merging n_fine intervals into
    n_coarse; remainder intervals are absorbed at the high-frequency end."""
    base, rem = divmod(n_fine, n_coarse)
    lengths = np.full(n_coarse, base, dtype=int)
    if rem:
        lengths[n_coarse - rem:] += 1
    return np.concatenate(([0], np.cumsum(lengths)))


@dataclass(frozen=True)
class FrequencyGridHierarchy:
    """Nested frequency grids; level index 0 is the fine grid, the last
    level is the single-interval grey grid.

    starts_prev[L] gives, for each interval of level L, the run of intervals
    of level L-1 it merges (as cumulative start indices); starts_fine[L] is
    the same against level 0.
    """

    fine: FrequencyGrid
    counts: tuple
    starts_prev: tuple     # starts_prev[0] is None
    starts_fine: tuple     # starts_fine[0] is identity
    level_edges: tuple     # frequency edges per level

    @property
    def n_levels(self) -> int:
        return len(self.counts)

    def n_groups(self, level: int) -> int:
        return self.counts[level]

    def restrict(self, q: np.ndarray, level: int, axis: int = 0) -> np.ndarray:
        """Sum a fine-grid (level 0) group-indexed array onto the given level."""
        if level == 0:
            return np.asarray(q)
        starts = self.starts_fine[level]
        return np.add.reduceat(np.asarray(q), starts[:-1], axis=axis)

    def restrict_between(self, q: np.ndarray, level_from: int, level_to: int,
                         axis: int = 0) -> np.ndarray:
        """Sum a level_from-indexed array onto a coarser level_to."""
        if level_to == level_from:
            return np.asarray(q)
        if level_to < level_from:
            raise GridError("restriction must go to a coarser level")
        out = np.asarray(q)
        for L in range(level_from + 1, level_to + 1):
            out = np.add.reduceat(out, self.starts_prev[L][:-1], axis=axis)
        return out


def build_hierarchy(fine: FrequencyGrid, counts) -> FrequencyGridHierarchy:
    """Build the multigrid-in-frequency hierarchy for the given group counts.

    counts must start at the fine group number, decrease strictly, and end
    at 1 (the grey grid).
    """
    counts = tuple(int(n) for n in counts)
    if counts[0] != fine.n_groups:
        raise GridError("hierarchy must start at the fine grid group count")
    if counts[-1] != 1:
        raise GridError("hierarchy must end at a single grey interval")
    if any(b >= a for a, b in zip(counts, counts[1:])):
        raise GridError("hierarchy group counts must be strictly decreasing")
    starts_prev = [None]
    starts_fine = [np.arange(counts[0] + 1)]
    level_edges = [fine.edges]
    for L in range(1, len(counts)):
        sp = _run_starts(counts[L - 1], counts[L])
        starts_prev.append(sp)
        starts_fine.append(starts_fine[L - 1][sp])
        level_edges.append(fine.edges[starts_fine[L]])
    return FrequencyGridHierarchy(fine=fine, counts=counts,
                                  starts_prev=tuple(starts_prev),
                                  starts_fine=tuple(starts_fine),
                                  level_edges=tuple(level_edges))


@dataclass(frozen=True)
class SpatialMesh:
    """1D slab mesh.  faces has n_x+1 entries; dual_dx[f] is the width of
    the first-moment control volume of face f (half cells at the boundaries)."""

    faces: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=float)
        object.__setattr__(self, "faces", faces)
        if faces.ndim != 1 or faces.size < 2 or np.any(np.diff(faces) <= 0):
            raise GridError("mesh faces must be strictly increasing")

    @property
    def n_cells(self) -> int:
        return self.faces.size - 1

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[:-1] + self.faces[1:])

    @property
    def dual_dx(self) -> np.ndarray:
        dx = self.dx
        out = np.empty(dx.size + 1)
        out[0] = 0.5 * dx[0]
        out[-1] = 0.5 * dx[-1]
        out[1:-1] = 0.5 * (dx[:-1] + dx[1:])
        return out

    @classmethod
    def uniform(cls, n_cells: int, length: float) -> "SpatialMesh":
        return cls(np.linspace(0.0, length, n_cells + 1))


@dataclass(frozen=True)
class AngularQuadrature:
    """Direction cosines and weights, ascending in mu, weights summing to 2."""

    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "w", w)
        if mu.shape != w.shape or mu.ndim != 1:
            raise GridError("quadrature nodes and weights must align")
        if np.any(np.diff(mu) <= 0) or np.any(mu == 0.0):
            raise GridError("direction cosines must be ascending and nonzero")

    @property
    def n_dirs(self) -> int:
        return self.mu.size

    @property
    def positive(self) -> np.ndarray:
        return self.mu > 0


def double_gauss_legendre(n_per_half: int) -> AngularQuadrature:
    """Gauss-Legendre rule applied separately on each half range of mu."""
    if n_per_half < 1:
        raise GridError("need at least one direction per half range")
    x, w = leggauss(n_per_half)
    mu_pos = 0.5 * (x + 1.0)
    w_pos = 0.5 * w
    mu = np.concatenate((-mu_pos[::-1], mu_pos))
    wgt = np.concatenate((w_pos[::-1], w_pos))
    return AngularQuadrature(mu=mu, w=wgt)
