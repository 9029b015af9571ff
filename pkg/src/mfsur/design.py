"""Input-space utilities: grids, candidate sampling, nested initial designs.

The nested design keeps each higher-fidelity point set an exact subset of the
next lower-fidelity one: the largest level is a best-of-K Latin hypercube
(K scored by maximin distance), each smaller level is a greedy maximin subset
of the level below (Kennard-Stone style farthest-point selection).
"""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist, pdist

Bounds = tuple[tuple[float, float], tuple[float, float]]

DOMAIN_BOUNDS: Bounds = ((0.0, 30.0), (0.0, 1.0))


def grid_centers(bounds: Bounds, shape: tuple[int, int]):
    """Cell-center grid over the box: axis arrays and raveled (N, 2) nodes.

    Cell centers with uniform weights integrate the uniform distribution on
    the box exactly at every resolution, so the same nodes serve both the
    quadrature measure and the Monte-Carlo reference map.
    """
    (alo, ahi), (blo, bhi) = bounds
    na, nb = shape
    ax = alo + (np.arange(na) + 0.5) * (ahi - alo) / na
    bx = blo + (np.arange(nb) + 0.5) * (bhi - blo) / nb
    aa, bb = np.meshgrid(ax, bx, indexing="ij")
    return ax, bx, np.column_stack([aa.ravel(), bb.ravel()])


def grid_endpoints(bounds: Bounds, shape: tuple[int, int]):
    """Endpoint-inclusive grid (covers the full box for interpolation)."""
    (alo, ahi), (blo, bhi) = bounds
    na, nb = shape
    ax = np.linspace(alo, ahi, na)
    bx = np.linspace(blo, bhi, nb)
    aa, bb = np.meshgrid(ax, bx, indexing="ij")
    return ax, bx, np.column_stack([aa.ravel(), bb.ravel()])


def normalize(points: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Map box points to the unit square (distances are computed there)."""
    lo = np.array([bounds[0][0], bounds[1][0]])
    hi = np.array([bounds[0][1], bounds[1][1]])
    span = np.where(hi > lo, hi - lo, 1.0)
    return (np.asarray(points, dtype=np.float64) - lo) / span


def sample_candidates(count: int, bounds: Bounds, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. draws from the uniform input distribution on the box."""
    if count < 1:
        raise ValueError("count must be >= 1")
    (alo, ahi), (blo, bhi) = bounds
    u = rng.random((count, 2))
    return np.column_stack([alo + u[:, 0] * (ahi - alo), blo + u[:, 1] * (bhi - blo)])


def maximin_distance(points: np.ndarray, bounds: Bounds) -> float:
    """Smallest pairwise distance in normalized coordinates."""
    pts = normalize(points, bounds)
    if len(pts) < 2:
        return np.inf
    return float(pdist(pts).min())


def _latin_hypercube(count: int, bounds: Bounds, rng: np.random.Generator,
                     tries: int = 24) -> np.ndarray:
    best, best_score = None, -np.inf
    for _ in range(tries):
        # one stratum per point and axis, uniform within the stratum
        unit = np.column_stack([
            (rng.permutation(count) + rng.random(count)) / count for _ in range(2)
        ])
        score = pdist(unit).min() if count > 1 else np.inf
        if score > best_score:
            best, best_score = unit, score
    (alo, ahi), (blo, bhi) = bounds
    return np.column_stack([alo + best[:, 0] * (ahi - alo),
                            blo + best[:, 1] * (bhi - blo)])


def _greedy_maximin_subset(parent: np.ndarray, size: int, bounds: Bounds) -> np.ndarray:
    """Indices of a well-spread subset, deterministic given parent order."""
    pts = normalize(parent, bounds)
    n = len(pts)
    if size >= n:
        return np.arange(n)
    if size == 1:
        center = np.full((1, 2), 0.5)
        return np.array([int(np.argmin(cdist(pts, center)[:, 0]))])
    d = cdist(pts, pts)
    # seed with the farthest pair, then farthest-point traversal
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    chosen = [min(i, j), max(i, j)]
    mind = np.minimum(d[chosen[0]], d[chosen[1]])
    while len(chosen) < size:
        mind[chosen] = -1.0
        nxt = int(np.argmax(mind))
        chosen.append(nxt)
        mind = np.minimum(mind, d[nxt])
    return np.array(chosen)


def generate_nested_design(sizes, bounds: Bounds, rng: np.random.Generator):
    """Nested point sets, one per fidelity level, sizes nonincreasing.

    Returns a list of (n_i, 2) arrays where each set's rows are an exact
    subset of the previous set's rows.
    """
    sizes = list(sizes)
    if not sizes or any(s <= 0 for s in sizes):
        raise ValueError("sizes must be positive")
    if any(sizes[i] < sizes[i + 1] for i in range(len(sizes) - 1)):
        raise ValueError("sizes must be nonincreasing")
    levels = [_latin_hypercube(sizes[0], bounds, rng)]
    for size in sizes[1:]:
        idx = _greedy_maximin_subset(levels[-1], size, bounds)
        levels.append(levels[-1][np.sort(idx)])
    return levels
