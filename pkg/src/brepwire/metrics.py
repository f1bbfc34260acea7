"""Distribution and reconstruction metrics over sampled point sets."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValueError(f"expected a nonempty Mx3 point set, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("point set contains non-finite coordinates")
    return pts


def chamfer(a, b) -> float:
    """Symmetric mean of squared nearest-neighbor distances."""
    pa, pb = _as_points(a), _as_points(b)
    d_ab = cKDTree(pb).query(pa)[0]
    d_ba = cKDTree(pa).query(pb)[0]
    return 0.5 * (float(np.mean(d_ab ** 2)) + float(np.mean(d_ba ** 2)))


def resample_points(points, count: int) -> np.ndarray:
    """Deterministic, order-invariant resampling: lexicographic sort + stride."""
    pts = _as_points(points)
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    idx = (np.arange(count) * len(pts)) // count
    return pts[idx]


def emd(a, b, resample_to: int | None = 256) -> float:
    """Exact assignment-problem mean distance between equal-size sets (<= 512)."""
    pa, pb = _as_points(a), _as_points(b)
    if resample_to is not None:
        pa = resample_points(pa, resample_to)
        pb = resample_points(pb, resample_to)
    if len(pa) != len(pb):
        raise ValueError(f"emd needs equal sizes, got {len(pa)} vs {len(pb)}")
    if len(pa) > 512:
        raise ValueError(f"emd limited to 512 points, got {len(pa)}")
    cost = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def fscore(a, b, tau: float) -> float:
    """Harmonic mean of precision and recall at distance threshold tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    pa, pb = _as_points(a), _as_points(b)
    precision = float(np.mean(cKDTree(pb).query(pa)[0] <= tau))
    recall = float(np.mean(cKDTree(pa).query(pb)[0] <= tau))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _occupancy(point_sets, resolution: int) -> np.ndarray:
    pooled = np.concatenate([_as_points(p) for p in point_sets], axis=0)
    pooled = np.clip(pooled, -1.0, 1.0 - 1e-9)
    cells = ((pooled + 1.0) / 2.0 * resolution).astype(int)
    hist = np.zeros(resolution ** 3)
    flat = (cells[:, 0] * resolution + cells[:, 1]) * resolution + cells[:, 2]
    np.add.at(hist, flat, 1.0)
    return hist / hist.sum()


def jsd_voxel(sets_a, sets_b, resolution: int = 32) -> float:
    """Jensen-Shannon divergence (base 2) between pooled voxel occupancies."""
    if not sets_a or not sets_b:
        raise ValueError("jsd needs nonempty collections")
    p = _occupancy(sets_a, resolution)
    q = _occupancy(sets_b, resolution)
    m = 0.5 * (p + q)

    def kl(x, y):
        mask = x > 0
        return float(np.sum(x[mask] * np.log2(x[mask] / y[mask])))

    return min(1.0, max(0.0, 0.5 * kl(p, m) + 0.5 * kl(q, m)))


def coverage_mmd(generated, reference, distance: str = "cd",
                 tau: float | None = None) -> tuple[float, float]:
    """(COV %, MMD) of a generated collection against a reference collection.

    COV: percentage of reference items that are the nearest reference of at
    least one generated item.  MMD: mean over reference of the minimum
    distance to any generated item.
    """
    if not generated or not reference:
        raise ValueError("coverage_mmd needs nonempty collections")
    if distance == "cd":
        fn = chamfer
    elif distance == "emd":
        fn = emd
    else:
        raise ValueError(f"unknown distance {distance!r}")
    d = np.array([[fn(g, r) for r in reference] for g in generated])
    covered = set(np.argmin(d, axis=1).tolist())
    cov = 100.0 * len(covered) / len(reference)
    mmd = float(d.min(axis=0).mean())
    return cov, mmd
