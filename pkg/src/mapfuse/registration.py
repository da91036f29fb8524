"""Rigid point-set registration: closed-form solves and trimmed ICP.

The iterative aligner minimizes the mean squared distance between
corresponded points, optionally discarding a fixed fraction of the worst
pairs each iteration for robustness against clutter and dynamic objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import Diverged, DegenerateGeometry, PreconditionError
from .geom import PoseSE3, matrix_to_quat


@dataclass
class RegistrationResult:
    transform: PoseSE3
    score: float
    iterations: int
    converged: bool
    inlier_fraction: float


def rigid_solve(source, target, weights=None) -> PoseSE3:
    """Least-squares rigid transform T with T(source) ~ target.

    Weighted Kabsch/Umeyama without scale: demean by weighted centroids,
    SVD of the weighted cross-covariance, reflection corrected.
    """
    a = np.asarray(source, dtype=float)
    b = np.asarray(target, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 3:
        raise PreconditionError("rigid_solve expects matching (N,3) arrays")
    if len(a) < 3:
        raise PreconditionError("rigid_solve needs at least 3 correspondences")
    if weights is None:
        w = np.ones(len(a))
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise PreconditionError("negative weights")
    w = w / w.sum()
    ca = w @ a
    cb = w @ b
    da = a - ca
    db = b - cb
    cov = (db * w[:, None]).T @ da
    u, s, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    if s[1] < 1e-12 * max(s[0], 1e-300):
        raise DegenerateGeometry("correspondences are collinear")
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return PoseSE3(matrix_to_quat(r), cb - r @ ca)


def trimmed_icp(
    source,
    target,
    init: PoseSE3 | None = None,
    trim_fraction: float = 0.2,
    max_iterations: int = 60,
    tolerance: float = 1e-6,
    max_correspondence: float | None = None,
) -> RegistrationResult:
    """Point-to-point ICP discarding the worst trim_fraction residual pairs.

    Correspondences come from a KD-tree over the target; the rigid update is
    the closed-form SVD solve on the kept pairs. Stops once the trimmed mean
    residual changes by less than ``tolerance`` meters. Raises Diverged when
    the cost grows five iterations in a row.
    """
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if len(src) == 0 or len(tgt) == 0:
        raise PreconditionError("empty cloud passed to trimmed_icp")
    if not 0.0 <= trim_fraction < 1.0:
        raise PreconditionError("trim_fraction must lie in [0, 1)")
    pose = init if init is not None else PoseSE3.identity()
    tree = cKDTree(tgt)
    keep = max(3, int(round(len(src) * (1.0 - trim_fraction))))

    prev_cost = np.inf
    cost = np.inf
    worse_streak = 0
    converged = False
    iterations = 0
    inlier_fraction = 0.0
    for iterations in range(1, max_iterations + 1):
        moved = pose.apply(src)
        dist, idx = tree.query(moved)
        if max_correspondence is not None:
            ok = dist <= max_correspondence
            if ok.sum() < 3:
                raise Diverged("too few correspondences inside radius")
        else:
            ok = np.ones(len(src), dtype=bool)
        order = np.argsort(dist[ok], kind="stable")
        kept = np.flatnonzero(ok)[order[: min(keep, ok.sum())]]
        pairs_src = src[kept]
        pairs_tgt = tgt[idx[kept]]
        pose = rigid_solve(pairs_src, pairs_tgt)
        res = pose.apply(pairs_src) - pairs_tgt
        cost = float(np.mean(np.sum(res * res, axis=1)))
        inlier_fraction = len(kept) / len(src)
        if cost > prev_cost + 1e-15:
            worse_streak += 1
            if worse_streak >= 5:
                raise Diverged("trimmed ICP cost grew 5 consecutive iterations")
        else:
            worse_streak = 0
        if abs(np.sqrt(max(cost, 0.0)) - np.sqrt(max(prev_cost, 0.0))) < tolerance \
                and np.isfinite(prev_cost):
            converged = True
            prev_cost = cost
            break
        prev_cost = cost

    return RegistrationResult(
        transform=pose,
        score=cost,
        iterations=iterations,
        converged=converged,
        inlier_fraction=inlier_fraction,
    )
