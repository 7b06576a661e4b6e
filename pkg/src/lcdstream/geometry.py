"""Fundamental-matrix verification of putative matches.

Convention: ``x2^T F x1 = 0`` where ``x1`` are query keypoints and ``x2`` the
matched candidate keypoints, both in pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .matcher import MatchSet


class DegenerateConfigurationError(ValueError):
    pass


@dataclass
class RansacParams:
    max_iterations: int = 500
    epipolar_threshold: float = 1.0  # pixels; compared against sqrt(Sampson error)
    min_inliers: int = 20
    rng_seed: int = 0
    adaptive: bool = False
    confidence: float = 0.99

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_inliers < 8:
            raise ValueError("min_inliers must be >= 8")
        if self.epipolar_threshold <= 0:
            raise ValueError("epipolar_threshold must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass
class FundamentalMatrix:
    matrix: np.ndarray
    inlier_count: int = 0
    inliers: Optional[np.ndarray] = None  # boolean mask over the input correspondences


def _hartley(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    spread = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    scale = max(1.0, float(np.abs(pts).max()))
    if not spread > 1e-12 * scale:
        raise DegenerateConfigurationError("points are coincident")
    s = math.sqrt(2.0) / spread
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _homog(pts: np.ndarray) -> np.ndarray:
    return np.hstack([pts, np.ones((pts.shape[0], 1))])


def _design(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    """Rows of the linear system for points in homogeneous normalised form (..., N, 3)."""
    return (p2[..., :, :, None] * p1[..., :, None, :]).reshape(p1.shape[:-1] + (9,))


def _canonical(F: np.ndarray) -> np.ndarray:
    """Unit Frobenius norm, first entry that is clearly nonzero made positive."""
    F = F / np.linalg.norm(F, axis=(-2, -1), keepdims=True)
    flat = F.reshape(F.shape[:-2] + (9,))
    first = np.argmax(np.abs(flat) > 1e-12, axis=-1)
    sign = np.sign(np.take_along_axis(flat, first[..., None], axis=-1))[..., None]
    sign = np.where(sign == 0, 1.0, sign)
    return F * sign


def _rank2(F: np.ndarray) -> np.ndarray:
    U, S, Vt = np.linalg.svd(F)
    S = S.copy()
    S[..., 2] = 0.0
    return U @ (S[..., :, None] * Vt)


def eight_point(x1: np.ndarray, x2: np.ndarray) -> FundamentalMatrix:
    """Normalised 8-point estimate from N >= 8 correspondences."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 2 or x1.shape[1] != 2:
        raise ValueError("x1 and x2 must both be (N, 2)")
    if x1.shape[0] < 8:
        raise DegenerateConfigurationError("need at least 8 correspondences")
    T1, T2 = _hartley(x1), _hartley(x2)
    p1 = _homog(x1) @ T1.T
    p2 = _homog(x2) @ T2.T
    A = _design(p1, p2)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    if s[7] <= 1e-10 * s[0]:
        raise DegenerateConfigurationError("design matrix is rank deficient")
    Fn = _rank2(Vt[-1].reshape(3, 3))
    F = _canonical(T2.T @ Fn @ T1)
    return FundamentalMatrix(F)


def sampson_error(F: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """First-order epipolar error in squared pixels for each correspondence.

    ``F`` may be a single (3, 3) matrix or a stack (H, 3, 3); the result has
    shape (N,) or (H, N). Correspondences with a zero gradient get ``inf``.
    """
    F = np.asarray(F, dtype=np.float64)
    X1 = _homog(np.atleast_2d(np.asarray(x1, dtype=np.float64)))
    X2 = _homog(np.atleast_2d(np.asarray(x2, dtype=np.float64)))
    lead = F.shape[:-2]
    # one matrix product for the whole stack: (H*3, 3) @ (3, N)
    Fx1 = (F.reshape(-1, 3) @ X1.T).reshape(lead + (3, -1))
    Ftx2 = (np.swapaxes(F, -1, -2).reshape(-1, 3) @ X2.T).reshape(lead + (3, -1))
    num = (Fx1 * X2.T).sum(axis=-2) ** 2
    den = Fx1[..., 0, :] ** 2 + Fx1[..., 1, :] ** 2 + Ftx2[..., 0, :] ** 2 + Ftx2[..., 1, :] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    return err


def _hypotheses(x1, x2, samples, T1, T2):
    """Fundamental matrices (in pixels) for each 8-point sample; invalid ones flagged."""
    p1 = _homog(x1) @ T1.T
    p2 = _homog(x2) @ T2.T
    f, valid = _kernels.epipolar_null_vectors(p1, p2, np.ascontiguousarray(samples), 1e-10)
    f[~valid] = np.eye(3).ravel()  # placeholder, never selected
    Fn = _rank2(f.reshape(-1, 3, 3))
    F = T2.T @ Fn @ T1
    return _canonical(F), valid


def _draw_samples(rng: np.random.Generator, n_iter: int, n: int) -> np.ndarray:
    keys = rng.random((n_iter, n))
    return np.argpartition(keys, 7, axis=1)[:, :8]


def _score(F, x1, x2, thr2):
    err = sampson_error(F, x1, x2)
    inl = err <= thr2
    counts = inl.sum(axis=-1)
    sums = np.where(inl, err, 0.0).sum(axis=-1)
    return inl, counts, sums


def ransac_fundamental(x1: np.ndarray, x2: np.ndarray, params: RansacParams) -> Optional[FundamentalMatrix]:
    """Seeded RANSAC over 8-point samples.

    Hypotheses are generated in a fixed order and scored together; the model
    with the most inliers wins, ties going to the lower summed Sampson error
    and then to the earlier hypothesis. The winner is refit on its inliers.
    Returns ``None`` when no model reaches ``params.min_inliers``.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    n = x1.shape[0]
    if n < 8 or n < params.min_inliers:
        return None
    try:
        T1, T2 = _hartley(x1), _hartley(x2)
    except DegenerateConfigurationError:
        return None
    thr2 = params.epipolar_threshold ** 2
    rng = np.random.default_rng(params.rng_seed)
    samples = _draw_samples(rng, params.max_iterations, n)

    chunk = 50 if params.adaptive else params.max_iterations
    best = None  # (count, -sum, -index) ordering handled explicitly
    done = 0
    while done < params.max_iterations:
        block = samples[done : done + chunk]
        F, valid = _hypotheses(x1, x2, block, T1, T2)
        _, counts, sums = _score(F, x1, x2, thr2)
        counts = np.where(valid, counts, -1)
        for j in range(block.shape[0]):
            if counts[j] < 0:
                continue
            cand = (int(counts[j]), float(sums[j]))
            if best is None or cand[0] > best[0] or (cand[0] == best[0] and cand[1] < best[1]):
                best = (cand[0], cand[1], F[j])
        done += block.shape[0]
        if params.adaptive and best is not None and best[0] > 0:
            w = best[0] / n
            denom = math.log(max(1e-300, 1.0 - w ** 8))
            needed = math.log(1.0 - params.confidence) / denom if denom < 0 else 0.0
            if done >= needed:
                break

    if best is None or best[0] < 8:
        return None
    F_best = best[2]
    inl = sampson_error(F_best, x1, x2) <= thr2
    count = int(inl.sum())
    try:
        refit = eight_point(x1[inl], x2[inl]).matrix
        inl_refit = sampson_error(refit, x1, x2) <= thr2
        if int(inl_refit.sum()) >= count:
            F_best, inl, count = refit, inl_refit, int(inl_refit.sum())
    except DegenerateConfigurationError:
        pass
    if count < params.min_inliers:
        return None
    return FundamentalMatrix(F_best, count, inl)


def ransac_verify(
    matches: MatchSet, query_keypoints: np.ndarray, cand_keypoints: np.ndarray, params: RansacParams
) -> Optional[FundamentalMatrix]:
    """Geometric check of a match set; ``None`` means the candidate is rejected."""
    if len(matches) < 8:
        return None
    x1 = np.asarray(query_keypoints, dtype=np.float64)[matches.query_indices]
    x2 = np.asarray(cand_keypoints, dtype=np.float64)[matches.cand_indices]
    return ransac_fundamental(x1, x2, params)


def fundamental_from_cameras(K1, R1, t1, K2, R2, t2) -> np.ndarray:
    """F for two pinhole cameras ``x = K (R X + t)``, satisfying ``x2^T F x1 = 0``."""
    R = R2 @ R1.T
    t = t2 - R @ t1
    tx = np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])
    E = tx @ R
    F = np.linalg.inv(K2).T @ E @ np.linalg.inv(K1)
    return _canonical(F)
