"""Metric MDS: classical (Torgerson) initialization refined by SMACOF."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .infogeo import jsd_matrix


@dataclass
class EmbeddingTargets:
    Y: np.ndarray
    stress: float
    iterations: int
    stress_history: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.Y.shape[1]


def _check_dissimilarity(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T, atol=1e-12) or np.any(np.diag(D) != 0):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    return D


def classical_mds(D: np.ndarray, k: int) -> np.ndarray:
    D = _check_dissimilarity(D)
    n = D.shape[0]
    if not 1 <= k <= max(n - 1, 1):
        raise ValueError(f"k={k} out of range for {n} points")
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (D ** 2) @ J
    lam, V = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(lam)[::-1][:k]
    lam = np.clip(lam[order], 0.0, None)
    return V[:, order] * np.sqrt(lam)


def raw_stress(D: np.ndarray, Y: np.ndarray) -> float:
    iu = np.triu_indices(D.shape[0], 1)
    diff = Y[:, None, :] - Y[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return float(np.sum((D[iu] - dist[iu]) ** 2))


def _guttman(D: np.ndarray, Y: np.ndarray) -> np.ndarray:
    n = D.shape[0]
    diff = Y[:, None, :] - Y[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist > 0, D / dist, 0.0)
    B = -ratio
    B[np.diag_indices(n)] = 0.0
    B[np.diag_indices(n)] = -B.sum(axis=1)
    return B @ Y / n


def smacof(
    D: np.ndarray,
    k: int,
    max_iters: int = 300,
    tol: float = 1e-6,
    init: Optional[np.ndarray] = None,
) -> EmbeddingTargets:
    """Stress majorization with unit weights.

    Stops when the relative stress decrease of an iteration falls below ``tol``
    or after ``max_iters`` Guttman transforms.
    """
    D = _check_dissimilarity(D)
    Y = classical_mds(D, k) if init is None else np.array(init, dtype=float)
    if Y.shape != (D.shape[0], k):
        raise ValueError(f"init has shape {Y.shape}, expected {(D.shape[0], k)}")
    Y = Y - Y.mean(axis=0)
    stress = raw_stress(D, Y)
    history = [stress]
    it = 0
    while it < max_iters:
        Y_new = _guttman(D, Y)
        new = raw_stress(D, Y_new)
        it += 1
        history.append(new)
        improvement = (stress - new) / stress if stress > 0 else 0.0
        Y, stress = Y_new, new
        if improvement < tol:
            break
    Y = Y - Y.mean(axis=0)
    return EmbeddingTargets(Y, stress, it, history)


def phate_jsd_targets(Pt: np.ndarray, k: int = 20, max_iters: int = 300, tol: float = 1e-6) -> EmbeddingTargets:
    """Embed the rows of ``Pt`` so Euclidean distances approximate their JS distances."""
    D = jsd_matrix(Pt)
    k_eff = min(k, max(D.shape[0] - 1, 1))
    res = smacof(D, k_eff, max_iters, tol, init=classical_mds(D, k_eff))
    if k_eff < k:
        res.Y = np.hstack([res.Y, np.zeros((res.Y.shape[0], k - k_eff))])
    return res
