"""Pointwise Fisher information of a simplex network and its scalar summaries."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .nn import Mlp, _as_batch, _forward_cache, jacobian_input

FIM_MODES = ("standard", "literal")
PROB_FLOOR = 1e-12


@dataclass
class FimTensor:
    g: np.ndarray
    point: np.ndarray
    mode: str = "standard"


def _matrix(g) -> np.ndarray:
    return np.asarray(g.g if isinstance(g, FimTensor) else g, dtype=float)


def fim_batch(mlp: Mlp, X, mode: str = "standard") -> np.ndarray:
    """FIM at every row of ``X``: (n, d, d).

    ``standard`` is J^T diag(1/p) J, the Fisher information of x -> phi(x);
    ``literal`` weights by p instead, J^T diag(p) J.
    """
    if mlp.output_mode != "simplex":
        raise ValueError("FIM needs a simplex-output network")
    if mode not in FIM_MODES:
        raise ValueError(f"unknown FIM mode {mode!r}")
    X, _ = _as_batch(mlp, X)
    p = _forward_cache(mlp, X).out
    J = jacobian_input(mlp, X)
    w = 1.0 / np.maximum(p, PROB_FLOOR) if mode == "standard" else p
    G = np.einsum("nki,nk,nkj->nij", J, w, J)
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def fim_at(mlp: Mlp, x, mode: str = "standard") -> FimTensor:
    x = np.asarray(x, dtype=float)
    return FimTensor(fim_batch(mlp, x[None, :], mode)[0], x.copy(), mode)


def volume_element(g) -> float:
    """sqrt|det g| from the eigenvalues of the symmetric matrix g."""
    G = _matrix(g)
    lam = np.abs(np.linalg.eigvalsh(0.5 * (G + G.T)))
    if np.any(lam == 0):
        return 0.0
    return float(np.exp(0.5 * np.sum(np.log(lam))))


def trace(g) -> float:
    return float(np.trace(_matrix(g)))


class JacobiNonConvergence(RuntimeError):
    pass


def jacobi_eigh(A, tol: float = 1e-10, max_sweeps: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Sweeps over all (p, q) pairs with rotations that annihilate A[p, q] until the
    off-diagonal Frobenius norm is below ``tol`` times the matrix norm. Returns
    eigenvalues in descending order and the matching orthonormal eigenvectors
    as columns.
    """
    A = np.array(_matrix(A), dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0 or n == 1:
        return np.diag(A).copy(), V
    target = tol * scale

    mask = ~np.eye(n, dtype=bool)

    def off(M):
        return np.sqrt(np.sum(M[mask] ** 2))

    for _ in range(max_sweeps):
        if off(A) < target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        residual = off(A)
        if residual >= target:
            raise JacobiNonConvergence(
                f"Jacobi did not converge in {max_sweeps} sweeps; off-diagonal norm {residual:.3e}"
            )
    w = np.diag(A).copy()
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def eigenspectrum(g) -> np.ndarray:
    """Eigenvalues of g, descending (cyclic Jacobi)."""
    return jacobi_eigh(g)[0]


@dataclass
class FimField:
    points: np.ndarray
    volume: np.ndarray
    trace: np.ndarray
    eigenvalues: np.ndarray

    def __len__(self) -> int:
        return self.points.shape[0]

    def table(self) -> np.ndarray:
        idx = np.arange(len(self), dtype=float)[:, None]
        return np.hstack([idx, self.points, self.volume[:, None], self.trace[:, None], self.eigenvalues])

    def header(self):
        d = self.points.shape[1]
        return (["index"] + [f"x{j}" for j in range(d)] + ["volume", "trace"]
                + [f"eig{j}" for j in range(self.eigenvalues.shape[1])])


def fim_field(mlp: Mlp, pc, mode: str = "standard") -> FimField:
    X = pc.points if hasattr(pc, "points") else np.asarray(pc, dtype=float)
    G = fim_batch(mlp, X, mode)
    vol = np.array([volume_element(g) for g in G])
    tr = np.trace(G, axis1=1, axis2=2).copy()
    eig = np.array([eigenspectrum(g) for g in G])
    return FimField(X.copy(), vol, tr, eig)
