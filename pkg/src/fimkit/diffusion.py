"""Affinity kernels, anisotropic normalization and the Markov diffusion operator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import PointCloud

KERNEL_KINDS = ("fixed-gaussian", "adaptive-gaussian", "alpha-decay")


@dataclass(frozen=True)
class KernelConfig:
    kind: str = "adaptive-gaussian"
    sigma: Optional[float] = None
    knn: Optional[int] = None
    beta: float = 2.0
    anisotropy: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        if self.kind == "fixed-gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("fixed-gaussian kernel needs sigma > 0")
        else:
            if self.knn is None or self.knn < 1:
                raise ValueError(f"{self.kind} kernel needs knn >= 1")
            if not self.beta > 0:
                raise ValueError("beta must be positive")
        if not 0.0 <= self.anisotropy <= 1.0:
            raise ValueError("anisotropy must lie in [0, 1]")


@dataclass
class DiffusionOperator:
    P: np.ndarray
    degree: np.ndarray
    config: Optional[KernelConfig] = None

    @property
    def n(self) -> int:
        return self.P.shape[0]


@dataclass
class PotentialMatrix:
    U: np.ndarray
    t: float
    floor_eps: float


def pairwise_distances(pc) -> np.ndarray:
    """Euclidean distance matrix of the rows of ``pc`` (a PointCloud or an array)."""
    X = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=float)
    sq = np.einsum("ij,ij->i", X, X)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(D2, 0.0, out=D2)
    D = np.sqrt(D2)
    # exact symmetry and zero diagonal regardless of rounding in the Gram trick
    D = np.triu(D, 1)
    return D + D.T


def knn_bandwidths(D: np.ndarray, knn: int) -> np.ndarray:
    """Distance from each point to its ``knn``-th nearest neighbour, self excluded."""
    n = D.shape[0]
    if knn > n - 1:
        raise ValueError(f"knn={knn} needs at least {knn + 1} points, got {n}")
    off = D[~np.eye(n, dtype=bool)].reshape(n, n - 1)
    return np.partition(off, knn - 1, axis=1)[:, knn - 1]


def build_kernel(D: np.ndarray, config: KernelConfig) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if config.kind == "fixed-gaussian":
        return np.exp(-(D ** 2) / config.sigma)
    sig = knn_bandwidths(D, config.knn)
    bad = np.flatnonzero(sig <= 0)
    if bad.size:
        raise ValueError(
            f"zero adaptive bandwidth at point {bad[0]}: duplicate points up to neighbour {config.knn}"
        )
    beta = 2.0 if config.kind == "adaptive-gaussian" else config.beta
    A = 0.5 * np.exp(-((D / sig[:, None]) ** beta)) + 0.5 * np.exp(-((D / sig[None, :]) ** beta))
    return A


def anisotropic_normalize(A: np.ndarray, anisotropy: float) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if anisotropy == 0:
        return A.copy()
    q = A.sum(axis=1) ** anisotropy
    return A / np.outer(q, q)


def row_normalize(K: np.ndarray, config: Optional[KernelConfig] = None) -> DiffusionOperator:
    K = np.asarray(K, dtype=float)
    deg = K.sum(axis=1)
    bad = np.flatnonzero(~(deg > 0))
    if bad.size:
        raise ValueError(f"row {bad[0]} of the kernel has zero sum")
    return DiffusionOperator(K / deg[:, None], deg, config)


def diffuse(pc, config: KernelConfig) -> DiffusionOperator:
    """Distances -> kernel -> anisotropic normalization -> row normalization."""
    D = pairwise_distances(pc)
    A = build_kernel(D, config)
    K = anisotropic_normalize(A, config.anisotropy)
    return row_normalize(K, config)


def _spectral_power(op: DiffusionOperator, t: float) -> np.ndarray:
    # P = Dg^-1 K with K symmetric, so S = Dg^1/2 P Dg^-1/2 is symmetric and shares P's spectrum
    r = np.sqrt(op.degree)
    S = r[:, None] * op.P / r[None, :]
    S = 0.5 * (S + S.T)
    lam, V = np.linalg.eigh(S)
    lam = np.clip(lam, 0.0, None) ** t
    return ((V * lam) @ V.T) / r[:, None] * r[None, :]


def matrix_power(op: DiffusionOperator, t: float, method: str = "auto") -> np.ndarray:
    """P^t. Integer ``t`` multiplies out exactly unless ``method="spectral"``.

    Fractional powers go through the symmetric conjugate of P with negative
    eigenvalues clamped to zero; rows are renormalized afterwards.
    """
    if not t > 0:
        raise ValueError(f"diffusion time must be positive, got {t}")
    if method not in ("auto", "spectral"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and float(t).is_integer():
        return np.linalg.matrix_power(op.P, int(t))
    Pt = _spectral_power(op, t)
    return Pt / Pt.sum(axis=1, keepdims=True)


def potential(op: DiffusionOperator, t: float, floor_eps: float = 1e-7) -> PotentialMatrix:
    if not 0 < floor_eps < 1:
        raise ValueError("floor_eps must lie in (0, 1)")
    Pt = matrix_power(op, t)
    return PotentialMatrix(np.log(np.maximum(Pt, floor_eps)), t, floor_eps)


# CSV convention for matrices: row-major, comma separated, %.17e (round-trips float64)
MATRIX_FMT = "%.17e"


def save_matrix(M, path, header=None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    hdr = "" if header is None else ",".join(header)
    np.savetxt(path, M, fmt=MATRIX_FMT, delimiter=",", header=hdr, comments="")


def load_matrix(path, has_header: bool = False) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=int(has_header), ndmin=2))
