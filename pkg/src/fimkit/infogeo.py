"""Divergences between probability mass functions and finite-difference Fisher information.

All logarithms are natural, so divergences are in nats.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np

PMF_TOL = 1e-9


def check_pmf(p, name: str = "p") -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PMF_TOL:
        raise ValueError(f"{name} sums to {p.sum():.12g}, not 1")
    return p


def _pair(p, q):
    p, q = check_pmf(p, "p"), check_pmf(q, "q")
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.size} vs {q.size}")
    return p, q


def kl(p, q) -> float:
    """KL(p || q); terms with p_i = 0 contribute nothing."""
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] == 0):
        i = np.flatnonzero(support & (q == 0))[0]
        raise ValueError(f"p is not absolutely continuous w.r.t. q (q[{i}] = 0 < p[{i}])")
    ps, qs = p[support], q[support]
    return float(max(np.sum(ps * np.log(ps / qs)), 0.0))


def _js_terms(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    # p log(2p/(p+q)) + q log(2q/(p+q)) written with log1p so that the
    # O(eps^2) value of nearby pmfs is not swamped by rounding
    s = p + q
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(s > 0, (p - q) / np.where(s > 0, s, 1.0), 0.0)
        a = np.where(p > 0, p * np.log1p(r), 0.0)
        b = np.where(q > 0, q * np.log1p(-r), 0.0)
    return a + b


def js(p, q) -> float:
    """Jensen-Shannon divergence: 1/2 KL(p||m) + 1/2 KL(q||m) with m the midpoint."""
    p, q = _pair(p, q)
    return float(min(max(0.5 * np.sum(_js_terms(p, q)), 0.0), np.log(2.0)))


def jsd(p, q) -> float:
    """Jensen-Shannon distance, the square root of :func:`js` (a metric)."""
    return float(np.sqrt(js(p, q)))


def potential_distance(u_i, u_j) -> float:
    u_i, u_j = np.asarray(u_i, dtype=float), np.asarray(u_j, dtype=float)
    if u_i.shape != u_j.shape:
        raise ValueError("potential rows differ in length")
    return float(np.sqrt(np.sum((u_i - u_j) ** 2)))


def jsd_matrix(Pt: np.ndarray) -> np.ndarray:
    """Pairwise Jensen-Shannon distances between the rows of a row-stochastic matrix."""
    Pt = np.asarray(Pt, dtype=float)
    n = Pt.shape[0]
    for i in range(n):
        check_pmf(Pt[i], f"row {i}")
    D = np.zeros((n, n))
    for i in range(n - 1):
        terms = _js_terms(Pt[i][None, :], Pt[i + 1:])
        vals = np.clip(0.5 * terms.sum(axis=1), 0.0, np.log(2.0))
        D[i, i + 1:] = np.sqrt(vals)
    return D + D.T


def crooks_ratio(p, dp, eps_scale: float) -> float:
    """JS(p, p + eps*dp) divided by its infinitesimal form 1/8 sum (eps*dp)^2 / p.

    Tends to 1 as ``eps_scale`` shrinks; a zero perturbation gives 1 by convention.
    """
    p = check_pmf(p)
    dp = np.asarray(dp, dtype=float)
    if dp.shape != p.shape:
        raise ValueError("perturbation length differs from p")
    if np.any(p <= 0):
        raise ValueError("p must be strictly positive")
    if abs(dp.sum()) > 1e-12 * max(1.0, np.abs(dp).sum()):
        raise ValueError("perturbation must sum to zero")
    step = eps_scale * dp
    q = p + step
    if np.any(q < 0):
        raise ValueError("perturbed vector leaves the simplex")
    denom = np.sum(step ** 2 / p) / 8.0
    if denom == 0:
        return 1.0
    return float(0.5 * np.sum(_js_terms(p, q)) / denom)


@dataclass
class DiscreteFamily:
    """Parametric family theta -> pmf over a fixed finite outcome set."""

    eval: Callable[[np.ndarray], np.ndarray]
    domain: Sequence[Tuple[float, float]]

    def __call__(self, theta) -> np.ndarray:
        return np.asarray(self.eval(np.asarray(theta, dtype=float)), dtype=float)

    def contains(self, theta) -> bool:
        return all(lo < th < hi for th, (lo, hi) in zip(theta, self.domain))


def discrete_family_fim(fam: DiscreteFamily, theta, h) -> np.ndarray:
    """Fisher information of ``fam`` at ``theta`` from central differences of log p."""
    theta = np.asarray(theta, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), theta.shape)
    m = theta.size
    if len(fam.domain) != m:
        raise ValueError("domain and parameter vector differ in length")
    p = fam(theta)
    if np.any(p <= 0):
        raise ValueError(f"nonpositive probability at theta={theta.tolist()}")
    scores = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = h[i]
        hi_, lo_ = theta + e, theta - e
        if not (fam.contains(hi_) and fam.contains(lo_)):
            raise ValueError(f"theta +/- h leaves the domain in parameter {i}")
        p_hi, p_lo = fam(hi_), fam(lo_)
        if np.any(p_hi <= 0) or np.any(p_lo <= 0):
            raise ValueError(f"nonpositive probability near theta along parameter {i}")
        scores.append((np.log(p_hi) - np.log(p_lo)) / (2.0 * h[i]))
    S = np.asarray(scores)
    I = (S * p) @ S.T
    return 0.5 * (I + I.T)


def gaussian_family(grid=None) -> DiscreteFamily:
    """N(mu, sigma) discretized on ``grid`` and renormalized; theta = (mu, sigma)."""
    x = np.arange(-12.0, 12.0 + 1e-9, 0.004) if grid is None else np.asarray(grid, dtype=float)

    def ev(theta):
        mu, sigma = theta
        logw = -0.5 * ((x - mu) / sigma) ** 2
        w = np.exp(logw - logw.max())
        return w / w.sum()

    return DiscreteFamily(ev, [(-np.inf, np.inf), (0.0, np.inf)])
