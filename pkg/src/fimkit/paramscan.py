"""Fisher information over the (diffusion time, bandwidth) parameters of a diffusion operator."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .diffusion import KernelConfig, diffuse, matrix_power
from .fim import volume_element
from .infogeo import DiscreteFamily, discrete_family_fim


@dataclass
class ParamGrid:
    t_values: np.ndarray
    sigma_values: np.ndarray
    volume: np.ndarray
    failures: list = field(default_factory=list)


def potential_pmf(pc, t: float, sigma: float) -> np.ndarray:
    """P^t of a fixed-bandwidth, density-normalized operator, flattened and divided by N.

    Every row of P^t is a pmf, so the flattened matrix over N^2 outcomes sums to 1.
    """
    if not (t > 0 and sigma > 0):
        raise ValueError("t and sigma must be positive")
    op = diffuse(pc, KernelConfig(kind="fixed-gaussian", sigma=sigma, anisotropy=1.0))
    Pt = matrix_power(op, t, method="spectral")
    return Pt.ravel() / op.n


def parameter_family(pc) -> DiscreteFamily:
    return DiscreteFamily(lambda th: potential_pmf(pc, th[0], th[1]), [(0.0, np.inf), (0.0, np.inf)])


def fim_params(pc, t: float, sigma: float, h_t: float = 1e-2, h_sigma=None) -> np.ndarray:
    """2 x 2 Fisher information of the map (t, sigma) -> potential_pmf."""
    if h_sigma is None:
        h_sigma = 1e-2 * sigma
    if not (t - h_t > 0 and sigma - h_sigma > 0):
        raise ValueError("finite-difference stencil leaves the positive quadrant")
    return discrete_family_fim(parameter_family(pc), [t, sigma], [h_t, h_sigma])


def volume_grid(
    pc,
    t_range: Tuple[float, float] = (1.0, 15.0),
    sigma_range: Tuple[float, float] = (50.0, 150.0),
    t_steps: int = 15,
    sigma_steps: int = 100,
    h_t: float = 1e-2,
    rel_h_sigma: float = 1e-2,
) -> ParamGrid:
    """sqrt|det I(t, sigma)| over a uniform grid; failing cells become NaN and are listed."""
    if min(t_range) <= 0 or min(sigma_range) <= 0:
        raise ValueError("parameter ranges must be positive")
    ts = np.linspace(*t_range, t_steps)
    ss = np.linspace(*sigma_range, sigma_steps)
    vol = np.full((t_steps, sigma_steps), np.nan)
    failures = []
    for i, t in enumerate(ts):
        for j, s in enumerate(ss):
            try:
                vol[i, j] = volume_element(fim_params(pc, t, s, h_t, rel_h_sigma * s))
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                failures.append((i, j, str(exc)))
    return ParamGrid(ts, ss, vol, failures)
