import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pmf(rng, k, floor=0.0):
    p = rng.random(k) + floor
    return p / p.sum()


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.line(line)


def _kink_pattern(mlp, x):
    from fimkit.nn import _forward_cache
    pre = _forward_cache(mlp, np.asarray(x, dtype=float)[None, :]).pre[:-1]
    return [z > 0 for z in pre]


def fd_jacobian(mlp, x, h=1e-5):
    """Central-difference Jacobian of ``forward``; the step shrinks in any direction
    where the stencil would cross an activation kink."""
    from fimkit.nn import forward
    x = np.asarray(x, dtype=float)
    base = _kink_pattern(mlp, x)
    cols = []
    for e in np.eye(x.size):
        step = h
        while step > 1e-12 and not all(
                np.array_equal(a, b) and np.array_equal(a, c)
                for a, b, c in zip(base, _kink_pattern(mlp, x + step * e), _kink_pattern(mlp, x - step * e))):
            step /= 2
        cols.append((forward(mlp, x + step * e) - forward(mlp, x - step * e)) / (2 * step))
    return np.stack(cols, axis=1)
