import sys

import numpy as np
import pytest

from roughviab.vector_fields import VectorFieldPair


def quadratic_field(rng, d, e, scale=0.5):
    """Random quadratic drift/diffusion with exact Jacobians and Hessians."""
    c = rng.standard_normal((d, e + 1)) * scale
    A = rng.standard_normal((d, e + 1, d)) * scale
    Q = rng.standard_normal((d, e + 1, d, d)) * scale
    Q = 0.5 * (Q + np.swapaxes(Q, 2, 3))

    def F(x):
        return c + A @ x + np.einsum("ajkl,k,l->aj", Q, x, x)

    def J(x):
        return A + 2.0 * np.einsum("ajkl,l->ajk", Q, x)

    H = 2.0 * Q
    return VectorFieldPair(
        d, e,
        b=lambda x: F(x)[:, 0],
        sigma=lambda x: F(x)[:, 1:],
        jac_b=lambda x: J(x)[:, 0],
        jac_sigma=lambda x: J(x)[:, 1:],
        hess_b=lambda x: H[:, 0],
        hess_sigma=lambda x: H[:, 1:],
        name="quadratic",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
