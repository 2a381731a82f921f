from dataclasses import replace

import numpy as np
import pytest

from conftest import quadratic_field
from roughviab.errors import ContractError
from roughviab.vector_fields import (
    PRESETS,
    assemble_f,
    central_jacobian,
    constant_noise,
    ito_correction,
    iterated_apply,
    linear,
    logistic,
    make_preset,
)


def scalar_field(b, s, db, ds, hb=None, hs=None):
    from roughviab.vector_fields import VectorFieldPair
    return VectorFieldPair(
        1, 1,
        b=lambda x: np.array([b(x[0])]),
        sigma=lambda x: np.array([[s(x[0])]]),
        jac_b=lambda x: np.array([[db(x[0])]]),
        jac_sigma=lambda x: np.array([[[ds(x[0])]]]),
        hess_b=None if hb is None else (lambda x: np.array([[[hb(x[0])]]])),
        hess_sigma=None if hs is None else (lambda x: np.array([[[[hs(x[0])]]]])),
    )


def test_assemble_columns():
    vf = scalar_field(lambda x: x, lambda x: 1.0, lambda x: 1.0, lambda x: 0.0)
    f = assemble_f(vf)
    np.testing.assert_array_equal(f(np.array([3.0])), [[3.0, 1.0]])
    zero = constant_noise(np.zeros(2), np.ones((2, 3)))
    assert np.all(assemble_f(zero)(np.array([5.0, -1.0]))[:, 0] == 0)


def test_logistic_drift_at_center():
    vf = logistic(3, m=1.0)
    F = assemble_f(vf)(np.full(3, 0.5))
    np.testing.assert_array_equal(F[:, 0], 0.25)
    np.testing.assert_array_equal(F[:, 1:], 0.25 * np.eye(3))


def test_projecting_out_drift_recovers_sigma(rng):
    vf = quadratic_field(rng, 3, 2)
    x = rng.standard_normal(3)
    assert np.array_equal(assemble_f(vf)(x)[:, 1:], vf.diffusion(x))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_preset_oracles_match_finite_differences(name):
    vf = make_preset(name, 2).vf
    rng = np.random.default_rng(7)
    for x in rng.uniform(-2, 2, (100, 2)):
        for exact, fn, step in (
            (vf.drift_jacobian(x), vf.drift, 1e-5),
            (vf.diffusion_jacobian(x), vf.diffusion, 1e-5),
            (vf.drift_hessian(x), vf.drift_jacobian, 1e-4),
            (vf.diffusion_hessian(x), vf.diffusion_jacobian, 1e-4),
        ):
            fd = central_jacobian(fn, x, step)
            np.testing.assert_allclose(exact, fd, rtol=1e-4, atol=1e-4 * (1 + np.abs(exact).max()))


def test_finite_difference_fallback_matches_oracles(rng):
    vf = quadratic_field(rng, 2, 2)
    bare = replace(vf, jac_b=None, jac_sigma=None, hess_b=None, hess_sigma=None)
    for x in rng.uniform(-2, 2, (20, 2)):
        np.testing.assert_allclose(bare.field_jacobian(x), vf.field_jacobian(x), rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(bare.field_hessian(x), vf.field_hessian(x), rtol=1e-4, atol=1e-5)


def test_missing_hessian_without_fallback_raises(rng):
    vf = replace(quadratic_field(rng, 2, 1), hess_sigma=None, fd_fallback=False)
    x = np.zeros(2)
    iterated_apply(vf, x, (1, 1))
    with pytest.raises(ContractError):
        iterated_apply(vf, x, (1, 1, 1))


def test_iterated_apply_simple_cases():
    const = constant_noise(np.array([1.0, 2.0]), np.array([[1.0, 0.5], [0.0, 2.0]]))
    for i in (1, 2):
        for j in (1, 2):
            np.testing.assert_array_equal(iterated_apply(const, np.ones(2), (i, j)), 0.0)
    mult = scalar_field(lambda x: 0.0, lambda x: x, lambda x: 0.0, lambda x: 1.0, lambda x: 0.0, lambda x: 0.0)
    assert iterated_apply(mult, np.array([1.7]), (1, 1))[0] == pytest.approx(1.7)
    with pytest.raises(ContractError):
        iterated_apply(mult, np.array([1.0]), (2,))
    with pytest.raises(ContractError):
        iterated_apply(mult, np.array([1.0]), (0, 0, 0, 0))


def test_iterated_apply_level_three_against_finite_differences(rng):
    h = 1e-4
    for _ in range(5):
        vf = quadratic_field(rng, 3, 2)
        x = rng.uniform(-1, 1, 3)
        for idx in [(0, 1, 2), (2, 2, 1), (1, 0, 0), (2, 1, 2)]:
            i1, i2, i3 = idx
            direction = vf.field(x)[:, i1]
            fd = (iterated_apply(vf, x + h * direction, (i2, i3))
                  - iterated_apply(vf, x - h * direction, (i2, i3))) / (2 * h)
            got = iterated_apply(vf, x, idx)
            assert np.linalg.norm(got - fd) <= 1e-4 * max(1.0, np.linalg.norm(fd))


def test_iterated_apply_scales_quadratically_in_sigma(rng):
    vf = quadratic_field(rng, 2, 2)
    c = 1.7
    scaled = replace(
        vf,
        sigma=lambda x: c * vf.sigma(x),
        jac_sigma=lambda x: c * vf.jac_sigma(x),
        hess_sigma=lambda x: c * vf.hess_sigma(x),
    )
    x = rng.standard_normal(2)
    for idx in [(1, 1), (1, 2), (2, 1)]:
        np.testing.assert_allclose(iterated_apply(scaled, x, idx), c * c * iterated_apply(vf, x, idx),
                                   rtol=1e-12)


def test_ito_correction_examples():
    const = constant_noise(np.array([0.3]), np.array([[2.0]]))
    x = np.array([1.3])
    assert ito_correction(const).drift(x)[0] == pytest.approx(0.3)
    geo = scalar_field(lambda x: 0.0, lambda x: x, lambda x: 0.0, lambda x: 1.0)
    for conv in ("all-pairs", "diagonal"):
        assert ito_correction(geo, conv).drift(x)[0] == pytest.approx(-0.5 * 1.3)
    # sigma(x) = (x, x) with d = 1, e = 2: sigma_i sigma_j = x for every (i, j)
    two = linear(np.zeros((1, 1)), np.ones((2, 1, 1)))
    assert ito_correction(two, "all-pairs").drift(x)[0] == pytest.approx(-2.0 * 1.3)
    assert ito_correction(two, "diagonal").drift(x)[0] == pytest.approx(-1.3)
    assert np.array_equal(ito_correction(two).diffusion(x), two.diffusion(x))
    with pytest.raises(ContractError):
        ito_correction(two, "other")


def test_ito_correction_symbolic_expansion():
    sympy = pytest.importorskip("sympy")
    x1, x2 = sympy.symbols("x1 x2")
    X = sympy.Matrix([x1, x2])
    S = sympy.Matrix([[x1 * x2, sympy.sin(x1)], [x2 ** 2, x1 + 3 * x2]])
    b = sympy.Matrix([x1 - x2, x1 * x2])

    def term(i, j):
        return sum((S[k, i] * sympy.diff(S[:, j], X[k]) for k in range(2)), sympy.zeros(2, 1))

    all_pairs = b - sympy.Rational(1, 2) * sum((term(i, j) for i in range(2) for j in range(2)), sympy.zeros(2, 1))
    diag = b - sympy.Rational(1, 2) * sum((term(i, i) for i in range(2)), sympy.zeros(2, 1))
    Sf = sympy.lambdify((x1, x2), S, "numpy")
    bf = sympy.lambdify((x1, x2), b, "numpy")
    from roughviab.vector_fields import VectorFieldPair
    vf = VectorFieldPair(2, 2, b=lambda x: np.asarray(bf(*x), float).ravel(),
                         sigma=lambda x: np.asarray(Sf(*x), float))
    pt = np.array([0.7, -0.4])
    for conv, expr in (("all-pairs", all_pairs), ("diagonal", diag)):
        want = np.array(expr.subs({x1: pt[0], x2: pt[1]}).evalf(), dtype=float).ravel()
        np.testing.assert_allclose(ito_correction(vf, conv).drift(pt), want, rtol=1e-8)


def test_presets_registry():
    with pytest.raises(ContractError):
        make_preset("nope")
    p = make_preset("rotation-ball", 2)
    assert p.body["type"] == "ball"
    A = p.vf.diffusion(np.array([1.0, 0.0]))
    assert A[:, 0] @ np.array([1.0, 0.0]) == 0.0
    with pytest.raises(ContractError):
        make_preset("rotation-ball", 3)
