import numpy as np
import pytest

from roughviab.convex_geometry import Ball, Box, Subspace
from roughviab.errors import ContractError
from roughviab.invariance import (
    BoundarySampler,
    SignalPlan,
    boundary_points,
    check_invariance,
    comparison_condition,
    comparison_ensemble,
    point_condition,
    product_system,
    signal_roughness_audit,
    viability_ensemble,
)
from roughviab.signals import FbmSpec, SampledSignal, circle_directions, lil_profile
from roughviab.vector_fields import constant_noise, linear, logistic, make_preset

UNIT_BOX = Box([0, 0], [1, 1])


def test_point_condition_examples():
    rot = make_preset("rotation-ball", 2)
    for x in circle_directions(12):
        assert point_condition(Ball([0, 0], 1.0), rot.vf, x).passed
    v = point_condition(Ball([0, 0], 1.0), make_preset("identity-ball", 2).vf, [0.0, 1.0])
    assert v.drift_ok and not v.noise_ok and v.noise_column == 1
    assert point_condition(UNIT_BOX, logistic(2), [1.0, 0.3]).passed
    assert point_condition(UNIT_BOX, logistic(2), [0.0, 0.0]).passed


def test_interior_points_are_vacuous():
    wild = constant_noise(np.array([1e3, -1e3]), np.full((2, 2), 7.0))
    v = point_condition(UNIT_BOX, wild, [0.5, 0.5])
    assert v.passed and v.drift_violation == 0.0


def test_check_invariance_logistic_passes():
    rep = check_invariance(UNIT_BOX, logistic(2, m=[1.0, 2.0]), BoundarySampler(2000))
    assert rep.passed and rep.witness is None and rep.n_samples == 2000


def test_check_invariance_outward_drift_fails_with_witness():
    p = make_preset("outward-drift", 2)
    rep = check_invariance(UNIT_BOX, p.vf, BoundarySampler(500))
    assert not rep.passed and not rep.drift_ok and rep.noise_ok
    assert rep.witness["kind"] == "drift" and rep.witness["point"][0] == 1.0
    assert rep.worst_drift_violation == pytest.approx(1.0)


def test_check_invariance_subspace_noise_leak():
    K = Subspace(np.array([[1.0], [0.0]]))
    vf = constant_noise(np.zeros(2), np.array([[0.0], [1.0]]))
    rep = check_invariance(K, vf, BoundarySampler(100))
    assert not rep.noise_ok and rep.witness["noise_column"] == 0
    ok = constant_noise(np.array([1.0, 0.0]), np.array([[1.0], [0.0]]))
    assert check_invariance(K, ok, BoundarySampler(100)).passed


def test_boundary_points_lie_on_boundary():
    box = Box([0, 0, 0], [1, 2, 3])
    pts = boundary_points(box, BoundarySampler(600))
    on_face = np.any(np.isclose(pts, box.lower) | np.isclose(pts, box.upper), axis=1)
    assert pts.shape[0] >= 600 and on_face.all()
    ball = boundary_points(Ball([1, 1], 2.0), BoundarySampler(50))
    np.testing.assert_allclose(np.linalg.norm(ball - 1, axis=1), 2.0)


def test_logistic_viability_ensemble():
    plan = SignalPlan(FbmSpec(0.5, 2, 1.0, 256, 3))
    rep = viability_ensemble(UNIT_BOX, logistic(2), plan, 10)
    assert rep.ensemble_max < 1e-5 and rep.n_exploded == 0
    assert all(e is None for e in rep.first_exits)


def test_rotation_ball_norm_preserved_at_level_two():
    p = make_preset("rotation-ball", 2)
    plan = SignalPlan(FbmSpec(0.75, 1, 1.0, 1024, 4), level=2)
    rep = viability_ensemble(Ball([0, 0], 1.0), p.vf, plan, 5, keep_trajectories=True)
    for path in rep.paths:
        r = np.linalg.norm(path.trajectory.states, axis=1)
        assert np.max(np.abs(r - r[0])) < 1e-6


def test_identity_ball_exits():
    p = make_preset("identity-ball", 2)
    rep = viability_ensemble(Ball([0, 0], 1.0), p.vf, SignalPlan(FbmSpec(0.5, 2, 1.0, 256, 5)), 20)
    assert rep.ensemble_max > 0.01
    assert any(e is not None for e in rep.first_exits)


def test_viability_threads_do_not_change_results():
    plan = SignalPlan(FbmSpec(0.35, 2, 1.0, 128, 6))
    a = viability_ensemble(UNIT_BOX, logistic(2), plan, 8, threads=1)
    b = viability_ensemble(UNIT_BOX, logistic(2), plan, 8, threads=4)
    assert np.array_equal(a.max_distances, b.max_distances)


def test_viability_dimension_mismatch():
    with pytest.raises(ContractError):
        viability_ensemble(UNIT_BOX, logistic(2), SignalPlan(FbmSpec(0.5, 1)), 1)


def test_comparison_condition_cases():
    dom = Box([0, 0], [1, 1])
    lo, hi = logistic(2, m=[1.0, 1.0]), logistic(2, m=[2.0, 2.0])
    assert comparison_condition(lo, hi, [0, 1], dom, 2000).passed
    assert comparison_condition(lo, lo, [0, 1], dom, 2000).passed
    bad = comparison_condition(hi, lo, [0, 1], dom, 2000)
    assert not bad.passed and bad.noise_ok is True
    loud = logistic(2, m=[2.0, 2.0], noise_scale=2.0)
    mism = comparison_condition(lo, loud, [0, 1], dom, 500)
    assert not mism.noise_ok and mism.witness["kind"] == "noise"
    with pytest.raises(ContractError):
        comparison_condition(lo, hi, [5], dom)


def test_product_system_agrees_with_direct_condition():
    lo, hi = logistic(2, m=[1.0, 1.0]), logistic(2, m=[2.0, 2.0])
    pair, body = product_system(lo, hi, [0, 1])
    rng = np.random.default_rng(0)
    for _ in range(200):
        x1 = rng.random(2)
        x2 = x1 + rng.random(2) * (1 - x1)
        i = rng.integers(0, 2)
        x2[i] = x1[i]
        v = point_condition(body, pair, np.concatenate([x1, x2]))
        direct = lo.drift(x1)[i] <= hi.drift(x2)[i] + 1e-12 and np.allclose(lo.diffusion(x1)[i], hi.diffusion(x2)[i])
        assert v.passed == direct
    pair_bad, body_bad = product_system(hi, lo, [0, 1])
    assert not check_invariance(body_bad, pair_bad, np.array([[0.5, 0.5, 0.5, 0.5]])).passed


def test_comparison_ensemble_ordered_and_mismatched():
    lo, hi = logistic(2, m=[1.0, 1.0]), logistic(2, m=[2.0, 2.0])
    plan = SignalPlan(FbmSpec(0.5, 2, 1.0, 256, 7))
    rep = comparison_ensemble(lo, hi, [0, 1], plan, 10, domain=UNIT_BOX)
    assert rep.worst_violation < 1e-6 and rep.ordered_fraction == 1.0
    pairs = [([0.5, 0.5], [0.5, 0.5])] * 5
    bad = comparison_ensemble(hi, lo, [0, 1], plan, 5, initial_pairs=pairs)
    assert bad.worst_violation > 0
    with pytest.raises(ContractError):
        comparison_ensemble(lo, hi, [0, 1], plan, 1, initial_pairs=[([0.6, 0.5], [0.5, 0.5])])


def test_roughness_audit_constructed_and_zero():
    t = np.linspace(0, np.exp(-2), 4097)
    beta = 0.45
    prof = np.zeros_like(t)
    prof[1:] = t[1:] ** beta * lil_profile(t[1:])
    w = SampledSignal(t, np.column_stack([-prof, np.zeros_like(t)]))
    audit = signal_roughness_audit(w, beta, np.array([[1.0, 0.0]]))
    assert audit.min_proxy == pytest.approx(-1.0) and audit.sup_bound == pytest.approx(1.0)
    assert audit.consistent
    both = signal_roughness_audit(w, beta, np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert not both.consistent and both.max_proxy == pytest.approx(1.0)
    zero = SampledSignal(t, np.zeros((t.size, 2)))
    assert not signal_roughness_audit(zero, beta, circle_directions(8)).consistent


def test_outward_drift_exits_with_first_exit_time():
    p = make_preset("outward-drift", 2)
    rep = viability_ensemble(UNIT_BOX, p.vf, SignalPlan(FbmSpec(0.5, 1, 1.0, 256, 8)), 100)
    exits = [e for e in rep.first_exits if e is not None]
    assert rep.ensemble_max > 0.01 and exits and all(0 < e <= 1 for e in exits)
    assert rep.to_dict()["n_exited"] == len(exits)
