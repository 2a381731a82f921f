"""Invariance conditions on convex bodies, viability and comparison ensembles,
and the roughness audit of driving signals."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .convex_geometry import (
    ACTIVE_TOL,
    Ball,
    Box,
    ConvexBody,
    Polyhedron,
    Subspace,
    distance,
    project,
)
from .errors import ContractError, ExplosionError
from .rde_solver import Dissection, solve
from .signals import (
    FbmSpec,
    SampledSignal,
    _as_directions,
    drop_time,
    lift,
    lil_profile,
    lil_statistic,
    lil_window,
    path_rng,
    sample_fbm,
    time_augment,
)
from .vector_fields import VectorFieldPair

EQUALITY_TOL = 1e-9


def _map_paths(fn, n: int, threads: int | None):
    if threads is None or threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


# -- pointwise and sampled invariance checks ------------------------------------


@dataclass(frozen=True)
class PointVerdict:
    point: np.ndarray
    projection: np.ndarray
    drift_ok: bool
    noise_ok: bool
    drift_violation: float
    noise_violation: float
    noise_column: Optional[int]

    @property
    def passed(self) -> bool:
        return self.drift_ok and self.noise_ok


def point_condition(K: ConvexBody, vf: VectorFieldPair, x, tol: float = EQUALITY_TOL) -> PointVerdict:
    """Drift in ``T_K(p)`` and both signs of every noise column in ``T_K(p)``, ``p = p_K(x)``.

    Fields are evaluated at ``x``; for ``x`` in ``K`` this is ``p`` itself.
    Interior points have no active normals and pass.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = project(K, x)
    normals = K.active_normals(p, ACTIVE_TOL)
    if not normals:
        return PointVerdict(x, p, True, True, 0.0, 0.0, None)
    S = np.array(normals)
    b = vf.drift(x)
    sig = vf.diffusion(x)
    drift_violation = max(0.0, float(np.max(S @ b)))
    noise = np.abs(S @ sig)
    noise_violation = float(noise.max())
    col = int(np.unravel_index(np.argmax(noise), noise.shape)[1])
    return PointVerdict(
        x, p,
        drift_violation <= tol,
        noise_violation <= tol,
        drift_violation,
        noise_violation,
        col if noise_violation > tol else None,
    )


@dataclass(frozen=True)
class BoundarySampler:
    """Deterministic face grids plus uniform random boundary points."""

    n_samples: int = 10_000
    grid_fraction: float = 0.5
    seed: int = 0


def _box_face_grid(K: Box, n: int) -> np.ndarray:
    d = K.dim
    if n <= 0:
        return np.zeros((0, d))
    per_face = max(1, n // (2 * d))
    if d == 1:
        return np.array([[K.lower[0]], [K.upper[0]]])
    g = max(2, int(np.ceil(per_face ** (1.0 / (d - 1)))))
    pts = []
    for i in range(d):
        free = [j for j in range(d) if j != i]
        axes = [np.linspace(K.lower[j], K.upper[j], g) for j in free]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d - 1)
        for val in (K.lower[i], K.upper[i]):
            face = np.empty((mesh.shape[0], d))
            face[:, free] = mesh
            face[:, i] = val
            pts.append(face)
    return np.concatenate(pts)


def boundary_points(K: ConvexBody, sampler: BoundarySampler = BoundarySampler()) -> np.ndarray:
    """Boundary sample plan for ``K`` (see :class:`BoundarySampler`)."""
    rng = np.random.default_rng(sampler.seed)
    n = int(sampler.n_samples)
    n_grid = int(round(sampler.grid_fraction * n))
    d = K.dim
    if isinstance(K, Box):
        grid = _box_face_grid(K, n_grid)
        n_rand = max(0, n - grid.shape[0])
        pts = K.lower + rng.random((n_rand, d)) * (K.upper - K.lower)
        face = rng.integers(0, d, n_rand)
        side = rng.random(n_rand) < 0.5
        pts[np.arange(n_rand), face] = np.where(side, K.lower[face], K.upper[face])
        return np.concatenate([grid, pts])
    if isinstance(K, Ball):
        u = rng.standard_normal((n, d))
        return K.center + K.radius * u / np.linalg.norm(u, axis=1, keepdims=True)
    if isinstance(K, Subspace):
        return rng.standard_normal((n, K.basis.shape[1])) @ K.basis.T
    if isinstance(K, Polyhedron):
        out = []
        m = K.normals.shape[0]
        for k in range(n):
            z = K.feasible + rng.standard_normal(d) * (1.0 + np.linalg.norm(K.feasible))
            if k < n_grid:
                # pin onto face k mod m before projecting into K
                i = k % m
                z = z - (K.normals[i] @ z - K.offsets[i] - 1e-3) * K.normals[i]
            p = K.project(z)
            if np.any(np.abs(K.slacks(p)) <= ACTIVE_TOL):
                out.append(p)
        if not out:
            raise ContractError("could not sample any boundary point of the polyhedron")
        return np.array(out)
    raise ContractError(f"unsupported body {type(K).__name__}")


@dataclass(frozen=True)
class InvarianceReport:
    body: dict
    field: str
    passed: bool
    drift_ok: bool
    noise_ok: bool
    n_samples: int
    worst_drift_violation: float
    worst_noise_violation: float
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "body": self.body,
            "field": self.field,
            "passed": self.passed,
            "drift_ok": self.drift_ok,
            "noise_ok": self.noise_ok,
            "n_samples": self.n_samples,
            "worst_drift_violation": self.worst_drift_violation,
            "worst_noise_violation": self.worst_noise_violation,
            "witness": self.witness,
        }


def check_invariance(
    K: ConvexBody,
    vf: VectorFieldPair,
    sampler: BoundarySampler | np.ndarray = BoundarySampler(),
    tol: float = EQUALITY_TOL,
) -> InvarianceReport:
    """Aggregate :func:`point_condition` over a boundary sample (or explicit points)."""
    pts = boundary_points(K, sampler) if isinstance(sampler, BoundarySampler) else np.atleast_2d(sampler)
    if pts.shape[0] < 1:
        raise ContractError("the boundary sampler produced no points")
    worst_d = worst_n = 0.0
    drift_ok = noise_ok = True
    witness = None
    worst_score = 0.0
    for x in pts:
        v = point_condition(K, vf, x, tol)
        drift_ok &= v.drift_ok
        noise_ok &= v.noise_ok
        worst_d = max(worst_d, v.drift_violation)
        worst_n = max(worst_n, v.noise_violation)
        if not v.passed:
            score = max(v.drift_violation if not v.drift_ok else 0.0,
                        v.noise_violation if not v.noise_ok else 0.0)
            if witness is None or score > worst_score:
                worst_score = score
                witness = {
                    "point": v.point.tolist(),
                    "kind": "drift" if not v.drift_ok else "noise",
                    "noise_column": v.noise_column,
                    "violation": score,
                }
    return InvarianceReport(
        K.descriptor(), vf.name, bool(drift_ok and noise_ok), bool(drift_ok), bool(noise_ok),
        int(pts.shape[0]), worst_d, worst_n, witness,
    )


# -- viability ensembles ---------------------------------------------------------------


def sample_in_body(K: ConvexBody, rng: np.random.Generator) -> np.ndarray:
    """Initial point in ``K``: uniform for boxes and balls, projected Gaussian otherwise."""
    d = K.dim
    if isinstance(K, Box):
        return K.lower + rng.random(d) * (K.upper - K.lower)
    if isinstance(K, Ball):
        u = rng.standard_normal(d)
        r = K.radius * rng.random() ** (1.0 / d)
        return K.center + r * u / np.linalg.norm(u)
    if isinstance(K, Subspace):
        return K.project(rng.standard_normal(d))
    return K.project(K.feasible + rng.standard_normal(d))


@dataclass(frozen=True)
class SignalPlan:
    """How each ensemble member's driver is built: fBm sample, lift exponent, Euler level."""

    spec: FbmSpec
    alpha: Optional[float] = None
    level: Optional[int] = None

    def driver(self, index: int):
        rng = path_rng(self.spec.seed, index)
        w = sample_fbm(self.spec, rng)
        return rng, w, lift(time_augment(w), self.alpha, self.level)


@dataclass(frozen=True)
class PathOutcome:
    index: int
    y0: np.ndarray
    max_distance: float
    first_exit: Optional[float]
    exploded: bool
    trajectory: object = None


@dataclass(frozen=True)
class ViabilityReport:
    paths: tuple
    exit_tol: float

    @property
    def max_distances(self) -> np.ndarray:
        return np.array([p.max_distance for p in self.paths])

    @property
    def ensemble_max(self) -> float:
        return float(self.max_distances.max())

    @property
    def first_exits(self) -> list:
        return [p.first_exit for p in self.paths]

    @property
    def n_paths(self) -> int:
        return len(self.paths)

    @property
    def n_exploded(self) -> int:
        return sum(p.exploded for p in self.paths)

    def to_dict(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "ensemble_max_distance": self.ensemble_max,
            "exit_tol": self.exit_tol,
            "n_exited": sum(p.first_exit is not None for p in self.paths),
            "n_exploded": self.n_exploded,
        }

    def rows(self):
        for p in self.paths:
            yield [p.index, p.max_distance, np.nan if p.first_exit is None else p.first_exit, float(p.exploded)]


def viability_ensemble(
    K: ConvexBody,
    vf: VectorFieldPair,
    plan: SignalPlan,
    n_paths: int,
    dissection: Dissection | None = None,
    exit_tol: float = 1e-9,
    threads: int | None = 1,
    keep_trajectories: bool = False,
) -> ViabilityReport:
    """Solve ``n_paths`` unconstrained Euler trajectories from points of ``K`` and
    record their distance to ``K``; nothing projects or clamps the dynamics."""
    if plan.spec.dim != vf.dim_noise:
        raise ContractError(f"signal dimension {plan.spec.dim} does not match noise dimension {vf.dim_noise}")

    def run(i):
        rng, _, drive = plan.driver(i)
        y0 = sample_in_body(K, rng)
        try:
            traj = solve(vf, y0, drive, dissection, monitor=lambda y: distance(K, y))
        except ExplosionError as exc:
            return PathOutcome(i, y0, float("inf"), exc.time, True)
        dist = traj.distances
        out = np.flatnonzero(dist > exit_tol)
        first = float(traj.times[out[0]]) if out.size else None
        return PathOutcome(i, y0, float(dist.max()), first, False, traj if keep_trajectories else None)

    return ViabilityReport(tuple(_map_paths(run, n_paths, threads)), exit_tol)


# -- comparison ------------------------------------------------------------------------


def _check_pair(vf1: VectorFieldPair, vf2: VectorFieldPair, coords: Sequence[int]):
    if (vf1.dim_state, vf1.dim_noise) != (vf2.dim_state, vf2.dim_noise):
        raise ContractError("comparison needs two systems with the same state and noise dimensions")
    idx = sorted(set(int(i) for i in coords))
    if not idx or idx[0] < 0 or idx[-1] >= vf1.dim_state:
        raise ContractError("coordinate set must be a nonempty subset of the state indices")
    return idx


def ordered_pair(domain: Box, coords, rng, tie: int | None = None):
    """``(x1, x2)`` in ``domain`` with ``x1 <= x2`` on ``coords``; equality forced at ``tie``."""
    d = domain.dim
    x1 = domain.lower + rng.random(d) * (domain.upper - domain.lower)
    x2 = domain.lower + rng.random(d) * (domain.upper - domain.lower)
    for j in coords:
        x2[j] = x1[j] + rng.random() * (domain.upper[j] - x1[j])
    if tie is not None:
        x2[tie] = x1[tie]
    return x1, x2


@dataclass(frozen=True)
class ComparisonVerdict:
    passed: bool
    drift_ok: bool
    noise_ok: bool
    n_samples: int
    worst_drift_violation: float
    worst_noise_violation: float
    witness: Optional[dict] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def comparison_condition(
    vf1: VectorFieldPair,
    vf2: VectorFieldPair,
    coords: Sequence[int],
    domain: Box,
    n_samples: int = 10_000,
    seed: int = 0,
    tol: float = EQUALITY_TOL,
) -> ComparisonVerdict:
    """Sampled check of ``b1_i(x1) <= b2_i(x2)`` and ``sigma1_{i.}(x1) = sigma2_{i.}(x2)``
    on pairs ordered on ``coords`` and tied at coordinate ``i``."""
    idx = _check_pair(vf1, vf2, coords)
    rng = np.random.default_rng(seed)
    worst_d = worst_n = 0.0
    drift_ok = noise_ok = True
    witness = None
    for k in range(n_samples):
        i = idx[k % len(idx)]
        x1, x2 = ordered_pair(domain, idx, rng, tie=i)
        dv = max(0.0, float(vf1.drift(x1)[i] - vf2.drift(x2)[i]))
        nv = float(np.max(np.abs(vf1.diffusion(x1)[i] - vf2.diffusion(x2)[i])))
        worst_d, worst_n = max(worst_d, dv), max(worst_n, nv)
        bad_d, bad_n = dv > tol, nv > tol
        drift_ok &= not bad_d
        noise_ok &= not bad_n
        if (bad_d or bad_n) and witness is None:
            witness = {"x1": x1.tolist(), "x2": x2.tolist(), "coordinate": i,
                       "kind": "drift" if bad_d else "noise", "violation": dv if bad_d else nv}
    return ComparisonVerdict(bool(drift_ok and noise_ok), bool(drift_ok), bool(noise_ok), n_samples,
                             worst_d, worst_n, witness)


def product_system(vf1: VectorFieldPair, vf2: VectorFieldPair, coords: Sequence[int]):
    """Stacked system on ``R^{2d}`` and the polyhedron ``{<e_i - e_{d+i}, z> <= 0 : i in coords}``."""
    idx = _check_pair(vf1, vf2, coords)
    d, e = vf1.dim_state, vf1.dim_noise

    def b(z):
        return np.concatenate([vf1.drift(z[:d]), vf2.drift(z[d:])])

    def sigma(z):
        return np.vstack([vf1.diffusion(z[:d]), vf2.diffusion(z[d:])])

    normals = np.zeros((len(idx), 2 * d))
    for r, i in enumerate(idx):
        normals[r, i], normals[r, d + i] = 1.0, -1.0
    body = Polyhedron(np.zeros_like(normals), normals, np.zeros(2 * d))
    pair = VectorFieldPair(2 * d, e, b, sigma, name=f"{vf1.name}x{vf2.name}")
    return pair, body


@dataclass(frozen=True)
class ComparisonReport:
    violations: np.ndarray
    exploded: tuple

    @property
    def worst_violation(self) -> float:
        return float(np.max(self.violations)) if self.violations.size else 0.0

    @property
    def ordered_fraction(self) -> float:
        return float(np.mean(self.violations <= 0.0)) if self.violations.size else 1.0

    def to_dict(self) -> dict:
        return {"n_paths": int(self.violations.size), "ordered_fraction": self.ordered_fraction,
                "worst_violation": self.worst_violation, "exploded": list(self.exploded)}


def comparison_ensemble(
    vf1: VectorFieldPair,
    vf2: VectorFieldPair,
    coords: Sequence[int],
    plan: SignalPlan,
    n_paths: int,
    domain: Box | None = None,
    initial_pairs=None,
    dissection: Dissection | None = None,
    threads: int | None = 1,
) -> ComparisonReport:
    """Solve both systems with one shared driver per path and record
    ``max_{t, i} (y1_i - y2_i)_+``."""
    idx = _check_pair(vf1, vf2, coords)
    if initial_pairs is None and domain is None:
        raise ContractError("either initial pairs or a sampling domain is required")

    def run(i):
        rng, _, drive = plan.driver(i)
        if initial_pairs is not None:
            y1, y2 = (np.asarray(v, dtype=float) for v in initial_pairs[i])
        else:
            y1, y2 = ordered_pair(domain, idx, rng)
        if np.any(y1[idx] > y2[idx]):
            raise ContractError(f"initial pair {i} is not ordered on the coordinate set")
        try:
            t1 = solve(vf1, y1, drive, dissection)
            t2 = solve(vf2, y2, drive, dissection)
        except ExplosionError:
            return None
        return float(np.max(np.clip(t1.states[:, idx] - t2.states[:, idx], 0.0, None)))

    res = _map_paths(run, n_paths, threads)
    exploded = tuple(i for i, r in enumerate(res) if r is None)
    return ComparisonReport(np.array([r for r in res if r is not None]), exploded)


# -- roughness audit ---------------------------------------------------------------------


@dataclass(frozen=True)
class RoughnessAudit:
    directions: np.ndarray
    proxies: np.ndarray
    sup_bound: float

    @property
    def min_proxy(self) -> float:
        return float(self.proxies.min())

    @property
    def max_proxy(self) -> float:
        return float(self.proxies.max())

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.proxies < 0.0) and np.isfinite(self.sup_bound))

    def to_dict(self) -> dict:
        return {"min_proxy": self.min_proxy, "max_proxy": self.max_proxy, "sup_bound": self.sup_bound,
                "consistent": self.consistent, "proxies": self.proxies.tolist()}


def signal_roughness_audit(w: SampledSignal, beta: float, directions, t_min=None, t_max=None) -> RoughnessAudit:
    """Direction sweep of the LIL proxy plus the sup-bound ``max_k sup_t |w_k / (t^beta l(t))|``."""
    if w.augmented:
        w = drop_time(w)
    D = _as_directions(directions, w.dim)
    proxies = lil_statistic(w, beta, D, t_min, t_max)
    mask = lil_window(w.times, t_min, t_max)
    t = w.times[mask]
    M = float(np.max(np.abs(w.values[mask]) / (t ** beta * lil_profile(t))[:, None]))
    return RoughnessAudit(D, proxies, M)
