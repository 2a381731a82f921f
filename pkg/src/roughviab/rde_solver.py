"""Step-N Euler scheme for ``dy = f(y) dW`` along a dissection and
self-refinement convergence studies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._io import write_csv
from .errors import ContractError, ExplosionError
from .rough_path import RoughPath, TruncatedTensor, level_for_alpha
from .vector_fields import VectorFieldPair, strict_floor

EXPLOSION_BOUND = 1e8


@dataclass(frozen=True, eq=False)
class Dissection:
    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ContractError("a dissection needs at least two points")
        if np.any(np.diff(t) <= 0):
            raise ContractError("dissection times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.times)))

    @classmethod
    def uniform(cls, horizon: float, n: int) -> "Dissection":
        return cls(horizon * np.arange(n + 1) / n)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Euler iterates with per-step diagnostics.

    ``increment_norms[j]`` is the norm of the Euler increment that produced
    ``states[j]`` (zero at ``j = 0``); ``distances`` is set when a monitor set
    is attached.
    """

    times: np.ndarray
    states: np.ndarray
    increment_norms: np.ndarray
    distances: Optional[np.ndarray] = None
    rejected: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.states.shape[0] != self.times.size:
            raise ContractError("trajectory must hold one state per time")
        if self.rejected is None:
            object.__setattr__(self, "rejected", np.zeros(self.times.size, dtype=bool))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path):
        d = self.states.shape[1]
        header = ["t"] + [f"y{k + 1}" for k in range(d)]
        cols = [self.times] + [self.states[:, k] for k in range(d)]
        if self.distances is not None:
            header.append("dist_K")
            cols.append(self.distances)
        return write_csv(path, header, cols)


def _check_increment(vf: VectorFieldPair, g: TruncatedTensor):
    if g.dim != vf.dim_noise + 1:
        raise ContractError(f"driver increment has dimension {g.dim}, expected e+1 = {vf.dim_noise + 1}")


def _increment_from_levels(vf: VectorFieldPair, x: np.ndarray, levels) -> np.ndarray:
    N = len(levels)
    F = vf.field(x)
    inc = F @ levels[0]
    if N >= 2:
        J = vf.field_jacobian(x)
        # A[a, u, v] = (f_u f_v I)(x) = J[a, v, k] F[k, u]
        JF = np.einsum("avk,ku->auv", J, F)
        inc = inc + np.einsum("auv,uv->a", JF, levels[1])
    if N >= 3:
        H = vf.field_hessian(x)
        g3 = levels[2]
        # P[k, v, u] = J[k, v, l] F[l, u]
        P = np.einsum("kvl,lu->kvu", J, F)
        first = np.einsum("awk,kvu,uvw->a", J, P, g3)
        Q = np.einsum("kv,lu,uvw->wkl", F, F, g3)
        second = np.einsum("awkl,wkl->a", H, Q)
        inc = inc + first + second
    if not np.all(np.isfinite(inc)):
        raise ExplosionError("non-finite vector-field values in Euler increment")
    return inc


def euler_increment(vf: VectorFieldPair, x, g: TruncatedTensor) -> np.ndarray:
    """``sum_k sum_{i_1..i_k} f_{i_1}...f_{i_k} I(x) g^{(k), i_1..i_k}``."""
    _check_increment(vf, g)
    return _increment_from_levels(vf, np.asarray(x, dtype=float), g.tensors)


def euler_step(vf: VectorFieldPair, x, g: TruncatedTensor) -> np.ndarray:
    return np.asarray(x, dtype=float) + euler_increment(vf, x, g)


def _grid_indices(drive_times: np.ndarray, times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(drive_times, times)
    ok = (idx < drive_times.size) & np.isclose(drive_times[np.minimum(idx, drive_times.size - 1)], times,
                                               rtol=0.0, atol=1e-12 * max(1.0, abs(drive_times[-1])))
    if not np.all(ok):
        raise ContractError("dissection times must be points of the driver grid")
    return idx


def solve(
    vf: VectorFieldPair,
    y0,
    drive: RoughPath,
    dissection: Dissection | None = None,
    level: int | None = None,
    monitor: Callable[[np.ndarray], float] | None = None,
    bound: float = EXPLOSION_BOUND,
) -> Trajectory:
    """Euler scheme ``y_{k} = y_{k-1} + E(y_{k-1}, W_{t_{k-1}, t_k})`` along ``dissection``.

    ``drive`` must be the lift of the time-augmented signal.  When the
    dissection is coarser than the driver grid, increments are composed by
    Chen's product.  ``level`` defaults to the driver's level and may be
    lowered for experiments; ``monitor`` maps a state to its distance from a
    set and is recorded per step.
    """
    y = np.asarray(y0, dtype=float).reshape(vf.dim_state).copy()
    if drive.dim != vf.dim_noise + 1:
        raise ContractError(f"driver has dimension {drive.dim}, expected e+1 = {vf.dim_noise + 1}")
    if dissection is not None and not np.array_equal(dissection.times, drive.times):
        drive = drive.coarsen(_grid_indices(drive.times, dissection.times))
    N = drive.level if level is None else level
    if not 1 <= N <= drive.level:
        raise ContractError(f"Euler level {N} not available from a level-{drive.level} driver")
    lv = drive.levels[:N]
    n = drive.n_steps
    states = np.empty((n + 1, y.size))
    norms = np.zeros(n + 1)
    dist = None if monitor is None else np.zeros(n + 1)
    states[0] = y
    if dist is not None:
        dist[0] = monitor(y)
    for j in range(n):
        inc = _increment_from_levels(vf, y, [t[j] for t in lv])
        y = y + inc
        if not np.all(np.isfinite(y)) or np.linalg.norm(y) > bound:
            raise ExplosionError(f"trajectory exploded at step {j + 1} (t={drive.times[j + 1]:.6g})",
                                 step=j + 1, time=float(drive.times[j + 1]))
        states[j + 1] = y
        norms[j + 1] = np.linalg.norm(inc)
        if dist is not None:
            dist[j + 1] = monitor(y)
    return Trajectory(drive.times.copy(), states, norms, dist)


def theta_exponent(alpha: float, gamma: float | None = None) -> float:
    """``theta = (floor(gamma) + 1) alpha`` with floor the strict integer part.

    Without a declared ``gamma`` the largest admissible regularity is used,
    i.e. ``floor(gamma) = floor(1/alpha)``.
    """
    lvl = level_for_alpha(alpha)
    fg = lvl if gamma is None else strict_floor(gamma)
    return (fg + 1) * alpha


@dataclass(frozen=True)
class ConvergenceStudy:
    meshes: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    theta: float
    exploded: tuple = ()

    @property
    def expected_order(self) -> float:
        return self.theta - 1.0

    def to_csv(self, path):
        n = self.meshes.size
        return write_csv(path, ["mesh", "error", "slope"],
                         [self.meshes, self.errors, np.full(n, self.slope)])


def convergence_study(
    vf: VectorFieldPair,
    y0,
    drive: RoughPath,
    coarsenings: Sequence[int],
    level: int | None = None,
) -> ConvergenceStudy:
    """Sup-norm error of coarse Euler solutions against the finest-grid solution.

    ``coarsenings`` lists dyadic exponents ``r``; the coarse dissection keeps
    every ``2**r``-th driver grid point.  The reported slope is the
    least-squares fit of ``log(error)`` against ``log(mesh)``.
    """
    rs = sorted(set(int(r) for r in coarsenings))
    if len(rs) < 4:
        raise ContractError("a convergence study needs at least four coarsening levels")
    if rs[0] < 1:
        raise ContractError("coarsening exponents must be positive")
    n = drive.n_steps
    ref = solve(vf, y0, drive, level=level)
    meshes, errors, exploded = [], [], []
    for r in rs:
        step = 2 ** r
        if n % step:
            raise ContractError(f"driver grid of {n} steps is not divisible by 2**{r}")
        idx = np.arange(0, n + 1, step)
        try:
            traj = solve(vf, y0, drive.coarsen(idx), level=level)
        except ExplosionError:
            exploded.append(r)
            continue
        err = np.max(np.linalg.norm(traj.states - ref.states[idx], axis=1))
        meshes.append(float(np.max(np.diff(drive.times[idx]))))
        errors.append(float(err))
    meshes_a, errors_a = np.asarray(meshes), np.asarray(errors)
    if exploded or np.any(errors_a <= 0):
        slope, intercept = float("nan"), float("nan")
    else:
        slope, intercept = np.polyfit(np.log(meshes_a), np.log(errors_a), 1)
    theta = theta_exponent(drive.alpha, vf.gamma)
    return ConvergenceStudy(meshes_a, errors_a, float(slope), float(intercept), theta, tuple(exploded))
