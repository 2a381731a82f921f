"""Convex bodies with projections, distances and tangent/normal cone queries.

Normal cones are returned as finite generator lists; a direction ``v`` is in
the tangent cone at ``x`` iff ``<s, v> <= tol`` for every generator ``s``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ContractError, ConvergenceError

ACTIVE_TOL = 1e-9
DYKSTRA_MAX_SWEEPS = 10_000
DYKSTRA_TOL = 1e-10


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lower), _vec(self.upper)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ContractError("box needs lower <= upper with matching shapes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def active_normals(self, x, tol):
        out = []
        eye = np.eye(self.dim)
        for i in range(self.dim):
            if abs(x[i] - self.upper[i]) <= tol:
                out.append(eye[i])
            if abs(x[i] - self.lower[i]) <= tol:
                out.append(-eye[i])
        return out

    def descriptor(self):
        return {"type": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractError("ball radius must be positive")
        object.__setattr__(self, "center", _vec(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        r = x - self.center
        n = np.linalg.norm(r)
        if n <= self.radius:
            return x.copy()
        return self.center + r * (self.radius / n)

    def active_normals(self, x, tol):
        r = x - self.center
        n = np.linalg.norm(r)
        if abs(n - self.radius) <= tol:
            return [r / n]
        return []

    def descriptor(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace spanned by the orthonormal columns of ``basis`` (shape ``(d, r)``)."""

    basis: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.basis, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if not np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-10):
            raise ContractError("subspace basis must be orthonormal")
        object.__setattr__(self, "basis", B)

    @property
    def dim(self):
        return self.basis.shape[0]

    def project(self, x):
        return self.basis @ (self.basis.T @ x)

    def complement(self) -> np.ndarray:
        d, r = self.basis.shape
        if r == d:
            return np.zeros((d, 0))
        q, _ = np.linalg.qr(np.column_stack([self.basis, np.eye(d)]))
        return q[:, r:d]

    def active_normals(self, x, tol):
        C = self.complement()
        return [s for k in range(C.shape[1]) for s in (C[:, k], -C[:, k])]

    def descriptor(self):
        return {"type": "subspace", "basis": self.basis.tolist()}


@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``{x : <s_i, x - a_i> <= 0 for all i}`` with unit normals ``s_i``.

    ``feasible`` is a point certifying non-emptiness.
    """

    points: np.ndarray
    normals: np.ndarray
    feasible: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.points, dtype=float))
        S = np.atleast_2d(np.asarray(self.normals, dtype=float))
        if A.shape != S.shape:
            raise ContractError("polyhedron needs one anchor point per normal")
        nrm = np.linalg.norm(S, axis=1)
        if np.any(nrm == 0):
            raise ContractError("polyhedron normals must be nonzero")
        S = S / nrm[:, None]
        f = _vec(self.feasible)
        if np.any(np.einsum("ij,ij->i", S, f[None] - A) > ACTIVE_TOL):
            raise ContractError("certificate point is not feasible: polyhedron may be empty")
        object.__setattr__(self, "points", A)
        object.__setattr__(self, "normals", S)
        object.__setattr__(self, "feasible", f)
        object.__setattr__(self, "offsets", np.einsum("ij,ij->i", S, A))

    @property
    def dim(self):
        return self.normals.shape[1]

    def slacks(self, x):
        return self.normals @ x - self.offsets

    def project(self, x, max_sweeps: int = DYKSTRA_MAX_SWEEPS, tol: float = DYKSTRA_TOL):
        """Dykstra's alternating projections onto the halfspaces."""
        if np.all(self.slacks(x) <= 0):
            return x.copy()
        S, c = self.normals, self.offsets
        m = S.shape[0]
        y = x.copy()
        incr = np.zeros((m, x.size))
        for _ in range(max_sweeps):
            y_prev = y.copy()
            for i in range(m):
                z = y + incr[i]
                viol = S[i] @ z - c[i]
                y = z - max(viol, 0.0) * S[i]
                incr[i] = z - y
            change = np.linalg.norm(y - y_prev)
            if change <= tol and np.max(self.slacks(y)) <= tol:
                return self._polish(x, y)
        raise ConvergenceError(
            f"Dykstra did not converge in {max_sweeps} sweeps (last change {change:.3e})", residual=change
        )

    def _polish(self, x, y, band: float = 1e-7):
        # Dykstra stalls near 1e-10; solve the KKT system on the near-active set exactly.
        act = np.flatnonzero(self.slacks(y) >= -band)
        if act.size == 0 or act.size > x.size:
            return y
        A = self.normals[act]
        try:
            lam = np.linalg.solve(A @ A.T, A @ x - self.offsets[act])
        except np.linalg.LinAlgError:
            return y
        if np.any(lam < 0):
            return y
        z = x - A.T @ lam
        if np.max(self.slacks(z)) > 1e-12 or np.linalg.norm(z - y) > 1e-6:
            return y
        return z

    def active_normals(self, x, tol):
        sl = self.slacks(x)
        return [self.normals[i] for i in np.flatnonzero(np.abs(sl) <= tol)]

    def descriptor(self):
        return {"type": "polyhedron", "points": self.points.tolist(), "normals": self.normals.tolist(),
                "feasible": self.feasible.tolist()}


ConvexBody = Union[Box, Ball, Subspace, Polyhedron]


def body_from_descriptor(desc: dict) -> ConvexBody:
    """Build a body from its JSON descriptor (see README for the field names)."""
    if not isinstance(desc, dict) or "type" not in desc:
        raise ContractError("body descriptor must be an object with a 'type' field")
    kind = desc["type"]
    try:
        if kind == "box":
            return Box(desc["lower"], desc["upper"])
        if kind == "ball":
            return Ball(desc["center"], desc["radius"])
        if kind == "subspace":
            return Subspace(desc["basis"])
        if kind == "polyhedron":
            return Polyhedron(desc["points"], desc["normals"], desc["feasible"])
    except KeyError as exc:
        raise ContractError(f"body descriptor of type {kind!r} is missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ContractError):
            raise
        raise ContractError(f"malformed {kind!r} descriptor: {exc}") from exc
    raise ContractError(f"unknown body type {kind!r}")


def load_body(path) -> ConvexBody:
    with open(path) as fh:
        try:
            desc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ContractError(f"body file {path} is not valid JSON: {exc}") from exc
    return body_from_descriptor(desc)


def project(K: ConvexBody, x) -> np.ndarray:
    x = _vec(x)
    if x.size != K.dim:
        raise ContractError(f"point has dimension {x.size}, body has {K.dim}")
    if not np.all(np.isfinite(x)):
        raise ContractError("cannot project a non-finite point")
    return K.project(x)


def distance(K: ConvexBody, x) -> float:
    x = _vec(x)
    return float(np.linalg.norm(x - project(K, x)))


def active_normals(K: ConvexBody, x, tol: float = ACTIVE_TOL) -> list[np.ndarray]:
    """Unit generators of the normal cone at a point of ``K``."""
    x = _vec(x)
    if distance(K, x) > tol:
        raise ContractError("active_normals needs a point of the body (within tol)")
    return K.active_normals(x, tol)


def in_tangent_cone(K: ConvexBody, x, v, tol: float = ACTIVE_TOL) -> bool:
    """``v`` lies in ``T_K(x)`` iff ``<s, v> <= tol`` for every active normal ``s``."""
    v = _vec(v)
    return all(float(s @ v) <= tol for s in active_normals(K, x, tol))


def tangent_directions(K: ConvexBody, x, rng: np.random.Generator, n: int = 32, step: float = 1e-3):
    """Feasible directions ``(p_K(x + step u) - x) / step`` for random ``u``; all lie in ``T_K(x)``."""
    x = _vec(x)
    out = []
    for _ in range(n):
        u = rng.standard_normal(x.size)
        out.append((project(K, x + step * u) - x) / step)
    return out


def projection_polar_check(K: ConvexBody, y, tol: float = 1e-8, rng=None, n_directions: int = 32) -> bool:
    """Check that ``y - p_K(y)`` is in the polar of ``T_K(p_K(y))`` on sampled tangent directions."""
    rng = np.random.default_rng(0) if rng is None else rng
    y = _vec(y)
    p = project(K, y)
    r = y - p
    rn = np.linalg.norm(r)
    if rn == 0.0:
        return True
    dirs = tangent_directions(K, p, rng, n_directions)
    # directions from the cone description itself, projected onto the cone's generators' polar
    normals = K.active_normals(p, max(tol, ACTIVE_TOL))
    for _ in range(n_directions):
        u = rng.standard_normal(y.size)
        if all(float(s @ u) <= 0 for s in normals):
            dirs.append(u)
    return all(float(r @ v) <= tol * rn * max(1.0, np.linalg.norm(v)) for v in dirs)
