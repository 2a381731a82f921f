"""Drift/diffusion pairs with derivative oracles, the time-augmented field
``f = [b | sigma]``, iterated vector-field compositions and the Itô drift
correction.

Column index convention: the augmented field has ``e + 1`` columns, column 0
is the drift ``b`` and columns ``1..e`` are the diffusion columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractError

FD_STEP_JAC = 1e-5
FD_STEP_HESS = 1e-4


def central_jacobian(fn: Callable, x: np.ndarray, rel_step: float = FD_STEP_JAC) -> np.ndarray:
    """Central differences of ``fn`` at ``x``; the derivative axis is appended last."""
    x = np.asarray(x, dtype=float)
    h = rel_step * (1.0 + np.linalg.norm(x))
    cols = []
    for k in range(x.size):
        dx = np.zeros_like(x)
        dx[k] = h
        cols.append((np.asarray(fn(x + dx)) - np.asarray(fn(x - dx))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def strict_floor(gamma: float) -> int:
    """Largest integer strictly smaller than ``gamma``."""
    return int(math.ceil(gamma)) - 1


@dataclass(frozen=True, eq=False)
class VectorFieldPair:
    """Drift ``b: R^d -> R^d`` and diffusion ``sigma: R^d -> R^{d x e}``.

    Derivative oracles use the layout ``jac_b[a, k] = d_k b_a``,
    ``jac_sigma[a, j, k] = d_k sigma_{a j}``, ``hess_b[a, k, l]`` and
    ``hess_sigma[a, j, k, l]``.  Missing oracles fall back to central
    differences unless ``fd_fallback`` is off.  ``gamma`` is the declared
    Lipschitz regularity; it is never verified.
    """

    dim_state: int
    dim_noise: int
    b: Callable
    sigma: Callable
    jac_b: Optional[Callable] = None
    jac_sigma: Optional[Callable] = None
    hess_b: Optional[Callable] = None
    hess_sigma: Optional[Callable] = None
    fd_fallback: bool = True
    gamma: Optional[float] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def drift(self, x) -> np.ndarray:
        return np.asarray(self.b(np.asarray(x, dtype=float)), dtype=float).reshape(self.dim_state)

    def diffusion(self, x) -> np.ndarray:
        s = np.asarray(self.sigma(np.asarray(x, dtype=float)), dtype=float)
        if s.shape != (self.dim_state, self.dim_noise):
            raise ContractError(f"sigma(x) has shape {s.shape}, expected {(self.dim_state, self.dim_noise)}")
        return s

    def _need_fd(self, what: str):
        if not self.fd_fallback:
            raise ContractError(f"no {what} oracle supplied and finite-difference fallback is disabled")

    def drift_jacobian(self, x) -> np.ndarray:
        if self.jac_b is not None:
            return np.asarray(self.jac_b(np.asarray(x, dtype=float)), dtype=float)
        self._need_fd("drift Jacobian")
        return central_jacobian(self.drift, x)

    def diffusion_jacobian(self, x) -> np.ndarray:
        if self.jac_sigma is not None:
            return np.asarray(self.jac_sigma(np.asarray(x, dtype=float)), dtype=float)
        self._need_fd("diffusion Jacobian")
        return central_jacobian(self.diffusion, x)

    def drift_hessian(self, x) -> np.ndarray:
        if self.hess_b is not None:
            return np.asarray(self.hess_b(np.asarray(x, dtype=float)), dtype=float)
        self._need_fd("drift Hessian")
        return central_jacobian(self.drift_jacobian, x, FD_STEP_HESS)

    def diffusion_hessian(self, x) -> np.ndarray:
        if self.hess_sigma is not None:
            return np.asarray(self.hess_sigma(np.asarray(x, dtype=float)), dtype=float)
        self._need_fd("diffusion Hessian")
        return central_jacobian(self.diffusion_jacobian, x, FD_STEP_HESS)

    # augmented field f = [b | sigma] and its derivatives
    def field(self, x) -> np.ndarray:
        return np.column_stack([self.drift(x), self.diffusion(x)])

    def field_jacobian(self, x) -> np.ndarray:
        """``J[a, j, k] = d_k f_{a j}`` for the augmented field."""
        return np.concatenate([self.drift_jacobian(x)[:, None, :], self.diffusion_jacobian(x)], axis=1)

    def field_hessian(self, x) -> np.ndarray:
        return np.concatenate([self.drift_hessian(x)[:, None], self.diffusion_hessian(x)], axis=1)

    def with_gamma(self, gamma: float) -> "VectorFieldPair":
        return replace(self, gamma=gamma)


def assemble_f(vf: VectorFieldPair) -> Callable[[np.ndarray], np.ndarray]:
    """The time-augmented field ``x -> [b(x) | sigma(x)]`` of shape ``(d, e+1)``."""
    return vf.field


def iterated_apply(vf: VectorFieldPair, x, indices: Sequence[int]) -> np.ndarray:
    """Composition ``f_{i_1} ... f_{i_k} I(x)`` for ``k <= 3`` (0-based column indices)."""
    idx = tuple(int(i) for i in indices)
    k = len(idx)
    if not 1 <= k <= 3:
        raise ContractError("iterated_apply supports compositions of length 1 to 3")
    if any(i < 0 or i > vf.dim_noise for i in idx):
        raise ContractError(f"column indices must lie in [0, {vf.dim_noise}]")
    x = np.asarray(x, dtype=float)
    F = vf.field(x)
    if k == 1:
        return F[:, idx[0]]
    J = vf.field_jacobian(x)
    if k == 2:
        i1, i2 = idx
        return J[:, i2, :] @ F[:, i1]
    i1, i2, i3 = idx
    H = vf.field_hessian(x)
    # d/dx [J_{i3}(x) F_{i2}(x)] applied to F_{i1}(x)
    first = J[:, i3, :] @ (J[:, i2, :] @ F[:, i1])
    second = np.einsum("akl,k,l->a", H[:, i3], F[:, i2], F[:, i1])
    return first + second


def _diffusion_products(vf: VectorFieldPair, x) -> np.ndarray:
    """``P[:, i, j] = sum_k sigma_{k i} d_k sigma_{., j}`` evaluated at ``x``."""
    S = vf.diffusion(x)
    JS = vf.diffusion_jacobian(x)
    return np.einsum("ajk,ki->aij", JS, S)


def ito_correction(vf: VectorFieldPair, convention: str = "all-pairs") -> VectorFieldPair:
    """Drift-corrected pair turning an Itô equation into its rough/Stratonovich form.

    ``convention="all-pairs"`` subtracts ``1/2 sum_{i,j} sigma_i sigma_j`` over all
    pairs ``(i, j)``; ``convention="diagonal"`` uses only ``i = j`` (the usual
    Itô-Stratonovich correction).  The two agree when ``e = 1``.
    """
    if convention not in ("all-pairs", "diagonal"):
        raise ContractError(f"unknown Itô correction convention {convention!r}")

    def corr(x):
        P = _diffusion_products(vf, x)
        if convention == "all-pairs":
            return 0.5 * P.sum(axis=(1, 2))
        return 0.5 * np.einsum("aii->a", P)

    def b_new(x):
        return vf.drift(x) - corr(x)

    return replace(
        vf,
        b=b_new,
        jac_b=None,
        hess_b=None,
        fd_fallback=True,
        name=f"{vf.name}+ito[{convention}]",
    )


# -- presets ------------------------------------------------------------------


@dataclass(frozen=True)
class Preset:
    """A named vector-field pair plus the body it is meant to be studied on."""

    name: str
    vf: VectorFieldPair
    body: Optional[dict]


def logistic(dim: int = 2, m=None, noise_scale: float = 1.0) -> VectorFieldPair:
    """``b_i(x) = m_i x_i (1 - x_i)`` and ``sigma(x) = noise_scale * diag(x_i (1 - x_i))``."""
    m = np.ones(dim) if m is None else np.broadcast_to(np.asarray(m, dtype=float), (dim,)).copy()
    c = float(noise_scale)
    eye = np.eye(dim)
    # delta_{a j k} and delta_{a j k l}
    d3 = np.einsum("ij,ik->ijk", eye, eye)
    d4 = np.einsum("ijk,il->ijkl", d3, eye)

    def b(x):
        return m * x * (1.0 - x)

    def sigma(x):
        return c * np.diag(x * (1.0 - x))

    def jac_b(x):
        return np.diag(m * (1.0 - 2.0 * x))

    def jac_sigma(x):
        return c * d3 * (1.0 - 2.0 * x)[:, None, None]

    def hess_b(x):
        return d3 * (-2.0 * m)[:, None, None]

    def hess_sigma(x):
        return d4 * (-2.0 * c)

    return VectorFieldPair(
        dim, dim, b, sigma, jac_b, jac_sigma, hess_b, hess_sigma,
        name="logistic", params={"m": m.tolist(), "noise_scale": c},
    )


def linear(drift_matrix, noise_matrices, name: str = "linear") -> VectorFieldPair:
    """``b(x) = A x`` and ``sigma_{., k}(x) = B_k x``."""
    A = np.asarray(drift_matrix, dtype=float)
    Bs = np.asarray(noise_matrices, dtype=float)
    if Bs.ndim == 2:
        Bs = Bs[None]
    e, d = Bs.shape[0], A.shape[0]
    # jac_sigma[a, j, k] = B_j[a, k]
    JS = np.transpose(Bs, (1, 0, 2)).copy()

    return VectorFieldPair(
        d, e,
        b=lambda x: A @ x,
        sigma=lambda x: np.einsum("jak,k->aj", Bs, x),
        jac_b=lambda x: A,
        jac_sigma=lambda x: JS,
        hess_b=lambda x: np.zeros((d, d, d)),
        hess_sigma=lambda x: np.zeros((d, e, d, d)),
        name=name,
        params={"drift_matrix": A.tolist(), "noise_matrices": Bs.tolist()},
    )


def constant_noise(drift, sigma_matrix, name: str = "constant") -> VectorFieldPair:
    """Constant drift vector and constant diffusion matrix."""
    bvec = np.asarray(drift, dtype=float)
    S = np.asarray(sigma_matrix, dtype=float)
    d, e = S.shape
    return VectorFieldPair(
        d, e,
        b=lambda x: bvec.copy(),
        sigma=lambda x: S.copy(),
        jac_b=lambda x: np.zeros((d, d)),
        jac_sigma=lambda x: np.zeros((d, e, d)),
        hess_b=lambda x: np.zeros((d, d, d)),
        hess_sigma=lambda x: np.zeros((d, e, d, d)),
        name=name,
    )


def _rotation_generator(dim: int) -> np.ndarray:
    A = np.zeros((dim, dim))
    for i in range(0, dim - 1, 2):
        A[i, i + 1], A[i + 1, i] = -1.0, 1.0
    return A


def _default_linear(dim: int, noise_dim: int) -> VectorFieldPair:
    A = -0.5 * np.eye(dim) + 0.5 * _rotation_generator(dim)
    Bs = []
    for k in range(noise_dim):
        B = np.zeros((dim, dim))
        for i in range(dim):
            B[i, (i + k) % dim] += 0.4
            B[(i + k + 1) % dim, i] -= 0.3 / (k + 1)
        Bs.append(B)
    return linear(A, Bs)


def _body_box(dim):
    return {"type": "box", "lower": [0.0] * dim, "upper": [1.0] * dim}


def _body_ball(dim):
    return {"type": "ball", "center": [0.0] * dim, "radius": 1.0}


def make_preset(name: str, dim: int = 2, **params) -> Preset:
    """Build a registered preset by name (see :data:`PRESETS`)."""
    if name not in PRESETS:
        raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name](dim, **params)


def _p_logistic(dim, m=None, noise_scale=1.0):
    return Preset("logistic", logistic(dim, m, noise_scale), _body_box(dim))


def _p_linear(dim, noise_dim=2):
    return Preset("linear", _default_linear(dim, noise_dim), None)


def _p_rotation_ball(dim):
    if dim % 2:
        raise ContractError("rotation-ball needs an even dimension")
    A = _rotation_generator(dim)
    vf = linear(np.zeros((dim, dim)), A[None], name="rotation-ball")
    return Preset("rotation-ball", vf, _body_ball(dim))


def _p_identity_ball(dim):
    vf = constant_noise(np.zeros(dim), np.eye(dim), name="identity-ball")
    return Preset("identity-ball", vf, _body_ball(dim))


def _p_outward_drift(dim):
    drift = np.zeros(dim)
    drift[0] = 1.0
    vf = constant_noise(drift, np.zeros((dim, 1)), name="outward-drift")
    return Preset("outward-drift", vf, _body_box(dim))


PRESETS = {
    "logistic": _p_logistic,
    "linear": _p_linear,
    "rotation-ball": _p_rotation_ball,
    "identity-ball": _p_identity_ball,
    "outward-drift": _p_outward_drift,
}
