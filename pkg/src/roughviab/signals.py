"""Fractional Brownian motion sampling, time augmentation, rough-path lifts and
the law-of-iterated-logarithm roughness proxy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from ._io import write_csv
from .errors import ContractError, NumericError
from .rough_path import RoughPath, level_for_alpha, rough_path_from_points

CHOLESKY_MAX_STEPS = 8192
JITTER = 1e-12
LIL_T_MAX = math.exp(-2.0)


@dataclass(frozen=True)
class FbmSpec:
    hurst: float
    dim: int = 1
    horizon: float = 1.0
    steps: int = 1024
    seed: int = 1

    def __post_init__(self):
        if not 0.0 < self.hurst < 1.0:
            raise ContractError(f"Hurst parameter must lie in (0, 1), got {self.hurst}")
        if self.dim < 1:
            raise ContractError("fBm dimension must be at least 1")
        if self.horizon <= 0:
            raise ContractError("horizon must be positive")
        if self.steps < 2:
            raise ContractError("need at least two steps")

    @property
    def times(self) -> np.ndarray:
        return self.horizon * np.arange(self.steps + 1) / self.steps


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """A signal sampled on a uniform grid; ``values`` has shape ``(n+1, e)``."""

    times: np.ndarray
    values: np.ndarray
    augmented: bool = False
    hurst: Optional[float] = field(default=None)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.size:
            raise ContractError("times and values must have matching length")
        if np.any(np.diff(t) <= 0):
            raise ContractError("times must be strictly increasing")
        if self.augmented and not np.array_equal(v[:, 0], t):
            raise ContractError("augmented signal must carry time as its first coordinate")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path):
        cols = [self.times] + [self.values[:, k] for k in range(self.dim)]
        header = ["t"] + [f"w{k + 1}" for k in range(self.dim)]
        return write_csv(path, header, cols)


def fbm_covariance(s, t, H: float):
    """``cov(B_s, B_t) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2``."""
    if not 0.0 < H < 1.0:
        raise ContractError(f"Hurst parameter must lie in (0, 1), got {H}")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * H
    out = 0.5 * (np.abs(t) ** h2 + np.abs(s) ** h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=16)
def _cholesky_unit(H: float, n: int) -> np.ndarray:
    # factor for the grid j/n, j = 1..n; horizon scaling is applied by self-similarity
    grid = np.arange(1, n + 1) / n
    cov = fbm_covariance(grid[:, None], grid[None, :], H)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov[np.diag_indices(n)] += JITTER * float(np.max(np.diag(cov)))
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"fBm covariance is not positive definite (H={H}, n={n})") from exc
    L.setflags(write=False)
    return L


@lru_cache(maxsize=16)
def _circulant_sqrt_eigs(H: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * H
    gamma = 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * lam.max():
        raise NumericError(f"circulant embedding failed: negative eigenvalue {lam.min():.3e}")
    out = np.sqrt(np.clip(lam, 0.0, None) / row.size)
    out.setflags(write=False)
    return out


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for ensemble member ``index`` of a run seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def sample_fbm(spec: FbmSpec, rng: np.random.Generator | None = None, method: str = "auto") -> SampledSignal:
    """Sample an ``e``-dimensional fBm on the uniform grid of ``spec``.

    ``method`` is ``"cholesky"`` (exact covariance factorization, at most
    8192 steps), ``"davies-harte"`` (circulant embedding of the increments) or
    ``"auto"`` which picks Cholesky whenever it is allowed.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n, e, H = spec.steps, spec.dim, spec.hurst
    if method == "auto":
        method = "cholesky" if n <= CHOLESKY_MAX_STEPS else "davies-harte"
    scale = spec.horizon ** H
    values = np.zeros((n + 1, e))
    if method == "cholesky":
        if n > CHOLESKY_MAX_STEPS:
            raise ContractError(f"Cholesky sampling is limited to {CHOLESKY_MAX_STEPS} steps")
        L = _cholesky_unit(float(H), int(n))
        z = rng.standard_normal((n, e))
        values[1:] = scale * (L @ z)
    elif method == "davies-harte":
        sq = _circulant_sqrt_eigs(float(H), int(n))
        for k in range(e):
            z = rng.standard_normal(2 * n) + 1j * rng.standard_normal(2 * n)
            fgn = np.fft.fft(sq * z)[:n].real
            values[1:, k] = np.cumsum(fgn) * (spec.horizon / n) ** H
    else:
        raise ContractError(f"unknown sampling method {method!r}")
    return SampledSignal(spec.times, values, augmented=False, hurst=H)


def fbm_ensemble(spec: FbmSpec, n_paths: int, method: str = "auto") -> list[SampledSignal]:
    """``n_paths`` independent samples; path ``i`` uses :func:`path_rng` ``(spec.seed, i)``."""
    return [sample_fbm(spec, path_rng(spec.seed, i), method) for i in range(n_paths)]


def time_augment(w: SampledSignal) -> SampledSignal:
    """Prepend time as coordinate 1: ``W_t = (t, w_t)``."""
    if w.augmented:
        raise ContractError("signal is already time-augmented")
    values = np.column_stack([w.times, w.values])
    return SampledSignal(w.times, values, augmented=True, hurst=w.hurst)


def drop_time(w: SampledSignal) -> SampledSignal:
    if not w.augmented:
        raise ContractError("signal is not time-augmented")
    return SampledSignal(w.times, w.values[:, 1:], augmented=False, hurst=w.hurst)


def default_alpha(H: float) -> float:
    """Hölder exponent ``H - 0.05`` pulled back into (1/4, 1) when needed."""
    alpha = H - 0.05
    if alpha <= 0.25:
        alpha = 0.5 * (0.25 + H)
    return min(alpha, 1.0)


def lift(w: SampledSignal, alpha: float | None = None, level: int | None = None) -> RoughPath:
    """Rough path given by the signature of the piecewise-linear interpolation of ``w``.

    The level defaults to ``floor(1/alpha)``; ``level`` overrides it for experiments.
    """
    if alpha is None:
        if w.hurst is None:
            raise ContractError("alpha is required when the signal carries no Hurst parameter")
        alpha = default_alpha(w.hurst)
    lvl = level_for_alpha(alpha)
    if w.hurst is not None and not alpha < w.hurst:
        raise ContractError(f"alpha={alpha} must be smaller than the Hurst parameter {w.hurst}")
    if level is not None:
        lvl = level
    return rough_path_from_points(w.times, w.values, alpha, lvl)


def lil_profile(t):
    """``l(t) = sqrt(2 log log (1/t))`` on ``(0, 1/e]``."""
    t = np.asarray(t, dtype=float)
    return np.sqrt(2.0 * np.log(np.log(1.0 / t)))


def lil_window(times, t_min: float | None = None, t_max: float | None = None) -> np.ndarray:
    """Boolean mask of grid times inside the admissible window ``[t_min, t_max]``.

    Defaults: ``t_min`` is the first positive grid time, ``t_max = e^{-2}``.
    The profile vanishes at ``1/e``, so ``t_max`` must stay strictly below it.
    """
    times = np.asarray(times, dtype=float)
    pos = times[times > 0]
    if t_min is None:
        t_min = float(pos[0]) if pos.size else math.inf
    if t_max is None:
        t_max = LIL_T_MAX
    if not t_max < math.exp(-1.0):
        raise ContractError("t_max must be strictly below 1/e where the LIL profile vanishes")
    mask = (times >= t_min) & (times <= t_max) & (times > 0)
    if not mask.any():
        raise ContractError(f"empty LIL window [{t_min}, {t_max}] on this grid")
    return mask


def _as_directions(directions, e: int) -> np.ndarray:
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    if D.shape[1] != e:
        raise ContractError(f"directions must live in R^{e}")
    if not np.allclose(np.linalg.norm(D, axis=1), 1.0, atol=1e-9):
        raise ContractError("directions must be unit vectors")
    return D


def lil_statistic(w: SampledSignal, beta: float, directions, t_min=None, t_max=None) -> np.ndarray:
    """Per-direction grid minimum of ``<delta, w_t> / (t^beta l(t))`` over the LIL window.

    A finite-resolution proxy for the liminf as ``t -> 0+``.
    """
    if not 0.0 < beta < 1.0:
        raise ContractError("beta must lie in (0, 1)")
    if w.augmented:
        w = drop_time(w)
    D = _as_directions(directions, w.dim)
    mask = lil_window(w.times, t_min, t_max)
    t = w.times[mask]
    scaled = w.values[mask] / (t ** beta * lil_profile(t))[:, None]
    return (scaled @ D.T).min(axis=0)


def circle_directions(n: int) -> np.ndarray:
    """``n`` equally spaced unit vectors of R^2 starting at ``e_1``."""
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.sin(ang)])
