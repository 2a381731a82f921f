"""Truncated tensor algebra over R^m (levels 1..3), path signatures and
group-valued paths with Chen-consistent increments.

Level-0 components are implicit and always equal to one, so a group element
is stored as the tuple of its tensors ``(T_1, ..., T_N)`` with ``T_k`` of shape
``(m,) * k``.  Internally most kernels work on *batched* level tuples whose
arrays carry extra leading axes; the public :class:`TruncatedTensor` is the
unbatched, immutable view.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError

MAX_LEVEL = 3
# Exhaustive pair enumeration is used up to this many grid points.
HOLDER_EXACT_MAX_POINTS = 4096
HOLDER_SAMPLED_PAIRS = 1_000_000


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _outer(x: np.ndarray, y: np.ndarray, p: int, q: int) -> np.ndarray:
    """Batched outer product of a ``p``-tensor with a ``q``-tensor."""
    xs = x.reshape(x.shape + (1,) * q)
    ys = y.reshape(y.shape[: y.ndim - q] + (1,) * p + y.shape[y.ndim - q:])
    return xs * ys


def mul_levels(a: Sequence[np.ndarray], b: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Truncated product of two (possibly batched) group-like level tuples."""
    n = len(a)
    out = []
    for k in range(1, n + 1):
        c = a[k - 1] + b[k - 1]
        for i in range(1, k):
            c = c + _outer(a[i - 1], b[k - i - 1], i, k - i)
        out.append(c)
    return out


def inv_levels(g: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Inverse in the truncated algebra (level-0 component equal to one)."""
    x: list[np.ndarray] = []
    for k in range(1, len(g) + 1):
        c = -g[k - 1]
        for i in range(1, k):
            c = c - _outer(g[i - 1], x[k - i - 1], i, k - i)
        x.append(c)
    return x


def segment_levels(v: np.ndarray, level: int) -> list[np.ndarray]:
    """Signature levels of straight segments with increments ``v[..., :]``."""
    v = np.asarray(v, dtype=float)
    out = [v]
    for k in range(2, level + 1):
        out.append(_outer(out[-1], v, k - 1, 1) / k)
    return out


def chen_reduce(levels: Sequence[np.ndarray], axis_len: int | None = None) -> list[np.ndarray]:
    """Ordered product over the first batch axis by pairwise (tree) reduction."""
    cur = [np.asarray(t) for t in levels]
    n = cur[0].shape[0] if axis_len is None else axis_len
    if n == 0:
        raise ContractError("cannot reduce an empty sequence of increments")
    while n > 1:
        half = n // 2
        even = [t[0: 2 * half: 2] for t in cur]
        odd = [t[1: 2 * half: 2] for t in cur]
        merged = mul_levels(even, odd)
        if n % 2:
            merged = [np.concatenate([m, t[-1:]], axis=0) for m, t in zip(merged, cur)]
        cur = merged
        n = cur[0].shape[0]
    return [t[0] for t in cur]


def _check_level(level: int) -> None:
    if not isinstance(level, (int, np.integer)) or not 1 <= level <= MAX_LEVEL:
        raise ContractError(f"level must be an integer in [1, {MAX_LEVEL}], got {level!r}")


def level_for_alpha(alpha: float) -> int:
    """Signature level ``floor(1/alpha)`` for a Hölder exponent in (1/4, 1]."""
    if not 0.25 < alpha <= 1.0:
        raise ContractError(f"alpha must lie in (1/4, 1] so that the level is at most 3, got {alpha}")
    # guard 1/alpha landing a hair under an integer, e.g. alpha = 1/3
    return min(MAX_LEVEL, int(math.floor(1.0 / alpha + 1e-12)))


@dataclass(frozen=True, eq=False)
class TruncatedTensor:
    """Element of the truncated tensor algebra with unit scalar part."""

    tensors: tuple

    def __post_init__(self):
        ts = tuple(_frozen(t) for t in self.tensors)
        _check_level(len(ts))
        m = ts[0].shape[0] if ts[0].ndim == 1 else None
        if m is None or m < 1:
            raise ContractError("level-1 tensor must be a non-empty vector")
        for k, t in enumerate(ts, start=1):
            if t.shape != (m,) * k:
                raise ContractError(f"level-{k} tensor has shape {t.shape}, expected {(m,) * k}")
        object.__setattr__(self, "tensors", ts)

    @property
    def dim(self) -> int:
        return self.tensors[0].shape[0]

    @property
    def level(self) -> int:
        return len(self.tensors)

    def __getitem__(self, k: int) -> np.ndarray:
        """Level-``k`` tensor; ``k = 0`` returns the scalar one."""
        if k == 0:
            return np.float64(1.0)
        return self.tensors[k - 1]

    @classmethod
    def identity(cls, dim: int, level: int) -> "TruncatedTensor":
        _check_level(level)
        return cls(tuple(np.zeros((dim,) * k) for k in range(1, level + 1)))

    def __mul__(self, other: "TruncatedTensor") -> "TruncatedTensor":
        return tensor_product(self, other)

    def inverse(self) -> "TruncatedTensor":
        return TruncatedTensor(tuple(inv_levels(self.tensors)))

    def dilate(self, lam: float) -> "TruncatedTensor":
        return TruncatedTensor(tuple(lam ** k * t for k, t in enumerate(self.tensors, start=1)))

    def truncate(self, level: int) -> "TruncatedTensor":
        if level > self.level:
            raise ContractError("cannot raise the truncation level of a tensor")
        return TruncatedTensor(self.tensors[:level])

    def is_identity(self, atol: float = 0.0) -> bool:
        return all(np.all(np.abs(t) <= atol) for t in self.tensors)

    def allclose(self, other: "TruncatedTensor", atol: float = 1e-12) -> bool:
        if (self.dim, self.level) != (other.dim, other.level):
            return False
        return all(np.allclose(a, b, rtol=0.0, atol=atol) for a, b in zip(self.tensors, other.tensors))

    def max_abs_diff(self, other: "TruncatedTensor") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.tensors, other.tensors))

    def __repr__(self):
        return f"TruncatedTensor(dim={self.dim}, level={self.level})"


def tensor_product(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Degree-truncated product ``(a*b)_k = sum_{i+j=k} a_i (x) b_j``."""
    if a.dim != b.dim or a.level != b.level:
        raise ContractError(
            f"tensor_product needs matching dim/level, got ({a.dim},{a.level}) and ({b.dim},{b.level})"
        )
    return TruncatedTensor(tuple(mul_levels(a.tensors, b.tensors)))


def segment_signature(v, level: int) -> TruncatedTensor:
    """Signature of the straight segment with increment ``v``: ``v^{(x)k}/k!``."""
    _check_level(level)
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.ndim != 1:
        raise ContractError("segment increment must be a vector")
    return TruncatedTensor(tuple(segment_levels(v, level)))


def signature_piecewise_linear(points, level: int) -> TruncatedTensor:
    """Signature of the polyline through ``points`` (shape ``(n, m)``)."""
    _check_level(level)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 2:
        raise ContractError("a polyline needs at least two vertices")
    segs = segment_levels(np.diff(pts, axis=0), level)
    return TruncatedTensor(tuple(chen_reduce(segs)))


def homogeneous_norm(g: TruncatedTensor) -> float:
    """Homogeneous norm ``max_k ||g_k||_F^{1/k}`` (equivalent to the CC norm)."""
    return float(max(np.linalg.norm(t.ravel()) ** (1.0 / k) for k, t in enumerate(g.tensors, start=1)))


def _batched_homogeneous_norm(levels: Sequence[np.ndarray], batch_ndim: int) -> np.ndarray:
    out = None
    for k, t in enumerate(levels, start=1):
        flat = t.reshape(t.shape[:batch_ndim] + (-1,))
        nk = np.linalg.norm(flat, axis=-1) ** (1.0 / k)
        out = nk if out is None else np.maximum(out, nk)
    return out


@dataclass(frozen=True, eq=False)
class RoughPath:
    """Group-valued path on a grid, stored through its per-interval increments.

    ``levels[k-1]`` has shape ``(n, m, ..., m)`` and holds the level-``k``
    component of the increment over ``[times[j], times[j+1]]``.
    """

    times: np.ndarray
    levels: tuple
    alpha: float

    def __post_init__(self):
        times = _frozen(self.times)
        levels = tuple(_frozen(t) for t in self.levels)
        if times.ndim != 1 or times.size < 2:
            raise ContractError("a rough path needs at least two grid times")
        if np.any(np.diff(times) <= 0):
            raise ContractError("grid times must be strictly increasing")
        _check_level(len(levels))
        n = times.size - 1
        m = levels[0].shape[1] if levels[0].ndim == 2 else -1
        for k, t in enumerate(levels, start=1):
            if t.shape != (n,) + (m,) * k:
                raise ContractError(f"level-{k} increments have shape {t.shape}, expected {(n,) + (m,) * k}")
        if not 0.0 < self.alpha <= 1.0:
            raise ContractError("alpha must lie in (0, 1]")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "levels", levels)

    @property
    def dim(self) -> int:
        return self.levels[0].shape[1]

    @property
    def level(self) -> int:
        return len(self.levels)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def __len__(self):
        return self.n_steps

    def step(self, j: int) -> TruncatedTensor:
        """Stored increment over ``[times[j], times[j+1]]``."""
        return TruncatedTensor(tuple(t[j] for t in self.levels))

    @property
    def increments(self) -> list[TruncatedTensor]:
        return [self.step(j) for j in range(self.n_steps)]

    def increment(self, a: int, b: int) -> TruncatedTensor:
        return increment(self, a, b)

    def coarsen(self, indices) -> "RoughPath":
        """Rough path on the sub-grid ``times[indices]`` with Chen-composed increments."""
        idx = np.asarray(indices, dtype=int)
        if idx.ndim != 1 or idx.size < 2 or np.any(np.diff(idx) <= 0):
            raise ContractError("coarsening indices must be strictly increasing with at least two entries")
        if idx[0] < 0 or idx[-1] > self.n_steps:
            raise ContractError("coarsening indices out of range")
        gaps = np.diff(idx)
        if np.all(gaps == gaps[0]):
            r = int(gaps[0])
            start, stop = int(idx[0]), int(idx[-1])
            blocks = [t[start:stop].reshape((-1, r) + t.shape[1:]) for t in self.levels]
            # reduce along axis 1 by moving it first
            moved = [np.moveaxis(b, 1, 0) for b in blocks]
            new = chen_reduce(moved) if r > 1 else [b[0] for b in moved]
        else:
            parts = [chen_reduce([t[i:j] for t in self.levels]) for i, j in zip(idx[:-1], idx[1:])]
            new = [np.stack([p[k] for p in parts]) for k in range(self.level)]
        return RoughPath(self.times[idx], tuple(new), self.alpha)

    def truncate(self, level: int) -> "RoughPath":
        _check_level(level)
        if level > self.level:
            raise ContractError("cannot raise the level of a stored rough path")
        return RoughPath(self.times, self.levels[:level], self.alpha)


def rough_path_from_points(times, points, alpha: float, level: int | None = None) -> RoughPath:
    """Geometric rough path given by the piecewise-linear interpolation of ``points``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    lvl = level_for_alpha(alpha) if level is None else level
    _check_level(lvl)
    return RoughPath(np.asarray(times, dtype=float), tuple(segment_levels(np.diff(pts, axis=0), lvl)), alpha)


def increment(p: RoughPath, a: int, b: int) -> TruncatedTensor:
    """Chen product of the stored increments over grid-index range ``(a, b]``."""
    n = p.n_steps
    if not (0 <= a <= n and 0 <= b <= n) or a > b:
        raise ContractError(f"invalid index pair ({a}, {b}) for a path with {n} steps")
    if a == b:
        return TruncatedTensor.identity(p.dim, p.level)
    return TruncatedTensor(tuple(chen_reduce([t[a:b] for t in p.levels])))


def prefix_levels(p: RoughPath) -> list[np.ndarray]:
    """Signatures ``S_{t_0, t_j}`` for every grid index ``j`` (index 0 is the identity)."""
    m, N, n = p.dim, p.level, p.n_steps
    out = [np.zeros((n + 1,) + (m,) * k) for k in range(1, N + 1)]
    cur = [np.zeros((m,) * k) for k in range(1, N + 1)]
    for j in range(n):
        cur = mul_levels(cur, [t[j] for t in p.levels])
        for k in range(N):
            out[k][j + 1] = cur[k]
    return out


def holder_seminorm(p: RoughPath, seed: int = 0, chunk: int = 256) -> float:
    """Homogeneous alpha-Hölder seminorm ``max ||g_{s,t}|| / (t-s)^alpha`` over grid pairs.

    All pairs are used up to :data:`HOLDER_EXACT_MAX_POINTS` grid points; past
    that, :data:`HOLDER_SAMPLED_PAIRS` pairs are drawn with ``seed`` (adjacent
    pairs are always included).
    """
    X = prefix_levels(p)
    Xinv = inv_levels(X)
    t = p.times
    npts = t.size
    best = 0.0
    if npts <= HOLDER_EXACT_MAX_POINTS:
        for i0 in range(0, npts - 1, chunk):
            rows = np.arange(i0, min(i0 + chunk, npts - 1))
            a = [x[rows][:, None] for x in Xinv]
            b = [x[None, :] for x in X]
            g = mul_levels(a, b)
            norms = _batched_homogeneous_norm(g, 2)
            dt = t[None, :] - t[rows][:, None]
            mask = dt > 0
            ratio = np.where(mask, norms / np.where(mask, dt, 1.0) ** p.alpha, 0.0)
            best = max(best, float(ratio.max()))
        return best
    rng = np.random.default_rng(seed)
    i = rng.integers(0, npts, HOLDER_SAMPLED_PAIRS)
    j = rng.integers(0, npts, HOLDER_SAMPLED_PAIRS)
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    keep = lo < hi
    lo = np.concatenate([lo[keep], np.arange(npts - 1)])
    hi = np.concatenate([hi[keep], np.arange(1, npts)])
    for s in range(0, lo.size, 65536):
        li, hj = lo[s: s + 65536], hi[s: s + 65536]
        g = mul_levels([x[li] for x in Xinv], [x[hj] for x in X])
        ratio = _batched_homogeneous_norm(g, 1) / (t[hj] - t[li]) ** p.alpha
        best = max(best, float(ratio.max()))
    return best
