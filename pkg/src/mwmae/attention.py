"""Multi-window multi-head attention.

Each head projects the input to d_k dims, partitions the token axis into
non-overlapping windows of a head-specific size, and runs scaled dot-product
attention independently inside each window. Window sizes come from the
divisors of the token count: every divisor strictly between 1 and n, in
ascending order, plus two full-length (global) heads. Head outputs are
concatenated and mixed by a shared output projection, which is what lets
information cross window boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError, WindowSizeError
from .tensor import Tensor


@dataclass(frozen=True)
class WindowSchedule:
    """Ordered per-head window sizes for one attention module."""

    n_p: int
    windows: tuple[int, ...]

    def __post_init__(self):
        for w in self.windows:
            if self.n_p % w != 0:
                raise ContractError(f"window {w} does not divide n_p={self.n_p}")

    @property
    def n_heads(self) -> int:
        return len(self.windows)


def window_schedule(n_p: int) -> WindowSchedule:
    """Ascending proper divisors of n_p (excluding 1 and n_p), then two global heads."""
    if n_p < 2:
        raise ContractError(f"n_p must be >= 2, got {n_p}")
    locals_ = [d for d in range(2, n_p) if n_p % d == 0]
    return WindowSchedule(n_p, tuple(locals_ + [n_p, n_p]))


def global_schedule(n_p: int, n_heads: int) -> WindowSchedule:
    """All-global schedule, i.e. standard multi-head attention."""
    return WindowSchedule(n_p, (n_p,) * n_heads)


@dataclass
class AttentionParams:
    """Per-head Q/K/V projections (d_m x d_k each) and a shared output projection."""

    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_o: Tensor

    @property
    def n_heads(self) -> int:
        return len(self.w_q)

    @property
    def d_k(self) -> int:
        return self.w_q[0].shape[1]

    @staticmethod
    def init(d_m: int, n_heads: int, rng: np.random.Generator) -> "AttentionParams":
        if d_m % n_heads != 0:
            raise ContractError(f"d_m={d_m} not divisible by n_heads={n_heads}")
        d_k = d_m // n_heads

        def glorot(n_in, n_out):
            bound = np.sqrt(6.0 / (n_in + n_out))
            return Tensor(rng.uniform(-bound, bound, (n_in, n_out)), requires_grad=True)

        return AttentionParams(
            w_q=[glorot(d_m, d_k) for _ in range(n_heads)],
            w_k=[glorot(d_m, d_k) for _ in range(n_heads)],
            w_v=[glorot(d_m, d_k) for _ in range(n_heads)],
            w_o=glorot(n_heads * d_k, d_m),
        )

    def named(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for i in range(self.n_heads):
            out[f"{prefix}.wq{i}"] = self.w_q[i]
            out[f"{prefix}.wk{i}"] = self.w_k[i]
            out[f"{prefix}.wv{i}"] = self.w_v[i]
        out[f"{prefix}.wo"] = self.w_o
        return out


@dataclass
class HeadTap:
    """Optional sink for per-head attention probabilities and head outputs."""

    probs: list[np.ndarray] = field(default_factory=list)
    head_out: list[np.ndarray] = field(default_factory=list)


def attention(q: Tensor, k: Tensor, v: Tensor, tap: HeadTap | None = None) -> Tensor:
    """softmax(Q Kᵀ / sqrt(d_k)) V over the last two axes."""
    if q.shape != k.shape or q.shape != v.shape:
        raise DimensionError(
            f"attention: Q/K/V shapes differ: {q.shape}, {k.shape}, {v.shape}"
        )
    d_k = q.shape[-1]
    scores = T.scale(T.matmul(q, T.transpose(k)), 1.0 / np.sqrt(d_k))
    probs = T.softmax_lastdim(scores)
    if tap is not None:
        tap.probs.append(probs.data.copy())
    return T.matmul(probs, v)


def win_attention(
    q: Tensor, k: Tensor, v: Tensor, win: int, tap: HeadTap | None = None
) -> Tensor:
    """Partition the token axis into windows of size `win`, attend within each.

    Inputs are (n, d_k); token order is preserved in the output.
    """
    n, d_k = q.shape
    if n % win != 0:
        raise WindowSizeError(f"window {win} does not divide token count {n}")
    m = n // win
    qw = T.reshape(q, (m, win, d_k))
    kw = T.reshape(k, (m, win, d_k))
    vw = T.reshape(v, (m, win, d_k))
    out = attention(qw, kw, vw, tap=tap)
    return T.reshape(out, (n, d_k))


def mw_mha(
    x: Tensor,
    params: AttentionParams,
    schedule: WindowSchedule,
    tap: HeadTap | None = None,
) -> Tensor:
    """Multi-window attention: per-head windowed attention, concat, project.

    With an all-global schedule this reduces exactly to standard MHA.
    """
    n, d_m = x.shape
    if len(schedule.windows) != params.n_heads:
        raise ContractError(
            f"schedule has {len(schedule.windows)} windows, params have "
            f"{params.n_heads} heads"
        )
    if d_m != params.n_heads * params.d_k:
        raise DimensionError(
            f"d_m={d_m} != n_heads*d_k={params.n_heads * params.d_k}"
        )
    heads = []
    for i, win in enumerate(schedule.windows):
        if n % win != 0:
            raise WindowSizeError(
                f"head {i}: window {win} does not divide token count {n}"
            )
        q = T.matmul(x, params.w_q[i])
        k = T.matmul(x, params.w_k[i])
        v = T.matmul(x, params.w_v[i])
        head = win_attention(q, k, v, win, tap=tap)
        if tap is not None:
            tap.head_out.append(head.data.copy())
        heads.append(head)
    return T.matmul(T.concat_lastdim(heads), params.w_o)


def mha(x: Tensor, params: AttentionParams, tap: HeadTap | None = None) -> Tensor:
    """Standard multi-head attention: mw_mha with every window global."""
    n = x.shape[0]
    return mw_mha(x, params, global_schedule(n, params.n_heads), tap=tap)


def block_diagonal_probs(window_probs: np.ndarray, n: int) -> np.ndarray:
    """Embed per-window attention (m, win, win) as a row-stochastic n x n matrix."""
    if window_probs.ndim == 2:
        return window_probs
    m, win, _ = window_probs.shape
    if m * win != n:
        raise ContractError(f"cannot embed {window_probs.shape} into {n}x{n}")
    full = np.zeros((n, n))
    for b in range(m):
        full[b * win:(b + 1) * win, b * win:(b + 1) * win] = window_probs[b]
    return full
