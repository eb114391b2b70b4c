"""Timestamp and position encoders for the sequence model.

Four enrichment signals: sinusoidal absolute position (added to content
embeddings), logarithmic temporal decay (affine-projected, added to content
embeddings), cyclic query/key rotation at fixed periods (applied inside
attention), and two learned pre-softmax bias tables (index-relative position,
log-bucketed pairwise time deltas).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CfeeConfig:
    d_model: int
    n_heads: int
    decay_tau: float = 3600.0
    n_time_buckets: int = 32
    bucket_base_delta: float = 60.0
    relpos_window: int = 64
    cyclic_periods: tuple[int, ...] = (86_400, 604_800)

    def __post_init__(self):
        if self.d_model % 2 != 0:
            raise ValueError(f"d_model must be even, got {self.d_model}")
        if self.d_model % (2 * len(self.cyclic_periods)) != 0:
            raise ValueError(
                f"d_model {self.d_model} must be divisible by 2*|periods| "
                f"({2 * len(self.cyclic_periods)}) for rotation pairing"
            )
        if self.n_time_buckets < 1:
            raise ValueError("n_time_buckets must be >= 1")
        if self.relpos_window < 1:
            raise ValueError("relpos_window must be >= 1")
        if self.decay_tau <= 0:
            raise ValueError("decay_tau must be > 0")
        if self.bucket_base_delta <= 0:
            raise ValueError("bucket_base_delta must be > 0")


@dataclass
class CfeeParams:
    """Learned pieces: the decay projection and the two per-head bias tables."""

    decay_w: np.ndarray  # (d_model,)
    decay_b: np.ndarray  # (d_model,)
    relpos_table: np.ndarray  # (n_heads, 2w+1)
    time_bias_table: np.ndarray  # (n_heads, 2B+1)

    @classmethod
    def zeros(cls, config: CfeeConfig) -> "CfeeParams":
        return cls(
            decay_w=np.zeros(config.d_model),
            decay_b=np.zeros(config.d_model),
            relpos_table=np.zeros((config.n_heads, 2 * config.relpos_window + 1)),
            time_bias_table=np.zeros((config.n_heads, 2 * config.n_time_buckets + 1)),
        )

    def validate(self, config: CfeeConfig) -> None:
        assert self.decay_w.shape == (config.d_model,)
        assert self.decay_b.shape == (config.d_model,)
        assert self.relpos_table.shape == (config.n_heads, 2 * config.relpos_window + 1)
        assert self.time_bias_table.shape == (config.n_heads, 2 * config.n_time_buckets + 1)
        for a in (self.decay_w, self.decay_b, self.relpos_table, self.time_bias_table):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite encoder parameter")


# ---------------------------------------------------------------------------
# Absolute position
# ---------------------------------------------------------------------------

def absolute_position_encoding(position: int, d_model: int) -> np.ndarray:
    """out[2i] = sin(pos / 10000^(2i/d)), out[2i+1] = cos(pos / 10000^(2i/d))."""
    if d_model % 2 != 0:
        raise ValueError("d_model must be even")
    if position < 0:
        raise ValueError("position must be >= 0")
    i = np.arange(0, d_model, 2)
    angle = position / np.power(10_000.0, i / d_model)
    out = np.empty(d_model)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def absolute_position_matrix(length: int, d_model: int) -> np.ndarray:
    i = np.arange(0, d_model, 2)
    pos = np.arange(length)[:, None]
    angle = pos / np.power(10_000.0, i / d_model)[None, :]
    out = np.empty((length, d_model))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle)
    return out


# ---------------------------------------------------------------------------
# Temporal decay
# ---------------------------------------------------------------------------

def temporal_decay_feature(t_ref: int, t_event: int, tau: float) -> float:
    """ln(1 + age/tau); monotone non-decreasing in the event's age."""
    if t_event > t_ref:
        raise ValueError(f"event time {t_event} is after reference time {t_ref}")
    return float(np.log1p((t_ref - t_event) / tau))


def temporal_decay_features(t_ref: int, timestamps: np.ndarray, tau: float) -> np.ndarray:
    ages = t_ref - np.asarray(timestamps, dtype=np.int64)
    if np.any(ages < 0):
        raise ValueError("event time after reference time")
    return np.log1p(ages / tau)


def temporal_decay_encoding(t_ref: int, t_event: int, tau: float,
                            decay_w: np.ndarray, decay_b: np.ndarray) -> np.ndarray:
    return decay_w * temporal_decay_feature(t_ref, t_event, tau) + decay_b


# ---------------------------------------------------------------------------
# Cyclic rotation
# ---------------------------------------------------------------------------

def _rotation_angles(timestamps: np.ndarray, d_model: int,
                     periods: tuple[int, ...]) -> np.ndarray:
    """Per-pair rotation angle, shape (L, d_model // 2).

    Dimensions are split evenly across periods; every pair inside a period's
    slice turns by the same angle. The modulo is taken in integer arithmetic
    so equal phases are exactly equal.
    """
    ts = np.asarray(timestamps, dtype=np.int64)
    pairs_per_period = d_model // (2 * len(periods))
    angles = np.empty((len(ts), d_model // 2))
    for pi, period in enumerate(periods):
        theta = 2.0 * np.pi * (ts % period) / period
        angles[:, pi * pairs_per_period : (pi + 1) * pairs_per_period] = theta[:, None]
    return angles


def cyclic_rotate(x: np.ndarray, timestamps, periods: tuple[int, ...]) -> np.ndarray:
    """Rotate consecutive (even, odd) feature pairs by each period's phase angle.

    Accepts a single vector with a scalar timestamp, or an (L, d) matrix with
    L timestamps. Norm-preserving.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        timestamps = np.asarray([timestamps])
    d = x.shape[1]
    if d % (2 * len(periods)) != 0:
        raise ValueError("feature width not divisible by 2*|periods|")
    ang = _rotation_angles(np.asarray(timestamps), d, periods)
    c, s = np.cos(ang), np.sin(ang)
    even, odd = x[:, 0::2], x[:, 1::2]
    out = np.empty_like(x)
    out[:, 0::2] = even * c - odd * s
    out[:, 1::2] = even * s + odd * c
    return out[0] if single else out


def cyclic_rotate_backward(grad_out: np.ndarray, timestamps,
                           periods: tuple[int, ...]) -> np.ndarray:
    """Adjoint of cyclic_rotate: rotation by the negated angles."""
    g = np.asarray(grad_out, dtype=np.float64)
    single = g.ndim == 1
    if single:
        g = g[None, :]
        timestamps = np.asarray([timestamps])
    ang = _rotation_angles(np.asarray(timestamps), g.shape[1], periods)
    c, s = np.cos(ang), np.sin(ang)
    even, odd = g[:, 0::2], g[:, 1::2]
    out = np.empty_like(g)
    out[:, 0::2] = even * c + odd * s
    out[:, 1::2] = -even * s + odd * c
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Relative position bias (list order, clipped window)
# ---------------------------------------------------------------------------

def relative_position_bias(i: int, j: int, head: int, relpos_table: np.ndarray) -> float:
    w = (relpos_table.shape[1] - 1) // 2
    offset = int(np.clip(i - j, -w, w))
    return float(relpos_table[head, offset + w])


def relpos_index_matrix(length: int, window: int) -> np.ndarray:
    """Table indices for all (i, j): clip(i-j, -w, w) + w, shape (L, L)."""
    idx = np.arange(length)
    return np.clip(idx[:, None] - idx[None, :], -window, window) + window


# ---------------------------------------------------------------------------
# Pairwise time-delta bias (signed log buckets)
# ---------------------------------------------------------------------------

def time_delta_bucket(t_i: int, t_j: int, n_buckets: int, base_delta: float) -> int:
    """Signed bucket of t_i - t_j: sign(d) * min(B-1, floor(log2(1 + |d|/base)))."""
    delta = int(t_i) - int(t_j)
    if delta == 0:
        return 0
    mag = int(np.floor(np.log2(1.0 + abs(delta) / base_delta)))
    return int(np.sign(delta)) * min(n_buckets - 1, mag)


def time_bucket_matrix(timestamps, n_buckets: int, base_delta: float) -> np.ndarray:
    """Table indices (bucket + B) for all ordered pairs, shape (L, L), in [0, 2B]."""
    ts = np.asarray(timestamps, dtype=np.int64)
    delta = ts[:, None] - ts[None, :]
    mag = np.floor(np.log2(1.0 + np.abs(delta) / base_delta)).astype(np.int64)
    bucket = np.sign(delta) * np.minimum(n_buckets - 1, mag)
    return (bucket + n_buckets).astype(np.intp)


def time_bucket_vector(t_query, timestamps, n_buckets: int, base_delta: float) -> np.ndarray:
    """Table indices for one query-side timestamp against all keys, shape (L,)."""
    ts = np.asarray(timestamps, dtype=np.int64)
    delta = np.int64(t_query) - ts
    mag = np.floor(np.log2(1.0 + np.abs(delta) / base_delta)).astype(np.int64)
    bucket = np.sign(delta) * np.minimum(n_buckets - 1, mag)
    return (bucket + n_buckets).astype(np.intp)


def pairwise_time_bias(timestamps, time_bias_table: np.ndarray, head: int,
                       n_buckets: int, base_delta: float) -> np.ndarray:
    """M[i][j] = table[head][bucket(t_i - t_j) + B]; depends on deltas only."""
    idx = time_bucket_matrix(timestamps, n_buckets, base_delta)
    return time_bias_table[head][idx]
