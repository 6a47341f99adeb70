"""Chunked blockwise attention and a ring-scheduled sequence-parallel simulator.

Everything here runs on one process at 64-bit precision; the point is to
make the mechanics checkable, not fast. A sequence of S tokens is packed
with per-token segment ids (documents are contiguous spans), attention is
causal and never crosses a segment boundary, and three routes compute the
same output:

  exact_attention       full softmax over the whole score matrix (oracle)
  blockwise_attention   streaming online-softmax over query/KV chunks
  ring_attention        P simulated devices; queries stay put, KV partitions
                        rotate peer to peer, blockwise accumulation inside

Online softmax keeps a running max, denominator and numerator per query
row, rescaling by exp(old_max - new_max) whenever the max moves. That makes
the result independent of chunk sizes and of the order KV blocks arrive,
which is what lets the ring schedule match the oracle.

Simulated devices execute in a fixed sequential order, so outputs are
bit-stable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AttentionProblem",
    "RingMesh",
    "RingStep",
    "RingTrace",
    "DospLimits",
    "attention_weights",
    "exact_attention",
    "blockwise_attention",
    "ring_attention",
    "dosp_limits",
    "random_problem",
]


@dataclass
class AttentionProblem:
    """Q/K/V matrices of shape (S, d) plus per-token segment ids."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    segment_ids: np.ndarray
    scale: float | None = None
    causal: bool = True

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.segment_ids = np.asarray(self.segment_ids, dtype=np.int64)
        if self.q.ndim != 2:
            raise ValueError(f"q must be 2-D (S, d), got shape {self.q.shape}")
        if self.q.shape != self.k.shape or self.q.shape != self.v.shape:
            raise ValueError(
                f"Q/K/V shapes differ: {self.q.shape}, {self.k.shape}, {self.v.shape}"
            )
        if self.segment_ids.shape != (self.q.shape[0],):
            raise ValueError(
                f"segment_ids has shape {self.segment_ids.shape}, expected ({self.q.shape[0]},)"
            )
        if np.any(self.segment_ids < 0):
            raise ValueError("segment_ids must be non-negative")
        if np.any(np.diff(self.segment_ids) < 0):
            raise ValueError("segment_ids must be non-decreasing (contiguous documents)")
        if self.scale is None:
            self.scale = 1.0 / np.sqrt(self.q.shape[1])

    @property
    def seq_len(self) -> int:
        return self.q.shape[0]

    @property
    def head_dim(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class RingMesh:
    """Simulated device ring: device count and intra-device chunk sizes."""

    device_count: int
    query_chunk: int
    kv_chunk: int

    def validate_for(self, seq_len: int) -> None:
        if self.device_count < 1 or self.query_chunk < 1 or self.kv_chunk < 1:
            raise ValueError("device_count and chunk sizes must be positive")
        if seq_len % self.device_count != 0:
            raise ValueError(f"device_count {self.device_count} must divide S={seq_len}")
        per_device = seq_len // self.device_count
        if per_device % self.query_chunk != 0:
            raise ValueError(f"query_chunk {self.query_chunk} must divide S/P={per_device}")
        if per_device % self.kv_chunk != 0:
            raise ValueError(f"kv_chunk {self.kv_chunk} must divide S/P={per_device}")


@dataclass(frozen=True)
class RingStep:
    step: int
    device: int
    kv_origin: int


@dataclass
class RingTrace:
    """Rotation schedule log plus the peer-to-peer transfer counter."""

    steps: list[RingStep] = field(default_factory=list)
    transfers: int = 0


@dataclass(frozen=True)
class DospLimits:
    ring_dosp: int
    all_to_all_dosp: int


def _allowed_mask(p: AttentionProblem, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Boolean mask of legal (query row, key col) pairs by absolute index."""
    same_segment = p.segment_ids[rows][:, None] == p.segment_ids[cols][None, :]
    if p.causal:
        return same_segment & (cols[None, :] <= rows[:, None])
    return same_segment


def attention_weights(p: AttentionProblem) -> np.ndarray:
    """Full (S, S) softmax weight matrix; masked-out pairs are exactly 0.0.

    Every diagonal entry is legal (j = i passes both the causal and the
    segment test), so no row is ever empty.
    """
    idx = np.arange(p.seq_len)
    scores = (p.q @ p.k.T) * p.scale
    scores = np.where(_allowed_mask(p, idx, idx), scores, -np.inf)
    scores -= scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    return w / w.sum(axis=1, keepdims=True)


def exact_attention(p: AttentionProblem) -> np.ndarray:
    """Reference full-precision attention output, (S, d)."""
    return attention_weights(p) @ p.v


def _stream_block(p, q_rows, k_cols, m, l, acc):
    """Fold one (query rows x key cols) score block into the running state."""
    scores = (p.q[q_rows] @ p.k[k_cols].T) * p.scale
    scores = np.where(_allowed_mask(p, q_rows, k_cols), scores, -np.inf)
    block_max = scores.max(axis=1)
    new_m = np.maximum(m, block_max)
    # Rows that have seen nothing legal yet keep new_m == -inf; shift those
    # by 0 so exp(-inf) cleanly produces all-zero contributions.
    shift = np.where(np.isneginf(new_m), 0.0, new_m)
    alpha = np.where(np.isneginf(m), 0.0, np.exp(m - shift))
    e = np.exp(scores - shift[:, None])
    l_new = alpha * l + e.sum(axis=1)
    acc_new = alpha[:, None] * acc + e @ p.v[k_cols]
    return new_m, l_new, acc_new


def blockwise_attention(p: AttentionProblem, query_chunk: int, kv_chunk: int) -> np.ndarray:
    """Streaming attention over query/KV chunks; equals exact_attention."""
    S, d = p.seq_len, p.head_dim
    if query_chunk < 1 or S % query_chunk != 0:
        raise ValueError(f"query_chunk {query_chunk} must divide S={S}")
    if kv_chunk < 1 or S % kv_chunk != 0:
        raise ValueError(f"kv_chunk {kv_chunk} must divide S={S}")

    out = np.empty((S, d))
    for q0 in range(0, S, query_chunk):
        q_rows = np.arange(q0, q0 + query_chunk)
        m = np.full(query_chunk, -np.inf)
        l = np.zeros(query_chunk)
        acc = np.zeros((query_chunk, d))
        for k0 in range(0, S, kv_chunk):
            k_cols = np.arange(k0, k0 + kv_chunk)
            m, l, acc = _stream_block(p, q_rows, k_cols, m, l, acc)
        out[q0 : q0 + query_chunk] = acc / l[:, None]
    return out


def ring_attention(p: AttentionProblem, mesh: RingMesh) -> tuple[np.ndarray, RingTrace]:
    """Sequence-parallel attention on a simulated device ring.

    The sequence is split into P contiguous partitions. Query partitions
    never move; at ring step s device dev holds the KV partition that
    originated on device (dev - s) mod P, folds it into its running
    blockwise state, then passes it along. After P steps every device has
    seen every KV partition exactly once and finalizes its output rows.
    Each of the P-1 rotations moves P KV blocks, so the trace counts
    P * (P - 1) peer-to-peer transfers.
    """
    mesh.validate_for(p.seq_len)
    P = mesh.device_count
    per_device = p.seq_len // P
    d = p.head_dim

    m = [np.full(per_device, -np.inf) for _ in range(P)]
    l = [np.zeros(per_device) for _ in range(P)]
    acc = [np.zeros((per_device, d)) for _ in range(P)]
    trace = RingTrace()

    for step in range(P):
        for dev in range(P):
            origin = (dev - step) % P
            trace.steps.append(RingStep(step=step, device=dev, kv_origin=origin))
            for q0 in range(0, per_device, mesh.query_chunk):
                q_rows = np.arange(dev * per_device + q0, dev * per_device + q0 + mesh.query_chunk)
                rows = slice(q0, q0 + mesh.query_chunk)
                for k0 in range(0, per_device, mesh.kv_chunk):
                    k_cols = np.arange(
                        origin * per_device + k0, origin * per_device + k0 + mesh.kv_chunk
                    )
                    m[dev][rows], l[dev][rows], acc[dev][rows] = _stream_block(
                        p, q_rows, k_cols, m[dev][rows], l[dev][rows], acc[dev][rows]
                    )
        if step < P - 1:
            trace.transfers += P

    out = np.empty((p.seq_len, d))
    for dev in range(P):
        out[dev * per_device : (dev + 1) * per_device] = acc[dev] / l[dev][:, None]
    return out, trace


def dosp_limits(kv_heads: int, devices: int) -> DospLimits:
    """Degree-of-sequence-parallelism ceiling for the two SP schemes.

    Ring rotation scales with the device count; the all-to-all transpose
    scheme must give each device at least one whole KV head, capping it at
    min(devices, kv_heads).
    """
    if kv_heads < 1 or devices < 1:
        raise ValueError("kv_heads and devices must be >= 1")
    return DospLimits(ring_dosp=devices, all_to_all_dosp=min(devices, kv_heads))


def random_problem(
    seq_len: int,
    head_dim: int,
    rng: np.random.Generator,
    num_segments: int | None = None,
    causal: bool = True,
) -> AttentionProblem:
    """Random packed-sequence problem with contiguous random-length segments."""
    if num_segments is None:
        num_segments = int(rng.integers(1, max(2, seq_len // 4) + 1))
    num_segments = min(num_segments, seq_len)
    cuts = np.sort(rng.choice(np.arange(1, seq_len), size=num_segments - 1, replace=False))
    lengths = np.diff(np.concatenate([[0], cuts, [seq_len]]))
    segment_ids = np.repeat(np.arange(num_segments), lengths)
    return AttentionProblem(
        q=rng.standard_normal((seq_len, head_dim)),
        k=rng.standard_normal((seq_len, head_dim)),
        v=rng.standard_normal((seq_len, head_dim)),
        segment_ids=segment_ids,
        causal=causal,
    )
