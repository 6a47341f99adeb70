"""Compile-time lookup-table memory model for chunked ring attention.

Chunked attention over packed documents needs a chunk-to-segment mapping
so masks can be generated per block. When a compiler materializes that
mapping statically it allocates an int32 tensor of shape

    devices x num_q_chunks x num_kv_chunks x seq_len

(a broadcast axis of extent 1 drops out), i.e. exactly

    bytes = P * nq * nkv * S * 4.

With P=8, S=524288 and 1024/2048-token chunks that is 32 GiB before a
single training step runs. Fewer, larger chunks shrink nq * nkv
quadratically, which is why growing the chunk sizes reduces pre-allocated
memory even though per-block working sets grow. The planner searches chunk
configurations that keep the table under a byte budget.

Byte counts are exact Python integers throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "ELEMENT_BYTES",
    "ChunkPlan",
    "MemoryReport",
    "SearchConstraints",
    "ScenarioReport",
    "lookup_table_bytes",
    "memory_report",
    "search_chunk_plan",
    "scenario_report",
    "format_gib",
]

# The mapping table is an int32 tensor; fixed, not a tuning knob.
ELEMENT_BYTES = 4


@dataclass(frozen=True)
class ChunkPlan:
    """Device count, sequence length and chunk sizes, with derived counts."""

    devices: int
    seq_len: int
    q_chunk: int
    kv_chunk: int

    def __post_init__(self):
        for name in ("devices", "seq_len", "q_chunk", "kv_chunk"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.seq_len % self.devices != 0:
            raise ValueError(f"devices {self.devices} must divide seq_len {self.seq_len}")
        per_device = self.seq_len // self.devices
        if per_device % self.q_chunk != 0:
            raise ValueError(f"q_chunk {self.q_chunk} must divide per-device length {per_device}")
        if per_device % self.kv_chunk != 0:
            raise ValueError(f"kv_chunk {self.kv_chunk} must divide per-device length {per_device}")

    @property
    def per_device(self) -> int:
        return self.seq_len // self.devices

    @property
    def num_q_chunks(self) -> int:
        return self.per_device // self.q_chunk

    @property
    def num_kv_chunks(self) -> int:
        return self.per_device // self.kv_chunk


def lookup_table_bytes(plan: ChunkPlan) -> int:
    """Exact size in bytes of the statically materialized mapping table."""
    return plan.devices * plan.num_q_chunks * plan.num_kv_chunks * plan.seq_len * ELEMENT_BYTES


def format_gib(nbytes: int) -> str:
    return f"{nbytes / 2**30:.3f} GiB"


@dataclass(frozen=True)
class MemoryReport:
    """Lookup-table bytes plus optional coarse extra terms and a budget check.

    extra_terms is free-form report plumbing (named byte counts supplied by
    the caller, summed additively); only the lookup-table term is modeled.
    """

    plan: ChunkPlan
    lookup_table_bytes: int
    extra_terms: dict[str, int] = field(default_factory=dict)
    budget_bytes: int | None = None

    @property
    def total_bytes(self) -> int:
        return self.lookup_table_bytes + sum(self.extra_terms.values())

    @property
    def fits(self) -> bool:
        return self.budget_bytes is None or self.total_bytes <= self.budget_bytes


def memory_report(
    plan: ChunkPlan,
    budget_bytes: int | None = None,
    extra_terms: dict[str, int] | None = None,
) -> MemoryReport:
    return MemoryReport(
        plan=plan,
        lookup_table_bytes=lookup_table_bytes(plan),
        extra_terms=dict(extra_terms or {}),
        budget_bytes=budget_bytes,
    )


@dataclass(frozen=True)
class SearchConstraints:
    """Per-side bounds on candidate chunk sizes."""

    min_q_chunk: int = 1
    min_kv_chunk: int = 1
    max_q_chunk: int | None = None
    max_kv_chunk: int | None = None
    power_of_two: bool = False


def _candidate_chunks(per_device: int, lo: int, hi: int | None, power_of_two: bool) -> list[int]:
    sizes = []
    for size in range(lo, per_device + 1):
        if per_device % size != 0:
            continue
        if hi is not None and size > hi:
            continue
        if power_of_two and size & (size - 1) != 0:
            continue
        sizes.append(size)
    return sizes


def search_chunk_plan(
    devices: int,
    seq_len: int,
    budget_bytes: int,
    constraints: SearchConstraints = SearchConstraints(),
) -> ChunkPlan | None:
    """Smallest chunk sizes whose lookup table fits the budget, or None.

    Candidates are ordered by (q_chunk, kv_chunk) ascending and the first
    fit wins: smaller chunks mean smaller per-step working sets, so the
    search grows them only as far as the table forces.
    """
    if budget_bytes <= 0:
        raise ValueError(f"budget_bytes must be positive, got {budget_bytes}")
    if seq_len % devices != 0:
        raise ValueError(f"devices {devices} must divide seq_len {seq_len}")
    per_device = seq_len // devices
    c = constraints
    q_sizes = _candidate_chunks(per_device, c.min_q_chunk, c.max_q_chunk, c.power_of_two)
    kv_sizes = _candidate_chunks(per_device, c.min_kv_chunk, c.max_kv_chunk, c.power_of_two)
    for cq in q_sizes:
        for ckv in kv_sizes:
            plan = ChunkPlan(devices=devices, seq_len=seq_len, q_chunk=cq, kv_chunk=ckv)
            if lookup_table_bytes(plan) <= budget_bytes:
                return plan
    return None


@dataclass(frozen=True)
class ScenarioReport:
    """Lookup-table delta between two plans sharing a device mesh and S."""

    plan_a: ChunkPlan
    plan_b: ChunkPlan
    bytes_a: int
    bytes_b: int
    delta_bytes: int
    ratio: float
    note: str


def scenario_report(plan_a: ChunkPlan, plan_b: ChunkPlan) -> ScenarioReport:
    """Compare two chunk plans on the lookup-table term alone."""
    if plan_a.devices != plan_b.devices or plan_a.seq_len != plan_b.seq_len:
        raise ValueError("plans must share devices and seq_len to be comparable")
    a = lookup_table_bytes(plan_a)
    b = lookup_table_bytes(plan_b)
    return ScenarioReport(
        plan_a=plan_a,
        plan_b=plan_b,
        bytes_a=a,
        bytes_b=b,
        delta_bytes=a - b,
        ratio=a / b,
        note=(
            "lookup-table term only; a full-graph peak memory delta includes "
            "activation and buffer terms outside this model"
        ),
    )
