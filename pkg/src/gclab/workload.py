"""Deterministic workload construction.

Two workload families drive the benchmarks: a linked list of equal-sized
objects that stay live forever (the promotion stress shape) and random
object graphs with a configurable average out-degree X (the marking
stress shape, swept over X in {8, 40, 200, 1000}). Both are pure
functions of their config, and graphs can be dumped to a small versioned
binary format for fixture reuse.

Out-degrees are drawn uniformly from the integers [0, 2X], which is
bounded, mean-correct and cheap; edge targets are uniform over all
objects, so self-edges, duplicate edges and cycles all occur.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CapacityError, InvalidRefError, WorkloadError
from .heap import Heap, HeapConfig, YOUNG

_GRAPH_MAGIC = b"GCLGRAPH"
_GRAPH_VERSION = 1

DEFAULT_GRAPH_PAYLOAD = 16


@dataclass(frozen=True)
class GraphGenConfig:
    """Random-graph workload parameters; generation is pure in these."""

    n_objects: int
    avg_out_degree: int
    seed: int
    root_count: Optional[int] = None
    payload_size: int = DEFAULT_GRAPH_PAYLOAD

    def __post_init__(self) -> None:
        if self.n_objects < 1:
            raise WorkloadError("n_objects must be >= 1")
        if self.avg_out_degree < 0:
            raise WorkloadError("avg_out_degree must be >= 0")
        if self.payload_size < 0:
            raise WorkloadError("payload_size must be >= 0")
        if self.roots_effective > self.n_objects:
            raise WorkloadError("root_count may not exceed n_objects")
        if self.roots_effective < 1:
            raise WorkloadError("root_count must be >= 1")

    @property
    def roots_effective(self) -> int:
        if self.root_count is not None:
            return self.root_count
        return max(1, self.n_objects // 1000)


@dataclass(frozen=True)
class ListGenConfig:
    """Linked-list workload: object count = floor(total_bytes / object_size)."""

    total_bytes: int
    object_size: int

    def __post_init__(self) -> None:
        if self.object_size <= 0:
            raise WorkloadError("object_size must be > 0")
        if self.object_count < 1:
            raise WorkloadError("total_bytes smaller than one object")

    @property
    def object_count(self) -> int:
        return self.total_bytes // self.object_size


@dataclass(frozen=True)
class MutationStreamConfig:
    seed: int
    mutation_count: int
    null_fraction: float = 0.25
    alloc_fraction: float = 0.15

    def __post_init__(self) -> None:
        if self.mutation_count < 0:
            raise WorkloadError("mutation_count must be >= 0")
        if not 0.0 <= self.null_fraction <= 1.0 or not 0.0 <= self.alloc_fraction <= 1.0:
            raise WorkloadError("fractions must lie in [0, 1]")
        if self.null_fraction + self.alloc_fraction > 1.0:
            raise WorkloadError("fractions may not sum past 1")


# mutation kinds
_RETARGET = 0
_SET_NULL = 1
_ALLOCATE = 2


@dataclass(frozen=True)
class MutationStream:
    """A replayable sequence of slot mutations.

    Selectors are stored as unit-interval draws and resolved against the
    live object population at replay time, so one stream can drive heaps
    of any size deterministically.
    """

    seed: int
    mutation_count: int
    kinds: np.ndarray
    src_u: np.ndarray
    slot_u: np.ndarray
    target_u: np.ndarray


@dataclass
class ReplayStats:
    applied: int = 0
    skipped: int = 0
    allocated: int = 0


def gen_mutation_stream(cfg: MutationStreamConfig) -> MutationStream:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.mutation_count
    kind_u = rng.random(n)
    kinds = np.full(n, _RETARGET, dtype=np.uint8)
    kinds[kind_u < cfg.null_fraction + cfg.alloc_fraction] = _ALLOCATE
    kinds[kind_u < cfg.null_fraction] = _SET_NULL
    return MutationStream(
        seed=cfg.seed,
        mutation_count=n,
        kinds=kinds,
        src_u=rng.random(n),
        slot_u=rng.random(n),
        target_u=rng.random(n),
    )


def replay_mutations(
    heap: Heap,
    stream: MutationStream,
    *,
    thread_index: int = 0,
    threads: int = 1,
    live_view: Optional[Sequence[int]] = None,
) -> ReplayStats:
    """Replay this thread's strided share of the stream through set_ref.

    Selectors resolve modulo the current live population (the shared
    snapshot plus this thread's own allocations); mutations aimed at
    objects that have since been reclaimed or have no slots are skipped
    and counted.
    """
    if threads < 1 or not 0 <= thread_index < threads:
        raise WorkloadError("bad thread slice")
    view: list[int] = list(live_view if live_view is not None else sorted(heap.live_refs()))
    stats = ReplayStats()
    kinds = stream.kinds
    src_u = stream.src_u
    slot_u = stream.slot_u
    tgt_u = stream.target_u
    for i in range(thread_index, stream.mutation_count, threads):
        if not view:
            stats.skipped += 1
            continue
        src = view[int(src_u[i] * len(view)) % len(view)]
        rec = heap._records.get(src)
        if rec is None or rec.slot_count == 0:
            stats.skipped += 1
            continue
        slot = int(slot_u[i] * rec.slot_count) % rec.slot_count
        kind = kinds[i]
        if kind == _SET_NULL:
            target = None
        elif kind == _ALLOCATE:
            target = heap.allocate(DEFAULT_GRAPH_PAYLOAD, 1, YOUNG)
            view.append(target)
            stats.allocated += 1
        else:
            target = view[int(tgt_u[i] * len(view)) % len(view)]
            if not heap.contains(target):
                stats.skipped += 1
                continue
        try:
            heap.set_ref(src, slot, target)
        except InvalidRefError:
            stats.skipped += 1
            continue
        stats.applied += 1
    return stats


def gen_linked_list(
    heap: Heap,
    cfg: ListGenConfig,
    *,
    payload_seed: int = 0,
    on_full: Optional[Callable[[Heap], None]] = None,
) -> int:
    """Build a singly linked chain head->...->tail; the head becomes a root.

    Each element has one reference slot and ``object_size`` payload bytes
    filled with seeded pseudo-random content so later copies can be
    byte-verified. When allocation hits young capacity and ``on_full`` is
    given, it is invoked (typically to run a collection) and the
    allocation retried. The chain is anchored through the root set while
    it grows (head permanently, the current tail pinned temporarily), so
    it survives objects being moved by a collection.
    """
    rng = np.random.default_rng(payload_seed)

    def alloc() -> int:
        try:
            return heap.allocate(cfg.object_size, 1, YOUNG)
        except CapacityError:
            if on_full is None:
                raise
            on_full(heap)
            return heap.allocate(cfg.object_size, 1, YOUNG)

    base = len(heap.roots)
    head = alloc()
    heap.payload_of(head)[:] = rng.integers(0, 256, cfg.object_size, dtype=np.uint8)
    heap.add_root(head)
    for _ in range(cfg.object_count - 1):
        node = alloc()
        heap.payload_of(node)[:] = rng.integers(0, 256, cfg.object_size, dtype=np.uint8)
        heap.add_root(node)
        tail = heap.roots[-2]  # the previous tail (the head on the first link)
        heap.set_ref(tail, 0, node)
        if tail != heap.roots[base]:
            heap.remove_root(tail)
    if len(heap.roots) - base > 1:
        heap.remove_root(heap.roots[-1])
    return heap.roots[base]


def gen_random_graph(heap: Heap, cfg: GraphGenConfig) -> list[int]:
    """Allocate a seeded random object graph; returns the root refs.

    Object i receives an out-degree drawn uniformly from [0, 2X]; every
    edge target is drawn uniformly over all n objects. The first
    ``root_count`` objects become heap roots. Identical config produces a
    bit-identical graph.
    """
    n = cfg.n_objects
    rng = np.random.default_rng(cfg.seed)
    degrees = rng.integers(0, 2 * cfg.avg_out_degree + 1, n)
    total_edges = int(degrees.sum())
    targets = rng.integers(0, n, total_edges, dtype=np.int32) if total_edges else np.empty(0, np.int32)

    heap._slot_pool.reserve(total_edges)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(degrees, out=indptr[1:])
    refs = []
    deg_list = degrees.tolist()
    for i in range(n):
        refs.append(heap.allocate(cfg.payload_size, deg_list[i], YOUNG))
    base = refs[0]
    for i in range(n):
        d = deg_list[i]
        if d:
            heap.fill_slots(refs[i], base + targets[indptr[i] : indptr[i + 1]])
    roots = refs[: cfg.roots_effective]
    for r in roots:
        heap.add_root(r)
    return roots


def graph_heap_config(cfg: GraphGenConfig, slack: int = 1 << 20) -> HeapConfig:
    """A heap config comfortably sized for one generated graph."""
    need = cfg.n_objects * cfg.payload_size + slack
    return HeapConfig(young_capacity=need, old_capacity=need)


def save_graph(path, heap: Heap, cfg: GraphGenConfig, roots: Sequence[int]) -> None:
    """Dump a generated graph: magic, version, n, X, seed, CSR adjacency.

    Expects the heap to have been filled by gen_random_graph, whose n
    objects occupy consecutive indices starting at the first root.
    """
    n = cfg.n_objects
    base = roots[0]
    counts = np.empty(n, np.int64)
    parts = []
    for i in range(n):
        raw = heap.slots_of(base + i)
        counts[i] = len(raw)
        parts.append(np.asarray([(-1 if t is None else t - base) for t in raw], dtype=np.int32))
    targets = np.concatenate(parts) if parts else np.empty(0, np.int32)
    indptr = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=indptr[1:])
    with open(path, "wb") as fh:
        fh.write(_GRAPH_MAGIC)
        fh.write(
            struct.pack(
                "<IQQQQQ",
                _GRAPH_VERSION,
                n,
                cfg.avg_out_degree,
                cfg.seed,
                cfg.roots_effective,
                cfg.payload_size,
            )
        )
        fh.write(struct.pack("<Q", int(targets.size)))
        fh.write(indptr.tobytes())
        fh.write(targets.tobytes())


def load_graph(path) -> tuple[Heap, list[int], GraphGenConfig]:
    """Rebuild a heap and its roots from a graph dump."""
    data = Path(path).read_bytes()
    if data[:8] != _GRAPH_MAGIC:
        raise WorkloadError("not a graph dump")
    ver, n, x, seed, root_count, payload = struct.unpack_from("<IQQQQQ", data, 8)
    if ver != _GRAPH_VERSION:
        raise WorkloadError(f"unsupported graph dump version {ver}")
    off = 8 + struct.calcsize("<IQQQQQ")
    (nedges,) = struct.unpack_from("<Q", data, off)
    off += 8
    indptr = np.frombuffer(data, np.int64, n + 1, off)
    off += indptr.nbytes
    targets = np.frombuffer(data, np.int32, nedges, off)
    cfg = GraphGenConfig(n, x, seed, root_count=root_count, payload_size=payload)
    heap = Heap(graph_heap_config(cfg))
    refs = []
    counts = np.diff(indptr).tolist()
    for i in range(n):
        refs.append(heap.allocate(payload, counts[i], YOUNG))
    base = refs[0]
    for i in range(n):
        if counts[i]:
            seg = targets[indptr[i] : indptr[i + 1]].astype(np.int32, copy=True)
            seg[seg >= 0] += base
            heap.fill_slots(refs[i], seg)
    roots = refs[:root_count]
    for r in roots:
        heap.add_root(r)
    return heap, roots, cfg
