"""Object-copy execution engines and the standalone copy-bandwidth benchmark.

Four engine kinds cover the benchmark's cases:

* ``single``: one contiguous copy of the whole range.
* ``workers``: T threads copy disjoint equal partitions.
* ``workers_blocked``: T threads, each walking its partition in
  fixed-size blocks (block-sized copies are sometimes faster than one
  monolithic copy because of how large copies interact with caches).
* ``bulk``: the device stand-in. One dispatch covers all remaining work;
  a launch latency is charged per dispatch by spinning (so it is real
  wall time), and the range is then copied as ``lanes`` consecutive
  portions, the host analogue of a wide one-thread-per-object kernel.

Timing uses the monotonic clock, discards one warmup repetition, and
reports the median; the destination is byte-verified against the source
after every repetition before a bandwidth is reported.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, EngineConfigError, HeapCorruptionError
from .heap import Heap, ObjectRecord

SINGLE = "single"
WORKERS = "workers"
WORKERS_BLOCKED = "workers_blocked"
BULK = "bulk"

_COPY_KINDS = (SINGLE, WORKERS, WORKERS_BLOCKED, BULK)

DEFAULT_BLOCK_BYTES = 64 * 1024
DEFAULT_LANES = 384


def spin_wait(ns: int) -> None:
    if ns <= 0:
        return
    end = time.perf_counter_ns() + ns
    while time.perf_counter_ns() < end:
        pass


@dataclass(frozen=True)
class CopyEngine:
    """Configuration of one copy engine."""

    kind: str = SINGLE
    workers: int = 4
    block_bytes: int = DEFAULT_BLOCK_BYTES
    lanes: int = DEFAULT_LANES
    launch_latency_ns: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _COPY_KINDS:
            raise EngineConfigError(f"unknown copy engine kind {self.kind!r}")
        if self.workers < 1:
            raise EngineConfigError("workers must be >= 1")
        if self.block_bytes < 1:
            raise EngineConfigError("block_bytes must be >= 1")
        if self.lanes < 1:
            raise EngineConfigError("lanes must be >= 1")
        if self.launch_latency_ns < 0:
            raise EngineConfigError("launch_latency_ns must be >= 0")

    def label(self) -> str:
        if self.kind == WORKERS:
            return f"workers{self.workers}"
        if self.kind == WORKERS_BLOCKED:
            return f"workers{self.workers}_blocked{self.block_bytes}"
        if self.kind == BULK:
            return f"bulk_lat{self.launch_latency_ns}"
        return self.kind


@dataclass(frozen=True)
class PromotionPolicy:
    """Size threshold that routes a copy to the device-style engine."""

    device_threshold: int = 32 * 1024

    def __post_init__(self) -> None:
        if self.device_threshold < 0:
            raise EngineConfigError("device_threshold must be >= 0")


@dataclass(frozen=True)
class CopyBenchConfig:
    n_objects: int
    object_size: int = 8
    engine: CopyEngine = field(default_factory=CopyEngine)
    repetitions: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_objects < 1:
            raise EngineConfigError("n_objects must be >= 1")
        if self.object_size < 1:
            raise EngineConfigError("object_size must be >= 1")
        if self.repetitions < 1:
            raise EngineConfigError("repetitions must be >= 1")

    @property
    def total_bytes(self) -> int:
        return self.n_objects * self.object_size


@dataclass
class BandwidthReport:
    engine: str
    n_objects: int
    object_size: int
    total_bytes: int
    median_ns: int
    bandwidth_bytes_per_s: float
    per_rep_ns: list[int]
    verified: bool


@dataclass
class CopyResult:
    """Outcome of copy_objects: injective old-to-new index map plus timing."""

    forwarding: dict[int, int]
    duration_ns: int


def _object_partitions(n_objects: int, parts: int) -> list[tuple[int, int]]:
    """Split [0, n) into at most ``parts`` contiguous runs of whole objects."""
    parts = min(parts, n_objects)
    per = -(-n_objects // parts)
    out = []
    lo = 0
    while lo < n_objects:
        hi = min(lo + per, n_objects)
        out.append((lo, hi))
        lo = hi
    return out


def _copy_range(dst: np.ndarray, src: np.ndarray, lo: int, hi: int) -> None:
    np.copyto(dst[lo:hi], src[lo:hi])


def _run_engine_buffer(engine: CopyEngine, dst: np.ndarray, src: np.ndarray, object_size: int) -> None:
    """One full copy of src into dst under the given engine."""
    nbytes = src.size
    n_objects = nbytes // object_size
    if engine.kind == SINGLE:
        np.copyto(dst, src)
        return
    if engine.kind == BULK:
        spin_wait(engine.launch_latency_ns)
        for lo, hi in _object_partitions(n_objects, engine.lanes):
            _copy_range(dst, src, lo * object_size, hi * object_size)
        return
    partitions = _object_partitions(n_objects, engine.workers)
    if engine.kind == WORKERS:
        def job(lo: int, hi: int) -> None:
            _copy_range(dst, src, lo * object_size, hi * object_size)
    else:
        block = engine.block_bytes
        def job(lo: int, hi: int) -> None:
            a, b = lo * object_size, hi * object_size
            for off in range(a, b, block):
                _copy_range(dst, src, off, min(off + block, b))
    threads = [threading.Thread(target=job, args=p) for p in partitions]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def copy_bench(cfg: CopyBenchConfig) -> BandwidthReport:
    """Copy a seeded buffer of n_objects * object_size bytes and report bandwidth."""
    rng = np.random.default_rng(cfg.seed)
    src = rng.integers(0, 256, cfg.total_bytes, dtype=np.uint8)
    dst = np.zeros(cfg.total_bytes, dtype=np.uint8)

    verified = True
    durations: list[int] = []
    for rep in range(cfg.repetitions + 1):  # +1 warmup, discarded
        dst.fill(0)
        t0 = time.perf_counter_ns()
        _run_engine_buffer(cfg.engine, dst, src, cfg.object_size)
        elapsed = time.perf_counter_ns() - t0
        verified = verified and bool(np.array_equal(dst, src))
        if rep > 0:
            durations.append(elapsed)
    med = int(np.median(durations))
    return BandwidthReport(
        engine=cfg.engine.label(),
        n_objects=cfg.n_objects,
        object_size=cfg.object_size,
        total_bytes=cfg.total_bytes,
        median_ns=med,
        bandwidth_bytes_per_s=cfg.total_bytes / med * 1e9 if med else float("inf"),
        per_rep_ns=durations,
        verified=verified,
    )


def _copy_one(heap: Heap, src_rec: ObjectRecord, dst_rec: ObjectRecord) -> None:
    if src_rec.payload_size:
        np.copyto(dst_rec.payload, src_rec.payload)
    if src_rec.slot_count:
        pool = heap._slot_pool.view()
        pool[dst_rec.slot_base : dst_rec.slot_base + dst_rec.slot_count] = pool[
            src_rec.slot_base : src_rec.slot_base + src_rec.slot_count
        ]


def copy_objects(
    heap: Heap,
    victims: Sequence[int],
    dst_gen: str,
    engine: CopyEngine,
) -> CopyResult:
    """Duplicate each victim (payload and slot array) into ``dst_gen``.

    Installs the forwarding index on every victim and returns the
    injective old-to-new map. Capacity is checked up front so a failed
    call leaves no partial effects.
    """
    if not victims:
        return CopyResult({}, 0)
    need = 0
    recs = []
    for ref in victims:
        rec = heap.resolve(ref)
        if rec.forward is not None:
            raise HeapCorruptionError(f"object {ref} is already forwarded")
        recs.append(rec)
        need += rec.payload_size
    if need > heap.bytes_free(dst_gen):
        raise CapacityError(
            f"{dst_gen} generation cannot take {need} bytes ({heap.bytes_free(dst_gen)} free)"
        )

    t0 = time.perf_counter_ns()
    # Destination records are created serially so index assignment stays
    # deterministic; only the byte movement is engine-parallel.
    pairs: list[tuple[ObjectRecord, ObjectRecord]] = []
    forwarding: dict[int, int] = {}
    for rec in recs:
        new_ref = heap.allocate(rec.payload_size, rec.slot_count, dst_gen)
        new_rec = heap.resolve(new_ref)
        pairs.append((rec, new_rec))
        forwarding[rec.index] = new_ref

    if engine.kind == SINGLE:
        for src_rec, dst_rec in pairs:
            _copy_one(heap, src_rec, dst_rec)
    elif engine.kind == BULK:
        spin_wait(engine.launch_latency_ns)
        for lo, hi in _object_partitions(len(pairs), engine.lanes):
            for src_rec, dst_rec in pairs[lo:hi]:
                _copy_one(heap, src_rec, dst_rec)
    else:
        block = engine.block_bytes if engine.kind == WORKERS_BLOCKED else None

        def job(lo: int, hi: int) -> None:
            for src_rec, dst_rec in pairs[lo:hi]:
                if block is not None and src_rec.payload_size > block:
                    for off in range(0, src_rec.payload_size, block):
                        end = min(off + block, src_rec.payload_size)
                        np.copyto(dst_rec.payload[off:end], src_rec.payload[off:end])
                    if src_rec.slot_count:
                        pool = heap._slot_pool.view()
                        pool[dst_rec.slot_base : dst_rec.slot_base + dst_rec.slot_count] = pool[
                            src_rec.slot_base : src_rec.slot_base + src_rec.slot_count
                        ]
                else:
                    _copy_one(heap, src_rec, dst_rec)

        threads = [
            threading.Thread(target=job, args=p)
            for p in _object_partitions(len(pairs), engine.workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    for src_rec, dst_rec in pairs:
        src_rec.forward = dst_rec.index
    duration = time.perf_counter_ns() - t0
    return CopyResult(forwarding, duration)


def fixup_references(heap: Heap, forwarding: dict[int, int]) -> None:
    """Rewrite every root and slot that references a forwarded-from object.

    A reference to an object that is forwarded but missing from the map is
    heap corruption and raises; partial maps over un-forwarded objects are
    fine (those references are left alone).
    """
    if not forwarding:
        return
    pool = heap._slot_pool.view()
    get_fwd = forwarding.get
    records = heap._records
    for rec in records.values():
        if rec.forward is not None:
            continue  # forwarded-from records die after fixup; skip their slots
        b = rec.slot_base
        raw = pool[b : b + rec.slot_count]
        for i, v in enumerate(raw.tolist()):
            if v < 0:
                continue
            nv = get_fwd(v)
            if nv is not None:
                pool[b + i] = nv
            else:
                target = records.get(v)
                if target is None or target.forward is not None:
                    raise HeapCorruptionError(
                        f"slot {i} of object {rec.index} references {v}, which is gone"
                    )
    roots = heap._roots
    for i, r in enumerate(list(roots)):
        nv = get_fwd(r)
        if nv is not None:
            roots[i] = nv
        elif r not in records or records[r].forward is not None:
            raise HeapCorruptionError(f"root {i} references {r}, which is gone")
