"""Marking engines: traversal of the live object graph with mark-bit setting.

Three engines share one result contract:

* ``serial``: a single-threaded worklist.
* ``worker_pool``: N threads over one shared worklist with idle-count
  termination, the shape of a parallel stop-the-world collector.
* ``frontier``: a device-style level-synchronous BFS. Each level is one
  "dispatch": a fixed launch latency is charged (by spinning, so it shows
  up in wall time) and the whole frontier is then expanded with wide
  vectorised array passes, the host stand-in for a many-lane processor.

Mark state is one byte per object in a contiguous side array on the heap,
so the ``plain`` and ``cas`` write modes differ only in the write step:
``plain`` is an ordinary racy-but-idempotent store, ``cas`` is an atomic
unmarked-to-marked transition that reports whether the caller won.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EngineConfigError
from .heap import Heap, YOUNG, SATBBuffers
from .workload import MutationStream, replay_mutations

SERIAL = "serial"
WORKER_POOL = "worker_pool"
FRONTIER = "frontier"

PLAIN = "plain"
CAS = "cas"

_ENGINE_KINDS = (SERIAL, WORKER_POOL, FRONTIER)
_MARK_MODES = (PLAIN, CAS)

# Edge budget per vectorised sub-batch of a frontier level; bounds peak
# temporary memory, not semantics.
_FRONTIER_CHUNK_EDGES = 4_000_000


def spin_wait(ns: int) -> None:
    """Busy-wait for ``ns`` nanoseconds; accurate to a few microseconds."""
    if ns <= 0:
        return
    end = time.perf_counter_ns() + ns
    while time.perf_counter_ns() < end:
        pass


@dataclass(frozen=True)
class EngineConfig:
    """Which engine runs a marking phase and how.

    ``workers`` applies to worker_pool, ``lanes`` and ``launch_latency_ns``
    to frontier. ``mark_mode`` selects the mark write instruction.
    """

    kind: str = SERIAL
    workers: int = 1
    lanes: int = 384
    launch_latency_ns: int = 0
    mark_mode: str = PLAIN

    def __post_init__(self) -> None:
        if self.kind not in _ENGINE_KINDS:
            raise EngineConfigError(f"unknown engine kind {self.kind!r}")
        if self.mark_mode not in _MARK_MODES:
            raise EngineConfigError(f"unknown mark mode {self.mark_mode!r}")
        if self.workers < 1:
            raise EngineConfigError("workers must be >= 1")
        if self.lanes < 1:
            raise EngineConfigError("lanes must be >= 1")
        if self.launch_latency_ns < 0:
            raise EngineConfigError("launch_latency_ns must be >= 0")


@dataclass
class MarkResult:
    """Outcome of one marking phase."""

    marked: set[int]
    visited_count: int
    duration_ns: int
    dispatch_count: Optional[int] = None
    cas_failures: Optional[int] = None
    satb_drained: int = 0


def set_mark(heap: Heap, ref: int, mode: str = PLAIN) -> bool:
    """Mark one object; returns True when this call newly marked it.

    In plain mode duplicate "newly marked" reports are permitted under
    races; in cas mode exactly one caller wins.
    """
    heap.resolve(ref)
    if mode == PLAIN:
        return heap.set_mark_plain(ref)
    if mode == CAS:
        return heap.set_mark_cas(ref)
    raise EngineConfigError(f"unknown mark mode {mode!r}")


def _seed_refs(heap: Heap, roots: Iterable[int], young_only: bool) -> list[int]:
    gen = heap._gen.view()
    seeds = []
    seen = set()
    for r in roots:
        if r in seen or not heap.contains(r):
            continue
        seen.add(r)
        if young_only and gen[r] != 0:
            continue
        seeds.append(r)
    return seeds


def _mark_serial(heap: Heap, seeds: Sequence[int], mode: str, young_only: bool):
    pool, base, cnt, gen = heap._engine_views()
    marks = heap.marks
    stack: list[int] = []
    push = stack.append
    pop = stack.pop
    fails = 0
    cas = heap.set_mark_cas
    if mode == CAS:
        for r in seeds:
            if cas(r):
                push(r)
            else:
                fails += 1
    else:
        for r in seeds:
            if not marks[r]:
                marks[r] = 1
                push(r)
    visited = 0
    while stack:
        i = pop()
        visited += 1
        b = int(base[i])
        targets = pool[b : b + int(cnt[i])].tolist()
        if mode == CAS:
            # one atomic attempt per object access, as a concurrent marker
            # would issue
            for t in targets:
                if t >= 0 and (not young_only or gen[t] == 0):
                    if cas(t):
                        push(t)
                    else:
                        fails += 1
        else:
            for t in targets:
                if t >= 0 and not marks[t] and (not young_only or gen[t] == 0):
                    marks[t] = 1
                    push(t)
    return visited, (fails if mode == CAS else None)


def _mark_worker_pool(heap: Heap, seeds: Sequence[int], cfg: EngineConfig, young_only: bool):
    pool, base, cnt, gen = heap._engine_views()
    marks = heap.marks
    work: deque[int] = deque()
    cas = heap.set_mark_cas
    mode = cfg.mark_mode
    fails_total = [0] * cfg.workers
    visited_total = [0] * cfg.workers
    if mode == CAS:
        for r in seeds:
            if cas(r):
                work.append(r)
            else:
                fails_total[0] += 1
    else:
        for r in seeds:
            if not marks[r]:
                marks[r] = 1
                work.append(r)

    nworkers = cfg.workers
    idle = [0]
    idle_lock = threading.Lock()
    done = threading.Event()

    def run(me: int) -> None:
        my_idle = False
        visited = 0
        fails = 0
        while True:
            try:
                i = work.popleft()
            except IndexError:
                if not my_idle:
                    with idle_lock:
                        idle[0] += 1
                    my_idle = True
                if done.is_set():
                    break
                # termination: all idle and the queue empty, re-verified
                if idle[0] == nworkers and not work:
                    if idle[0] == nworkers and not work:
                        done.set()
                        break
                time.sleep(0)
                continue
            if my_idle:
                with idle_lock:
                    idle[0] -= 1
                my_idle = False
            visited += 1
            b = int(base[i])
            targets = pool[b : b + int(cnt[i])].tolist()
            if mode == CAS:
                for t in targets:
                    if t >= 0 and (not young_only or gen[t] == 0):
                        if cas(t):
                            work.append(t)
                        else:
                            fails += 1
            else:
                for t in targets:
                    if t >= 0 and not marks[t] and (not young_only or gen[t] == 0):
                        marks[t] = 1
                        work.append(t)
        visited_total[me] = visited
        fails_total[me] += fails

    threads = [threading.Thread(target=run, args=(k,)) for k in range(nworkers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    fails = sum(fails_total) if mode == CAS else None
    return sum(visited_total), fails


def _mark_frontier(heap: Heap, seeds: Sequence[int], cfg: EngineConfig, young_only: bool):
    pool, base, cnt, gen = heap._engine_views()
    marks_np = np.frombuffer(heap.marks, dtype=np.uint8) if heap.marks else np.zeros(0, np.uint8)
    latency = cfg.launch_latency_ns
    mode = cfg.mark_mode

    fr = np.unique(np.asarray(seeds, dtype=np.int64)) if seeds else np.empty(0, np.int64)
    if fr.size:
        fr = fr[marks_np[fr] == 0]
        marks_np[fr] = 1
    dispatches = 0
    visited = 0
    fails = 0
    while fr.size:
        dispatches += 1
        spin_wait(latency)
        visited += int(fr.size)
        counts = cnt[fr].astype(np.int64)
        csum = np.empty(fr.size + 1, np.int64)
        csum[0] = 0
        np.cumsum(counts, out=csum[1:])
        nxt_parts: list[np.ndarray] = []
        lo = 0
        nfr = int(fr.size)
        while lo < nfr:
            hi = int(np.searchsorted(csum, csum[lo] + _FRONTIER_CHUNK_EDGES, side="right"))
            hi = min(max(hi, lo + 1), nfr)
            sub_counts = counts[lo:hi]
            total = int(csum[hi] - csum[lo])
            lo_csum = csum[lo:hi] - csum[lo]
            if total:
                starts = np.repeat(base[fr[lo:hi]], sub_counts)
                offs = np.arange(total, dtype=np.int64) - np.repeat(lo_csum, sub_counts)
                targets = pool[starts + offs].astype(np.int64, copy=False)
                targets = targets[targets >= 0]
                if young_only and targets.size:
                    targets = targets[gen[targets] == 0]
                accesses = int(targets.size)
                if accesses:
                    cand = targets[marks_np[targets] == 0]
                    if mode == CAS:
                        # winner accounting: first occurrence in lane order
                        # wins the compare-exchange, the rest fail
                        uniq, first = np.unique(cand, return_index=True)
                        uniq = uniq[np.argsort(first)]
                        uniq = uniq[marks_np[uniq] == 0]
                        fails += accesses - int(uniq.size)
                        marks_np[uniq] = 1
                        nxt_parts.append(uniq)
                    else:
                        uniq = np.unique(cand)
                        uniq = uniq[marks_np[uniq] == 0]
                        marks_np[uniq] = 1
                        nxt_parts.append(uniq)
            lo = hi
        fr = np.concatenate(nxt_parts) if nxt_parts else np.empty(0, np.int64)
    return visited, (fails if mode == CAS else None), dispatches


def mark(
    heap: Heap,
    roots: Iterable[int],
    cfg: EngineConfig,
    *,
    generation: Optional[str] = None,
) -> MarkResult:
    """Stop-the-world marking from ``roots`` under the configured engine.

    ``generation=YOUNG`` restricts traversal to young objects (the minor
    collection mode). Mark bits are reset first, set in the heap's side
    array during the phase, and mirrored into the result set afterwards.
    """
    if generation not in (None, YOUNG):
        raise EngineConfigError("generation filter supports only the young generation")
    young_only = generation == YOUNG
    heap.clear_marks()
    seeds = _seed_refs(heap, roots, young_only)

    dispatches: Optional[int] = None
    t0 = time.perf_counter_ns()
    if cfg.kind == SERIAL:
        visited, fails = _mark_serial(heap, seeds, cfg.mark_mode, young_only)
    elif cfg.kind == WORKER_POOL:
        visited, fails = _mark_worker_pool(heap, seeds, cfg, young_only)
    else:
        visited, fails, dispatches = _mark_frontier(heap, seeds, cfg, young_only)
    duration = time.perf_counter_ns() - t0

    return MarkResult(
        marked=heap.marked_refs(),
        visited_count=visited,
        duration_ns=duration,
        dispatch_count=dispatches if cfg.kind == FRONTIER else None,
        cas_failures=fails,
    )


def concurrent_mark(
    heap: Heap,
    roots: Iterable[int],
    cfg: EngineConfig,
    mutators: int,
    stream: Optional[MutationStream],
) -> MarkResult:
    """Snapshot-at-the-beginning marking with live mutator threads.

    Markers drain a shared worklist plus the per-thread snapshot buffers
    that ``set_ref`` fills with overwritten values; objects allocated
    while marking runs are created marked. Termination requires worklist
    and snapshot buffers simultaneously empty with every marker idle,
    re-verified before exit, which is sound because each overwrite is
    logged before the new value becomes visible.
    """
    if cfg.mark_mode != CAS:
        raise EngineConfigError("concurrent marking requires cas mark mode")
    if cfg.kind == FRONTIER:
        raise EngineConfigError("frontier engine does not support concurrent marking")
    if mutators < 0:
        raise EngineConfigError("mutators must be >= 0")
    nmarkers = cfg.workers if cfg.kind == WORKER_POOL else 1

    satb = heap.begin_concurrent_mark()
    try:
        pool, base, cnt, gen = heap._engine_views()
        cas = heap.set_mark_cas
        work: deque[int] = deque()
        fails_total = [0] * nmarkers
        visited_total = [0] * nmarkers
        drained_total = [0] * nmarkers
        for r in _seed_refs(heap, roots, False):
            if cas(r):
                work.append(r)
            else:
                fails_total[0] += 1

        idle = [0]
        idle_lock = threading.Lock()
        done = threading.Event()

        def marker(me: int) -> None:
            visited = 0
            fails = 0
            drained = 0
            my_idle = False
            while True:
                try:
                    i = work.popleft()
                except IndexError:
                    refs = satb.drain()
                    if refs:
                        drained += len(refs)
                        for t in refs:
                            if heap.contains(t):
                                if cas(t):
                                    work.append(t)
                                else:
                                    fails += 1
                        continue
                    if not my_idle:
                        with idle_lock:
                            idle[0] += 1
                        my_idle = True
                    if done.is_set():
                        break
                    if idle[0] == nmarkers and not work and satb.empty():
                        if idle[0] == nmarkers and not work and satb.empty():
                            done.set()
                            break
                    time.sleep(0)
                    continue
                if my_idle:
                    with idle_lock:
                        idle[0] -= 1
                    my_idle = False
                visited += 1
                rec = heap._records.get(i)
                if rec is None:
                    continue
                b = rec.slot_base
                for t in heap._slot_pool.view()[b : b + rec.slot_count].tolist():
                    if t >= 0:
                        if cas(t):
                            work.append(t)
                        else:
                            fails += 1
            visited_total[me] = visited
            fails_total[me] += fails
            drained_total[me] = drained

        live_snapshot = tuple(sorted(heap._records.keys()))
        mutator_threads = []
        mutator_errors: list[BaseException] = []
        if mutators and stream is not None and stream.mutation_count:
            def run_mutator(k: int) -> None:
                try:
                    replay_mutations(heap, stream, thread_index=k, threads=mutators,
                                     live_view=live_snapshot)
                except BaseException as exc:  # surfaced after join
                    mutator_errors.append(exc)

            mutator_threads = [threading.Thread(target=run_mutator, args=(k,))
                               for k in range(mutators)]

        t0 = time.perf_counter_ns()
        marker_threads = [threading.Thread(target=marker, args=(k,)) for k in range(nmarkers)]
        for t in marker_threads:
            t.start()
        for t in mutator_threads:
            t.start()
        for t in marker_threads:
            t.join()
        duration = time.perf_counter_ns() - t0
        for t in mutator_threads:
            t.join()
        if mutator_errors:
            raise mutator_errors[0]
    finally:
        heap.end_concurrent_mark()

    return MarkResult(
        marked=heap.marked_refs(),
        visited_count=sum(visited_total),
        duration_ns=duration,
        dispatch_count=None,
        cas_failures=sum(fails_total),
        satb_drained=sum(drained_total),
    )
