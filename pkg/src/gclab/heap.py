"""An index-based object heap with two generations.

Objects live in a record table keyed by a monotonically increasing index;
indices are never reused within one heap lifetime, so a dangling reference
is always detectable. Payloads are real byte buffers (copying them costs
real memory bandwidth) and reference slots for all objects are packed into
one shared int32 pool so traversal engines can work on flat arrays.

The heap is single-threaded except while a concurrent marking phase is
active. In that mode ``set_ref`` may run on several mutator threads at
once: each slot store, mark store, and snapshot-buffer append is a single
CPython operation and therefore atomic under the GIL.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import CapacityError, InvalidRefError

ObjectRef = int

YOUNG = "young"
OLD = "old"

_GEN_FLAG = {YOUNG: 0, OLD: 1}
_NULL = -1

# Stripe count for the compare-and-swap mark path; power of two.
_MARK_LOCK_STRIPES = 128


class _GrowArray:
    """Append-only numpy-backed array with amortised doubling.

    ``view()`` exposes the filled prefix without copying. Views become
    stale after the backing buffer grows, so engines take a fresh view per
    phase; indices handed out earlier stay valid forever.
    """

    __slots__ = ("_buf", "_len")

    def __init__(self, dtype, capacity: int = 1024) -> None:
        self._buf = np.zeros(capacity, dtype=dtype)
        self._len = 0

    def __len__(self) -> int:
        return self._len

    def _grow_to(self, needed: int) -> None:
        cap = len(self._buf)
        if needed <= cap:
            return
        new_cap = max(needed, cap * 2)
        buf = np.zeros(new_cap, dtype=self._buf.dtype)
        buf[: self._len] = self._buf[: self._len]
        self._buf = buf

    def reserve(self, extra: int) -> None:
        self._grow_to(self._len + extra)

    def append(self, value) -> int:
        pos = self._len
        self._grow_to(pos + 1)
        self._buf[pos] = value
        self._len = pos + 1
        return pos

    def extend_fill(self, count: int, value) -> int:
        pos = self._len
        self._grow_to(pos + count)
        self._buf[pos : pos + count] = value
        self._len = pos + count
        return pos

    def view(self) -> np.ndarray:
        return self._buf[: self._len]

    def __getitem__(self, i):
        return self._buf[i]

    def __setitem__(self, i, value) -> None:
        self._buf[i] = value


@dataclass(frozen=True)
class HeapConfig:
    """Byte capacities of the two generations."""

    young_capacity: int
    old_capacity: int

    def __post_init__(self) -> None:
        if self.young_capacity <= 0 or self.old_capacity <= 0:
            raise ValueError("generation capacities must be positive")


@dataclass
class ObjectRecord:
    """One heap object: payload bytes plus a run of reference slots.

    ``slot_base``/``slot_count`` locate the object's slots inside the
    heap's shared slot pool. ``forward`` is only non-None while a copying
    phase is in flight.
    """

    index: int
    payload: np.ndarray
    slot_base: int
    slot_count: int
    forward: Optional[int] = None

    @property
    def payload_size(self) -> int:
        return int(self.payload.size)


class SATBBuffers:
    """Per-thread snapshot buffers for overwritten slot values.

    ``record`` appends to the calling thread's own list, so mutators never
    contend; markers drain any buffer. list.append/list.pop are atomic in
    CPython, which is all the concurrency contract requires.
    """

    def __init__(self) -> None:
        self._buffers: dict[int, list[int]] = {}

    def record(self, ref: int) -> None:
        ident = threading.get_ident()
        buf = self._buffers.get(ident)
        if buf is None:
            buf = self._buffers.setdefault(ident, [])
        buf.append(ref)

    def drain(self, limit: int = 256) -> list[int]:
        out: list[int] = []
        for buf in list(self._buffers.values()):
            while buf and len(out) < limit:
                try:
                    out.append(buf.pop())
                except IndexError:
                    break
            if len(out) >= limit:
                break
        return out

    def empty(self) -> bool:
        return all(not buf for buf in list(self._buffers.values()))


class Heap:
    """Two-generation object heap with roots and an exact remembered set."""

    def __init__(self, config: HeapConfig) -> None:
        self.config = config
        self._records: dict[int, ObjectRecord] = {}
        self._next_index = 0
        self._roots: list[int] = []
        self.remembered_set: set[tuple[int, int]] = set()

        self._slot_pool = _GrowArray(np.int32, 4096)
        self._slot_base = _GrowArray(np.int64)
        self._slot_count = _GrowArray(np.int32)
        self._gen = _GrowArray(np.uint8)
        self._alive = _GrowArray(np.uint8)
        self.marks = bytearray()

        self._used = {YOUNG: 0, OLD: 0}
        self._counts = {YOUNG: 0, OLD: 0}

        self._alloc_lock = threading.Lock()
        self._remset_lock = threading.Lock()
        self._mark_locks = [threading.Lock() for _ in range(_MARK_LOCK_STRIPES)]
        self._satb: Optional[SATBBuffers] = None
        self._allocate_marked = False
        self._in_collection = False

    # ------------------------------------------------------------------
    # allocation and basic access

    def allocate(self, payload_size: int, slot_count: int, gen: str = YOUNG) -> ObjectRef:
        """Create a fresh unmarked object with null slots and a zeroed payload."""
        if payload_size < 0:
            raise ValueError("payload_size must be >= 0")
        if slot_count < 0:
            raise ValueError("slot_count must be >= 0")
        if gen not in _GEN_FLAG:
            raise ValueError(f"unknown generation {gen!r}")
        with self._alloc_lock:
            cap = self.config.young_capacity if gen == YOUNG else self.config.old_capacity
            if self._used[gen] + payload_size > cap:
                raise CapacityError(
                    f"{gen} generation full: {self._used[gen]} + {payload_size} > {cap}"
                )
            idx = self._next_index
            self._next_index = idx + 1
            base = self._slot_pool.extend_fill(slot_count, _NULL)
            self._slot_base.append(base)
            self._slot_count.append(slot_count)
            self._gen.append(_GEN_FLAG[gen])
            self._alive.append(1)
            self.marks.append(1 if self._allocate_marked else 0)
            self._records[idx] = ObjectRecord(idx, np.zeros(payload_size, np.uint8), base, slot_count)
            self._used[gen] += payload_size
            self._counts[gen] += 1
            return idx

    def resolve(self, ref: ObjectRef) -> ObjectRecord:
        rec = self._records.get(ref)
        if rec is None:
            raise InvalidRefError(f"ref {ref} does not resolve to a live object")
        return rec

    def contains(self, ref: ObjectRef) -> bool:
        return ref in self._records

    def generation_of(self, ref: ObjectRef) -> str:
        self.resolve(ref)
        return YOUNG if self._gen[ref] == 0 else OLD

    def payload_of(self, ref: ObjectRef) -> np.ndarray:
        return self.resolve(ref).payload

    def slots_of(self, ref: ObjectRef) -> list[Optional[int]]:
        rec = self.resolve(ref)
        raw = self._slot_pool.view()[rec.slot_base : rec.slot_base + rec.slot_count].tolist()
        return [None if v < 0 else v for v in raw]

    def get_slot(self, ref: ObjectRef, slot: int) -> Optional[int]:
        rec = self.resolve(ref)
        if not 0 <= slot < rec.slot_count:
            raise InvalidRefError(f"slot {slot} out of range for object {ref}")
        v = int(self._slot_pool[rec.slot_base + slot])
        return None if v < 0 else v

    def live_refs(self) -> Iterator[int]:
        return iter(self._records.keys())

    def refs_in(self, gen: str) -> list[int]:
        flag = _GEN_FLAG[gen]
        n = len(self._gen)
        mask = (self._gen.view() == flag) & (self._alive.view()[:n] == 1)
        return np.nonzero(mask)[0].tolist()

    @property
    def object_count(self) -> int:
        return len(self._records)

    def count_in(self, gen: str) -> int:
        return self._counts[gen]

    def bytes_used(self, gen: str) -> int:
        return self._used[gen]

    def bytes_free(self, gen: str) -> int:
        cap = self.config.young_capacity if gen == YOUNG else self.config.old_capacity
        return cap - self._used[gen]

    # ------------------------------------------------------------------
    # roots

    @property
    def roots(self) -> tuple[int, ...]:
        return tuple(self._roots)

    def add_root(self, ref: ObjectRef) -> None:
        self.resolve(ref)
        if ref not in self._roots:
            self._roots.append(ref)

    def remove_root(self, ref: ObjectRef) -> None:
        try:
            self._roots.remove(ref)
        except ValueError:
            raise InvalidRefError(f"ref {ref} is not a root") from None

    # ------------------------------------------------------------------
    # mutation

    def set_ref(self, src: ObjectRef, slot: int, target: Optional[ObjectRef]) -> None:
        """Store ``target`` into ``src.slots[slot]``.

        Maintains the remembered set (old source + young target adds an
        entry, anything else removes it) and, while a concurrent mark is
        active, records the overwritten value into the snapshot buffers
        before the store becomes visible.
        """
        rec = self.resolve(src)
        if not 0 <= slot < rec.slot_count:
            raise InvalidRefError(f"slot {slot} out of range for object {src}")
        if target is not None:
            self.resolve(target)
            tval = target
        else:
            tval = _NULL
        pos = rec.slot_base + slot

        if self._gen[src] == 1:
            # Old-generation source: keep the slot store and the remembered
            # set entry in step even under racing mutators.
            with self._remset_lock:
                old = int(self._slot_pool[pos])
                satb = self._satb
                if satb is not None and old >= 0:
                    satb.record(old)
                self._slot_pool[pos] = tval
                key = (src, slot)
                if target is not None and self._gen[target] == 0:
                    self.remembered_set.add(key)
                else:
                    self.remembered_set.discard(key)
        else:
            old = int(self._slot_pool[pos])
            satb = self._satb
            if satb is not None and old >= 0:
                satb.record(old)
            self._slot_pool[pos] = tval

    def fill_slots(self, ref: ObjectRef, targets: np.ndarray) -> None:
        """Bulk variant of set_ref for freshly generated objects.

        ``targets`` is an int array (-1 for null) covering every slot of
        ``ref``. Only valid outside marking phases.
        """
        if self._satb is not None:
            raise RuntimeError("fill_slots may not run during a concurrent mark")
        rec = self.resolve(ref)
        targets = np.asarray(targets, dtype=np.int32)
        if targets.shape != (rec.slot_count,):
            raise ValueError("targets must cover every slot exactly once")
        if targets.size:
            if int(targets.min()) < -1 or int(targets.max()) >= self._next_index:
                raise InvalidRefError("slot target out of range")
            real = targets[targets >= 0]
            if real.size and not self._alive.view()[real].all():
                raise InvalidRefError("slot target is not a live object")
        self._slot_pool.view()[rec.slot_base : rec.slot_base + rec.slot_count] = targets
        if self._gen[ref] == 1:
            gen_v = self._gen.view()
            for i, t in enumerate(targets.tolist()):
                key = (ref, i)
                if t >= 0 and gen_v[t] == 0:
                    self.remembered_set.add(key)
                else:
                    self.remembered_set.discard(key)

    # ------------------------------------------------------------------
    # marking support

    def clear_marks(self) -> None:
        for i in range(len(self.marks)):
            self.marks[i] = 0

    def set_mark_plain(self, ref: int) -> bool:
        """Ordinary store of the mark byte. Racy duplicates are tolerated."""
        if self.marks[ref]:
            return False
        self.marks[ref] = 1
        return True

    def set_mark_cas(self, ref: int) -> bool:
        """Atomic unmarked-to-marked transition; True when this caller won."""
        lock = self._mark_locks[ref & (_MARK_LOCK_STRIPES - 1)]
        with lock:
            if self.marks[ref]:
                return False
            self.marks[ref] = 1
            return True

    def marked_refs(self) -> set[int]:
        marks = self.marks
        return {i for i in self._records if marks[i]}

    def begin_concurrent_mark(self) -> SATBBuffers:
        if self._satb is not None:
            raise RuntimeError("a concurrent mark is already active")
        buffers = SATBBuffers()
        self._satb = buffers
        self._allocate_marked = True
        return buffers

    def end_concurrent_mark(self) -> None:
        self._satb = None
        self._allocate_marked = False

    # ------------------------------------------------------------------
    # collection support

    def remembered_targets(self) -> list[int]:
        """Young objects currently referenced from recorded old-gen slots."""
        out = []
        pool = self._slot_pool
        for src, slot in self.remembered_set:
            rec = self._records.get(src)
            if rec is None:
                continue
            v = int(pool[rec.slot_base + slot])
            if v >= 0 and self._gen[v] == 0:
                out.append(v)
        return sorted(set(out))

    def reclaim(self, ref: ObjectRef) -> None:
        """Drop a dead object from the table. Its index is never reused."""
        rec = self._records.pop(ref, None)
        if rec is None:
            raise InvalidRefError(f"ref {ref} is not live")
        gen = YOUNG if self._gen[ref] == 0 else OLD
        self._used[gen] -= rec.payload_size
        self._counts[gen] -= 1
        self._alive[ref] = 0

    def scan_dangling(self) -> list[tuple[str, int, int]]:
        """Full-heap audit: returns (kind, holder, slot) for every dangling ref."""
        bad = []
        pool = self._slot_pool.view()
        for idx, rec in self._records.items():
            raw = pool[rec.slot_base : rec.slot_base + rec.slot_count]
            for i, v in enumerate(raw.tolist()):
                if v >= 0 and v not in self._records:
                    bad.append(("slot", idx, i))
        for i, r in enumerate(self._roots):
            if r not in self._records:
                bad.append(("root", r, i))
        return bad

    def recompute_remembered_set(self) -> set[tuple[int, int]]:
        """Independent full-scan of all old->young edges, for audits."""
        want = set()
        pool = self._slot_pool.view()
        gen = self._gen.view()
        for idx, rec in self._records.items():
            if gen[idx] != 1:
                continue
            raw = pool[rec.slot_base : rec.slot_base + rec.slot_count]
            for i, v in enumerate(raw.tolist()):
                if v >= 0 and v in self._records and gen[v] == 0:
                    want.add((idx, i))
        return want

    # engine-facing raw views -------------------------------------------------

    def _engine_views(self):
        return (
            self._slot_pool.view(),
            self._slot_base.view(),
            self._slot_count.view(),
            self._gen.view(),
        )


def new_heap(config: HeapConfig) -> Heap:
    """Construct an empty heap; capacities must be positive."""
    return Heap(config)


def reachable_oracle(heap: Heap, roots: Iterable[int]) -> set[int]:
    """Exact reachability from ``roots`` by plain iterative traversal.

    Deliberately naive and engine-free so it can serve as the independent
    oracle for every marking and collection test.
    """
    seen: set[int] = set()
    stack = [r for r in roots if heap.contains(r)]
    seen.update(stack)
    while stack:
        ref = stack.pop()
        for t in heap.slots_of(ref):
            if t is not None and t not in seen and heap.contains(t):
                seen.add(t)
                stack.append(t)
    return seen


def bfs_depth(heap: Heap, roots: Iterable[int]) -> int:
    """Number of BFS levels from the roots (the root level counts as one)."""
    seen = set()
    frontier = []
    for r in roots:
        if heap.contains(r) and r not in seen:
            seen.add(r)
            frontier.append(r)
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for ref in frontier:
            for t in heap.slots_of(ref):
                if t is not None and t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return depth


def canonical_serialization(heap: Heap, roots: Optional[Iterable[int]] = None) -> bytes:
    """Canonical byte form of the graph reachable from the roots.

    BFS order, slots visited in order, objects labelled by discovery
    order, payload bytes included. Two heaps whose live graphs are
    isomorphic (same shape, same payloads, same root order) serialize
    identically regardless of object indices or generations.
    """
    root_list = list(heap.roots if roots is None else roots)
    labels: dict[int, int] = {}
    queue: deque[int] = deque()

    def label_of(ref: int) -> int:
        lab = labels.get(ref)
        if lab is None:
            lab = len(labels)
            labels[ref] = lab
            queue.append(ref)
        return lab

    out = bytearray(b"GCLHEAP1")
    out += len(root_list).to_bytes(8, "little")
    for r in root_list:
        out += label_of(r).to_bytes(8, "little")
    while queue:
        ref = queue.popleft()
        rec = heap.resolve(ref)
        out += rec.payload_size.to_bytes(8, "little")
        out += rec.payload.tobytes()
        out += rec.slot_count.to_bytes(8, "little")
        for t in heap.slots_of(ref):
            if t is None:
                out += (2**64 - 1).to_bytes(8, "little")
            else:
                out += label_of(t).to_bytes(8, "little")
    return bytes(out)
