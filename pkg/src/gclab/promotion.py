"""Minor collection: promote every live young object into the old generation.

Liveness for the young generation is roots plus remembered-set targets,
computed with the configured mark engine restricted to young objects.
Survivors are copied (small objects by one engine, objects at or above
the policy threshold by the other), forwarding references installed,
every root and slot fixed up, and dead young objects reclaimed. The
collection is all-or-nothing: an old-generation overflow is detected
before any state changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .copying import CopyEngine, PromotionPolicy, copy_objects, fixup_references
from .errors import CapacityError, GcLabError
from .heap import Heap, OLD, YOUNG
from .marking import EngineConfig, mark


@dataclass
class PromotionReport:
    """Outcome of one minor collection."""

    objects_promoted: int
    bytes_promoted: int
    objects_reclaimed: int
    copy_duration_ns: int
    mark_duration_ns: int
    engine_used_per_object: dict[str, int] = field(default_factory=dict)


def promote(
    heap: Heap,
    policy: PromotionPolicy,
    copy_engine_small: CopyEngine,
    copy_engine_large: CopyEngine,
    mark_engine: EngineConfig,
) -> PromotionReport:
    """Run one minor collection and empty the young generation."""
    if heap._in_collection:
        raise GcLabError("collection already in progress")
    if heap._satb is not None:
        raise GcLabError("cannot promote while a concurrent mark is active")
    heap._in_collection = True
    try:
        young_at_start = heap.count_in(YOUNG)
        seeds = list(heap.roots) + heap.remembered_targets()
        mark_result = mark(heap, seeds, mark_engine, generation=YOUNG)
        live_young = sorted(mark_result.marked)

        live_bytes = sum(heap.resolve(r).payload_size for r in live_young)
        if live_bytes > heap.bytes_free(OLD):
            raise CapacityError(
                f"old generation cannot absorb {live_bytes} live young bytes"
            )

        threshold = policy.device_threshold
        small = [r for r in live_young if heap.resolve(r).payload_size < threshold]
        large = [r for r in live_young if heap.resolve(r).payload_size >= threshold]

        small_res = copy_objects(heap, small, OLD, copy_engine_small)
        large_res = copy_objects(heap, large, OLD, copy_engine_large)
        forwarding = {**small_res.forwarding, **large_res.forwarding}

        fixup_references(heap, forwarding)

        reclaimed = 0
        for ref in heap.refs_in(YOUNG):
            heap.reclaim(ref)
            if ref not in forwarding:
                reclaimed += 1
        # young is empty now, so no old->young edge can exist
        heap.remembered_set.clear()
        heap.clear_marks()

        assert len(forwarding) + reclaimed == young_at_start
        return PromotionReport(
            objects_promoted=len(forwarding),
            bytes_promoted=live_bytes,
            objects_reclaimed=reclaimed,
            copy_duration_ns=small_res.duration_ns + large_res.duration_ns,
            mark_duration_ns=mark_result.duration_ns,
            engine_used_per_object={"cpu": len(small), "device": len(large)},
        )
    finally:
        heap._in_collection = False
