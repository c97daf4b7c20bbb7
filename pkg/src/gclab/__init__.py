"""gclab: a desk-scale generational garbage-collection laboratory.

A two-generation object heap with pluggable copying and marking engines
(serial, multi-worker, and a device-style latency-modeled frontier
engine), deterministic workload generators, snapshot-at-the-beginning
concurrent marking, a G1 unified-log analyzer, and a benchmark CLI.
"""

from .copying import (
    BandwidthReport,
    CopyBenchConfig,
    CopyEngine,
    PromotionPolicy,
    copy_bench,
    copy_objects,
    fixup_references,
)
from .errors import (
    CapacityError,
    EngineConfigError,
    GcLabError,
    HeapCorruptionError,
    InvalidRefError,
    WorkloadError,
)
from .gclog import GcEvent, GcSummary, PhaseSample, parse_log, summarize
from .heap import (
    Heap,
    HeapConfig,
    ObjectRecord,
    OLD,
    YOUNG,
    bfs_depth,
    canonical_serialization,
    new_heap,
    reachable_oracle,
)
from .marking import (
    CAS,
    EngineConfig,
    FRONTIER,
    MarkResult,
    PLAIN,
    SERIAL,
    WORKER_POOL,
    concurrent_mark,
    mark,
    set_mark,
)
from .promotion import PromotionReport, promote
from .workload import (
    GraphGenConfig,
    ListGenConfig,
    MutationStream,
    MutationStreamConfig,
    gen_linked_list,
    gen_mutation_stream,
    gen_random_graph,
    load_graph,
    replay_mutations,
    save_graph,
)

__version__ = "0.1.0"
