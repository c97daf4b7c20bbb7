"""Parser and summarizer for JVM G1 unified-logging output (JDK 9+).

Recognized line shapes (uptime/level/tags decorators):

    [2.345s][info][gc] GC(7) Pause Young (Normal) (G1 Evacuation Pause) 512M->128M(1024M) 15.234ms
    [2.345s][info][gc] GC(9) Pause Remark 510M->510M(1024M) 2.100ms
    [2.345s][info][gc,phases] GC(7)   Object Copy: 10.1ms
    [4.000s][info][gc] GC(9) Concurrent Mark Cycle 120.500ms

Anything else is counted and skipped, never fatal. Phase names are
normalized through a fixed alias table mirroring the usual breakdown
legend (Update RS and Scan RS collapse into one bucket, and so on);
phase lines outside that table are skipped. A conforming log is produced
by e.g. ``-Xlog:gc,gc+phases=debug:file=gc.log:uptime,level,tags``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

YOUNG_PAUSE = "young_pause"
MIXED_PAUSE = "mixed_pause"
REMARK_PAUSE = "remark_pause"
CLEANUP_PAUSE = "cleanup_pause"
CONCURRENT_MARK_CYCLE = "concurrent_mark_cycle"

PAUSE_KINDS = (YOUNG_PAUSE, MIXED_PAUSE, REMARK_PAUSE, CLEANUP_PAUSE)

CONCURRENT_MARK_PHASE = "Concurrent Mark"
OTHER_PHASE = "Other"

# canonical phase buckets; "Concurrent Mark" is fed from cycle events and
# "Other" absorbs unattributed pause time
PHASE_ALIASES = {
    "Object Copy": "Object Copy",
    "Ext Root Scanning": "Ext Root Scanning",
    "Update RS": "Update/Scan RS",
    "Scan RS": "Update/Scan RS",
    "Update/Scan RS": "Update/Scan RS",
    "Ref Proc": "Ref Proc",
    "Reference Processing": "Ref Proc",
    "Code Root Scanning": "Code Root Scanning",
    "Termination": "Termination",
    "Choose CSet": "Choose CSet",
    "Choose Collection Set": "Choose CSet",
    "Clear CT": "Clear CT",
    "Clear Card Table": "Clear CT",
}

_SIZE_MULT = {"K": 1024, "M": 1024**2, "G": 1024**3}

_PAUSE_RE = re.compile(
    r"^\[(?P<ts>\d+(?:\.\d+)?)s\]\[(?:info|debug)\]\[gc\s*\]\s+"
    r"GC\((?P<id>\d+)\)\s+Pause\s+(?P<kind>Young|Remark|Cleanup)"
    r"(?P<quals>(?:\s+\([^)]*\))*)\s+"
    r"(?:(?P<before>\d+(?:\.\d+)?)(?P<bu>[KMG])->(?P<after>\d+(?:\.\d+)?)(?P<au>[KMG])"
    r"\((?P<cap>\d+(?:\.\d+)?)(?P<cu>[KMG])\)\s+)?"
    r"(?P<ms>\d+(?:\.\d+)?)ms\s*$"
)

_CONCURRENT_RE = re.compile(
    r"^\[(?P<ts>\d+(?:\.\d+)?)s\]\[(?:info|debug)\]\[gc\s*\]\s+"
    r"GC\((?P<id>\d+)\)\s+Concurrent Mark Cycle\s+(?P<ms>\d+(?:\.\d+)?)ms\s*$"
)

_PHASE_RE = re.compile(
    r"^\[(?P<ts>\d+(?:\.\d+)?)s\]\[(?:info|debug)\]\[gc,phases\s*\]\s+"
    r"GC\((?P<id>\d+)\)\s+(?P<name>[A-Za-z][A-Za-z /]*?):\s+(?P<ms>\d+(?:\.\d+)?)ms\s*$"
)


@dataclass(frozen=True)
class GcEvent:
    gc_id: int
    timestamp: float
    kind: str
    duration_ms: float
    heap_before: Optional[int] = None
    heap_after: Optional[int] = None
    heap_capacity: Optional[int] = None


@dataclass(frozen=True)
class PhaseSample:
    gc_id: int
    phase_name: str
    duration_ms: float


@dataclass
class GcSummary:
    total_runtime_s: float
    gc_time_s: float
    gc_fraction_pct: float
    max_pause_ms: Optional[float]
    avg_pause_ms: Optional[float]
    pause_count: int
    phase_breakdown_pct: dict[str, float] = field(default_factory=dict)
    skipped_lines: int = 0


def _size_bytes(value: str, unit: str) -> int:
    return int(float(value) * _SIZE_MULT[unit])


def parse_log(stream: Iterable[str] | TextIO) -> tuple[list[GcEvent], list[PhaseSample], int]:
    """Parse unified-log lines into events and phase samples.

    Returns (events, phase_samples, skipped_line_count). Never raises on
    malformed input; every unrecognized line increments the skip count.
    """
    events: list[GcEvent] = []
    phases: list[PhaseSample] = []
    skipped = 0
    for raw in stream:
        line = raw.rstrip("\n")
        if not line.strip():
            skipped += 1
            continue
        m = _PAUSE_RE.match(line)
        if m:
            kind_word = m.group("kind")
            quals = m.group("quals") or ""
            if kind_word == "Young":
                kind = MIXED_PAUSE if "(Mixed)" in quals else YOUNG_PAUSE
            elif kind_word == "Remark":
                kind = REMARK_PAUSE
            else:
                kind = CLEANUP_PAUSE
            before = after = cap = None
            if m.group("before") is not None:
                before = _size_bytes(m.group("before"), m.group("bu"))
                after = _size_bytes(m.group("after"), m.group("au"))
                cap = _size_bytes(m.group("cap"), m.group("cu"))
            events.append(
                GcEvent(
                    gc_id=int(m.group("id")),
                    timestamp=float(m.group("ts")),
                    kind=kind,
                    duration_ms=float(m.group("ms")),
                    heap_before=before,
                    heap_after=after,
                    heap_capacity=cap,
                )
            )
            continue
        m = _CONCURRENT_RE.match(line)
        if m:
            events.append(
                GcEvent(
                    gc_id=int(m.group("id")),
                    timestamp=float(m.group("ts")),
                    kind=CONCURRENT_MARK_CYCLE,
                    duration_ms=float(m.group("ms")),
                )
            )
            continue
        m = _PHASE_RE.match(line)
        if m:
            name = PHASE_ALIASES.get(m.group("name").strip())
            if name is None:
                skipped += 1
                continue
            phases.append(
                PhaseSample(
                    gc_id=int(m.group("id")),
                    phase_name=name,
                    duration_ms=float(m.group("ms")),
                )
            )
            continue
        skipped += 1
    return events, phases, skipped


def event_to_line(ev: GcEvent) -> str:
    """Canonical unified-log line for an event (the round-trip inverse of parse)."""
    ts = f"[{ev.timestamp:.3f}s][info][gc]"
    if ev.kind == CONCURRENT_MARK_CYCLE:
        return f"{ts} GC({ev.gc_id}) Concurrent Mark Cycle {ev.duration_ms:.3f}ms"
    if ev.kind == YOUNG_PAUSE:
        head = "Pause Young (Normal) (G1 Evacuation Pause)"
    elif ev.kind == MIXED_PAUSE:
        head = "Pause Young (Mixed) (G1 Evacuation Pause)"
    elif ev.kind == REMARK_PAUSE:
        head = "Pause Remark"
    else:
        head = "Pause Cleanup"
    sizes = ""
    if ev.heap_before is not None:
        def fmt(b: int) -> str:
            for unit in ("G", "M", "K"):
                if b % _SIZE_MULT[unit] == 0:
                    return f"{b // _SIZE_MULT[unit]}{unit}"
            return f"{b / _SIZE_MULT['K']:.3f}K"

        sizes = f" {fmt(ev.heap_before)}->{fmt(ev.heap_after)}({fmt(ev.heap_capacity)})"
    return f"{ts} GC({ev.gc_id}) {head}{sizes} {ev.duration_ms:.3f}ms"


def summarize(
    events: list[GcEvent],
    phases: list[PhaseSample],
    total_runtime_s: Optional[float] = None,
    skipped_lines: int = 0,
) -> GcSummary:
    """Aggregate pause statistics and the per-phase percentage breakdown.

    GC time counts stop-the-world pauses plus concurrent mark cycles, so
    the breakdown (which includes the Concurrent Mark bucket) closes to
    100 percent with the unattributed remainder in Other. Max and average
    cover pauses only and are absent when the log has none.
    """
    last_ts = max((e.timestamp for e in events), default=0.0)
    runtime = max(total_runtime_s or 0.0, last_ts)

    pauses = [e for e in events if e.kind != CONCURRENT_MARK_CYCLE]
    cycles = [e for e in events if e.kind == CONCURRENT_MARK_CYCLE]
    pause_ms = sum(e.duration_ms for e in pauses)
    concurrent_ms = sum(e.duration_ms for e in cycles)
    gc_ms = pause_ms + concurrent_ms

    sums: dict[str, float] = {}
    for p in phases:
        sums[p.phase_name] = sums.get(p.phase_name, 0.0) + p.duration_ms
    if concurrent_ms:
        sums[CONCURRENT_MARK_PHASE] = concurrent_ms
    attributed = sum(sums.values())
    if gc_ms > 0:
        sums[OTHER_PHASE] = max(gc_ms - attributed, 0.0)
        breakdown = {name: 100.0 * ms / gc_ms for name, ms in sums.items()}
    else:
        breakdown = {}

    return GcSummary(
        total_runtime_s=runtime,
        gc_time_s=gc_ms / 1000.0,
        gc_fraction_pct=(100.0 * gc_ms / 1000.0 / runtime) if runtime > 0 else 0.0,
        max_pause_ms=max((e.duration_ms for e in pauses), default=None),
        avg_pause_ms=(pause_ms / len(pauses)) if pauses else None,
        pause_count=len(pauses),
        phase_breakdown_pct=breakdown,
        skipped_lines=skipped_lines,
    )


def analyze_stream(stream: Iterable[str] | TextIO, total_runtime_s: Optional[float] = None) -> GcSummary:
    events, phases, skipped = parse_log(stream)
    return summarize(events, phases, total_runtime_s, skipped_lines=skipped)
