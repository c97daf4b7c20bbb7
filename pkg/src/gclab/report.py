"""CSV reports and the figures rendered alongside them.

Every benchmark emits one CSV whose rows carry the full parameter tuple,
plus (unless disabled) one PNG next to it summarizing the sweep. Figures
are a convenience view of the CSV; nothing downstream depends on them.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence


def write_csv(path, fieldnames: Sequence[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fieldnames))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def figure_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_copy_bandwidth(rows: list[dict], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    engines = sorted({r["engine"] for r in rows})
    for engine in engines:
        pts = sorted(
            ((int(r["total_bytes"]), float(r["bandwidth_GBps"])) for r in rows if r["engine"] == engine)
        )
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=engine)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("total bytes copied")
    ax.set_ylabel("bandwidth (GB/s)")
    ax.set_title("object copy bandwidth by engine")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_mark(rows: list[dict], path) -> None:
    plt = _pyplot()
    xs = sorted({int(r["x"]) for r in rows})
    ncols = min(len(xs), 2)
    nrows = -(-len(xs) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(6 * ncols, 4 * nrows), squeeze=False)
    for k, x in enumerate(xs):
        ax = axes[k // ncols][k % ncols]
        sub = [r for r in rows if int(r["x"]) == x]
        combos = sorted({(r["engine"], r["mode"]) for r in sub})
        for engine, mode in combos:
            pts = sorted(
                (int(r["n"]), float(r["median_ns"]) / 1e6)
                for r in sub
                if r["engine"] == engine and r["mode"] == mode
            )
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{engine}/{mode}")
        ax.set_xscale("log", base=2)
        ax.set_yscale("log")
        ax.set_xlabel("objects")
        ax.set_ylabel("marking time (ms)")
        ax.set_title(f"X = {x}")
        ax.legend(fontsize=7)
        ax.grid(True, alpha=0.3)
    for k in range(len(xs), nrows * ncols):
        axes[k // ncols][k % ncols].axis("off")
    fig.suptitle("heap graph marking time")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_promote(rows: list[dict], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    sizes = sorted({int(r["object_size"]) for r in rows})
    engines = sorted({r["engine"] for r in rows})
    width = 0.8 / max(len(engines), 1)
    for j, engine in enumerate(engines):
        ys = []
        for size in sizes:
            match = [r for r in rows if r["engine"] == engine and int(r["object_size"]) == size]
            ys.append(float(match[0]["speedup_vs_cpu1"]) if match else 0.0)
        ax.bar([i + j * width for i in range(len(sizes))], ys, width=width, label=engine)
    ax.axhline(1.0, color="gray", linewidth=0.8, linestyle="--")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(sizes))])
    ax.set_xticklabels([_human_bytes(s) for s in sizes])
    ax.set_xlabel("object size")
    ax.set_ylabel("promotion copy speedup vs cpu1")
    ax.set_title("promotional object copying")
    ax.legend(fontsize=8)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_concurrent_mark(rows: list[dict], path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    runs = list(range(len(rows)))
    durs = [float(r["duration_ns"]) / 1e6 for r in rows]
    viol = [int(r["satb_violations"]) for r in rows]
    colors = ["tab:red" if v else "tab:blue" for v in viol]
    ax.bar(runs, durs, color=colors)
    ax.set_xlabel("run")
    ax.set_ylabel("concurrent mark duration (ms)")
    bad = sum(1 for v in viol if v)
    ax.set_title(f"concurrent marking ({bad} run(s) with snapshot violations)")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def render_gclog(summary, path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    items = sorted(summary.phase_breakdown_pct.items(), key=lambda kv: kv[1])
    ax.barh([k for k, _ in items], [v for _, v in items], color="tab:gray")
    ax.set_xlabel("% of total GC time")
    title = f"GC phases ({summary.gc_fraction_pct:.1f}% of runtime in GC"
    if summary.max_pause_ms is not None:
        title += f", max pause {summary.max_pause_ms:.1f}ms"
    ax.set_title(title + ")")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def _human_bytes(n: int) -> str:
    for unit, suffix in ((1 << 30, "G"), (1 << 20, "M"), (1 << 10, "K")):
        if n % unit == 0 and n >= unit:
            return f"{n // unit}{suffix}"
    return str(n)
