"""Output writers: per-run metrics JSON, comparison tables and plot-data CSVs.

Every file except ``fig9_runtime.csv`` is a pure function of config and seed;
wall-clock timings live only in that one file.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cache import write_action_log

METRICS_SCHEMA = "ctxcache-metrics/1"
UTILIZATION_NOTE = "utilization = peak cache occupancy / capacity x 100"

COMPARISON_HEADER = (
    "run_index", "scenario", "variant", "replicate", "policy", "capacity", "Q_total", "Q_cache", "Q_miss",
    "Q_expired", "CHR", "CMR", "CER", "response_time_mean_ms", "response_time_p95_ms", "throughput_qps",
    "utilization_pct", "admissions", "evictions", "refreshes", "prefetches",
)
SUMMARY_HEADER = (
    "scenario", "variant", "policy", "capacity", "replicates", "CHR", "CMR", "CER", "response_time_mean_ms",
    "throughput_qps", "utilization_pct",
)
FIGURE_HEADERS = {
    "fig4_hits.csv": ("scenario", "variant", "replicate", "policy", "capacity", "cumulative_hits"),
    "fig5_expired.csv": ("scenario", "variant", "replicate", "policy", "capacity", "CER"),
    "fig6_resp_vs_rate.csv": ("scenario", "variant", "replicate", "policy", "capacity", "offered_rate_qps",
                              "response_time_mean_ms"),
    "fig7_latency.csv": ("scenario", "variant", "replicate", "policy", "capacity", "response_time_mean_ms"),
    "fig8_throughput.csv": ("scenario", "variant", "replicate", "policy", "capacity", "throughput_rpm"),
    "fig9_runtime.csv": ("scenario", "variant", "replicate", "policy", "capacity", "running_time_ms", "sweeps",
                         "mean_sweep_ms", "mean_sweep_occupancy"),
}
THRESHOLD_HEADER = ("timestamp_ms", "theta_update", "theta_evict")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(round(float(x), 9))
    return str(x)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def metrics_document(record: Mapping) -> dict:
    """JSON-ready document for one run (no wall-clock fields)."""
    doc = {"schema": METRICS_SCHEMA}
    for k in ("run_index", "scenario", "variant", "replicate", "corpus_seed", "trace_seed"):
        doc[k] = record[k]
    doc.update(record["metrics"])
    doc["utilization_definition"] = UTILIZATION_NOTE
    return doc


def write_metrics(path, record: Mapping) -> None:
    Path(path).write_text(json.dumps(metrics_document(record), indent=2) + "\n")


def write_thresholds(path, thresholds: Sequence[tuple]) -> None:
    _write_csv(Path(path), THRESHOLD_HEADER, thresholds)


def _key(rec):
    m = rec["metrics"]
    return rec["scenario"], rec["variant"], rec["replicate"], m["policy"], m["capacity"]


def comparison_rows(records: Sequence[Mapping]):
    for rec in records:
        m = rec["metrics"]
        yield (rec["run_index"], rec["scenario"], rec["variant"], rec["replicate"], m["policy"], m["capacity"],
               *(m[k] for k in COMPARISON_HEADER[6:]))


def summarize(records: Sequence[Mapping]) -> list[tuple]:
    """Replicate means per (scenario, variant, policy, capacity), in first-seen order."""
    groups: dict[tuple, list] = defaultdict(list)
    for rec in records:
        m = rec["metrics"]
        groups[(rec["scenario"], rec["variant"], m["policy"], m["capacity"])].append(m)
    rows = []
    for key, ms in groups.items():
        means = [float(np.mean([m[k] for m in ms])) for k in SUMMARY_HEADER[5:]]
        rows.append((*key, len(ms), *means))
    return rows


def format_table(rows: Sequence[tuple]) -> str:
    """Fixed-width table, one row per policy and capacity."""
    head = ("policy", "capacity", "CHR %", "CMR %", "CER %", "T_r ms", "thru q/s", "util %")
    body = [(r[2], str(r[3]), *(f"{v:.2f}" for v in r[5:])) for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    lines = []
    by_variant = defaultdict(list)
    for r, b in zip(rows, body):
        by_variant[(r[0], r[1])].append(b)
    for (scen, var), group in by_variant.items():
        lines.append(f"[{scen} / variant {var}]")
        lines.append("  ".join(h.rjust(w) for h, w in zip(head, widths)))
        lines.extend("  ".join(c.rjust(w) for c, w in zip(b, widths)) for b in group)
        lines.append("")
    lines.append(f"({UTILIZATION_NOTE}; T_r is simulated response time)")
    return "\n".join(lines) + "\n"


def figure_rows(records: Sequence[Mapping]) -> dict[str, list]:
    out = {name: [] for name in FIGURE_HEADERS}
    for rec in records:
        m = rec["metrics"]
        k = _key(rec)
        out["fig4_hits.csv"].append((*k, m["Q_cache"]))
        out["fig5_expired.csv"].append((*k, m["CER"]))
        out["fig6_resp_vs_rate.csv"].append((*k, m["offered_rate_qps"], m["response_time_mean_ms"]))
        out["fig7_latency.csv"].append((*k, m["response_time_mean_ms"]))
        out["fig8_throughput.csv"].append((*k, 60.0 * m["throughput_qps"]))
        sw = rec.get("sweep_times") or []
        mean_ms = 1000.0 * float(np.mean([s for _, s in sw])) if sw else 0.0
        occ = float(np.mean([o for o, _ in sw])) if sw else 0.0
        out["fig9_runtime.csv"].append((*k, rec.get("running_time_ms", 0.0), len(sw), mean_ms, occ))
    return out


def write_outputs(out_dir, records: Sequence[Mapping], action_logs: bool = True) -> dict[str, Path]:
    """Write the full output tree for a comparison; returns the main file paths."""
    out = Path(out_dir)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    if action_logs:
        (out / "logs").mkdir(exist_ok=True)
    for rec in records:
        write_metrics(out / "metrics" / f"{rec['tag']}.json", rec)
        if action_logs:
            write_action_log(rec["actions"], out / "logs" / f"actions-{rec['tag']}.csv")
            if rec["thresholds"]:
                write_thresholds(out / "logs" / f"thresholds-{rec['tag']}.csv", rec["thresholds"])
    paths = {"comparison": out / "comparison.csv", "summary": out / "summary.csv", "table": out / "summary.txt"}
    _write_csv(paths["comparison"], COMPARISON_HEADER, comparison_rows(records))
    rows = summarize(records)
    _write_csv(paths["summary"], SUMMARY_HEADER, rows)
    paths["table"].write_text(format_table(rows))
    for name, frows in figure_rows(records).items():
        _write_csv(out / name, FIGURE_HEADERS[name], frows)
        paths[name] = out / name
    return paths
