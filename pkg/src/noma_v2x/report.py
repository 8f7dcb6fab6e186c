"""Machine-readable result emission: versioned CSV rows and JSON reports.

Row order and float formatting are fixed so identical (configuration, seed)
inputs produce byte-identical files regardless of worker count or invocation.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from .engine import RunMetrics, bin_label, distance_bin_edges

SCHEMA_VERSION = "1"
_CI95_Z = 1.959963984540054


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return f"{value:.10g}"
    return str(value)


def bin_labels(comm_range_m: float, bin_m: float) -> list[str]:
    edges = distance_bin_edges(comm_range_m, bin_m)
    return [bin_label(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]


def metric_columns(labels: list[str]) -> list[str]:
    return [
        "generated", "decoded", "failed", "deferred", "prp_overall",
        *labels,
        "latency_satisfaction_ratio", "zero_denominator_flag",
        "decoded_per_period", "allocator_moves", "allocator_converged",
    ]


def metric_values(m: RunMetrics, labels: list[str]) -> list:
    return [
        m.generated, m.decoded, m.failed, m.deferred, m.prp_overall,
        *[m.prp_by_distance.get(lb, float("nan")) for lb in labels],
        m.latency_satisfaction_ratio, m.latency_zero_denominator,
        m.decoded_per_period, m.allocator_moves_total, m.allocator_converged_all,
    ]


def summarize(values: list[float]) -> dict[str, float]:
    vals = [v for v in values if not math.isnan(v)]
    n = len(vals)
    if n == 0:
        return {"mean": float("nan"), "std": float("nan"), "ci95_half": float("nan")}
    mean = sum(vals) / n
    if n > 1:
        var = sum((v - mean) ** 2 for v in vals) / (n - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    return {"mean": mean, "std": std, "ci95_half": _CI95_Z * std / math.sqrt(n)}


def _write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_run_report(out_dir, cfg, results: list[RunMetrics]) -> tuple[Path, Path]:
    """Per-seed rows plus mean/std/ci95 summary rows, as CSV and JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = bin_labels(cfg.scenario.comm_range_m, cfg.distance_bin_m)
    header = ["schema_version", "record", "scheme", "mode", "seed",
              *metric_columns(labels)]
    rows = []
    for m in sorted(results, key=lambda r: r.seed):
        rows.append([SCHEMA_VERSION, "seed", m.scheme, m.mode, m.seed,
                     *metric_values(m, labels)])
    numeric = {
        "prp_overall": [m.prp_overall for m in results],
        "latency_satisfaction_ratio": [m.latency_satisfaction_ratio for m in results],
        "decoded_per_period": [m.decoded_per_period for m in results],
    }
    stats = {k: summarize(v) for k, v in numeric.items()}
    n_cols = metric_columns(labels)
    for record in ("mean", "std", "ci95_half"):
        row = [SCHEMA_VERSION, record, cfg.scheme, cfg.mode, ""]
        for col in n_cols:
            if col in stats:
                row.append(stats[col][record])
            else:
                row.append("")
        rows.append(row)
    csv_path = out_dir / "metrics.csv"
    _write_csv(csv_path, header, rows)

    json_path = out_dir / "metrics.json"
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "results": [_metrics_json(m, labels) for m in
                    sorted(results, key=lambda r: r.seed)],
        "aggregate": stats,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return csv_path, json_path


def _metrics_json(m: RunMetrics, labels: list[str]) -> dict:
    out = {
        "scheme": m.scheme,
        "mode": m.mode,
        "seed": m.seed,
        "generated": m.generated,
        "decoded": m.decoded,
        "failed": m.failed,
        "deferred": m.deferred,
        "prp_overall": m.prp_overall,
        "prp_by_distance": {lb: m.prp_by_distance.get(lb) for lb in labels},
        "latency_satisfaction_ratio": m.latency_satisfaction_ratio,
        "latency_zero_denominator": m.latency_zero_denominator,
        "decoded_per_period": m.decoded_per_period,
        "allocator": {
            "moves_total": m.allocator_moves_total,
            "converged_all": m.allocator_converged_all,
            "utility_trace": m.utility_trace,
        },
        "starved_vehicle_periods": m.starved_vehicle_periods,
    }
    if m.power_traces is not None:
        out["power_traces"] = [
            {
                "period": t["period"],
                "slot": t["slot"],
                "iterations": [
                    {f"{tx}:{k}": p for (tx, k), p in it.items()}
                    for it in t["powers"]
                ],
            }
            for t in m.power_traces
        ]
    return out


def sweep_header(labels: list[str]) -> list[str]:
    return ["schema_version", "parameter", "value", "scheme", "mode", "seed",
            "prp_overall", *labels, "latency_satisfaction_ratio",
            "decoded_per_period", "zero_denominator_flag"]


def sweep_row(parameter: str, value, m: RunMetrics, labels: list[str]) -> list:
    return [SCHEMA_VERSION, parameter, value, m.scheme, m.mode, m.seed,
            m.prp_overall,
            *[m.prp_by_distance.get(lb, float("nan")) for lb in labels],
            m.latency_satisfaction_ratio, m.decoded_per_period,
            m.latency_zero_denominator]


def write_sweep_csv(out_dir, labels: list[str], rows: list[list]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.csv"
    _write_csv(path, sweep_header(labels), rows)
    return path
