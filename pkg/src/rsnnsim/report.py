"""Cycle reports and their JSON / CSV / text renderings.

Reports are plain dicts with a "kind" field and stable key order, so the
JSON form round-trips exactly and identical runs produce byte-identical
files.  CSV carries the tabular core of each kind; text is a readable
summary of the same numbers.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .memsys import BufferPlan


@dataclass(frozen=True)
class LayerCycles:
    index: int
    kind: str
    detail: str
    compute_cycles: int
    weight_fetch_cycles: int

    @property
    def total_cycles(self) -> int:
        return self.compute_cycles + self.weight_fetch_cycles


@dataclass(frozen=True)
class CycleReport:
    layers: tuple[LayerCycles, ...]
    clock_mhz: float
    buffer_plan: BufferPlan | None = None

    @property
    def total_compute_cycles(self) -> int:
        return sum(l.compute_cycles for l in self.layers)

    @property
    def total_weight_fetch_cycles(self) -> int:
        return sum(l.weight_fetch_cycles for l in self.layers)

    @property
    def total_cycles(self) -> int:
        return self.total_compute_cycles + self.total_weight_fetch_cycles

    @property
    def latency_us(self) -> float:
        return self.total_cycles / self.clock_mhz

    @property
    def throughput_fps(self) -> float:
        return self.clock_mhz * 1e6 / self.total_cycles if self.total_cycles else 0.0

    def to_dict(self) -> dict:
        d = {
            "layers": [
                {
                    "index": l.index,
                    "kind": l.kind,
                    "detail": l.detail,
                    "compute_cycles": l.compute_cycles,
                    "weight_fetch_cycles": l.weight_fetch_cycles,
                    "total_cycles": l.total_cycles,
                }
                for l in self.layers
            ],
            "total_compute_cycles": self.total_compute_cycles,
            "total_weight_fetch_cycles": self.total_weight_fetch_cycles,
            "total_cycles": self.total_cycles,
            "clock_mhz": self.clock_mhz,
            "latency_us": round(self.latency_us, 6),
            "throughput_fps": round(self.throughput_fps, 3),
        }
        if self.buffer_plan is not None:
            d["buffer_plan"] = self.buffer_plan.to_dict()
        return d


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2) + "\n"


def _csv_table(report: dict) -> tuple[list[str], list[list]]:
    kind = report.get("kind")
    if kind == "inference" or kind == "oracle" or kind == "evaluate":
        header = ["index", "kind", "detail", "compute_cycles",
                  "weight_fetch_cycles", "total_cycles"]
        rows = [
            [l["index"], l["kind"], l["detail"], l["compute_cycles"],
             l["weight_fetch_cycles"], l["total_cycles"]]
            for l in report.get("cycle_report", {}).get("layers", [])
        ]
        return header, rows
    if kind == "sweep_t":
        header = ["T", "total_cycles", "latency_us"]
        return header, [[r["T"], r["total_cycles"], r["latency_us"]] for r in report["rows"]]
    if kind == "sweep_units":
        header = ["conv_units", "total_cycles", "latency_us", "speedup_vs_baseline"]
        return header, [
            [r["conv_units"], r["total_cycles"], r["latency_us"], r["speedup_vs_baseline"]]
            for r in report["rows"]
        ]
    if kind == "calibrate":
        header = ["layer", "kind", "requant_shift"]
        return header, [[r["layer"], r["kind"], r["requant_shift"]] for r in report["rows"]]
    if kind == "buffer_plan":
        header = ["layer", "kind", "reads", "writes"]
        return header, [
            [p["layer"], p["kind"], p["reads"], p["writes"]]
            for p in report["plan"]["placements"]
        ]
    raise ConfigError(f"no CSV rendering for report kind {kind!r}")


def render_csv(report: dict) -> str:
    header, rows = _csv_table(report)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _text_cycle_block(cr: dict) -> list[str]:
    lines = [f"  {'layer':<16} {'compute':>12} {'fetch':>10} {'total':>12}"]
    for l in cr["layers"]:
        name = f"{l['index']}: {l['detail']}"
        lines.append(
            f"  {name:<16} {l['compute_cycles']:>12} "
            f"{l['weight_fetch_cycles']:>10} {l['total_cycles']:>12}"
        )
    lines.append(
        f"  {'total':<16} {cr['total_compute_cycles']:>12} "
        f"{cr['total_weight_fetch_cycles']:>10} {cr['total_cycles']:>12}"
    )
    lines.append(
        f"  latency {cr['latency_us']} us at {cr['clock_mhz']} MHz "
        f"({cr['throughput_fps']} fps)"
    )
    return lines


def render_text(report: dict) -> str:
    kind = report.get("kind")
    lines = [f"report: {kind}"]
    for key in ("network", "seed", "time_steps", "conv_units", "memory_mode"):
        if key in report:
            lines.append(f"  {key}: {report[key]}")
    if kind in ("inference", "oracle"):
        lines.append(f"  predicted class: {report['predicted']}")
        lines.append(f"  logits: {report['logits']}")
    if kind == "evaluate":
        lines.append(f"  items: {report['items']}")
        lines.append(f"  accuracy: {report['accuracy']}")
    if "cycle_report" in report:
        lines.extend(_text_cycle_block(report["cycle_report"]))
    if kind in ("sweep_t", "sweep_units", "calibrate"):
        header, rows = _csv_table(report)
        lines.append("  " + "  ".join(f"{h:>12}" for h in header))
        for row in rows:
            lines.append("  " + "  ".join(f"{v:>12}" for v in row))
    if kind == "buffer_plan":
        plan = report["plan"]
        lines.append(f"  2-D pair: {plan['buf2d_bits']} bits ({plan['buf2d_kilobytes']} KB)")
        lines.append(f"  1-D pair: {plan['buf1d_bits']} bits ({plan['buf1d_kilobytes']} KB)")
        for p in plan["placements"]:
            lines.append(f"  layer {p['layer']:<3} {p['kind']:<8} "
                         f"reads {p['reads']:<8} writes {p['writes']}")
    return "\n".join(lines) + "\n"


def render_report(report: dict, fmt: str) -> str:
    if fmt == "json":
        return render_json(report)
    if fmt == "csv":
        return render_csv(report)
    if fmt == "text":
        return render_text(report)
    raise ConfigError(f"unknown report format {fmt!r}")


def write_report(report: dict, path: str | Path, fmt: str):
    Path(path).write_text(render_report(report, fmt))
