"""Comparison-table rendering and cost-performance ratio analysis.

Table fixtures carry published results verbatim and are labeled
"paper-fixture"; anything this artifact computed itself is labeled
"computed". The two are never mixed without labels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from .domain import DomainError

BUNDLED_FIXTURES = ("table1.json", "table2.json", "table3.json")


class ReportError(DomainError):
    pass


def load_fixture(name_or_path: str) -> dict:
    """Load a bundled fixture by name or any fixture file by path."""
    if name_or_path in BUNDLED_FIXTURES:
        raw = resources.files("outreachlab.fixtures").joinpath(name_or_path).read_text()
    else:
        path = Path(name_or_path)
        if not path.exists():
            raise ReportError("FIXTURE_NOT_FOUND", str(path))
        raw = path.read_text()
    try:
        fixture = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ReportError("MALFORMED_FIXTURE", str(exc)) from exc
    if "columns" not in fixture or "rows" not in fixture:
        raise ReportError("MALFORMED_FIXTURE", "fixture needs columns and rows")
    return fixture


def fixture_value(fixture: dict, model: str, column: str):
    cols = fixture["columns"]
    if column not in cols:
        raise ReportError("UNKNOWN_COLUMN", column)
    idx = cols.index(column)
    for row in fixture["rows"]:
        if row[0] == model:
            return row[idx]
    raise ReportError("UNKNOWN_MODEL", model)


def _cell(value) -> str:
    # json round-trips floats exactly, keeping render lossless
    return json.dumps(value) if not isinstance(value, str) else value


def render_table(fixture: dict) -> str:
    cols = fixture["columns"]
    rows = [[_cell(v) for v in row] for row in fixture["rows"]]
    widths = [max(len(c), *(len(r[i]) for r in rows)) for i, c in enumerate(cols)]
    lines = [
        f"# {fixture.get('title', '')}  [{fixture.get('provenance', 'computed')}]",
        " | ".join(c.ljust(w) for c, w in zip(cols, widths)),
        "-|-".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append(" | ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def parse_rendered(text: str) -> dict:
    """Inverse of render_table for fixture round-trip checks."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0]
    title, provenance = header[2:].rsplit("  [", 1)
    cols = [c.strip() for c in lines[1].split(" | ")]
    rows = []
    for ln in lines[3:]:
        cells = [c.strip() for c in ln.split(" | ")]
        parsed = []
        for cell in cells:
            try:
                parsed.append(json.loads(cell))
            except json.JSONDecodeError:
                parsed.append(cell)
        rows.append(parsed)
    return {"title": title, "provenance": provenance.rstrip("]"), "columns": cols, "rows": rows}


@dataclass(frozen=True)
class CostRatio:
    baseline_model: str
    finetuned_model: str
    baseline_cost: float
    finetuned_cost: float
    ratio: float
    provenance: str


def cost_ratios(table3: dict, baseline_type: str = "Agentic Baseline") -> list[CostRatio]:
    """Per-lead cost ratios of every baseline against every fine-tuned row."""
    cols = table3["columns"]
    cost_idx = cols.index("total_system_cost")
    type_idx = cols.index("model_type")
    provenance = table3.get("provenance", "computed")
    baselines = [r for r in table3["rows"] if r[type_idx] == baseline_type]
    others = [r for r in table3["rows"] if r[type_idx] != baseline_type]
    out = []
    for b in baselines:
        for o in others:
            out.append(CostRatio(
                baseline_model=b[0], finetuned_model=o[0],
                baseline_cost=b[cost_idx], finetuned_cost=o[cost_idx],
                ratio=b[cost_idx] / o[cost_idx],
                provenance=provenance,
            ))
    return out


def render_ratios(ratios: list[CostRatio]) -> str:
    lines = ["# Per-lead cost ratios (baseline vs fine-tuned)"]
    for r in ratios:
        lines.append(f"{r.baseline_model} vs {r.finetuned_model}: "
                     f"${r.baseline_cost:.4f} / ${r.finetuned_cost:.4f} = "
                     f"{r.ratio:.2f}x  [{r.provenance}]")
    return "\n".join(lines) + "\n"


def experiment_report(kpis: dict, cost_per_lead: dict, seed: int,
                      n_leads: int, spec_id: str) -> dict:
    """MetricReport-shaped JSON for one simulated campaign; all computed."""
    return {
        "spec_id": spec_id,
        "seed": seed,
        "n_leads": n_leads,
        "provenance": "computed",
        "arms": {
            arm: {
                "kpis": report.to_dict(),
                "mean_cost_per_lead": (str(cost_per_lead[arm])
                                       if cost_per_lead.get(arm) is not None else None),
            }
            for arm, report in kpis.items()
        },
    }


def aggregate_reports(reports: list[dict]) -> dict:
    """Mean KPI rates and cost across per-campaign reports, weighted by leads."""
    if not reports:
        raise ReportError("NO_REPORTS", "nothing to aggregate")
    arms = sorted({a for r in reports for a in r["arms"]})
    agg: dict[str, dict] = {}
    for arm in arms:
        rows = [r["arms"][arm] for r in reports if arm in r["arms"]]
        totals = {k: 0 for k in ("delivered", "opens", "clicks", "replies", "unsubscribes")}
        for row in rows:
            for k in totals:
                totals[k] += row["kpis"][k]
        delivered = totals["delivered"]
        costs = [float(row["mean_cost_per_lead"]) for row in rows
                 if row["mean_cost_per_lead"] is not None]
        agg[arm] = {
            **totals,
            "open_rate": 100.0 * totals["opens"] / delivered if delivered else None,
            "ctr": 100.0 * totals["clicks"] / delivered if delivered else None,
            "reply_rate": 100.0 * totals["replies"] / delivered if delivered else None,
            "unsub_rate": 100.0 * totals["unsubscribes"] / delivered if delivered else None,
            "mean_cost_per_lead": sum(costs) / len(costs) if costs else None,
        }
    return {"provenance": "computed", "campaigns": len(reports), "arms": agg}
