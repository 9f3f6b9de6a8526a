"""Command-line entry points: simulate, metrics, report, serve.

Exit codes: 0 success, 2 config error, 3 runtime error.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .domain import CampaignSpec, DomainError, SourceDocument, validate_campaign_spec
from .metrics import (
    EmbeddedSeq,
    bert_score,
    extract_claims,
    factual_accuracy,
    rouge_l,
    tokenize,
)
from .reporting import (
    cost_ratios,
    experiment_report,
    aggregate_reports,
    load_fixture,
    render_ratios,
    render_table,
)
from .simulator import load_bundled_profiles, load_profiles, run_experiment
from .stats import RatingRecord, cohen_kappa, krippendorff_alpha, pearson_r

CONFIG_ERROR = 2
RUNTIME_ERROR = 3


def _config_fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(CONFIG_ERROR)


@click.group()
def main():
    """Desk-scale cold-outreach campaign lab."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(), help="Campaign spec JSON file.")
@click.option("--profiles", "profiles_path", type=click.Path(),
              help="Behavior profile JSON file (defaults to bundled calibration profiles).")
@click.option("--leads", default=200, show_default=True, help="Leads per campaign.")
@click.option("--campaigns", default=1, show_default=True, help="Independent campaign runs.")
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_dir", default="reports", show_default=True, type=click.Path())
def simulate(spec_path, profiles_path, leads, campaigns, seed, out_dir):
    """Run seeded recipient-simulator experiments and write metric reports."""
    if not Path(spec_path).exists():
        _config_fail(f"spec file not found: {spec_path}")
    try:
        spec = CampaignSpec.from_dict(json.loads(Path(spec_path).read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        _config_fail(f"malformed spec {spec_path}: {exc}")
    violations = validate_campaign_spec(spec)
    if violations:
        _config_fail("; ".join(f"{v.code}: {v.detail}" for v in violations))
    if profiles_path:
        if not Path(profiles_path).exists():
            _config_fail(f"profiles file not found: {profiles_path}")
        profiles = load_profiles(profiles_path)
    else:
        profiles = load_bundled_profiles()
    missing = [a.arm_id for a in spec.variant_arms if a.arm_id not in profiles]
    if missing:
        _config_fail(f"no behavior profile for arms: {missing}")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    try:
        for i in range(campaigns):
            run_seed = seed + i
            result = run_experiment(spec, leads, profiles, run_seed)
            report = experiment_report(result.kpis, result.cost_per_lead,
                                       run_seed, leads, spec.id)
            (out / f"campaign-{i:03d}.json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n")
            reports.append(report)
        aggregate = aggregate_reports(reports)
        (out / "aggregate.json").write_text(
            json.dumps(aggregate, indent=2, sort_keys=True) + "\n")
    except DomainError as exc:
        click.echo(f"error: {exc.code}: {exc}", err=True)
        sys.exit(RUNTIME_ERROR)
    click.echo(f"wrote {campaigns} campaign report(s) + aggregate to {out}/")


@main.group()
def metrics():
    """Text-metric and statistics subcommands; results are JSON on stdout."""


def _read_tokens(path: str) -> list[str]:
    return tokenize(Path(path).read_text())


@metrics.command()
@click.argument("candidate", type=click.Path(exists=True))
@click.argument("reference", type=click.Path(exists=True))
@click.option("--beta", default=1.2, show_default=True)
def rouge(candidate, reference, beta):
    """ROUGE-L between two text files."""
    try:
        result = rouge_l(_read_tokens(candidate), _read_tokens(reference), beta=beta)
    except DomainError as exc:
        _config_fail(f"{exc.code}: {exc}")
    click.echo(json.dumps({"precision": result.precision, "recall": result.recall,
                           "f_measure": result.f_measure, "beta": result.beta,
                           "lcs_length": result.lcs_length}))


def _load_embedded(path: str) -> EmbeddedSeq:
    tokens, vectors, idf = [], [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        tokens.append(rec["token"])
        vectors.append(rec["vector"])
        idf.append(rec.get("idf", 1.0))
    return EmbeddedSeq.build(tokens, vectors, idf)


@metrics.command()
@click.argument("candidate", type=click.Path(exists=True))
@click.argument("reference", type=click.Path(exists=True))
@click.option("--baseline", default=0.0, show_default=True,
              help="Baseline b for interpretability rescaling.")
def bertscore(candidate, reference, baseline):
    """BERTScore from embedding fixture files (one token record per line)."""
    try:
        result = bert_score(_load_embedded(candidate), _load_embedded(reference),
                            baseline=baseline)
    except (DomainError, json.JSONDecodeError, KeyError) as exc:
        _config_fail(str(exc))
    click.echo(json.dumps({"precision": result.precision, "recall": result.recall,
                           "f1": result.f1, "baseline": result.baseline,
                           "rescaled": result.rescaled}))


@metrics.command()
@click.argument("output", type=click.Path(exists=True))
@click.argument("sources", nargs=-1, required=True, type=click.Path(exists=True))
def factual(output, sources):
    """Factual accuracy of OUTPUT text against plain-text SOURCES."""
    docs = [SourceDocument(url=f"file://{p}", fetched_at=0.0, text=Path(p).read_text())
            for p in sources]
    claims = extract_claims(Path(output).read_text(), docs)
    score = factual_accuracy(claims)
    click.echo(json.dumps({
        "claims": [{"claim": c.claim, "label": c.label.value, "source_ref": c.source_ref}
                   for c in claims],
        "factual_accuracy": score,
    }))


@metrics.command()
@click.argument("statistic", type=click.Choice(["kappa", "alpha", "pearson"]))
@click.option("--matrix", help="JSON confusion matrix for kappa, e.g. [[20,5],[5,20]].")
@click.option("--ratings", type=click.Path(), help="Ratings file for alpha: item_id,rater_id,rating per line.")
@click.option("--metric", default="interval", type=click.Choice(["nominal", "interval"]))
@click.option("--x", "x_json", help="JSON list for pearson.")
@click.option("--y", "y_json", help="JSON list for pearson.")
def stats(statistic, matrix, ratings, metric, x_json, y_json):
    """Inter-rater agreement statistics."""
    try:
        if statistic == "kappa":
            if not matrix:
                _config_fail("kappa needs --matrix")
            result = cohen_kappa(json.loads(matrix))
        elif statistic == "alpha":
            if not ratings or not Path(ratings).exists():
                _config_fail("alpha needs --ratings pointing at an existing file")
            records = []
            for line in Path(ratings).read_text().splitlines():
                if not line.strip():
                    continue
                item_id, rater_id, rating = [p.strip() for p in line.split(",")]
                records.append(RatingRecord(item_id, rater_id, int(rating)))
            result = krippendorff_alpha(records, metric=metric)
        else:
            if not x_json or not y_json:
                _config_fail("pearson needs --x and --y")
            result = pearson_r(json.loads(x_json), json.loads(y_json))
    except (json.JSONDecodeError, ValueError) as exc:
        _config_fail(str(exc))
    except DomainError as exc:
        click.echo(f"error: {exc.code}: {exc}", err=True)
        sys.exit(RUNTIME_ERROR)
    click.echo(json.dumps({"statistic": result.statistic, "value": result.value,
                           **({"metric": metric} if statistic == "alpha" else {})}))


@main.command()
@click.option("--fixtures", "fixture", required=True,
              help="table1.json, table2.json, table3.json, or a fixture file path.")
@click.option("--ratios/--no-ratios", default=True, show_default=True,
              help="Append cost-ratio analysis for the cost table.")
def report(fixture, ratios):
    """Render a comparison table from a result fixture."""
    try:
        data = load_fixture(fixture)
    except DomainError as exc:
        _config_fail(f"{exc.code}: {exc}")
    click.echo(render_table(data), nl=False)
    if ratios and "total_system_cost" in data["columns"]:
        click.echo(render_ratios(cost_ratios(data)), nl=False)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--state-dir", type=click.Path(), help="Directory for append-only campaign logs.")
@click.option("--backends", "backends_path", type=click.Path(),
              help="Backend registry JSON; without it a deterministic local drafter is used.")
@click.option("--ui-dir", type=click.Path(), help="Built web UI to serve under /ui.")
def serve(port, host, state_dir, backends_path, ui_dir):
    """Start the campaign + curation HTTP API."""
    import uvicorn

    from .server import AppState, RegistryDrafter, create_app
    from .gateway import BackendRegistry

    drafter = None
    if backends_path:
        if not Path(backends_path).exists():
            _config_fail(f"backends file not found: {backends_path}")
        drafter = RegistryDrafter(BackendRegistry.from_file(backends_path))
    app = create_app(AppState(drafter=drafter, state_dir=state_dir), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
