"""Command-line interface.

Exit codes: 0 = no differences, 1 = differences found, 2 = error. This
holds on every path so the tool can gate CI jobs.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .engine import JobConfig, Modality, run_job
from .errors import DiffscopeError, SeedMismatch
from .ingest import KeySpec
from .report import evaluate, render_report
from .synth import FAMILIES, GroundTruthLedger, SyntheticSpec, generate_synthetic

_FLAG_DEFAULTS = {
    "threshold": 0.6,
    "batch_size": 0,
    "workers": 0,
    "radius": 0.15,
    "label": True,
    "labeler_url": None,
    "seed": 0,
    "workspace": ".diffscope",
    "format": "both",
    "key": None,
}


def _common_options(fn):
    options = [
        click.option("--key", "key", default=None, help="Key column(s), comma-separated; omit for surrogate keys."),
        click.option("--map", "mappings", multiple=True, metavar="SRC=TGT", help="Column mapping override (repeatable)."),
        click.option("--threshold", type=float, default=None, help="Mapping score threshold (default 0.6)."),
        click.option("--batch-size", type=int, default=None, help="Rows per batch (0 = auto)."),
        click.option("--workers", type=int, default=None, help="Worker threads (0 = auto)."),
        click.option("--radius", type=float, default=None, help="Dynamic clustering radius (default 0.15)."),
        click.option("--label/--no-label", "label", default=None, help="Enable or disable cluster labeling."),
        click.option("--labeler-url", default=None, help="HTTP labeler endpoint; omit for the offline mock."),
        click.option("--seed", type=int, default=None, help="Seed for salts and evaluation matching."),
        click.option("--workspace", default=None, help="Workspace directory (checkpoints, memory, reports)."),
        click.option("--format", "fmt", type=click.Choice(["json", "markdown", "both"]), default=None),
        click.option("--config", "config_file", type=click.Path(exists=True), default=None, help="JSON config file; flags override it."),
    ]
    for deco in reversed(options):
        fn = deco(fn)
    return fn


def _effective(flags: dict, config_file: str | None) -> dict:
    """Merge CLI flags over config-file values over defaults."""
    merged = dict(_FLAG_DEFAULTS)
    if config_file:
        data = json.loads(Path(config_file).read_text(encoding="utf-8"))
        for name, value in data.items():
            if name in merged:
                merged[name] = value
    for name, value in flags.items():
        if value is not None:
            merged[name] = value
    return merged


def _key_spec(key: str | None) -> KeySpec:
    if not key:
        return KeySpec.surrogate()
    columns = [c.strip() for c in key.split(",") if c.strip()]
    if not columns:
        return KeySpec.surrogate()
    if len(columns) == 1:
        return KeySpec.primary(columns[0])
    return KeySpec.composite(*columns)


def _parse_mappings(raw: tuple[str, ...]) -> list[tuple[str, str]]:
    out = []
    for item in raw:
        src, sep, tgt = item.partition("=")
        if not sep or not src or not tgt:
            raise click.UsageError(f"--map expects SRC=TGT, got {item!r}")
        out.append((src, tgt))
    return out


def _build_config(modality: Modality, source: str, target: str, flags: dict, **extra) -> JobConfig:
    eff = _effective(flags, flags.get("config_file"))
    return JobConfig(
        modality=modality,
        source=source,
        target=target,
        key=_key_spec(eff["key"]),
        threshold=float(eff["threshold"]),
        overrides=_parse_mappings(tuple(flags.get("mappings") or ())),
        batch_size=int(eff["batch_size"]),
        workers=int(eff["workers"]),
        radius=float(eff["radius"]),
        label_enabled=bool(eff["label"]),
        labeler_url=eff["labeler_url"],
        seed=int(eff["seed"]),
        workspace=str(eff["workspace"]),
        **extra,
    )


def _emit(report, config: JobConfig, fmt: str) -> int:
    reports_dir = Path(config.workspace) / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    if fmt in ("json", "both"):
        path = reports_dir / "report.json"
        path.write_bytes(render_report(report, "json"))
        click.echo(f"wrote {path}")
    if fmt in ("markdown", "both"):
        path = reports_dir / "report.md"
        path.write_bytes(render_report(report, "markdown"))
        click.echo(f"wrote {path}")
    click.echo(
        f"rows +{report.row_added} -{report.row_removed} ~{report.row_modified}; "
        f"{report.cell_diff_count} cell diffs in {len(report.clusters)} clusters; "
        f"{len(report.metadata.changes)} metadata changes"
    )
    return 1 if report.has_differences else 0


@click.group()
def cli():
    """Tri-modal data differencing with explainable clusters."""


@cli.command("file-diff")
@click.argument("source", type=click.Path(exists=True))
@click.argument("target", type=click.Path(exists=True))
@_common_options
def cmd_file_diff(source, target, mappings, config_file, fmt, **flags):
    """Diff two delimited or JSON-lines files."""
    flags.update({"mappings": mappings, "config_file": config_file, "format": fmt})
    config = _build_config(Modality.FILE_DIFF, source, target, flags)
    report = run_job(config)
    return _emit(report, config, _effective(flags, config_file)["format"])


@cli.command("source-diff")
@click.argument("source_db", type=click.Path(exists=True))
@click.argument("target_db", type=click.Path(exists=True))
@click.option("--source-table", required=True, help="Table in the source database.")
@click.option("--target-table", default=None, help="Table in the target database (defaults to the source table).")
@_common_options
def cmd_source_diff(source_db, target_db, source_table, target_table, mappings, config_file, fmt, **flags):
    """Diff two SQLite tables."""
    flags.update({"mappings": mappings, "config_file": config_file, "format": fmt})
    target_table = target_table or source_table
    config = _build_config(
        Modality.SOURCE_DIFF,
        f"{source_db}::{source_table}",
        f"{target_db}::{target_table}",
        flags,
    )
    report = run_job(config)
    return _emit(report, config, _effective(flags, config_file)["format"])


@cli.command("query-diff")
@click.argument("source_db", type=click.Path(exists=True))
@click.argument("target_db", type=click.Path(exists=True), required=False)
@click.option("--source-sql", required=True, help="Read-only SQL for the source result set.")
@click.option("--target-sql", required=True, help="Read-only SQL for the target result set.")
@_common_options
def cmd_query_diff(source_db, target_db, source_sql, target_sql, mappings, config_file, fmt, **flags):
    """Diff two SQL query result sets (one or two database files)."""
    flags.update({"mappings": mappings, "config_file": config_file, "format": fmt})
    config = _build_config(
        Modality.QUERY_DIFF,
        source_db,
        target_db or source_db,
        flags,
        source_sql=source_sql,
        target_sql=target_sql,
    )
    report = run_job(config)
    return _emit(report, config, _effective(flags, config_file)["format"])


@cli.command("gen")
@click.option("--rows", type=int, required=True)
@click.option("--seed", type=int, default=7)
@click.option("--diff-rate", type=float, default=0.01)
@click.option("--families", default=None, help="Comma-separated subset of mutation families.")
@click.option("--out", "out_dir", required=True, type=click.Path())
def cmd_gen(rows, seed, diff_rate, families, out_dir):
    """Generate a synthetic source/target pair plus its ground-truth ledger."""
    family_tuple = tuple(f.strip() for f in families.split(",")) if families else FAMILIES
    spec = SyntheticSpec(rows=rows, seed=seed, diff_rate=diff_rate, families=family_tuple)
    src, tgt, ledger = generate_synthetic(spec, out_dir)
    click.echo(f"wrote {src}")
    click.echo(f"wrote {tgt}")
    click.echo(f"wrote {Path(out_dir) / 'ledger.json'} ({len(ledger.entries)} mutations)")
    return 0


def _run_timed(config: JobConfig):
    report = run_job(config)
    return report, report.timings.get("diff_phase_s", 0.0)


@cli.command("bench")
@click.option("--rows", "sizes", type=int, multiple=True, required=True, help="Dataset size (repeatable).")
@click.option("--seed", type=int, default=7)
@click.option("--workers", type=int, default=0, help="Parallel worker count (0 = one per core).")
@click.option("--workspace", default=".diffscope-bench")
def cmd_bench(sizes, seed, workers, workspace):
    """Generate synthetic pairs and compare sequential vs parallel runtimes."""
    import os

    ws = Path(workspace)
    rows_list = sorted(set(sizes))
    table = []
    for n in rows_list:
        data_dir = ws / f"data_{n}"
        if not (data_dir / "ledger.json").exists():
            generate_synthetic(SyntheticSpec(rows=n, seed=seed), data_dir)
        ledger = GroundTruthLedger.load(data_dir / "ledger.json")
        base = dict(
            modality=Modality.FILE_DIFF,
            source=str(data_dir / "source.csv"),
            target=str(data_dir / "target.csv"),
            key=KeySpec.primary("id"),
            label_enabled=False,
            seed=seed,
        )
        seq_config = JobConfig(**base, workers=-1, workspace=str(ws / f"seq_{n}"))
        par_config = JobConfig(
            **base,
            workers=workers or (os.cpu_count() or 1),
            workspace=str(ws / f"par_{n}"),
        )
        seq_report, seq_s = _run_timed(seq_config)
        par_report, par_s = _run_timed(par_config)
        identical = render_report(seq_report, "json") == render_report(par_report, "json")
        table.append(
            {
                "rows": n,
                "diffs": seq_report.cell_diff_count,
                "expected": len(ledger.entries),
                "clusters": len(seq_report.clusters),
                "sequential_s": seq_s,
                "parallel_s": par_s,
                "speedup": seq_s / par_s if par_s else float("nan"),
                "identical": identical,
            }
        )
    header = f"{'rows':>10} {'diffs':>8} {'clusters':>8} {'seq s':>9} {'par s':>9} {'speedup':>8} {'identical':>9}"
    click.echo(header)
    for row in table:
        click.echo(
            f"{row['rows']:>10} {row['diffs']:>8} {row['clusters']:>8} "
            f"{row['sequential_s']:>9.2f} {row['parallel_s']:>9.2f} "
            f"{row['speedup']:>8.2f} {str(row['identical']):>9}"
        )
    if len(table) > 1:
        first, last = table[0], table[-1]
        growth = last["rows"] / first["rows"]
        ratio = last["sequential_s"] / first["sequential_s"] if first["sequential_s"] else float("nan")
        click.echo(
            f"scaling: rows x{growth:.0f}, sequential runtime x{ratio:.2f} "
            f"(coefficient {ratio / growth:.2f}; 1.0 = linear)"
        )
    return 0


@cli.command("eval")
@click.argument("source", type=click.Path(exists=True))
@click.argument("target", type=click.Path(exists=True))
@click.option("--ledger", "ledger_path", required=True, type=click.Path(exists=True))
@click.option("--key", default="id")
@click.option("--workspace", default=".diffscope-eval")
def cmd_eval(source, target, ledger_path, key, workspace):
    """Score detection and labeling against a ground-truth ledger.

    Runs twice: rules-only (labeling disabled, template labels) and the
    full pipeline (offline mock client), printing both macro-F1 values.
    """
    ledger = GroundTruthLedger.load(ledger_path)
    ws = Path(workspace)
    results = {}
    for mode, enabled in (("rules_only", False), ("full_pipeline", True)):
        config = JobConfig(
            modality=Modality.FILE_DIFF,
            source=source,
            target=target,
            key=_key_spec(key),
            label_enabled=enabled,
            seed=ledger.seed,
            workspace=str(ws / mode),
        )
        report = run_job(config)
        results[mode] = evaluate(report, ledger)
    click.echo(f"{'mode':>14} {'precision':>10} {'recall':>8} {'macro_f1':>9}")
    for mode, res in results.items():
        click.echo(
            f"{mode:>14} {res.precision:>10.4f} {res.recall:>8.4f} {res.macro_f1:>9.4f}"
        )
    uplift = results["full_pipeline"].macro_f1 - results["rules_only"].macro_f1
    click.echo(f"labeling uplift: {uplift:+.4f}")
    return 0


def main(argv=None) -> int:
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return int(result) if isinstance(result, int) else 0
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.exceptions.Abort:
        return 2
    except DiffscopeError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
