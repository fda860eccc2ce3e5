"""Canonical report assembly, JSON/markdown rendering, and evaluation
against a synthetic ground-truth ledger."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .cluster import Cluster, RowClusterSignature, cluster_sort_key
from .datadiff import CellDiff, RowKey, cell_diff_to_json
from .errors import SeedMismatch
from .label import LabelJudgment
from .profiles import SummaryDiff, summary_to_json
from .schema import MappingSet, MetadataDiff

SCHEMA_VERSION = 1


def canonical_json_bytes(payload) -> bytes:
    """Sorted keys, shortest-round-trip floats, LF newline, ASCII-safe."""
    text = json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return (text + "\n").encode("ascii")


@dataclass
class EvaluationResult:
    precision: float
    recall: float
    per_label: dict[str, dict[str, float]]
    macro_f1: float

    def to_json(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "per_label": self.per_label,
            "macro_f1": self.macro_f1,
        }


@dataclass
class Report:
    """Merged job output. ``timings`` and the full diff lists are runtime
    artifacts: they are carried on the object but excluded from canonical
    serialization so reports stay byte-identical across worker counts."""

    config_echo: dict
    row_counts: dict
    mapping: MappingSet
    metadata: MetadataDiff
    summary: SummaryDiff
    row_added: int
    row_removed: int
    row_modified: int
    cell_diff_count: int
    clusters: list[Cluster]
    judgments: dict[str, LabelJudgment]
    signatures: list[RowClusterSignature]
    evaluation: EvaluationResult | None = None
    timings: dict = field(default_factory=dict)
    cell_diffs: list[CellDiff] = field(default_factory=list)

    @property
    def has_differences(self) -> bool:
        return bool(
            self.metadata.changes
            or self.row_added
            or self.row_removed
            or self.row_modified
            or self.cell_diff_count
        )


def _mapping_json(mapping: MappingSet) -> dict:
    return {
        "mappings": [
            {
                "source": m.source_column,
                "target": m.target_column,
                "lexical": round(m.lexical, 9),
                "structural": round(m.structural, 9),
                "type_compat": round(m.type_compat, 9),
                "combined": round(m.combined, 9),
                "origin": m.origin.value,
            }
            for m in mapping.mappings
        ],
        "unmapped_source": list(mapping.unmapped_source),
        "unmapped_target": list(mapping.unmapped_target),
    }


def _metadata_json(metadata: MetadataDiff) -> list:
    return [
        {
            "kind": c.kind.label,
            "impact_rank": c.impact_rank,
            "subject": c.subject,
            "detail": c.detail,
        }
        for c in metadata.changes
    ]


def judgment_to_json(j: LabelJudgment) -> dict:
    return {
        "labels": [
            {"name": l.name, "other_explanation": l.other_explanation} for l in j.labels
        ],
        "rationale": j.rationale,
        "confidence": round(j.confidence, 9),
        "evidence_row_ids": list(j.evidence_row_ids),
        "recommended_checks": list(j.recommended_checks),
        "origin": j.origin,
    }


def judgment_from_json(data: dict) -> LabelJudgment:
    from .label import DiffLabel

    return LabelJudgment(
        tuple(DiffLabel(l["name"], l.get("other_explanation")) for l in data["labels"]),
        data["rationale"],
        data["confidence"],
        tuple(data["evidence_row_ids"]),
        tuple(data["recommended_checks"]),
        data["origin"],
    )


def cluster_label_heading(report: Report, cluster: Cluster) -> str:
    judgment = report.judgments.get(cluster.id)
    if judgment is None:
        return cluster.id
    return ":".join(sorted(judgment.label_names()))


def report_payload(report: Report) -> dict:
    clusters_json = []
    for c in sorted(report.clusters, key=lambda c: cluster_sort_key(c.id)):
        entry = {
            "id": c.id,
            "kind": c.kind,
            "member_count": c.member_count,
            "columns": list(c.columns),
            "purity": round(c.purity, 9),
            "entropy": round(c.entropy, 9),
            "samples": [cell_diff_to_json(s) for s in c.samples],
        }
        judgment = report.judgments.get(c.id)
        entry["judgment"] = judgment_to_json(judgment) if judgment else None
        entry["label"] = cluster_label_heading(report, c)
        clusters_json.append(entry)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": report.config_echo,
        "row_counts": report.row_counts,
        "mapping": _mapping_json(report.mapping),
        "metadata_diff": _metadata_json(report.metadata),
        "summary_diff": summary_to_json(report.summary),
        "row_diff_counts": {
            "added": report.row_added,
            "removed": report.row_removed,
            "modified": report.row_modified,
        },
        "cell_diff_count": report.cell_diff_count,
        "clusters": clusters_json,
        "row_signatures": [
            {"key": list(s.key.parts), "signature": list(s.signature)}
            for s in report.signatures
        ],
        "evaluation": report.evaluation.to_json() if report.evaluation else None,
    }
    return payload


def render_report(report: Report, fmt: str = "json") -> bytes:
    if fmt == "json":
        return canonical_json_bytes(report_payload(report))
    if fmt == "markdown":
        return _render_markdown(report).encode("utf-8")
    raise ValueError(f"unknown format: {fmt}")


def _render_markdown(report: Report) -> str:
    lines = ["# Diff Report", ""]
    lines.append("## Overview")
    lines.append("")
    lines.append(f"- source rows: {report.row_counts.get('source', 0)}")
    lines.append(f"- target rows: {report.row_counts.get('target', 0)}")
    lines.append(
        f"- rows added: {report.row_added}, removed: {report.row_removed}, "
        f"modified: {report.row_modified}"
    )
    lines.append(f"- cell differences: {report.cell_diff_count}")
    lines.append(f"- clusters: {len(report.clusters)}")
    lines.append("")
    lines.append("## Metadata Diff")
    lines.append("")
    if report.metadata.changes:
        for c in report.metadata.changes:
            lines.append(f"- [{c.impact_rank}] {c.kind.label}: {c.subject} {c.detail}")
    else:
        lines.append("- no structural changes")
    lines.append("")
    lines.append("## Summary Diff")
    lines.append("")
    moved = [d for d in report.summary.deltas if d.emerging or d.disappearing]
    for d in report.summary.deltas:
        notes = []
        if d.emerging:
            notes.append("emerging: " + ", ".join(d.emerging[:5]))
        if d.disappearing:
            notes.append("disappearing: " + ", ".join(d.disappearing[:5]))
        if d.mean_shift:
            notes.append(f"mean shift {d.mean_shift:+.6g}")
        if d.skew_flag:
            notes.append("skew flip")
        if notes:
            lines.append(f"- {d.column}: " + "; ".join(notes))
    if not moved:
        lines.append("- no category-level movement")
    lines.append("")
    lines.append("## Clusters")
    lines.append("")
    top = sorted(
        report.clusters, key=lambda c: (-c.member_count, cluster_sort_key(c.id))
    )[:10]
    for c in top:
        heading = cluster_label_heading(report, c)
        lines.append(f"### {heading} ({c.id})")
        lines.append("")
        lines.append(
            f"- members: {c.member_count}, columns: {', '.join(c.columns)}, "
            f"purity: {c.purity:.3f}, entropy: {c.entropy:.3f}"
        )
        judgment = report.judgments.get(c.id)
        if judgment:
            lines.append(
                f"- judgment ({judgment.origin}, confidence {judgment.confidence:.3f}): "
                f"{judgment.rationale}"
            )
        for s in c.samples:
            lines.append(
                f"  - key {s.key}: `{s.column}` "
                f"{s.source_value.raw!r} -> {s.target_value.raw!r} [{s.detail.kind}]"
            )
        lines.append("")
    if not report.clusters:
        lines.append("- no clusters (0 differences)")
        lines.append("")
    lines.append("## Evaluation")
    lines.append("")
    if report.evaluation:
        e = report.evaluation
        lines.append(f"- cell precision: {e.precision:.4f}, recall: {e.recall:.4f}")
        lines.append(f"- macro-F1: {e.macro_f1:.4f}")
        for label in sorted(e.per_label):
            m = e.per_label[label]
            lines.append(
                f"  - {label}: P={m['precision']:.3f} R={m['recall']:.3f} F1={m['f1']:.3f}"
            )
    else:
        lines.append("- not evaluated")
    lines.append("")
    return "\n".join(lines)


def evaluate(report: Report, ledger) -> EvaluationResult:
    """Score a report against the synthetic generator's ground truth.

    Cell metrics match on (key, source column); label metrics compare each
    family's gold label with the judgment of the cluster holding the
    majority of that family's members.
    """
    if ledger.seed != report.config_echo.get("seed"):
        raise SeedMismatch(
            f"ledger seed {ledger.seed} != report seed {report.config_echo.get('seed')}"
        )
    gold_pairs = {(RowKey(tuple(e.key_parts)).encoded(), e.column) for e in ledger.entries}
    pred_pairs = {(d.key.encoded(), d.column) for d in report.cell_diffs}
    tp = len(gold_pairs & pred_pairs)
    precision = tp / len(pred_pairs) if pred_pairs else 1.0
    recall = tp / len(gold_pairs) if gold_pairs else 1.0

    # Map each diff to the clusters containing it.
    index_of = {(d.key.encoded(), d.column): i for i, d in enumerate(report.cell_diffs)}
    clusters_of: dict[int, list[str]] = {}
    for c in report.clusters:
        for i in c.member_indices:
            clusters_of.setdefault(i, []).append(c.id)

    families: dict[str, list[str]] = {}
    for e in ledger.entries:
        idx = index_of.get((RowKey(tuple(e.key_parts)).encoded(), e.column))
        if idx is None:
            families.setdefault(e.family, [])
            continue
        families.setdefault(e.family, []).extend(clusters_of.get(idx, []))

    label_tp: dict[str, int] = {}
    label_fp: dict[str, int] = {}
    label_fn: dict[str, int] = {}
    gold_labels_present: set[str] = set()
    for family, cluster_ids in sorted(families.items()):
        gold_label = ledger.gold_label(family)
        gold_labels_present.add(gold_label)
        predicted: set[str] = set()
        if cluster_ids:
            counts: dict[str, int] = {}
            for cid in cluster_ids:
                counts[cid] = counts.get(cid, 0) + 1
            majority = min(
                counts, key=lambda cid: (-counts[cid], cluster_sort_key(cid))
            )
            judgment = report.judgments.get(majority)
            if judgment:
                predicted = set(judgment.label_names())
        for label in predicted | {gold_label}:
            if label == gold_label and label in predicted:
                label_tp[label] = label_tp.get(label, 0) + 1
            elif label in predicted:
                label_fp[label] = label_fp.get(label, 0) + 1
            else:
                label_fn[label] = label_fn.get(label, 0) + 1

    per_label: dict[str, dict[str, float]] = {}
    f1_values = []
    for label in sorted(set(label_tp) | set(label_fp) | set(label_fn)):
        tp_l = label_tp.get(label, 0)
        fp_l = label_fp.get(label, 0)
        fn_l = label_fn.get(label, 0)
        p = tp_l / (tp_l + fp_l) if tp_l + fp_l else 0.0
        r = tp_l / (tp_l + fn_l) if tp_l + fn_l else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_label[label] = {"precision": p, "recall": r, "f1": f1}
        if label in gold_labels_present:
            f1_values.append(f1)
    macro = sum(f1_values) / len(f1_values) if f1_values else 0.0
    return EvaluationResult(precision, recall, per_label, macro)
