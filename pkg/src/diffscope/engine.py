"""Staged job orchestration: map -> metadata diff -> data diff -> profile ->
cluster -> label, with deterministic batch partitioning and merge.

Batches partition the key-sorted union of both snapshots, so the batch plan
depends only on the data and batch size, never on the worker count. Results
merge strictly in batch-index order, which makes the final report
byte-identical for any executor choice. Parallelism is a thread pool inside
one process; workers share the immutable snapshots and return owned
results.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from time import perf_counter

import numpy as np

from . import profiles as profiles_mod
from .cluster import (
    Cluster,
    DEFAULT_RADIUS,
    MicroCluster,
    MicroClusterState,
    RowClusterSignature,
    StaticPattern,
    aggregate_rows,
    cluster_from_json,
    cluster_sort_key,
    cluster_to_json,
    finalize_clusters,
    merge_states,
    needs_dynamic,
    static_classify,
    stream_insert,
)
from .datadiff import (
    CellDiff,
    RowDiff,
    RowKey,
    RowStatus,
    build_key_array,
    cell_diff_from_json,
    cell_diff_to_json,
    check_duplicates,
    diff_cell,
    featurize,
)
from .errors import DiffscopeError, MissingBatch, UnknownColumn
from .ingest import (
    KeyKind,
    KeySpec,
    TableSnapshot,
    execute_query,
    parse_value,
    read_snapshot,
)
from .label import (
    HttpLabelerClient,
    KnowledgeIndex,
    LabelJudgment,
    LabelingConfig,
    MockLabelerClient,
    label_cluster,
)
from .report import (
    Report,
    canonical_json_bytes,
    judgment_from_json,
    judgment_to_json,
)
from .schema import (
    ColumnMapping,
    MappingMemory,
    MappingOrigin,
    MappingSet,
    ChangeKind,
    MetadataChange,
    MetadataDiff,
    metadata_diff,
    resolve_mapping,
    score_candidates,
)

AUTO_BATCH_SMALL = 25_000
AUTO_BATCH_LARGE = 250_000
AUTO_BATCH_CUTOVER = 1_000_000
INLINE_ROW_LIMIT = 100_000
LABEL_CONCURRENCY = 4

STAGES = ("mapped", "metadiffed", "datadiffed", "profiled", "clustered", "labeled")


class Modality(Enum):
    FILE_DIFF = "file"
    SOURCE_DIFF = "source"
    QUERY_DIFF = "query"


class StageFailed(DiffscopeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class JobConfig:
    modality: Modality
    source: str
    target: str
    key: KeySpec
    source_sql: str | None = None
    target_sql: str | None = None
    threshold: float = 0.6
    overrides: list[tuple[str, str]] = field(default_factory=list)
    batch_size: int = 0  # 0 = auto
    workers: int = 0  # 0 = auto, -1 = forced inline
    radius: float = DEFAULT_RADIUS
    label_enabled: bool = True
    labeler_url: str | None = None
    evidence_k: int = 8
    candidates_m: int = 3
    token_budget: int = 1200
    seed: int = 0
    workspace: str = ".diffscope"

    def semantic_echo(self) -> dict:
        """Config echo for the report; excludes execution-only knobs
        (workers, workspace) so reports stay identical across modes."""
        return {
            "modality": self.modality.value,
            "source": self.source,
            "target": self.target,
            "source_sql": self.source_sql,
            "target_sql": self.target_sql,
            "key": {"kind": self.key.kind.value, "columns": list(self.key.columns)},
            "threshold": self.threshold,
            "overrides": [list(o) for o in self.overrides],
            "batch_size": self.batch_size,
            "radius": self.radius,
            "label": {
                "enabled": self.label_enabled,
                "url": self.labeler_url,
                "k": self.evidence_k,
                "m": self.candidates_m,
                "token_budget": self.token_budget,
            },
            "seed": self.seed,
        }

    def salt(self) -> bytes:
        return hashlib.blake2b(f"salt:{self.seed}".encode(), digest_size=16).digest()


def resolve_batch_size(batch_size: int, union_rows: int) -> int:
    if batch_size > 0:
        return batch_size
    return AUTO_BATCH_SMALL if union_rows <= AUTO_BATCH_CUTOVER else AUTO_BATCH_LARGE


@dataclass(frozen=True)
class ExecutorChoice:
    kind: str  # inline | pool
    workers: int = 1


def select_executor(row_count: int, config: JobConfig, batch_count: int = 1) -> ExecutorChoice:
    if config.workers == -1:
        return ExecutorChoice("inline")
    if config.workers > 0:
        return ExecutorChoice("pool", config.workers)
    if row_count < INLINE_ROW_LIMIT:
        return ExecutorChoice("inline")
    cores = os.cpu_count() or 1
    return ExecutorChoice("pool", max(1, min(cores, batch_count)))


@dataclass
class Batch:
    index: int
    key_low: bytes | None  # [low, high) over canonical key order
    key_high: bytes | None
    src_span: tuple[int, int]  # slice into the key-sorted source order
    tgt_span: tuple[int, int]
    size: int  # union keys covered


@dataclass
class AlignmentPlan:
    src_order: np.ndarray  # row indices, key-sorted
    tgt_order: np.ndarray
    src_sorted_keys: np.ndarray
    tgt_sorted_keys: np.ndarray
    union_keys: np.ndarray

    @property
    def union_count(self) -> int:
        return len(self.union_keys)


def build_plan(
    src: TableSnapshot, tgt: TableSnapshot, key: KeySpec, mapping: MappingSet
) -> AlignmentPlan:
    if key.kind is KeyKind.SURROGATE:
        src_keys = build_key_array(
            src, key, hash_columns=[m.source_column for m in mapping.mappings]
        )
        tgt_keys = build_key_array(
            tgt, key, hash_columns=[m.target_column for m in mapping.mappings]
        )
    else:
        tgt_names = []
        for name in key.columns:
            mapped = mapping.target_for(name)
            if mapped is None:
                raise UnknownColumn(f"key column {name!r} is not mapped on the target side")
            tgt_names.append(mapped)
        src_keys = build_key_array(src, key, key_columns=list(key.columns))
        tgt_keys = build_key_array(tgt, key, key_columns=tgt_names)
    src_order = np.argsort(src_keys, kind="stable")
    tgt_order = np.argsort(tgt_keys, kind="stable")
    src_sorted = src_keys[src_order]
    tgt_sorted = tgt_keys[tgt_order]
    if key.kind is KeyKind.SURROGATE:
        su, sf = np.unique(src_sorted, return_index=True)
        tu, tf = np.unique(tgt_sorted, return_index=True)
        src_order, src_sorted = src_order[sf], su
        tgt_order, tgt_sorted = tgt_order[tf], tu
    else:
        check_duplicates(src_sorted)
        check_duplicates(tgt_sorted)
    union = np.union1d(src_sorted, tgt_sorted)
    return AlignmentPlan(src_order, tgt_order, src_sorted, tgt_sorted, union)


def make_batches(plan: AlignmentPlan, batch_size: int) -> list[Batch]:
    union = plan.union_keys
    n = len(union)
    batch_size = max(1, batch_size)
    batches = []
    for index, start in enumerate(range(0, n, batch_size)):
        end = min(start + batch_size, n)
        low = bytes(union[start]) if start > 0 else None
        high = bytes(union[end]) if end < n else None
        s0 = int(np.searchsorted(plan.src_sorted_keys, union[start], "left")) if start > 0 else 0
        s1 = (
            int(np.searchsorted(plan.src_sorted_keys, union[end], "left"))
            if end < n
            else len(plan.src_sorted_keys)
        )
        t0 = int(np.searchsorted(plan.tgt_sorted_keys, union[start], "left")) if start > 0 else 0
        t1 = (
            int(np.searchsorted(plan.tgt_sorted_keys, union[end], "left"))
            if end < n
            else len(plan.tgt_sorted_keys)
        )
        batches.append(Batch(index, low, high, (s0, s1), (t0, t1), end - start))
    if not batches:
        batches.append(Batch(0, None, None, (0, 0), (0, 0), 0))
    return batches


def plan_batches(
    src: TableSnapshot,
    tgt: TableSnapshot,
    key: KeySpec,
    batch_size: int,
    mapping: MappingSet,
) -> tuple[AlignmentPlan, list[Batch]]:
    """Split the key-sorted union into contiguous ranges of <= batch_size keys."""
    plan = build_plan(src, tgt, key, mapping)
    return plan, make_batches(plan, batch_size)


@dataclass
class TaskResult:
    index: int
    added_keys: np.ndarray
    removed_keys: np.ndarray
    modified: list[RowDiff]
    cell_diffs: list[CellDiff]
    static_patterns: list[list[StaticPattern]]
    dynamic_local: list[tuple[int, int]]
    state: MicroClusterState
    seconds: float
    memory_estimate: int


@dataclass
class _DiffContext:
    src: TableSnapshot
    tgt: TableSnapshot
    plan: AlignmentPlan
    col_pairs: list  # (source descriptor, target descriptor), source-name order
    radius: float


def _diff_batch(ctx: _DiffContext, batch: Batch) -> TaskResult:
    t0 = perf_counter()
    s0, s1 = batch.src_span
    t0_, t1_ = batch.tgt_span
    src_rows = ctx.plan.src_order[s0:s1]
    tgt_rows = ctx.plan.tgt_order[t0_:t1_]
    src_keys = ctx.plan.src_sorted_keys[s0:s1]
    tgt_keys = ctx.plan.tgt_sorted_keys[t0_:t1_]
    common, spos, tpos = np.intersect1d(
        src_keys, tgt_keys, assume_unique=True, return_indices=True
    )
    removed = np.setdiff1d(src_keys, common, assume_unique=True)
    added = np.setdiff1d(tgt_keys, common, assume_unique=True)
    src_matched = src_rows[spos]
    tgt_matched = tgt_rows[tpos]

    memory = int(src_keys.nbytes + tgt_keys.nbytes)
    entries: list[tuple[int, int]] = []
    for order, (sc, tc) in enumerate(ctx.col_pairs):
        a = ctx.src.column_bytes(sc.ordinal)[src_matched]
        b = ctx.tgt.column_bytes(tc.ordinal)[tgt_matched]
        memory += int(a.nbytes + b.nbytes)
        neq = a != b
        for pos in np.nonzero(neq)[0]:
            entries.append((int(pos), order))
    entries.sort()

    cell_diffs: list[CellDiff] = []
    static_patterns: list[list[StaticPattern]] = []
    dynamic_local: list[tuple[int, int]] = []
    state = MicroClusterState(ctx.radius)
    by_row: dict[int, list[CellDiff]] = {}
    for pos, order in entries:
        sc, tc = ctx.col_pairs[order]
        key = RowKey.from_encoded(common[pos].decode("utf-8"))
        a_raw = ctx.src.column_bytes(sc.ordinal)[src_matched[pos]].decode("utf-8")
        b_raw = ctx.tgt.column_bytes(tc.ordinal)[tgt_matched[pos]].decode("utf-8")
        diff = diff_cell(
            parse_value(a_raw, sc.value_type), parse_value(b_raw, tc.value_type), sc, key
        )
        if diff is None:
            continue
        local = len(cell_diffs)
        cell_diffs.append(diff)
        patterns = static_classify(diff)
        static_patterns.append(patterns)
        if needs_dynamic(patterns):
            _, cid = stream_insert(state, featurize(diff), diff.column)
            dynamic_local.append((local, cid))
        by_row.setdefault(pos, []).append(diff)

    modified = [
        RowDiff(cells[0].key, RowStatus.MODIFIED, cells)
        for pos, cells in sorted(by_row.items())
    ]
    memory += 400 * len(cell_diffs)
    return TaskResult(
        batch.index,
        added,
        removed,
        modified,
        cell_diffs,
        static_patterns,
        dynamic_local,
        state,
        perf_counter() - t0,
        memory,
    )


@dataclass
class MergedDiff:
    added_keys: np.ndarray
    removed_keys: np.ndarray
    modified: list[RowDiff]
    cell_diffs: list[CellDiff]
    static_patterns: list[list[StaticPattern]]
    dynamic_global: list[tuple[int, int]]
    state: MicroClusterState
    peak_memory: int
    batch_seconds: list[float]


def merge_results(results: list[TaskResult], radius: float) -> MergedDiff:
    """Fold task results strictly in batch-index order."""
    indexed = sorted(results, key=lambda r: r.index)
    expected = list(range(len(indexed)))
    if [r.index for r in indexed] != expected:
        missing = sorted(set(expected) - {r.index for r in indexed})
        raise MissingBatch(f"missing batch results: {missing}")
    added = [r.added_keys for r in indexed]
    removed = [r.removed_keys for r in indexed]
    modified: list[RowDiff] = []
    cell_diffs: list[CellDiff] = []
    static_patterns: list[list[StaticPattern]] = []
    dynamic_global: list[tuple[int, int]] = []
    state = MicroClusterState(radius)
    offset = 0
    for r in indexed:
        modified.extend(r.modified)
        cell_diffs.extend(r.cell_diffs)
        static_patterns.extend(r.static_patterns)
        state, remap = merge_states(state, r.state)
        for local, cid in r.dynamic_local:
            dynamic_global.append((offset + local, remap[cid]))
        offset += len(r.cell_diffs)
    def _cat(arrays):
        arrays = [a for a in arrays if len(a)]
        if not arrays:
            return np.empty(0, dtype="S1")
        width = max(a.dtype.itemsize for a in arrays)
        return np.concatenate([a.astype(f"S{width}") for a in arrays])
    return MergedDiff(
        _cat(added),
        _cat(removed),
        modified,
        cell_diffs,
        static_patterns,
        dynamic_global,
        state,
        max((r.memory_estimate for r in indexed), default=0),
        [r.seconds for r in indexed],
    )


# --- checkpoints -----------------------------------------------------------


def _checkpoint_path(workspace: str | Path, stage: str) -> Path:
    return Path(workspace) / "checkpoints" / f"{stage}.json"


def checkpoint_stage(stage: str, artifact, input_hash: str, workspace: str | Path) -> Path:
    payload_bytes = canonical_json_bytes(artifact)
    body = {
        "stage": stage,
        "input_hash": input_hash,
        "payload_hash": hashlib.blake2b(payload_bytes, digest_size=16).hexdigest(),
        "payload": artifact,
    }
    path = _checkpoint_path(workspace, stage)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(canonical_json_bytes(body))
    os.replace(tmp, path)
    return path


def restore_stage(stage: str, input_hash: str, workspace: str | Path):
    """Return the stage artifact only on an exact hash match.

    Corrupt or stale checkpoints are treated as absent (recompute)."""
    path = _checkpoint_path(workspace, stage)
    if not path.exists():
        return None
    try:
        body = json.loads(path.read_text(encoding="utf-8"))
        if body.get("input_hash") != input_hash:
            return None
        payload = body.get("payload")
        digest = hashlib.blake2b(canonical_json_bytes(payload), digest_size=16).hexdigest()
        if digest != body.get("payload_hash"):
            return None
        return payload
    except (ValueError, OSError):
        return None


def _hash_file(path: str | Path) -> str:
    h = hashlib.blake2b(digest_size=16)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 23), b""):
            h.update(chunk)
    return h.hexdigest()


def compute_input_hash(config: JobConfig) -> str:
    fingerprints = []
    if config.modality is Modality.QUERY_DIFF:
        fingerprints.append(_hash_file(config.source))
        target_db = config.target or config.source
        fingerprints.append(_hash_file(target_db))
        fingerprints.append(config.source_sql or "")
        fingerprints.append(config.target_sql or "")
    else:
        for descriptor in (config.source, config.target):
            path = descriptor.partition("::")[0]
            fingerprints.append(_hash_file(path))
            fingerprints.append(descriptor)
    material = canonical_json_bytes([config.semantic_echo(), fingerprints])
    return hashlib.blake2b(material, digest_size=16).hexdigest()


# --- stage artifact serde ---------------------------------------------------


def _mapping_to_artifact(mapping: MappingSet) -> dict:
    return {
        "mappings": [
            {
                "source": m.source_column,
                "target": m.target_column,
                "lexical": m.lexical,
                "structural": m.structural,
                "type_compat": m.type_compat,
                "combined": m.combined,
                "origin": m.origin.value,
            }
            for m in mapping.mappings
        ],
        "unmapped_source": mapping.unmapped_source,
        "unmapped_target": mapping.unmapped_target,
    }


def _mapping_from_artifact(data: dict) -> MappingSet:
    return MappingSet(
        [
            ColumnMapping(
                m["source"],
                m["target"],
                m["lexical"],
                m["structural"],
                m["type_compat"],
                m["combined"],
                MappingOrigin(m["origin"]),
            )
            for m in data["mappings"]
        ],
        list(data["unmapped_source"]),
        list(data["unmapped_target"]),
    )


_KIND_BY_LABEL = {k.label: k for k in ChangeKind}


def _metadata_to_artifact(diff: MetadataDiff) -> list:
    return [
        {"kind": c.kind.label, "subject": c.subject, "detail": c.detail}
        for c in diff.changes
    ]


def _metadata_from_artifact(data: list) -> MetadataDiff:
    return MetadataDiff(
        [MetadataChange(_KIND_BY_LABEL[c["kind"]], c["subject"], c["detail"]) for c in data]
    )


def _state_to_artifact(state: MicroClusterState) -> dict:
    return {
        "radius": state.radius,
        "clusters": [
            {
                "id": c.id,
                "centroid": [float(x) for x in c.centroid],
                "weight": c.weight,
                "columns": sorted(c.column_set),
            }
            for c in state.clusters
        ],
    }


def _state_from_artifact(data: dict) -> MicroClusterState:
    state = MicroClusterState(data["radius"])
    for c in data["clusters"]:
        state.clusters.append(
            MicroCluster(c["id"], np.array(c["centroid"]), c["weight"], set(c["columns"]))
        )
    if state.clusters:
        state._matrix = np.stack([c.centroid for c in state.clusters])
    return state


def _merged_to_artifact(merged: MergedDiff) -> dict:
    return {
        "added_keys": [k.decode("utf-8") for k in merged.added_keys],
        "removed_keys": [k.decode("utf-8") for k in merged.removed_keys],
        "modified": [
            {"key": list(rd.key.parts), "cells": len(rd.cells)} for rd in merged.modified
        ],
        "cell_diffs": [cell_diff_to_json(d) for d in merged.cell_diffs],
        "static_patterns": [[p.value for p in pats] for pats in merged.static_patterns],
        "dynamic_global": [[i, cid] for i, cid in merged.dynamic_global],
        "state": _state_to_artifact(merged.state),
        "peak_memory": merged.peak_memory,
    }


def _merged_from_artifact(data: dict, radius: float) -> MergedDiff:
    cell_diffs = [cell_diff_from_json(d) for d in data["cell_diffs"]]
    by_key: dict[tuple, list[CellDiff]] = {}
    for d in cell_diffs:
        by_key.setdefault(d.key.parts, []).append(d)
    modified = [
        RowDiff(RowKey(tuple(m["key"])), RowStatus.MODIFIED, by_key.get(tuple(m["key"]), []))
        for m in data["modified"]
    ]
    return MergedDiff(
        np.array([k.encode() for k in data["added_keys"]], dtype="S")
        if data["added_keys"]
        else np.empty(0, dtype="S1"),
        np.array([k.encode() for k in data["removed_keys"]], dtype="S")
        if data["removed_keys"]
        else np.empty(0, dtype="S1"),
        modified,
        cell_diffs,
        [[StaticPattern(p) for p in pats] for pats in data["static_patterns"]],
        [(i, cid) for i, cid in data["dynamic_global"]],
        _state_from_artifact(data["state"]),
        data.get("peak_memory", 0),
        [],
    )


# --- the job runner ---------------------------------------------------------


def _load_snapshots(config: JobConfig) -> tuple[TableSnapshot, TableSnapshot]:
    if config.modality is Modality.QUERY_DIFF:
        target_db = config.target or config.source
        if not config.source_sql or not config.target_sql:
            raise DiffscopeError("query mode needs --source-sql and --target-sql")
        return (
            execute_query(config.source, config.source_sql),
            execute_query(target_db, config.target_sql),
        )
    return read_snapshot(config.source), read_snapshot(config.target)


def run_job(config: JobConfig) -> Report:
    """Execute all stages, reusing any checkpoint whose input hash matches."""
    t_total = perf_counter()
    ws = Path(config.workspace)
    for sub in ("checkpoints", "memory", "knowledge", "reports"):
        (ws / sub).mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    t0 = perf_counter()
    try:
        src, tgt = _load_snapshots(config)
        input_hash = compute_input_hash(config)
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("load", exc) from exc
    timings["load_s"] = perf_counter() - t0

    # mapped
    t0 = perf_counter()
    try:
        memory = MappingMemory.load(ws / "memory" / "mappings.json")
        artifact = restore_stage("mapped", input_hash, ws)
        if artifact is not None:
            mapping = _mapping_from_artifact(artifact)
        else:
            matrix = score_candidates(src.schema, tgt.schema, memory)
            mapping = resolve_mapping(matrix, config.threshold, config.overrides)
            checkpoint_stage("mapped", _mapping_to_artifact(mapping), input_hash, ws)
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("mapped", exc) from exc
    timings["map_s"] = perf_counter() - t0

    # metadiffed
    try:
        artifact = restore_stage("metadiffed", input_hash, ws)
        if artifact is not None:
            meta = _metadata_from_artifact(artifact)
        else:
            meta = metadata_diff(src.schema, tgt.schema, mapping, config.key, config.key)
            checkpoint_stage("metadiffed", _metadata_to_artifact(meta), input_hash, ws)
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("metadiffed", exc) from exc

    # datadiffed + profiled (profiling runs concurrently with the data diff)
    t0 = perf_counter()
    try:
        merged_art = restore_stage("datadiffed", input_hash, ws)
        summary_art = restore_stage("profiled", input_hash, ws)
        merged = _merged_from_artifact(merged_art, config.radius) if merged_art else None
        summary = profiles_mod.summary_from_json(summary_art) if summary_art else None
        if merged is None or summary is None:
            plan = build_plan(src, tgt, config.key, mapping)
            batch_size = resolve_batch_size(config.batch_size, plan.union_count)
            batches = make_batches(plan, batch_size)
            executor_choice = select_executor(plan.union_count, config, len(batches))
            pairs = sorted(
                (
                    (src.schema.column(m.source_column), tgt.schema.column(m.target_column))
                    for m in mapping.mappings
                ),
                key=lambda p: p[0].name,
            )
            if config.key.kind is not KeyKind.SURROGATE:
                key_sources = set(config.key.columns)
                pairs = [p for p in pairs if p[0].name not in key_sources]
            ctx = _DiffContext(src, tgt, plan, pairs, config.radius)
            profile_jobs = [
                (src.schema.column(m.source_column), tgt.schema.column(m.target_column))
                for m in mapping.mappings
            ]
            if executor_choice.kind == "inline":
                results = (
                    [_diff_batch(ctx, b) for b in batches] if merged is None else []
                )
                if summary is None:
                    summary = profiles_mod.summarize(src, tgt, mapping)
            else:
                with ThreadPoolExecutor(max_workers=executor_choice.workers) as pool:
                    prof_futures = (
                        [
                            pool.submit(profiles_mod.profile_pair, src, tgt, sc, tc)
                            for sc, tc in profile_jobs
                        ]
                        if summary is None
                        else []
                    )
                    diff_futures = (
                        [pool.submit(_diff_batch, ctx, b) for b in batches]
                        if merged is None
                        else []
                    )
                    results = [f.result() for f in diff_futures]
                    if summary is None:
                        summary = profiles_mod.SummaryDiff([f.result() for f in prof_futures])
            if merged is None:
                merged = merge_results(results, config.radius)
                checkpoint_stage("datadiffed", _merged_to_artifact(merged), input_hash, ws)
            checkpoint_stage("profiled", profiles_mod.summary_to_json(summary), input_hash, ws)
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("datadiffed", exc) from exc

    # clustered
    try:
        artifact = restore_stage("clustered", input_hash, ws)
        if artifact is not None:
            clusters = [cluster_from_json(c) for c in artifact["clusters"]]
            signatures = [
                RowClusterSignature(RowKey(tuple(s["key"])), tuple(s["signature"]))
                for s in artifact["signatures"]
            ]
        else:
            static_assignments = [
                (i, p)
                for i, pats in enumerate(merged.static_patterns)
                for p in pats
            ]
            clusters = finalize_clusters(
                static_assignments, merged.state, merged.dynamic_global, merged.cell_diffs
            )
            assignments = []
            for i, pats in enumerate(merged.static_patterns):
                for p in pats:
                    assignments.append((merged.cell_diffs[i].key, f"S:{p.value}"))
            for i, cid in merged.dynamic_global:
                assignments.append((merged.cell_diffs[i].key, f"D:{cid}"))
            signatures = aggregate_rows(assignments)
            checkpoint_stage(
                "clustered",
                {
                    "clusters": [cluster_to_json(c) for c in clusters],
                    "signatures": [
                        {"key": list(s.key.parts), "signature": list(s.signature)}
                        for s in signatures
                    ],
                },
                input_hash,
                ws,
            )
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("clustered", exc) from exc
    timings["diff_phase_s"] = perf_counter() - t0

    # labeled
    t0 = perf_counter()
    try:
        artifact = restore_stage("labeled", input_hash, ws)
        if artifact is not None:
            judgments = {cid: judgment_from_json(j) for cid, j in artifact.items()}
        else:
            judgments = _label_all(config, src, clusters, merged.cell_diffs, ws)
            checkpoint_stage(
                "labeled",
                {cid: judgment_to_json(j) for cid, j in judgments.items()},
                input_hash,
                ws,
            )
    except StageFailed:
        raise
    except Exception as exc:
        raise StageFailed("labeled", exc) from exc
    timings["label_s"] = perf_counter() - t0

    timings["total_s"] = perf_counter() - t_total
    timings["peak_batch_memory_bytes"] = merged.peak_memory
    return Report(
        config_echo=config.semantic_echo(),
        row_counts={"source": src.row_count, "target": tgt.row_count},
        mapping=mapping,
        metadata=meta,
        summary=summary,
        row_added=int(len(merged.added_keys)),
        row_removed=int(len(merged.removed_keys)),
        row_modified=len(merged.modified),
        cell_diff_count=len(merged.cell_diffs),
        clusters=clusters,
        judgments=judgments,
        signatures=signatures,
        evaluation=None,
        timings=timings,
        cell_diffs=merged.cell_diffs,
    )


def _label_all(
    config: JobConfig,
    src: TableSnapshot,
    clusters: list[Cluster],
    cell_diffs: list[CellDiff],
    ws: Path,
) -> dict[str, LabelJudgment]:
    client = None
    if config.label_enabled:
        client = (
            HttpLabelerClient(config.labeler_url) if config.labeler_url else MockLabelerClient()
        )
    index = KnowledgeIndex.load(ws / "knowledge")
    label_config = LabelingConfig(
        enabled=config.label_enabled,
        k=config.evidence_k,
        m=config.candidates_m,
        token_budget=config.token_budget,
        salt=config.salt(),
    )
    schema_types = {c.name: c.value_type.value for c in src.schema.columns}
    key_columns = list(config.key.columns)
    ordered = sorted(clusters, key=lambda c: cluster_sort_key(c.id))
    judgments: dict[str, LabelJudgment] = {}
    if not ordered:
        return judgments

    def job(cluster: Cluster) -> LabelJudgment:
        members = [cell_diffs[i] for i in cluster.member_indices]
        return label_cluster(
            cluster, members, label_config, client, index, schema_types, key_columns
        )

    workers = min(LABEL_CONCURRENCY, len(ordered))
    if workers <= 1 or client is None:
        for c in ordered:
            judgments[c.id] = job(c)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [(c.id, pool.submit(job, c)) for c in ordered]
            for cid, fut in futures:
                judgments[cid] = fut.result()
    return judgments
