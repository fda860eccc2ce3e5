"""Schema alignment: automatic column mapping with correction memory,
plus the impact-ranked structural (metadata) diff."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .datadiff import levenshtein_distance
from .errors import ConflictingOverrides, UnknownColumn
from .ingest import KeySpec, Schema, ValueType

# Combined-score weights over the three similarity dimensions.
W_LEXICAL = 0.5
W_STRUCTURAL = 0.2
W_TYPE = 0.3
MEMORY_FLOOR = 0.95
DEFAULT_THRESHOLD = 0.6

_FOLD_RE = re.compile(r"[ _\-]+")


def fold(name: str) -> str:
    return _FOLD_RE.sub("", name.strip().lower())


def lexical_similarity(a: str, b: str) -> float:
    """1 - editdistance(folded)/max(len) over the original name lengths."""
    if not a or not b:
        raise ValueError("names must be non-empty")
    dist = levenshtein_distance(fold(a), fold(b))
    return 1.0 - dist / max(len(a), len(b))


def type_compatibility(src: ValueType, tgt: ValueType) -> float:
    if src is tgt:
        return 1.0
    if {src, tgt} == {ValueType.INTEGER, ValueType.FLOAT}:
        return 0.8
    if ValueType.TEXT in (src, tgt):
        return 0.5
    return 0.0


class MappingOrigin(Enum):
    AUTO = "auto"
    MEMORY = "memory"
    OVERRIDE = "override"


@dataclass(frozen=True)
class ColumnMapping:
    source_column: str
    target_column: str
    lexical: float
    structural: float
    type_compat: float
    combined: float
    origin: MappingOrigin


@dataclass
class MappingSet:
    mappings: list[ColumnMapping]
    unmapped_source: list[str]
    unmapped_target: list[str]

    def pairs(self) -> list[tuple[str, str]]:
        return [(m.source_column, m.target_column) for m in self.mappings]

    def target_for(self, source_column: str) -> str | None:
        for m in self.mappings:
            if m.source_column == source_column:
                return m.target_column
        return None


@dataclass
class MemoryEntry:
    source: str
    target: str
    fingerprint: str
    count: int


class MappingMemory:
    """Persisted user corrections, keyed by a source-schema fingerprint so
    they are only reused across structurally similar schemas."""

    def __init__(self, entries: list[MemoryEntry] | None = None):
        self.entries = entries or []

    @staticmethod
    def fingerprint(schema: Schema) -> str:
        joined = "\x1f".join(sorted(schema.names))
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    @staticmethod
    def load(path: str | Path) -> "MappingMemory":
        path = Path(path)
        if not path.exists():
            return MappingMemory()
        data = json.loads(path.read_text(encoding="utf-8"))
        return MappingMemory(
            [MemoryEntry(e["source"], e["target"], e["fingerprint"], e["count"]) for e in data]
        )

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            [
                {"source": e.source, "target": e.target, "fingerprint": e.fingerprint, "count": e.count}
                for e in self.entries
            ],
            indent=2,
            sort_keys=True,
        )
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def pairs_for(self, fingerprint: str) -> set[tuple[str, str]]:
        return {(e.source, e.target) for e in self.entries if e.fingerprint == fingerprint}

    def record(self, source: str, target: str, fingerprint: str) -> None:
        for e in self.entries:
            if (e.source, e.target, e.fingerprint) == (source, target, fingerprint):
                e.count += 1
                return
        self.entries.append(MemoryEntry(source, target, fingerprint, 1))


@dataclass
class ScoreMatrix:
    source_columns: list[str]
    target_columns: list[str]
    lexical: np.ndarray
    structural: np.ndarray
    type_compat: np.ndarray
    combined: np.ndarray
    memory_pairs: set[tuple[int, int]] = field(default_factory=set)


def score_candidates(src: Schema, tgt: Schema, memory: MappingMemory | None = None) -> ScoreMatrix:
    ns, nt = len(src.columns), len(tgt.columns)
    lex = np.zeros((ns, nt))
    struct = np.zeros((ns, nt))
    tcomp = np.zeros((ns, nt))
    for i, sc in enumerate(src.columns):
        for j, tc in enumerate(tgt.columns):
            lex[i, j] = lexical_similarity(sc.name, tc.name)
            struct[i, j] = 1.0 - abs(i / ns - j / nt)
            tcomp[i, j] = type_compatibility(sc.value_type, tc.value_type)
    combined = W_LEXICAL * lex + W_STRUCTURAL * struct + W_TYPE * tcomp
    memory_pairs: set[tuple[int, int]] = set()
    if memory is not None:
        fp = MappingMemory.fingerprint(src)
        remembered = memory.pairs_for(fp)
        if remembered:
            src_index = {c.name: i for i, c in enumerate(src.columns)}
            tgt_index = {c.name: j for j, c in enumerate(tgt.columns)}
            for sname, tname in remembered:
                i, j = src_index.get(sname), tgt_index.get(tname)
                if i is not None and j is not None:
                    combined[i, j] = max(combined[i, j], MEMORY_FLOOR)
                    memory_pairs.add((i, j))
    return ScoreMatrix(src.names, tgt.names, lex, struct, tcomp, combined, memory_pairs)


_IMPROVE_EPS = 1e-12
_IMPROVE_SWEEPS = 200


def resolve_mapping(
    matrix: ScoreMatrix,
    threshold: float = DEFAULT_THRESHOLD,
    overrides: list[tuple[str, str]] | None = None,
) -> MappingSet:
    """Greedy descending assignment with deterministic tie-breaks, then a
    local-improvement pass.

    Overrides always survive; remaining pairs are taken by combined score,
    ties broken by smaller ordinal distance, then source name, then target
    name, stopping below the threshold. The improvement pass applies
    strictly-total-increasing swaps and replacements (never touching
    overrides), so tie cases keep their greedy resolution while the total
    score stays near the exhaustive optimum.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    src_names = matrix.source_columns
    tgt_names = matrix.target_columns
    src_index = {n: i for i, n in enumerate(src_names)}
    tgt_index = {n: j for j, n in enumerate(tgt_names)}
    scores = matrix.combined

    assigned: dict[int, int] = {}
    pinned: set[int] = set()

    for sname, tname in overrides or []:
        if sname not in src_index:
            raise UnknownColumn(f"override source column {sname!r} not in schema")
        if tname not in tgt_index:
            raise UnknownColumn(f"override target column {tname!r} not in schema")
        i, j = src_index[sname], tgt_index[tname]
        if i in assigned or j in assigned.values():
            raise ConflictingOverrides(f"override {sname}={tname} conflicts with another override")
        assigned[i] = j
        pinned.add(i)

    candidates = sorted(
        (
            (-scores[i, j], abs(i - j), src_names[i], tgt_names[j], i, j)
            for i in range(len(src_names))
            for j in range(len(tgt_names))
        ),
    )

    def greedy_fill() -> None:
        used_tgt = set(assigned.values())
        for neg, _dist, _sn, _tn, i, j in candidates:
            if -neg < threshold:
                break
            if i in assigned or j in used_tgt:
                continue
            assigned[i] = j
            used_tgt.add(j)

    def improve_once() -> bool:
        items = sorted((i, j) for i, j in assigned.items() if i not in pinned)
        # Pair swaps: (i->j, k->l) becomes (i->l, k->j) on strict gain.
        for a in range(len(items)):
            i, j = items[a]
            for b in range(a + 1, len(items)):
                k, l = items[b]
                if scores[i, l] >= threshold and scores[k, j] >= threshold:
                    if scores[i, l] + scores[k, j] > scores[i, j] + scores[k, l] + _IMPROVE_EPS:
                        assigned[i], assigned[k] = l, j
                        return True
        used_tgt = set(assigned.values())
        free_src = [i for i in range(len(src_names)) if i not in assigned]
        free_tgt = [j for j in range(len(tgt_names)) if j not in used_tgt]
        for i, j in items:
            for k in free_src:
                if scores[k, j] >= threshold and scores[k, j] > scores[i, j] + _IMPROVE_EPS:
                    del assigned[i]
                    assigned[k] = j
                    return True
            for l in free_tgt:
                if scores[i, l] >= threshold and scores[i, l] > scores[i, j] + _IMPROVE_EPS:
                    assigned[i] = l
                    return True
        return False

    greedy_fill()
    for _ in range(_IMPROVE_SWEEPS):
        if not improve_once():
            break
        greedy_fill()

    chosen = sorted(assigned.items())
    mappings = [
        ColumnMapping(
            src_names[i],
            tgt_names[j],
            float(matrix.lexical[i, j]),
            float(matrix.structural[i, j]),
            float(matrix.type_compat[i, j]),
            float(matrix.combined[i, j]),
            MappingOrigin.OVERRIDE
            if i in pinned
            else (
                MappingOrigin.MEMORY
                if (i, j) in matrix.memory_pairs
                else MappingOrigin.AUTO
            ),
        )
        for i, j in chosen
    ]
    used_tgt = set(assigned.values())
    unmapped_source = [n for i, n in enumerate(src_names) if i not in assigned]
    unmapped_target = [n for j, n in enumerate(tgt_names) if j not in used_tgt]
    return MappingSet(mappings, unmapped_source, unmapped_target)


def record_correction(
    memory: MappingMemory,
    source_column: str,
    target_column: str,
    src: Schema,
    tgt: Schema,
    path: str | Path | None = None,
) -> MappingMemory:
    if source_column not in src.names:
        raise UnknownColumn(f"{source_column!r} not in source schema")
    if target_column not in tgt.names:
        raise UnknownColumn(f"{target_column!r} not in target schema")
    memory.record(source_column, target_column, MappingMemory.fingerprint(src))
    if path is not None:
        memory.save(path)
    return memory


class ChangeKind(Enum):
    TYPE_CHANGED = ("TypeChanged", 1)
    KEY_CHANGED = ("KeyChanged", 2)
    COLUMN_REMOVED = ("ColumnRemoved", 3)
    COLUMN_ADDED = ("ColumnAdded", 4)
    COLUMN_RENAMED = ("ColumnRenamed", 5)
    NULLABILITY_CHANGED = ("NullabilityChanged", 6)

    def __init__(self, label: str, rank: int):
        self.label = label
        self.rank = rank


@dataclass(frozen=True)
class MetadataChange:
    kind: ChangeKind
    subject: str
    detail: dict

    @property
    def impact_rank(self) -> int:
        return self.kind.rank


@dataclass
class MetadataDiff:
    changes: list[MetadataChange]

    def __bool__(self) -> bool:
        return bool(self.changes)


def _describe(col) -> str:
    return f"{col.name}:{col.value_type.value}{'?' if col.nullable else ''}"


def metadata_diff(
    src: Schema,
    tgt: Schema,
    mapping: MappingSet,
    src_key: KeySpec | None = None,
    tgt_key: KeySpec | None = None,
) -> MetadataDiff:
    changes: list[MetadataChange] = []
    for name in mapping.unmapped_target:
        col = tgt.column(name)
        changes.append(MetadataChange(ChangeKind.COLUMN_ADDED, name, {"after": _describe(col)}))
    for name in mapping.unmapped_source:
        col = src.column(name)
        changes.append(MetadataChange(ChangeKind.COLUMN_REMOVED, name, {"before": _describe(col)}))
    for m in mapping.mappings:
        s, t = src.column(m.source_column), tgt.column(m.target_column)
        if fold(s.name) != fold(t.name):
            changes.append(
                MetadataChange(
                    ChangeKind.COLUMN_RENAMED,
                    f"{s.name}->{t.name}",
                    {"before": s.name, "after": t.name},
                )
            )
        if s.value_type is not t.value_type:
            changes.append(
                MetadataChange(
                    ChangeKind.TYPE_CHANGED,
                    s.name,
                    {"before": s.value_type.value, "after": t.value_type.value},
                )
            )
        if s.nullable != t.nullable:
            changes.append(
                MetadataChange(
                    ChangeKind.NULLABILITY_CHANGED,
                    s.name,
                    {"before": s.nullable, "after": t.nullable},
                )
            )
    if src_key is not None and tgt_key is not None:
        if src_key.kind is not tgt_key.kind or src_key.columns != tgt_key.columns:
            changes.append(
                MetadataChange(
                    ChangeKind.KEY_CHANGED,
                    ",".join(src_key.columns) or src_key.kind.value,
                    {
                        "before": {"kind": src_key.kind.value, "columns": list(src_key.columns)},
                        "after": {"kind": tgt_key.kind.value, "columns": list(tgt_key.columns)},
                    },
                )
            )
    changes.sort(key=lambda c: (c.impact_rank, c.subject))
    return MetadataDiff(changes)
