"""Static rule-based clusters plus stream-discovered micro-clusters.

Static patterns catch well-known discrepancy shapes directly from the diff
details. Everything not fully explained by a pattern flows through a small
deterministic micro-cluster stream (nearest centroid within a fixed radius,
no decay) so recurring unexplained shapes still group together. Batch-local
states merge in batch order, which keeps results identical for any worker
count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .datadiff import (
    CellDiff,
    DateTimeDelta,
    FloatDelta,
    IntDelta,
    NullChange,
    RowKey,
    StringEdit,
    TypeMismatch as TypeMismatchDetail,
    FEATURE_DIM,
    cell_diff_from_json,
    cell_diff_to_json,
    rounding_signature,
)

DEFAULT_RADIUS = 0.15
SAMPLE_LIMIT = 5


class StaticPattern(Enum):
    ROUNDING = "Rounding"
    TRUNCATION = "Truncation"
    ZERO_PADDING = "ZeroPadding"
    CASE_CHANGE = "CaseChange"
    WHITESPACE_CHANGE = "WhitespaceChange"
    NULL_INFLATION = "NullInflation"
    NULL_DEFLATION = "NullDeflation"
    TRANSPOSITION = "Transposition"
    TIMEZONE_SHIFT = "TimeZoneShift"
    TYPE_MISMATCH = "TypeMismatch"


_STRING_PATTERN_MAP = {
    "truncation": StaticPattern.TRUNCATION,
    "padding": StaticPattern.ZERO_PADDING,
    "case_change": StaticPattern.CASE_CHANGE,
    "whitespace_change": StaticPattern.WHITESPACE_CHANGE,
}

_INT_PATTERN_MAP = {
    "transposition": StaticPattern.TRANSPOSITION,
    "zero_padding": StaticPattern.ZERO_PADDING,
}


def _try_float(raw: str) -> float | None:
    try:
        return float(raw)
    except ValueError:
        return None


def static_classify(diff: CellDiff) -> list[StaticPattern]:
    """All matching well-known patterns; empty means direct inequality."""
    detail = diff.detail
    found: set[StaticPattern] = set()
    if isinstance(detail, FloatDelta):
        if detail.rounding_decimals is not None:
            found.add(StaticPattern.ROUNDING)
    elif isinstance(detail, StringEdit):
        if detail.pattern is not None:
            found.add(_STRING_PATTERN_MAP[detail.pattern])
        # Numeric text that rounds cleanly is rounding too, even when the
        # character-level pattern says truncation (e.g. "3.14159" -> "3.14").
        fa = _try_float(diff.source_value.raw)
        fb = _try_float(diff.target_value.raw)
        if fa is not None and fb is not None and fa != fb:
            if rounding_signature(fa, fb) is not None:
                found.add(StaticPattern.ROUNDING)
    elif isinstance(detail, NullChange):
        found.add(
            StaticPattern.NULL_INFLATION
            if detail.direction == "became_null"
            else StaticPattern.NULL_DEFLATION
        )
    elif isinstance(detail, IntDelta):
        if detail.digit_pattern is not None:
            found.add(_INT_PATTERN_MAP[detail.digit_pattern])
    elif isinstance(detail, DateTimeDelta):
        if detail.offset_minutes is not None:
            found.add(StaticPattern.TIMEZONE_SHIFT)
    elif isinstance(detail, TypeMismatchDetail):
        found.add(StaticPattern.TYPE_MISMATCH)
    return sorted(found, key=lambda p: p.value)


def needs_dynamic(patterns: list[StaticPattern]) -> bool:
    """Fully pattern-explained diffs skip the stream clusterer.

    A bare TypeMismatch flags *that* the types differ but not how the
    content moved, so such diffs count as partially explained and still
    flow to dynamic clustering.
    """
    return not patterns or patterns == [StaticPattern.TYPE_MISMATCH]


@dataclass
class MicroCluster:
    id: int
    centroid: np.ndarray
    weight: int
    column_set: set[str]


class MicroClusterState:
    """Worker-local stream state: nearest-centroid-within-radius, no decay."""

    def __init__(self, radius: float = DEFAULT_RADIUS):
        self.radius = radius
        self.clusters: list[MicroCluster] = []
        self._matrix = np.empty((0, FEATURE_DIM))

    def _nearest(self, v: np.ndarray) -> tuple[int, float]:
        d2 = ((self._matrix - v) ** 2).sum(axis=1)
        best = int(np.argmin(d2))  # ties resolve to the lowest id
        return best, float(math.sqrt(d2[best]))

    def insert(self, v: np.ndarray, column: str) -> int:
        if self.clusters:
            best, dist = self._nearest(v)
            if dist <= self.radius:
                c = self.clusters[best]
                c.centroid = (c.centroid * c.weight + v) / (c.weight + 1)
                c.weight += 1
                c.column_set.add(column)
                self._matrix[best] = c.centroid
                return c.id
        cid = len(self.clusters)
        self.clusters.append(MicroCluster(cid, np.array(v, dtype=float), 1, {column}))
        self._matrix = np.vstack([self._matrix, np.asarray(v, dtype=float)])
        return cid

    def _absorb(self, centroid: np.ndarray, weight: int, columns: set[str]) -> int:
        if self.clusters:
            best, dist = self._nearest(centroid)
            if dist <= self.radius:
                c = self.clusters[best]
                total = c.weight + weight
                c.centroid = (c.centroid * c.weight + centroid * weight) / total
                c.weight = total
                c.column_set |= columns
                self._matrix[best] = c.centroid
                return c.id
        cid = len(self.clusters)
        self.clusters.append(MicroCluster(cid, np.array(centroid, dtype=float), weight, set(columns)))
        self._matrix = np.vstack([self._matrix, np.asarray(centroid, dtype=float)])
        return cid


def stream_insert(state: MicroClusterState, v: np.ndarray, column: str) -> tuple[MicroClusterState, int]:
    """Insert one feature vector; vectors must arrive in canonical order."""
    return state, state.insert(v, column)


def merge_states(a: MicroClusterState, b: MicroClusterState) -> tuple[MicroClusterState, dict[int, int]]:
    """Fold b into a in b's id order; returns the id remap for b's clusters."""
    remap: dict[int, int] = {}
    for c in b.clusters:
        remap[c.id] = a._absorb(c.centroid, c.weight, c.column_set)
    return a, remap


@dataclass(frozen=True)
class RowClusterSignature:
    key: RowKey
    signature: tuple[str, ...]


def aggregate_rows(assignments: list[tuple[RowKey, str]]) -> list[RowClusterSignature]:
    by_key: dict[RowKey, set[str]] = {}
    for key, cid in assignments:
        by_key.setdefault(key, set()).add(cid)
    return [
        RowClusterSignature(key, tuple(sorted(ids)))
        for key, ids in sorted(by_key.items(), key=lambda kv: kv[0].encoded())
    ]


@dataclass
class Cluster:
    id: str  # "S:<Pattern>" or "D:<n>"
    kind: str  # static | dynamic
    member_count: int
    columns: tuple[str, ...]
    samples: list[CellDiff]
    purity: float
    entropy: float
    member_indices: tuple[int, ...] = ()  # canonical-order indices into the diff list


def _purity_entropy(kinds: list[str]) -> tuple[float, float]:
    counts: dict[str, int] = {}
    for k in kinds:
        counts[k] = counts.get(k, 0) + 1
    total = len(kinds)
    purity = max(counts.values()) / total
    entropy = -sum((c / total) * math.log2(c / total) for c in counts.values())
    return purity, abs(entropy)


def finalize_clusters(
    static_assignments: list[tuple[int, StaticPattern]],
    state: MicroClusterState,
    dynamic_assignments: list[tuple[int, int]],
    diffs: list[CellDiff],
) -> list[Cluster]:
    """Build the final cluster list from assignments in canonical diff order."""
    static_members: dict[StaticPattern, list[int]] = {}
    for idx, pattern in static_assignments:
        static_members.setdefault(pattern, []).append(idx)
    dynamic_members: dict[int, list[int]] = {}
    for idx, cid in dynamic_assignments:
        dynamic_members.setdefault(cid, []).append(idx)

    clusters: list[Cluster] = []
    for pattern in sorted(static_members, key=lambda p: p.value):
        members = static_members[pattern]
        clusters.append(_build_cluster(f"S:{pattern.value}", "static", members, diffs))
    for cid in sorted(dynamic_members):
        members = dynamic_members[cid]
        clusters.append(_build_cluster(f"D:{cid}", "dynamic", members, diffs))
    return clusters


def _build_cluster(cid: str, kind: str, members: list[int], diffs: list[CellDiff]) -> Cluster:
    kinds = [diffs[i].detail.kind for i in members]
    purity, entropy = _purity_entropy(kinds)
    columns = tuple(sorted({diffs[i].column for i in members}))
    samples = [diffs[i] for i in members[:SAMPLE_LIMIT]]
    return Cluster(cid, kind, len(members), columns, samples, purity, entropy, tuple(members))


def cluster_sort_key(cluster_id: str) -> tuple:
    prefix, _, rest = cluster_id.partition(":")
    if prefix == "S":
        return (0, rest)
    return (1, int(rest))


def cluster_to_json(c: Cluster) -> dict:
    return {
        "id": c.id,
        "kind": c.kind,
        "member_count": c.member_count,
        "columns": list(c.columns),
        "samples": [cell_diff_to_json(s) for s in c.samples],
        "purity": c.purity,
        "entropy": c.entropy,
        "member_indices": list(c.member_indices),
    }


def cluster_from_json(d: dict) -> Cluster:
    return Cluster(
        d["id"],
        d["kind"],
        d["member_count"],
        tuple(d["columns"]),
        [cell_diff_from_json(s) for s in d["samples"]],
        d["purity"],
        d["entropy"],
        tuple(d["member_indices"]),
    )
