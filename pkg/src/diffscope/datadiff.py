"""Row alignment and type-specific cell comparators.

Every comparator is a pure function from a pair of :class:`Value` to an
optional detail describing how the cell changed, plus a fixed 12-dimensional
feature vector used by the streaming clusterer.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation, ROUND_HALF_UP
from datetime import datetime, timezone
from enum import Enum
from functools import total_ordering

import numpy as np

from .errors import DuplicateKey, UnknownColumn
from .ingest import (
    ColumnDescriptor,
    KeyKind,
    KeySpec,
    NULL_TOKENS,
    TableSnapshot,
    Value,
    ValueType,
    parse_value,
)

KEY_SEPARATOR = "\x1f"

# One-hot ordering of detail kinds inside the feature vector.
KIND_ORDER = (
    "string_edit",
    "int_delta",
    "float_delta",
    "datetime_delta",
    "json_patch",
    "null_change",
    "type_mismatch",
)
FEATURE_DIM = 12
_F_EDIT = 7
_F_NUMERIC = 8
_F_DT_MASK = 9
_F_JSON = 10
_F_PATTERN = 11


@total_ordering
@dataclass(frozen=True)
class RowKey:
    """Canonical row identity.

    Ordering is defined over the parts joined with a unit separator, which
    is what the vectorized sort in the engine uses as well.
    """

    parts: tuple[str, ...]

    def encoded(self) -> str:
        return KEY_SEPARATOR.join(self.parts)

    @staticmethod
    def from_encoded(text: str) -> "RowKey":
        return RowKey(tuple(text.split(KEY_SEPARATOR)))

    def __lt__(self, other: "RowKey") -> bool:
        return self.encoded() < other.encoded()

    def __str__(self) -> str:
        return "|".join(self.parts)


# --- detail variants ---------------------------------------------------


@dataclass(frozen=True)
class StringEdit:
    kind = "string_edit"
    distance: int
    ops: tuple[tuple[str, int, str], ...]
    pattern: str | None = None  # truncation|padding|case_change|whitespace_change


@dataclass(frozen=True)
class IntDelta:
    kind = "int_delta"
    delta: int
    digit_pattern: str | None = None  # transposition|zero_padding


@dataclass(frozen=True)
class FloatDelta:
    kind = "float_delta"
    delta: float
    rel_delta: float
    rounding_decimals: int | None = None
    precision_artifact: bool = False


@dataclass(frozen=True)
class DateTimeDelta:
    kind = "datetime_delta"
    component_deltas: tuple[tuple[str, int], ...]
    offset_minutes: int | None = None

    def components(self) -> dict[str, int]:
        return dict(self.component_deltas)


@dataclass(frozen=True)
class JsonPatch:
    kind = "json_patch"
    added_paths: tuple[str, ...]
    removed_paths: tuple[str, ...]
    changed_paths: tuple[str, ...]


@dataclass(frozen=True)
class NullChange:
    kind = "null_change"
    direction: str  # became_null | became_nonnull


@dataclass(frozen=True)
class TypeMismatch:
    kind = "type_mismatch"
    source_type: ValueType
    target_type: ValueType


DiffDetail = (
    StringEdit | IntDelta | FloatDelta | DateTimeDelta | JsonPatch | NullChange | TypeMismatch
)


@dataclass(frozen=True)
class CellDiff:
    key: RowKey
    column: str
    detail: DiffDetail
    source_value: Value
    target_value: Value


class RowStatus(Enum):
    ADDED = "added"
    REMOVED = "removed"
    MODIFIED = "modified"


@dataclass
class RowDiff:
    key: RowKey
    status: RowStatus
    cells: list[CellDiff] = field(default_factory=list)


# --- edit distance ------------------------------------------------------


def levenshtein_distance(a: str, b: str) -> int:
    """Two-row dynamic program; distance only."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j - 1] + (ca != cb),
                prev[j] + 1,
                cur[j - 1] + 1,
            )
        prev = cur
    return prev[-1]


def levenshtein(a: str, b: str) -> tuple[int, list[tuple[str, int, str]]]:
    """Edit distance plus one reconstructed optimal op sequence.

    Backtrace prefers substitution over deletion over insertion when costs
    tie. Positions index into the source string; an insertion at position p
    inserts before a[p].
    """
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        dp[i][0] = i
    for j in range(n + 1):
        dp[0][j] = j
    for i in range(1, m + 1):
        ai = a[i - 1]
        row = dp[i]
        above = dp[i - 1]
        for j in range(1, n + 1):
            row[j] = min(
                above[j - 1] + (ai != b[j - 1]),
                above[j] + 1,
                row[j - 1] + 1,
            )
    ops: list[tuple[str, int, str]] = []
    i, j = m, n
    while i > 0 or j > 0:
        if i > 0 and j > 0 and a[i - 1] == b[j - 1] and dp[i][j] == dp[i - 1][j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dp[i][j] == dp[i - 1][j - 1] + 1:
            ops.append(("sub", i - 1, b[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dp[i][j] == dp[i - 1][j] + 1:
            ops.append(("del", i - 1, a[i - 1]))
            i -= 1
        else:
            ops.append(("ins", i, b[j - 1]))
            j -= 1
    ops.reverse()
    return dp[m][n], ops


# --- rounding ------------------------------------------------------------


def round_half_away(x: float, decimals: int) -> float:
    """Round-half-away-from-zero on the shortest decimal form of x."""
    try:
        q = Decimal(repr(x)).quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_HALF_UP)
    except InvalidOperation:
        return x
    return float(q)


def rounding_signature(source: float, target: float) -> int | None:
    """Smallest d in [0, 12] with round(source, d) == target, if any."""
    for d in range(13):
        if round_half_away(source, d) == target:
            return d
    return None


# --- comparators ---------------------------------------------------------


def _string_pattern(a: str, b: str) -> str | None:
    # First matching rule wins: truncation > padding > case > whitespace.
    if a != b:
        if a.startswith(b) or b.startswith(a):
            return "truncation"
        longer, shorter = (a, b) if len(a) > len(b) else (b, a)
        if len(longer) != len(shorter) and (
            longer.strip(" ") == shorter or longer.strip("0") == shorter
        ):
            return "padding"
        if a.casefold() == b.casefold():
            return "case_change"
        if " ".join(a.split()) == " ".join(b.split()):
            return "whitespace_change"
    return None


def diff_string(a: Value, b: Value) -> StringEdit | None:
    ra, rb = a.raw, b.raw
    if ra == rb:
        return None
    distance, ops = levenshtein(ra, rb)
    return StringEdit(distance, tuple(ops), _string_pattern(ra, rb))


def _int_sign_digits(raw: str) -> tuple[str, str]:
    sign = ""
    body = raw
    if body and body[0] in "+-":
        sign, body = body[0], body[1:]
    return ("" if sign == "+" else sign), body


def _is_adjacent_swap(ra: str, rb: str) -> bool:
    if len(ra) != len(rb) or ra == rb:
        return False
    diff = [i for i in range(len(ra)) if ra[i] != rb[i]]
    if len(diff) != 2:
        return False
    i, j = diff
    return j == i + 1 and ra[i] == rb[j] and ra[j] == rb[i]


def diff_integer(a: Value, b: Value) -> IntDelta | None:
    va, vb = a.payload, b.payload
    if va == vb and a.raw == b.raw:
        return None
    if va == vb:
        sa, da = _int_sign_digits(a.raw)
        sb, db = _int_sign_digits(b.raw)
        padded = sa == sb and (da.lstrip("0") or "0") == (db.lstrip("0") or "0")
        return IntDelta(0, "zero_padding" if padded else None)
    pattern = "transposition" if _is_adjacent_swap(a.raw, b.raw) else None
    return IntDelta(vb - va, pattern)


def diff_float(a: Value, b: Value) -> FloatDelta | None:
    va, vb = float(a.payload), float(b.payload)
    if va == vb:
        return None
    delta = vb - va
    rel = abs(delta) / max(abs(va), 1.0)
    rounding = rounding_signature(va, vb)
    return FloatDelta(delta, rel, rounding, rel < 1e-9 or rounding is not None)


_DT_FIELDS = ("year", "month", "day", "hour", "minute", "second")


def _instant(dt: datetime) -> datetime:
    # Naive timestamps are pinned to UTC so instants stay comparable.
    return dt if dt.tzinfo is not None else dt.replace(tzinfo=timezone.utc)


def diff_datetime(a: Value, b: Value) -> DateTimeDelta | None:
    da, db = a.payload, b.payload
    ia, ib = _instant(da), _instant(db)
    if ia == ib:
        return None
    deltas = tuple(
        (f, getattr(db, f) - getattr(da, f))
        for f in _DT_FIELDS
        if getattr(db, f) != getattr(da, f)
    )
    seconds = (ib - ia).total_seconds()
    offset = None
    minutes = seconds / 60.0
    if minutes == int(minutes) and int(minutes) % 15 == 0 and 0 < abs(minutes) <= 14 * 60:
        offset = int(minutes)
    return DateTimeDelta(deltas, offset)


def _json_walk(a, b, prefix, added, removed, changed):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            path = f"{prefix}/{k}"
            if k not in a:
                added.append(path)
            elif k not in b:
                removed.append(path)
            else:
                _json_walk(a[k], b[k], path, added, removed, changed)
    elif isinstance(a, list) and isinstance(b, list):
        common = min(len(a), len(b))
        for i in range(common):
            _json_walk(a[i], b[i], f"{prefix}/{i}", added, removed, changed)
        for i in range(common, len(b)):
            added.append(f"{prefix}/{i}")
        for i in range(common, len(a)):
            removed.append(f"{prefix}/{i}")
    elif a != b or type(a) is not type(b):
        changed.append(prefix or "/")


def diff_json(a: Value, b: Value) -> JsonPatch | None:
    if a.payload == b.payload:
        return None
    added: list[str] = []
    removed: list[str] = []
    changed: list[str] = []
    _json_walk(a.payload, b.payload, "", added, removed, changed)
    return JsonPatch(tuple(added), tuple(removed), tuple(changed))


def _count_paths(doc) -> int:
    if isinstance(doc, dict):
        return len(doc) + sum(_count_paths(v) for v in doc.values())
    if isinstance(doc, list):
        return len(doc) + sum(_count_paths(v) for v in doc)
    return 0


_EMPTY_KEY = RowKey(())


def diff_cell(
    a: Value,
    b: Value,
    column: ColumnDescriptor,
    key: RowKey = _EMPTY_KEY,
) -> CellDiff | None:
    """Null transitions first, then type mismatches, then the typed comparator."""
    if a.is_null and b.is_null:
        return None
    if a.is_null != b.is_null:
        direction = "became_null" if b.is_null else "became_nonnull"
        return CellDiff(key, column.name, NullChange(direction), a, b)
    if a.type is not b.type:
        numeric = {ValueType.INTEGER, ValueType.FLOAT}
        if {a.type, b.type} == numeric:
            # Widened numeric pairs compare as floats; the column-level
            # TypeChanged already appears in the metadata diff.
            detail = diff_float(a, b)
        else:
            detail = TypeMismatch(a.type, b.type)
        return CellDiff(key, column.name, detail, a, b) if detail else None

    if a.type is ValueType.TEXT:
        detail = diff_string(a, b)
    elif a.type is ValueType.INTEGER:
        detail = diff_integer(a, b)
    elif a.type is ValueType.FLOAT:
        detail = diff_float(a, b)
    elif a.type is ValueType.DATETIME:
        detail = diff_datetime(a, b)
    elif a.type is ValueType.JSON:
        detail = diff_json(a, b)
    elif a.type is ValueType.BOOLEAN:
        if a.payload == b.payload:
            detail = None
        else:
            detail = diff_string(
                Value(ValueType.TEXT, a.raw, a.raw), Value(ValueType.TEXT, b.raw, b.raw)
            )
    else:  # NULL_ONLY columns: non-null survivors arrive as parse_failed text
        detail = diff_string(
            Value(ValueType.TEXT, a.raw, a.raw), Value(ValueType.TEXT, b.raw, b.raw)
        )
    if detail is None:
        return None
    return CellDiff(key, column.name, detail, a, b)


def featurize(diff: CellDiff) -> np.ndarray:
    """Deterministic 12-dim vector in [0,1]^12; see KIND_ORDER for layout."""
    v = np.zeros(FEATURE_DIM)
    detail = diff.detail
    v[KIND_ORDER.index(detail.kind)] = 1.0
    if isinstance(detail, StringEdit):
        v[_F_EDIT] = detail.distance / max(
            len(diff.source_value.raw), len(diff.target_value.raw), 1
        )
        v[_F_PATTERN] = float(detail.pattern is not None)
    elif isinstance(detail, IntDelta):
        base = abs(diff.source_value.payload) if diff.source_value.payload is not None else 0
        rel = abs(detail.delta) / max(base, 1)
        v[_F_NUMERIC] = min(1.0, np.log10(1.0 + rel * 1e9) / 9.0)
        v[_F_PATTERN] = float(detail.digit_pattern is not None)
    elif isinstance(detail, FloatDelta):
        v[_F_NUMERIC] = min(1.0, np.log10(1.0 + abs(detail.rel_delta) * 1e9) / 9.0)
        v[_F_PATTERN] = float(detail.precision_artifact)
    elif isinstance(detail, DateTimeDelta):
        v[_F_DT_MASK] = len(detail.component_deltas) / 6.0
        v[_F_PATTERN] = float(detail.offset_minutes is not None)
    elif isinstance(detail, JsonPatch):
        touched = len(detail.added_paths) + len(detail.removed_paths) + len(detail.changed_paths)
        union_paths = max(
            1, _count_paths(diff.source_value.payload) + _count_paths(diff.target_value.payload)
        )
        v[_F_JSON] = min(1.0, touched / union_paths)
    return v


# --- key building and alignment -----------------------------------------


def canonical_key_part(raw: str, value_type: ValueType) -> str:
    if raw in NULL_TOKENS:
        return ""
    if value_type is ValueType.INTEGER:
        val = parse_value(raw, value_type)
        if not val.parse_failed:
            return str(val.payload)
    elif value_type is ValueType.FLOAT:
        val = parse_value(raw, value_type)
        if not val.parse_failed:
            return repr(val.payload)
    return raw


def _canonicalize_int_column(col: np.ndarray, nulls: np.ndarray) -> np.ndarray:
    # Fast path: rows already in canonical form stay untouched.
    suspect = (
        (np.char.startswith(col, b"0") & (col != b"0"))
        | np.char.startswith(col, b"+")
        | np.char.startswith(col, b"-0")
        | nulls
    )
    if not suspect.any():
        return col
    out = col.astype(object)
    for idx in np.nonzero(suspect)[0]:
        out[idx] = canonical_key_part(col[idx].decode("utf-8"), ValueType.INTEGER).encode()
    return out.astype(bytes)


def build_key_array(
    snapshot: TableSnapshot,
    key: KeySpec,
    key_columns: list[str] | None = None,
    hash_columns: list[str] | None = None,
) -> np.ndarray:
    """Canonical key string per row as a byte array.

    For PRIMARY/COMPOSITE keys, `key_columns` names this snapshot's key
    columns (already translated through the mapping for the target side).
    For SURROGATE keys, the key is a content hash over `hash_columns`.
    """
    if key.kind is KeyKind.SURROGATE:
        cols = [snapshot.schema.column(n).ordinal for n in (hash_columns or [])]
        if not cols:
            raise UnknownColumn("surrogate keys need at least one mapped column")
        arrays = [snapshot.column_bytes(i) for i in cols]
        sep = KEY_SEPARATOR.encode()
        out = np.empty(snapshot.row_count, dtype="S32")
        for r in range(snapshot.row_count):
            h = hashlib.blake2b(digest_size=16)
            h.update(sep.join(arr[r] for arr in arrays))
            out[r] = h.hexdigest().encode()
        return out

    names = list(key_columns if key_columns is not None else key.columns)
    if not names:
        raise UnknownColumn("primary/composite key needs at least one column")
    parts = []
    for name in names:
        try:
            col = snapshot.schema.column(name)
        except KeyError:
            raise UnknownColumn(f"key column {name!r} not in schema") from None
        arr = snapshot.column_bytes(col.ordinal)
        nulls = snapshot.null_mask(col.ordinal)
        if col.value_type is ValueType.INTEGER:
            arr = _canonicalize_int_column(arr, nulls)
        elif col.value_type is ValueType.FLOAT:
            fixed = arr.astype(object)
            for idx in range(len(fixed)):
                fixed[idx] = canonical_key_part(arr[idx].decode("utf-8"), col.value_type).encode()
            arr = fixed.astype(bytes)
        elif nulls.any():
            arr = np.where(nulls, np.array(b"", dtype=arr.dtype), arr)
        parts.append(arr)
    if len(parts) == 1:
        return parts[0]
    sep = np.array(KEY_SEPARATOR.encode())
    joined = parts[0]
    for nxt in parts[1:]:
        joined = np.char.add(np.char.add(joined, sep), nxt)
    return joined


def check_duplicates(sorted_keys: np.ndarray) -> None:
    if len(sorted_keys) < 2:
        return
    dup = sorted_keys[1:] == sorted_keys[:-1]
    if dup.any():
        first = int(np.nonzero(dup)[0][0])
        keyval = sorted_keys[first].decode("utf-8")
        count = int((sorted_keys == sorted_keys[first]).sum())
        raise DuplicateKey(RowKey.from_encoded(keyval), count)


@dataclass
class AlignResult:
    pair_keys: np.ndarray  # S-dtype canonical keys present on both sides
    pair_src_rows: np.ndarray  # row indices into the source snapshot
    pair_tgt_rows: np.ndarray
    added_keys: np.ndarray  # present only in target
    removed_keys: np.ndarray  # present only in source

    def pairs(self) -> list[tuple[RowKey, int, int]]:
        return [
            (RowKey.from_encoded(k.decode("utf-8")), int(i), int(j))
            for k, i, j in zip(self.pair_keys, self.pair_src_rows, self.pair_tgt_rows)
        ]

    def added(self) -> list[RowKey]:
        return [RowKey.from_encoded(k.decode("utf-8")) for k in self.added_keys]

    def removed(self) -> list[RowKey]:
        return [RowKey.from_encoded(k.decode("utf-8")) for k in self.removed_keys]


def align_keys(src_keys: np.ndarray, tgt_keys: np.ndarray, allow_duplicates: bool) -> AlignResult:
    """Set-align two canonical key arrays (already one per row)."""
    src_order = np.argsort(src_keys, kind="stable")
    tgt_order = np.argsort(tgt_keys, kind="stable")
    src_sorted = src_keys[src_order]
    tgt_sorted = tgt_keys[tgt_order]
    if not allow_duplicates:
        check_duplicates(src_sorted)
        check_duplicates(tgt_sorted)
    else:
        # Surrogate mode: identical rows collapse to their first occurrence.
        src_unique, src_first = np.unique(src_sorted, return_index=True)
        tgt_unique, tgt_first = np.unique(tgt_sorted, return_index=True)
        src_order = src_order[src_first]
        tgt_order = tgt_order[tgt_first]
        src_sorted, tgt_sorted = src_unique, tgt_unique
    common, src_pos, tgt_pos = np.intersect1d(
        src_sorted, tgt_sorted, assume_unique=True, return_indices=True
    )
    removed = np.setdiff1d(src_sorted, common, assume_unique=True)
    added = np.setdiff1d(tgt_sorted, common, assume_unique=True)
    return AlignResult(
        common, src_order[src_pos], tgt_order[tgt_pos], added, removed
    )


def align_rows(
    src: TableSnapshot,
    tgt: TableSnapshot,
    key: KeySpec,
    mapping,
) -> AlignResult:
    """Align rows across snapshots by the configured key.

    Under a surrogate key any cell change shows up as one removed plus one
    added row; under primary/composite keys duplicate keys are an error.
    """
    if key.kind is KeyKind.SURROGATE:
        src_cols = [m.source_column for m in mapping.mappings]
        tgt_cols = [m.target_column for m in mapping.mappings]
        src_keys = build_key_array(src, key, hash_columns=src_cols)
        tgt_keys = build_key_array(tgt, key, hash_columns=tgt_cols)
        return align_keys(src_keys, tgt_keys, allow_duplicates=True)
    tgt_names = []
    for name in key.columns:
        mapped = mapping.target_for(name)
        if mapped is None:
            raise UnknownColumn(f"key column {name!r} is not mapped on the target side")
        tgt_names.append(mapped)
    src_keys = build_key_array(src, key, key_columns=list(key.columns))
    tgt_keys = build_key_array(tgt, key, key_columns=tgt_names)
    return align_keys(src_keys, tgt_keys, allow_duplicates=False)


# --- serialization for checkpoints and reports ---------------------------


def value_to_json(v: Value) -> dict:
    return {"type": v.type.value, "raw": v.raw, "parse_failed": v.parse_failed}


def value_from_json(d: dict) -> Value:
    vtype = ValueType(d["type"])
    if d.get("parse_failed"):
        return Value(ValueType.TEXT, d["raw"], d["raw"], parse_failed=True)
    return parse_value(d["raw"], vtype)


def detail_to_json(detail: DiffDetail) -> dict:
    if isinstance(detail, StringEdit):
        return {
            "kind": detail.kind,
            "distance": detail.distance,
            "ops": [list(op) for op in detail.ops],
            "pattern": detail.pattern,
        }
    if isinstance(detail, IntDelta):
        return {"kind": detail.kind, "delta": detail.delta, "digit_pattern": detail.digit_pattern}
    if isinstance(detail, FloatDelta):
        return {
            "kind": detail.kind,
            "delta": detail.delta,
            "rel_delta": detail.rel_delta,
            "rounding_decimals": detail.rounding_decimals,
            "precision_artifact": detail.precision_artifact,
        }
    if isinstance(detail, DateTimeDelta):
        return {
            "kind": detail.kind,
            "component_deltas": {f: d for f, d in detail.component_deltas},
            "offset_minutes": detail.offset_minutes,
        }
    if isinstance(detail, JsonPatch):
        return {
            "kind": detail.kind,
            "added_paths": list(detail.added_paths),
            "removed_paths": list(detail.removed_paths),
            "changed_paths": list(detail.changed_paths),
        }
    if isinstance(detail, NullChange):
        return {"kind": detail.kind, "direction": detail.direction}
    if isinstance(detail, TypeMismatch):
        return {
            "kind": detail.kind,
            "source_type": detail.source_type.value,
            "target_type": detail.target_type.value,
        }
    raise TypeError(f"unknown detail: {detail!r}")


def detail_from_json(d: dict) -> DiffDetail:
    kind = d["kind"]
    if kind == "string_edit":
        return StringEdit(
            d["distance"], tuple(tuple(op) for op in d["ops"]), d.get("pattern")
        )
    if kind == "int_delta":
        return IntDelta(d["delta"], d.get("digit_pattern"))
    if kind == "float_delta":
        return FloatDelta(
            d["delta"], d["rel_delta"], d.get("rounding_decimals"), d.get("precision_artifact", False)
        )
    if kind == "datetime_delta":
        return DateTimeDelta(
            tuple((f, n) for f, n in sorted(d["component_deltas"].items(), key=_dt_field_order)),
            d.get("offset_minutes"),
        )
    if kind == "json_patch":
        return JsonPatch(
            tuple(d["added_paths"]), tuple(d["removed_paths"]), tuple(d["changed_paths"])
        )
    if kind == "null_change":
        return NullChange(d["direction"])
    if kind == "type_mismatch":
        return TypeMismatch(ValueType(d["source_type"]), ValueType(d["target_type"]))
    raise ValueError(f"unknown detail kind: {kind}")


def _dt_field_order(item):
    return _DT_FIELDS.index(item[0])


def cell_diff_to_json(diff: CellDiff) -> dict:
    return {
        "key": list(diff.key.parts),
        "column": diff.column,
        "detail": detail_to_json(diff.detail),
        "source_value": value_to_json(diff.source_value),
        "target_value": value_to_json(diff.target_value),
    }


def cell_diff_from_json(d: dict) -> CellDiff:
    return CellDiff(
        RowKey(tuple(d["key"])),
        d["column"],
        detail_from_json(d["detail"]),
        value_from_json(d["source_value"]),
        value_from_json(d["target_value"]),
    )
