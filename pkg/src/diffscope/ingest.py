"""Loading of delimited files, JSON-lines files, and SQLite tables/queries
into typed, immutable snapshots.

A snapshot keeps one fixed-width numpy byte array per column so that
multi-million-row inputs stay compact and cell comparisons can run as
vectorized array operations. Raw text is preserved verbatim for every cell;
typed payloads are materialized lazily via :func:`parse_value`.
"""

from __future__ import annotations

import csv
import io
import json
import re
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterator, Sequence
from urllib.parse import quote

import numpy as np

from .errors import (
    EmptyInput,
    NonReadOnlyQuery,
    QueryFailed,
    RaggedRow,
    UnreadableSource,
)

# Tokens mapped to null, exactly as listed (case-sensitive).
NULL_TOKENS = ("", "null", "NULL", "NA", "N/A")
_NULL_TOKEN_SET = frozenset(NULL_TOKENS)

_BOOL_TOKENS = {
    "true": True,
    "TRUE": True,
    "1": True,
    "false": False,
    "FALSE": False,
    "0": False,
}

_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")

_ISO_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_ISO_DT_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})"
    r"(\.\d{1,6})?(Z|[+-]\d{2}:\d{2})?$"
)
_SPACE_DT_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2}) (\d{2}):(\d{2}):(\d{2})$")
_US_DATE_RE = re.compile(r"^(\d{2})/(\d{2})/(\d{4})$")

_SAMPLE_ROWS = 1000
_CHUNK_ROWS = 65536


class ValueType(Enum):
    TEXT = "text"
    INTEGER = "integer"
    FLOAT = "float"
    DATETIME = "datetime"
    JSON = "json"
    BOOLEAN = "boolean"
    NULL_ONLY = "null_only"


class SourceKind(Enum):
    FILE = "file"
    DATABASE = "database"
    QUERY = "query"


@dataclass(frozen=True)
class Value:
    """One cell: parsed payload plus the raw text it was read from.

    ``payload is None`` iff the value is null. A value that failed to parse
    against its column type is carried as TEXT with ``parse_failed=True``
    instead of aborting the job.
    """

    type: ValueType
    payload: object
    raw: str
    parse_failed: bool = False

    @property
    def is_null(self) -> bool:
        return self.payload is None


@dataclass(frozen=True)
class ColumnDescriptor:
    name: str
    ordinal: int
    value_type: ValueType
    nullable: bool
    null_fraction: float


@dataclass(frozen=True)
class Schema:
    columns: tuple[ColumnDescriptor, ...]
    source_kind: SourceKind

    def __post_init__(self):
        folded = [c.name.strip().casefold() for c in self.columns]
        if len(set(folded)) != len(folded):
            dupes = sorted({f for f in folded if folded.count(f) > 1})
            raise UnreadableSource(f"duplicate column names after folding: {dupes}")
        for i, col in enumerate(self.columns):
            if col.ordinal != i:
                raise UnreadableSource("column ordinals must be contiguous from 0")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> ColumnDescriptor:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)


class KeyKind(Enum):
    PRIMARY = "primary"
    COMPOSITE = "composite_business"
    SURROGATE = "surrogate"


@dataclass(frozen=True)
class KeySpec:
    kind: KeyKind
    columns: tuple[str, ...] = ()

    @staticmethod
    def primary(*columns: str) -> "KeySpec":
        return KeySpec(KeyKind.PRIMARY, tuple(columns))

    @staticmethod
    def composite(*columns: str) -> "KeySpec":
        return KeySpec(KeyKind.COMPOSITE, tuple(columns))

    @staticmethod
    def surrogate() -> "KeySpec":
        return KeySpec(KeyKind.SURROGATE)


class TableSnapshot:
    """Immutable typed table. Safe to read from many threads at once.

    Column data lives in fixed-width byte arrays (`dtype='S<w>'`, UTF-8).
    Iteration re-parses lazily, so repeated passes see identical rows.
    """

    def __init__(self, schema: Schema, columns: list[np.ndarray], provenance: str):
        if columns:
            counts = {len(c) for c in columns}
            if len(counts) != 1:
                raise UnreadableSource("column arrays of unequal length")
        self.schema = schema
        self.provenance = provenance
        self._columns = columns
        self.row_count = len(columns[0]) if columns else 0
        self._null_masks: dict[int, np.ndarray] = {}

    def column_bytes(self, ordinal: int) -> np.ndarray:
        return self._columns[ordinal]

    def null_mask(self, ordinal: int) -> np.ndarray:
        mask = self._null_masks.get(ordinal)
        if mask is None:
            col = self._columns[ordinal]
            tokens = np.array([t.encode() for t in NULL_TOKENS], dtype="S4")
            mask = np.isin(col, tokens)
            self._null_masks[ordinal] = mask
        return mask

    def raw_at(self, row: int, ordinal: int) -> str:
        return self._columns[ordinal][row].decode("utf-8")

    def value_at(self, row: int, ordinal: int) -> Value:
        col = self.schema.columns[ordinal]
        return parse_value(self.raw_at(row, ordinal), col.value_type)

    def iter_rows(self) -> Iterator[tuple[Value, ...]]:
        types = [c.value_type for c in self.schema.columns]
        for r in range(self.row_count):
            yield tuple(
                parse_value(self._columns[i][r].decode("utf-8"), types[i])
                for i in range(len(types))
            )

    def nbytes(self) -> int:
        return sum(int(c.nbytes) for c in self._columns)


def _is_integer(raw: str) -> bool:
    return _INT_RE.match(raw) is not None


def _is_float(raw: str) -> bool:
    return _FLOAT_RE.match(raw) is not None


def _is_boolean(raw: str) -> bool:
    return raw in _BOOL_TOKENS


def parse_datetime(raw: str) -> datetime | None:
    """Parse one of the four accepted timestamp shapes; None otherwise."""
    m = _ISO_DATE_RE.match(raw)
    if m:
        y, mo, d = map(int, m.groups())
        return _safe_dt(y, mo, d)
    m = _ISO_DT_RE.match(raw)
    if m:
        y, mo, d, hh, mm, ss = map(int, m.groups()[:6])
        frac, off = m.group(7), m.group(8)
        micro = int(round(float(frac) * 1_000_000)) if frac else 0
        tz = None
        if off == "Z":
            tz = timezone.utc
        elif off:
            sign = 1 if off[0] == "+" else -1
            oh, om = int(off[1:3]), int(off[4:6])
            tz = timezone(sign * timedelta(hours=oh, minutes=om))
        return _safe_dt(y, mo, d, hh, mm, ss, micro, tz)
    m = _SPACE_DT_RE.match(raw)
    if m:
        y, mo, d, hh, mm, ss = map(int, m.groups())
        return _safe_dt(y, mo, d, hh, mm, ss)
    m = _US_DATE_RE.match(raw)
    if m:
        mo, d, y = map(int, m.groups())
        return _safe_dt(y, mo, d)
    return None


def _safe_dt(y, mo, d, hh=0, mm=0, ss=0, micro=0, tz=None) -> datetime | None:
    try:
        return datetime(y, mo, d, hh, mm, ss, micro, tzinfo=tz)
    except ValueError:
        return None


def _is_datetime(raw: str) -> bool:
    return parse_datetime(raw) is not None


def _is_json(raw: str) -> bool:
    try:
        json.loads(raw)
        return True
    except (ValueError, RecursionError):
        return False


# Precedence: most specific first. A column of pure 0/1 counters lands on
# INTEGER before the boolean predicate is ever consulted.
_TYPE_CHECKS = (
    (ValueType.INTEGER, _is_integer),
    (ValueType.FLOAT, _is_float),
    (ValueType.BOOLEAN, _is_boolean),
    (ValueType.DATETIME, _is_datetime),
    (ValueType.JSON, _is_json),
)


def infer_type(samples: Sequence[str], sample_cap: int = _SAMPLE_ROWS) -> ValueType:
    """Most specific type that every non-null sample satisfies; TEXT fallback."""
    if sample_cap < 1:
        raise ValueError("sample_cap must be >= 1")
    sampled = samples[:sample_cap]
    non_null = [s for s in sampled if s not in _NULL_TOKEN_SET]
    if not non_null:
        return ValueType.NULL_ONLY
    for vtype, pred in _TYPE_CHECKS:
        if all(pred(s) for s in non_null):
            return vtype
    return ValueType.TEXT


def parse_value(raw: str, target: ValueType) -> Value:
    """Parse raw text against the column type; never raises on bad data."""
    if raw in _NULL_TOKEN_SET:
        return Value(target, None, raw)
    if target is ValueType.TEXT:
        return Value(ValueType.TEXT, raw, raw)
    if target is ValueType.INTEGER:
        if _is_integer(raw):
            return Value(ValueType.INTEGER, int(raw), raw)
    elif target is ValueType.FLOAT:
        if _is_float(raw):
            return Value(ValueType.FLOAT, float(raw), raw)
    elif target is ValueType.BOOLEAN:
        if raw in _BOOL_TOKENS:
            return Value(ValueType.BOOLEAN, _BOOL_TOKENS[raw], raw)
    elif target is ValueType.DATETIME:
        dt = parse_datetime(raw)
        if dt is not None:
            return Value(ValueType.DATETIME, dt, raw)
    elif target is ValueType.JSON:
        try:
            return Value(ValueType.JSON, json.loads(raw), raw)
        except (ValueError, RecursionError):
            pass
    # NULL_ONLY columns have no conforming non-null representation.
    return Value(ValueType.TEXT, raw, raw, parse_failed=True)


def _encode_column(values: list[str]) -> np.ndarray:
    encoded = [v.encode("utf-8") for v in values]
    width = max((len(b) for b in encoded), default=0)
    return np.array(encoded, dtype=f"S{max(width, 1)}")


def _assemble_columns(chunks_per_col: list[list[np.ndarray]]) -> list[np.ndarray]:
    out = []
    for chunks in chunks_per_col:
        if not chunks:
            out.append(np.empty(0, dtype="S1"))
            continue
        width = max(c.dtype.itemsize for c in chunks)
        out.append(np.concatenate([c.astype(f"S{width}") for c in chunks]))
    return out


def _build_snapshot(
    names: list[str],
    row_iter: Iterator[list[str]],
    source_kind: SourceKind,
    provenance: str,
    declared_types: list[ValueType | None] | None = None,
) -> TableSnapshot:
    ncols = len(names)
    chunks: list[list[np.ndarray]] = [[] for _ in range(ncols)]
    sample: list[list[str]] = [[] for _ in range(ncols)]
    buf: list[list[str]] = []
    total = 0
    for row in row_iter:
        buf.append(row)
        if total < _SAMPLE_ROWS:
            for i in range(ncols):
                sample[i].append(row[i])
        total += 1
        if len(buf) >= _CHUNK_ROWS:
            for i, col in enumerate(zip(*buf)):
                chunks[i].append(_encode_column(list(col)))
            buf = []
    if buf:
        for i, col in enumerate(zip(*buf)):
            chunks[i].append(_encode_column(list(col)))
    if total == 0:
        raise EmptyInput(f"no data rows in {provenance}")

    columns = _assemble_columns(chunks)
    descriptors = []
    token_arr = np.array([t.encode() for t in NULL_TOKENS], dtype="S4")
    for i, name in enumerate(names):
        declared = declared_types[i] if declared_types else None
        vtype = declared if declared is not None else infer_type(sample[i])
        null_fraction = float(np.isin(columns[i], token_arr).mean())
        descriptors.append(
            ColumnDescriptor(name, i, vtype, null_fraction > 0.0, null_fraction)
        )
    schema = Schema(tuple(descriptors), source_kind)
    return TableSnapshot(schema, columns, provenance)


def detect_delimiter(first_line: str) -> str:
    """Pick comma or tab by frequency in the header line; ties go to comma."""
    return "\t" if first_line.count("\t") > first_line.count(",") else ","


def read_delimited(path: str | Path) -> TableSnapshot:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UnreadableSource(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise UnreadableSource(f"{path}: not valid UTF-8 ({exc})") from exc
    first_line = text.split("\n", 1)[0].rstrip("\r")
    if not first_line:
        raise UnreadableSource(f"{path}: missing header row")
    delim = detect_delimiter(first_line)
    reader = csv.reader(io.StringIO(text), delimiter=delim)
    try:
        header = next(reader)
    except StopIteration:
        raise UnreadableSource(f"{path}: missing header row") from None

    expected = len(header)

    def rows() -> Iterator[list[str]]:
        for row in reader:
            if not row:
                continue  # blank line; a lone empty field arrives as [""]
            if len(row) != expected:
                raise RaggedRow(reader.line_num, expected, len(row))
            yield row

    return _build_snapshot(header, rows(), SourceKind.FILE, str(path))


def read_jsonl(path: str | Path) -> TableSnapshot:
    """JSON-lines reader: one object per line, columns in first-seen key order."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UnreadableSource(f"{path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise UnreadableSource(f"{path}: not valid UTF-8 ({exc})") from exc
    objects = []
    names: list[str] = []
    seen = set()
    for n, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise UnreadableSource(f"{path}: line {n}: {exc}") from exc
        if not isinstance(obj, dict):
            raise UnreadableSource(f"{path}: line {n}: expected a JSON object")
        objects.append(obj)
        for key in obj:
            if key not in seen:
                seen.add(key)
                names.append(key)
    if not objects:
        raise EmptyInput(f"no data rows in {path}")

    def render(v: object) -> str:
        if v is None:
            return "null"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            return v
        if isinstance(v, float):
            return repr(v)
        if isinstance(v, int):
            return str(v)
        return json.dumps(v, sort_keys=True, separators=(",", ":"))

    def rows() -> Iterator[list[str]]:
        for obj in objects:
            yield [render(obj[k]) if k in obj else "" for k in names]

    return _build_snapshot(names, rows(), SourceKind.FILE, str(path))


def _connect_readonly(db_path: str | Path) -> sqlite3.Connection:
    p = Path(db_path)
    if not p.exists():
        raise UnreadableSource(f"{p}: no such database file")
    uri = f"file:{quote(str(p))}?mode=ro"
    try:
        return sqlite3.connect(uri, uri=True)
    except sqlite3.Error as exc:
        raise UnreadableSource(f"{p}: {exc}") from exc


_READONLY_LEAD = ("select", "with", "values", "explain")


def execute_query(db_path: str | Path, sql: str) -> TableSnapshot:
    """Run one read-only statement and materialize the result set.

    The connection is opened in read-only mode, so the database file can
    never be modified even if the keyword screen is somehow bypassed.
    """
    lead = re.match(r"\s*([A-Za-z]+)", sql)
    if not lead or lead.group(1).lower() not in _READONLY_LEAD:
        raise NonReadOnlyQuery(f"not a read-only statement: {sql.strip()[:80]}")
    con = _connect_readonly(db_path)
    try:
        cur = con.execute(sql)
        description = cur.description
        if description is None:
            raise QueryFailed("statement produced no result set")
        names = [d[0] for d in description]
        raw_rows: list[list[str]] = []
        pytypes: list[set] = [set() for _ in names]
        for dbrow in cur:
            out = []
            for i, v in enumerate(dbrow):
                if v is None:
                    out.append("")
                elif isinstance(v, int):
                    pytypes[i].add(int)
                    out.append(str(v))
                elif isinstance(v, float):
                    pytypes[i].add(float)
                    out.append(repr(v))
                elif isinstance(v, bytes):
                    pytypes[i].add(bytes)
                    out.append(v.decode("utf-8", "replace"))
                else:
                    pytypes[i].add(str)
                    out.append(str(v))
            raw_rows.append(out)
    except sqlite3.OperationalError as exc:
        if "readonly" in str(exc).lower() or "read-only" in str(exc).lower():
            raise NonReadOnlyQuery(str(exc)) from exc
        raise QueryFailed(str(exc)) from exc
    except sqlite3.Error as exc:
        raise QueryFailed(str(exc)) from exc
    finally:
        con.close()

    declared: list[ValueType | None] = []
    for i in range(len(names)):
        kinds = pytypes[i]
        if kinds == {int}:
            declared.append(ValueType.INTEGER)
        elif kinds in ({float}, {int, float}):
            declared.append(ValueType.FLOAT)
        elif kinds == {bytes}:
            declared.append(ValueType.TEXT)
        else:
            declared.append(None)  # untyped: refined by inference

    provenance = f"{db_path}::query"
    if not raw_rows:
        descriptors = tuple(
            ColumnDescriptor(n, i, declared[i] or ValueType.NULL_ONLY, False, 0.0)
            for i, n in enumerate(names)
        )
        schema = Schema(descriptors, SourceKind.QUERY)
        return TableSnapshot(
            schema, [np.empty(0, dtype="S1") for _ in names], provenance
        )
    snap = _build_snapshot(
        names, iter(raw_rows), SourceKind.QUERY, provenance, declared
    )
    return snap


def read_table(db_path: str | Path, table: str) -> TableSnapshot:
    if not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", table):
        raise UnreadableSource(f"invalid table name: {table!r}")
    snap = execute_query(db_path, f'SELECT * FROM "{table}"')
    schema = Schema(snap.schema.columns, SourceKind.DATABASE)
    out = TableSnapshot(schema, snap._columns, f"{db_path}::{table}")
    return out


_DB_SUFFIXES = (".sqlite", ".db", ".sqlite3")


def read_snapshot(source: str | Path) -> TableSnapshot:
    """Dispatch on the source descriptor.

    ``path.csv`` / ``path.tsv`` -> delimited file, ``path.jsonl`` -> JSON
    lines, ``path.sqlite::table`` -> database table.
    """
    text = str(source)
    if "::" in text:
        db, _, table = text.partition("::")
        return read_table(db, table)
    suffix = Path(text).suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return read_jsonl(text)
    if suffix in _DB_SUFFIXES:
        raise UnreadableSource(
            f"{text}: database sources need a table, e.g. {text}::tablename"
        )
    return read_delimited(text)


def write_snapshot(snapshot: TableSnapshot, path: str | Path, fmt: str | None = None) -> None:
    """Write a snapshot back out; raw values are emitted verbatim for CSV/TSV."""
    path = Path(path)
    if fmt is None:
        suffix = path.suffix.lower()
        fmt = {".tsv": "tsv", ".jsonl": "jsonl", ".ndjson": "jsonl"}.get(suffix, "csv")
    if fmt in ("csv", "tsv"):
        delim = "\t" if fmt == "tsv" else ","
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, delimiter=delim, lineterminator="\n")
            writer.writerow(snapshot.schema.names)
            cols = snapshot._columns
            for r in range(snapshot.row_count):
                writer.writerow([cols[i][r].decode("utf-8") for i in range(len(cols))])
    elif fmt == "jsonl":
        names = snapshot.schema.names
        types = [c.value_type for c in snapshot.schema.columns]
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for r in range(snapshot.row_count):
                obj = {}
                for i, name in enumerate(names):
                    val = parse_value(snapshot.raw_at(r, i), types[i])
                    obj[name] = None if val.is_null else val.payload
                    if val.type is ValueType.DATETIME and val.payload is not None:
                        obj[name] = val.raw
                    elif val.parse_failed:
                        obj[name] = val.raw
                fh.write(json.dumps(obj, ensure_ascii=True, separators=(",", ":")))
                fh.write("\n")
    else:
        raise ValueError(f"unsupported format: {fmt}")
