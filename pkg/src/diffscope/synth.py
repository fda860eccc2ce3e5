"""Seeded synthetic dataset pairs with an exact mutation ledger.

The generator builds a 20-column mixed-type source table, then derives the
target by applying a planned set of cell mutations (one per selected row,
uniformly spread, family chosen round-robin). Every mutation is recorded,
so detection can be scored exactly. Families are constructed so that each
one lands in a distinct, stable cluster:

* pattern families (rounding, truncation, zero padding, case, whitespace,
  nulls, transposition, time zone, type mismatch) hit their static rules;
* the remaining families (json key add, categorical remap, value replace)
  produce constant feature vectors, one dynamic cluster each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path

import numpy as np

FAMILIES = (
    "Rounding",
    "Truncation",
    "ZeroPadding",
    "CaseChange",
    "WhitespaceChange",
    "NullInflation",
    "NullDeflation",
    "Transposition",
    "TimeZoneShift",
    "TypeMismatch",
    "JsonKeyAdd",
    "CategoricalRemap",
    "ValueReplace",
)

# Families whose gold label is directly expressible in the ontology; the
# rest are annotated Other (the ontology has no name for them).
FAMILY_GOLD_LABELS = {
    "Rounding": "Rounding",
    "Truncation": "Truncation",
    "ZeroPadding": "Other",
    "CaseChange": "Other",
    "WhitespaceChange": "Other",
    "NullInflation": "NullInflation",
    "NullDeflation": "Other",
    "Transposition": "Other",
    "TimeZoneShift": "TimeZoneShift",
    "TypeMismatch": "TypeCast",
    "JsonKeyAdd": "Other",
    "CategoricalRemap": "CategoricalRemap",
    "ValueReplace": "Other",
}

# Families whose gold labels are derivable from static patterns alone;
# used for "static-only" evaluation datasets.
STATIC_FAMILIES = ("Rounding", "Truncation", "NullInflation", "TimeZoneShift", "TypeMismatch")

FAMILY_COLUMNS = {
    "Rounding": "flt_amount",
    "Truncation": "txt_name",
    "ZeroPadding": "int_count",
    "CaseChange": "txt_code",
    "WhitespaceChange": "txt_tag",
    "NullInflation": "int_qty",
    "NullDeflation": "txt_note",
    "Transposition": "int_units",
    "TimeZoneShift": "dt_event",
    "TypeMismatch": "int_score",
    "JsonKeyAdd": "js_attrs",
    "CategoricalRemap": "txt_category",
    "ValueReplace": "txt_name",
}

COLUMN_NAMES = (
    "id",
    "txt_name",
    "txt_code",
    "txt_category",
    "txt_note",
    "txt_tag",
    "int_count",
    "int_qty",
    "int_units",
    "int_score",
    "flt_amount",
    "flt_price",
    "flt_ratio",
    "flt_weight",
    "dt_created",
    "dt_updated",
    "dt_event",
    "js_attrs",
    "js_meta",
    "bool_active",
)

CATEGORY_POOL = ("alpha", "beta", "gamma", "delta", "epsilon")
_REMAP_FROM = "gamma"
_REMAP_TO = "omega"
_NOTE_NULL_RATE = 0.08
_TZ_SHIFT_MINUTES = 120


@dataclass(frozen=True)
class SyntheticSpec:
    rows: int
    seed: int = 7
    diff_rate: float = 0.01
    families: tuple[str, ...] = FAMILIES

    def __post_init__(self):
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown families: {sorted(unknown)}")
        if not (0.0 < self.diff_rate <= 1.0):
            raise ValueError("diff_rate must be in (0, 1]")


@dataclass(frozen=True)
class LedgerEntry:
    key_parts: tuple[str, ...]
    column: str
    family: str
    before: str
    after: str


@dataclass
class GroundTruthLedger:
    seed: int
    rows: int
    diff_rate: float
    families: tuple[str, ...]
    entries: list[LedgerEntry] = field(default_factory=list)

    @staticmethod
    def gold_label(family: str) -> str:
        return FAMILY_GOLD_LABELS[family]

    def save(self, path: str | Path) -> None:
        payload = {
            "seed": self.seed,
            "rows": self.rows,
            "diff_rate": self.diff_rate,
            "families": list(self.families),
            "entries": [
                {
                    "key": list(e.key_parts),
                    "column": e.column,
                    "family": e.family,
                    "before": e.before,
                    "after": e.after,
                }
                for e in self.entries
            ],
        }
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n",
            encoding="utf-8",
        )

    @staticmethod
    def load(path: str | Path) -> "GroundTruthLedger":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return GroundTruthLedger(
            data["seed"],
            data["rows"],
            data["diff_rate"],
            tuple(data["families"]),
            [
                LedgerEntry(
                    tuple(e["key"]), e["column"], e["family"], e["before"], e["after"]
                )
                for e in data["entries"]
            ],
        )


def _rand_lower_words(rng, n, lmin, lmax):
    width = lmax
    mat = rng.integers(97, 123, size=(n, width), dtype=np.uint8)
    lengths = rng.integers(lmin, lmax + 1, size=n)
    mask = np.arange(width)[None, :] >= lengths[:, None]
    mat[mask] = 0  # trailing NULs vanish in the S views
    return np.char.decode(mat.view(f"S{width}").ravel(), "utf-8")


def _mod(fmt: str, arr) -> np.ndarray:
    return np.char.mod(fmt, arr)


def _concat(*parts) -> np.ndarray:
    out = parts[0]
    for p in parts[1:]:
        out = np.char.add(out, p)
    return out


def _build_source(rng, n: int) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    cols["id"] = _mod("%d", np.arange(1, n + 1))
    cols["txt_name"] = _rand_lower_words(rng, n, 8, 12)
    cols["txt_code"] = _rand_lower_words(rng, n, 6, 6)
    cols["txt_category"] = rng.choice(np.array(CATEGORY_POOL, dtype="U8"), size=n)
    notes = _rand_lower_words(rng, n, 5, 9)
    null_mask = rng.random(n) < _NOTE_NULL_RATE
    notes = np.where(null_mask, "", notes)
    cols["txt_note"] = notes
    cols["txt_tag"] = _concat(
        _rand_lower_words(rng, n, 3, 5), np.full(n, " ", dtype="U1"), _rand_lower_words(rng, n, 3, 5)
    )
    cols["int_count"] = _mod("%d", rng.integers(1, 100000, size=n))
    cols["int_qty"] = _mod("%d", rng.integers(1, 10000, size=n))
    # int_units: 5 digits, first two distinct, so an adjacent swap always
    # changes the value.
    d1 = rng.integers(1, 10, size=n)
    d2 = ((d1 - 1 + rng.integers(1, 9, size=n)) % 9) + 1
    rest = rng.integers(0, 1000, size=n)
    cols["int_units"] = _concat(_mod("%d", d1), _mod("%d", d2), _mod("%03d", rest))
    cols["int_score"] = _mod("%d", rng.integers(0, 101, size=n))
    # flt_amount: the 2-decimal rounding of every value keeps a nonzero
    # last cents digit (no carry into a trailing zero), so the rounding
    # signature is exactly 2 for every mutated cell.
    whole = rng.integers(10, 1000, size=n)
    cents = rng.choice(np.array([c for c in range(1, 100) if c % 10 != 0]), size=n)
    tail = rng.integers(1, 1000, size=n)
    carry_to_zero = (tail >= 500) & ((cents + 1) % 10 == 0)
    tail = np.where(carry_to_zero, tail - 500, tail)
    cols["flt_amount"] = _concat(
        _mod("%d", whole), np.full(n, ".", dtype="U1"), _mod("%02d", cents), _mod("%03d", tail)
    )
    cols["flt_price"] = _mod("%.4f", rng.uniform(1, 500, size=n))
    cols["flt_ratio"] = _mod("%.6f", rng.uniform(0, 1, size=n))
    cols["flt_weight"] = _mod("%.3f", rng.uniform(0.1, 50, size=n))
    base = np.datetime64("2021-01-01T00:00:00")
    for name in ("dt_created", "dt_updated", "dt_event"):
        stamps = base + rng.integers(0, 730 * 86400, size=n).astype("timedelta64[s]")
        cols[name] = np.datetime_as_string(stamps, unit="s")
    cols["js_attrs"] = _concat(
        np.full(n, '{"a":', dtype="U5"),
        _mod("%d", rng.integers(0, 1000, size=n)),
        np.full(n, ',"b":"', dtype="U6"),
        _rand_lower_words(rng, n, 4, 7),
        np.full(n, '"}', dtype="U2"),
    )
    cols["js_meta"] = _concat(
        np.full(n, '{"k":"', dtype="U6"),
        _rand_lower_words(rng, n, 3, 6),
        np.full(n, '","n":', dtype="U6"),
        _mod("%d", rng.integers(0, 100, size=n)),
        np.full(n, "}", dtype="U1"),
    )
    cols["bool_active"] = rng.choice(np.array(["true", "false"], dtype="U5"), size=n)
    return cols


def _round_cents(raw: str) -> str:
    q = Decimal(raw).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return format(q, "f")


def _shift_timestamp(raw: str, minutes: int) -> str:
    stamp = np.datetime64(raw) + np.timedelta64(minutes * 60, "s")
    return np.datetime_as_string(stamp, unit="s")


def _mutate(rng, family: str, source: str) -> str:
    if family == "Rounding":
        return _round_cents(source)
    if family == "Truncation":
        cut = int(rng.integers(4, len(source)))
        return source[:cut]
    if family == "ZeroPadding":
        return "00" + source
    if family == "CaseChange":
        return source.upper()
    if family == "WhitespaceChange":
        return source.replace(" ", "  ", 1)
    if family == "NullInflation":
        return ""
    if family == "NullDeflation":
        return "restored" + str(int(rng.integers(10, 100)))
    if family == "Transposition":
        return source[1] + source[0] + source[2:]
    if family == "TimeZoneShift":
        return _shift_timestamp(source, _TZ_SHIFT_MINUTES)
    if family == "TypeMismatch":
        letters = "abcdefghijklmnopqrstuvwxyz"
        a, b = rng.integers(0, 26, size=2)
        return "err" + letters[int(a)] + letters[int(b)]
    if family == "JsonKeyAdd":
        return source[:-1] + ',"c":1}'
    if family == "CategoricalRemap":
        return _REMAP_TO
    if family == "ValueReplace":
        upper = "ABCDEFGHJKLMNPQRSTUVWXYZ"
        digits = "23456789"
        out = []
        for i in range(8):
            pool = upper if i % 2 == 0 else digits
            out.append(pool[int(rng.integers(0, len(pool)))])
        return "".join(out)
    raise ValueError(f"unknown family: {family}")


def generate_synthetic(
    spec: SyntheticSpec, out_dir: str | Path
) -> tuple[Path, Path, GroundTruthLedger]:
    """Write source.csv, target.csv, and ledger.json under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    n = spec.rows
    cols = _build_source(rng, n)

    n_mut = int(round(n * spec.diff_rate))
    n_mut = min(n_mut, n)
    mutation_rows = np.sort(rng.choice(n, size=n_mut, replace=False))
    family_cycle = np.array(
        [spec.families[i % len(spec.families)] for i in range(n_mut)], dtype=object
    )
    family_of = family_cycle[rng.permutation(n_mut)]

    # Plan-first: force source cells that a family needs (a null to fill, a
    # known category to remap) before the target copy is taken.
    for r, family in zip(mutation_rows, family_of):
        if family == "NullDeflation":
            cols["txt_note"][r] = ""
        elif family == "CategoricalRemap":
            cols["txt_category"][r] = _REMAP_FROM

    target = {name: arr.copy() for name, arr in cols.items()}
    ledger = GroundTruthLedger(spec.seed, n, spec.diff_rate, spec.families)
    for r, family in zip(mutation_rows, family_of):
        column = FAMILY_COLUMNS[family]
        before = str(cols[column][r])
        after = _mutate(rng, family, before)
        if len(after) > target[column].dtype.itemsize // 4:
            target[column] = target[column].astype(f"U{len(after)}")
        target[column][r] = after
        ledger.entries.append(
            LedgerEntry((str(cols["id"][r]),), column, family, before, after)
        )

    src_path = out / "source.csv"
    tgt_path = out / "target.csv"
    _write_csv(src_path, cols)
    _write_csv(tgt_path, target)
    ledger.save(out / "ledger.json")
    return src_path, tgt_path, ledger


def _csv_quote(arr: np.ndarray) -> np.ndarray:
    quoted = np.char.replace(arr, '"', '""')
    q = np.full(len(arr), '"', dtype="U1")
    return _concat(q, quoted, q)


def _write_csv(path: Path, cols: dict[str, np.ndarray]) -> None:
    parts = []
    for name in COLUMN_NAMES:
        arr = cols[name]
        if name.startswith("js_"):
            arr = _csv_quote(arr)  # embedded commas
        parts.append(arr)
    comma = np.full(len(parts[0]), ",", dtype="U1")
    line = parts[0]
    for p in parts[1:]:
        line = _concat(line, comma, p)
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(COLUMN_NAMES) + "\n")
        fh.write("\n".join(line.tolist()))
        fh.write("\n")
