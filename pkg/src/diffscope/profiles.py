"""Column-level statistical profiling and cross-dataset distribution deltas.

Collection builds per-column summaries (histograms, frequency tables,
temporal buckets); cross-comparison subtracts them to surface emerging and
disappearing categories, mean/variance shifts, and skew flips.
"""

from __future__ import annotations

from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np

from .errors import IncomparableProfiles
from .ingest import ColumnDescriptor, TableSnapshot, ValueType, parse_datetime
from .schema import MappingSet

BIN_COUNT = 20
TOP_VALUES = 50
QUARTER_SPAN_MONTHS = 36


@dataclass(frozen=True)
class NumericHistogram:
    column: str
    edges: tuple[float, ...]  # 21 ascending (2 when the range is degenerate)
    counts: tuple[int, ...]
    mean: float | None
    variance: float | None
    null_count: int

    variant = "numeric"


@dataclass(frozen=True)
class FrequencyTable:
    column: str
    top: tuple[tuple[str, int], ...]  # top values by count, ties lexicographic
    other_count: int
    distinct_count: int
    null_count: int

    variant = "frequency"


@dataclass(frozen=True)
class TemporalBuckets:
    column: str
    granularity: str  # month | quarter
    buckets: tuple[tuple[str, int], ...]
    null_count: int

    variant = "temporal"


ColumnProfile = NumericHistogram | FrequencyTable | TemporalBuckets


@dataclass(frozen=True)
class DistributionDelta:
    column: str
    bucket_deltas: tuple  # per-bin ints (numeric) or (bucket, delta) pairs
    emerging: tuple[str, ...]
    disappearing: tuple[str, ...]
    mean_shift: float | None
    variance_shift: float | None
    skew_flag: bool


@dataclass
class SummaryDiff:
    deltas: list[DistributionDelta]


def _numeric_values(snapshot: TableSnapshot, col: ColumnDescriptor) -> tuple[np.ndarray, int]:
    """Parsed non-null numerics; unparseable cells are absorbed into the
    null count so bucket conservation holds by construction."""
    arr = snapshot.column_bytes(col.ordinal)
    nulls = snapshot.null_mask(col.ordinal)
    data = arr[~nulls]
    try:
        values = data.astype(np.float64)
    except ValueError:
        parsed = []
        for b in data:
            try:
                parsed.append(float(b.decode("utf-8")))
            except ValueError:
                pass
        values = np.array(parsed, dtype=np.float64)
    return values, snapshot.row_count - len(values)


def _month_indices(snapshot: TableSnapshot, col: ColumnDescriptor) -> tuple[np.ndarray, int]:
    """Wall-clock month index (months since 1970-01) per non-null cell."""
    arr = snapshot.column_bytes(col.ordinal)
    nulls = snapshot.null_mask(col.ordinal)
    data = arr[~nulls]
    months = None
    if len(data):
        # Offset-bearing stamps go through the scalar path so bucketing
        # stays wall-clock (numpy would silently convert them to UTC).
        has_offset = bool(
            (np.char.rfind(data, b"-") >= 19).any()
            or (np.char.find(data, b"+") >= 0).any()
            or np.char.endswith(data, b"Z").any()
        )
        if not has_offset:
            try:
                months = data.astype("datetime64[M]").astype(np.int64)
            except ValueError:
                months = None
    if months is None:
        out = []
        for b in data:
            dt = parse_datetime(b.decode("utf-8"))
            if dt is not None:
                out.append((dt.year - 1970) * 12 + dt.month - 1)
        months = np.array(out, dtype=np.int64)
    return months, snapshot.row_count - len(months)


def _month_label(idx: int, granularity: str) -> str:
    year, month = 1970 + idx // 12, idx % 12 + 1
    if granularity == "quarter":
        return f"{year:04d}-Q{(month - 1) // 3 + 1}"
    return f"{year:04d}-{month:02d}"


def numeric_edges(values_list: list[np.ndarray]) -> tuple[float, ...]:
    """Shared equal-width bin edges over the union range of all inputs."""
    non_empty = [v for v in values_list if len(v)]
    if not non_empty:
        return (0.0, 0.0)
    lo = min(float(v.min()) for v in non_empty)
    hi = max(float(v.max()) for v in non_empty)
    if lo == hi:
        return (lo, hi)  # degenerate: one bin holds everything
    return tuple(np.linspace(lo, hi, BIN_COUNT + 1).tolist())


def temporal_granularity(month_indices_list: list[np.ndarray]) -> str:
    non_empty = [m for m in month_indices_list if len(m)]
    if not non_empty:
        return "month"
    span = max(int(m.max()) for m in non_empty) - min(int(m.min()) for m in non_empty)
    return "quarter" if span > QUARTER_SPAN_MONTHS else "month"


def profile_column(
    snapshot: TableSnapshot,
    column: ColumnDescriptor,
    edges: tuple[float, ...] | None = None,
    granularity: str | None = None,
) -> ColumnProfile:
    """Profile one column; numeric edges / temporal granularity may be
    supplied by the caller so both sides of a comparison stay comparable."""
    vtype = column.value_type
    if vtype in (ValueType.INTEGER, ValueType.FLOAT):
        values, null_count = _numeric_values(snapshot, column)
        if edges is None:
            edges = numeric_edges([values])
        if len(edges) == 2 and edges[0] == edges[1]:
            counts = (int(len(values)),)
        else:
            counts = tuple(int(c) for c in np.histogram(values, bins=np.array(edges))[0])
        mean = float(values.mean()) if len(values) else None
        variance = float(values.var()) if len(values) else None
        return NumericHistogram(column.name, tuple(edges), counts, mean, variance, null_count)
    if vtype is ValueType.DATETIME:
        months, null_count = _month_indices(snapshot, column)
        if granularity is None:
            granularity = temporal_granularity([months])
        labels = [_month_label(int(i), granularity) for i in months]
        uniq, counts = np.unique(np.array(labels, dtype=object), return_counts=True) if labels else ([], [])
        buckets = tuple(sorted((str(u), int(c)) for u, c in zip(uniq, counts)))
        return TemporalBuckets(column.name, granularity, buckets, null_count)

    arr = snapshot.column_bytes(column.ordinal)
    nulls = snapshot.null_mask(column.ordinal)
    data = arr[~nulls]
    null_count = snapshot.row_count - len(data)
    if len(data):
        uniq, counts = np.unique(data, return_counts=True)
        order = np.argsort(-counts, kind="stable")  # unique() is value-ascending
        top = tuple(
            (uniq[i].decode("utf-8"), int(counts[i])) for i in order[:TOP_VALUES]
        )
        other = int(counts.sum()) - sum(c for _, c in top)
        distinct = int(len(uniq))
    else:
        top, other, distinct = (), 0, 0
    return FrequencyTable(column.name, top, other, distinct, null_count)


def _median_bin_center(profile: NumericHistogram) -> float | None:
    total = sum(profile.counts)
    if total == 0:
        return None
    if len(profile.edges) == 2:
        return profile.edges[0]
    cumulative = 0
    for i, c in enumerate(profile.counts):
        cumulative += c
        if cumulative * 2 >= total:
            return (profile.edges[i] + profile.edges[i + 1]) / 2.0
    return None


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


def compare_profiles(src: ColumnProfile, tgt: ColumnProfile) -> DistributionDelta:
    if src.variant != tgt.variant:
        raise IncomparableProfiles(f"{src.variant} vs {tgt.variant} on {src.column}")
    if isinstance(src, NumericHistogram):
        if src.edges != tgt.edges:
            raise IncomparableProfiles(f"bin edges differ on {src.column}")
        deltas = tuple(t - s for s, t in zip(src.counts, tgt.counts))
        mean_shift = variance_shift = None
        if src.mean is not None and tgt.mean is not None:
            mean_shift = tgt.mean - src.mean
            variance_shift = tgt.variance - src.variance
        skew = False
        sc, tc = _median_bin_center(src), _median_bin_center(tgt)
        if sc is not None and tc is not None and src.mean is not None and tgt.mean is not None:
            skew = _sign(src.mean - sc) * _sign(tgt.mean - tc) < 0
        return DistributionDelta(src.column, deltas, (), (), mean_shift, variance_shift, skew)

    if isinstance(src, FrequencyTable):
        s_counts = dict(src.top)
        t_counts = dict(tgt.top)
    else:
        if src.granularity != tgt.granularity:
            raise IncomparableProfiles(f"granularity differs on {src.column}")
        s_counts = dict(src.buckets)
        t_counts = dict(tgt.buckets)
    keys = sorted(set(s_counts) | set(t_counts))
    deltas = tuple((k, t_counts.get(k, 0) - s_counts.get(k, 0)) for k in keys)
    emerging = tuple(k for k in keys if k not in s_counts)
    disappearing = tuple(k for k in keys if k not in t_counts)
    return DistributionDelta(src.column, deltas, emerging, disappearing, None, None, False)


def profile_pair(src, tgt, src_col, tgt_col) -> DistributionDelta:
    """Profile one mapped column pair with shared edges and compare."""
    vtype = src_col.value_type
    if vtype in (ValueType.INTEGER, ValueType.FLOAT):
        sv, _ = _numeric_values(src, src_col)
        tv, _ = _numeric_values(tgt, tgt_col)
        edges = numeric_edges([sv, tv])
        sp = profile_column(src, src_col, edges=edges)
        tp = profile_column(tgt, tgt_col, edges=edges)
    elif vtype is ValueType.DATETIME:
        sm, _ = _month_indices(src, src_col)
        tm, _ = _month_indices(tgt, tgt_col)
        granularity = temporal_granularity([sm, tm])
        sp = profile_column(src, src_col, granularity=granularity)
        tp = profile_column(tgt, tgt_col, granularity=granularity)
    else:
        sp = profile_column(src, src_col)
        tp = profile_column(tgt, tgt_col)
    return compare_profiles(sp, tp)


def summarize(
    src: TableSnapshot,
    tgt: TableSnapshot,
    mapping: MappingSet,
    pool: Executor | None = None,
) -> SummaryDiff:
    """One delta per mapped column, ordered by source ordinal.

    Columns are profiled with shared numeric edges / temporal granularity
    computed over the union of both sides. With a pool, columns run
    concurrently; output order never depends on completion order.
    """
    jobs = []
    for m in mapping.mappings:
        src_col = src.schema.column(m.source_column)
        tgt_col = tgt.schema.column(m.target_column)
        jobs.append((src_col.ordinal, src_col, tgt_col))
    jobs.sort(key=lambda j: j[0])
    if pool is None:
        deltas = [profile_pair(src, tgt, sc, tc) for _, sc, tc in jobs]
    else:
        futures = [pool.submit(profile_pair, src, tgt, sc, tc) for _, sc, tc in jobs]
        deltas = [f.result() for f in futures]
    return SummaryDiff(deltas)


# --- serialization -------------------------------------------------------


def profile_to_json(p: ColumnProfile) -> dict:
    if isinstance(p, NumericHistogram):
        return {
            "variant": p.variant,
            "column": p.column,
            "edges": list(p.edges),
            "counts": list(p.counts),
            "mean": p.mean,
            "variance": p.variance,
            "null_count": p.null_count,
        }
    if isinstance(p, FrequencyTable):
        return {
            "variant": p.variant,
            "column": p.column,
            "top": [[v, c] for v, c in p.top],
            "other_count": p.other_count,
            "distinct_count": p.distinct_count,
            "null_count": p.null_count,
        }
    return {
        "variant": p.variant,
        "column": p.column,
        "granularity": p.granularity,
        "buckets": [[b, c] for b, c in p.buckets],
        "null_count": p.null_count,
    }


def delta_to_json(d: DistributionDelta) -> dict:
    deltas = d.bucket_deltas
    if deltas and isinstance(deltas[0], tuple):
        bucket_deltas = [[k, v] for k, v in deltas]
    else:
        bucket_deltas = list(deltas)
    return {
        "column": d.column,
        "bucket_deltas": bucket_deltas,
        "emerging": list(d.emerging),
        "disappearing": list(d.disappearing),
        "mean_shift": d.mean_shift,
        "variance_shift": d.variance_shift,
        "skew_flag": d.skew_flag,
    }


def delta_from_json(d: dict) -> DistributionDelta:
    raw = d["bucket_deltas"]
    if raw and isinstance(raw[0], list):
        deltas = tuple((k, v) for k, v in raw)
    else:
        deltas = tuple(raw)
    return DistributionDelta(
        d["column"],
        deltas,
        tuple(d["emerging"]),
        tuple(d["disappearing"]),
        d["mean_shift"],
        d["variance_shift"],
        d["skew_flag"],
    )


def summary_to_json(s: SummaryDiff) -> list:
    return [delta_to_json(d) for d in s.deltas]


def summary_from_json(data: list) -> SummaryDiff:
    return SummaryDiff([delta_from_json(d) for d in data])
