"""diffscope: tri-modal data differencing with explainable clusters.

Compares delimited files, SQLite tables, and SQL query results. Aligns
drifting schemas, explains value-level changes with type-specific
comparators, groups them into labeled clusters, and renders deterministic
reports.
"""

from .engine import JobConfig, Modality, run_job
from .errors import DiffscopeError
from .ingest import (
    KeySpec,
    TableSnapshot,
    ValueType,
    execute_query,
    infer_type,
    parse_value,
    read_snapshot,
    write_snapshot,
)
from .report import Report, evaluate, render_report
from .synth import GroundTruthLedger, SyntheticSpec, generate_synthetic

__all__ = [
    "DiffscopeError",
    "GroundTruthLedger",
    "JobConfig",
    "KeySpec",
    "Modality",
    "Report",
    "SyntheticSpec",
    "TableSnapshot",
    "ValueType",
    "evaluate",
    "execute_query",
    "generate_synthetic",
    "infer_type",
    "parse_value",
    "read_snapshot",
    "render_report",
    "run_job",
    "write_snapshot",
]

__version__ = "0.1.0"
