from __future__ import annotations

import sqlite3
from pathlib import Path

import pytest

from diffscope.ingest import read_snapshot


@pytest.fixture
def write_csv(tmp_path):
    counter = {"n": 0}

    def _write(text: str, name: str | None = None) -> Path:
        counter["n"] += 1
        path = tmp_path / (name or f"data{counter['n']}.csv")
        path.write_text(text, encoding="utf-8")
        return path

    return _write


@pytest.fixture
def snapshot_of(write_csv):
    def _make(text: str, name: str | None = None):
        return read_snapshot(write_csv(text, name))

    return _make


@pytest.fixture
def sales_db(tmp_path):
    """5-row fixture used by the query tests; the aggregate answers below
    were computed by hand."""
    path = tmp_path / "sales.sqlite"
    con = sqlite3.connect(path)
    con.execute("CREATE TABLE t (region TEXT, amt INTEGER)")
    con.executemany(
        "INSERT INTO t VALUES (?, ?)",
        [("east", 10), ("east", 15), ("west", 7), ("west", 3), ("east", 5)],
    )
    con.commit()
    con.close()
    return path
