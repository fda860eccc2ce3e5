from __future__ import annotations

import hashlib
import json
import sqlite3
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from diffscope.errors import (
    EmptyInput,
    NonReadOnlyQuery,
    QueryFailed,
    RaggedRow,
    UnreadableSource,
)
from diffscope.ingest import (
    NULL_TOKENS,
    SourceKind,
    ValueType,
    execute_query,
    infer_type,
    parse_datetime,
    parse_value,
    read_jsonl,
    read_snapshot,
    read_table,
    write_snapshot,
)


class TestInferType:
    def test_integers(self):
        assert infer_type(["12", "7", "-3"]) is ValueType.INTEGER

    def test_integer_widened_to_float(self):
        assert infer_type(["12", "7.5"]) is ValueType.FLOAT

    def test_json_documents(self):
        # Oracle: each sample parses under the stdlib JSON parser, nulls
        # ignored ("null" is a null token before it is ever JSON).
        samples = ['{"a":1}', "null", "{}"]
        for s in samples:
            if s not in NULL_TOKENS:
                json.loads(s)
        assert infer_type(samples) is ValueType.JSON

    def test_boolean_words(self):
        assert infer_type(["true", "FALSE", "0"]) is ValueType.BOOLEAN

    def test_zero_one_counters_stay_integer(self):
        assert infer_type(["0", "1", "1", "0"]) is ValueType.INTEGER

    def test_datetime_formats(self):
        assert infer_type(["2021-03-05", "2022-12-31"]) is ValueType.DATETIME
        assert infer_type(["2021-03-05T10:00:00"]) is ValueType.DATETIME
        assert infer_type(["2021-03-05 10:00:00"]) is ValueType.DATETIME
        assert infer_type(["03/05/2021"]) is ValueType.DATETIME

    def test_invalid_calendar_date_is_text(self):
        assert infer_type(["2021-13-05"]) is ValueType.TEXT

    def test_null_only(self):
        assert infer_type(["", "NULL", "N/A"]) is ValueType.NULL_ONLY

    def test_text_fallback(self):
        assert infer_type(["12", "abc"]) is ValueType.TEXT

    def test_sample_cap_validation(self):
        with pytest.raises(ValueError):
            infer_type(["1"], sample_cap=0)

    @given(st.lists(st.sampled_from(["1", "2.5", "x", "true", "2021-01-01", ""]), min_size=1, max_size=20), st.randoms())
    def test_order_insensitive(self, samples, rnd):
        expected = infer_type(samples)
        shuffled = list(samples)
        rnd.shuffle(shuffled)
        assert infer_type(shuffled) is expected

    @given(st.text(min_size=1, max_size=12).filter(lambda s: s not in NULL_TOKENS))
    def test_non_tokens_never_null(self, raw):
        assert not parse_value(raw, ValueType.TEXT).is_null


class TestParseValue:
    def test_leading_zero_integer_keeps_raw(self):
        v = parse_value("042", ValueType.INTEGER)
        assert v.payload == 42 and v.raw == "042" and not v.parse_failed

    def test_datetime_with_offset(self):
        v = parse_value("2021-03-05T10:00:00+02:00", ValueType.DATETIME)
        assert v.payload == datetime(2021, 3, 5, 10, 0, 0, tzinfo=timezone(timedelta(minutes=120)))
        assert v.payload.utcoffset() == timedelta(minutes=120)

    def test_nonconforming_falls_back_to_text(self):
        v = parse_value("abc", ValueType.INTEGER)
        assert v.type is ValueType.TEXT and v.parse_failed and v.payload == "abc"

    def test_null_tokens_map_to_null(self):
        for token in NULL_TOKENS:
            assert parse_value(token, ValueType.INTEGER).is_null

    def test_boolean_tokens(self):
        assert parse_value("TRUE", ValueType.BOOLEAN).payload is True
        assert parse_value("0", ValueType.BOOLEAN).payload is False

    def test_fractional_seconds(self):
        v = parse_value("2021-03-05T10:00:00.25", ValueType.DATETIME)
        assert v.payload.microsecond == 250_000

    def test_z_suffix(self):
        v = parse_value("2021-03-05T10:00:00Z", ValueType.DATETIME)
        assert v.payload.tzinfo == timezone.utc


class TestReadDelimited:
    def test_minimal_csv(self, snapshot_of):
        snap = snapshot_of("id,v\n1,a\n2,b\n")
        assert snap.row_count == 2
        types = [(c.name, c.value_type) for c in snap.schema.columns]
        assert types == [("id", ValueType.INTEGER), ("v", ValueType.TEXT)]

    def test_tab_detection(self, snapshot_of):
        snap = snapshot_of("id\tv\n1\tx\n", name="data.tsv")
        assert snap.schema.names == ["id", "v"]

    def test_delimiter_tie_prefers_comma(self, snapshot_of):
        snap = snapshot_of("a,b\n1,2\n")
        assert snap.schema.names == ["a", "b"]

    def test_ragged_row_names_line(self, snapshot_of):
        with pytest.raises(RaggedRow) as err:
            snapshot_of("a,b\n1,2\n1,2,3\n")
        assert err.value.line == 3

    def test_empty_input(self, snapshot_of):
        with pytest.raises(EmptyInput):
            snapshot_of("a,b\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(UnreadableSource):
            read_snapshot(tmp_path / "absent.csv")

    def test_duplicate_folded_headers(self, snapshot_of):
        with pytest.raises(UnreadableSource):
            snapshot_of("a,A \n1,2\n")

    def test_quoted_fields(self, snapshot_of):
        snap = snapshot_of('a,b\n"x,y",2\n')
        assert snap.raw_at(0, 0) == "x,y"

    def test_crlf(self, snapshot_of):
        snap = snapshot_of("a,b\r\n1,2\r\n")
        assert snap.row_count == 1 and snap.raw_at(0, 1) == "2"

    def test_null_fraction(self, snapshot_of):
        snap = snapshot_of('a\n1\n""\nNULL\n4\n')
        col = snap.schema.columns[0]
        assert col.nullable and col.null_fraction == pytest.approx(0.5)

    def test_blank_lines_skipped(self, snapshot_of):
        snap = snapshot_of("a,b\n1,2\n\n3,4\n")
        assert snap.row_count == 2

    def test_iteration_stable(self, snapshot_of):
        snap = snapshot_of("a,b\n1,x\n2,y\n")
        assert list(snap.iter_rows()) == list(snap.iter_rows())

    def test_mixed_type_20_columns(self, tmp_path):
        # 20 mixed-type columns, 1000 rows -> 20 descriptors, count intact.
        from diffscope.synth import SyntheticSpec, generate_synthetic

        src, _, _ = generate_synthetic(SyntheticSpec(rows=1000, seed=3), tmp_path)
        snap = read_snapshot(src)
        assert len(snap.schema.columns) == 20
        assert snap.row_count == 1000
        by_type = {}
        for c in snap.schema.columns:
            by_type[c.value_type] = by_type.get(c.value_type, 0) + 1
        assert by_type[ValueType.INTEGER] == 5
        assert by_type[ValueType.TEXT] >= 4  # txt_note may be all-null in tiny samples
        assert by_type[ValueType.FLOAT] == 4
        assert by_type[ValueType.DATETIME] == 3
        assert by_type[ValueType.JSON] == 2
        assert by_type[ValueType.BOOLEAN] == 1


class TestJsonLines:
    def test_first_seen_key_order(self, tmp_path):
        path = tmp_path / "rows.jsonl"
        path.write_text('{"a":1,"b":"x"}\n{"b":"y","c":2}\n', encoding="utf-8")
        snap = read_jsonl(path)
        assert snap.schema.names == ["a", "b", "c"]
        assert snap.raw_at(0, 2) == ""  # missing key reads as null
        assert parse_value(snap.raw_at(0, 2), ValueType.INTEGER).is_null

    def test_bad_line(self, tmp_path):
        path = tmp_path / "rows.jsonl"
        path.write_text('{"a":1}\nnot json\n', encoding="utf-8")
        with pytest.raises(UnreadableSource):
            read_jsonl(path)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "rows.jsonl"
        path.write_text('{"a":1,"b":"x"}\n{"a":2,"b":null}\n', encoding="utf-8")
        snap = read_jsonl(path)
        out = tmp_path / "out.jsonl"
        write_snapshot(snap, out)
        again = read_jsonl(out)
        assert [c.name for c in again.schema.columns] == snap.schema.names
        assert [c.value_type for c in again.schema.columns] == [
            c.value_type for c in snap.schema.columns
        ]
        for r in range(snap.row_count):
            for c in range(2):
                assert again.raw_at(r, c) == snap.raw_at(r, c)


class TestRoundTrip:
    FIXTURES = [
        "id,v,w\n1,a,2.5\n2,b,3.25\n3,,4.125\n",
        "k,t\nx,2021-03-05\ny,2022-01-01\n",
        'a,b\n"x,y",NULL\nplain,N/A\n',
    ]

    @pytest.mark.parametrize("text", FIXTURES)
    def test_csv_round_trip(self, write_csv, tmp_path, text):
        snap = read_snapshot(write_csv(text))
        out = tmp_path / "out.csv"
        write_snapshot(snap, out)
        again = read_snapshot(out)
        assert again.schema.names == snap.schema.names
        assert [c.value_type for c in again.schema.columns] == [
            c.value_type for c in snap.schema.columns
        ]
        for r in range(snap.row_count):
            for c in range(len(snap.schema.columns)):
                assert again.raw_at(r, c) == snap.raw_at(r, c)


class TestExecuteQuery:
    def test_constant_query(self, sales_db):
        snap = execute_query(sales_db, "SELECT 1 AS x")
        assert snap.row_count == 1
        assert snap.schema.columns[0].value_type is ValueType.INTEGER
        assert snap.raw_at(0, 0) == "1"
        assert snap.schema.source_kind is SourceKind.QUERY

    def test_group_by_aggregate(self, sales_db):
        # Hand-computed on the fixture: east = 10+15+5, west = 7+3.
        snap = execute_query(
            sales_db, "SELECT region, SUM(amt) AS total FROM t GROUP BY region ORDER BY region"
        )
        rows = [(snap.raw_at(r, 0), snap.raw_at(r, 1)) for r in range(snap.row_count)]
        assert rows == [("east", "30"), ("west", "10")]

    def test_mutation_rejected(self, sales_db):
        with pytest.raises(NonReadOnlyQuery):
            execute_query(sales_db, "DELETE FROM t")

    def test_bad_sql(self, sales_db):
        with pytest.raises(QueryFailed):
            execute_query(sales_db, "SELECT nope FROM missing_table")

    def test_database_file_unchanged(self, sales_db):
        before = hashlib.blake2b(sales_db.read_bytes()).hexdigest()
        execute_query(sales_db, "SELECT * FROM t")
        with pytest.raises(NonReadOnlyQuery):
            execute_query(sales_db, "UPDATE t SET amt = 0")
        after = hashlib.blake2b(sales_db.read_bytes()).hexdigest()
        assert before == after

    def test_missing_database(self, tmp_path):
        with pytest.raises(UnreadableSource):
            execute_query(tmp_path / "absent.sqlite", "SELECT 1")

    def test_text_results_refined_by_inference(self, tmp_path):
        path = tmp_path / "d.sqlite"
        con = sqlite3.connect(path)
        con.execute("CREATE TABLE e (stamp TEXT)")
        con.execute("INSERT INTO e VALUES ('2021-03-05')")
        con.commit()
        con.close()
        snap = execute_query(path, "SELECT stamp FROM e")
        assert snap.schema.columns[0].value_type is ValueType.DATETIME

    def test_read_table(self, sales_db):
        snap = read_table(sales_db, "t")
        assert snap.row_count == 5
        assert snap.schema.source_kind is SourceKind.DATABASE
        via_descriptor = read_snapshot(f"{sales_db}::t")
        assert via_descriptor.row_count == 5


class TestParseDatetimeFormats:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("2021-03-05", datetime(2021, 3, 5)),
            ("2021-03-05T10:00:00", datetime(2021, 3, 5, 10)),
            ("2021-03-05 10:00:00", datetime(2021, 3, 5, 10)),
            ("03/05/2021", datetime(2021, 3, 5)),
        ],
    )
    def test_accepted(self, raw, expected):
        assert parse_datetime(raw) == expected

    @pytest.mark.parametrize("raw", ["5 March 2021", "2021/03/05", "20210305", "03-05-2021"])
    def test_rejected(self, raw):
        assert parse_datetime(raw) is None
