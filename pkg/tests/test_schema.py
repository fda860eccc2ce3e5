from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffscope.errors import ConflictingOverrides, UnknownColumn
from diffscope.ingest import ColumnDescriptor, KeySpec, Schema, SourceKind, ValueType
from diffscope.schema import (
    ChangeKind,
    MappingMemory,
    MappingOrigin,
    ScoreMatrix,
    fold,
    lexical_similarity,
    metadata_diff,
    record_correction,
    resolve_mapping,
    score_candidates,
    type_compatibility,
)

from oracles import best_assignment, recursive_levenshtein


def make_schema(*cols: tuple[str, ValueType], nullable: set[str] = frozenset()) -> Schema:
    return Schema(
        tuple(
            ColumnDescriptor(name, i, vtype, name in nullable, 0.1 if name in nullable else 0.0)
            for i, (name, vtype) in enumerate(cols)
        ),
        SourceKind.FILE,
    )


class TestLexicalSimilarity:
    def test_identity(self):
        assert lexical_similarity("amount", "amount") == 1.0

    def test_folding_removes_variation(self):
        assert lexical_similarity("cust_id", "CustID") == 1.0

    def test_partial_match(self):
        # Oracle: recursive edit distance of the folded names is 2.
        assert recursive_levenshtein("amount", "amnt") == 2
        assert lexical_similarity("amount", "amnt") == pytest.approx(1 - 2 / 6)

    @given(st.text(min_size=1, max_size=8), st.text(min_size=1, max_size=8))
    def test_symmetric(self, a, b):
        assert lexical_similarity(a, b) == pytest.approx(lexical_similarity(b, a))

    @given(st.text(min_size=1, max_size=8), st.text(min_size=1, max_size=8))
    def test_one_iff_folded_equal(self, a, b):
        score = lexical_similarity(a, b)
        assert (score == 1.0) == (fold(a) == fold(b))

    @given(
        st.text(alphabet="abc_ ", min_size=1, max_size=8),
        st.text(alphabet="abc_ ", min_size=1, max_size=8),
    )
    def test_distance_matches_recursive_oracle(self, a, b):
        from diffscope.datadiff import levenshtein_distance

        assert levenshtein_distance(fold(a), fold(b)) == recursive_levenshtein(fold(a), fold(b))


class TestTypeCompatibility:
    @pytest.mark.parametrize(
        "src,tgt,score",
        [
            (ValueType.INTEGER, ValueType.INTEGER, 1.0),
            (ValueType.INTEGER, ValueType.FLOAT, 0.8),
            (ValueType.FLOAT, ValueType.INTEGER, 0.8),
            (ValueType.DATETIME, ValueType.JSON, 0.0),
            (ValueType.INTEGER, ValueType.TEXT, 0.5),
            (ValueType.TEXT, ValueType.TEXT, 1.0),
        ],
    )
    def test_matrix(self, src, tgt, score):
        assert type_compatibility(src, tgt) == score


class TestScoreCandidates:
    def test_identity_schemas_score_diagonal(self):
        schema = make_schema(("a", ValueType.INTEGER), ("b", ValueType.TEXT), ("c", ValueType.FLOAT))
        matrix = score_candidates(schema, schema)
        assert np.allclose(np.diag(matrix.combined), 1.0)

    def test_worked_example(self):
        # 0.5 * lexical(amount, amnt) + 0.2 * 1.0 + 0.3 * 1.0 with both at
        # ordinal 2 of 4 and both Float.
        src = make_schema(
            ("w", ValueType.TEXT), ("x", ValueType.INTEGER), ("amount", ValueType.FLOAT), ("z", ValueType.JSON)
        )
        tgt = make_schema(
            ("w", ValueType.TEXT), ("x", ValueType.INTEGER), ("amnt", ValueType.FLOAT), ("z", ValueType.JSON)
        )
        matrix = score_candidates(src, tgt)
        expected = 0.5 * (1 - 2 / 6) + 0.2 * 1.0 + 0.3 * 1.0
        assert matrix.combined[2, 2] == pytest.approx(expected)

    def test_memory_floor(self):
        src = make_schema(("a", ValueType.TEXT), ("zz", ValueType.INTEGER))
        tgt = make_schema(("qq", ValueType.TEXT), ("a", ValueType.INTEGER))
        memory = MappingMemory()
        memory.record("zz", "qq", MappingMemory.fingerprint(src))
        matrix = score_candidates(src, tgt, memory)
        assert matrix.combined[1, 0] >= 0.95
        assert (1, 0) in matrix.memory_pairs

    def test_memory_ignores_other_fingerprints(self):
        src = make_schema(("a", ValueType.TEXT), ("zz", ValueType.INTEGER))
        tgt = make_schema(("qq", ValueType.TEXT), ("a", ValueType.INTEGER))
        memory = MappingMemory()
        memory.record("zz", "qq", "deadbeef")
        matrix = score_candidates(src, tgt, memory)
        assert matrix.combined[1, 0] < 0.95


def random_matrix(rng, n=6):
    scores = rng.random((n, n))
    names = [f"c{i}" for i in range(n)]
    return ScoreMatrix(names, names, scores, scores, scores, scores.copy())


class TestResolveMapping:
    def test_identity_full_mapping(self):
        schema = make_schema(("a", ValueType.TEXT), ("b", ValueType.INTEGER))
        mapping = resolve_mapping(score_candidates(schema, schema), 0.6)
        assert mapping.pairs() == [("a", "a"), ("b", "b")]
        assert not mapping.unmapped_source and not mapping.unmapped_target

    def test_all_below_threshold(self):
        names = ["a", "b"]
        scores = np.full((2, 2), 0.2)
        matrix = ScoreMatrix(names, names, scores, scores, scores, scores.copy())
        mapping = resolve_mapping(matrix, 0.6)
        assert not mapping.mappings
        assert mapping.unmapped_source == names and mapping.unmapped_target == names

    def test_tie_broken_by_ordinal_distance(self):
        # Two sources both 0.9 against one target; the pair with smaller
        # ordinal distance wins the greedy step.
        names_s = ["s0", "s1"]
        names_t = ["t0", "t1"]
        scores = np.array([[0.1, 0.9], [0.8, 0.9]])
        matrix = ScoreMatrix(names_s, names_t, scores, scores, scores, scores.copy())
        mapping = resolve_mapping(matrix, 0.5)
        assert ("s1", "t1") in mapping.pairs()  # distance 0 beats distance 1
        assert ("s0", "t0") not in mapping.pairs() or scores[0][0] >= 0.5

    def test_overrides_always_survive(self):
        names = ["a", "b"]
        scores = np.array([[0.1, 0.1], [0.1, 0.1]])
        matrix = ScoreMatrix(names, names, scores, scores, scores, scores.copy())
        mapping = resolve_mapping(matrix, 0.6, overrides=[("a", "b")])
        assert mapping.pairs() == [("a", "b")]
        assert mapping.mappings[0].origin is MappingOrigin.OVERRIDE

    def test_conflicting_overrides(self):
        schema = make_schema(("a", ValueType.TEXT), ("b", ValueType.TEXT))
        matrix = score_candidates(schema, schema)
        with pytest.raises(ConflictingOverrides):
            resolve_mapping(matrix, 0.6, overrides=[("a", "a"), ("b", "a")])

    def test_unknown_override_column(self):
        schema = make_schema(("a", ValueType.TEXT))
        matrix = score_candidates(schema, schema)
        with pytest.raises(UnknownColumn):
            resolve_mapping(matrix, 0.6, overrides=[("nope", "a")])

    def test_threshold_validation(self):
        schema = make_schema(("a", ValueType.TEXT))
        with pytest.raises(ValueError):
            resolve_mapping(score_candidates(schema, schema), 0.0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_injective_both_ways(self, seed):
        rng = np.random.default_rng(seed)
        mapping = resolve_mapping(random_matrix(rng, 5), 0.3)
        sources = [m.source_column for m in mapping.mappings]
        targets = [m.target_column for m in mapping.mappings]
        assert len(set(sources)) == len(sources)
        assert len(set(targets)) == len(targets)
        assert set(sources) | set(mapping.unmapped_source) == {f"c{i}" for i in range(5)}
        assert set(targets) | set(mapping.unmapped_target) == {f"c{i}" for i in range(5)}

    def test_greedy_near_optimal_on_random_6x6(self):
        # Empirical bound: greedy total >= 0.8 x exhaustive optimum.
        rng = np.random.default_rng(20240809)
        worst = 1.0
        for _ in range(300):
            matrix = random_matrix(rng, 6)
            mapping = resolve_mapping(matrix, 0.0001)
            greedy_total = sum(m.combined for m in mapping.mappings)
            optimal = best_assignment(matrix.combined.tolist())
            worst = min(worst, greedy_total / optimal)
        assert worst >= 0.8, f"worst greedy/optimal ratio {worst:.3f}"

    def test_memory_boost_keeps_unrelated_mappings(self):
        # Adding a correction never drops an existing above-threshold
        # mapping between unrelated columns (empirical over realistic
        # name-similarity matrices).
        rng = np.random.default_rng(7)
        pool = ["amount", "amnt", "customer", "cust", "region", "reg", "price", "cost", "qty", "quantity"]
        for _ in range(200):
            k = int(rng.integers(3, 6))
            names_s = list(rng.choice(pool, size=k, replace=False))
            names_t = list(rng.permutation(names_s))
            src = make_schema(*[(n, ValueType.TEXT) for n in names_s])
            tgt = make_schema(*[(n, ValueType.TEXT) for n in names_t])
            before = resolve_mapping(score_candidates(src, tgt), 0.6)
            boost_s = names_s[int(rng.integers(0, k))]
            boost_t = names_t[int(rng.integers(0, k))]
            memory = MappingMemory()
            memory.record(boost_s, boost_t, MappingMemory.fingerprint(src))
            after = resolve_mapping(score_candidates(src, tgt, memory), 0.6)
            after_pairs = set(after.pairs())
            for s, t in before.pairs():
                if s not in (boost_s,) and t not in (boost_t,):
                    assert (s, t) in after_pairs


class TestMappingMemory:
    def test_record_correction_counts(self, tmp_path):
        src = make_schema(("a", ValueType.TEXT), ("b", ValueType.TEXT))
        tgt = make_schema(("x", ValueType.TEXT), ("b", ValueType.TEXT))
        memory = MappingMemory()
        path = tmp_path / "memory" / "mappings.json"
        record_correction(memory, "a", "x", src, tgt, path)
        assert memory.entries[0].count == 1
        record_correction(memory, "a", "x", src, tgt, path)
        assert memory.entries[0].count == 2
        loaded = MappingMemory.load(path)
        assert loaded.entries[0].count == 2
        data = json.loads(path.read_text())
        assert isinstance(data, list) and data[0]["source"] == "a"

    def test_correction_feeds_scoring(self):
        src = make_schema(("a", ValueType.TEXT), ("b", ValueType.TEXT))
        tgt = make_schema(("x", ValueType.TEXT), ("b", ValueType.TEXT))
        memory = record_correction(MappingMemory(), "a", "x", src, tgt)
        matrix = score_candidates(src, tgt, memory)
        assert matrix.combined[0, 0] >= 0.95

    def test_unknown_column(self):
        src = make_schema(("a", ValueType.TEXT))
        with pytest.raises(UnknownColumn):
            record_correction(MappingMemory(), "zz", "a", src, src)

    def test_load_missing_file(self, tmp_path):
        assert MappingMemory.load(tmp_path / "none.json").entries == []


class TestMetadataDiff:
    def test_identical_schemas_empty(self):
        schema = make_schema(("a", ValueType.TEXT), ("b", ValueType.INTEGER))
        mapping = resolve_mapping(score_candidates(schema, schema), 0.6)
        assert metadata_diff(schema, schema, mapping).changes == []

    def test_type_change_ranked_before_rename(self):
        src = make_schema(("a", ValueType.TEXT), ("old_name", ValueType.TEXT))
        tgt = make_schema(("a", ValueType.INTEGER), ("new_name", ValueType.TEXT))
        mapping = resolve_mapping(score_candidates(src, tgt), 0.3)
        diff = metadata_diff(src, tgt, mapping)
        kinds = [c.kind for c in diff.changes]
        assert ChangeKind.TYPE_CHANGED in kinds and ChangeKind.COLUMN_RENAMED in kinds
        assert kinds.index(ChangeKind.TYPE_CHANGED) < kinds.index(ChangeKind.COLUMN_RENAMED)

    def test_added_column(self):
        src = make_schema(("a", ValueType.TEXT))
        tgt = make_schema(("a", ValueType.TEXT), ("notes", ValueType.TEXT))
        mapping = resolve_mapping(score_candidates(src, tgt), 0.6)
        diff = metadata_diff(src, tgt, mapping)
        assert [c.kind for c in diff.changes] == [ChangeKind.COLUMN_ADDED]
        assert diff.changes[0].subject == "notes"

    def test_removed_and_nullability(self):
        src = make_schema(("a", ValueType.TEXT), ("b", ValueType.TEXT), nullable={"a"})
        tgt = make_schema(("a", ValueType.TEXT))
        mapping = resolve_mapping(score_candidates(src, tgt), 0.6)
        diff = metadata_diff(src, tgt, mapping)
        kinds = {c.kind for c in diff.changes}
        assert ChangeKind.COLUMN_REMOVED in kinds and ChangeKind.NULLABILITY_CHANGED in kinds

    def test_key_changed(self):
        schema = make_schema(("a", ValueType.TEXT), ("b", ValueType.TEXT))
        mapping = resolve_mapping(score_candidates(schema, schema), 0.6)
        diff = metadata_diff(
            schema, schema, mapping, src_key=KeySpec.primary("a"), tgt_key=KeySpec.primary("b")
        )
        assert [c.kind for c in diff.changes] == [ChangeKind.KEY_CHANGED]
        assert diff.changes[0].impact_rank == 2

    def test_rank_values(self):
        assert ChangeKind.TYPE_CHANGED.rank == 1
        assert ChangeKind.KEY_CHANGED.rank == 2
        assert ChangeKind.COLUMN_REMOVED.rank == 3
        assert ChangeKind.COLUMN_ADDED.rank == 4
        assert ChangeKind.COLUMN_RENAMED.rank == 5
        assert ChangeKind.NULLABILITY_CHANGED.rank == 6

    @given(
        st.lists(
            st.sampled_from(["alpha", "beta", "gamma", "delta", "eps"]),
            min_size=1,
            max_size=5,
            unique=True,
        ),
        st.sampled_from([ValueType.TEXT, ValueType.INTEGER, ValueType.FLOAT]),
    )
    def test_self_diff_empty_for_any_schema(self, names, vtype):
        schema = make_schema(*[(n, vtype) for n in names])
        mapping = resolve_mapping(score_candidates(schema, schema), 0.6)
        assert metadata_diff(schema, schema, mapping).changes == []
