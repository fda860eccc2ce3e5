"""Multi-label, evidence-linked cluster explanations.

Pipeline per cluster: sample a pseudonymized evidence pack, retrieve local
knowledge passages, build a schema-constrained prompt, decode m candidates
at temperature 0, majority-aggregate, then run programmatic guards. Any
guard failure, transport failure, or unparseable output falls back to
deterministic template labeling, so every cluster always gets a judgment
and labels never leave the closed ontology.
"""

from __future__ import annotations

import hashlib
import json
import re
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import numpy as np

from .cluster import Cluster, StaticPattern, static_classify
from .datadiff import (
    CellDiff,
    DateTimeDelta,
    FloatDelta,
    IntDelta,
    JsonPatch,
    NullChange,
    StringEdit,
    TypeMismatch,
    featurize,
    rounding_signature,
)
from .errors import ClientUnavailable, NoValidCandidates

OTHER = "Other"
ONTOLOGY = (
    "Rounding",
    "Truncation",
    "TypeCast",
    "TimeZoneShift",
    "KeyMismatch",
    "CategoricalRemap",
    "NullInflation",
    "SchemaRename",
    "BusinessRuleChange",
    OTHER,
)

# Static pattern -> ontology label, for calibration and template labeling.
PATTERN_IMPLIED_LABELS = {
    "Rounding": "Rounding",
    "Truncation": "Truncation",
    "NullInflation": "NullInflation",
    "TimeZoneShift": "TimeZoneShift",
    "TypeMismatch": "TypeCast",
}

_CHECK_SUGGESTIONS = {
    "Rounding": "compare decimal precision settings between the two pipelines",
    "Truncation": "check column width limits in the target system",
    "TypeCast": "verify type conversion rules applied during load",
    "TimeZoneShift": "confirm session time zones on both systems",
    "NullInflation": "inspect join conditions and required-field handling",
    "CategoricalRemap": "review code tables and category mapping rules",
    "KeyMismatch": "validate key derivation between systems",
    "SchemaRename": "confirm column rename mappings",
    "BusinessRuleChange": "diff the transformation logic between releases",
    OTHER: "inspect representative samples by hand",
}

DEFAULT_K = 8
DEFAULT_M = 3
DEFAULT_TOKEN_BUDGET = 1200
_DISPLAY_CAP = 120
_MIN_TOKEN_BUDGET = 200


@dataclass(frozen=True)
class DiffLabel:
    name: str
    other_explanation: str | None = None

    def __post_init__(self):
        if self.name not in ONTOLOGY:
            raise ValueError(f"label {self.name!r} outside the ontology")
        if (self.name == OTHER) != (self.other_explanation is not None):
            raise ValueError("other_explanation is required exactly when name=Other")


@dataclass(frozen=True)
class EvidenceRow:
    row_id: str
    column: str
    source_display: str
    target_display: str
    detail_kind: str
    detail_info: dict


@dataclass
class EvidencePack:
    cluster_id: str
    rows: list[EvidenceRow]
    context: dict  # schema fragment, key columns, cluster statistics
    candidate_patterns: list[str]
    token_budget: int
    evidence_row_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.evidence_row_ids:
            self.evidence_row_ids = [r.row_id for r in self.rows]

    def serialize(self) -> str:
        lines = [f"cluster: {self.cluster_id}"]
        stats = self.context.get("stats", {})
        for k in sorted(stats):
            lines.append(f"{k}: {stats[k]}")
        cols = self.context.get("columns", {})
        if cols:
            frag = ", ".join(f"`{n}`:{t}" for n, t in sorted(cols.items()))
            lines.append(f"columns: {frag}")
        keys = self.context.get("key_columns", [])
        if keys:
            lines.append("key columns: " + ", ".join(f"`{k}`" for k in keys))
        lines.append(
            "candidate_patterns: " + (", ".join(self.candidate_patterns) or "none")
        )
        lines.append("evidence:")
        for r in self.rows:
            info = " ".join(f"{k}={json.dumps(v)}" for k, v in sorted(r.detail_info.items()))
            lines.append(
                f'- id={r.row_id} column=`{r.column}` kind={r.detail_kind} '
                f'source={json.dumps(r.source_display)} target={json.dumps(r.target_display)}'
                + (f" {info}" if info else "")
            )
        return "\n".join(lines)

    def token_count(self) -> int:
        return len(self.serialize().split())


@dataclass(frozen=True)
class KnowledgeSnippet:
    doc_id: str
    text: str
    score: float


@dataclass(frozen=True)
class LabelJudgment:
    labels: tuple[DiffLabel, ...]
    rationale: str
    confidence: float
    evidence_row_ids: tuple[str, ...]
    recommended_checks: tuple[str, ...]
    origin: str  # model | template

    def label_names(self) -> list[str]:
        return [l.name for l in self.labels]


class GuardFailure(Enum):
    WHITELIST_VIOLATION = "WhitelistViolation"
    UNKNOWN_COLUMN_REFERENCE = "UnknownColumnReference"
    UNSUPPORTED_CLAIM = "UnsupportedClaim"
    MALFORMED_OUTPUT = "MalformedOutput"
    EVIDENCE_ID_UNKNOWN = "EvidenceIdUnknown"


@dataclass(frozen=True)
class GuardReport:
    passed: bool
    failures: tuple[GuardFailure, ...]

    @staticmethod
    def ok() -> "GuardReport":
        return GuardReport(True, ())

    @staticmethod
    def failed(*failures: GuardFailure) -> "GuardReport":
        return GuardReport(False, tuple(failures))


class LabelerClient(Protocol):
    """Completion transport; must be pure with respect to (prompt, schema)."""

    def complete(self, prompt: str, output_schema: dict, temperature: float = 0.0) -> str:
        ...


@dataclass
class Candidate:
    """A parsed model completion, before whitelist/guard validation."""

    labels: tuple[str, ...]
    rationale: str
    confidence: float
    evidence_row_ids: tuple[str, ...]
    recommended_checks: tuple[str, ...]
    other_explanation: str | None = None


# --- pseudonymization ----------------------------------------------------

_LOWER = "abcdefghijklmnopqrstuvwxyz"
_UPPER = _LOWER.upper()
_DIGITS = "0123456789"


def pseudonymize(value: str, salt: bytes) -> str:
    """Class-preserving masking: letters map to letters, digits to digits.

    The mapping depends on (salt, position, char) and never maps a
    character to itself, so no raw substring survives into a prompt.
    """
    out = []
    for i, ch in enumerate(value):
        if ch in _LOWER:
            alphabet = _LOWER
        elif ch in _UPPER:
            alphabet = _UPPER
        elif ch in _DIGITS:
            alphabet = _DIGITS
        else:
            out.append(ch)
            continue
        h = hashlib.blake2b(f"{i}|{ch}".encode(), key=salt[:64], digest_size=4)
        offset = 1 + int.from_bytes(h.digest(), "big") % (len(alphabet) - 1)
        out.append(alphabet[(alphabet.index(ch) + offset) % len(alphabet)])
    return "".join(out)


def _display(value: str, salt: bytes) -> str:
    masked = pseudonymize(value, salt)
    if len(masked) > _DISPLAY_CAP:
        half = _DISPLAY_CAP // 2 - 1
        masked = masked[:half] + "…" + masked[-half:]
    return masked


def _row_id(diff: CellDiff, salt: bytes) -> str:
    h = hashlib.blake2b(digest_size=5, key=salt[:64])
    h.update(diff.key.encoded().encode("utf-8"))
    h.update(b"|")
    h.update(diff.column.encode("utf-8"))
    return h.hexdigest()


def _detail_info(diff: CellDiff) -> dict:
    d = diff.detail
    if isinstance(d, FloatDelta):
        return {
            "numeric": True,
            "rounding_decimals": d.rounding_decimals,
            "rel_delta": float(f"{d.rel_delta:.6g}"),
        }
    if isinstance(d, IntDelta):
        return {"numeric": True, "delta": d.delta, "digit_pattern": d.digit_pattern}
    if isinstance(d, StringEdit):
        info: dict = {"distance": d.distance, "pattern": d.pattern}
        fa, fb = _try_float(diff.source_value.raw), _try_float(diff.target_value.raw)
        if fa is not None and fb is not None:
            info["numeric"] = True
            info["rounding_decimals"] = rounding_signature(fa, fb) if fa != fb else None
        return info
    if isinstance(d, DateTimeDelta):
        return {"offset_minutes": d.offset_minutes, "components": d.components()}
    if isinstance(d, NullChange):
        return {"direction": d.direction}
    if isinstance(d, JsonPatch):
        return {
            "added_paths": list(d.added_paths),
            "removed_paths": list(d.removed_paths),
            "changed_paths": list(d.changed_paths),
        }
    if isinstance(d, TypeMismatch):
        return {"source_type": d.source_type.value, "target_type": d.target_type.value}
    return {}


def _try_float(raw: str) -> float | None:
    try:
        return float(raw)
    except ValueError:
        return None


def sample_evidence(
    cluster: Cluster,
    diffs: list[CellDiff],
    k: int = DEFAULT_K,
    salt: bytes = b"",
    token_budget: int = DEFAULT_TOKEN_BUDGET,
    schema_types: dict[str, str] | None = None,
    key_columns: list[str] | None = None,
) -> EvidencePack:
    """Select up to k members maximizing pairwise feature distance.

    The first pick is the canonical-order first member; every subsequent
    pick maximizes the minimum distance to the already-selected set.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if token_budget < _MIN_TOKEN_BUDGET:
        raise ValueError(f"token_budget must be >= {_MIN_TOKEN_BUDGET}")
    if not diffs:
        raise ValueError("cannot sample evidence from an empty cluster")
    k = min(k, len(diffs))
    if k == len(diffs):
        chosen = list(range(len(diffs)))
    else:
        vectors = np.stack([featurize(d) for d in diffs])
        chosen = [0]
        min_dist = np.linalg.norm(vectors - vectors[0], axis=1)
        min_dist[0] = -1.0
        while len(chosen) < k:
            nxt = int(np.argmax(min_dist))  # ties resolve to canonical order
            chosen.append(nxt)
            d = np.linalg.norm(vectors - vectors[nxt], axis=1)
            min_dist = np.minimum(min_dist, d)
            min_dist[nxt] = -1.0
        chosen.sort()

    rows = [
        EvidenceRow(
            _row_id(diffs[i], salt),
            diffs[i].column,
            _display(diffs[i].source_value.raw, salt),
            _display(diffs[i].target_value.raw, salt),
            diffs[i].detail.kind,
            _detail_info(diffs[i]),
        )
        for i in chosen
    ]
    patterns = sorted({p.value for d in diffs for p in static_classify(d)})
    columns = {
        c: (schema_types or {}).get(c, "unknown") for c in cluster.columns
    }
    context = {
        "columns": columns,
        "key_columns": list(key_columns or []),
        "stats": {
            "member_count": cluster.member_count,
            "purity": round(cluster.purity, 6),
            "entropy": round(cluster.entropy, 6),
        },
    }
    pack = EvidencePack(cluster.id, rows, context, patterns, token_budget)
    # Trim context sections (never evidence rows) until the pack fits.
    for section in ("stats", "key_columns", "columns"):
        if pack.token_count() <= token_budget:
            break
        pack.context = {k2: v for k2, v in pack.context.items() if k2 != section}
    return pack


# --- retrieval ------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


@dataclass(frozen=True)
class _Passage:
    doc_id: str
    order: int
    text: str
    tokens: frozenset


class KnowledgeIndex:
    """Paragraph-level index over a directory of .txt/.md files."""

    def __init__(self, passages: list[_Passage]):
        self.passages = passages

    @staticmethod
    def load(directory: str | Path | None) -> "KnowledgeIndex":
        passages: list[_Passage] = []
        if directory is not None:
            root = Path(directory)
            if root.is_dir():
                for path in sorted(root.glob("*")):
                    if path.suffix.lower() not in (".txt", ".md"):
                        continue
                    text = path.read_text(encoding="utf-8")
                    for order, para in enumerate(p.strip() for p in text.split("\n\n")):
                        if para:
                            passages.append(
                                _Passage(path.name, order, para, frozenset(_tokens(para)))
                            )
        return KnowledgeIndex(passages)


def retrieve_context(
    index: KnowledgeIndex, columns: list[str], patterns: list[str], top: int = 3
) -> list[KnowledgeSnippet]:
    query: set[str] = set()
    for name in list(columns) + list(patterns):
        query |= _tokens(name)
    scored = []
    for p in index.passages:
        score = len(p.tokens & query)
        if score > 0:
            scored.append((-score, p.doc_id, p.order, p))
    scored.sort()
    return [KnowledgeSnippet(p.doc_id, p.text, float(-neg)) for neg, _, _, p in scored[:top]]


# --- prompting and decoding ----------------------------------------------


def build_prompt(
    pack: EvidencePack,
    snippets: list[KnowledgeSnippet],
    ontology: tuple[str, ...] = ONTOLOGY,
) -> tuple[str, dict]:
    allowed = sorted(n for n in ontology if n != OTHER) + [OTHER]
    schema = {
        "type": "object",
        "properties": {
            "labels": {"type": "array", "minItems": 1, "items": {"enum": allowed}},
            "rationale": {"type": "string"},
            "confidence": {"type": "number", "minimum": 0, "maximum": 1},
            "evidence_row_ids": {"type": "array", "items": {"type": "string"}},
            "recommended_checks": {"type": "array", "items": {"type": "string"}},
            "other_explanation": {"type": "string"},
        },
        "required": [
            "labels",
            "rationale",
            "confidence",
            "evidence_row_ids",
            "recommended_checks",
        ],
    }
    sections = [
        "== TASK ==",
        "You label one cluster of data differences between a source and a target dataset.",
        "Pick every label that applies from: " + ", ".join(allowed) + ".",
        "If you use Other, include other_explanation.",
        "Wrap any column name you mention in backticks.",
        "Answer with one JSON object matching this schema:",
        json.dumps(schema, sort_keys=True),
    ]
    if snippets:
        sections.append("== CONTEXT ==")
        for s in snippets:
            sections.append(f"[{s.doc_id}] {s.text}")
    sections.append("== EVIDENCE ==")
    sections.append(pack.serialize())
    return "\n".join(sections), schema


def _rotated(pack: EvidencePack, offset: int) -> EvidencePack:
    if offset == 0 or len(pack.rows) < 2:
        return pack
    rows = pack.rows[offset:] + pack.rows[:offset]
    return EvidencePack(
        pack.cluster_id,
        rows,
        pack.context,
        pack.candidate_patterns,
        pack.token_budget,
        list(pack.evidence_row_ids),
    )


def parse_candidate(text: str) -> Candidate | None:
    try:
        data = json.loads(text)
    except (ValueError, RecursionError):
        return None
    if not isinstance(data, dict):
        return None
    labels = data.get("labels")
    rationale = data.get("rationale")
    confidence = data.get("confidence")
    row_ids = data.get("evidence_row_ids")
    checks = data.get("recommended_checks")
    if (
        not isinstance(labels, list)
        or not labels
        or not all(isinstance(l, str) for l in labels)
        or not isinstance(rationale, str)
        or not isinstance(confidence, (int, float))
        or isinstance(confidence, bool)
        or not 0.0 <= float(confidence) <= 1.0
        or not isinstance(row_ids, list)
        or not all(isinstance(r, str) for r in row_ids)
        or not isinstance(checks, list)
        or not all(isinstance(c, str) for c in checks)
    ):
        return None
    other = data.get("other_explanation")
    if other is not None and not isinstance(other, str):
        return None
    return Candidate(
        tuple(dict.fromkeys(labels)),
        rationale,
        float(confidence),
        tuple(row_ids),
        tuple(checks),
        other,
    )


def decode_labels(
    client: LabelerClient,
    pack: EvidencePack,
    snippets: list[KnowledgeSnippet],
    ontology: tuple[str, ...],
    m: int = DEFAULT_M,
) -> tuple[list[Candidate], int]:
    """Request m completions over rotated evidence striations.

    Returns parsed candidates plus the count of malformed completions.
    Transport failures raise ClientUnavailable for the caller to handle.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    candidates: list[Candidate] = []
    malformed = 0
    stride = max(1, len(pack.rows) // 2)
    for i in range(m):
        offset = (i * stride) % max(1, len(pack.rows))
        prompt, schema = build_prompt(_rotated(pack, offset), snippets, ontology)
        try:
            text = client.complete(prompt, schema, 0.0)
        except ClientUnavailable:
            raise
        except Exception as exc:
            raise ClientUnavailable(str(exc)) from exc
        cand = parse_candidate(text)
        if cand is None:
            malformed += 1
        else:
            candidates.append(cand)
    return candidates, malformed


def aggregate_judgments(candidates: list[Candidate], m: int | None = None) -> Candidate:
    """Majority vote over labels; fall back to the top-confidence candidate.

    Confidence = mean confidence of the supporting candidates times the
    agreement ratio (supporters / m).
    """
    if not candidates:
        raise NoValidCandidates("no parseable candidates")
    if m is None:
        m = len(candidates)
    counts: dict[str, int] = {}
    for c in candidates:
        for l in set(c.labels):
            counts[l] = counts.get(l, 0) + 1
    kept = sorted(l for l, n in counts.items() if n * 2 > m)
    if not kept:
        best = max(candidates, key=lambda c: c.confidence)
        kept = sorted(set(best.labels))
    kept_set = set(kept)
    supporters = [c for c in candidates if kept_set <= set(c.labels)]
    if not supporters:
        supporters = [c for c in candidates if kept_set & set(c.labels)]
    donor = max(supporters, key=lambda c: c.confidence)
    confidence = (sum(c.confidence for c in supporters) / len(supporters)) * (
        len(supporters) / m
    )
    return Candidate(
        tuple(kept),
        donor.rationale,
        confidence,
        donor.evidence_row_ids,
        donor.recommended_checks,
        donor.other_explanation,
    )


def calibrate_confidence(
    aggregated_confidence: float,
    labels: list[str],
    patterns: list[str],
    purity: float,
) -> float:
    implied = {PATTERN_IMPLIED_LABELS[p] for p in patterns if p in PATTERN_IMPLIED_LABELS}
    agreement = len(set(labels) & implied) / len(labels) if labels else 0.0
    return 0.5 * aggregated_confidence + 0.3 * agreement + 0.2 * purity


_BACKTICK_RE = re.compile(r"`([^`]+)`")


def passes_guards(candidate: Candidate, pack: EvidencePack) -> GuardReport:
    """All checks must pass: whitelist, column references, claim support,
    and known evidence ids."""
    failures: list[GuardFailure] = []
    labels = set(candidate.labels)
    if not labels <= set(ONTOLOGY):
        failures.append(GuardFailure.WHITELIST_VIOLATION)
    if OTHER in labels and not candidate.other_explanation:
        failures.append(GuardFailure.MALFORMED_OUTPUT)

    known_columns = set(pack.context.get("columns", {})) | set(
        pack.context.get("key_columns", [])
    )
    for token in _BACKTICK_RE.findall(candidate.rationale):
        if token not in known_columns:
            failures.append(GuardFailure.UNKNOWN_COLUMN_REFERENCE)
            break

    if "Rounding" in labels:
        numeric = [r for r in pack.rows if r.detail_info.get("numeric")]
        signatures = [
            r.detail_info.get("rounding_decimals")
            for r in numeric
            if r.detail_info.get("rounding_decimals") is not None
        ]
        share = 0.0
        if numeric and signatures:
            top = max(signatures.count(s) for s in set(signatures))
            share = top / len(numeric)
        if share < 0.9:
            failures.append(GuardFailure.UNSUPPORTED_CLAIM)
    if "TimeZoneShift" in labels:
        offsets = [
            r.detail_info.get("offset_minutes")
            for r in pack.rows
            if r.detail_kind == "datetime_delta"
        ]
        if not offsets or None in offsets or len(set(offsets)) != 1:
            failures.append(GuardFailure.UNSUPPORTED_CLAIM)
    if "NullInflation" in labels:
        if not any(r.detail_info.get("direction") == "became_null" for r in pack.rows):
            failures.append(GuardFailure.UNSUPPORTED_CLAIM)

    if not set(candidate.evidence_row_ids) <= set(pack.evidence_row_ids):
        failures.append(GuardFailure.EVIDENCE_ID_UNKNOWN)
    return GuardReport(not failures, tuple(failures))


def template_label(cluster: Cluster, patterns: list[str]) -> LabelJudgment:
    """Deterministic no-model labeling from the implied-label map."""
    implied = sorted({PATTERN_IMPLIED_LABELS[p] for p in patterns if p in PATTERN_IMPLIED_LABELS})
    if implied:
        labels = tuple(DiffLabel(n) for n in implied)
    else:
        labels = (DiffLabel(OTHER, f"unclassified cluster {cluster.id}"),)
    columns = ", ".join(f"`{c}`" for c in cluster.columns)
    names = [l.name for l in labels]
    rationale = (
        f"{cluster.member_count} differences in columns {columns} "
        f"matched patterns [{', '.join(patterns) or 'none'}]; "
        f"template labels: {', '.join(names)}."
    )
    checks = tuple(_CHECK_SUGGESTIONS[n] for n in names)
    return LabelJudgment(
        labels,
        rationale,
        0.4 + 0.4 * cluster.purity,
        (),
        checks,
        "template",
    )


def _finalize_model_judgment(
    candidate: Candidate, confidence: float
) -> LabelJudgment:
    labels = tuple(
        DiffLabel(n, candidate.other_explanation if n == OTHER else None)
        for n in candidate.labels
    )
    return LabelJudgment(
        labels,
        candidate.rationale,
        confidence,
        tuple(candidate.evidence_row_ids),
        tuple(candidate.recommended_checks),
        "model",
    )


@dataclass
class LabelingConfig:
    enabled: bool = True
    k: int = DEFAULT_K
    m: int = DEFAULT_M
    token_budget: int = DEFAULT_TOKEN_BUDGET
    salt: bytes = b"diffscope"


def cluster_patterns(diffs: list[CellDiff]) -> list[str]:
    return sorted({p.value for d in diffs for p in static_classify(d)})


def label_cluster(
    cluster: Cluster,
    diffs: list[CellDiff],
    config: LabelingConfig,
    client: LabelerClient | None,
    index: KnowledgeIndex | None = None,
    schema_types: dict[str, str] | None = None,
    key_columns: list[str] | None = None,
) -> LabelJudgment:
    """Total labeling function: model path when possible, template otherwise."""
    patterns = cluster_patterns(diffs)
    judgment: LabelJudgment | None = None
    if config.enabled and client is not None:
        try:
            pack = sample_evidence(
                cluster,
                diffs,
                config.k,
                config.salt,
                config.token_budget,
                schema_types,
                key_columns,
            )
            snippets = retrieve_context(
                index or KnowledgeIndex([]), list(cluster.columns), patterns
            )
            candidates, _malformed = decode_labels(client, pack, snippets, ONTOLOGY, config.m)
            aggregated = aggregate_judgments(candidates, config.m)
            if passes_guards(aggregated, pack).passed:
                confidence = calibrate_confidence(
                    aggregated.confidence, list(aggregated.labels), patterns, cluster.purity
                )
                judgment = _finalize_model_judgment(aggregated, confidence)
        except (ClientUnavailable, NoValidCandidates, ValueError):
            judgment = None
    if judgment is None:
        base = template_label(cluster, patterns)
        confidence = calibrate_confidence(
            base.confidence, base.label_names(), patterns, cluster.purity
        )
        judgment = LabelJudgment(
            base.labels,
            base.rationale,
            confidence,
            base.evidence_row_ids,
            base.recommended_checks,
            "template",
        )
    return judgment


# --- clients ---------------------------------------------------------------


class HttpLabelerClient:
    """POSTs {prompt, schema, temperature} as JSON; expects {"text": ...}."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def complete(self, prompt: str, output_schema: dict, temperature: float = 0.0) -> str:
        body = json.dumps(
            {"prompt": prompt, "schema": output_schema, "temperature": temperature}
        ).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except Exception as exc:
            raise ClientUnavailable(f"labeler at {self.url}: {exc}") from exc
        if not isinstance(payload, dict) or "text" not in payload:
            raise ClientUnavailable("labeler response missing 'text'")
        return str(payload["text"])


_EVIDENCE_LINE_RE = re.compile(
    r"^- id=(?P<id>\S+) column=`(?P<col>[^`]*)` kind=(?P<kind>\S+) "
    r"source=(?P<src>\".*?\") target=(?P<tgt>\".*?\")(?: (?P<rest>.*))?$"
)


class MockLabelerClient:
    """Deterministic offline labeler driven by the prompt itself.

    Emits the labels implied by the candidate patterns; for pattern-free
    clusters it recognizes a consistent value remap (few distinct
    source/target pairs repeated across rows) and otherwise answers Other.
    """

    def complete(self, prompt: str, output_schema: dict, temperature: float = 0.0) -> str:
        patterns: list[str] = []
        columns: list[str] = []
        rows = []
        for line in prompt.splitlines():
            if line.startswith("candidate_patterns: "):
                rest = line[len("candidate_patterns: "):]
                patterns = [] if rest == "none" else [p.strip() for p in rest.split(",")]
            elif line.startswith("columns: "):
                columns = _BACKTICK_RE.findall(line)
            else:
                m = _EVIDENCE_LINE_RE.match(line)
                if m:
                    rows.append(m.groupdict())

        implied = sorted(
            {PATTERN_IMPLIED_LABELS[p] for p in patterns if p in PATTERN_IMPLIED_LABELS}
        )
        other_explanation = None
        if implied:
            labels = implied
            confidence = 0.9
        else:
            pairs = {(r["src"], r["tgt"]) for r in rows}
            all_strings = bool(rows) and all(r["kind"] == "string_edit" for r in rows)
            if all_strings and len(pairs) < len(rows):
                labels = ["CategoricalRemap"]
                confidence = 0.85
            else:
                labels = [OTHER]
                other_explanation = "no recurring pattern identified in the evidence"
                confidence = 0.6
        cols_text = ", ".join(f"`{c}`" for c in columns) or "the affected columns"
        payload = {
            "labels": labels,
            "rationale": f"Evidence rows in {cols_text} are consistent with: "
            + ", ".join(labels)
            + ".",
            "confidence": confidence,
            "evidence_row_ids": [r["id"] for r in rows],
            "recommended_checks": [_CHECK_SUGGESTIONS[l] for l in labels],
        }
        if other_explanation is not None:
            payload["other_explanation"] = other_explanation
        return json.dumps(payload, sort_keys=True)
