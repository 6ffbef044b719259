"""WER scoring, stratified reporting and sentence-level train/test splits.

WER uses minimal-edit alignment with unit costs; among minimal alignments
the breakdown prefers substitutions over insertion+deletion pairs. Corpus
figures are micro-averaged: error and token counts are pooled across
records before dividing, never averaged per utterance.

Text normalization (lowercase, punctuation stripped except intra-word
apostrophes and hyphens, whitespace collapsed) is versioned and stamped
into report headers so numbers stay comparable across runs.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    EmptyEvalSet,
    EmptyReference,
    MissingMetadata,
    ParseError,
    TooFewSentences,
)

NORMALIZATION_VERSION = "norm-v1"

_PUNCT = re.compile(r"[^\w\s'-]", re.UNICODE)


def normalize_text(text: str) -> tuple[str, ...]:
    """Lowercase, strip punctuation (keeping intra-word ' and -), split."""
    s = _PUNCT.sub(" ", text.lower()).replace("_", " ")
    toks = []
    for t in s.split():
        t = t.strip("'-")
        if t:
            toks.append(t)
    return tuple(toks)


@dataclass(frozen=True)
class EvalRecord:
    utterance_id: str
    reference: tuple[str, ...]
    hypothesis: tuple[str, ...]
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    ref_tokens: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_tokens

    def __add__(self, other: "WerBreakdown") -> "WerBreakdown":
        return WerBreakdown(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_tokens + other.ref_tokens,
        )


def wer(reference, hypothesis) -> WerBreakdown:
    """Minimal-edit breakdown; ties prefer substitutions over ins+del pairs."""
    ref = list(reference)
    hyp = list(hypothesis)
    if not ref:
        raise EmptyReference("reference is empty; filter such records upstream")
    n, m = len(ref), len(hyp)

    # dp cell packs (cost, ins+del) as cost * K + insdel so tuple-min becomes
    # integer-min; K bounds insdel from above
    k = n + m + 2
    prev = [j * k + j for j in range(m + 1)]  # first row: j insertions
    for i in range(1, n + 1):
        cur = [i * k + i] + [0] * m
        ri = ref[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if ri == hyp[j - 1] else k)
            up = prev[j] + k + 1
            left = cur[j - 1] + k + 1
            cur[j] = min(diag, up, left)
        prev = cur
    cost, insdel = divmod(prev[m], k)
    ins = (insdel + (m - n)) // 2
    dels = insdel - ins
    return WerBreakdown(cost - insdel, ins, dels, n)


def aggregate(records) -> WerBreakdown:
    """Micro-averaged breakdown over records (pooled counts, one division)."""
    total = WerBreakdown(0, 0, 0, 0)
    count = 0
    for rec in records:
        total = total + wer(rec.reference, rec.hypothesis)
        count += 1
    if count == 0:
        raise EmptyEvalSet("no records to aggregate")
    return total


@dataclass(frozen=True)
class GroupStats:
    breakdown: WerBreakdown
    n_records: int
    low_support: bool


DEFAULT_MIN_SUPPORT = 10


def stratified_report(records, key: str, min_support: int = DEFAULT_MIN_SUPPORT):
    """Per-group micro-averaged breakdowns, lexicographic group order."""
    groups: dict[str, list[EvalRecord]] = {}
    for rec in records:
        if key not in rec.metadata:
            raise MissingMetadata(rec.utterance_id, key)
        groups.setdefault(str(rec.metadata[key]), []).append(rec)
    if not groups:
        raise EmptyEvalSet("no records to stratify")
    out = {}
    for value in sorted(groups):
        recs = groups[value]
        out[value] = GroupStats(aggregate(recs), len(recs), len(recs) < min_support)
    return out


def grid_report(records, row_key: str, col_key: str, min_support: int = DEFAULT_MIN_SUPPORT):
    """Two-way stratification (e.g. region x model), lexicographic both ways."""
    cells: dict[str, dict[str, list[EvalRecord]]] = {}
    for rec in records:
        for key in (row_key, col_key):
            if key not in rec.metadata:
                raise MissingMetadata(rec.utterance_id, key)
        row = str(rec.metadata[row_key])
        col = str(rec.metadata[col_key])
        cells.setdefault(row, {}).setdefault(col, []).append(rec)
    if not cells:
        raise EmptyEvalSet("no records to stratify")
    out = {}
    for row in sorted(cells):
        out[row] = {}
        for col in sorted(cells[row]):
            recs = cells[row][col]
            out[row][col] = GroupStats(aggregate(recs), len(recs), len(recs) < min_support)
    return out


def split_by_sentence(rows, test_fraction: float, seed: int):
    """Partition unique normalized sentences, then assign rows by sentence.

    Returns (train_indices, test_indices) into `rows`; no sentence text ever
    lands on both sides, however many speakers repeat it. The test side gets
    ceil(test_fraction * unique_sentences) sentences.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    keys = [" ".join(normalize_text(row[0])) for row in rows]
    unique = sorted(set(keys))
    if len(unique) < 2:
        raise TooFewSentences(f"need at least 2 unique sentences, got {len(unique)}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(len(unique))
    n_test = math.ceil(test_fraction * len(unique))
    test_sentences = {unique[i] for i in order[:n_test]}
    train_idx, test_idx = [], []
    for i, key in enumerate(keys):
        (test_idx if key in test_sentences else train_idx).append(i)
    return train_idx, test_idx


# -- record / report io ----------------------------------------------------------

def read_records(source) -> list[EvalRecord]:
    """JSON-lines records: utterance_id, reference, hypothesis, metadata."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, str(exc)) from None
        missing = {"utterance_id", "reference", "hypothesis"} - set(doc)
        if missing:
            raise ParseError(line_no, f"record lacks keys {sorted(missing)}")
        out.append(
            EvalRecord(
                utterance_id=str(doc["utterance_id"]),
                reference=_tokens(doc["reference"]),
                hypothesis=_tokens(doc["hypothesis"]),
                metadata=dict(doc.get("metadata", {})),
            )
        )
    return out


def _tokens(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return normalize_text(value)
    return normalize_text(" ".join(str(v) for v in value))


def _stats_doc(stats: GroupStats) -> dict:
    b = stats.breakdown
    return {
        "S": b.substitutions,
        "I": b.insertions,
        "D": b.deletions,
        "N": b.ref_tokens,
        "wer": round(b.wer, 6),
        "records": stats.n_records,
        "low_support": stats.low_support,
    }


def report_json(groups, config_echo: list[str] | None = None) -> str:
    """Machine-readable report; groups is flat {value: GroupStats} or a grid."""
    body: dict = {"normalization": NORMALIZATION_VERSION}
    if config_echo:
        body["config"] = list(config_echo)
    first = next(iter(groups.values()))
    if isinstance(first, dict):
        body["grid"] = {
            row: {col: _stats_doc(st) for col, st in cols.items()}
            for row, cols in groups.items()
        }
    else:
        body["groups"] = {value: _stats_doc(st) for value, st in groups.items()}
    return json.dumps(body, indent=2, ensure_ascii=False, sort_keys=False)


def report_table(groups) -> str:
    """Aligned-column text report for a flat {value: GroupStats} mapping."""
    rows = [("group", "S", "I", "D", "N", "wer", "records", "flags")]
    for value, st in groups.items():
        b = st.breakdown
        rows.append(
            (
                value,
                str(b.substitutions),
                str(b.insertions),
                str(b.deletions),
                str(b.ref_tokens),
                f"{b.wer:.4f}",
                str(st.n_records),
                "low-support" if st.low_support else "",
            )
        )
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
