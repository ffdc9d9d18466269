"""Rule-based detectors for recurring ASR failure modes on code speech.

Every detector reads the word-level alignment between a reference and a
transcript. Mismatched stretches are grouped into maximal regions, then
classified: identifier splits and merges by rejoining the pieces, phonetic
drift and identifier recall failures by feature-weighted phonetic distance,
keyword ambiguity by keyword/function-word list membership, and symbol loss
by spoken operator phrases (or literal symbols) that never reach the
transcript.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from .metrics import align, tokenize
from .phonetics import ArticulatoryFeatureTable, default_feature_table, default_g2p, phonemize, segment_distance
from .resources import data_path
from .verbalizer import SymbolLexicon, classify_token, default_symbol_lexicon

log = logging.getLogger(__name__)

TAG_KINDS = (
    "phonetic_drift",
    "identifier_split",
    "identifier_merge",
    "keyword_ambiguity",
    "symbol_loss",
    "identifier_recall_failure",
)

# per-pair WFED bands; calibration constants, overridable per call
DRIFT_THRESHOLD = 0.3
RECALL_FAILURE_THRESHOLD = 0.5


@dataclass(frozen=True)
class TaxonomyTag:
    kind: str
    ref_span: tuple[int, int]  # half-open token range in the reference
    hyp_span: tuple[int, int]
    evidence: str

    def __post_init__(self):
        if self.kind not in TAG_KINDS:
            raise ValueError(f"unknown tag kind {self.kind!r}")

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ref_span": list(self.ref_span),
            "hyp_span": list(self.hyp_span),
            "evidence": self.evidence,
        }


@lru_cache(maxsize=None)
def _word_list(kind: str, name: str) -> frozenset[str]:
    path = data_path(kind, f"{name}.txt")
    return frozenset(
        line.strip() for line in path.read_text(encoding="utf-8").splitlines() if line.strip()
    )


def programming_keywords(langs: tuple[str, ...] = ("python", "java", "php")) -> frozenset[str]:
    words: set[str] = set()
    for lang in langs:
        words |= _word_list("keywords", lang)
    return frozenset(words)


def function_words(langs: tuple[str, ...] = ("en", "hi", "gu", "ta", "bn")) -> frozenset[str]:
    words: set[str] = set()
    for lang in langs:
        words |= _word_list("function_words", lang)
    return frozenset(words)


def _norm_join(tokens) -> str:
    return "".join(ch for ch in "".join(tokens).lower() if ch.isalnum())


def detect_tags(
    ref: str,
    hyp: str,
    symbol_lexicon: Optional[SymbolLexicon] = None,
    table: Optional[ArticulatoryFeatureTable] = None,
    adapter=None,
    lang: str = "en",
    drift_threshold: float = DRIFT_THRESHOLD,
    recall_threshold: float = RECALL_FAILURE_THRESHOLD,
    keywords: Optional[frozenset[str]] = None,
    func_words: Optional[frozenset[str]] = None,
) -> list[TaxonomyTag]:
    """Tag one reference/transcript pair; empty list when nothing fires.

    Identical texts produce no tags by construction: detectors only inspect
    non-match stretches of the alignment.
    """
    symbol_lexicon = symbol_lexicon or default_symbol_lexicon()
    table = table or default_feature_table()
    adapter = adapter or default_g2p()
    keywords = keywords if keywords is not None else programming_keywords()
    func_words = func_words if func_words is not None else function_words()

    ref_tokens = tokenize(ref, symbol_lexicon, lowercase=False)
    hyp_tokens = tokenize(hyp, symbol_lexicon, lowercase=False)
    result = align(
        ref_tokens,
        hyp_tokens,
        sub_cost=lambda a, b: 0.0 if a.lower() == b.lower() else 1.0,
    )

    tags: list[TaxonomyTag] = []
    tags.extend(_detect_symbol_loss(ref_tokens, hyp_tokens, result.op_trace, symbol_lexicon))
    for region in _mismatch_regions(result.op_trace):
        tags.extend(
            _classify_region(
                region,
                ref_tokens,
                hyp_tokens,
                table,
                adapter,
                lang,
                drift_threshold,
                recall_threshold,
                keywords,
                func_words,
            )
        )
    tags.sort(key=lambda t: (t.ref_span, t.hyp_span, t.kind))
    return tags


def _mismatch_regions(op_trace):
    """Maximal runs of non-match ops as (ref_start, ref_end, hyp_start, hyp_end)."""
    regions = []
    current = None
    ref_pos = hyp_pos = 0
    for kind, ref_idx, hyp_idx in op_trace:
        if kind == "match":
            if current:
                regions.append(tuple(current))
                current = None
            ref_pos, hyp_pos = ref_idx + 1, hyp_idx + 1
            continue
        ref_lo = ref_idx if ref_idx is not None else ref_pos
        ref_hi = ref_idx + 1 if ref_idx is not None else ref_pos
        hyp_lo = hyp_idx if hyp_idx is not None else hyp_pos
        hyp_hi = hyp_idx + 1 if hyp_idx is not None else hyp_pos
        if current is None:
            current = [ref_lo, ref_hi, hyp_lo, hyp_hi]
        else:
            current[0] = min(current[0], ref_lo)
            current[1] = max(current[1], ref_hi)
            current[2] = min(current[2], hyp_lo)
            current[3] = max(current[3], hyp_hi)
        if ref_idx is not None:
            ref_pos = ref_idx + 1
        if hyp_idx is not None:
            hyp_pos = hyp_idx + 1
    if current:
        regions.append(tuple(current))
    return regions


def _region_wfed(ref_tokens, hyp_tokens, table, adapter, lang) -> float:
    """Feature-weighted cost of a mismatch region over its reference phones."""
    ref_seq = phonemize(" ".join(ref_tokens), lang, adapter).segments
    hyp_seq = phonemize(" ".join(hyp_tokens), lang, adapter).segments
    if not ref_seq:
        return float("inf")
    result = align(ref_seq, hyp_seq, sub_cost=lambda a, b: segment_distance(a, b, table))
    return result.cost / len(ref_seq)


def _classify_region(
    region,
    ref_tokens,
    hyp_tokens,
    table,
    adapter,
    lang,
    drift_threshold,
    recall_threshold,
    keywords,
    func_words,
):
    ref_lo, ref_hi, hyp_lo, hyp_hi = region
    ref_part = ref_tokens[ref_lo:ref_hi]
    hyp_part = hyp_tokens[hyp_lo:hyp_hi]
    ref_span, hyp_span = (ref_lo, ref_hi), (hyp_lo, hyp_hi)
    if not ref_part or not hyp_part:
        return []  # pure insertion/deletion stretch; symbol loss handles drops

    code_class = classify_token(ref_part[0]) != "plain" if len(ref_part) == 1 else False

    # split: one code-class reference token scattered over several words
    if len(ref_part) == 1 and len(hyp_part) >= 2 and code_class:
        if _norm_join(ref_part) == _norm_join(hyp_part) or _region_wfed(
            ref_part, hyp_part, table, adapter, lang
        ) <= recall_threshold:
            return [
                TaxonomyTag(
                    "identifier_split",
                    ref_span,
                    hyp_span,
                    f"{ref_part[0]!r} split into {hyp_part!r}",
                )
            ]

    # merge: several reference words fused into one token
    if len(ref_part) >= 2 and len(hyp_part) == 1:
        if _norm_join(ref_part) == _norm_join(hyp_part):
            return [
                TaxonomyTag(
                    "identifier_merge",
                    ref_span,
                    hyp_span,
                    f"{ref_part!r} merged into {hyp_part[0]!r}",
                )
            ]

    # keyword ambiguity: a reserved word replaced by a function word
    if len(ref_part) == 1 and len(hyp_part) == 1:
        if ref_part[0].lower() in keywords and hyp_part[0].lower() in func_words:
            return [
                TaxonomyTag(
                    "keyword_ambiguity",
                    ref_span,
                    hyp_span,
                    f"keyword {ref_part[0]!r} heard as function word {hyp_part[0]!r}",
                )
            ]

    distance = _region_wfed(ref_part, hyp_part, table, adapter, lang)
    if distance <= drift_threshold:
        return [
            TaxonomyTag(
                "phonetic_drift",
                ref_span,
                hyp_span,
                f"{' '.join(ref_part)!r} vs {' '.join(hyp_part)!r} wfed={distance:.3f}",
            )
        ]
    if code_class and distance > recall_threshold:
        return [
            TaxonomyTag(
                "identifier_recall_failure",
                ref_span,
                hyp_span,
                f"code token {ref_part[0]!r} replaced by unrelated {' '.join(hyp_part)!r} wfed={distance:.3f}",
            )
        ]
    return []


def _detect_symbol_loss(ref_tokens, hyp_tokens, op_trace, lexicon):
    """Spoken operator phrases (or literal symbols) in the reference with no
    counterpart anywhere near their aligned position in the transcript."""
    matched_ref = {ref_idx for kind, ref_idx, _ in op_trace if kind == "match"}
    hyp_lower = [t.lower() for t in hyp_tokens]
    hyp_text = " ".join(hyp_lower)
    tags = []

    lowered = [t.lower() for t in ref_tokens]
    i = 0
    while i < len(ref_tokens):
        hit = None
        for phrase in lexicon.spoken_phrases:
            if tuple(lowered[i : i + len(phrase)]) == phrase:
                hit = phrase
                break
        if hit is None:
            i += 1
            continue
        span = range(i, i + len(hit))
        if all(pos not in matched_ref for pos in span) and f" {' '.join(hit)} " not in f" {hyp_text} ":
            literal = lexicon.phrase_map[hit]
            tags.append(
                TaxonomyTag(
                    "symbol_loss",
                    (i, i + len(hit)),
                    _aligned_hyp_window(op_trace, i, i + len(hit)),
                    f"spoken operator {' '.join(hit)!r} ({literal}) absent from transcript",
                )
            )
        i += len(hit)

    # written-form references: a literal inside an unmatched token that the
    # transcript reproduces neither literally nor as its spoken phrase
    for idx, token in enumerate(ref_tokens):
        if idx in matched_ref:
            continue
        for literal in lexicon.literals:
            if literal in token and not token.isalnum():
                phrase = lexicon.phrase_for(literal)
                window = _aligned_hyp_window(op_trace, idx, idx + 1)
                hyp_window = " ".join(hyp_lower[window[0] : window[1]])
                if literal not in hyp_window and f" {phrase} " not in f" {hyp_text} ":
                    tags.append(
                        TaxonomyTag(
                            "symbol_loss",
                            (idx, idx + 1),
                            window,
                            f"symbol {literal!r} of {token!r} lost in transcription",
                        )
                    )
                break
    return tags


def _aligned_hyp_window(op_trace, ref_lo, ref_hi) -> tuple[int, int]:
    """Hypothesis token range aligned with the given reference range."""
    lo, hi = None, None
    last_before = 0
    for kind, ref_idx, hyp_idx in op_trace:
        if hyp_idx is None:
            continue
        if ref_idx is not None and ref_idx < ref_lo:
            last_before = hyp_idx + 1
        involved = (ref_idx is not None and ref_lo <= ref_idx < ref_hi) or (
            ref_idx is None and lo is not None
        )
        if involved:
            lo = hyp_idx if lo is None else min(lo, hyp_idx)
            hi = hyp_idx + 1 if hi is None else max(hi, hyp_idx + 1)
        if ref_idx is not None and ref_idx >= ref_hi:
            break
    if lo is None:
        return (last_before, last_before)
    return (lo, hi)


def tag_distribution(tags_per_record: list[list[TaxonomyTag]]) -> dict:
    """Counts and ratios per tag kind plus the share of records tagged at all."""
    counts = {kind: 0 for kind in TAG_KINDS}
    tagged_records = 0
    for tags in tags_per_record:
        if tags:
            tagged_records += 1
        for tag in tags:
            counts[tag.kind] += 1
    total_tags = sum(counts.values())
    n_records = len(tags_per_record)
    return {
        "counts": counts,
        "ratios": {
            kind: (counts[kind] / total_tags if total_tags else 0.0) for kind in TAG_KINDS
        },
        "records_tagged": tagged_records,
        "records_tagged_fraction": (tagged_records / n_records if n_records else 0.0),
    }
