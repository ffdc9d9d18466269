"""Edit-distance alignment and the three transcription metrics.

One dynamic-programming core serves all three: WER aligns word tokens with
unit costs, PER aligns phoneme sequences with unit costs, and WFED aligns
phonemes with substitution cost equal to articulatory feature distance.
Ties are broken deterministically: match, then substitution, then deletion,
then insertion.
"""

from __future__ import annotations

import logging
import unicodedata
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .corpus import Corpus, EditOps, MetricReport
from .phonetics import ArticulatoryFeatureTable, default_feature_table, default_g2p, phonemize, segment_distance
from .verbalizer import SymbolLexicon, default_symbol_lexicon

log = logging.getLogger(__name__)

_OP_MATCH, _OP_SUB, _OP_DEL, _OP_INS = "match", "sub", "del", "ins"


@dataclass(frozen=True)
class AlignmentResult:
    """Optimal alignment of a hypothesis against a reference.

    op_trace entries are (kind, ref_index, hyp_index); deletion has no
    hyp_index and insertion no ref_index. Replaying the trace rewrites the
    reference into the hypothesis.
    """

    ops: EditOps
    cost: float
    op_trace: tuple[tuple[str, Optional[int], Optional[int]], ...]


def align(
    ref: Sequence,
    hyp: Sequence,
    sub_cost: Optional[Callable] = None,
    ins_cost: float = 1.0,
    del_cost: float = 1.0,
) -> AlignmentResult:
    """Minimum-edit-cost alignment with one deterministic optimal trace.

    ``sub_cost(a, b)`` must be non-negative with sub_cost(x, x) == 0; the
    default is unit cost on inequality. A zero-cost diagonal step is
    recorded as a match, anything costlier as a substitution.
    """
    if sub_cost is None:
        sub_cost = lambda a, b: 0.0 if a == b else 1.0
    if ins_cost < 0 or del_cost < 0:
        raise ValueError("insertion/deletion costs must be non-negative")

    n, m = len(ref), len(hyp)
    cost = [[0.0] * (m + 1) for _ in range(n + 1)]
    back = [[_OP_MATCH] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = cost[i - 1][0] + del_cost
        back[i][0] = _OP_DEL
    for j in range(1, m + 1):
        cost[0][j] = cost[0][j - 1] + ins_cost
        back[0][j] = _OP_INS

    for i in range(1, n + 1):
        ref_tok = ref[i - 1]
        row = cost[i]
        prev = cost[i - 1]
        for j in range(1, m + 1):
            sc = sub_cost(ref_tok, hyp[j - 1])
            if sc < 0:
                raise ValueError("substitution cost must be non-negative")
            best = prev[j - 1] + sc
            kind = _OP_MATCH if sc == 0 else _OP_SUB
            down = prev[j] + del_cost
            if down < best:
                best, kind = down, _OP_DEL
            left = row[j - 1] + ins_cost
            if left < best:
                best, kind = left, _OP_INS
            row[j] = best
            back[i][j] = kind

    trace = []
    counts = {_OP_MATCH: 0, _OP_SUB: 0, _OP_DEL: 0, _OP_INS: 0}
    i, j = n, m
    while i > 0 or j > 0:
        kind = back[i][j]
        if kind in (_OP_MATCH, _OP_SUB):
            i, j = i - 1, j - 1
            trace.append((kind, i, j))
        elif kind == _OP_DEL:
            i -= 1
            trace.append((kind, i, None))
        else:
            j -= 1
            trace.append((kind, None, j))
        counts[kind] += 1
    trace.reverse()

    ops = EditOps(
        substitutions=counts[_OP_SUB],
        deletions=counts[_OP_DEL],
        insertions=counts[_OP_INS],
        reference_length=n,
    )
    return AlignmentResult(ops=ops, cost=cost[n][m], op_trace=tuple(trace))


def tokenize(text: str, lexicon: Optional[SymbolLexicon] = None, lowercase: bool = True) -> list[str]:
    """Scoring tokenizer: NFC, lowercase, whitespace split, then strip
    leading/trailing punctuation unless the whole token is a lexicon symbol."""
    if lexicon is None:
        lexicon = default_symbol_lexicon()
    literals = set(lexicon.literals)
    tokens = []
    text = unicodedata.normalize("NFC", text)
    if lowercase:
        text = text.lower()
    for token in text.split():
        if token in literals:
            tokens.append(token)
            continue
        start, end = 0, len(token)
        while start < end and unicodedata.category(token[start]).startswith("P"):
            start += 1
        while end > start and unicodedata.category(token[end - 1]).startswith("P"):
            end -= 1
        stripped = token[start:end]
        if stripped:
            tokens.append(stripped)
    return tokens


def _error_ratio(numerator: float, ref_len: int, hyp_len: int, metric: str) -> float:
    if ref_len > 0:
        return numerator / ref_len
    if hyp_len == 0:
        return 0.0
    log.warning("%s degenerate: empty reference against %d hypothesis tokens", metric, hyp_len)
    return numerator / 1.0


def wer(ref_text: str, hyp_text: str, lexicon: Optional[SymbolLexicon] = None) -> float:
    """(S + D + I) / N over word tokens; 0 for two empty texts."""
    ref = tokenize(ref_text, lexicon)
    hyp = tokenize(hyp_text, lexicon)
    result = align(ref, hyp)
    return _error_ratio(result.ops.total_errors, len(ref), len(hyp), "WER")


def per(ref_text: str, hyp_text: str, lang: str, adapter=None) -> float:
    """(S_p + D_p + I_p) / N_p over phoneme sequences."""
    adapter = adapter or default_g2p()
    ref = phonemize(ref_text, lang, adapter).segments
    hyp = phonemize(hyp_text, lang, adapter).segments
    result = align(ref, hyp)
    return _error_ratio(result.ops.total_errors, len(ref), len(hyp), "PER")


def wfed_cost(
    ref_text: str,
    hyp_text: str,
    lang: str,
    adapter=None,
    table: Optional[ArticulatoryFeatureTable] = None,
) -> tuple[float, int, int]:
    """Unnormalized feature-weighted edit cost plus both phoneme counts."""
    adapter = adapter or default_g2p()
    table = table or default_feature_table()
    ref = phonemize(ref_text, lang, adapter).segments
    hyp = phonemize(hyp_text, lang, adapter).segments
    result = align(ref, hyp, sub_cost=lambda a, b: segment_distance(a, b, table))
    return result.cost, len(ref), len(hyp)


def wfed(
    ref_text: str,
    hyp_text: str,
    lang: str,
    adapter=None,
    table: Optional[ArticulatoryFeatureTable] = None,
) -> float:
    """Feature-weighted edit cost normalized by reference phoneme count.

    Substitutions cost the articulatory distance of the segment pair;
    insertions and deletions cost 1.0, so wfed <= per always.
    """
    cost, ref_len, hyp_len = wfed_cost(ref_text, hyp_text, lang, adapter, table)
    return _error_ratio(cost, ref_len, hyp_len, "WFED")


STAGE_FIELDS = {"asr": "transcript_raw", "refined": "transcript_refined"}


def score_corpus(
    corpus: Corpus,
    stages: Sequence[str] = ("asr", "refined"),
    metrics: Sequence[str] = ("wer", "per", "wfed"),
    ref_field: str = "reference_text",
    adapter=None,
    table: Optional[ArticulatoryFeatureTable] = None,
    lexicon: Optional[SymbolLexicon] = None,
) -> MetricReport:
    """Score every record that carries a transcript for the requested stages.

    Transcripts are compared against the record's written-form reference
    as stored; nothing is deverbalized or otherwise transformed first.
    Records missing a stage's transcript are skipped for that stage.
    """
    adapter = adapter or default_g2p()
    table = table or default_feature_table()
    report = MetricReport()
    for stage in stages:
        field = STAGE_FIELDS.get(stage)
        if field is None:
            raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(STAGE_FIELDS)}")
        rows = []
        for record in corpus:
            hyp = getattr(record, field)
            if hyp is None:
                continue
            ref = getattr(record, ref_field)
            values = {}
            if "wer" in metrics:
                values["wer"] = wer(ref, hyp, lexicon)
            if "per" in metrics:
                values["per"] = per(ref, hyp, record.nat_lang, adapter)
            if "wfed" in metrics:
                values["wfed"] = wfed(ref, hyp, record.nat_lang, adapter, table)
            key = record.id if len(stages) == 1 else f"{record.id}/{stage}"
            report.per_record[key] = dict(values)
            rows.append((record.dataset, record.prog_lang, record.nat_lang, stage, values))
        report.aggregates.update(aggregate(rows))
    return report


def aggregate(rows) -> dict:
    """Arithmetic means keyed by (dataset, prog_lang, nat_lang, stage).

    Rows are (dataset, prog_lang, nat_lang, stage, {metric: value}); empty
    groups simply do not appear. Key order in the result is lexicographic.
    """
    groups: dict[tuple, list[dict]] = {}
    for dataset, prog_lang, nat_lang, stage, values in rows:
        groups.setdefault((dataset, prog_lang, nat_lang, stage), []).append(values)
    out = {}
    for key in sorted(groups):
        members = groups[key]
        entry = {"n_records": len(members)}
        for metric in ("wer", "per", "wfed"):
            values = [m[metric] for m in members if metric in m]
            if values:
                entry[metric] = sum(values) / len(values)
        out[key] = entry
    return out
