"""Domain types and JSONL corpus ingestion.

A corpus is a JSON Lines file, one query record per line, UTF-8. Text is
NFC-normalized on load. Unknown fields are carried through serialization
untouched so extended datasets survive a round trip.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

DATASETS = ("CSN", "CSk", "QA")
PROG_LANGS = ("python", "java", "php")

# QA pairs exist only for python and java.
DATASET_PROG_LANGS = {
    "CSN": ("python", "java", "php"),
    "CSk": ("python", "java", "php"),
    "QA": ("python", "java"),
}

# code -> display name; extensible via register_language()
_LANGUAGES = {
    "en": "English",
    "hi": "Hindi",
    "gu": "Gujarati",
    "ta": "Tamil",
    "bn": "Bengali",
}

# Record fields serialized in this order; anything else lives in `extra`.
_RECORD_FIELDS = (
    "id",
    "dataset",
    "prog_lang",
    "nat_lang",
    "reference_text",
    "verbalized_text",
    "transcript_raw",
    "transcript_refined",
    "code",
    "gold_answer",
)


class CorpusError(ValueError):
    """Raised for malformed corpus files or invariant violations."""


def register_language(code: str, name: str) -> None:
    if not code or code != code.lower():
        raise ValueError(f"language code must be non-empty lowercase: {code!r}")
    _LANGUAGES[code] = name


def known_languages() -> tuple[str, ...]:
    return tuple(sorted(_LANGUAGES))


@dataclass(frozen=True)
class LanguageTag:
    code: str

    def __post_init__(self):
        if self.code not in _LANGUAGES:
            raise ValueError(
                f"unknown language {self.code!r}; registered: {known_languages()}"
            )

    def __str__(self) -> str:
        return self.code


def _nfc(value):
    return unicodedata.normalize("NFC", value) if isinstance(value, str) else value


@dataclass(frozen=True)
class QueryRecord:
    """One corpus item: a natural-language code query and its pipeline state.

    ``reference_text`` is the gold written-form query (possibly code-mixed).
    The optional fields are filled in by pipeline stages: ``verbalized_text``
    by the verbalizer, ``transcript_raw`` by ASR, ``transcript_refined`` by
    the refinement stage.
    """

    id: str
    dataset: str
    prog_lang: str
    nat_lang: str
    reference_text: str
    verbalized_text: Optional[str] = None
    transcript_raw: Optional[str] = None
    transcript_refined: Optional[str] = None
    code: Optional[str] = None
    gold_answer: Optional[str] = None
    extra: dict = field(default_factory=dict, compare=True)

    def replace(self, **changes) -> "QueryRecord":
        values = {name: getattr(self, name) for name in _RECORD_FIELDS}
        values["extra"] = dict(self.extra)
        values.update(changes)
        return QueryRecord(**values)

    def to_dict(self) -> dict:
        out = {}
        for name in _RECORD_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "QueryRecord":
        known = {k: _nfc(v) for k, v in raw.items() if k in _RECORD_FIELDS and v is not None}
        extra = {k: v for k, v in raw.items() if k not in _RECORD_FIELDS}
        missing = [k for k in ("id", "dataset", "prog_lang", "nat_lang", "reference_text") if k not in known]
        if missing:
            raise CorpusError(f"record missing required fields: {missing}")
        return cls(extra=extra, **known)


def validate_record(record: QueryRecord) -> list[str]:
    """Return human-readable invariant violations; empty list means valid.

    Total: never raises, whatever the record contains.
    """
    violations = []
    if not record.id:
        violations.append("id empty")
    if not record.reference_text:
        violations.append("reference_text empty")
    if record.dataset not in DATASETS:
        violations.append(f"unknown dataset {record.dataset!r}")
    if record.prog_lang not in PROG_LANGS:
        violations.append(f"unknown prog_lang {record.prog_lang!r}")
    if record.nat_lang not in _LANGUAGES:
        violations.append(f"unknown nat_lang {record.nat_lang!r}")
    allowed = DATASET_PROG_LANGS.get(record.dataset)
    if allowed and record.prog_lang in PROG_LANGS and record.prog_lang not in allowed:
        violations.append(f"{record.dataset} has no {record.prog_lang} split")
    return violations


@dataclass(frozen=True)
class Corpus:
    records: tuple[QueryRecord, ...]
    source: Optional[str] = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, index):
        return self.records[index]

    def by_id(self, record_id: str) -> QueryRecord:
        for record in self.records:
            if record.id == record_id:
                return record
        raise KeyError(record_id)

    def map_records(self, fn) -> "Corpus":
        """New corpus with fn applied to every record; order preserved."""
        return Corpus(records=tuple(fn(r) for r in self.records), source=self.source)


def make_corpus(records: Iterable[QueryRecord], source: Optional[str] = None) -> Corpus:
    records = tuple(records)
    seen = {}
    for i, record in enumerate(records):
        if record.id in seen:
            raise CorpusError(
                f"duplicate record id {record.id!r} at position {i + 1} "
                f"(first seen at position {seen[record.id] + 1})"
            )
        seen[record.id] = i
        problems = validate_record(record)
        if problems:
            raise CorpusError(f"invalid record {record.id!r}: {'; '.join(problems)}")
    return Corpus(records=records, source=source)


def load_corpus(path, format: str = "jsonl") -> Corpus:
    """Load and validate a JSONL corpus; records keep file order.

    Raises CorpusError naming the offending line for malformed JSON,
    invalid records, or duplicate ids.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    path = Path(path)
    records = []
    seen_lines = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{path}:{lineno}: malformed JSON: {err.msg}") from err
            if not isinstance(raw, dict):
                raise CorpusError(f"{path}:{lineno}: record is not a JSON object")
            try:
                record = QueryRecord.from_dict(raw)
            except CorpusError as err:
                raise CorpusError(f"{path}:{lineno}: {err}") from err
            if record.id in seen_lines:
                raise CorpusError(
                    f"{path}:{lineno}: duplicate id {record.id!r} "
                    f"(first seen on line {seen_lines[record.id]})"
                )
            seen_lines[record.id] = lineno
            problems = validate_record(record)
            if problems:
                raise CorpusError(f"{path}:{lineno}: {'; '.join(problems)}")
            records.append(record)
    return Corpus(records=tuple(records), source=str(path))


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus back to JSONL; inverse of load_corpus."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for record in corpus:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class EditOps:
    """Edit-operation tallies from one alignment.

    Word-level these are S, D, I and N; phoneme-level S_p, D_p, I_p, N_p.
    """

    substitutions: int
    deletions: int
    insertions: int
    reference_length: int

    def __post_init__(self):
        if min(self.substitutions, self.deletions, self.insertions, self.reference_length) < 0:
            raise ValueError("edit counts must be non-negative")
        if self.substitutions + self.deletions > self.reference_length:
            raise ValueError("substitutions + deletions exceed reference length")

    @property
    def total_errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass
class MetricReport:
    """Per-record metrics plus grouped aggregates and optional retrieval rows.

    per_record: id -> {"wer": float, "per": float, "wfed": float,
                       "taxonomy_tags": [str, ...]}
    aggregates: (dataset, prog_lang, nat_lang, stage) -> {"wer": ..., "per": ...,
                       "wfed": ..., "n_records": int}
    retrieval:  stage -> [{"k": int, "recall": float, "mrr": float}, ...]
    """

    per_record: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    retrieval: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        aggregates = {
            "/".join(key): value
            for key, value in sorted(self.aggregates.items())
        }
        return {
            "per_record": {k: self.per_record[k] for k in sorted(self.per_record)},
            "aggregates": aggregates,
            "retrieval": {k: self.retrieval[k] for k in sorted(self.retrieval)},
        }

    def to_csv_lines(self) -> list[str]:
        lines = ["dataset,prog_lang,nat_lang,stage,wer,per,wfed,n_records"]
        for key in sorted(self.aggregates):
            row = self.aggregates[key]
            cells = list(key) + [
                _format_ratio(row.get("wer")),
                _format_ratio(row.get("per")),
                _format_ratio(row.get("wfed")),
                str(row.get("n_records", 0)),
            ]
            lines.append(",".join(cells))
        return lines


def _format_ratio(value) -> str:
    return "" if value is None else repr(round(float(value), 6))


def format_percent(value: float) -> str:
    """Table-style rendering: ratio as percent with one decimal."""
    return f"{value * 100:.1f}%"
