"""Grapheme-to-phoneme conversion and articulatory phonetic distance.

The builtin converter is rule-based and fully offline: per-language files
map grapheme clusters to IPA, longest match first, with a word-level
exception lexicon for code terms. An external-command adapter can wrap any
installed G2P tool, and a passthrough adapter accepts pre-phonemized input.

Segment distance is normalized Hamming distance between binary articulatory
feature vectors from the bundled table, which makes it a proper metric over
known segments.
"""

from __future__ import annotations

import csv
import logging
import subprocess
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional

from .errors import BackendError, ConfigurationError
from .resources import data_path

log = logging.getLogger(__name__)

# per-run tally of feature-table misses; see reset_unknown_segment_count()
_unknown_segments = 0


@dataclass(frozen=True)
class PhonemeSequence:
    segments: tuple[str, ...]
    source_lang: str

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


class ArticulatoryFeatureTable:
    """IPA segment -> fixed-length binary feature vector."""

    def __init__(self, feature_names, rows):
        self.feature_names = tuple(feature_names)
        self.rows = dict(rows)
        if not self.feature_names:
            raise ValueError("feature table needs at least one feature")
        for segment, vector in self.rows.items():
            if len(vector) != len(self.feature_names):
                raise ValueError(
                    f"segment {segment!r} has {len(vector)} features, expected {len(self.feature_names)}"
                )
            if any(v not in (0, 1) for v in vector):
                raise ValueError(f"segment {segment!r} has non-binary feature values")

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def __contains__(self, segment: str) -> bool:
        return segment in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def vector(self, segment: str) -> tuple[int, ...]:
        return self.rows[segment]


def load_feature_table(path) -> ArticulatoryFeatureTable:
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        rows = {}
        for line in reader:
            if not line:
                continue
            rows[line[0]] = tuple(int(cell) for cell in line[1:])
    return ArticulatoryFeatureTable(header[1:], rows)


@lru_cache(maxsize=1)
def default_feature_table() -> ArticulatoryFeatureTable:
    return load_feature_table(data_path("feature_table.csv"))


def segment_distance(a: str, b: str, table: Optional[ArticulatoryFeatureTable] = None) -> float:
    """Normalized Hamming distance in [0, 1] between two IPA segments.

    Identical segment strings are distance 0 even when unknown (alignment
    requires sub_cost(x, x) == 0); otherwise any unknown segment costs the
    maximal 1.0 and bumps the unknown-segment counter.
    """
    global _unknown_segments
    if table is None:
        table = default_feature_table()
    if a == b:
        return 0.0
    if a not in table or b not in table:
        _unknown_segments += 1
        log.debug("unknown segment in distance: %r vs %r", a, b)
        return 1.0
    va, vb = table.vector(a), table.vector(b)
    return sum(x != y for x, y in zip(va, vb)) / table.num_features


def unknown_segment_count() -> int:
    return _unknown_segments


def reset_unknown_segment_count() -> None:
    global _unknown_segments
    _unknown_segments = 0


class _RuleSet:
    """Ordered grapheme->IPA rules; longest grapheme wins, file order breaks ties."""

    def __init__(self, rules: list[tuple[str, tuple[str, ...]]]):
        self.rules = sorted(rules, key=lambda r: -len(r[0]))
        self.max_len = max((len(g) for g, _ in self.rules), default=1)
        self._by_prefix = {}
        for grapheme, phones in self.rules:
            self._by_prefix.setdefault(grapheme, phones)

    def apply(self, word: str) -> list[str]:
        segments = []
        pos = 0
        while pos < len(word):
            matched = False
            for width in range(min(self.max_len, len(word) - pos), 0, -1):
                phones = self._by_prefix.get(word[pos : pos + width])
                if phones is not None:
                    segments.extend(phones)
                    pos += width
                    matched = True
                    break
            if not matched:
                pos += 1  # no rule: grapheme is silent (symbols, digits, foreign marks)
        return segments


def _parse_rule_file(path) -> list[tuple[str, tuple[str, ...]]]:
    rules = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            grapheme, _, ipa = line.partition("\t")
            rules.append((grapheme, tuple(ipa.split())))
    return rules


class BuiltinG2P:
    """Offline rule-based converter for English and the bundled Indic scripts.

    Words made of ASCII letters are always routed through the English rules,
    so identifiers embedded in native-script text keep their pronunciation.
    Safe for concurrent use (all state is immutable after construction).
    """

    concurrent_safe = True
    name = "builtin-rules"

    def __init__(self, rules_dir=None):
        self.rules_dir = Path(rules_dir) if rules_dir else data_path("g2p")
        self._rules: dict[str, _RuleSet] = {}
        self._exceptions: dict[str, dict[str, tuple[str, ...]]] = {}

    def supports(self, lang: str) -> bool:
        return (self.rules_dir / f"{lang}.tsv").exists()

    def _ruleset(self, lang: str) -> _RuleSet:
        if lang not in self._rules:
            path = self.rules_dir / f"{lang}.tsv"
            if not path.exists():
                raise ConfigurationError(f"no builtin G2P rules for language {lang!r}")
            self._rules[lang] = _RuleSet(_parse_rule_file(path))
            exc_path = self.rules_dir / f"{lang}_exceptions.tsv"
            self._exceptions[lang] = (
                {g: p for g, p in _parse_rule_file(exc_path)} if exc_path.exists() else {}
            )
        return self._rules[lang]

    def phonemize(self, text: str, lang: str) -> PhonemeSequence:
        if not self.supports(lang):
            raise ConfigurationError(f"builtin G2P does not support language {lang!r}")
        self._ruleset(lang)
        segments = []
        for word in text.split():
            word_lang = "en" if word.isascii() and self.supports("en") else lang
            rules = self._ruleset(word_lang)
            key = word.lower()
            exception = self._exceptions[word_lang].get(key)
            if exception is not None:
                segments.extend(exception)
            else:
                segments.extend(rules.apply(key))
        return PhonemeSequence(segments=tuple(segments), source_lang=lang)


class PassthroughG2P:
    """Treats input as space-separated IPA; for pre-phonemized corpora."""

    concurrent_safe = True
    name = "passthrough-ipa"

    def supports(self, lang: str) -> bool:
        return True

    def phonemize(self, text: str, lang: str) -> PhonemeSequence:
        return PhonemeSequence(segments=tuple(text.split()), source_lang=lang)


class ExternalCommandG2P:
    """Wraps an installed G2P tool: text on stdin, space-separated IPA on stdout.

    The command is spawned per call and calls are not concurrency-safe unless
    the wrapped tool is. ``{lang}`` in the argument list is substituted.
    """

    concurrent_safe = False
    name = "external-command"

    def __init__(self, command: list[str], timeout: float = 30.0):
        if not command:
            raise ConfigurationError("external G2P needs a non-empty command")
        self.command = list(command)
        self.timeout = timeout

    def supports(self, lang: str) -> bool:
        return True

    def phonemize(self, text: str, lang: str) -> PhonemeSequence:
        argv = [arg.replace("{lang}", lang) for arg in self.command]
        try:
            proc = subprocess.run(
                argv,
                input=text,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except (OSError, subprocess.TimeoutExpired) as err:
            raise BackendError(f"G2P command failed: {argv}: {err}") from err
        if proc.returncode != 0:
            raise BackendError(
                f"G2P command {argv} exited {proc.returncode}; stderr: {proc.stderr.strip()!r}"
            )
        return PhonemeSequence(segments=tuple(proc.stdout.split()), source_lang=lang)


def phonemize(text: str, lang: str, adapter) -> PhonemeSequence:
    """Convert text to an utterance-level segment list via the given adapter."""
    if not adapter.supports(lang):
        raise ConfigurationError(f"adapter {getattr(adapter, 'name', adapter)!r} does not support {lang!r}")
    return adapter.phonemize(text, lang)


@lru_cache(maxsize=1)
def default_g2p() -> BuiltinG2P:
    return BuiltinG2P()
