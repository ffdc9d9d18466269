"""Deterministic synthetic ASR: seeded corruption of verbalized text.

The corruption operations reproduce the recurring transcription failure
modes on code speech: dropped spoken operators, split identifiers, phrase
confusions, and plain word drops. Randomness comes from a fully specified
64-bit linear congruential generator, so the same seed produces the same
corrupted corpus on any implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .corpus import Corpus, QueryRecord
from .refinement import ConfusionLexicon, default_confusion_lexicon
from .verbalizer import SymbolLexicon, default_symbol_lexicon, verbalize

CORRUPTION_KINDS = ("drop_symbol", "split_identifier", "confuse_phrase", "drop_word")

# Knuth's MMIX linear congruential generator
_LCG_MULTIPLIER = 6364136223846793005
_LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1

# FNV-1a, used to fold record ids into per-record seeds
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class Lcg64:
    """x_{n+1} = (a*x_n + c) mod 2^64 with Knuth's MMIX constants.

    Floats take the top 53 bits, matching the usual double-precision mantissa.
    """

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (_LCG_MULTIPLIER * self.state + _LCG_INCREMENT) & _MASK64
        return self.state

    def next_float(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)

    def chance(self, probability: float) -> bool:
        return self.next_float() < probability

    def next_below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n


def fnv1a64(data: str) -> int:
    value = _FNV_OFFSET
    for byte in data.encode("utf-8"):
        value = ((value ^ byte) * _FNV_PRIME) & _MASK64
    return value


@dataclass(frozen=True)
class CorruptionSpec:
    """Seed plus ordered (kind, probability) operations."""

    seed: int
    operations: tuple[tuple[str, float], ...]

    def __post_init__(self):
        for kind, probability in self.operations:
            if kind not in CORRUPTION_KINDS:
                raise ValueError(f"unknown corruption kind {kind!r}")
            if not 0.0 <= probability <= 1.0:
                raise ValueError(f"probability out of range for {kind}: {probability}")

    def probability(self, kind: str) -> float:
        for op_kind, probability in self.operations:
            if op_kind == kind:
                return probability
        return 0.0


def corrupt_transcripts(
    corpus: Corpus,
    spec: CorruptionSpec,
    symbol_lexicon: Optional[SymbolLexicon] = None,
    confusion_lexicon: Optional[ConfusionLexicon] = None,
) -> Corpus:
    """Fill transcript_raw with a seeded corruption of verbalized_text.

    Each record draws from its own generator stream (spec seed combined with
    the record id hash), so corruption is stable under corpus reordering.
    """
    symbol_lexicon = symbol_lexicon or default_symbol_lexicon()
    confusion_lexicon = confusion_lexicon or default_confusion_lexicon()

    def corrupt(record: QueryRecord) -> QueryRecord:
        if record.verbalized_text is None:
            raise ValueError(f"record {record.id!r} has no verbalized_text to corrupt")
        rng = Lcg64(spec.seed ^ fnv1a64(record.id))
        tokens = record.verbalized_text.split()
        for kind, probability in spec.operations:
            if kind == "drop_symbol":
                tokens = _drop_symbols(tokens, probability, rng, symbol_lexicon)
            elif kind == "split_identifier":
                tokens = _split_identifiers(tokens, probability, rng)
            elif kind == "confuse_phrase":
                tokens = _confuse_phrases(tokens, probability, rng, confusion_lexicon, symbol_lexicon)
            elif kind == "drop_word":
                tokens = _drop_words(tokens, probability, rng)
        return record.replace(transcript_raw=" ".join(tokens))

    return corpus.map_records(corrupt)


def _drop_symbols(tokens, probability, rng, lexicon) -> list[str]:
    """Remove spoken operator phrases, each with the given probability."""
    out = []
    lowered = [t.lower() for t in tokens]
    i = 0
    while i < len(tokens):
        hit = None
        for phrase in lexicon.spoken_phrases:
            if tuple(lowered[i : i + len(phrase)]) == phrase:
                hit = phrase
                break
        if hit is not None and rng.chance(probability):
            i += len(hit)
        else:
            out.append(tokens[i])
            i += 1
    return out


def _split_identifiers(tokens, probability, rng) -> list[str]:
    """Break identifier-looking words (>=5 letters) at a random interior point."""
    out = []
    for token in tokens:
        if len(token) >= 5 and token.isalpha() and rng.chance(probability):
            cut = 2 + rng.next_below(len(token) - 3)
            out.extend([token[:cut], token[cut:]])
        else:
            out.append(token)
    return out


def _confuse_phrases(tokens, probability, rng, confusion_lexicon, symbol_lexicon) -> list[str]:
    """Swap the spoken form of an intended term for its heard distortion."""
    spoken_forms = []
    for intended, heard in confusion_lexicon.reversed_pairs:
        spoken = tuple(verbalize(intended, symbol_lexicon).lower().split())
        if spoken:
            spoken_forms.append((spoken, heard))
    spoken_forms.sort(key=lambda p: -len(p[0]))

    out = []
    lowered = [t.lower() for t in tokens]
    i = 0
    while i < len(tokens):
        hit = None
        for spoken, heard in spoken_forms:
            if tuple(lowered[i : i + len(spoken)]) == spoken:
                hit = (spoken, heard)
                break
        if hit is not None and rng.chance(probability):
            out.extend(hit[1].split())
            i += len(hit[0])
        else:
            out.append(tokens[i])
            i += 1
    return out


def _drop_words(tokens, probability, rng) -> list[str]:
    return [t for t in tokens if not rng.chance(probability)]
