"""Spoken-form rewriting of code-mixed text, and its inverse.

``verbalize`` turns written code tokens into TTS-friendly word sequences
("print_sum" -> "print underscore sum", "API" -> "A P I"); ``deverbalize``
recovers symbols and joined identifiers from spoken-form text. Natural
language words, in any script, pass through untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Optional

from .resources import data_path

TOKEN_CLASSES = (
    "symbolic-operator",
    "snake_case",
    "dotted-path",
    "acronym",
    "camelCase",
    "plain",
)

# How a recovered symbol glues to its neighbours when deverbalizing.
_JOIN_BOTH = {"_", ".", "(", "[", "{"}
_JOIN_LEFT = {")", "]", "}", "()"}
_JOIN_RIGHT = {"#"}

_CAMEL_PIECE = re.compile(r"[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[a-z0-9]+")
_CAMEL_BOUNDARY = re.compile(r"[a-z][A-Z]|[A-Z]{2}[a-z]")


class LexiconError(ValueError):
    """Raised when a symbol lexicon violates its invariants."""


@dataclass(frozen=True)
class SymbolLexicon:
    """Ordered map from literal symbol strings to spoken phrases.

    Inversion is longest-match-first over phrases, so the phrase set must be
    uniquely decodable: no duplicate phrases, and no phrase may equal a
    concatenation of other phrases.
    """

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        self._validate()

    def _validate(self):
        phrases = {}
        for literal, phrase in self.entries:
            if not literal:
                raise LexiconError("empty literal")
            words = phrase.split()
            if not words or any(not w.isascii() or not w.islower() for w in words):
                raise LexiconError(f"spoken phrase for {literal!r} must be lowercase ascii words: {phrase!r}")
            if phrase in phrases:
                raise LexiconError(f"duplicate spoken phrase {phrase!r} for {literal!r} and {phrases[phrase]!r}")
            phrases[phrase] = literal
        phrase_words = [tuple(p.split()) for p in phrases]
        for target in phrase_words:
            if _decomposable(target, [p for p in phrase_words if p != target]):
                raise LexiconError(
                    f"phrase {' '.join(target)!r} equals a concatenation of other phrases; inversion ambiguous"
                )

    @cached_property
    def literals(self) -> tuple[str, ...]:
        # longest first so segmentation prefers "==" over "="
        return tuple(sorted((lit for lit, _ in self.entries), key=len, reverse=True))

    @cached_property
    def phrase_map(self) -> dict[tuple[str, ...], str]:
        return {tuple(phrase.split()): literal for literal, phrase in self.entries}

    @cached_property
    def _phrase_for(self) -> dict[str, str]:
        return dict(self.entries)

    def phrase_for(self, literal: str) -> Optional[str]:
        return self._phrase_for.get(literal)

    @cached_property
    def spoken_phrases(self) -> tuple[tuple[str, ...], ...]:
        """All spoken phrases as word tuples, longest (in words) first."""
        return tuple(sorted(self.phrase_map, key=len, reverse=True))


def _decomposable(target: tuple[str, ...], parts: list[tuple[str, ...]]) -> bool:
    # True when target can be written as a concatenation of >=2 parts
    n = len(target)
    reachable = {0}
    for i in range(n):
        if i not in reachable:
            continue
        for part in parts:
            if target[i : i + len(part)] == part:
                reachable.add(i + len(part))
    return n in reachable and n > 0


def load_symbol_lexicon(path) -> SymbolLexicon:
    """Parse a two-column literal<TAB>phrase file.

    Lines starting with "#" are comments unless the "#" is immediately
    followed by a tab (that is the entry for the hash symbol itself).
    """
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#") and not line.startswith("#\t"):
                continue
            if "\t" not in line:
                raise LexiconError(f"lexicon line has no tab separator: {line!r}")
            literal, phrase = line.split("\t", 1)
            entries.append((literal, phrase.strip()))
    return SymbolLexicon(entries=tuple(entries))


@lru_cache(maxsize=1)
def default_symbol_lexicon() -> SymbolLexicon:
    return load_symbol_lexicon(data_path("symbol_lexicon.tsv"))


def classify_token(token: str, lexicon: Optional[SymbolLexicon] = None) -> str:
    """Assign exactly one token class; precedence operator > snake > dotted > acronym > camel > plain."""
    if lexicon is None:
        lexicon = default_symbol_lexicon()
    if any(ch.isspace() for ch in token):
        raise ValueError(f"token contains whitespace: {token!r}")
    if not token:
        return "plain"
    other_symbols = [lit for lit in lexicon.literals if lit not in ("_", ".")]
    if any(lit in token for lit in other_symbols):
        return "symbolic-operator"
    if not any(ch.isalnum() for ch in token) and any(lit in token for lit in lexicon.literals):
        return "symbolic-operator"
    if "_" in token:
        return "snake_case"
    if "." in token:
        return "dotted-path"
    if token.isalpha() and token.isupper() and 2 <= len(token) <= 5:
        return "acronym"
    if _CAMEL_BOUNDARY.search(token):
        return "camelCase"
    return "plain"


def verbalize(
    text: str,
    lexicon: Optional[SymbolLexicon] = None,
    acronyms: Optional[set[str]] = None,
) -> str:
    """Rewrite code tokens as spoken words; idempotent and total.

    ``acronyms`` extends the default rule (2-5 uppercase letters) for long
    all-caps tokens that should still be letter-spaced.
    """
    if lexicon is None:
        lexicon = default_symbol_lexicon()
    out = []
    for token in text.split():
        if classify_token(token, lexicon) == "plain":
            out.append(token)
        else:
            out.extend(_expand_code_token(token, lexicon, acronyms or set()))
    return " ".join(out)


def _expand_code_token(token: str, lexicon: SymbolLexicon, acronyms: set[str]) -> list[str]:
    words = []
    for kind, segment in _segment(token, lexicon.literals):
        if kind == "symbol":
            words.extend(lexicon.phrase_for(segment).split())
        else:
            words.extend(_expand_word_run(segment, acronyms))
    return words


def _segment(token: str, literals: Iterable[str]):
    """Split a token into ("symbol", lit) and ("word", run) pieces, longest literal first."""
    literals = tuple(literals)
    pos = 0
    run_start = 0
    while pos < len(token):
        matched = None
        for lit in literals:
            if token.startswith(lit, pos):
                matched = lit
                break
        if matched:
            if run_start < pos:
                yield ("word", token[run_start:pos])
            yield ("symbol", matched)
            pos += len(matched)
            run_start = pos
        else:
            pos += 1
    if run_start < len(token):
        yield ("word", token[run_start:])


def _expand_word_run(run: str, acronyms: set[str]) -> list[str]:
    words = []
    pieces = _CAMEL_PIECE.findall(run) or [run]
    for piece in pieces:
        if piece.isalpha() and piece.isupper() and (2 <= len(piece) <= 5 or piece in acronyms):
            words.extend(piece)  # letter-spaced, capitals kept: API -> A P I
        else:
            words.append(piece.lower())
    return words


def deverbalize(
    spoken: str,
    lexicon: Optional[SymbolLexicon] = None,
    identifier_hints: Optional[Iterable[str]] = None,
) -> str:
    """Recover symbols and joined identifiers from spoken-form text.

    Three passes: spoken operator phrases back to symbols (longest match,
    leftmost), letter-spaced acronym runs rejoined, then hint-guided
    identifier rejoining (adjacent words whose separator-stripped
    concatenation matches a hint, case-insensitive). Total function.
    """
    if lexicon is None:
        lexicon = default_symbol_lexicon()
    items = _substitute_phrases(spoken.split(), lexicon)
    items = _rejoin_acronyms(items)
    if identifier_hints:
        items = _rejoin_hints(items, identifier_hints)
    return _assemble(items)


# stream items: ("word", text) or ("symbol", literal)


def _substitute_phrases(tokens: list[str], lexicon: SymbolLexicon) -> list[tuple[str, str]]:
    phrases = lexicon.spoken_phrases
    phrase_map = lexicon.phrase_map
    items = []
    i = 0
    lowered = [t.lower() for t in tokens]
    while i < len(tokens):
        matched = None
        for phrase in phrases:
            if tuple(lowered[i : i + len(phrase)]) == phrase:
                matched = phrase
                break
        if matched:
            items.append(("symbol", phrase_map[matched]))
            i += len(matched)
        else:
            items.append(("word", tokens[i]))
            i += 1
    return items


def _rejoin_acronyms(items: list[tuple[str, str]]) -> list[tuple[str, str]]:
    out = []
    i = 0
    while i < len(items):
        j = i
        while (
            j < len(items)
            and items[j][0] == "word"
            and len(items[j][1]) == 1
            and items[j][1].isalpha()
            and items[j][1].isupper()
        ):
            j += 1
        if j - i >= 2:
            out.append(("word", "".join(item[1] for item in items[i:j])))
            i = j
        else:
            out.append(items[i])
            i += 1
    return out


def _hint_key(text: str) -> str:
    return text.replace("_", "").replace(".", "").lower()


def _rejoin_hints(items: list[tuple[str, str]], hints: Iterable[str]) -> list[tuple[str, str]]:
    hint_map = {}
    for hint in sorted(set(hints)):
        hint_map.setdefault(_hint_key(hint), hint)
    if not hint_map:
        return items
    max_window = max(len(_CAMEL_PIECE.findall(h)) or 1 for h in hint_map.values()) + 2
    out = []
    i = 0
    while i < len(items):
        if items[i][0] != "word":
            out.append(items[i])
            i += 1
            continue
        replaced = False
        upper = i
        while upper < len(items) and items[upper][0] == "word" and upper - i < max_window:
            upper += 1
        for j in range(upper, i, -1):  # longest window first
            key = _hint_key("".join(item[1] for item in items[i:j]))
            if key in hint_map:
                out.append(("word", hint_map[key]))
                i = j
                replaced = True
                break
        if not replaced:
            out.append(items[i])
            i += 1
    return out


def _assemble(items: list[tuple[str, str]]) -> str:
    parts = []
    suppress_space = True
    for kind, value in items:
        if kind == "word":
            if not suppress_space:
                parts.append(" ")
            parts.append(value)
            suppress_space = False
        else:
            join_left = value in _JOIN_BOTH or value in _JOIN_LEFT
            if not suppress_space and not join_left:
                parts.append(" ")
            parts.append(value)
            suppress_space = value in _JOIN_BOTH or value in _JOIN_RIGHT
    return "".join(parts)
