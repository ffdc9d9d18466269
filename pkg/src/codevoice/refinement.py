"""Code-aware transcription refinement.

Two interchangeable paths: a prompt against a chat-completion LLM backend,
and a deterministic offline refiner (confusion-lexicon repair followed by
deverbalization) so the whole pipeline runs hermetically. The offline
refiner is the default everywhere; remote backends are opt-in.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable, Optional

from .errors import BackendError
from .resources import data_path
from .verbalizer import SymbolLexicon, classify_token, default_symbol_lexicon, deverbalize

log = logging.getLogger(__name__)

_LANGUAGE_NAMES = {"en": "English", "hi": "Hindi", "gu": "Gujarati", "ta": "Tamil", "bn": "Bengali"}

# the four correction duties every refinement prompt must carry
PROMPT_DIRECTIVES = (
    "Restore misrecognized code terms",
    "distorted phonetically",
    "Recover symbolic constructs",
    "Disambiguate between natural and programming language usage",
)


@dataclass(frozen=True)
class RefinementPrompt:
    system_instructions: str
    transcript: str
    context: tuple[str, ...] = ()
    target_lang: str = "en"

    def as_messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_instructions},
            {"role": "user", "content": self.transcript},
        ]


def build_refinement_prompt(
    transcript: str,
    lang: str = "en",
    hints: Optional[Iterable[str]] = None,
) -> RefinementPrompt:
    """Fill the shipped prompt template; hints are embedded verbatim."""
    if not transcript:
        raise ValueError("transcript must be non-empty")
    hints = tuple(hints or ())
    hints_block = ""
    if hints:
        hints_block = "\nIdentifiers known to appear in this code base: " + ", ".join(hints) + "\n"
    template = _prompt_template("refinement.txt")
    system = template.format(
        language_name=_LANGUAGE_NAMES.get(lang, lang),
        hints_block=hints_block,
        transcript=transcript,
    )
    return RefinementPrompt(
        system_instructions=system,
        transcript=transcript,
        context=hints,
        target_lang=lang,
    )


@lru_cache(maxsize=None)
def _prompt_template(name: str) -> str:
    return data_path("prompts", name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class ConfusionLexicon:
    """Ordered (heard phrase, intended term) pairs; longest phrase matched first."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        for heard, intended in self.entries:
            if heard != heard.lower():
                raise ValueError(f"heard phrase must be lowercase: {heard!r}")
            if not heard.split() or not intended:
                raise ValueError(f"empty confusion entry: {(heard, intended)!r}")

    @cached_property
    def by_heard(self) -> tuple[tuple[tuple[str, ...], str], ...]:
        pairs = [(tuple(heard.split()), intended) for heard, intended in self.entries]
        return tuple(sorted(pairs, key=lambda p: -len(p[0])))

    @cached_property
    def reversed_pairs(self) -> tuple[tuple[str, str], ...]:
        """intended -> first listed heard form; used by the corruption mock."""
        seen = {}
        for heard, intended in self.entries:
            seen.setdefault(intended, heard)
        return tuple(seen.items())


def load_confusion_lexicon(path) -> ConfusionLexicon:
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            heard, _, intended = line.partition("\t")
            entries.append((heard.strip(), intended.strip()))
    return ConfusionLexicon(entries=tuple(entries))


@lru_cache(maxsize=1)
def default_confusion_lexicon() -> ConfusionLexicon:
    return load_confusion_lexicon(data_path("confusion_lexicon.tsv"))


def apply_confusions(text: str, lexicon: ConfusionLexicon) -> str:
    """Replace heard phrases with their intended terms, longest match first,
    scanning left to right over whitespace tokens (case-insensitive)."""
    tokens = text.split()
    lowered = [t.lower() for t in tokens]
    out = []
    i = 0
    while i < len(tokens):
        matched = False
        for heard, intended in lexicon.by_heard:
            if tuple(lowered[i : i + len(heard)]) == heard:
                out.append(intended)
                i += len(heard)
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            i += 1
    return " ".join(out)


def refine_offline(
    transcript: str,
    lexicon: Optional[ConfusionLexicon] = None,
    symbol_lexicon: Optional[SymbolLexicon] = None,
    hints: Optional[Iterable[str]] = None,
) -> str:
    """Deterministic refiner: confusion repair, deverbalize, tidy whitespace.

    Idempotent over the shipped lexicons, and never invents characters
    beyond the input, lexicon targets, and symbol literals.
    """
    lexicon = lexicon or default_confusion_lexicon()
    symbol_lexicon = symbol_lexicon or default_symbol_lexicon()
    text = apply_confusions(transcript, lexicon)
    text = deverbalize(text, symbol_lexicon, identifier_hints=hints)
    return " ".join(text.split())


class LLMBackend:
    """Chat-completion contract: messages in, completion text out."""

    name = "llm"

    def complete(self, messages: list[dict]) -> str:
        raise NotImplementedError


class MockLLMBackend(LLMBackend):
    """Deterministic stand-in: canned replies by user-message content,
    else optional rule function, else echo of the user message."""

    name = "mock-llm"

    def __init__(self, canned: Optional[dict] = None, rule=None):
        self.canned = dict(canned or {})
        self.rule = rule
        self.calls = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        user = next((m["content"] for m in reversed(messages) if m["role"] == "user"), "")
        if user in self.canned:
            return self.canned[user]
        if self.rule is not None:
            return self.rule(user)
        return user


class RemoteChatBackend(LLMBackend):
    """JSON-over-HTTP chat endpoint: {model, messages} -> choices[0].message.content.

    Two retries with exponential backoff starting at 1s, then the record
    fails (not the run). The auth token comes from the environment, never
    from configuration files on disk.
    """

    name = "remote-chat"

    def __init__(
        self,
        endpoint: str,
        model: str,
        token_env: str = "CODEVOICE_LLM_TOKEN",
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 1.0,
        session=None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.token_env = token_env
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session

    def _post(self, payload):
        import os

        import requests

        session = self._session or requests
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return session.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)

    def complete(self, messages: list[dict]) -> str:
        payload = {"model": self.model, "messages": messages}
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self._post(payload)
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except Exception as err:  # noqa: BLE001 - every failure is retryable here
                last_error = err
                log.warning("chat backend attempt %d failed: %s", attempt + 1, err)
        raise BackendError(f"chat backend failed after {self.retries + 1} attempts: {last_error}")


_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\n(.*?)\n?```$", re.DOTALL)
_LABEL = re.compile(r"^(refined|corrected|output|transcript)\s*:\s*", re.IGNORECASE)


def strip_wrapper(completion: str) -> str:
    """Peel markdown fences, quotes, and label prefixes off a completion."""
    text = completion.strip()
    fenced = _FENCE.match(text)
    if fenced:
        text = fenced.group(1).strip()
    text = _LABEL.sub("", text)
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'“”":
        text = text[1:-1]
    return text.strip()


def refine_remote(prompt: RefinementPrompt, backend: LLMBackend) -> str:
    """One refinement call; raises BackendError so callers can flag the record."""
    started = time.monotonic()
    completion = backend.complete(prompt.as_messages())
    elapsed = time.monotonic() - started
    refined = strip_wrapper(completion)
    log.info(
        "refine_remote backend=%s latency=%.3fs prompt_tokens~%d completion_tokens~%d",
        backend.name,
        elapsed,
        sum(len(m["content"].split()) for m in prompt.as_messages()),
        len(completion.split()),
    )
    return refined


_IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_CODE_KEYWORDS_SKIP = frozenset(
    "def return if else elif for while in is not and or import from class new function public private static void int float str list dict echo print".split()
)


def extract_identifiers(text: str, code: Optional[str] = None) -> tuple[str, ...]:
    """Identifier hints for refinement: code-class tokens from the query text
    plus identifier-looking names from the paired snippet, sorted and deduped."""
    hints = set()
    for token in text.split():
        token = token.strip(",;:?!\"'")
        if not token:
            continue
        if classify_token(token) != "plain":
            if any(ch.isalnum() for ch in token):
                hints.add(token)
        elif token.isascii() and token.isalpha() and len(token) >= 4 and token.islower():
            hints.add(token)
    if code:
        for match in _IDENTIFIER.finditer(code):
            name = match.group()
            if name.lower() in _CODE_KEYWORDS_SKIP or len(name) < 3:
                continue
            hints.add(name)
    return tuple(sorted(hints))
