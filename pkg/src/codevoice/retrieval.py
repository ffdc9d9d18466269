"""Embedding-based code retrieval evaluation and the QA deviation judge.

Ranking is brute-force cosine similarity (corpora here are at most a few
thousand items). The offline embedding backend hashes character trigrams
into a fixed-dimension vector, so texts sharing identifiers land near each
other and the whole evaluation runs without a network.
"""

from __future__ import annotations

import enum
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import Corpus
from .errors import BackendError
from .refinement import LLMBackend

log = logging.getLogger(__name__)


class DeviationClass(enum.Enum):
    A_high = "A"
    B_moderate = "B"
    C_none = "C"


class EmbeddingBackend:
    dimension: int
    name = "embedding"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class OfflineHashEmbedding(EmbeddingBackend):
    """Deterministic character-trigram hashing embedder.

    Each trigram of the lowercased, whitespace-collapsed text is hashed
    (blake2b, so identical across processes and platforms) to a coordinate
    and a sign; vectors are L2-normalized. Same text, same vector, always.
    """

    name = "offline-hash"

    def __init__(self, dimension: int = 256):
        if dimension < 8:
            raise ValueError("dimension too small to be useful")
        self.dimension = dimension

    def _one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        normalized = " ".join(text.lower().split())
        padded = f" {normalized} "
        for i in range(max(len(padded) - 2, 0)):
            gram = padded[i : i + 3].encode("utf-8")
            digest = hashlib.blake2b(gram, digest_size=8).digest()
            value = int.from_bytes(digest, "big")
            index = (value >> 1) % self.dimension
            sign = 1.0 if value & 1 else -1.0
            vec[index] += sign
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self._one(t) for t in texts]) if texts else np.zeros((0, self.dimension))


class RemoteEmbeddingBackend(EmbeddingBackend):
    """JSON-over-HTTP embedding endpoint: {input: [texts]} -> {data: [{embedding}]}."""

    name = "remote-embedding"

    def __init__(self, endpoint: str, dimension: int, token_env: str = "CODEVOICE_EMBED_TOKEN",
                 timeout: float = 60.0, session=None):
        self.endpoint = endpoint
        self.dimension = dimension
        self.token_env = token_env
        self.timeout = timeout
        self._session = session

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        import os

        import requests

        session = self._session or requests
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        response = session.post(self.endpoint, json={"input": list(texts)}, headers=headers,
                                timeout=self.timeout)
        response.raise_for_status()
        rows = [item["embedding"] for item in response.json()["data"]]
        return np.asarray(rows, dtype=np.float64)


def _content_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def embed_corpus(
    texts: Sequence[str],
    backend: EmbeddingBackend,
    cache: Optional[dict] = None,
) -> np.ndarray:
    """One vector per text, order preserved, memoized by content hash.

    On backend failure the error names the first failing text index and the
    cache keeps everything embedded so far.
    """
    if cache is None:
        cache = {}
    keys = [_content_key(t) for t in texts]
    missing = [(i, t) for i, (k, t) in enumerate(zip(keys, texts)) if k not in cache]
    if missing:
        try:
            vectors = backend.embed([t for _, t in missing])
            for (i, _), vec in zip(missing, vectors):
                cache[keys[i]] = np.asarray(vec, dtype=np.float64)
        except Exception:
            # batch failed: retry one at a time so the error names an index
            # and everything embedded so far stays cached
            for i, text in missing:
                if keys[i] in cache:
                    continue
                try:
                    cache[keys[i]] = np.asarray(backend.embed([text])[0], dtype=np.float64)
                except Exception as err:
                    raise BackendError(f"embedding failed at text index {i}: {err}") from err
    return np.stack([cache[k] for k in keys]) if texts else np.zeros((0, backend.dimension))


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; defined as 0 whenever either vector has zero norm."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def rank(query_vec: np.ndarray, doc_vecs: Sequence[np.ndarray]) -> list[int]:
    """Doc indices by descending cosine similarity; ties by ascending index."""
    sims = np.array([cosine(query_vec, np.asarray(d)) for d in doc_vecs])
    order = np.lexsort((np.arange(len(sims)), -sims))
    return [int(i) for i in order]


def recall_at_k(gold_ranks: Sequence[int], k: int) -> float:
    """Fraction of queries whose gold document ranks within the top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold_ranks:
        raise ValueError("no queries")
    return sum(1 for r in gold_ranks if r <= k) / len(gold_ranks)


def mrr(gold_ranks: Sequence[int]) -> float:
    """Mean reciprocal rank over the full ranking (gold is always ranked)."""
    if not gold_ranks:
        raise ValueError("no queries")
    return sum(1.0 / r for r in gold_ranks) / len(gold_ranks)


@dataclass
class RetrievalRun:
    """One stage's retrieval sweep over a corpus."""

    stage: str
    k: int
    per_query: dict = field(default_factory=dict)  # id -> {rank_of_gold, top_ids}
    recall: float = 0.0
    mrr: float = 0.0
    pool_size: int = 0

    def to_json_dict(self) -> dict:
        return {
            "stage": self.stage,
            "k": self.k,
            "recall": self.recall,
            "mrr": self.mrr,
            "pool_size": self.pool_size,
            "per_query": {k: self.per_query[k] for k in sorted(self.per_query)},
        }


STAGE_QUERY_FIELDS = {
    "original": "reference_text",
    "asr": "transcript_raw",
    "refined": "transcript_refined",
}


def run_retrieval(
    corpus: Corpus,
    stage: str,
    backend: EmbeddingBackend,
    k_values: Sequence[int] = (5, 10),
    cache: Optional[dict] = None,
) -> list[RetrievalRun]:
    """Retrieve each record's own code snippet from the pool of all snippets.

    Records lacking the stage's query text or a code snippet are skipped.
    The candidate pool is every snippet in the corpus; its size is recorded
    on each run so results are interpretable.
    """
    query_field = STAGE_QUERY_FIELDS.get(stage)
    if query_field is None:
        raise ValueError(f"unknown retrieval stage {stage!r}")
    docs = [(r.id, r.code) for r in corpus if r.code]
    if not docs:
        raise ValueError("corpus has no code snippets to retrieve")
    doc_ids = [d[0] for d in docs]
    doc_vecs = embed_corpus([d[1] for d in docs], backend, cache)
    queries = [(r.id, getattr(r, query_field)) for r in corpus if r.code and getattr(r, query_field)]
    if not queries:
        raise ValueError(f"no records carry text for stage {stage!r}")
    query_vecs = embed_corpus([q[1] for q in queries], backend, cache)

    gold_ranks = []
    per_query = {}
    top_width = max(k_values)
    for (record_id, _), qvec in zip(queries, query_vecs):
        order = rank(qvec, doc_vecs)
        gold_pos = order.index(doc_ids.index(record_id)) + 1
        gold_ranks.append(gold_pos)
        per_query[record_id] = {
            "rank_of_gold": gold_pos,
            "top_ids": [doc_ids[i] for i in order[:top_width]],
        }
    runs = []
    for k in k_values:
        runs.append(
            RetrievalRun(
                stage=stage,
                k=k,
                per_query=per_query,
                recall=recall_at_k(gold_ranks, k),
                mrr=mrr(gold_ranks),
                pool_size=len(docs),
            )
        )
    return runs


_JUDGE_PROMPT = (
    "Compare the two answers below. Reply with exactly one letter:\n"
    "A if the second answer deviates highly from the first,\n"
    "B if it deviates moderately,\n"
    "C if there is no meaningful deviation.\n\n"
    "First answer:\n{original}\n\nSecond answer:\n{candidate}\n"
)


def _overlap_similarity(a: str, b: str) -> float:
    ta, tb = set(a.lower().split()), set(b.lower().split())
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def judge_deviation(
    original_answer: str,
    candidate_answer: str,
    backend: Optional[LLMBackend] = None,
    high_threshold: float = 0.6,
    none_threshold: float = 0.9,
) -> DeviationClass:
    """Three-way semantic deviation judgment.

    With a backend, the prompt demands a single letter A/B/C and the reply
    is parsed strictly (one reprompt, then BackendError). Without one, a
    token-overlap proxy applies the documented thresholds; the proxy is a
    stand-in, not a calibrated judge, and reports label it as such.
    """
    if backend is None:
        similarity = _overlap_similarity(original_answer, candidate_answer)
        if similarity >= none_threshold:
            return DeviationClass.C_none
        if similarity >= high_threshold:
            return DeviationClass.B_moderate
        return DeviationClass.A_high

    prompt = _JUDGE_PROMPT.format(original=original_answer, candidate=candidate_answer)
    messages = [{"role": "user", "content": prompt}]
    for attempt in range(2):
        reply = backend.complete(messages).strip().strip(".").upper()
        if reply in ("A", "B", "C"):
            return {
                "A": DeviationClass.A_high,
                "B": DeviationClass.B_moderate,
                "C": DeviationClass.C_none,
            }[reply]
        messages = [
            {"role": "user", "content": prompt + "\nReply with a single letter only: A, B, or C."}
        ]
    raise BackendError(f"deviation judge returned unparseable reply {reply!r}")
