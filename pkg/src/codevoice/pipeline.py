"""End-to-end cascade orchestration with pluggable backends.

Stages run in dependency order: translate, verbalize, tts, asr, refine,
score, retrieval, taxonomy. Every stage only appends fields; per-record
backend failures flag the record and the run continues. Offline mock
backends are the default for every external service, so a full run is
reproducible bit for bit from its seed (timestamps aside).
"""

from __future__ import annotations

import configparser
import datetime
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .corpus import Corpus, MetricReport, QueryRecord, load_corpus, save_corpus
from .corruption import CorruptionSpec, corrupt_transcripts
from .errors import BackendError, ConfigurationError
from .metrics import score_corpus
from .phonetics import default_feature_table, default_g2p
from .refinement import (
    ConfusionLexicon,
    LLMBackend,
    MockLLMBackend,
    RemoteChatBackend,
    build_refinement_prompt,
    default_confusion_lexicon,
    extract_identifiers,
    refine_offline,
    refine_remote,
)
from .resources import data_path
from .retrieval import OfflineHashEmbedding, RemoteEmbeddingBackend, run_retrieval
from .taxonomy import detect_tags
from .verbalizer import SymbolLexicon, classify_token, default_symbol_lexicon, verbalize

log = logging.getLogger(__name__)

STAGE_ORDER = ("translate", "verbalize", "tts", "asr", "refine", "score", "retrieval", "taxonomy")

_DEFAULT_CORRUPTION = (
    ("drop_symbol", 0.5),
    ("confuse_phrase", 0.5),
    ("split_identifier", 0.3),
    ("drop_word", 0.0),
)


@dataclass(frozen=True)
class PipelineConfig:
    corpus_path: str
    stages: tuple[str, ...]
    output_dir: str = "out"
    seed: int = 42
    parallelism: int = 4
    k_values: tuple[int, ...] = (5, 10)
    languages: tuple[str, ...] = ("en", "hi", "gu", "ta", "bn")
    corruption: tuple[tuple[str, float], ...] = _DEFAULT_CORRUPTION
    asr_backend: str = "mock"
    tts_backend: str = "mock"
    llm_backend: str = "offline"
    embedding_backend: str = "offline"
    asr_endpoint: str = ""
    tts_endpoint: str = ""
    tts_voice: str = "default"
    llm_endpoint: str = ""
    llm_model: str = ""
    embedding_endpoint: str = ""
    embedding_dimension: int = 256
    hints_source: str = "code"  # code | reference | none
    scoring_reference: str = "reference_text"

    def __post_init__(self):
        unknown = [s for s in self.stages if s not in STAGE_ORDER]
        if unknown:
            raise ConfigurationError(f"unknown stages {unknown}; valid: {STAGE_ORDER}")
        if self.hints_source not in ("code", "reference", "none"):
            raise ConfigurationError(f"bad hints_source {self.hints_source!r}")
        if self.scoring_reference not in ("reference_text", "verbalized_text"):
            raise ConfigurationError(f"bad scoring_reference {self.scoring_reference!r}")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1")
        if any(k < 1 for k in self.k_values):
            raise ConfigurationError("retrieval k values must be >= 1")

    def ordered_stages(self) -> tuple[str, ...]:
        return tuple(s for s in STAGE_ORDER if s in self.stages)

    def corruption_spec(self) -> CorruptionSpec:
        return CorruptionSpec(seed=self.seed, operations=tuple(self.corruption))

    def to_canonical_dict(self) -> dict:
        out = {}
        for name in sorted(self.__dataclass_fields__):
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value) if not value or not isinstance(value[0], tuple) else [list(v) for v in value]
            out[name] = value
        return out


def load_config(path, overrides: Optional[dict] = None) -> PipelineConfig:
    """Read the INI-style config file; ``overrides`` wins over file values.

    Secrets never come from the file: remote backends read their tokens
    from environment variables.
    """
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    section = parser["pipeline"] if parser.has_section("pipeline") else {}

    def pick(key, default):
        value = overrides.get(key) if overrides and overrides.get(key) is not None else None
        if value is None:
            value = section.get(key)
        return default if value is None else value

    corruption = []
    if parser.has_section("corruption"):
        for kind, probability in parser["corruption"].items():
            corruption.append((kind, float(probability)))
    else:
        corruption = list(_DEFAULT_CORRUPTION)
    backends = parser["backends"] if parser.has_section("backends") else {}
    retrieval = parser["retrieval"] if parser.has_section("retrieval") else {}
    refinement = parser["refinement"] if parser.has_section("refinement") else {}

    def pick_from(sec, key, default):
        value = overrides.get(key) if overrides and overrides.get(key) is not None else None
        if value is None:
            value = sec.get(key)
        return default if value is None else value

    stages = pick("stages", "verbalize,asr,refine,score,retrieval,taxonomy")
    if isinstance(stages, str):
        stages = tuple(s.strip() for s in stages.split(",") if s.strip())
    k_values = pick_from(retrieval, "k", "5,10")
    if isinstance(k_values, str):
        k_values = tuple(int(k) for k in k_values.split(","))
    languages = pick("languages", "en,hi,gu,ta,bn")
    if isinstance(languages, str):
        languages = tuple(s.strip() for s in languages.split(",") if s.strip())

    return PipelineConfig(
        corpus_path=str(pick("corpus", "")),
        stages=tuple(stages),
        output_dir=str(pick("output_dir", "out")),
        seed=int(pick("seed", 42)),
        parallelism=int(pick("parallelism", 4)),
        k_values=tuple(k_values),
        languages=tuple(languages),
        corruption=tuple(corruption),
        asr_backend=str(pick_from(backends, "asr", "mock")),
        tts_backend=str(pick_from(backends, "tts", "mock")),
        llm_backend=str(pick_from(backends, "llm", "offline")),
        embedding_backend=str(pick_from(backends, "embedding", "offline")),
        asr_endpoint=str(pick_from(backends, "asr_endpoint", "")),
        tts_endpoint=str(pick_from(backends, "tts_endpoint", "")),
        tts_voice=str(pick_from(backends, "tts_voice", "default")),
        llm_endpoint=str(pick_from(backends, "llm_endpoint", "")),
        llm_model=str(pick_from(backends, "llm_model", "")),
        embedding_endpoint=str(pick_from(backends, "embedding_endpoint", "")),
        embedding_dimension=int(pick_from(backends, "embedding_dimension", 256)),
        hints_source=str(pick_from(refinement, "hints_source", "code")),
        scoring_reference=str(pick("scoring_reference", "reference_text")),
    )


def validate_stage_dependencies(config: PipelineConfig, corpus: Corpus) -> None:
    stages = set(config.stages)

    def present(field_name):
        return all(getattr(r, field_name) is not None for r in corpus)

    def present_extra(key):
        return all(r.extra.get(key) for r in corpus)

    if "tts" in stages and "verbalize" not in stages and not present("verbalized_text"):
        raise ConfigurationError("tts stage needs the verbalize stage or pre-verbalized records")
    if "asr" in stages and "verbalize" not in stages:
        if not present("verbalized_text") and not present_extra("audio_path"):
            raise ConfigurationError("asr stage needs verbalize, verbalized records, or existing audio")
    if "refine" in stages and "asr" not in stages and not present("transcript_raw"):
        raise ConfigurationError("refine stage needs the asr stage or raw transcripts")
    if "score" in stages and not (stages & {"asr", "refine"}):
        if not (present("transcript_raw") or present("transcript_refined")):
            raise ConfigurationError("score stage needs asr or refine, or transcripts in the corpus")


# ---------------------------------------------------------------- backends


class TTSBackend:
    name = "tts"

    def synthesize(self, text: str, voice: str, language: str) -> bytes:
        raise NotImplementedError


class MockTTSBackend(TTSBackend):
    """Writes a small stub per record and remembers exactly what was sent."""

    name = "mock-tts"

    def __init__(self):
        self.sent: list[tuple[str, str]] = []

    def synthesize(self, text: str, voice: str, language: str) -> bytes:
        self.sent.append((language, text))
        return b"STUBAUDIO\n" + text.encode("utf-8")


class RemoteTTSBackend(TTSBackend):
    """JSON {text, voice, language} -> audio bytes."""

    name = "remote-tts"

    def __init__(self, endpoint: str, token_env: str = "CODEVOICE_TTS_TOKEN", timeout: float = 60.0, session=None):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout = timeout
        self._session = session

    def synthesize(self, text: str, voice: str, language: str) -> bytes:
        import os

        import requests

        session = self._session or requests
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        response = session.post(
            self.endpoint,
            json={"text": text, "voice": voice, "language": language},
            headers=headers,
            timeout=self.timeout,
        )
        response.raise_for_status()
        return response.content


class MockASRBackend:
    """Synthetic recognizer: corrupts verbalized text with the seeded spec."""

    name = "mock-corruption"

    def __init__(self, spec: CorruptionSpec, symbol_lexicon=None, confusion_lexicon=None):
        self.spec = spec
        self.symbol_lexicon = symbol_lexicon or default_symbol_lexicon()
        self.confusion_lexicon = confusion_lexicon or default_confusion_lexicon()

    def transcribe_corpus(self, corpus: Corpus) -> Corpus:
        return corrupt_transcripts(corpus, self.spec, self.symbol_lexicon, self.confusion_lexicon)


class RemoteASRBackend:
    """Multipart upload {file, language} -> JSON {text}."""

    name = "remote-asr"

    def __init__(self, endpoint: str, token_env: str = "CODEVOICE_ASR_TOKEN", timeout: float = 120.0, session=None):
        self.endpoint = endpoint
        self.token_env = token_env
        self.timeout = timeout
        self._session = session

    def transcribe(self, audio_path: str, language: str) -> str:
        import os

        import requests

        session = self._session or requests
        headers = {}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        with open(audio_path, "rb") as handle:
            response = session.post(
                self.endpoint,
                files={"file": handle},
                data={"language": language},
                headers=headers,
                timeout=self.timeout,
            )
        response.raise_for_status()
        return response.json()["text"]


# ---------------------------------------------------------------- operations


@dataclass(frozen=True)
class TranslationResult:
    text: str
    flags: tuple[str, ...] = ()


def translate_query(text: str, target: str, backend: LLMBackend, source: str = "en") -> TranslationResult:
    """Code-preserving translation via the LLM backend.

    After the call, every code-class token of the input must appear verbatim
    in the output; otherwise the result is flagged "identifier drift". On
    backend failure the original text is returned, flagged.
    """
    template = data_path("prompts", "translation.txt").read_text(encoding="utf-8")
    names = {"en": "English", "hi": "Hindi", "gu": "Gujarati", "ta": "Tamil", "bn": "Bengali"}
    prompt = template.format(
        source_language=names.get(source, source),
        target_language=names.get(target, target),
        text=text,
    )
    try:
        translated = backend.complete([{"role": "user", "content": prompt}]).strip()
    except Exception as err:  # noqa: BLE001
        log.warning("translation backend failed: %s", err)
        return TranslationResult(text=text, flags=("translation backend failure",))
    flags = []
    for token in text.split():
        if classify_token(token) != "plain" and token not in translated:
            flags.append("identifier drift")
            break
    return TranslationResult(text=translated, flags=tuple(flags))


def synthesize_audio(corpus: Corpus, backend: TTSBackend, output_dir, voice: str = "default") -> Corpus:
    """Synthesize each record's verbalized text; stores path and sent text."""
    audio_dir = Path(output_dir) / "audio"
    audio_dir.mkdir(parents=True, exist_ok=True)

    def one(record: QueryRecord) -> QueryRecord:
        if record.verbalized_text is None:
            return _flag(record, "tts skipped: no verbalized_text")
        try:
            audio = backend.synthesize(record.verbalized_text, voice, record.nat_lang)
        except Exception as err:  # noqa: BLE001
            log.warning("tts failed for %s: %s", record.id, err)
            return _flag(record, "tts backend failure")
        path = audio_dir / f"{record.id}.wav"
        path.write_bytes(audio)
        extra = dict(record.extra)
        extra["audio_path"] = str(path)
        extra["tts_text"] = record.verbalized_text
        return record.replace(extra=extra)

    return corpus.map_records(one)


def transcribe_audio(corpus: Corpus, backend) -> Corpus:
    """Fill transcript_raw from the ASR backend (mock corrupts, remote posts audio)."""
    if hasattr(backend, "transcribe_corpus"):
        return backend.transcribe_corpus(corpus)

    def one(record: QueryRecord) -> QueryRecord:
        audio_path = record.extra.get("audio_path")
        if not audio_path:
            return _flag(record, "asr skipped: no audio")
        try:
            text = backend.transcribe(audio_path, record.nat_lang)
        except Exception as err:  # noqa: BLE001
            log.warning("asr failed for %s: %s", record.id, err)
            return _flag(record, "asr backend failure")
        return record.replace(transcript_raw=text)

    return corpus.map_records(one)


def _flag(record: QueryRecord, message: str) -> QueryRecord:
    extra = dict(record.extra)
    flags = list(extra.get("flags", []))
    flags.append(message)
    extra["flags"] = flags
    return record.replace(extra=extra)


def _record_hints(record: QueryRecord, source: str) -> tuple[str, ...]:
    if source == "none":
        return ()
    if source == "code":
        return extract_identifiers("", record.code)
    return extract_identifiers(record.reference_text, record.code)


# ---------------------------------------------------------------- the run


class PipelineRun:
    """Executes the configured stages over one corpus."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.symbol_lexicon = default_symbol_lexicon()
        self.confusion_lexicon = default_confusion_lexicon()
        self.g2p = default_g2p()
        self.table = default_feature_table()
        self.out_dir = Path(config.output_dir)
        self.report = MetricReport()
        self.stage_counts: dict[str, dict] = {}

    # backend builders honor config selections
    def _llm(self) -> LLMBackend:
        if self.config.llm_backend == "remote":
            if not self.config.llm_endpoint:
                raise ConfigurationError("llm backend 'remote' needs llm_endpoint")
            return RemoteChatBackend(self.config.llm_endpoint, self.config.llm_model)
        return MockLLMBackend()

    def _embedding(self):
        if self.config.embedding_backend == "remote":
            if not self.config.embedding_endpoint:
                raise ConfigurationError("embedding backend 'remote' needs embedding_endpoint")
            return RemoteEmbeddingBackend(self.config.embedding_endpoint, self.config.embedding_dimension)
        return OfflineHashEmbedding(self.config.embedding_dimension)

    def _asr(self):
        if self.config.asr_backend == "remote":
            if not self.config.asr_endpoint:
                raise ConfigurationError("asr backend 'remote' needs asr_endpoint")
            return RemoteASRBackend(self.config.asr_endpoint)
        return MockASRBackend(self.config.corruption_spec(), self.symbol_lexicon, self.confusion_lexicon)

    def _tts(self):
        if self.config.tts_backend == "remote":
            if not self.config.tts_endpoint:
                raise ConfigurationError("tts backend 'remote' needs tts_endpoint")
            return RemoteTTSBackend(self.config.tts_endpoint)
        return MockTTSBackend()

    def execute(self, corpus: Corpus) -> tuple[MetricReport, dict]:
        started = _now()
        validate_stage_dependencies(self.config, corpus)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        backends_used = {}

        for stage in self.config.ordered_stages():
            corpus = self._run_stage(stage, corpus, backends_used)
            if stage in ("translate", "verbalize", "tts", "asr", "refine"):
                save_corpus(corpus, self.out_dir / f"corpus_{stage}.jsonl")

        flagged = sum(1 for r in corpus if r.extra.get("flags"))
        manifest = {
            "config": self.config.to_canonical_dict(),
            "config_hash": _sha256_text(json.dumps(self.config.to_canonical_dict(), sort_keys=True)),
            "seed": self.config.seed,
            "backends": backends_used,
            "data_files": _data_file_hashes(),
            "stages_run": list(self.config.ordered_stages()),
            "records": len(corpus),
            "records_flagged": flagged,
            "stage_counts": self.stage_counts,
            "timestamps": {"started": started, "finished": _now()},
        }
        _write_json(self.out_dir / "report.json", self.report.to_json_dict())
        (self.out_dir / "report.csv").write_text(
            "\n".join(self.report.to_csv_lines()) + "\n", encoding="utf-8"
        )
        _write_json(self.out_dir / "manifest.json", manifest)
        return self.report, manifest

    def _run_stage(self, stage: str, corpus: Corpus, backends_used: dict) -> Corpus:
        log.info("stage %s over %d records", stage, len(corpus))
        if stage == "translate":
            backend = self._llm()
            backends_used["translate"] = backend.name

            def one(record):
                if record.nat_lang == "en":
                    return record
                result = translate_query(record.reference_text, record.nat_lang, backend)
                extra = dict(record.extra)
                extra["translated_text"] = result.text
                record = record.replace(extra=extra)
                for flag_text in result.flags:
                    record = _flag(record, flag_text)
                return record

            return corpus.map_records(one)

        if stage == "verbalize":
            def one(record):
                source = record.extra.get("translated_text") or record.reference_text
                return record.replace(verbalized_text=verbalize(source, self.symbol_lexicon))

            return corpus.map_records(one)

        if stage == "tts":
            backend = self._tts()
            backends_used["tts"] = backend.name
            return synthesize_audio(corpus, backend, self.out_dir, self.config.tts_voice)

        if stage == "asr":
            backend = self._asr()
            backends_used["asr"] = backend.name
            return transcribe_audio(corpus, backend)

        if stage == "refine":
            return self._refine(corpus, backends_used)

        if stage == "score":
            stages = [s for s, fld in (("asr", "transcript_raw"), ("refined", "transcript_refined"))
                      if any(getattr(r, fld) is not None for r in corpus)]
            stage_report = score_corpus(
                corpus,
                stages=stages,
                ref_field=self.config.scoring_reference,
                adapter=self.g2p,
                table=self.table,
                lexicon=self.symbol_lexicon,
            )
            self.report.per_record.update(stage_report.per_record)
            self.report.aggregates.update(stage_report.aggregates)
            self.stage_counts["score"] = {"stages": stages, "records": len(corpus)}
            return corpus

        if stage == "retrieval":
            backend = self._embedding()
            backends_used["embedding"] = backend.name
            cache: dict = {}
            for retrieval_stage, fld in (("original", "reference_text"), ("asr", "transcript_raw"),
                                         ("refined", "transcript_refined")):
                if not any(getattr(r, fld) for r in corpus if r.code):
                    continue
                runs = run_retrieval(corpus, retrieval_stage, backend, self.config.k_values, cache)
                self.report.retrieval[retrieval_stage] = [
                    {"k": run.k, "recall": run.recall, "mrr": run.mrr, "pool_size": run.pool_size}
                    for run in runs
                ]
            return corpus

        if stage == "taxonomy":
            tags_json = {}
            for tag_stage, fld in (("asr", "transcript_raw"), ("refined", "transcript_refined")):
                for record in corpus:
                    hyp = getattr(record, fld)
                    if hyp is None:
                        continue
                    tags = detect_tags(
                        getattr(record, self.config.scoring_reference),
                        hyp,
                        self.symbol_lexicon,
                        self.table,
                        self.g2p,
                        lang=record.nat_lang,
                    )
                    key = f"{record.id}/{tag_stage}"
                    tags_json[key] = [t.to_json_dict() for t in tags]
                    entry = self.report.per_record.setdefault(key, {})
                    entry["taxonomy_tags"] = [t.kind for t in tags]
            _write_json(self.out_dir / "tags.json", tags_json)
            return corpus

        raise ConfigurationError(f"unhandled stage {stage!r}")

    def _refine(self, corpus: Corpus, backends_used: dict) -> Corpus:
        hints_by_id = {r.id: _record_hints(r, self.config.hints_source) for r in corpus}
        if self.config.llm_backend == "remote":
            backend = self._llm()
            backends_used["refine"] = backend.name

            def remote_one(record):
                if record.transcript_raw is None:
                    return _flag(record, "refine skipped: no transcript")
                prompt = build_refinement_prompt(
                    record.transcript_raw or " ", record.nat_lang, hints_by_id[record.id]
                )
                try:
                    refined = refine_remote(prompt, backend)
                except BackendError:
                    return _flag(record, "refine backend failure")
                return record.replace(transcript_refined=refined)

            with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
                futures = {r.id: pool.submit(remote_one, r) for r in corpus}
            # join deterministically in corpus order, whatever finished first
            return Corpus(records=tuple(futures[r.id].result() for r in corpus), source=corpus.source)

        backends_used["refine"] = "offline-rules"

        def offline_one(record):
            if record.transcript_raw is None:
                return _flag(record, "refine skipped: no transcript")
            refined = refine_offline(
                record.transcript_raw,
                self.confusion_lexicon,
                self.symbol_lexicon,
                hints=hints_by_id[record.id],
            )
            return record.replace(transcript_refined=refined)

        return corpus.map_records(offline_one)


def run_pipeline(config: PipelineConfig) -> tuple[MetricReport, dict]:
    """Load the corpus, execute the configured stages, write artifacts.

    Returns the metric report and the run manifest. Raises
    ConfigurationError / CorpusError for unusable configs or corpora;
    per-record backend trouble is flagged, never fatal.
    """
    if not config.corpus_path:
        raise ConfigurationError("config needs a corpus path")
    corpus = load_corpus(config.corpus_path)
    return PipelineRun(config).execute(corpus)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _data_file_hashes() -> dict:
    hashes = {}
    root = data_path(".")
    for path in sorted(root.rglob("*")):
        if path.is_file():
            hashes[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return hashes


def _write_json(path, payload) -> None:
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
