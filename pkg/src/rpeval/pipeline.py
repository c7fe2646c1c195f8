"""Batch evaluation pipeline.

Wires the stages together over a corpus and a predictions file: format
gate with judge repair, emotion-recognition panel with threshold
voting, then the deterministic metric kernels, and finally report and
manifest emission.  Scoring never mutates inputs; per-sample failures
degrade into tallied exclusions instead of aborting the run.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

from . import __version__
from .corpus import (
    AMBIGUOUS,
    DEFAULT_DELIMITERS,
    DEFAULT_EMOTION_LABELS,
    DEFAULT_TENDENCY_MAP,
    CorpusError,
    DialogueSample,
    EmotionTaxonomy,
    PredictionRecord,
    load_corpus,
    load_predictions,
    save_jsonl,
    segment_utterances,
)
from .erc import MODALITIES, aggregate, run_panel
from .formatter import REPAIRED, UNREPAIRABLE, VALID_DIRECT, format_response
from .judges import (
    BackendConfigError,
    HttpBackend,
    JudgeClient,
    MockBackend,
    ReplyCache,
    RetryPolicy,
    Sampling,
    TransportError,
    parse_rc_verdict,
)
from .metrics import (
    EcReport,
    RcdResult,
    RcMetricSummary,
    RcReport,
    TransitionMatrix,
    build_transition_matrices,
    cec,
    character_distinctiveness,
    ed,
    edd,
    krippendorff_alpha,
    mec,
    rc_score,
    rcd,
)
from .prompts import (
    PROMPT_VERSIONS,
    build_generate_prompt,
    build_rc_prompt,
    render_history,
)

logger = logging.getLogger(__name__)

RC_METRICS = ("exp", "cha", "rel")

# Role material fields each role-consistency question is grounded in.
DEFAULT_RC_ROUTING = {
    "exp": ["previous_info"],
    "cha": ["profile"],
    "rel": ["profile", "previous_info"],
}

# Report column -> panel modality, for the indecision metric.
_ED_COLUMNS = {"all": "fusion", "spe": "s", "fac": "f", "bod": "b"}

SUMMARY_KEYS = (
    "mec.lower", "mec.upper",
    "cec.lower", "cec.upper",
    "edd.intra", "edd.inter",
    "rcd.intra", "rcd.inter",
    "ed.all", "ed.spe", "ed.fac", "ed.bod",
    "rc.exp", "rc.cha", "rc.rel",
)


class ConfigError(ValueError):
    """Bad run configuration (file, schema, or values)."""


@dataclass
class BackendSpec:
    """Declarative judge backend description from the run config."""

    name: str
    kind: str  # http | mock
    endpoint: str = ""
    model: str = ""
    credential_env: str = ""
    rate_limit: float = 0.0
    timeout: float = 60.0
    fixture_dir: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise ConfigError("backend needs a non-empty name")
        if self.kind not in ("http", "mock"):
            raise ConfigError(f"backend {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "BackendSpec":
        if not isinstance(obj, Mapping):
            raise ConfigError("backend spec must be an object")
        allowed = {
            "name", "kind", "endpoint", "model", "credential_env",
            "rate_limit", "timeout", "fixture_dir",
        }
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"backend spec has unknown keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad backend spec: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "endpoint": self.endpoint,
            "model": self.model,
            "credential_env": self.credential_env,
            "rate_limit": self.rate_limit,
            "timeout": self.timeout,
            "fixture_dir": self.fixture_dir,
        }

    def build_backend(self):
        if self.kind == "mock":
            return MockBackend(self.name, fixture_dir=self.fixture_dir or None)
        try:
            return HttpBackend(
                name=self.name,
                endpoint=self.endpoint,
                model=self.model,
                credential_env=self.credential_env,
                rate_limit=self.rate_limit,
                timeout=self.timeout,
            )
        except BackendConfigError as exc:
            raise ConfigError(str(exc)) from None


def _sampling_from_dict(obj: Mapping, where: str) -> Sampling:
    allowed = {"temperature", "top_p", "max_tokens"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where} has unknown keys: {sorted(unknown)}")
    return Sampling(**obj)


def _retry_from_dict(obj: Mapping) -> RetryPolicy:
    allowed = {"max_attempts", "base_delay", "max_delay"}
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"retry policy has unknown keys: {sorted(unknown)}")
    policy = RetryPolicy(**obj)
    if policy.max_attempts < 1:
        raise ConfigError("retry max_attempts must be at least 1")
    return policy


@dataclass
class RunConfig:
    """Everything a run needs besides the corpus and predictions paths."""

    labels: tuple[str, ...] = DEFAULT_EMOTION_LABELS
    tendency_map: dict = field(default_factory=lambda: dict(DEFAULT_TENDENCY_MAP))
    delimiters: str = DEFAULT_DELIMITERS
    tau: float = 0.7
    passes: int = 2
    max_repair_attempts: int = 2
    concurrency: int = 4
    seed: int = 0
    sample_limit: Optional[int] = None
    cache_dir: str = ""
    smoothing: float = 1e-9
    divergence_mode: str = "flatten"
    rc_floor_unrepairable: bool = False
    rc_routing: dict = field(default_factory=lambda: {
        k: list(v) for k, v in DEFAULT_RC_ROUTING.items()
    })
    judge_sampling: Sampling = Sampling()
    generation_sampling: Sampling = Sampling(temperature=0.7, top_p=0.95)
    retry: RetryPolicy = RetryPolicy()
    experts: list = field(default_factory=list)
    rc_evaluators: list = field(default_factory=list)
    repair: Optional[BackendSpec] = None
    generators: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must be in (0, 1]")
        if self.passes < 1:
            raise ConfigError("passes must be at least 1")
        if self.max_repair_attempts < 1:
            raise ConfigError("max_repair_attempts must be at least 1")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be at least 1")
        if self.sample_limit is not None and self.sample_limit < 1:
            raise ConfigError("sample_limit must be positive when set")
        if self.smoothing < 0:
            raise ConfigError("smoothing must be non-negative")
        if self.divergence_mode not in ("flatten", "rows"):
            raise ConfigError(f"bad divergence_mode: {self.divergence_mode!r}")
        unknown = set(self.rc_routing) - set(RC_METRICS)
        if unknown:
            raise ConfigError(f"rc_routing has unknown metrics: {sorted(unknown)}")
        for metric, fields_ in self.rc_routing.items():
            bad = set(fields_) - {"profile", "previous_info"}
            if bad:
                raise ConfigError(
                    f"rc_routing[{metric!r}] has unknown fields: {sorted(bad)}"
                )
        names = [s.name for s in self.experts + self.rc_evaluators
                 if isinstance(s, BackendSpec)]
        if len(names) != len(set(names)):
            raise ConfigError("judge backend names must be unique")

    def taxonomy(self) -> EmotionTaxonomy:
        try:
            return EmotionTaxonomy(labels=self.labels,
                                   tendency_map=dict(self.tendency_map))
        except CorpusError as exc:
            raise ConfigError(f"bad taxonomy: {exc}") from None

    @classmethod
    def from_dict(cls, obj: Mapping) -> "RunConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("config must be a JSON object")
        obj = dict(obj)
        allowed = {
            "labels", "tendency_map", "delimiters", "tau", "passes",
            "max_repair_attempts", "concurrency", "seed", "sample_limit",
            "cache_dir", "smoothing", "divergence_mode",
            "rc_floor_unrepairable", "rc_routing", "judge_sampling",
            "generation_sampling", "retry", "experts", "rc_evaluators",
            "repair", "generators",
        }
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"config has unknown keys: {sorted(unknown)}")
        for key in ("experts", "rc_evaluators", "generators"):
            if key in obj:
                specs = obj[key]
                if not isinstance(specs, list):
                    raise ConfigError(f"{key} must be a list")
                obj[key] = [BackendSpec.from_dict(s) for s in specs]
        if obj.get("repair") is not None:
            obj["repair"] = BackendSpec.from_dict(obj["repair"])
        if "judge_sampling" in obj:
            obj["judge_sampling"] = _sampling_from_dict(
                obj["judge_sampling"], "judge_sampling")
        if "generation_sampling" in obj:
            obj["generation_sampling"] = _sampling_from_dict(
                obj["generation_sampling"], "generation_sampling")
        if "retry" in obj:
            obj["retry"] = _retry_from_dict(obj["retry"])
        try:
            config = cls(**obj)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None
        config.taxonomy()  # fail fast on a bad label scheme
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "tendency_map": dict(self.tendency_map),
            "delimiters": self.delimiters,
            "tau": self.tau,
            "passes": self.passes,
            "max_repair_attempts": self.max_repair_attempts,
            "concurrency": self.concurrency,
            "seed": self.seed,
            "sample_limit": self.sample_limit,
            "cache_dir": self.cache_dir,
            "smoothing": self.smoothing,
            "divergence_mode": self.divergence_mode,
            "rc_floor_unrepairable": self.rc_floor_unrepairable,
            "rc_routing": {k: list(v) for k, v in self.rc_routing.items()},
            "judge_sampling": {
                "temperature": self.judge_sampling.temperature,
                "top_p": self.judge_sampling.top_p,
                "max_tokens": self.judge_sampling.max_tokens,
            },
            "generation_sampling": {
                "temperature": self.generation_sampling.temperature,
                "top_p": self.generation_sampling.top_p,
                "max_tokens": self.generation_sampling.max_tokens,
            },
            "retry": {
                "max_attempts": self.retry.max_attempts,
                "base_delay": self.retry.base_delay,
                "max_delay": self.retry.max_delay,
            },
            "experts": [s.to_dict() for s in self.experts
                        if isinstance(s, BackendSpec)],
            "rc_evaluators": [s.to_dict() for s in self.rc_evaluators
                              if isinstance(s, BackendSpec)],
            "repair": self.repair.to_dict()
            if isinstance(self.repair, BackendSpec) else None,
            "generators": [s.to_dict() for s in self.generators
                           if isinstance(s, BackendSpec)],
        }

    @property
    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def group_role_dialogues(
    samples: Sequence[DialogueSample],
) -> list[tuple[str, list[DialogueSample]]]:
    """Group samples into per-role dialogue threads, order preserved.

    Samples carrying a ``dialogue_id`` group by (dialogue_id, role);
    samples without one form a thread per consecutive same-role run in
    file order, and any interleaved sample breaks such a run.
    """
    groups: dict[tuple, list[DialogueSample]] = {}
    order: list[tuple] = []
    run_counter = 0
    current_run: Optional[tuple] = None
    for sample in samples:
        role_id = sample.role.role_id
        if sample.dialogue_id is not None:
            key = ("explicit", sample.dialogue_id, role_id)
            current_run = None
        else:
            if current_run is not None and current_run[2] == role_id:
                key = current_run
            else:
                run_counter += 1
                key = ("run", run_counter, role_id)
            current_run = key
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(sample)
    return [(key[2], groups[key]) for key in order]


class _CountingJudge:
    """Thin judge wrapper that tallies replies and transport failures."""

    def __init__(self, client: JudgeClient, counters: dict, lock: threading.Lock):
        self._client = client
        self._counters = counters
        self._lock = lock

    @property
    def name(self) -> str:
        return self._client.name

    def stats(self) -> dict:
        return self._client.stats()

    def ask(self, kind, prompt, pass_index=1, sampling=None):
        try:
            text = self._client.ask(kind, prompt,
                                    pass_index=pass_index, sampling=sampling)
        except TransportError:
            with self._lock:
                self._counters["transport_failures"] += 1
            raise
        with self._lock:
            self._counters["replies"] += 1
        return text


@dataclass
class EvaluationRun:
    """Everything a finished run produced."""

    report: dict
    manifest: dict
    written: list[Path] = field(default_factory=list)


def _file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n"


class _Clients:
    """Judge clients for one run, built from config or injected objects."""

    def __init__(self, config: RunConfig, cache: Optional[ReplyCache],
                 limiter: threading.Semaphore, counters: dict,
                 lock: threading.Lock,
                 experts=None, rc_evaluators=None, repair_judge=None):
        self._config = config
        self._cache = cache
        self._limiter = limiter
        self._counters = counters
        self._lock = lock
        self.experts = self._many(experts, config.experts, "experts")
        self.rc_evaluators = self._many(
            rc_evaluators, config.rc_evaluators, "rc_evaluators")
        if repair_judge is not None:
            self.repair = self._wrap(self._client(repair_judge))
        elif config.repair is not None:
            self.repair = self._wrap(self._from_spec(config.repair))
        else:
            self.repair = None
        names = [c.name for c in self.experts + self.rc_evaluators]
        if len(names) != len(set(names)):
            raise ConfigError("judge names must be unique within a run")

    def _from_spec(self, spec: BackendSpec) -> JudgeClient:
        return JudgeClient(
            backend=spec.build_backend(),
            policy=self._config.retry,
            cache=self._cache,
            sampling=self._config.judge_sampling,
            limiter=self._limiter,
        )

    def _client(self, obj) -> JudgeClient:
        if isinstance(obj, JudgeClient):
            return obj
        if isinstance(obj, BackendSpec):
            return self._from_spec(obj)
        if hasattr(obj, "complete"):
            return JudgeClient(
                backend=obj,
                policy=self._config.retry,
                cache=self._cache,
                sampling=self._config.judge_sampling,
                limiter=self._limiter,
            )
        raise ConfigError(f"cannot build a judge from {type(obj).__name__}")

    def _wrap(self, client: JudgeClient) -> _CountingJudge:
        return _CountingJudge(client, self._counters, self._lock)

    def _many(self, injected, specs, what) -> list[_CountingJudge]:
        source = injected if injected is not None else specs
        if not source:
            raise ConfigError(f"run config declares no {what}")
        return [self._wrap(self._client(item)) for item in source]

    def all_named(self) -> list[_CountingJudge]:
        out = list(self.experts) + list(self.rc_evaluators)
        if self.repair is not None:
            out.append(self.repair)
        return out


def _gt_label_sequences(
    samples: Sequence[DialogueSample],
) -> list[tuple[str, list[list[str]]]]:
    return [
        (role_id, [s.gt_emotions for s in thread])
        for role_id, thread in group_role_dialogues(samples)
    ]


def _role_matrices(
    threads: Sequence[tuple[str, list[list[str]]]],
    taxonomy: EmotionTaxonomy,
) -> tuple[dict[str, TransitionMatrix], dict[str, TransitionMatrix]]:
    """Per-role intra/inter matrices from per-thread label sequences."""
    per_role: dict[str, list[list[list[str]]]] = {}
    for role_id, sequences in threads:
        per_role.setdefault(role_id, []).append(sequences)
    intra: dict[str, TransitionMatrix] = {}
    inter: dict[str, TransitionMatrix] = {}
    for role_id in sorted(per_role):
        m_intra, m_inter = build_transition_matrices(per_role[role_id], taxonomy)
        intra[role_id] = m_intra
        inter[role_id] = m_inter
    return intra, inter


def gt_statistics(config: RunConfig, corpus_path: str | Path) -> dict:
    """Ground-truth-side statistics: per-role transitions, distinctiveness.

    Depends only on the corpus, so its distinctiveness numbers are the
    fixed reference the relative-distinctiveness metric subtracts.
    """
    taxonomy = config.taxonomy()
    samples = load_corpus(corpus_path, taxonomy, config.delimiters)
    intra, inter = _role_matrices(_gt_label_sequences(samples), taxonomy)
    roles = sorted(intra)
    cd_intra = cd_inter = None
    if len(roles) >= 2:
        cd_intra = character_distinctiveness(
            intra, config.smoothing, config.divergence_mode)
        cd_inter = character_distinctiveness(
            inter, config.smoothing, config.divergence_mode)
    label_counts: dict[str, int] = {lab: 0 for lab in taxonomy.labels}
    per_role_samples: dict[str, int] = {r: 0 for r in roles}
    utterances = 0
    for sample in samples:
        per_role_samples[sample.role.role_id] += 1
        utterances += len(sample.gt_emotions)
        for lab in sample.gt_emotions:
            label_counts[lab] += 1
    return {
        "taxonomy_fingerprint": taxonomy.fingerprint,
        "roles": roles,
        "samples": len(samples),
        "samples_per_role": per_role_samples,
        "utterances": utterances,
        "label_counts": label_counts,
        "cd": {"intra": cd_intra, "inter": cd_inter},
        "transitions": {
            role: {"intra": intra[role].to_dict(), "inter": inter[role].to_dict()}
            for role in roles
        },
    }


def _rc_sources(sample: DialogueSample, response, materials: str,
                history_text: str) -> list[str]:
    return [
        response.facial_expression,
        response.body_movement,
        response.speech_prompt,
        response.content,
        materials,
        history_text,
        sample.user_input.content,
    ]


def _rc_materials(sample: DialogueSample, fields: Sequence[str]) -> str:
    parts = [f"Character name: {sample.role.role_id}"]
    if sample.role.user_name:
        parts.append(f"They are talking to: {sample.role.user_name}")
    for name in fields:
        if name == "profile" and sample.role.profile:
            parts.append(f"Profile: {sample.role.profile}")
        elif name == "previous_info" and sample.previous_info:
            parts.append(f"Background so far: {sample.previous_info}")
    return "\n".join(parts)


def _rc_judge_sample(sample, response, clients, config):
    """All three role-consistency questions for one sample."""
    history_text = render_history(sample.history)
    verdicts: dict[str, dict] = {}
    for metric in RC_METRICS:
        routing = config.rc_routing.get(metric, DEFAULT_RC_ROUTING[metric])
        materials = _rc_materials(sample, routing)
        sources = _rc_sources(sample, response, materials, history_text)
        prompt = build_rc_prompt(
            metric, materials, history_text,
            sample.user_input.content, response.to_json(),
        )
        retry_prompt = build_rc_prompt(
            metric, materials, history_text,
            sample.user_input.content, response.to_json(), retry=True,
        )
        per_evaluator: dict[str, Optional[object]] = {}
        for evaluator in clients.rc_evaluators:
            verdict = None
            for attempt_prompt in (prompt, retry_prompt):
                try:
                    text = evaluator.ask("rc", attempt_prompt)
                except TransportError:
                    continue
                verdict = parse_rc_verdict(text, sources=sources)
                if verdict is not None:
                    break
            if verdict is None:
                logger.warning(
                    "rc %s: evaluator %s unusable for sample %s",
                    metric, evaluator.name, sample.sample_id,
                )
            per_evaluator[evaluator.name] = verdict
        verdicts[metric] = per_evaluator
    return verdicts


def evaluate(
    config: RunConfig,
    corpus_path: str | Path,
    predictions_path: str | Path,
    out_dir: Optional[str | Path] = None,
    experts=None,
    rc_evaluators=None,
    repair_judge=None,
) -> EvaluationRun:
    """Run the full pipeline and assemble the report and manifest.

    ``experts``, ``rc_evaluators`` and ``repair_judge`` accept backend
    or client objects and override the config-declared backends, which
    keeps the whole pipeline drivable from tests without HTTP.
    """
    t0 = time.monotonic()
    taxonomy = config.taxonomy()
    samples = load_corpus(corpus_path, taxonomy, config.delimiters)
    predictions = load_predictions(predictions_path)
    by_id = {s.sample_id: s for s in samples}
    unknown = sorted(p.sample_id for p in predictions if p.sample_id not in by_id)
    if unknown:
        raise CorpusError(
            f"predictions reference unknown samples: {unknown[:5]}"
            + ("..." if len(unknown) > 5 else "")
        )
    if config.sample_limit is not None and config.sample_limit < len(predictions):
        rng = random.Random(config.seed)
        keep = set(rng.sample(sorted(p.sample_id for p in predictions),
                              config.sample_limit))
        predictions = [p for p in predictions if p.sample_id in keep]
    predictions = sorted(predictions, key=lambda p: p.sample_id)
    missing = sorted(set(by_id) - {p.sample_id for p in predictions})

    cache = ReplyCache(config.cache_dir) if config.cache_dir else None
    limiter = threading.Semaphore(config.concurrency)
    counters = {"replies": 0, "transport_failures": 0}
    lock = threading.Lock()
    clients = _Clients(config, cache, limiter, counters, lock,
                       experts=experts, rc_evaluators=rc_evaluators,
                       repair_judge=repair_judge)

    # Stage 1: format gate.
    def _gate(pred: PredictionRecord):
        return pred.sample_id, format_response(
            pred.raw_output, clients.repair,
            max_attempts=config.max_repair_attempts,
        )

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        outcomes = dict(pool.map(_gate, predictions))

    formatted_ids = sorted(
        sid for sid, out in outcomes.items() if out.response is not None
    )
    tally = {
        "corpus_samples": len(samples),
        "predictions": len(predictions),
        "missing_predictions": len(missing),
        "valid_direct": sum(
            1 for o in outcomes.values() if o.status == VALID_DIRECT),
        "repaired": sum(1 for o in outcomes.values() if o.status == REPAIRED),
        "dropped_format": sum(
            1 for o in outcomes.values() if o.status == UNREPAIRABLE),
    }

    # Stage 2: emotion-recognition panel over formatted responses.
    def _judge_emotions(sample_id: str):
        response = outcomes[sample_id].response
        seg = segment_utterances(response.content, config.delimiters)
        results = run_panel(response, seg, clients.experts, taxonomy,
                            passes=config.passes)
        return sample_id, aggregate(results, tau=config.tau,
                                    n_utterances=seg.count)

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        panel = dict(pool.map(_judge_emotions, formatted_ids))

    voted = {sid: agg for sid, agg in panel.items() if agg.has_votes}
    tally["dropped_erc"] = len(panel) - len(voted)
    ec_ids = sorted(voted)
    tally["ec_samples"] = len(ec_ids)

    # Stage 3: role-consistency judging over formatted responses.
    def _judge_rc(sample_id: str):
        return sample_id, _rc_judge_sample(
            by_id[sample_id], outcomes[sample_id].response, clients, config)

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        rc_raw = dict(pool.map(_judge_rc, formatted_ids))

    # Stage 4: deterministic metric assembly.
    ec_report = _assemble_ec(config, taxonomy, samples, by_id, voted, ec_ids)
    rc_report, rc_tally = _assemble_rc(config, clients, outcomes, rc_raw,
                                       formatted_ids)
    tally.update(rc_tally)

    if counters["replies"] == 0 and counters["transport_failures"] > 0:
        raise TransportError(
            "no judge request succeeded in this run; backends unreachable")

    report = _assemble_report(ec_report, rc_report, tally)
    judge_stats = {c.name: c.stats() for c in clients.all_named()}
    lookups = sum(s["cache_hits"] + s["cache_misses"]
                  for s in judge_stats.values())
    hits = sum(s["cache_hits"] for s in judge_stats.values())
    manifest = {
        "tool": {"name": "rpeval", "version": __version__},
        "created_at": datetime.now(timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.monotonic() - t0, 3),
        "config_digest": config.digest,
        "corpus_digest": _file_digest(corpus_path),
        "predictions_digest": _file_digest(predictions_path),
        "taxonomy_fingerprint": taxonomy.fingerprint,
        "prompt_versions": dict(PROMPT_VERSIONS),
        "judges": judge_stats,
        "cache": {
            "enabled": cache is not None,
            "lookups": lookups,
            "hits": hits,
            "hit_ratio": (hits / lookups) if lookups else 0.0,
        },
        "counts": dict(tally),
    }
    written: list[Path] = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.json"
        report_path.write_text(_dump_json(report), encoding="utf-8")
        manifest_path = out / "manifest.json"
        manifest_path.write_text(_dump_json(manifest), encoding="utf-8")
        written = [report_path, manifest_path]
    return EvaluationRun(report=report, manifest=manifest, written=written)


def _assemble_ec(config, taxonomy, samples, by_id, voted, ec_ids) -> Optional[EcReport]:
    if not ec_ids:
        logger.warning("no samples survived to emotion scoring")
        return None
    mec_samples = [
        (by_id[sid].gt_emotions, voted[sid].fusion_labels) for sid in ec_ids
    ]
    mec_lower = mec(mec_samples, taxonomy, level="lower")
    mec_upper = mec(mec_samples, taxonomy, level="upper")

    rows = {m: [] for m in MODALITIES}
    for sid in ec_ids:
        for m in MODALITIES:
            rows[m].extend(voted[sid].labels(m))
    table = [rows[m] for m in MODALITIES]
    try:
        cec_lower = cec(table, taxonomy, level="lower")
        cec_upper = cec(table, taxonomy, level="upper")
    except ValueError as exc:
        logger.warning("cross-modal agreement undefined: %s", exc)
        cec_lower = cec_upper = None

    ed_values: dict[str, Optional[float]] = {}
    for column, modality in _ED_COLUMNS.items():
        dists = []
        for sid in ec_ids:
            dists.extend(voted[sid].distributions(modality))
        ed_values[column] = ed(dists, taxonomy) if dists else None

    gt_threads = _gt_label_sequences(samples)
    gt_intra, gt_inter = _role_matrices(gt_threads, taxonomy)
    rpa_threads = []
    for role_id, thread in group_role_dialogues(samples):
        sequences = []
        for sample in thread:
            agg = voted.get(sample.sample_id)
            if agg is None:
                # absent or dropped prediction: breaks transition chains
                sequences.append([AMBIGUOUS])
            else:
                sequences.append(agg.fusion_labels)
        rpa_threads.append((role_id, sequences))
    rpa_intra, rpa_inter = _role_matrices(rpa_threads, taxonomy)

    edd_intra = edd(gt_intra, rpa_intra, config.smoothing, config.divergence_mode)
    edd_inter = edd(gt_inter, rpa_inter, config.smoothing, config.divergence_mode)
    if len(gt_intra) >= 2:
        rcd_intra = rcd(gt_intra, rpa_intra, config.smoothing,
                        config.divergence_mode)
        rcd_inter = rcd(gt_inter, rpa_inter, config.smoothing,
                        config.divergence_mode)
    else:
        logger.warning("distinctiveness needs at least two roles; reporting null")
        rcd_intra = RcdResult(cd_gt=None, cd_rpa=None)
        rcd_inter = RcdResult(cd_gt=None, cd_rpa=None)

    return EcReport(
        mec_lower=mec_lower, mec_upper=mec_upper,
        cec_lower=cec_lower, cec_upper=cec_upper,
        edd_intra=edd_intra, edd_inter=edd_inter,
        rcd_intra=rcd_intra, rcd_inter=rcd_inter,
        ed=ed_values,
    )


def _assemble_rc(config, clients, outcomes, rc_raw, formatted_ids):
    evaluator_names = [c.name for c in clients.rc_evaluators]
    floored = [
        sid for sid, out in sorted(outcomes.items())
        if out.status == UNREPAIRABLE and config.rc_floor_unrepairable
    ]
    summaries: dict[str, RcMetricSummary] = {}
    for metric in RC_METRICS:
        sample_scores: list[float] = []
        dropped = 0
        per_eval_scores: dict[str, list[int]] = {n: [] for n in evaluator_names}
        for sid in formatted_ids:
            result = rc_score(rc_raw[sid][metric])
            for name, value in result.per_evaluator.items():
                if value is not None:
                    per_eval_scores[name].append(value)
            if result.score is None:
                dropped += 1
            else:
                sample_scores.append(result.score)
        sample_scores.extend(1.0 for _ in floored)
        summaries[metric] = RcMetricSummary(
            score=(sum(sample_scores) / len(sample_scores)
                   if sample_scores else None),
            per_evaluator={
                name: (sum(v) / len(v) if v else None)
                for name, v in per_eval_scores.items()
            },
            scored=len(sample_scores),
            dropped=dropped,
        )
    tally = {"rc_floored": len(floored),
             "rc_dropped": {m: summaries[m].dropped for m in RC_METRICS}}
    return RcReport(metrics=summaries), tally


def _assemble_report(ec_report: Optional[EcReport], rc_report: RcReport,
                     tally: Mapping) -> dict:
    if ec_report is not None:
        ec_dict = ec_report.to_dict()
        per_class = {
            "lower": {x: s.to_dict()
                      for x, s in ec_report.mec_lower.per_class.items()},
            "upper": {x: s.to_dict()
                      for x, s in ec_report.mec_upper.per_class.items()},
        }
    else:
        ec_dict = {
            "mec": {"lower": None, "upper": None},
            "cec": {"lower": None, "upper": None},
            "edd": {"intra": None, "inter": None},
            "rcd": {"intra": RcdResult(None, None).to_dict(),
                    "inter": RcdResult(None, None).to_dict()},
            "ed": {k: None for k in _ED_COLUMNS},
        }
        per_class = {"lower": {}, "upper": {}}
    metrics_dict = dict(ec_dict)
    metrics_dict["rc"] = rc_report.to_dict()
    summary = {
        "mec.lower": metrics_dict["mec"]["lower"],
        "mec.upper": metrics_dict["mec"]["upper"],
        "cec.lower": metrics_dict["cec"]["lower"],
        "cec.upper": metrics_dict["cec"]["upper"],
        "edd.intra": metrics_dict["edd"]["intra"],
        "edd.inter": metrics_dict["edd"]["inter"],
        "rcd.intra": metrics_dict["rcd"]["intra"]["value"],
        "rcd.inter": metrics_dict["rcd"]["inter"]["value"],
        "ed.all": metrics_dict["ed"]["all"],
        "ed.spe": metrics_dict["ed"]["spe"],
        "ed.fac": metrics_dict["ed"]["fac"],
        "ed.bod": metrics_dict["ed"]["bod"],
        "rc.exp": metrics_dict["rc"]["exp"]["score"],
        "rc.cha": metrics_dict["rc"]["cha"]["score"],
        "rc.rel": metrics_dict["rc"]["rel"]["score"],
    }
    assert tuple(summary) == SUMMARY_KEYS
    return {
        "summary": summary,
        "metrics": metrics_dict,
        "per_class": per_class,
        "counts": dict(tally),
    }


def generate(
    config: RunConfig,
    backend_name: str,
    corpus_path: str | Path,
    out_path: str | Path,
    generator=None,
) -> list[PredictionRecord]:
    """Produce a predictions file by role-playing every corpus sample.

    Uses the generation sampling settings (not the greedy judge ones);
    the backend is picked by name from the config's ``generators``.
    """
    taxonomy = config.taxonomy()
    samples = load_corpus(corpus_path, taxonomy, config.delimiters)
    if generator is None:
        spec = next((s for s in config.generators if s.name == backend_name), None)
        if spec is None:
            raise ConfigError(f"no generator backend named {backend_name!r}")
        client = JudgeClient(
            backend=spec.build_backend(),
            policy=config.retry,
            cache=ReplyCache(config.cache_dir) if config.cache_dir else None,
            sampling=config.generation_sampling,
        )
    elif isinstance(generator, JudgeClient):
        client = generator
    else:
        client = JudgeClient(backend=generator, policy=config.retry,
                             sampling=config.generation_sampling)
    records = []
    for sample in samples:
        materials = _rc_materials(sample, ["profile", "previous_info"])
        prompt = build_generate_prompt(
            materials, render_history(sample.history),
            sample.role.user_name, sample.user_input.content,
        )
        text = client.ask("generate", prompt,
                          sampling=config.generation_sampling)
        records.append(PredictionRecord(sample_id=sample.sample_id,
                                        raw_output=text))
    save_jsonl(out_path, [r.to_record() for r in records])
    return records


def agreement(kind: str, rows: Sequence[Sequence[object]]) -> float:
    """Standalone inter-rater agreement over a raters-by-units table."""
    if kind not in ("nominal", "ordinal"):
        raise ConfigError(f"agreement kind must be nominal or ordinal, got {kind!r}")
    try:
        return krippendorff_alpha(rows, level=kind)
    except ValueError as exc:
        raise CorpusError(str(exc)) from None


def load_agreement_table(path: str | Path) -> list[list]:
    """Read a raters-by-units table from .csv or .json.

    Rows are raters.  Empty CSV cells (and JSON nulls) mark missing
    ratings; numeric-looking CSV cells are parsed as numbers.
    """
    path = Path(path)
    if path.suffix.lower() == ".json":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: invalid JSON: {exc}") from None
        if (not isinstance(obj, list)
                or not all(isinstance(r, list) for r in obj)):
            raise CorpusError(f"{path}: expected a list of rater rows")
        return obj
    rows: list[list] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for record in csv.reader(fh):
            row: list = []
            for cell in record:
                cell = cell.strip()
                if not cell:
                    row.append(None)
                    continue
                try:
                    row.append(float(cell))
                except ValueError:
                    row.append(cell)
            rows.append(row)
    if not rows:
        raise CorpusError(f"{path}: table is empty")
    return rows


def flatten_report(report: Mapping) -> dict:
    """Dotted-key view of a report; values are scalars or None."""
    flat: dict = {}
    def walk(node, prefix):
        if isinstance(node, Mapping):
            for key in sorted(node):
                walk(node[key], f"{prefix}.{key}" if prefix else str(key))
        else:
            flat[prefix] = node
    walk(report, "")
    return flat


def render_report(report: Mapping, fmt: str) -> str:
    """Serialize a report document as json, csv, or markdown."""
    if fmt == "json":
        return _dump_json(dict(report))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in flatten_report(report).items():
            if value is None:
                cell = ""
            elif isinstance(value, float):
                cell = repr(value)
            else:
                cell = str(value)
            writer.writerow([key, cell])
        return buf.getvalue()
    if fmt == "md":
        lines = ["# Evaluation report", "", "| Metric | Value |", "| --- | --- |"]
        summary = report.get("summary", {})
        for key in SUMMARY_KEYS:
            value = summary.get(key)
            shown = "n/a" if value is None else f"{value:.6f}"
            lines.append(f"| {key} | {shown} |")
        counts = report.get("counts", {})
        if counts:
            lines += ["", "## Exclusions and tallies", "",
                      "| Count | Value |", "| --- | --- |"]
            for key, value in sorted(counts.items()):
                lines.append(f"| {key} | {value} |")
        per_class = report.get("per_class", {}).get("lower", {})
        if per_class:
            lines += ["", "## Per-class emotion F1", "",
                      "| Label | n | precision | recall | f1 |",
                      "| --- | --- | --- | --- | --- |"]
            for label, stats in per_class.items():
                lines.append(
                    f"| {label} | {stats['n']} | {stats['precision']:.4f} "
                    f"| {stats['recall']:.4f} | {stats['f1']:.4f} |"
                )
        return "\n".join(lines) + "\n"
    raise ConfigError(f"unknown report format: {fmt!r}")


def reimport_csv_report(path: str | Path) -> dict:
    """Read back a csv report into a flat dotted-key mapping."""
    out: dict = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["key", "value"]:
            raise CorpusError(f"{path}: not a report csv")
        for key, cell in reader:
            if cell == "":
                out[key] = None
                continue
            try:
                out[key] = int(cell)
            except ValueError:
                try:
                    out[key] = float(cell)
                except ValueError:
                    out[key] = cell
    return out


def write_report_files(report: Mapping, out_dir: str | Path,
                       fmt: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"report.{fmt}"
    path.write_text(render_report(report, fmt), encoding="utf-8")
    return path
