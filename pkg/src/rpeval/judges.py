"""Judge backends and the retrying, caching client that drives them.

A judge is anything that turns a prompt into text: a remote
OpenAI-compatible endpoint in production, a fixture-backed mock in
tests.  ``JudgeClient`` layers retry with exponential backoff, an
on-disk reply cache keyed by request digest, and simple call counters
on top of any backend.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Protocol, Sequence, runtime_checkable

import requests

logger = logging.getLogger(__name__)


class BackendConfigError(ValueError):
    """Misconfiguration (bad credentials, unknown backend); never retried."""


class TransportError(RuntimeError):
    """A transient delivery failure; eligible for retry."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class Sampling:
    """Decoding parameters sent with every judge request.

    Judges default to greedy decoding so runs are reproducible; the
    higher-temperature settings used to *generate* role-play responses
    live in the run config, not here.
    """

    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024


@dataclass(frozen=True)
class JudgeRequest:
    """One unit of judge work; the digest doubles as a cache key.

    ``judge`` is the asking judge's name.  It is part of the key so
    panel members never share cached replies: the same prompt sent to
    two different judges is two different opinions.
    """

    kind: str  # repair | erc | rc | generate
    prompt: str
    sampling: Sampling = Sampling()
    pass_index: int = 1
    judge: str = ""

    @property
    def idempotency_key(self) -> str:
        payload = json.dumps(
            [
                self.judge,
                self.kind,
                self.prompt,
                self.sampling.temperature,
                self.sampling.top_p,
                self.sampling.max_tokens,
                self.pass_index,
            ],
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class JudgeReply:
    text: str
    provenance: str  # remote | cache | mock
    latency: float = 0.0
    attempt: int = 1

    def __post_init__(self) -> None:
        if self.provenance not in ("remote", "cache", "mock"):
            raise ValueError(f"bad provenance: {self.provenance!r}")
        if self.attempt < 1:
            raise ValueError("attempt counts from 1")


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    max_delay: float = 30.0

    def delay(self, attempt: int) -> float:
        """Backoff before retry number ``attempt`` (attempt counts from 1)."""
        return min(self.max_delay, self.base_delay * (2 ** (attempt - 1)))


@runtime_checkable
class JudgeBackend(Protocol):
    name: str
    provenance: str

    def complete(self, prompt: str, sampling: Sampling) -> str: ...


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class MockBackend:
    """Deterministic stand-in for a remote judge.

    Replies come from, in order: a handler callable, an in-memory
    fixture table keyed by prompt digest, or ``<digest>.txt`` files in a
    fixture directory.  A prompt with no fixture raises
    ``TransportError`` so exhaustion paths stay testable.
    """

    provenance = "mock"

    def __init__(
        self,
        name: str = "mock",
        fixtures: Optional[Mapping[str, str]] = None,
        fixture_dir: Optional[str | Path] = None,
        handler: Optional[Callable[[str, Sampling], str]] = None,
    ):
        self.name = name
        self.fixtures = dict(fixtures or {})
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.handler = handler
        self.calls = 0

    def add_reply(self, prompt: str, text: str) -> None:
        self.fixtures[prompt_digest(prompt)] = text

    def complete(self, prompt: str, sampling: Sampling) -> str:
        self.calls += 1
        if self.handler is not None:
            return self.handler(prompt, sampling)
        key = prompt_digest(prompt)
        if key in self.fixtures:
            return self.fixtures[key]
        if self.fixture_dir is not None:
            path = self.fixture_dir / f"{key}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        raise TransportError(f"{self.name}: no fixture for prompt digest {key[:12]}")


# HTTP statuses worth retrying; everything else 4xx is a hard failure.
_RETRIABLE_STATUSES = {408, 409, 425, 429, 500, 502, 503, 504}


class HttpBackend:
    """OpenAI-compatible chat-completions backend.

    Credentials come from the environment variable named by
    ``credential_env``; a missing credential or an auth rejection is a
    configuration error, not a transient fault.  An optional
    ``rate_limit`` (requests per second) is enforced across threads.
    """

    provenance = "remote"

    def __init__(
        self,
        name: str,
        endpoint: str,
        model: str,
        credential_env: str = "",
        rate_limit: float = 0.0,
        timeout: float = 60.0,
    ):
        if not endpoint:
            raise BackendConfigError(f"backend {name!r}: endpoint is required")
        if not model:
            raise BackendConfigError(f"backend {name!r}: model is required")
        self.name = name
        self.endpoint = endpoint
        self.model = model
        self.credential_env = credential_env
        self.timeout = timeout
        self._min_interval = 1.0 / rate_limit if rate_limit > 0 else 0.0
        self._gate = threading.Lock()
        self._next_slot = 0.0

    def _throttle(self) -> None:
        if self._min_interval <= 0:
            return
        with self._gate:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self._min_interval
        if wait > 0:
            time.sleep(wait)

    def complete(self, prompt: str, sampling: Sampling) -> str:
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            token = os.environ.get(self.credential_env, "")
            if not token:
                raise BackendConfigError(
                    f"backend {self.name!r}: environment variable "
                    f"{self.credential_env!r} is not set"
                )
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
            "max_tokens": sampling.max_tokens,
        }
        self._throttle()
        try:
            resp = requests.post(
                self.endpoint, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransportError(f"backend {self.name!r}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise BackendConfigError(
                f"backend {self.name!r}: authentication rejected "
                f"(HTTP {resp.status_code})"
            )
        if resp.status_code in _RETRIABLE_STATUSES:
            raise TransportError(
                f"backend {self.name!r}: HTTP {resp.status_code}"
            )
        if resp.status_code != 200:
            raise BackendConfigError(
                f"backend {self.name!r}: unexpected HTTP {resp.status_code}: "
                f"{resp.text[:200]}"
            )
        try:
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(
                f"backend {self.name!r}: malformed completion payload: {exc}"
            ) from exc


class ReplyCache:
    """Content-addressed reply store.

    Layout is stable: ``<root>/<first two hex chars>/<key>.json`` where
    ``key`` is the request digest and the file holds
    ``{"kind": ..., "text": ...}``.  Writes go through a temp file and
    ``os.replace`` so concurrent writers never expose partial records.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str) -> Optional[str]:
        path = self._path(key)
        try:
            with open(path, encoding="utf-8") as fh:
                record = json.load(fh)
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, OSError):
            logger.warning("discarding unreadable cache entry %s", path)
            return None
        text = record.get("text")
        return text if isinstance(text, str) else None

    def put(self, key: str, kind: str, text: str) -> None:
        path = self._path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        record = json.dumps({"kind": kind, "text": text}, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(record)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise


class JudgeClient:
    """Backend wrapper adding cache lookup, retries and counters.

    ``sleep`` is injectable so retry schedules are testable without wall
    clock time; ``limiter`` (any semaphore-like object) bounds in-flight
    backend calls when the pipeline fans out across threads.
    """

    def __init__(
        self,
        backend: JudgeBackend,
        policy: RetryPolicy = RetryPolicy(),
        cache: Optional[ReplyCache] = None,
        sampling: Sampling = Sampling(),
        limiter: Optional[threading.Semaphore] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.policy = policy
        self.cache = cache
        self.sampling = sampling
        self.limiter = limiter
        self.sleep = sleep
        self._lock = threading.Lock()
        self.cache_hits = 0
        self.cache_misses = 0
        self.backend_calls = 0

    @property
    def name(self) -> str:
        return self.backend.name

    def stats(self) -> dict:
        with self._lock:
            return {
                "cache_hits": self.cache_hits,
                "cache_misses": self.cache_misses,
                "backend_calls": self.backend_calls,
            }

    def call(self, request: JudgeRequest) -> JudgeReply:
        key = request.idempotency_key
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                with self._lock:
                    self.cache_hits += 1
                return JudgeReply(text=cached, provenance="cache")
            with self._lock:
                self.cache_misses += 1
        last_error: Optional[TransportError] = None
        for attempt in range(1, self.policy.max_attempts + 1):
            started = time.monotonic()
            try:
                if self.limiter is not None:
                    with self.limiter:
                        text = self.backend.complete(request.prompt, request.sampling)
                else:
                    text = self.backend.complete(request.prompt, request.sampling)
            except TransportError as exc:
                last_error = exc
                logger.warning(
                    "judge %s attempt %d/%d failed: %s",
                    self.name,
                    attempt,
                    self.policy.max_attempts,
                    exc,
                )
                if attempt < self.policy.max_attempts:
                    self.sleep(self.policy.delay(attempt))
                continue
            finally:
                with self._lock:
                    self.backend_calls += 1
            latency = time.monotonic() - started
            if self.cache is not None:
                self.cache.put(key, request.kind, text)
            return JudgeReply(
                text=text,
                provenance=getattr(self.backend, "provenance", "remote"),
                latency=latency,
                attempt=attempt,
            )
        raise TransportError(
            f"judge {self.name!r} exhausted {self.policy.max_attempts} attempts: "
            f"{last_error}",
            attempts=self.policy.max_attempts,
        )

    def ask(
        self,
        kind: str,
        prompt: str,
        pass_index: int = 1,
        sampling: Optional[Sampling] = None,
    ) -> str:
        """Convenience wrapper: build a request, return the reply text."""
        request = JudgeRequest(
            kind=kind,
            prompt=prompt,
            sampling=sampling or self.sampling,
            pass_index=pass_index,
            judge=self.name,
        )
        return self.call(request).text


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def extract_json_object(text: str) -> Optional[str]:
    """Pull the first complete JSON object out of free-form judge text.

    Handles code fences and leading/trailing prose by scanning for a
    balanced top-level ``{...}`` while respecting string literals.
    """
    candidates = [m.group(1) for m in _FENCE_RE.finditer(text)]
    candidates.append(text)
    for candidate in candidates:
        start = candidate.find("{")
        while start != -1:
            depth = 0
            in_string = False
            escaped = False
            for i in range(start, len(candidate)):
                ch = candidate[i]
                if in_string:
                    if escaped:
                        escaped = False
                    elif ch == "\\":
                        escaped = True
                    elif ch == '"':
                        in_string = False
                elif ch == '"':
                    in_string = True
                elif ch == "{":
                    depth += 1
                elif ch == "}":
                    depth -= 1
                    if depth == 0:
                        return candidate[start : i + 1]
            start = candidate.find("{", start + 1)
    return None


@dataclass
class RcVerdict:
    """Parsed role-consistency judgement: evidence lists plus flags.

    Flags are derived, never taken from the reply: a side agrees or
    disagrees exactly when it has at least one surviving evidence span.
    """

    agree_evidence: list[str] = field(default_factory=list)
    disagree_evidence: list[str] = field(default_factory=list)

    @property
    def agree_flag(self) -> int:
        return 1 if self.agree_evidence else 0

    @property
    def disagree_flag(self) -> int:
        return 1 if self.disagree_evidence else 0


def _coerce_spans(value: object) -> Optional[list[str]]:
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list):
        return None
    spans = []
    for item in value:
        if not isinstance(item, str):
            return None
        item = item.strip()
        if item:
            spans.append(item)
    return spans


def parse_rc_verdict(
    text: str, sources: Optional[Sequence[str]] = None
) -> Optional[RcVerdict]:
    """Parse a role-consistency reply; ``None`` when it is unusable.

    When ``sources`` is given, every evidence span must occur verbatim in
    at least one source string; spans that do not are dropped, which can
    flip a side's flag to 0.
    """
    blob = extract_json_object(text)
    if blob is None:
        return None
    try:
        obj = json.loads(blob)
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    agree = _coerce_spans(obj.get("agree_evidence"))
    disagree = _coerce_spans(obj.get("disagree_evidence"))
    if agree is None or disagree is None:
        return None
    if sources is not None:
        agree = [s for s in agree if any(s in src for src in sources)]
        disagree = [s for s in disagree if any(s in src for src in sources)]
    return RcVerdict(agree_evidence=agree, disagree_evidence=disagree)
