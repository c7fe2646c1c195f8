"""Format gate for raw model output.

Every prediction must become a valid four-field multimodal response
before any scoring happens.  Validation is strict but tolerant of the
usual model tics (code fences, prose around the object, alias key
names).  Output that still fails goes through a bounded judge-assisted
repair loop; what cannot be repaired is excluded from scoring and
tallied, never silently guessed at.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Mapping, Optional

from .corpus import RESPONSE_FIELDS, MultimodalResponse
from .judges import TransportError, extract_json_object
from .prompts import build_repair_prompt

logger = logging.getLogger(__name__)

VALID_DIRECT = "valid_direct"
REPAIRED = "repaired"
UNREPAIRABLE = "unrepairable"

# Key spellings accepted and rewritten to the canonical field names.
DEFAULT_KEY_ALIASES: dict[str, str] = {
    "face": "facial_expression",
    "facial": "facial_expression",
    "expression": "facial_expression",
    "face_expression": "facial_expression",
    "body": "body_movement",
    "movement": "body_movement",
    "body_language": "body_movement",
    "gesture": "body_movement",
    "speech": "speech_prompt",
    "voice": "speech_prompt",
    "tone": "speech_prompt",
    "speech_intonation": "speech_prompt",
    "text": "content",
    "reply": "content",
    "message": "content",
}


@dataclass
class FormatOutcome:
    """Result of pushing one raw output through the gate."""

    status: str  # valid_direct | repaired | unrepairable
    response: Optional[MultimodalResponse]
    repair_attempts: int = 0
    diagnostic: str = ""

    def __post_init__(self) -> None:
        if self.status not in (VALID_DIRECT, REPAIRED, UNREPAIRABLE):
            raise ValueError(f"bad format status: {self.status!r}")
        if (self.response is None) != (self.status == UNREPAIRABLE):
            raise ValueError("response must be present exactly when usable")


def _normalize_keys(obj: Mapping, aliases: Mapping[str, str]) -> Optional[dict]:
    out: dict = {}
    for key, value in obj.items():
        if not isinstance(key, str):
            return None
        canon = key.strip().lower()
        canon = aliases.get(canon, canon)
        if canon in out:
            return None  # two spellings collapsed onto one field
        out[canon] = value
    return out


def validate(
    raw: str, aliases: Mapping[str, str] = DEFAULT_KEY_ALIASES
) -> Optional[MultimodalResponse]:
    """Parse raw output into a response, or ``None`` if it fails.

    Accepts the object bare or embedded in fences/prose, accepts alias
    key spellings, and requires exactly the four canonical fields with
    string values and non-empty content after normalization.
    """
    if not raw or not raw.strip():
        return None
    candidates = [raw]
    extracted = extract_json_object(raw)
    if extracted is not None and extracted != raw:
        candidates.append(extracted)
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict):
            continue
        normalized = _normalize_keys(obj, aliases)
        if normalized is None:
            continue
        if set(normalized) != set(RESPONSE_FIELDS):
            continue
        if not all(isinstance(normalized[k], str) for k in RESPONSE_FIELDS):
            continue
        cleaned = {k: normalized[k].strip() for k in RESPONSE_FIELDS}
        if not cleaned["content"]:
            continue
        return MultimodalResponse(**cleaned)
    return None


def repair(
    raw: str,
    judge,
    max_attempts: int = 2,
    aliases: Mapping[str, str] = DEFAULT_KEY_ALIASES,
) -> FormatOutcome:
    """Ask the repair judge to rewrite invalid output, up to ``max_attempts``.

    ``judge`` is any object with ``ask(kind, prompt, pass_index) -> str``
    (a ``JudgeClient`` fits).  Calling this on output that already
    validates is a caller bug and raises.
    """
    if validate(raw, aliases) is not None:
        raise ValueError("repair called on output that already validates")
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    diagnostic = "invalid format"
    for attempt in range(1, max_attempts + 1):
        prompt = build_repair_prompt(raw, attempt=attempt)
        try:
            reply = judge.ask("repair", prompt, pass_index=attempt)
        except TransportError as exc:
            diagnostic = f"repair attempt {attempt}: {exc}"
            logger.warning(diagnostic)
            continue
        response = validate(reply, aliases)
        if response is not None:
            return FormatOutcome(
                status=REPAIRED, response=response, repair_attempts=attempt
            )
        diagnostic = f"repair attempt {attempt}: judge reply failed validation"
    return FormatOutcome(
        status=UNREPAIRABLE,
        response=None,
        repair_attempts=max_attempts,
        diagnostic=diagnostic,
    )


def format_response(
    raw: str,
    judge=None,
    max_attempts: int = 2,
    aliases: Mapping[str, str] = DEFAULT_KEY_ALIASES,
) -> FormatOutcome:
    """Full gate: direct validation first, then repair if a judge is given."""
    response = validate(raw, aliases)
    if response is not None:
        return FormatOutcome(status=VALID_DIRECT, response=response)
    if judge is None:
        return FormatOutcome(
            status=UNREPAIRABLE,
            response=None,
            diagnostic="invalid format and no repair judge configured",
        )
    return repair(raw, judge, max_attempts=max_attempts, aliases=aliases)
