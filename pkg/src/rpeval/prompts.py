"""Prompt templates for the judge panels.

Each template carries a version tag that feeds the run manifest, so a
report can always be traced back to the exact wording the judges saw.
Templates are plain ``str.format`` strings; builders below fill them.
"""

from __future__ import annotations

import json
from typing import Mapping, Sequence

PROMPT_VERSIONS = {
    "repair": "repair-v1",
    "erc": "erc-v1",
    "rc": "rc-v1",
    "generate": "generate-v1",
}

_RESPONSE_SCHEMA = """\
{
  "facial_expression": "<short description of the character's face>",
  "body_movement": "<short description of the character's posture and gestures>",
  "speech_prompt": "<voice tone and delivery cues>",
  "content": "<the spoken reply text, non-empty>"
}"""

REPAIR_PROMPT = """\
You are a strict JSON formatter. The text below was produced by a \
role-playing model and was supposed to be a single JSON object with \
exactly these four string fields:

{schema}

The text failed validation. Rewrite it as one valid JSON object with \
exactly those four keys and nothing else. Preserve the original wording \
of every field as closely as possible; fix only structural problems \
such as missing quotation marks, stray text around the object, wrong \
key names, or truncated braces. If a field is genuinely absent, use an \
empty string, except "content" which must carry the spoken text.

Reply with the JSON object only. No code fences, no commentary.

Text to repair:
{raw}"""

# Appended on the second repair attempt so the retry is not a verbatim
# duplicate of a request that already failed once.
REPAIR_RETRY_SUFFIX = """

Your previous rewrite still failed validation. Output exactly one JSON \
object with the four keys facial_expression, body_movement, \
speech_prompt, content and string values only."""


ERC_PROMPT = """\
You are an expert in emotion recognition. A role-playing character \
produced the multimodal response below. Its spoken text splits into \
{n_utterances} utterance(s):

{utterances}

Full response:
{response}

For every utterance, judge the emotion conveyed by each channel:
- "emos_f": the facial expression
- "emos_b": the body movement
- "emos_s": the speech tone
- "emos_fusion": all channels combined

Each value must be a list of exactly {n_utterances} label(s), one per \
utterance, in order. Every label must come from this closed set:
{labels}

Reply with one JSON object holding exactly the four keys above. No \
other text."""

ERC_RETRY_SUFFIX = """

Reminder: reply with a single JSON object. Each of emos_f, emos_b, \
emos_s, emos_fusion must be a list of exactly {n_utterances} label(s), \
and every label must be spelled exactly as one of: {labels}."""


_RC_QUESTIONS = {
    "exp": (
        "Does the response show the knowledge and experience this character "
        "has accumulated, and avoid knowledge the character could not have?"
    ),
    "cha": (
        "Does the response match the character's personality, temperament "
        "and habitual manner across all channels?"
    ),
    "rel": (
        "Does the response reflect the character's relationships, staying "
        "consistent with how the character relates to the people involved?"
    ),
}

RC_PROMPT = """\
You are a meticulous evaluator of role-playing quality.

Character materials:
{materials}

Conversation so far:
{history}

Latest user input:
{user_input}

Response under evaluation:
{response}

Question: {question}

Collect evidence on both sides. Quote supporting passages verbatim from \
the response or the character materials; do not paraphrase. If a side \
has no evidence, give it an empty list.

Reply with one JSON object, no other text:
{{"agree_evidence": ["<verbatim quote>", ...], "disagree_evidence": ["<verbatim quote>", ...]}}"""

RC_RETRY_SUFFIX = """

Reminder: reply with a single JSON object holding exactly the keys \
agree_evidence and disagree_evidence, each a list of verbatim quotes \
(possibly empty). No other keys, no commentary."""


GENERATE_PROMPT = """\
You are playing a character in an ongoing conversation.

Character materials:
{materials}

Conversation so far:
{history}

The user ({user_name}) says:
{user_input}

Stay in character and reply with one JSON object with exactly these \
four string fields:

{schema}

Reply with the JSON object only."""


def _labels_line(labels: Sequence[str]) -> str:
    return ", ".join(labels)


def build_repair_prompt(raw: str, attempt: int = 1) -> str:
    prompt = REPAIR_PROMPT.format(schema=_RESPONSE_SCHEMA, raw=raw)
    if attempt > 1:
        prompt += REPAIR_RETRY_SUFFIX
    return prompt


def build_erc_prompt(
    response_json: str,
    utterances: Sequence[str],
    labels: Sequence[str],
    retry: bool = False,
) -> str:
    numbered = "\n".join(f"{i + 1}. {u}" for i, u in enumerate(utterances))
    prompt = ERC_PROMPT.format(
        n_utterances=len(utterances),
        utterances=numbered,
        response=response_json,
        labels=_labels_line(labels),
    )
    if retry:
        prompt += ERC_RETRY_SUFFIX.format(
            n_utterances=len(utterances), labels=_labels_line(labels)
        )
    return prompt


def build_rc_prompt(
    metric: str,
    materials: str,
    history: str,
    user_input: str,
    response_json: str,
    retry: bool = False,
) -> str:
    if metric not in _RC_QUESTIONS:
        raise ValueError(f"unknown role-consistency metric: {metric!r}")
    prompt = RC_PROMPT.format(
        materials=materials,
        history=history,
        user_input=user_input,
        response=response_json,
        question=_RC_QUESTIONS[metric],
    )
    if retry:
        prompt += RC_RETRY_SUFFIX
    return prompt


def build_generate_prompt(
    materials: str, history: str, user_name: str, user_input: str
) -> str:
    return GENERATE_PROMPT.format(
        materials=materials,
        history=history,
        user_name=user_name or "user",
        user_input=user_input,
        schema=_RESPONSE_SCHEMA,
    )


def render_history(turns: Sequence[tuple]) -> str:
    """Flatten (user, agent) turn pairs into a readable transcript."""
    if not turns:
        return "(no prior turns)"
    lines = []
    for user, agent in turns:
        lines.append(f"User: {user.content}")
        lines.append(f"Character: {json.dumps(agent.to_dict(), ensure_ascii=False)}")
    return "\n".join(lines)
