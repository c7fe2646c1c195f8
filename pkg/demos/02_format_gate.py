"""The format gate: validating raw model output and repairing near
misses with a judge before anything gets scored.

Run me with: python3 demos/02_format_gate.py
"""

import json

from rpeval import (
    JudgeClient,
    MockBackend,
    RetryPolicy,
    format_response,
    validate,
)

# -------------------------------------------------------------- clean output
# A prediction is one JSON object with exactly four string fields.
# Fenced code blocks, surrounding prose, aliased keys, and mixed case
# are tolerated; anything else needs repair.

clean = json.dumps({
    "facial_expression": "soft smile",
    "body_movement": "pours tea without looking up",
    "speech_prompt": "low and even",
    "content": "坐吧。茶还热着。",
}, ensure_ascii=False)

outcome = format_response(clean)
print("clean output:", outcome.status)

fenced = f"Sure! Here is the response:\n```json\n{clean}\n```"
print("fenced output:", format_response(fenced).status)

aliased = json.dumps({
    "Face": "soft smile",
    "body": "pours tea",
    "tone": "low and even",
    "text": "坐吧。",
}, ensure_ascii=False)
print("aliased keys:", format_response(aliased).status,
      "->", sorted(validate(aliased).to_dict()))

# ------------------------------------------------------------ broken output
# Without a repair judge a broken string is simply dropped, and the
# exclusion is visible in the outcome.

broken = "face: smiling / body: pouring tea / she says: sit down"
dropped = format_response(broken)
print("\nbroken output, no judge:", dropped.status, "-", dropped.diagnostic)

# With a judge the gate sends the raw text out for a rewrite and
# re-validates whatever comes back, up to two attempts.

def rewrite(prompt, sampling):
    raw = prompt.split("Text to repair:\n", 1)[1]
    if raw.startswith("face: smiling"):
        return clean
    return "cannot help"

judge = JudgeClient(backend=MockBackend("fixer", handler=rewrite),
                    policy=RetryPolicy(max_attempts=2, base_delay=0.0))
repaired = format_response(broken, judge)
print("broken output, judge present:", repaired.status,
      "after", repaired.repair_attempts, "attempt(s)")
print("repaired content:", repaired.response.content)

# A judge that never produces valid JSON exhausts its attempts and the
# sample stays excluded; scoring later counts it under dropped_format.

hopeless = format_response("%%%% static noise %%%%", judge)
print("\nunfixable output:", hopeless.status, "-", hopeless.diagnostic)
