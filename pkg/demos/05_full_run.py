"""One full evaluation run, end to end, on a synthetic two-role corpus
with scripted judges: format gate, emotion panel, role questions,
metric assembly, report, manifest, and a warm-cache rerun.

Run me with: python3 demos/05_full_run.py
"""

import json
import re
import tempfile
from pathlib import Path

from rpeval import (
    DialogueSample,
    MockBackend,
    MultimodalResponse,
    PredictionRecord,
    RetryPolicy,
    RoleCard,
    RunConfig,
    UserTurn,
    evaluate,
    gt_statistics,
    render_report,
    save_jsonl,
)

# ------------------------------------------------------------- the corpus
# Two roles with opposite temperaments, three annotated samples each.
# Content is written so one utterance carries one gold label.

ROLES = {
    "sunny": RoleCard(role_id="sunny", profile="An optimist who beams at everyone.",
                      image_ref="img/sunny.png", user_name="Ming"),
    "grump": RoleCard(role_id="grump", profile="A sour hermit who trusts nobody.",
                      image_ref="img/grump.png", user_name="Ming"),
}
GOLDS = {
    "sunny": [("happy", "grateful"), ("relaxed",), ("happy",)],
    "grump": [("anger",), ("disgust", "anger"), ("worried",)],
}

def build_samples():
    samples = []
    for role_id, golds in GOLDS.items():
        for i, gt in enumerate(golds):
            content = "。".join(gt) + "。"  # one utterance per gold label
            samples.append(DialogueSample(
                sample_id=f"{role_id}-{i}",
                role=ROLES[role_id],
                previous_info="They met at the market last week.",
                history=[],
                user_input=UserTurn(content="Tell me how you feel."),
                ground_truth=MultimodalResponse(
                    facial_expression=f"a {gt[0]} face",
                    body_movement=f"{gt[0]} posture",
                    speech_prompt=f"{gt[0]} tone",
                    content=content,
                ),
                gt_emotions=list(gt),
            ))
    return samples

# ---------------------------------------------------------- scripted judges
# The emotion experts read each numbered utterance back as its label;
# the role evaluators quote the response content as agreeing evidence.
# Swap these for HttpBackend specs in the config to use real models.

UTTERANCE = re.compile(r"^\d+\.\s(.*)$", re.MULTILINE)

def echo_expert(name):
    def handler(prompt, sampling):
        labels = UTTERANCE.findall(prompt)
        return json.dumps({f"emos_{m}": labels for m in ("f", "b", "s", "fusion")},
                          ensure_ascii=False)
    return MockBackend(name, handler=handler)

def agreeing_critic(name):
    def handler(prompt, sampling):
        tail = prompt.split("Response under evaluation:", 1)[-1]
        match = re.search(r'"content":\s*"([^"]*)"', tail)
        spans = [match.group(1)] if match else []
        return json.dumps({"agree_evidence": spans, "disagree_evidence": []},
                          ensure_ascii=False)
    return MockBackend(name, handler=handler)

def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        samples = build_samples()
        save_jsonl(tmp / "corpus.jsonl", [s.to_record() for s in samples])

        # Predictions: four echoes of the truth, one near miss with the
        # wrong emotion, one unrepairable garbage string.
        records = []
        for sample in samples:
            records.append(PredictionRecord(
                sample.sample_id, sample.ground_truth.to_json()))
        wrong = MultimodalResponse(
            facial_expression="a blank face", body_movement="shrugs",
            speech_prompt="flat", content="neutral。")
        records[2] = PredictionRecord(records[2].sample_id, wrong.to_json())
        records[5] = PredictionRecord(records[5].sample_id, "### no json here ###")
        save_jsonl(tmp / "preds.jsonl", [r.to_record() for r in records])

        config = RunConfig(
            cache_dir=str(tmp / "cache"),
            concurrency=2,
            retry=RetryPolicy(max_attempts=2, base_delay=0.0),
        )

        stats = gt_statistics(config, tmp / "corpus.jsonl")
        print("ground truth:", stats["samples"], "samples,",
              stats["utterances"], "utterances,",
              "distinctiveness intra:", round(stats["cd"]["intra"], 4))

        run = evaluate(
            config, tmp / "corpus.jsonl", tmp / "preds.jsonl",
            out_dir=tmp / "out",
            experts=[echo_expert(f"expert{i}") for i in range(5)],
            rc_evaluators=[agreeing_critic(f"critic{i}") for i in range(2)],
        )
        print("\nwrote:", *[p.name for p in run.written])
        print("counts:", json.dumps(run.report["counts"], sort_keys=True))
        print("\nsummary:")
        for key, value in run.report["summary"].items():
            print(f"  {key:10s} {'n/a' if value is None else round(value, 4)}")

        # The markdown rendering is what you would paste into a ticket.
        print("\n" + render_report(run.report, "md").split("##")[0])

        # Rerun with the warm cache: same judges, zero new backend calls.
        experts = [echo_expert(f"expert{i}") for i in range(5)]
        rerun = evaluate(
            config, tmp / "corpus.jsonl", tmp / "preds.jsonl",
            out_dir=tmp / "out2",
            experts=experts,
            rc_evaluators=[agreeing_critic(f"critic{i}") for i in range(2)],
        )
        cache = rerun.manifest["cache"]
        print("warm rerun: cache hits", cache["hits"], "of", cache["lookups"],
              "lookups; expert backends called",
              sum(e.calls for e in experts), "times")
        same = ((tmp / "out" / "report.json").read_bytes()
                == (tmp / "out2" / "report.json").read_bytes())
        print("reports byte-identical:", same)

if __name__ == "__main__":
    main()
