"""Data model: taxonomy, segmentation, serialization, file loading."""

import json

import pytest

from conftest import make_sample, write_corpus, write_predictions

from rpeval.corpus import (
    AMBIGUOUS,
    DEFAULT_EMOTION_LABELS,
    CorpusError,
    DialogueSample,
    EmotionTaxonomy,
    MultimodalResponse,
    PredictionRecord,
    default_taxonomy,
    load_corpus,
    load_predictions,
    segment_utterances,
)


def test_default_taxonomy_has_thirteen_labels():
    tax = default_taxonomy()
    assert tax.size == 13
    assert len(set(tax.labels)) == 13
    assert AMBIGUOUS not in tax


def test_tendency_partition_is_total():
    tax = default_taxonomy()
    groups = {"positive": 0, "neutral": 0, "negative": 0}
    for label in tax.labels:
        groups[tax.tendency_of(label)] += 1
    assert groups == {"positive": 4, "neutral": 1, "negative": 8}


def test_tendency_of_passes_ambiguous_through():
    tax = default_taxonomy()
    assert tax.tendency_of(AMBIGUOUS) == AMBIGUOUS


def test_taxonomy_rejects_unknown_label():
    tax = default_taxonomy()
    with pytest.raises(CorpusError):
        tax.tendency_of("joyful")
    with pytest.raises(CorpusError):
        tax.index("joyful")


def test_taxonomy_rejects_duplicates_and_reserved_label():
    with pytest.raises(CorpusError):
        EmotionTaxonomy(labels=("happy", "happy"),
                        tendency_map={"happy": "positive"})
    with pytest.raises(CorpusError):
        EmotionTaxonomy(labels=("happy", AMBIGUOUS),
                        tendency_map={"happy": "positive", AMBIGUOUS: "neutral"})


def test_taxonomy_requires_full_tendency_map():
    with pytest.raises(CorpusError):
        EmotionTaxonomy(labels=("happy", "sadness"),
                        tendency_map={"happy": "positive"})
    with pytest.raises(CorpusError):
        EmotionTaxonomy(labels=("happy", "sadness"),
                        tendency_map={"happy": "positive", "sadness": "gloomy"})


def test_small_custom_taxonomy_is_allowed():
    tax = EmotionTaxonomy(
        labels=("up", "flat", "down"),
        tendency_map={"up": "positive", "flat": "neutral", "down": "negative"},
    )
    assert tax.size == 3
    assert tax.tendencies() == ("positive", "neutral", "negative")


def test_fingerprint_tracks_label_order():
    a = EmotionTaxonomy(labels=("up", "down"),
                        tendency_map={"up": "positive", "down": "negative"})
    b = EmotionTaxonomy(labels=("down", "up"),
                        tendency_map={"up": "positive", "down": "negative"})
    assert a.fingerprint != b.fingerprint
    assert a.fingerprint == EmotionTaxonomy(
        labels=("up", "down"),
        tendency_map={"up": "positive", "down": "negative"},
    ).fingerprint


def test_segmentation_mixed_punctuation():
    seg = segment_utterances("你好。今天呢？ fine, thanks!")
    assert seg.utterances == ["你好", "今天呢", "fine", "thanks"]
    assert seg.count == 4


def test_segmentation_discards_empty_fragments():
    seg = segment_utterances("。。a。。 b 。")
    assert seg.utterances == ["a", "b"]


def test_segmentation_without_delimiters_is_one_utterance():
    seg = segment_utterances("just one thought with no stops")
    assert seg.count == 1
    assert seg.utterances == ["just one thought with no stops"]


def test_segmentation_all_delimiters_collapses_to_original():
    seg = segment_utterances("。！。")
    assert seg.count == 1


def test_segmentation_rejects_empty_content():
    with pytest.raises(CorpusError):
        segment_utterances("")
    with pytest.raises(CorpusError):
        segment_utterances("   ")


def test_segmentation_custom_delimiters():
    seg = segment_utterances("a|b|c", delimiters="|")
    assert seg.utterances == ["a", "b", "c"]


def test_response_roundtrip_and_canonical_json():
    resp = MultimodalResponse(
        facial_expression="soft smile",
        body_movement="leans back",
        speech_prompt="warm and slow",
        content="你好。",
    )
    obj = json.loads(resp.to_json())
    assert list(obj) == [
        "facial_expression", "body_movement", "speech_prompt", "content",
    ]
    assert MultimodalResponse.from_dict(obj) == resp
    assert MultimodalResponse.from_short_dict(resp.to_short_dict()) == resp


def test_response_requires_all_fields_and_content():
    with pytest.raises(CorpusError):
        MultimodalResponse.from_dict({"content": "hi"})
    with pytest.raises(CorpusError):
        MultimodalResponse.from_dict({
            "facial_expression": "x", "body_movement": "y",
            "speech_prompt": "z", "content": "   ",
        })
    with pytest.raises(CorpusError):
        MultimodalResponse.from_dict({
            "facial_expression": 3, "body_movement": "y",
            "speech_prompt": "z", "content": "hi",
        })


def test_sample_record_roundtrip_is_identity():
    sample = make_sample("s1", history=2, dialogue_id="d9")
    assert DialogueSample.from_record(sample.to_record()) == sample
    plain = make_sample("s2")
    assert DialogueSample.from_record(plain.to_record()) == plain


def test_load_corpus_happy_path(tmp_path):
    samples = [make_sample("a"), make_sample("b", role_id="witch", gt=("anger",))]
    path = write_corpus(tmp_path / "c.jsonl", samples)
    loaded = load_corpus(path)
    assert loaded == samples


def test_load_corpus_reports_line_numbers(tmp_path):
    path = tmp_path / "c.jsonl"
    good = json.dumps(make_sample("a").to_record())
    path.write_text(good + "\n{not json}\n", encoding="utf-8")
    with pytest.raises(CorpusError) as err:
        load_corpus(path)
    assert ":2:" in str(err.value)


def test_load_corpus_rejects_duplicate_ids(tmp_path):
    path = write_corpus(tmp_path / "c.jsonl", [make_sample("a"), make_sample("a")])
    with pytest.raises(CorpusError, match="duplicate sample_id"):
        load_corpus(path)


def test_load_corpus_rejects_label_count_mismatch(tmp_path):
    record = make_sample("a").to_record()
    record["gt_emotions"] = ["happy"]  # content has two utterances
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="gold labels"):
        load_corpus(path)


def test_load_corpus_rejects_unknown_gold_label(tmp_path):
    record = make_sample("a", gt=("happy", "grateful")).to_record()
    record["gt_emotions"] = ["happy", "euphoric"]
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps(record) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="euphoric"):
        load_corpus(path)


def test_load_corpus_rejects_conflicting_role_cards(tmp_path):
    a = make_sample("a", profile="kind")
    b = make_sample("b", profile="cruel")
    path = write_corpus(tmp_path / "c.jsonl", [a, b])
    with pytest.raises(CorpusError, match="conflicting role cards"):
        load_corpus(path)


def test_load_corpus_rejects_empty_file(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(CorpusError, match="empty"):
        load_corpus(path)


def test_load_corpus_skips_blank_lines(tmp_path):
    path = tmp_path / "c.jsonl"
    record = json.dumps(make_sample("a").to_record())
    path.write_text(record + "\n\n   \n", encoding="utf-8")
    assert len(load_corpus(path)) == 1


def test_load_predictions(tmp_path):
    records = [PredictionRecord("a", "{}"), PredictionRecord("b", "raw text")]
    path = write_predictions(tmp_path / "p.jsonl", records)
    assert load_predictions(path) == records


def test_load_predictions_rejects_duplicates_and_bad_fields(tmp_path):
    path = write_predictions(
        tmp_path / "p.jsonl",
        [PredictionRecord("a", "x"), PredictionRecord("a", "y")],
    )
    with pytest.raises(CorpusError, match="duplicate prediction"):
        load_predictions(path)
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"sample_id": "a"}) + "\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="raw_output"):
        load_predictions(bad)


def test_custom_taxonomy_validates_corpus(tmp_path):
    tax = EmotionTaxonomy(
        labels=("up", "down"),
        tendency_map={"up": "positive", "down": "negative"},
    )
    sample = make_sample("a", gt=("happy",))
    sample.gt_emotions = ["up"]
    sample.ground_truth.content = "up。"
    path = write_corpus(tmp_path / "c.jsonl", [sample])
    loaded = load_corpus(path, taxonomy=tax)
    assert loaded[0].gt_emotions == ["up"]
    with pytest.raises(CorpusError):
        load_corpus(path)  # default taxonomy does not know "up"
