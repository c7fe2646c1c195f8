"""Metric kernels against worked examples and independent oracles."""

import math
import random

import numpy as np
import pytest

from oracles import alpha_pairwise, hellinger_via_bhattacharyya, transition_pairs

from rpeval.corpus import AMBIGUOUS, CorpusError, EmotionTaxonomy, default_taxonomy
from rpeval.erc import EmotionDistribution
from rpeval.judges import RcVerdict
from rpeval.metrics import (
    RcdResult,
    TransitionMatrix,
    build_transition_matrices,
    cec,
    character_distinctiveness,
    ed,
    edd,
    hellinger,
    krippendorff_alpha,
    matrix_distance,
    mec,
    normalized_entropy,
    rc_score,
    rc_score_from_verdict,
    rcd,
)

TAX = default_taxonomy()

TINY_TAX = EmotionTaxonomy(
    labels=("up", "flat", "down"),
    tendency_map={"up": "positive", "flat": "neutral", "down": "negative"},
)


# ---------------------------------------------------------------- hellinger

def test_hellinger_identical_is_exactly_zero():
    assert hellinger([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) == 0.0


def test_hellinger_disjoint_is_exactly_one():
    assert hellinger([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert hellinger([0.5, 0.5, 0.0], [0.0, 0.0, 1.0]) == 1.0


def test_hellinger_known_value():
    # H([1,0],[.5,.5])^2 = 1 - BC = 1 - sqrt(0.5)
    expected = math.sqrt(1.0 - math.sqrt(0.5))
    assert hellinger([1.0, 0.0], [0.5, 0.5]) == pytest.approx(expected, abs=1e-15)


def test_hellinger_symmetry_and_range():
    rng = random.Random(7)
    for _ in range(50):
        k = rng.randint(2, 12)
        p = [rng.random() for _ in range(k)]
        q = [rng.random() for _ in range(k)]
        p = [x / sum(p) for x in p]
        q = [x / sum(q) for x in q]
        d = hellinger(p, q)
        assert d == hellinger(q, p)
        assert 0.0 <= d <= 1.0


def test_hellinger_matches_bhattacharyya_route():
    rng = random.Random(13)
    for _ in range(200):
        k = rng.randint(2, 30)
        p = [rng.expovariate(1.0) for _ in range(k)]
        q = [rng.expovariate(1.0) for _ in range(k)]
        p = [x / sum(p) for x in p]
        q = [x / sum(q) for x in q]
        assert hellinger(p, q) == pytest.approx(
            hellinger_via_bhattacharyya(p, q), abs=1e-12)


def test_hellinger_input_validation():
    with pytest.raises(ValueError):
        hellinger([0.5, 0.5], [1.0])
    with pytest.raises(ValueError):
        hellinger([0.7, 0.4], [0.5, 0.5])  # does not sum to 1
    with pytest.raises(ValueError):
        hellinger([-0.1, 1.1], [0.5, 0.5])
    with pytest.raises(ValueError):
        hellinger([], [])


# ------------------------------------------------------- transition matrices

def test_matrix_add_and_errors():
    m = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    m.add("up", "down")
    m.add("up", "down")
    m.add("flat", "up")
    assert m.total == 3
    assert m.counts[0, 2] == 2
    assert m.counts[1, 0] == 1
    with pytest.raises(CorpusError):
        m.add("sideways", "up")
    with pytest.raises(ValueError):
        TransitionMatrix.zeros("diagonal", TINY_TAX.labels)


def test_matrix_row_probabilities_uniform_for_zero_rows():
    m = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    m.add("up", "up")
    rows = m.row_probabilities()
    assert rows[0].tolist() == [1.0, 0.0, 0.0]
    assert rows[1].tolist() == [pytest.approx(1 / 3)] * 3
    assert np.allclose(rows.sum(axis=1), 1.0)


def test_matrix_flattened_distribution_and_smoothing():
    m = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    m.add("up", "down")
    flat = m.flattened_distribution()
    assert flat.sum() == pytest.approx(1.0)
    assert flat[2] == 1.0
    smoothed = m.flattened_distribution(smooth=1e-9)
    assert smoothed.sum() == pytest.approx(1.0, abs=1e-12)
    assert (smoothed > 0).all()
    empty = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    with pytest.raises(ValueError):
        empty.flattened_distribution()


def test_matrix_serialization_roundtrip():
    m = TransitionMatrix.zeros("inter", TINY_TAX.labels)
    m.add("down", "flat")
    again = TransitionMatrix.from_dict(m.to_dict())
    assert again.variant == "inter"
    assert again.labels == m.labels
    assert (again.counts == m.counts).all()


def test_build_transitions_worked_example():
    # one dialogue, three responses of one role
    dialogue = [
        ["happy", "happy", "sadness"],
        ["sadness"],
        ["anger", "worried"],
    ]
    intra, inter = build_transition_matrices([dialogue], TAX)
    h, s, a, w = (TAX.index(x) for x in ("happy", "sadness", "anger", "worried"))
    assert intra.counts[h, h] == 1
    assert intra.counts[h, s] == 1
    assert intra.counts[a, w] == 1
    assert intra.total == 3
    assert inter.counts[s, s] == 1
    assert inter.counts[s, a] == 1
    assert inter.total == 2


def test_build_transitions_ambiguous_breaks_chains():
    dialogue = [
        ["happy", AMBIGUOUS, "sadness"],   # both intra pairs vanish
        [AMBIGUOUS],                        # kills both inter pairs around it
        ["anger"],
    ]
    intra, inter = build_transition_matrices([dialogue], TAX)
    assert intra.total == 0
    assert inter.total == 0
    # and no bridging: happy->anger must not appear either
    assert inter.counts[TAX.index("happy"), TAX.index("anger")] == 0


def test_build_transitions_matches_pair_listing_oracle():
    rng = random.Random(99)
    labels = list(TAX.labels)
    for _ in range(100):
        dialogues = []
        for _ in range(rng.randint(1, 4)):
            dialogue = []
            for _ in range(rng.randint(1, 5)):
                length = rng.randint(1, 4)
                dialogue.append([
                    rng.choice(labels + [AMBIGUOUS]) for _ in range(length)
                ])
            dialogues.append(dialogue)
        intra, inter = build_transition_matrices(dialogues, TAX)
        o_intra, o_inter = transition_pairs(dialogues)
        for (a, b), count in o_intra.items():
            assert intra.counts[TAX.index(a), TAX.index(b)] == count
        assert intra.total == sum(o_intra.values())
        for (a, b), count in o_inter.items():
            assert inter.counts[TAX.index(a), TAX.index(b)] == count
        assert inter.total == sum(o_inter.values())


def test_matrix_distance_identical_is_zero_disjoint_is_one():
    a = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    a.add("up", "down")
    a.add("down", "up")
    b = TransitionMatrix.from_dict(a.to_dict())
    assert matrix_distance(a, b) == 0.0
    c = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    c.add("flat", "flat")
    # smoothing keeps the supports overlapping a little
    assert matrix_distance(a, c) == pytest.approx(1.0, abs=1e-4)
    assert matrix_distance(a, c, smooth=0.0) == 1.0


def test_matrix_distance_modes_and_errors():
    a = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    a.add("up", "down")
    b = TransitionMatrix.zeros("intra", TINY_TAX.labels)
    b.add("up", "up")
    assert 0.0 < matrix_distance(a, b, mode="rows") <= 1.0
    other = TransitionMatrix.zeros("intra", ("x", "y"))
    with pytest.raises(ValueError):
        matrix_distance(a, other)
    with pytest.raises(ValueError):
        matrix_distance(a, b, mode="diagonal")


def _one_hot_matrix(variant, src, dst, taxonomy=TINY_TAX):
    m = TransitionMatrix.zeros(variant, taxonomy.labels)
    m.add(src, dst)
    return m


def test_edd_averages_roles_and_skips_empty_sides():
    gt = {"a": _one_hot_matrix("intra", "up", "up"),
          "b": _one_hot_matrix("intra", "down", "down")}
    rpa = {"a": _one_hot_matrix("intra", "up", "up"),
           "b": TransitionMatrix.zeros("intra", TINY_TAX.labels)}
    value = edd(gt, rpa)
    assert value == 0.0  # role b skipped, role a identical
    rpa["b"] = _one_hot_matrix("intra", "up", "down")
    both = edd(gt, rpa)
    assert both == pytest.approx(
        matrix_distance(gt["b"], rpa["b"]) / 2.0, abs=1e-12)


def test_edd_undefined_when_every_role_empty():
    gt = {"a": TransitionMatrix.zeros("intra", TINY_TAX.labels)}
    rpa = {"a": _one_hot_matrix("intra", "up", "up")}
    assert edd(gt, rpa) is None


def test_edd_validates_role_sets_and_variants():
    gt = {"a": _one_hot_matrix("intra", "up", "up")}
    with pytest.raises(ValueError):
        edd(gt, {"b": _one_hot_matrix("intra", "up", "up")})
    with pytest.raises(ValueError):
        edd(gt, {"a": _one_hot_matrix("inter", "up", "up")})
    with pytest.raises(ValueError):
        edd({}, {})


def test_character_distinctiveness():
    matrices = {
        "a": _one_hot_matrix("intra", "up", "up"),
        "b": _one_hot_matrix("intra", "down", "down"),
        "c": _one_hot_matrix("intra", "up", "up"),
    }
    value = character_distinctiveness(matrices, smooth=0.0)
    # pairs: (a,b)=1, (a,c)=0, (b,c)=1
    assert value == pytest.approx(2.0 / 3.0, abs=1e-12)
    with pytest.raises(ValueError):
        character_distinctiveness({"a": matrices["a"]})


def test_character_distinctiveness_undefined_with_one_usable_role():
    matrices = {
        "a": _one_hot_matrix("intra", "up", "up"),
        "b": TransitionMatrix.zeros("intra", TINY_TAX.labels),
    }
    assert character_distinctiveness(matrices) is None


def test_rcd_is_difference_of_distinctiveness():
    gt = {"a": _one_hot_matrix("intra", "up", "up"),
          "b": _one_hot_matrix("intra", "down", "down")}
    rpa = {"a": _one_hot_matrix("intra", "up", "up"),
           "b": _one_hot_matrix("intra", "up", "up")}
    result = rcd(gt, rpa, smooth=0.0)
    assert result.cd_gt == pytest.approx(1.0)
    assert result.cd_rpa == 0.0
    assert result.value == pytest.approx(result.cd_rpa - result.cd_gt)
    with pytest.raises(ValueError):
        rcd({"a": gt["a"]}, rpa)
    assert RcdResult(cd_gt=None, cd_rpa=0.5).value is None


# -------------------------------------------------------------------- mec

def test_mec_perfect_predictions():
    samples = [(["happy", "sadness"], ["sadness", "happy"])]
    report = mec(samples, TAX)
    assert report.value == 1.0
    assert report.per_class["happy"].tp == 1
    assert report.per_class["anger"].tn == 1


def test_mec_ambiguous_predictions_are_discarded():
    samples = [(["happy"], [AMBIGUOUS, "happy", AMBIGUOUS])]
    report = mec(samples, TAX)
    assert report.value == 1.0
    all_ambiguous = mec([(["happy"], [AMBIGUOUS])], TAX)
    assert all_ambiguous.value == 0.0
    assert all_ambiguous.per_class["happy"].fn == 1
    assert all_ambiguous.per_class["happy"].fp == 0


def test_mec_support_weighting_worked_example():
    samples = [
        (["happy"], ["happy"]),
        (["happy"], ["happy"]),
        (["anger"], ["sadness"]),
    ]
    report = mec(samples, TAX)
    # happy: n=2 f1=1; anger: n=1 f1=0; sadness: n=0 (fp only)
    assert report.value == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert report.per_class["sadness"].n == 0
    assert report.per_class["sadness"].fp == 1
    assert report.per_class["sadness"].f1 == 0.0


def test_mec_upper_collapses_to_tendencies():
    samples = [(["happy"], ["grateful"])]
    lower = mec(samples, TAX, level="lower")
    upper = mec(samples, TAX, level="upper")
    assert lower.value == 0.0
    assert upper.value == 1.0
    assert set(upper.per_class) == {"positive", "neutral", "negative"}


def test_mec_duplicate_labels_collapse_to_sets():
    a = mec([(["happy", "happy", "anger"], ["happy", "happy"])], TAX)
    b = mec([(["happy", "anger"], ["happy"])], TAX)
    assert a.value == b.value
    assert a.per_class["happy"].tp == b.per_class["happy"].tp == 1


def test_mec_errors():
    with pytest.raises(ValueError):
        mec([], TAX)
    with pytest.raises(ValueError):
        mec([([], ["happy"])], TAX)
    with pytest.raises(CorpusError):
        mec([(["joyful"], ["happy"])], TAX)
    with pytest.raises(CorpusError):
        mec([(["happy"], ["joyful"])], TAX)
    with pytest.raises(ValueError):
        mec([(["happy"], ["happy"])], TAX, level="middle")


def test_mec_matches_precision_recall_route():
    from oracles import mec_via_precision_recall
    rng = random.Random(11)
    labels = list(TAX.labels)
    for _ in range(50):
        samples = []
        for _ in range(rng.randint(1, 8)):
            gt = [rng.choice(labels) for _ in range(rng.randint(1, 4))]
            pd = [rng.choice(labels + [AMBIGUOUS])
                  for _ in range(rng.randint(0, 4))]
            samples.append((gt, pd))
        for level in ("lower", "upper"):
            assert mec(samples, TAX, level).value == pytest.approx(
                mec_via_precision_recall(samples, TAX, level), abs=1e-12)


# ------------------------------------------------------------------- alpha

# Four observers, twelve units; a classic worked example for alpha.
_CLASSIC_TABLE = [
    [1, 2, 3, 3, 2, 1, 4, 1, 2, None, None, None],
    [1, 2, 3, 3, 2, 2, 4, 1, 2, 5, None, 3],
    [None, 3, 3, 3, 2, 3, 4, 2, 2, 5, 1, None],
    [1, 2, 3, 3, 2, 4, 4, 1, 2, 5, 1, None],
]


def test_alpha_classic_nominal_value():
    assert krippendorff_alpha(_CLASSIC_TABLE, "nominal") == pytest.approx(
        0.7434210526315789, abs=1e-12)


def test_alpha_matches_pairwise_oracle_on_classic_table():
    for level in ("nominal", "ordinal"):
        assert krippendorff_alpha(_CLASSIC_TABLE, level) == pytest.approx(
            alpha_pairwise(_CLASSIC_TABLE, level), abs=1e-12)


def test_alpha_perfect_agreement_is_one():
    rows = [["a", "b", "c"], ["a", "b", "c"], ["a", "b", None]]
    assert krippendorff_alpha(rows, "nominal") == 1.0


def test_alpha_degenerate_single_category_is_one():
    rows = [["x", "x"], ["x", "x"]]
    assert krippendorff_alpha(rows, "nominal") == 1.0


def test_alpha_two_categories_ordinal_equals_nominal():
    rng = random.Random(3)
    for _ in range(20):
        rows = [[rng.choice([1, 2, None]) for _ in range(8)] for _ in range(3)]
        usable = [j for j in range(8) if sum(
            r[j] is not None for r in rows) >= 2]
        present = {r[j] for r in rows for j in usable if r[j] is not None}
        if not usable or len(present) < 2:
            continue
        assert krippendorff_alpha(rows, "ordinal") == pytest.approx(
            krippendorff_alpha(rows, "nominal"), abs=1e-12)


def test_alpha_ordinal_rewards_near_misses():
    adjacent = [[1, 2, 3, 4], [2, 1, 4, 3]]
    extreme = [[1, 2, 3, 4], [4, 3, 2, 1]]
    assert krippendorff_alpha(adjacent, "ordinal") > krippendorff_alpha(
        extreme, "ordinal")


def test_alpha_column_duplication_follows_small_sample_correction():
    # Duplicating every column halves the (n-1) correction exactly:
    # alpha' = alpha - (1 - alpha) / (2 (n - 1)).
    rows = [r * 2 for r in _CLASSIC_TABLE]
    base = krippendorff_alpha(_CLASSIC_TABLE, "nominal")
    doubled = krippendorff_alpha(rows, "nominal")
    n = 40  # pairable values in the classic table
    assert doubled == pytest.approx(base - (1 - base) / (2 * (n - 1)),
                                    abs=1e-12)


def test_alpha_input_validation():
    with pytest.raises(ValueError):
        krippendorff_alpha([["a", "b"]], "nominal")
    with pytest.raises(ValueError):
        krippendorff_alpha([["a"], ["a", "b"]], "nominal")
    with pytest.raises(ValueError):
        krippendorff_alpha([["a", None], [None, "b"]], "nominal")
    with pytest.raises(ValueError):
        krippendorff_alpha(_CLASSIC_TABLE, "interval")
    with pytest.raises(ValueError):
        krippendorff_alpha([["a", 1], [1, "a"]], "ordinal")


# -------------------------------------------------------------------- cec

def test_cec_identical_modalities_agree_perfectly():
    rows = [["happy", "sadness"]] * 4
    assert cec(rows, TAX) == 1.0


def test_cec_ambiguous_counts_as_missing():
    rows = [
        ["happy", AMBIGUOUS],
        ["happy", AMBIGUOUS],
        ["happy", AMBIGUOUS],
        ["happy", AMBIGUOUS],
    ]
    # column 2 has no ratings at all; column 1 agrees perfectly
    assert cec(rows, TAX) == 1.0
    with pytest.raises(ValueError):
        cec([[AMBIGUOUS], [AMBIGUOUS], [AMBIGUOUS], [AMBIGUOUS]], TAX)


def test_cec_upper_softens_within_tendency_disagreement():
    rows = [
        ["happy", "anger"],
        ["grateful", "sadness"],
        ["relaxed", "fear"],
        ["happy", "worried"],
    ]
    lower = cec(rows, TAX, level="lower")
    upper = cec(rows, TAX, level="upper")
    assert upper == 1.0
    assert lower < upper


def test_cec_rejects_unknown_labels():
    with pytest.raises(CorpusError):
        cec([["happy"], ["joyful"], ["happy"], ["happy"]], TAX)


# --------------------------------------------------------------------- ed

def test_normalized_entropy_extremes():
    point = EmotionDistribution(counts={"happy": 10}, total_votes=10)
    assert normalized_entropy(point, 13) == 0.0
    uniform = EmotionDistribution(
        counts={lab: 1 for lab in TAX.labels}, total_votes=13)
    assert normalized_entropy(uniform, 13) == pytest.approx(1.0, abs=1e-12)
    empty = EmotionDistribution()
    assert normalized_entropy(empty, 13) == 0.0
    with pytest.raises(ValueError):
        normalized_entropy(point, 1)


def test_normalized_entropy_known_value():
    half = EmotionDistribution(counts={"a": 5, "b": 5}, total_votes=10)
    assert normalized_entropy(half, 4) == pytest.approx(0.5, abs=1e-12)


def test_ed_averages_cells():
    crisp = EmotionDistribution(counts={"happy": 10}, total_votes=10)
    half = EmotionDistribution(counts={"happy": 5, "anger": 5}, total_votes=10)
    value = ed([crisp, half], TAX)
    expected = (0.0 + math.log(2) / math.log(13)) / 2.0
    assert value == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        ed([], TAX)


# ---------------------------------------------------------------- rc scores

def test_rc_verdict_mapping_table():
    assert rc_score_from_verdict(RcVerdict([], [])) is None
    assert rc_score_from_verdict(RcVerdict(["a"], [])) == 5
    assert rc_score_from_verdict(RcVerdict(["a", "b"], ["c"])) == 4
    assert rc_score_from_verdict(RcVerdict(["a"], ["c"])) == 3
    assert rc_score_from_verdict(RcVerdict(["a"], ["c", "d"])) == 2
    assert rc_score_from_verdict(RcVerdict([], ["c"])) == 1


def test_rc_score_averages_available_evaluators():
    result = rc_score({
        "alpha": RcVerdict(["x"], []),          # 5
        "beta": RcVerdict(["x"], ["y", "z"]),   # 2
    })
    assert result.score == pytest.approx(3.5)
    assert result.per_evaluator == {"alpha": 5, "beta": 2}


def test_rc_score_handles_abstentions_and_unavailable():
    result = rc_score({
        "alpha": RcVerdict([], []),   # abstains
        "beta": None,                 # unavailable
    })
    assert result.score is None
    assert result.per_evaluator == {"alpha": None}
    partial = rc_score({
        "alpha": RcVerdict([], []),
        "beta": RcVerdict([], ["y"]),
    })
    assert partial.score == 1.0
