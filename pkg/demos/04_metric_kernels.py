"""The deterministic metric kernels, one by one, on tiny hand-checked
inputs: distribution distance, transition divergence, distinctiveness,
emotion correctness, agreement, indecision, and the role score.

Run me with: python3 demos/04_metric_kernels.py
"""

import math

from rpeval import (
    AMBIGUOUS,
    RcVerdict,
    build_transition_matrices,
    cec,
    character_distinctiveness,
    default_taxonomy,
    edd,
    hellinger,
    krippendorff_alpha,
    matrix_distance,
    mec,
    normalized_entropy,
    rc_score_from_verdict,
    rcd,
)
from rpeval.erc import EmotionDistribution

taxonomy = default_taxonomy()

# ------------------------------------------------------------------ distance
# Hellinger distance between distributions: 0 when identical, 1 when
# the supports are disjoint, in between otherwise.

print("identical:", hellinger([0.5, 0.5], [0.5, 0.5]))
print("disjoint:", hellinger([1, 0], [0, 1]))
print("half overlap:", round(hellinger([1, 0], [0.5, 0.5]), 6),
      "= sqrt(1 - sqrt(0.5)) =", round(math.sqrt(1 - math.sqrt(0.5)), 6))

# --------------------------------------------------------------- transitions
# Per-role emotion flow is summarized as two count matrices: pairs of
# adjacent labels inside one response (intra) and across the boundary
# between consecutive responses (inter).  Ambiguous labels break chains.

dialogue = [
    ["happy", "happy", "anger"],      # intra: happy->happy, happy->anger
    ["anger"],                        # inter: anger->anger
    ["sadness", AMBIGUOUS, "fear"],   # the ambiguous cell contributes nothing
]
intra, inter = build_transition_matrices([dialogue], taxonomy)
print("\nintra pairs counted:", intra.total, "| inter pairs counted:", inter.total)

other = [["sadness", "sadness"], ["fear", "worried"]]
other_intra, _ = build_transition_matrices([other], taxonomy)
print("distance between the two intra matrices:",
      round(matrix_distance(intra, other_intra), 4))

# The divergence metric averages that distance per role between ground
# truth and prediction; distinctiveness is the mean pairwise distance
# across roles, and the relative form subtracts truth from prediction.

gt = {"hero": intra, "witch": other_intra}
print("edd (gt vs itself):", edd(gt, gt))
print("cd across roles:", round(character_distinctiveness(gt), 4))
print("rcd (gt vs itself):", rcd(gt, gt).value)

# ---------------------------------------------------------------- correctness
# Emotion correctness compares per-sample label sets and weights each
# class F1 by how many samples carry the class.  Ambiguous predictions
# are discarded before the comparison; at the upper level both sides
# collapse to positive / neutral / negative first.

samples = [
    (["happy", "grateful"], ["happy", "grateful"]),  # exact
    (["anger"], ["anger", AMBIGUOUS]),               # sentinel dropped
    (["sadness"], ["fear"]),                         # miss
]
lower = mec(samples, taxonomy, level="lower")
upper = mec(samples, taxonomy, level="upper")
print("\nmec lower:", round(lower.value, 4), "| upper:", round(upper.value, 4))
print("per-class f1 (sadness):", lower.per_class["sadness"].f1)

# ------------------------------------------------------------------ agreement
# Cross-channel agreement treats the four channels as raters over all
# utterance cells and computes Krippendorff's alpha; an ambiguous cell
# counts as a missing rating.  The raw kernel also stands alone for any
# raters-by-units table, with None marking the holes.

channels = [
    ["happy", "anger", "sadness", "happy"],
    ["happy", "anger", "sadness", "happy"],
    ["happy", "anger", "fear", AMBIGUOUS],
    ["happy", "anger", "sadness", "happy"],
]
print("\ncec lower:", round(cec(channels, taxonomy, level="lower"), 4),
      "| cec upper:", round(cec(channels, taxonomy, level="upper"), 4))
ordinal = [[1, 2, 4, None], [1, 2, 5, 1], [1, 2, 4, 1]]
print("ordinal alpha rewards near misses:",
      round(krippendorff_alpha(ordinal, "ordinal"), 4), ">",
      round(krippendorff_alpha(ordinal, "nominal"), 4))

# ------------------------------------------------------------------ indecision
# A unanimous vote cell has zero normalized entropy; an even split over
# two labels lands partway up the scale set by the taxonomy size.

unanimous = EmotionDistribution(counts={"happy": 10}, total_votes=10)
split = EmotionDistribution(counts={"happy": 5, "anger": 5}, total_votes=10)
print("\nentropy unanimous:", normalized_entropy(unanimous, taxonomy.size))
print("entropy 5/5 split:", round(normalized_entropy(split, taxonomy.size), 4))

# ------------------------------------------------------------------ role score
# Each role-consistency verdict carries verbatim evidence for and
# against; flags plus evidence counts map to a 1..5 score, and a
# verdict with no evidence at all abstains.

for agree, disagree in [(2, 0), (3, 1), (2, 2), (1, 2), (0, 1), (0, 0)]:
    verdict = RcVerdict(agree_evidence=["a"] * agree,
                        disagree_evidence=["d"] * disagree)
    print(f"agree={agree} disagree={disagree} -> {rc_score_from_verdict(verdict)}")
