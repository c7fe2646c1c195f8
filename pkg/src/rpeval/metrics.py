"""Deterministic metric kernels.

Everything here is pure computation over already-judged data: Hellinger
distance, emotion-transition matrices and their divergences, set-based
multi-label F1, Krippendorff's alpha, vote-entropy, and the mapping
from evidence verdicts to role-consistency scores.  No judge calls, no
randomness, no I/O.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import AMBIGUOUS, CorpusError, EmotionTaxonomy
from .erc import EmotionDistribution
from .judges import RcVerdict

logger = logging.getLogger(__name__)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Smoothing added per cell before comparing flattened transition
# distributions, so a category unseen on one side cannot zero out the
# Bhattacharyya overlap entirely.
DEFAULT_SMOOTHING = 1e-9


def hellinger(p: Sequence[float], q: Sequence[float]) -> float:
    """Hellinger distance between two discrete distributions.

    H(p, q) = (1/sqrt(2)) * ||sqrt(p) - sqrt(q)||_2, which is 0 exactly
    for identical inputs and 1 for disjoint support.  The result is
    clamped to [0, 1] because the raw float expression can overshoot 1
    by an ulp on disjoint support.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.ndim != 1 or q.ndim != 1 or p.shape != q.shape:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if p.size == 0:
        raise ValueError("inputs must be non-empty")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("inputs must each sum to 1 within 1e-9")
    d = _INV_SQRT2 * math.sqrt(((np.sqrt(p) - np.sqrt(q)) ** 2).sum())
    return min(1.0, max(0.0, d))


@dataclass
class TransitionMatrix:
    """Square count matrix of label-to-label transitions.

    ``variant`` records what a pair means: ``intra`` pairs are adjacent
    utterances inside one response, ``inter`` pairs connect the last
    utterance of a response to the first utterance of the same role's
    next response in the dialogue.
    """

    variant: str
    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        if self.variant not in ("intra", "inter"):
            raise ValueError(f"bad variant: {self.variant!r}")
        self.labels = tuple(self.labels)
        n = len(self.labels)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}")
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")
        self._index = {lab: i for i, lab in enumerate(self.labels)}

    @classmethod
    def zeros(cls, variant: str, labels: Sequence[str]) -> "TransitionMatrix":
        n = len(labels)
        return cls(variant=variant, labels=tuple(labels),
                   counts=np.zeros((n, n), dtype=np.int64))

    def add(self, src: str, dst: str) -> None:
        try:
            self.counts[self._index[src], self._index[dst]] += 1
        except KeyError as exc:
            raise CorpusError(f"unknown emotion label: {exc.args[0]!r}") from None

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def row_probabilities(self) -> np.ndarray:
        """Rows normalized to 1; all-zero rows fall back to uniform."""
        n = len(self.labels)
        probs = self.counts.astype(float)
        sums = probs.sum(axis=1, keepdims=True)
        uniform = np.full((1, n), 1.0 / n)
        return np.where(sums > 0, probs / np.where(sums > 0, sums, 1.0), uniform)

    def flattened_distribution(self, smooth: float = 0.0) -> np.ndarray:
        """All n*n cells as one distribution over the total pair count."""
        total = self.total
        if total == 0:
            raise ValueError("cannot normalize an empty transition matrix")
        flat = self.counts.astype(float).ravel()
        if smooth > 0:
            return (flat + smooth) / (total + smooth * flat.size)
        return flat / total

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "labels": list(self.labels),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: Mapping) -> "TransitionMatrix":
        return cls(
            variant=obj["variant"],
            labels=tuple(obj["labels"]),
            counts=np.asarray(obj["counts"], dtype=np.int64),
        )


def build_transition_matrices(
    dialogues: Sequence[Sequence[Sequence[str]]],
    taxonomy: EmotionTaxonomy,
) -> tuple[TransitionMatrix, TransitionMatrix]:
    """Count intra- and inter-response transitions for one role.

    ``dialogues`` is a list of dialogues; each dialogue is the ordered
    list of that role's responses; each response is its per-utterance
    label list.  The ambiguous sentinel contributes no pairs at all: it
    breaks chains instead of bridging them, on both boundaries.
    """
    intra = TransitionMatrix.zeros("intra", taxonomy.labels)
    inter = TransitionMatrix.zeros("inter", taxonomy.labels)
    for dialogue in dialogues:
        prev_last: Optional[str] = None
        for labels in dialogue:
            labels = list(labels)
            if not labels:
                prev_last = None
                continue
            for a, b in zip(labels, labels[1:]):
                if a != AMBIGUOUS and b != AMBIGUOUS:
                    intra.add(a, b)
            first, last = labels[0], labels[-1]
            if prev_last is not None and prev_last != AMBIGUOUS and first != AMBIGUOUS:
                inter.add(prev_last, first)
            prev_last = last
    return intra, inter


def matrix_distance(
    a: TransitionMatrix,
    b: TransitionMatrix,
    smooth: float = DEFAULT_SMOOTHING,
    mode: str = "flatten",
) -> float:
    """Hellinger distance between two transition matrices.

    ``flatten`` (the default) treats each matrix as one distribution
    over all n*n cells, normalized by the total pair count.  ``rows``
    averages per-row distances over row-normalized probabilities
    instead (zero rows uniform, no smoothing).
    """
    if a.labels != b.labels:
        raise ValueError("matrices are over different label sets")
    if mode == "flatten":
        return hellinger(a.flattened_distribution(smooth),
                         b.flattened_distribution(smooth))
    if mode == "rows":
        rows_a = a.row_probabilities()
        rows_b = b.row_probabilities()
        return float(np.mean([hellinger(rows_a[i], rows_b[i])
                              for i in range(len(a.labels))]))
    raise ValueError(f"bad mode: {mode!r}")


def edd(
    gt: Mapping[str, TransitionMatrix],
    rpa: Mapping[str, TransitionMatrix],
    smooth: float = DEFAULT_SMOOTHING,
    mode: str = "flatten",
) -> Optional[float]:
    """Mean per-role divergence between gold and predicted transitions.

    Roles where either side has no transition pairs are excluded; with
    every role excluded the metric is undefined and ``None`` is
    returned (the caller reports it as missing, not as 0).
    """
    if set(gt) != set(rpa):
        raise ValueError("role sets differ between the two sides")
    if not gt:
        raise ValueError("no roles given")
    distances = []
    for role in sorted(gt):
        if gt[role].variant != rpa[role].variant:
            raise ValueError(f"role {role!r}: variant mismatch")
        if gt[role].is_empty or rpa[role].is_empty:
            logger.info("divergence: role %r skipped (empty side)", role)
            continue
        distances.append(matrix_distance(gt[role], rpa[role], smooth, mode))
    if not distances:
        logger.warning("divergence undefined: every role had an empty side")
        return None
    return float(np.mean(distances))


def character_distinctiveness(
    matrices: Mapping[str, TransitionMatrix],
    smooth: float = DEFAULT_SMOOTHING,
    mode: str = "flatten",
) -> Optional[float]:
    """Mean pairwise transition distance across roles (how unalike they are)."""
    if len(matrices) < 2:
        raise ValueError("need at least two roles")
    usable = [role for role in sorted(matrices) if not matrices[role].is_empty]
    skipped = sorted(set(matrices) - set(usable))
    if skipped:
        logger.info("distinctiveness: skipping empty roles %s", skipped)
    if len(usable) < 2:
        logger.warning("distinctiveness undefined: fewer than two usable roles")
        return None
    distances = [
        matrix_distance(matrices[a], matrices[b], smooth, mode)
        for a, b in itertools.combinations(usable, 2)
    ]
    return float(np.mean(distances))


@dataclass
class RcdResult:
    """Distinctiveness gap: predicted minus gold cross-role distance."""

    cd_gt: Optional[float]
    cd_rpa: Optional[float]

    @property
    def value(self) -> Optional[float]:
        if self.cd_gt is None or self.cd_rpa is None:
            return None
        return self.cd_rpa - self.cd_gt

    def to_dict(self) -> dict:
        return {"value": self.value, "cd_gt": self.cd_gt, "cd_rpa": self.cd_rpa}


def rcd(
    gt: Mapping[str, TransitionMatrix],
    rpa: Mapping[str, TransitionMatrix],
    smooth: float = DEFAULT_SMOOTHING,
    mode: str = "flatten",
) -> RcdResult:
    """Relative distinctiveness: does the model keep roles as distinct as gold?"""
    if len(gt) < 2 or len(rpa) < 2:
        raise ValueError("need at least two roles on both sides")
    return RcdResult(
        cd_gt=character_distinctiveness(gt, smooth, mode),
        cd_rpa=character_distinctiveness(rpa, smooth, mode),
    )


@dataclass
class ClassStats:
    """Corpus-level confusion counts for one class under set comparison."""

    n: int = 0  # samples whose ground-truth set contains the class
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {
            "n": self.n, "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
        }


@dataclass
class MecReport:
    """Support-weighted multi-label emotion F1 plus its per-class breakdown."""

    level: str
    value: float
    per_class: dict[str, ClassStats]

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "value": self.value,
            "per_class": {x: s.to_dict() for x, s in self.per_class.items()},
        }


def mec(
    samples: Sequence[tuple[Sequence[str], Sequence[str]]],
    taxonomy: EmotionTaxonomy,
    level: str = "lower",
) -> MecReport:
    """Emotion correctness over (gold labels, predicted labels) pairs.

    Per sample both sides are reduced to label *sets*; ambiguous
    predictions are discarded first.  At the ``upper`` level labels
    collapse to tendencies before the set comparison.  Per-class F1 is
    computed from corpus-aggregated confusion counts (0/0 taken as 0)
    and weighted by class support n_x, the number of samples whose gold
    set contains the class.
    """
    if level not in ("lower", "upper"):
        raise ValueError(f"bad level: {level!r}")
    if not samples:
        raise ValueError("no samples")
    upper = level == "upper"
    classes = taxonomy.tendencies() if upper else taxonomy.labels
    stats = {x: ClassStats() for x in classes}
    for gt_labels, pred_labels in samples:
        if not gt_labels:
            raise ValueError("sample with empty ground-truth labels")
        gt_set = set()
        for lab in gt_labels:
            if lab not in taxonomy:
                raise CorpusError(f"unknown ground-truth label: {lab!r}")
            gt_set.add(taxonomy.tendency_of(lab) if upper else lab)
        pd_set = set()
        for lab in pred_labels:
            if lab == AMBIGUOUS:
                continue
            if lab not in taxonomy:
                raise CorpusError(f"unknown predicted label: {lab!r}")
            pd_set.add(taxonomy.tendency_of(lab) if upper else lab)
        for x in classes:
            s = stats[x]
            in_gt = x in gt_set
            in_pd = x in pd_set
            if in_gt:
                s.n += 1
            if in_gt and in_pd:
                s.tp += 1
            elif in_gt and not in_pd:
                s.fn += 1
            elif not in_gt and in_pd:
                s.fp += 1
            else:
                s.tn += 1
    total_support = sum(s.n for s in stats.values())
    if total_support == 0:
        raise ValueError("no class has any ground-truth support")
    value = sum(s.n * s.f1 for s in stats.values()) / total_support
    return MecReport(level=level, value=value, per_class=stats)


def _is_missing(value: object) -> bool:
    return value is None or (isinstance(value, float) and value != value)


def krippendorff_alpha(
    rows: Sequence[Sequence[object]], level: str = "nominal"
) -> float:
    """Krippendorff's alpha over a raters-by-units table.

    ``rows`` is one list per rater, all the same length; ``None`` (or
    NaN) marks a missing rating.  Units rated by fewer than two raters
    are ignored.  Computed from the coincidence matrix with the small-
    sample (n - 1) correction; perfect observed agreement and degenerate
    tables with no expected disagreement both return 1.0.
    """
    if level not in ("nominal", "ordinal"):
        raise ValueError(f"bad level: {level!r}")
    rows = [list(r) for r in rows]
    if len(rows) < 2:
        raise ValueError("need at least two raters")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("rater rows must have equal length")
    units = []
    for j in range(width):
        ratings = [row[j] for row in rows if not _is_missing(row[j])]
        if len(ratings) >= 2:
            units.append(ratings)
    if not units:
        raise ValueError("no unit has two or more ratings")
    values = {v for unit in units for v in unit}
    try:
        categories = sorted(values)
    except TypeError:
        if level == "ordinal":
            raise ValueError("ordinal data must be mutually orderable") from None
        categories = sorted(values, key=repr)
    index = {v: i for i, v in enumerate(categories)}
    k = len(categories)
    coincidence = np.zeros((k, k))
    for unit in units:
        m = len(unit)
        for i, a in enumerate(unit):
            for j, b in enumerate(unit):
                if i != j:
                    coincidence[index[a], index[b]] += 1.0 / (m - 1)
    n_c = coincidence.sum(axis=1)
    n = n_c.sum()
    if level == "nominal":
        delta = 1.0 - np.eye(k)
    else:
        cum = np.cumsum(n_c)
        delta = np.zeros((k, k))
        for c in range(k):
            for d in range(c + 1, k):
                span = cum[d] - cum[c] + n_c[c]
                gap = (span - (n_c[c] + n_c[d]) / 2.0) ** 2
                delta[c, d] = delta[d, c] = gap
    observed = (coincidence * delta).sum()
    if observed == 0.0:
        return 1.0
    expected = (np.outer(n_c, n_c) * delta).sum()
    if expected == 0.0:
        return 1.0
    return float(1.0 - (n - 1.0) * observed / expected)


def cec(
    modality_rows: Sequence[Sequence[str]],
    taxonomy: EmotionTaxonomy,
    level: str = "lower",
) -> float:
    """Cross-modal emotion agreement: alpha with modalities as raters.

    Rows are per-modality final label sequences over the same utterance
    columns.  Ambiguous cells count as missing ratings at both levels;
    at the ``upper`` level surviving labels collapse to tendencies.
    """
    if level not in ("lower", "upper"):
        raise ValueError(f"bad level: {level!r}")
    table = []
    for row in modality_rows:
        mapped: list[Optional[str]] = []
        for lab in row:
            if lab == AMBIGUOUS:
                mapped.append(None)
            elif lab not in taxonomy:
                raise CorpusError(f"unknown emotion label: {lab!r}")
            elif level == "upper":
                mapped.append(taxonomy.tendency_of(lab))
            else:
                mapped.append(lab)
        table.append(mapped)
    return krippendorff_alpha(table, level="nominal")


def normalized_entropy(
    distribution: EmotionDistribution, num_categories: int
) -> float:
    """Shannon entropy of the vote histogram, scaled to [0, 1].

    Normalization is by log(num_categories), so 1.0 means votes spread
    uniformly over the whole taxonomy.  An empty histogram carries no
    spread and contributes 0.
    """
    if num_categories < 2:
        raise ValueError("need at least two categories")
    total = distribution.total_votes
    if total == 0:
        return 0.0
    entropy = 0.0
    for count in distribution.counts.values():
        p = count / total
        entropy -= p * math.log(p)
    return entropy / math.log(num_categories)


def ed(
    distributions: Iterable[EmotionDistribution], taxonomy: EmotionTaxonomy
) -> float:
    """Mean normalized vote-entropy over cells: expert indecision, 0 is crisp."""
    dists = list(distributions)
    if not dists:
        raise ValueError("no distributions")
    return float(
        np.mean([normalized_entropy(d, taxonomy.size) for d in dists])
    )


def rc_score_from_verdict(verdict: RcVerdict) -> Optional[int]:
    """Map an evidence verdict onto the 1..5 scale; ``None`` means dropped.

    No evidence either way is an abstention (dropped).  One-sided
    evidence pins the extremes: agree-only is 5, disagree-only is 1.
    Mixed evidence compares span counts: more agreement 4, balanced 3,
    more disagreement 2.
    """
    agree, disagree = verdict.agree_flag, verdict.disagree_flag
    if agree == 0 and disagree == 0:
        return None
    if agree == 1 and disagree == 0:
        return 5
    if agree == 0 and disagree == 1:
        return 1
    n_agree = len(verdict.agree_evidence)
    n_disagree = len(verdict.disagree_evidence)
    if n_agree > n_disagree:
        return 4
    if n_agree == n_disagree:
        return 3
    return 2


@dataclass
class RcSampleScore:
    """Per-evaluator mapped scores for one sample, plus their mean.

    Evaluators whose verdict was unavailable (transport failure or an
    unparseable reply after re-prompt) are absent from
    ``per_evaluator``; evaluators that abstained are present with
    ``None``.  ``score`` is ``None`` when nobody produced a score.
    """

    per_evaluator: dict[str, Optional[int]]
    score: Optional[float]


def rc_score(verdicts: Mapping[str, Optional[RcVerdict]]) -> RcSampleScore:
    """Combine evaluator verdicts for one sample into its score."""
    per_evaluator: dict[str, Optional[int]] = {}
    for evaluator, verdict in verdicts.items():
        if verdict is None:
            continue
        per_evaluator[evaluator] = rc_score_from_verdict(verdict)
    scores = [s for s in per_evaluator.values() if s is not None]
    return RcSampleScore(
        per_evaluator=per_evaluator,
        score=float(np.mean(scores)) if scores else None,
    )


@dataclass
class RcMetricSummary:
    """Corpus roll-up of one role-consistency metric."""

    score: Optional[float]
    per_evaluator: dict[str, Optional[float]]
    scored: int
    dropped: int

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "per_evaluator": dict(self.per_evaluator),
            "scored": self.scored,
            "dropped": self.dropped,
        }


@dataclass
class EcReport:
    """All emotional-consistency numbers for one run."""

    mec_lower: MecReport
    mec_upper: MecReport
    cec_lower: Optional[float]
    cec_upper: Optional[float]
    edd_intra: Optional[float]
    edd_inter: Optional[float]
    rcd_intra: RcdResult
    rcd_inter: RcdResult
    ed: dict[str, Optional[float]]  # keys: all, spe, fac, bod

    def to_dict(self) -> dict:
        return {
            "mec": {"lower": self.mec_lower.value, "upper": self.mec_upper.value},
            "cec": {"lower": self.cec_lower, "upper": self.cec_upper},
            "edd": {"intra": self.edd_intra, "inter": self.edd_inter},
            "rcd": {"intra": self.rcd_intra.to_dict(),
                    "inter": self.rcd_inter.to_dict()},
            "ed": dict(self.ed),
        }


@dataclass
class RcReport:
    """All role-consistency numbers for one run; keys exp, cha, rel."""

    metrics: dict[str, RcMetricSummary]

    def to_dict(self) -> dict:
        return {name: summary.to_dict() for name, summary in self.metrics.items()}
