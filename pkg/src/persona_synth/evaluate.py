"""Grouped aggregation and the alignment-metric suite.

Aggregation turns persona densities and profiles (or individual records) into
grouped response distributions: the density-weighted response share per group,
renormalized so every group row sums to 1.

Metrics compare a synthetic grouped distribution to a real benchmark:

* MAE / RMSE over all (group, response) cells, in percentage points.
* Jensen-Shannon distance: sqrt of the base-2 JS divergence, in [0, 1];
  grouped inputs average the per-group distances weighted by real group shares.
* Shannon entropy (bits) of the synthetic (group, response) joint.
* Conditional entropy gap: |H_synth(response|group) - H_real(response|group)|.
* Cramér's V on the group-weighted monotone (quantile) coupling of synthetic
  and real response distributions over the ordered response scale; identical
  inputs couple on the diagonal and score exactly 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EvaluationError
from .ingest import GroupedDistribution, MarginalTargets
from .personas import PersonaTable
from .respond import IndividualRecord, ResponseProfileSet
from .schema import AttributeSchema, Question
from .validation import check_probability_vector

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Aggregation


def aggregate_personas(
    table: PersonaTable,
    profiles: ResponseProfileSet,
    group_attribute: str | None = None,
) -> GroupedDistribution:
    """Density-weighted response shares per group, rows renormalized to 1.

    Groups whose total persona density is zero cannot be normalized and are
    omitted with a warning.
    """
    if profiles.schema != table.schema:
        raise EvaluationError("profile set schema does not match persona table")
    attr_name = group_attribute or profiles.question.group_attribute
    categories = table.schema.attribute(attr_name).categories
    group_idx = table.category_indices(attr_name)
    weights = table.densities

    rows = []
    kept = []
    for c, label in enumerate(categories):
        members = group_idx == c
        raw = weights[members] @ profiles.probs[members]
        total = float(raw.sum())
        if total <= 0.0:
            logger.warning(
                "group %r of %r has zero persona density; omitted from aggregate",
                label, attr_name,
            )
            continue
        rows.append(raw / total)
        kept.append(label)
    if not rows:
        raise EvaluationError(f"no group of {attr_name!r} carries any persona density")
    return GroupedDistribution(
        question_id=profiles.question.id,
        group_attribute=attr_name,
        groups=tuple(kept),
        responses=profiles.question.responses,
        shares=np.vstack(rows),
    )


def aggregate_individuals(
    records: Sequence[IndividualRecord],
    question: Question,
    schema: AttributeSchema,
    group_attribute: str | None = None,
) -> GroupedDistribution:
    """Empirical per-group response frequencies from individual records."""
    if not records:
        raise EvaluationError("no records to aggregate")
    attr_name = group_attribute or question.group_attribute
    axis = schema.index(attr_name)
    categories = schema.attribute(attr_name).categories
    counts = np.zeros((len(categories), len(question.responses)))
    for rec in records:
        response = rec.responses.get(question.id)
        if response is None:
            continue
        g = categories.index(rec.categories[axis])
        counts[g, question.responses.index(response)] += 1
    rows = []
    kept = []
    for c, label in enumerate(categories):
        total = counts[c].sum()
        if total == 0:
            logger.warning(
                "group %r of %r has no records; omitted from aggregate",
                label, attr_name,
            )
            continue
        rows.append(counts[c] / total)
        kept.append(label)
    if not rows:
        raise EvaluationError(f"no record answered {question.id!r}")
    return GroupedDistribution(
        question_id=question.id,
        group_attribute=attr_name,
        groups=tuple(kept),
        responses=question.responses,
        shares=np.vstack(rows),
    )


def joint_from_personas(
    table: PersonaTable, profiles: ResponseProfileSet, group_attribute: str | None = None
) -> np.ndarray:
    """Joint (group, response) distribution implied by densities and profiles."""
    attr_name = group_attribute or profiles.question.group_attribute
    categories = table.schema.attribute(attr_name).categories
    group_idx = table.category_indices(attr_name)
    joint = np.zeros((len(categories), len(profiles.question.responses)))
    for c in range(len(categories)):
        members = group_idx == c
        joint[c] = table.densities[members] @ profiles.probs[members]
    return joint / joint.sum()


def joint_from_individuals(
    records: Sequence[IndividualRecord],
    question: Question,
    schema: AttributeSchema,
    group_attribute: str | None = None,
) -> np.ndarray:
    attr_name = group_attribute or question.group_attribute
    axis = schema.index(attr_name)
    categories = schema.attribute(attr_name).categories
    counts = np.zeros((len(categories), len(question.responses)))
    for rec in records:
        response = rec.responses.get(question.id)
        if response is None:
            continue
        counts[categories.index(rec.categories[axis]),
               question.responses.index(response)] += 1
    total = counts.sum()
    if total == 0:
        raise EvaluationError(f"no record answered {question.id!r}")
    return counts / total


# ---------------------------------------------------------------------------
# Scalar metrics


def shannon_entropy(dist) -> float:
    """Shannon entropy in bits, with 0*log(0) = 0."""
    arr = np.asarray(dist, dtype=float).reshape(-1)
    if np.any(arr < 0):
        raise EvaluationError("entropy: negative share")
    positive = arr[arr > 0]
    return float(-(positive * np.log2(positive)).sum())


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence, log base 2, in [0, 1]."""
    p = check_probability_vector(p, "js p")
    q = check_probability_vector(q, "js q")
    if p.shape != q.shape:
        raise EvaluationError(f"js: support mismatch {p.shape} vs {q.shape}")
    m = (p + q) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(p > 0, p * (np.log2(np.where(p > 0, p, 1.0)) -
                                    np.log2(np.where(m > 0, m, 1.0))), 0.0)
        right = np.where(q > 0, q * (np.log2(np.where(q > 0, q, 1.0)) -
                                     np.log2(np.where(m > 0, m, 1.0))), 0.0)
    return float((left.sum() + right.sum()) / 2.0)


def js_distance(p, q, group_weights=None) -> float:
    """sqrt(JS divergence) for plain vectors; for grouped inputs, the
    per-group distances averaged with the given (real) group shares."""
    if isinstance(p, GroupedDistribution) or isinstance(q, GroupedDistribution):
        if not (isinstance(p, GroupedDistribution) and isinstance(q, GroupedDistribution)):
            raise EvaluationError("js: cannot mix grouped and plain inputs")
        _check_aligned(p, q)
        weights = _resolve_group_weights(group_weights, p.groups)
        per_group = [
            math.sqrt(js_divergence(p.shares[i], q.shares[i]))
            for i in range(len(p.groups))
        ]
        return float(np.dot(weights, per_group))
    return math.sqrt(js_divergence(p, q))


def mae_rmse(synth: GroupedDistribution, real: GroupedDistribution) -> tuple[float, float]:
    """Mean absolute / root mean square error in percentage points, over all
    (group, response) cells."""
    _check_aligned(synth, real)
    delta = (synth.shares - real.shares) * 100.0
    mae = float(np.mean(np.abs(delta)))
    rmse = float(math.sqrt(np.mean(delta**2)))
    return mae, rmse


def conditional_entropy(grouped: GroupedDistribution, group_weights) -> float:
    weights = _resolve_group_weights(group_weights, grouped.groups)
    return float(
        sum(w * shannon_entropy(row) for w, row in zip(weights, grouped.shares))
    )


def conditional_entropy_gap(
    synth: GroupedDistribution, real: GroupedDistribution, group_weights
) -> float:
    """|H(response|group) difference| between synthetic and real, in bits."""
    _check_aligned(synth, real)
    weights = _resolve_group_weights(group_weights, synth.groups)
    return abs(
        conditional_entropy(synth, weights) - conditional_entropy(real, weights)
    )


def quantile_coupling(p, q) -> np.ndarray:
    """Monotone (comonotone) coupling of two distributions on an ordered scale.

    Mass is paired by matching cumulative quantiles: cell (i, j) receives the
    overlap of p's i-th and q's j-th CDF intervals. Identical distributions
    couple exactly on the diagonal.
    """
    p = check_probability_vector(p, "coupling p")
    q = check_probability_vector(q, "coupling q")
    if p.shape != q.shape:
        raise EvaluationError(f"coupling: support mismatch {p.shape} vs {q.shape}")
    pc = np.concatenate([[0.0], np.cumsum(p)])
    qc = np.concatenate([[0.0], np.cumsum(q)])
    k = p.shape[0]
    table = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            lo = max(pc[i], qc[j])
            hi = min(pc[i + 1], qc[j + 1])
            if hi > lo:
                table[i, j] = hi - lo
    return table


def cramers_v_from_table(table: np.ndarray) -> float:
    """Cramér's V of a (possibly weighted) mass table.

    A diagonal table is perfect association by construction and returns
    exactly 1.0; all-zero rows and columns are dropped before computing the
    chi-squared statistic.
    """
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2:
        raise EvaluationError("cramers_v: expected a 2-d table")
    if np.any(arr < 0):
        raise EvaluationError("cramers_v: negative mass")
    total = arr.sum()
    if total <= 0:
        raise EvaluationError("cramers_v: empty table")
    arr = arr / total
    if arr.shape[0] == arr.shape[1] and float(np.abs(arr - np.diag(np.diag(arr))).sum()) == 0.0:
        return 1.0
    keep_rows = arr.sum(axis=1) > 0
    keep_cols = arr.sum(axis=0) > 0
    arr = arr[keep_rows][:, keep_cols]
    r, c = arr.shape
    if min(r, c) < 2:
        return 0.0
    row = arr.sum(axis=1)
    col = arr.sum(axis=0)
    expected = np.outer(row, col)
    phi2 = float((((arr - expected) ** 2) / expected).sum())
    v = math.sqrt(phi2 / (min(r, c) - 1))
    return min(max(v, 0.0), 1.0)


def cramers_v(
    synth: GroupedDistribution, real: GroupedDistribution, group_weights
) -> float:
    """Association strength between synthetic and real responses.

    Couples each group's pair of distributions monotonically over the ordered
    response scale, sums the coupling tables weighted by group shares, and
    computes V from the result.
    """
    _check_aligned(synth, real)
    weights = _resolve_group_weights(group_weights, synth.groups)
    k = len(synth.responses)
    table = np.zeros((k, k))
    for w, s_row, r_row in zip(weights, synth.shares, real.shares):
        table += w * quantile_coupling(s_row, r_row)
    return cramers_v_from_table(table)


# ---------------------------------------------------------------------------
# Report assembly


@dataclass
class MetricRow:
    """All six alignment metrics for one question (or the pooled average)."""

    question_id: str
    mae_pp: float
    rmse_pp: float
    js_distance: float
    entropy_bits: float
    conditional_entropy_gap_bits: float
    cramers_v: float

    def to_doc(self) -> dict:
        return {
            "question": self.question_id,
            "mae_pp": self.mae_pp,
            "rmse_pp": self.rmse_pp,
            "js_distance": self.js_distance,
            "entropy_bits": self.entropy_bits,
            "conditional_entropy_gap_bits": self.conditional_entropy_gap_bits,
            "cramers_v": self.cramers_v,
        }


@dataclass
class MetricReport:
    """Per-question metric rows for one method, plus their pooled average."""

    method: str
    rows: tuple[MetricRow, ...]

    @property
    def pooled(self) -> MetricRow:
        if not self.rows:
            raise EvaluationError("empty metric report")
        mean = lambda attr: float(np.mean([getattr(r, attr) for r in self.rows]))
        return MetricRow(
            question_id="(pooled)",
            mae_pp=mean("mae_pp"),
            rmse_pp=mean("rmse_pp"),
            js_distance=mean("js_distance"),
            entropy_bits=mean("entropy_bits"),
            conditional_entropy_gap_bits=mean("conditional_entropy_gap_bits"),
            cramers_v=mean("cramers_v"),
        )


def full_report(
    synth: GroupedDistribution,
    real: GroupedDistribution,
    joint_synth: np.ndarray,
    group_weights=None,
    question_id: str | None = None,
) -> MetricRow:
    """Assemble all six metrics for one question.

    ``group_weights`` should be the real benchmark's group shares; uniform
    weights are used when none are given. ``joint_synth`` is the synthetic
    (group, response) joint distribution whose entropy is reported.
    """
    _check_aligned(synth, real)
    weights = _resolve_group_weights(group_weights, synth.groups)
    mae, rmse = mae_rmse(synth, real)
    return MetricRow(
        question_id=question_id or synth.question_id,
        mae_pp=mae,
        rmse_pp=rmse,
        js_distance=js_distance(synth, real, weights),
        entropy_bits=shannon_entropy(joint_synth),
        conditional_entropy_gap_bits=conditional_entropy_gap(synth, real, weights),
        cramers_v=cramers_v(synth, real, weights),
    )


def group_weights_from_marginals(
    targets: MarginalTargets, group_attribute: str, groups: Sequence[str]
) -> np.ndarray:
    """Benchmark shares of the given groups, renormalized over those present."""
    if group_attribute not in targets.shares:
        raise EvaluationError(
            f"benchmark has no marginals for group attribute {group_attribute!r}"
        )
    categories = targets.schema.attribute(group_attribute).categories
    weights = np.array(
        [targets.shares[group_attribute][categories.index(g)] for g in groups]
    )
    total = weights.sum()
    if total <= 0:
        raise EvaluationError(f"benchmark group shares for {groups} sum to 0")
    return weights / total


def _resolve_group_weights(group_weights, groups: tuple[str, ...]) -> np.ndarray:
    if group_weights is None:
        return np.full(len(groups), 1.0 / len(groups))
    if isinstance(group_weights, Mapping):
        try:
            weights = np.array([float(group_weights[g]) for g in groups])
        except KeyError as exc:
            raise EvaluationError(f"no group weight for group {exc.args[0]!r}") from None
    else:
        weights = np.asarray(group_weights, dtype=float)
        if weights.shape != (len(groups),):
            raise EvaluationError(
                f"group weights shape {weights.shape} does not match {len(groups)} groups"
            )
    return check_probability_vector(weights, "group weights")


def _check_aligned(synth: GroupedDistribution, real: GroupedDistribution) -> None:
    if synth.question_id != real.question_id:
        raise EvaluationError(
            f"question mismatch: {synth.question_id!r} vs {real.question_id!r}"
        )
    if synth.group_attribute != real.group_attribute:
        raise EvaluationError(
            f"group attribute mismatch: {synth.group_attribute!r} vs "
            f"{real.group_attribute!r}"
        )
    if synth.groups != real.groups:
        raise EvaluationError(f"group mismatch: {synth.groups} vs {real.groups}")
    if synth.responses != real.responses:
        raise EvaluationError(
            f"response mismatch: {synth.responses} vs {real.responses}"
        )
