"""Benchmark ingestion: delimited aggregate tables -> calibration targets.

File layout (CSV, ``#`` comment lines allowed before or between rows):

    kind,attribute,category,question,response,share_percent

``kind`` is ``marginal`` (demographic share of ``category`` within
``attribute``; question/response empty) or ``response`` (share of ``response``
to ``question`` within the demographic group ``attribute``/``category``).
Shares are percentages, converted to fractions here; the reporting layer
converts back to percentage points.

Rows labelled with the config's "not specified" label are merged into the
remaining shares before validation, for demographic marginals and response
distributions alike.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import IngestError
from .schema import AttributeSchema, Question, SurveyConfig
from .validation import check_probability_rows, check_probability_vector

logger = logging.getLogger(__name__)

COLUMNS = ("kind", "attribute", "category", "question", "response", "share_percent")
KIND_MARGINAL = "marginal"
KIND_RESPONSE = "response"

# Percent sums outside this band signal data corruption rather than rounding.
PERCENT_SUM_BAND = (98.0, 102.0)


@dataclass(eq=False)
class MarginalTargets:
    """Per-attribute category shares (fractions summing to 1).

    ``shares`` maps attribute name -> vector aligned to the schema's category
    order. Attributes absent from the source file are simply absent here;
    calibration then leaves them unconstrained.
    """

    schema: AttributeSchema
    shares: dict[str, np.ndarray]

    def __post_init__(self):
        for name, vec in self.shares.items():
            attr = self.schema.attribute(name)
            arr = check_probability_vector(vec, f"marginal targets for {name!r}")
            if arr.shape[0] != attr.size:
                raise IngestError(
                    f"marginal targets for {name!r}: {arr.shape[0]} shares for "
                    f"{attr.size} categories"
                )
            self.shares[name] = arr

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self.shares)


@dataclass(eq=False)
class GroupedDistribution:
    """Response shares per demographic group; every group row sums to 1."""

    question_id: str
    group_attribute: str
    groups: tuple[str, ...]
    responses: tuple[str, ...]
    shares: np.ndarray  # (n_groups, n_responses)

    def __post_init__(self):
        self.shares = check_probability_rows(
            self.shares, f"grouped shares for question {self.question_id!r}"
        )
        if self.shares.shape != (len(self.groups), len(self.responses)):
            raise IngestError(
                f"grouped shares for {self.question_id!r}: shape {self.shares.shape} does not "
                f"match {len(self.groups)} groups x {len(self.responses)} responses"
            )

    def row(self, group: str) -> np.ndarray:
        return self.shares[self.groups.index(group)]


def merge_not_specified(
    shares: Sequence[float] | np.ndarray,
    labels: Sequence[str],
    not_specified_label: str = "not specified",
    strategy: str = "argmax",
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Fold the "not specified" share into the remaining options.

    ``argmax`` adds the whole mass to the single most popular remaining option
    (ties broken by earlier position); ``proportional`` redistributes it
    proportionally to the remaining shares. Total mass is preserved and the
    maximum share never decreases.
    """
    labels = tuple(labels)
    arr = np.asarray(shares, dtype=float)
    if arr.shape[0] != len(labels):
        raise IngestError("merge_not_specified: shares and labels differ in length")
    try:
        ns = labels.index(not_specified_label)
    except ValueError:
        raise IngestError(
            f"merge_not_specified: no {not_specified_label!r} entry in {labels}"
        ) from None
    mass = float(arr[ns])
    rest = np.delete(arr, ns)
    rest_labels = labels[:ns] + labels[ns + 1 :]
    rest_total = float(rest.sum())
    if rest_total <= 0.0:
        raise IngestError(
            f"merge_not_specified: all mass sits on {not_specified_label!r}; "
            "no target response exists"
        )
    merged = rest.copy()
    if strategy == "argmax":
        merged[int(np.argmax(rest))] += mass
    elif strategy == "proportional":
        merged *= 1.0 + mass / rest_total
    else:
        raise IngestError(f"unknown merge strategy {strategy!r}")
    return merged, rest_labels


@dataclass
class _Unit:
    """One distribution read from the file, with row provenance for errors."""

    labels: list[str]
    percents: list[float]
    lines: list[int]

    def add(self, label: str, percent: float, line: int) -> None:
        if label in self.labels:
            raise IngestError(f"line {line}: duplicate entry {label!r}")
        self.labels.append(label)
        self.percents.append(percent)
        self.lines.append(line)


def _read_rows(path: str | Path) -> list[tuple[int, dict[str, str]]]:
    raw_lines = Path(path).read_text(encoding="utf-8").splitlines()
    data: list[tuple[int, str]] = [
        (i + 1, line)
        for i, line in enumerate(raw_lines)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not data:
        raise IngestError(f"{path}: empty benchmark file")
    header_line, header_text = data[0]
    header = next(csv.reader([header_text]))
    if tuple(h.strip() for h in header) != COLUMNS:
        raise IngestError(
            f"{path} line {header_line}: expected header {','.join(COLUMNS)!r}"
        )
    rows = []
    for lineno, text in data[1:]:
        values = next(csv.reader([text]))
        if len(values) != len(COLUMNS):
            raise IngestError(f"{path} line {lineno}: expected {len(COLUMNS)} columns")
        rows.append((lineno, dict(zip(COLUMNS, (v.strip() for v in values)))))
    return rows


def _finalize_unit(
    unit: _Unit,
    valid_labels: tuple[str, ...],
    what: str,
    config: SurveyConfig,
) -> np.ndarray:
    """Sum-check, merge "not specified", validate labels, align to canonical order."""
    total = float(sum(unit.percents))
    lo, hi = PERCENT_SUM_BAND
    if not lo <= total <= hi:
        raise IngestError(
            f"{what}: shares sum to {total:.4f}%, outside [{lo}, {hi}] "
            "(data corruption signal)"
        )
    fractions = np.asarray(unit.percents, dtype=float) / 100.0
    if np.any(fractions < 0):
        raise IngestError(f"{what}: negative share")
    fractions = fractions / fractions.sum()
    labels = tuple(unit.labels)
    if config.not_specified_label in labels:
        fractions, labels = merge_not_specified(
            fractions, labels, config.not_specified_label, config.merge_strategy
        )
    line_of = dict(zip(unit.labels, unit.lines))
    for label in labels:
        if label not in valid_labels:
            raise IngestError(
                f"line {line_of.get(label, '?')}: unknown label {label!r} in {what}"
            )
    aligned = np.zeros(len(valid_labels))
    for label, share in zip(labels, fractions):
        aligned[valid_labels.index(label)] = share
    return aligned


def ingest_benchmark(
    path: str | Path, config: SurveyConfig
) -> tuple[MarginalTargets, list[GroupedDistribution]]:
    """Parse a benchmark file into marginal targets and grouped response targets.

    Deterministic: the same bytes always produce identical structures, with
    categories and responses in schema/question order regardless of row order.
    """
    schema = config.schema
    rows = _read_rows(path)

    marginal_units: dict[str, _Unit] = {}
    response_units: dict[tuple[str, str, str], _Unit] = {}
    for lineno, row in rows:
        kind = row["kind"]
        try:
            percent = float(row["share_percent"])
        except ValueError:
            raise IngestError(
                f"line {lineno}: share_percent {row['share_percent']!r} is not a number"
            ) from None
        if kind == KIND_MARGINAL:
            attr = row["attribute"]
            if attr not in schema.names:
                raise IngestError(f"line {lineno}: unknown attribute {attr!r}")
            unit = marginal_units.setdefault(attr, _Unit([], [], []))
            unit.add(row["category"], percent, lineno)
        elif kind == KIND_RESPONSE:
            attr = row["attribute"]
            if attr not in schema.names:
                raise IngestError(f"line {lineno}: unknown group attribute {attr!r}")
            qid = row["question"]
            question_ids = tuple(q.id for q in config.questions)
            if qid not in question_ids:
                raise IngestError(f"line {lineno}: unknown question {qid!r}")
            group = row["category"]
            if group not in schema.attribute(attr).categories:
                raise IngestError(
                    f"line {lineno}: unknown group category {group!r} for {attr!r}"
                )
            unit = response_units.setdefault((qid, attr, group), _Unit([], [], []))
            unit.add(row["response"], percent, lineno)
        else:
            raise IngestError(f"line {lineno}: unknown kind {kind!r}")

    shares: dict[str, np.ndarray] = {}
    for attr_name in schema.names:  # canonical attribute order
        if attr_name not in marginal_units:
            continue
        attr = schema.attribute(attr_name)
        shares[attr_name] = _finalize_unit(
            marginal_units[attr_name],
            attr.categories,
            f"marginals of {attr_name!r}",
            config,
        )
    targets = MarginalTargets(schema=schema, shares=shares)

    grouped: list[GroupedDistribution] = []
    for question in config.questions:
        attrs_seen = {attr for (qid, attr, _group) in response_units if qid == question.id}
        if not attrs_seen:
            continue
        if len(attrs_seen) > 1:
            raise IngestError(
                f"question {question.id!r}: grouped by multiple attributes {sorted(attrs_seen)}"
            )
        group_attr = attrs_seen.pop()
        categories = schema.attribute(group_attr).categories
        present = [c for c in categories if (question.id, group_attr, c) in response_units]
        matrix = np.vstack(
            [
                _finalize_unit(
                    response_units[(question.id, group_attr, c)],
                    question.responses,
                    f"responses of {question.id!r} in group {c!r}",
                    config,
                )
                for c in present
            ]
        )
        grouped.append(
            GroupedDistribution(
                question_id=question.id,
                group_attribute=group_attr,
                groups=tuple(present),
                responses=question.responses,
                shares=matrix,
            )
        )
    logger.info(
        "ingested %s: %d marginal attributes, %d grouped distributions",
        path,
        len(shares),
        len(grouped),
    )
    return targets, grouped


def grouped_target_for(
    grouped: Sequence[GroupedDistribution], question: Question
) -> GroupedDistribution | None:
    for dist in grouped:
        if dist.question_id == question.id:
            return dist
    return None
