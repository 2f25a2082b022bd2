"""Calibration of persona densities and response profiles to benchmark targets.

Two estimators following the scikit-learn protocol (``fit`` / ``transform`` /
``get_params``), so they compose with ``clone`` and pipelines:

* :class:`MarginalCalibrator` — iterative proportional fitting (cyclic
  multiplicative raking) of persona densities onto one-dimensional attribute
  marginals. ``fit`` learns per-(attribute, category) multipliers; ``transform``
  applies them to any table over the same schema.
* :class:`ResponseCalibrator` — the same multiplicative-update idiom on
  (group x response) cells: scales per-persona response profiles so their
  density-weighted group aggregates match a benchmark grouped distribution.

Both are deterministic given their inputs. Contradictory targets surface as
``converged=False`` in the report, never as silent averaging.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import CalibrationError, InfeasibleTargetError, ValidationError
from .ingest import GroupedDistribution, MarginalTargets
from .personas import PersonaTable
from .respond import ResponseProfileSet
from .validation import (
    check_at_least,
    check_non_negative,
    check_positive,
    check_probability_rows,
)

RESPONSE_MODES = ("per-group", "overall")


@dataclass(frozen=True)
class CalibrationOptions:
    """Shared knobs for both calibrators.

    ``zero_floor`` is the seed density substituted for structural zeros when a
    marginal target requires positive mass on a category whose seed mass is 0;
    the default of 0 keeps such infeasibilities loud.
    """

    tolerance: float = 1e-6
    max_iterations: int = 1000
    zero_floor: float = 0.0
    response_mode: str = "per-group"

    def __post_init__(self):
        check_positive(self.tolerance, "tolerance")
        check_at_least(self.max_iterations, 1, "max_iterations")
        check_non_negative(self.zero_floor, "zero_floor")
        if self.response_mode not in RESPONSE_MODES:
            raise ValidationError(
                f"response_mode must be one of {RESPONSE_MODES}, got {self.response_mode!r}"
            )


@dataclass
class CalibrationReport:
    """Outcome of one calibration: iteration count, final deviation, trace."""

    iterations: int
    max_deviation: float
    converged: bool
    tolerance: float
    trace: tuple[dict[str, float], ...] = field(default_factory=tuple)

    def to_doc(self) -> dict:
        return {
            "iterations": self.iterations,
            "max_deviation": self.max_deviation,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "trace": [dict(step) for step in self.trace],
        }

    def to_text(self) -> str:
        lines = [
            f"converged: {self.converged}",
            f"iterations: {self.iterations}",
            f"max deviation: {self.max_deviation:.3e} (tolerance {self.tolerance:.1e})",
        ]
        for i, step in enumerate(self.trace, start=1):
            worst = max(step.values()) if step else 0.0
            lines.append(f"  cycle {i}: max deviation {worst:.3e}")
        return "\n".join(lines)


def _marginal_of(grid: np.ndarray, axis: int) -> np.ndarray:
    other = tuple(k for k in range(grid.ndim) if k != axis)
    return grid.sum(axis=other)


class MarginalCalibrator(TransformerMixin, BaseEstimator):
    """Rake persona densities onto per-attribute marginal targets via IPF.

    One cycle scales the table once per targeted attribute so that attribute's
    marginal matches its target exactly; cycles repeat until every targeted
    marginal deviates from its target by at most ``tolerance``, or
    ``max_iterations`` cycles have run. Densities are renormalized once at the
    end to absorb floating-point drift.

    Multiplicative updates are constant within a margin cell, so the density
    ratio of two personas that agree on every targeted attribute is preserved
    exactly. Fitted attributes: ``factors_`` (cumulative per-category
    multipliers), ``table_`` (the calibrated seed), ``report_``.
    """

    def __init__(self, tolerance: float = 1e-6, max_iterations: int = 1000,
                 zero_floor: float = 0.0):
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.zero_floor = zero_floor

    def _options(self) -> CalibrationOptions:
        return CalibrationOptions(
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            zero_floor=self.zero_floor,
        )

    def fit(self, table: PersonaTable, targets: MarginalTargets):
        opts = self._options()
        schema = table.schema
        if targets.schema != schema:
            raise ValidationError("marginal targets schema does not match persona table")
        if not targets.shares:
            raise CalibrationError("no marginal targets to calibrate against")
        sizes = schema.sizes
        grid = table.densities.reshape(sizes).copy()
        # cycle in schema attribute order, whatever order the targets came in
        targeted = sorted(
            (schema.index(name), name, targets.shares[name]) for name in targets.shares
        )

        grid = self._apply_zero_floor(grid, targeted, opts.zero_floor)

        factors = {name: np.ones(len(vec)) for _, name, vec in targeted}
        trace: list[dict[str, float]] = []
        iterations = 0
        converged = False
        for _cycle in range(opts.max_iterations):
            iterations += 1
            for axis, name, target in targeted:
                marginal = _marginal_of(grid, axis)
                blocked = (target > 0) & (marginal == 0)
                if np.any(blocked):
                    category = schema.attributes[axis].categories[int(np.argmax(blocked))]
                    raise InfeasibleTargetError(
                        f"target requires positive mass on {name!r} category "
                        f"{category!r} but the seed has none (zero_floor=0)"
                    )
                with np.errstate(divide="ignore", invalid="ignore"):
                    scale = np.where(marginal > 0, target / np.where(marginal > 0, marginal, 1.0), 0.0)
                shape = [1] * grid.ndim
                shape[axis] = len(scale)
                grid *= scale.reshape(shape)
                factors[name] *= scale
            step = {
                name: float(np.max(np.abs(_marginal_of(grid, axis) - target)))
                for axis, name, target in targeted
            }
            trace.append(step)
            if max(step.values()) <= opts.tolerance:
                converged = True
                break

        grid /= grid.sum()
        final_dev = max(
            float(np.max(np.abs(_marginal_of(grid, axis) - target)))
            for axis, _name, target in targeted
        )
        self.factors_ = factors
        self.table_ = PersonaTable(schema=schema, densities=grid.reshape(-1))
        self.report_ = CalibrationReport(
            iterations=iterations,
            max_deviation=final_dev,
            converged=converged and final_dev <= opts.tolerance,
            tolerance=opts.tolerance,
            trace=tuple(trace),
        )
        return self

    def _apply_zero_floor(self, grid, targeted, zero_floor):
        """Seed structural zeros where a target demands mass and the whole
        category carries none. Only runs when zero_floor > 0."""
        if zero_floor <= 0:
            return grid
        for axis, _name, target in targeted:
            marginal = _marginal_of(grid, axis)
            for category in np.nonzero((target > 0) & (marginal == 0))[0]:
                sl = [slice(None)] * grid.ndim
                sl[axis] = category
                grid[tuple(sl)] = zero_floor
        return grid / grid.sum()

    def transform(self, table: PersonaTable) -> PersonaTable:
        if not hasattr(self, "factors_"):
            raise NotFittedError("MarginalCalibrator is not fitted")
        if table.schema != self.table_.schema:
            raise ValidationError("table schema does not match the fitted schema")
        grid = table.densities.reshape(table.sizes).copy()
        for name, scale in self.factors_.items():
            axis = table.schema.index(name)
            shape = [1] * grid.ndim
            shape[axis] = len(scale)
            grid *= scale.reshape(shape)
        total = grid.sum()
        if total <= 0:
            raise CalibrationError("transform produced an empty table (all mass scaled away)")
        return PersonaTable(schema=table.schema, densities=(grid / total).reshape(-1))

    def fit_transform(self, table: PersonaTable, targets: MarginalTargets, **fit_params):
        self.fit(table, targets, **fit_params)
        return self.table_


class ResponseCalibrator(TransformerMixin, BaseEstimator):
    """Scale response profiles so group aggregates match a benchmark target.

    One cycle visits every target group ``a``: the density-weighted,
    renormalized aggregate share of each response ``i`` is compared to the
    target, all member profiles are scaled by ``target_i(a) / aggregate_i(a)``
    per response, and each profile is renormalized to sum to 1. Cycles repeat
    until every (group, response) cell deviates by at most ``tolerance``.

    ``mode="overall"`` collapses the target to its single density-weighted
    average over groups and constrains the whole-population aggregate instead.

    Zero-density personas never influence aggregates and are returned
    unchanged. Fitted attributes: ``factors_`` (cumulative per-cell
    multipliers by group label), ``profiles_``, ``report_``.
    """

    def __init__(self, tolerance: float = 1e-6, max_iterations: int = 1000,
                 mode: str = "per-group"):
        self.tolerance = tolerance
        self.max_iterations = max_iterations
        self.mode = mode

    def _options(self) -> CalibrationOptions:
        return CalibrationOptions(
            tolerance=self.tolerance,
            max_iterations=self.max_iterations,
            response_mode=self.mode,
        )

    def fit(self, profiles: ResponseProfileSet, target: GroupedDistribution, *,
            table: PersonaTable):
        opts = self._options()
        schema = table.schema
        if profiles.schema != schema:
            raise ValidationError("profile set schema does not match persona table")
        if tuple(profiles.question.responses) != tuple(target.responses):
            raise ValidationError(
                f"target responses {target.responses} do not match question "
                f"{profiles.question.responses}"
            )
        probs = check_probability_rows(profiles.probs, "response profiles").copy()
        weights = table.densities

        groups, membership, matrix = self._resolve_groups(table, target, weights)
        for label, members in zip(groups, membership):
            if float(weights[members].sum()) <= 0.0:
                raise CalibrationError(
                    f"group {label!r} has a target distribution but zero persona weight"
                )

        n_r = len(target.responses)
        factors = {label: np.ones(n_r) for label in groups}
        trace: list[dict[str, float]] = []
        iterations = 0
        converged = False
        for _cycle in range(opts.max_iterations):
            iterations += 1
            for label, members, goal in zip(groups, membership, matrix):
                w = weights[members]
                live = w > 0
                aggregate = w @ probs[members]
                aggregate = aggregate / aggregate.sum()
                blocked = (goal > 0) & (aggregate == 0)
                if np.any(blocked):
                    response = target.responses[int(np.argmax(blocked))]
                    raise InfeasibleTargetError(
                        f"group {label!r}: target share for response {response!r} is "
                        "positive but every weighted persona assigns it probability 0"
                    )
                with np.errstate(divide="ignore", invalid="ignore"):
                    scale = np.where(aggregate > 0, goal / np.where(aggregate > 0, aggregate, 1.0), 0.0)
                block = probs[members]
                scaled = block[live] * scale
                row_sums = scaled.sum(axis=1)
                dead = row_sums <= 0.0
                if np.any(dead):
                    persona = int(np.flatnonzero(members)[np.flatnonzero(live)[np.argmax(dead)]])
                    raise InfeasibleTargetError(
                        f"group {label!r}: persona {persona} has all its probability on "
                        "responses whose target share is 0"
                    )
                block[live] = scaled / row_sums[:, None]
                probs[members] = block
                factors[label] *= scale
            step = {}
            for label, members, goal in zip(groups, membership, matrix):
                aggregate = weights[members] @ probs[members]
                aggregate = aggregate / aggregate.sum()
                step[label] = float(np.max(np.abs(aggregate - goal)))
            trace.append(step)
            if max(step.values()) <= opts.tolerance:
                converged = True
                break

        self.factors_ = factors
        self.group_attribute_ = target.group_attribute
        self.mode_groups_ = groups
        self.profiles_ = ResponseProfileSet(
            schema=schema, question=profiles.question, probs=probs
        )
        self.report_ = CalibrationReport(
            iterations=iterations,
            max_deviation=max(trace[-1].values()) if trace else 0.0,
            converged=converged,
            tolerance=opts.tolerance,
            trace=tuple(trace),
        )
        return self

    def _resolve_groups(self, table: PersonaTable, target: GroupedDistribution, weights):
        """Group labels, persona membership masks and target rows for the mode."""
        if self.mode == "overall":
            group_idx = table.category_indices(target.group_attribute)
            label_to_row = {g: target.shares[i] for i, g in enumerate(target.groups)}
            categories = table.schema.attribute(target.group_attribute).categories
            masses = np.array(
                [
                    float(weights[group_idx == categories.index(g)].sum())
                    for g in target.groups
                ]
            )
            if masses.sum() <= 0:
                raise CalibrationError("overall mode: no persona mass in any target group")
            overall = (masses / masses.sum()) @ np.vstack([label_to_row[g] for g in target.groups])
            overall = overall / overall.sum()
            return ("overall",), (np.ones(table.n, dtype=bool),), (overall,)
        group_idx = table.category_indices(target.group_attribute)
        categories = table.schema.attribute(target.group_attribute).categories
        membership = tuple(
            group_idx == categories.index(label) for label in target.groups
        )
        return target.groups, membership, tuple(target.shares)

    def transform(self, profiles: ResponseProfileSet) -> ResponseProfileSet:
        """Apply the learned per-cell multipliers to another profile set.

        Rows whose scaled mass would vanish are returned unchanged.
        """
        if not hasattr(self, "factors_"):
            raise NotFittedError("ResponseCalibrator is not fitted")
        if self.mode == "overall":
            scale_rows = {None: self.factors_["overall"]}
            group_idx = None
        else:
            group_idx = profiles.category_indices(self.group_attribute_)
            categories = profiles.schema.attribute(self.group_attribute_).categories
            scale_rows = {categories.index(g): self.factors_[g] for g in self.mode_groups_}
        probs = check_probability_rows(profiles.probs, "response profiles").copy()
        for key, scale in scale_rows.items():
            members = slice(None) if key is None else group_idx == key
            block = probs[members] * scale
            sums = block.sum(axis=1)
            ok = sums > 0
            block[ok] /= sums[ok, None]
            block[~ok] = probs[members][~ok]
            probs[members] = block
        return ResponseProfileSet(schema=profiles.schema, question=profiles.question,
                                  probs=probs)

    def fit_transform(self, profiles: ResponseProfileSet, target: GroupedDistribution,
                      **fit_params) -> ResponseProfileSet:
        self.fit(profiles, target, **fit_params)
        return self.profiles_


def fit_densities_to_marginals(
    table: PersonaTable,
    targets: MarginalTargets,
    options: CalibrationOptions | None = None,
) -> tuple[PersonaTable, CalibrationReport]:
    """Functional wrapper over :class:`MarginalCalibrator`."""
    opts = options or CalibrationOptions()
    calibrator = MarginalCalibrator(
        tolerance=opts.tolerance,
        max_iterations=opts.max_iterations,
        zero_floor=opts.zero_floor,
    ).fit(table, targets)
    return calibrator.table_, calibrator.report_


def fit_responses_to_benchmark(
    profiles: ResponseProfileSet,
    table: PersonaTable,
    target: GroupedDistribution,
    options: CalibrationOptions | None = None,
) -> ResponseProfileSet:
    """Functional wrapper over :class:`ResponseCalibrator`."""
    opts = options or CalibrationOptions()
    calibrator = ResponseCalibrator(
        tolerance=opts.tolerance,
        max_iterations=opts.max_iterations,
        mode=opts.response_mode,
    ).fit(profiles, target, table=table)
    return calibrator.profiles_
