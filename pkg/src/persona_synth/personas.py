"""Persona enumeration and density evaluation.

A persona is one combination of category indices, one per schema attribute.
The full partition is enumerated in lexicographic attribute order (first
attribute slowest), which is also numpy's C order: persona ``i`` has indices
``np.unravel_index(i, schema.sizes)``. That ordering is fixed and shared by
every table, profile matrix and export in the package.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import ValidationError
from .ingest import MarginalTargets
from .schema import AttributeSchema
from .validation import as_float_array, check_probability_vector

DENSITY_SUM_TOL = 1e-9


@dataclass(eq=False)
class PersonaTable:
    """The exhaustive persona partition with one density per persona.

    ``densities`` has one entry per point of the category Cartesian product,
    in lexicographic order; entries are non-negative and sum to 1.
    """

    schema: AttributeSchema
    densities: np.ndarray

    def __post_init__(self):
        arr = as_float_array(self.densities, "persona densities")
        n = int(np.prod(self.schema.sizes))
        if arr.shape != (n,):
            raise ValidationError(
                f"persona densities: expected shape ({n},), got {arr.shape}"
            )
        if np.any(arr < 0):
            raise ValidationError(f"persona densities: negative density {arr.min():.6g}")
        if abs(float(arr.sum()) - 1.0) > DENSITY_SUM_TOL:
            raise ValidationError(
                f"persona densities sum to {arr.sum()!r}, expected 1 within {DENSITY_SUM_TOL:g}"
            )
        self.densities = arr

    @property
    def n(self) -> int:
        return self.densities.shape[0]

    @property
    def sizes(self) -> tuple[int, ...]:
        return self.schema.sizes

    def indices(self, persona: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(persona, self.sizes))

    def labels(self, persona: int) -> tuple[str, ...]:
        return tuple(
            attr.categories[i]
            for attr, i in zip(self.schema.attributes, self.indices(persona))
        )

    def persona_context(self, persona: int) -> dict[str, str]:
        """Attribute name -> category label, e.g. for prompt rendering."""
        return dict(zip(self.schema.names, self.labels(persona)))

    def category_indices(self, attr_name: str) -> np.ndarray:
        """Category index of ``attr_name`` for every persona, in table order."""
        axis = self.schema.index(attr_name)
        return np.unravel_index(np.arange(self.n), self.sizes)[axis]

    def marginal(self, attr_name: str) -> np.ndarray:
        axis = self.schema.index(attr_name)
        grid = self.densities.reshape(self.sizes)
        other = tuple(k for k in range(len(self.sizes)) if k != axis)
        return grid.sum(axis=other)

    def marginals(self) -> dict[str, np.ndarray]:
        return {name: self.marginal(name) for name in self.schema.names}

    def normalized(self) -> "PersonaTable":
        total = float(self.densities.sum())
        if total <= 0:
            raise ValidationError("cannot normalize a zero persona table")
        return PersonaTable(schema=self.schema, densities=self.densities / total)

    def rows(self) -> Iterator[tuple[tuple[str, ...], float]]:
        for i in range(self.n):
            yield self.labels(i), float(self.densities[i])

    def write_csv(self, path: str | Path) -> None:
        """Export one row per persona; bit-identical across runs for equal inputs."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.schema.names, "density"])
            for labels, density in self.rows():
                writer.writerow([*labels, repr(density)])

    @classmethod
    def read_csv(cls, path: str | Path, schema: AttributeSchema) -> "PersonaTable":
        densities = np.zeros(int(np.prod(schema.sizes)))
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != [*schema.names, "density"]:
                raise ValidationError(f"{path}: header does not match schema")
            for row in reader:
                idx = tuple(
                    schema.category_index(name, label)
                    for name, label in zip(schema.names, row[:-1])
                )
                densities[np.ravel_multi_index(idx, schema.sizes)] = float(row[-1])
        return cls(schema=schema, densities=densities)


def enumerate_personas(schema: AttributeSchema) -> PersonaTable:
    """All personas in lexicographic order, uniform density 1/N."""
    n = int(np.prod(schema.sizes))
    return PersonaTable(schema=schema, densities=np.full(n, 1.0 / n))


@dataclass(frozen=True)
class ConditionalTable:
    """Chain factors for persona density: factor ``k`` conditions attribute
    ``k`` on the categories of attributes ``0..k-1``.

    ``factors[k]`` maps a prefix tuple of category indices (length ``k``) to a
    probability vector over attribute ``k``'s categories. Prefixes that carry
    zero probability may be omitted ("don't care"); missing entries for a
    positive-probability prefix are an error at evaluation time.
    """

    schema: AttributeSchema
    factors: tuple[Mapping[tuple[int, ...], np.ndarray], ...]

    def __post_init__(self):
        if len(self.factors) != len(self.schema.attributes):
            raise ValidationError(
                f"conditional table has {len(self.factors)} factors for "
                f"{len(self.schema.attributes)} attributes"
            )
        for k, factor in enumerate(self.factors):
            size = self.schema.sizes[k]
            for prefix, vec in factor.items():
                arr = check_probability_vector(
                    vec, f"conditional factor {k} at prefix {prefix}"
                )
                if arr.shape[0] != size:
                    raise ValidationError(
                        f"conditional factor {k} at prefix {prefix}: {arr.shape[0]} "
                        f"probabilities for {size} categories"
                    )
                factor[prefix] = arr  # type: ignore[index]

    @classmethod
    def independent(
        cls, schema: AttributeSchema, marginals: Mapping[str, np.ndarray] | MarginalTargets
    ) -> "ConditionalTable":
        """Chain with no cross-attribute dependence: every prefix gets the
        attribute's marginal. Only useful at small scale or in tests; the
        equivalent dense product is :func:`independent_densities`."""
        shares = marginals.shares if isinstance(marginals, MarginalTargets) else marginals
        factors = []
        sizes = schema.sizes
        for k, attr in enumerate(schema.attributes):
            vec = check_probability_vector(shares[attr.name], f"marginal of {attr.name!r}")
            factor = {tuple(prefix): vec for prefix in np.ndindex(*sizes[:k])}
            factors.append(factor)
        return cls(schema=schema, factors=tuple(factors))


def density_from_conditionals(table: PersonaTable, cond: ConditionalTable) -> PersonaTable:
    """Evaluate the conditional chain product for every persona.

    Each density is the product of the chain factors along the persona's
    category indices; densities are renormalized once at the end to absorb
    floating-point drift, keeping the sum-to-one contract testable at 1e-9.
    """
    if cond.schema != table.schema:
        raise ValidationError("conditional table schema does not match persona table")
    sizes = table.sizes
    dens = np.ones(())
    for k, factor in enumerate(cond.factors):
        grown = np.zeros(sizes[: k + 1])
        for prefix in np.ndindex(*sizes[:k]):
            mass = float(dens[prefix]) if k > 0 else float(dens)
            if mass == 0.0:
                continue  # zero-probability prefix: factor entries are "don't care"
            vec = factor.get(tuple(prefix))
            if vec is None:
                raise ValidationError(
                    f"conditional factor {k} missing entry for positive-probability "
                    f"prefix {tuple(prefix)}"
                )
            grown[prefix] = mass * vec
        dens = grown
    flat = dens.reshape(-1)
    total = float(flat.sum())
    if abs(total - 1.0) > DENSITY_SUM_TOL:
        raise ValidationError(
            f"conditional chain product sums to {total!r}, expected 1 within "
            f"{DENSITY_SUM_TOL:g}"
        )
    return PersonaTable(schema=table.schema, densities=flat / total)


def independent_densities(
    schema: AttributeSchema, marginals: Mapping[str, np.ndarray] | MarginalTargets
) -> PersonaTable:
    """Outer product of per-attribute marginals, as a persona table.

    Requires a marginal for every schema attribute.
    """
    shares = marginals.shares if isinstance(marginals, MarginalTargets) else marginals
    dens = np.ones(1)
    for attr in schema.attributes:
        if attr.name not in shares:
            raise ValidationError(
                f"independent densities need a marginal for attribute {attr.name!r}"
            )
        vec = check_probability_vector(shares[attr.name], f"marginal of {attr.name!r}")
        dens = np.multiply.outer(dens, vec)
    flat = dens.reshape(-1)
    return PersonaTable(schema=schema, densities=flat / flat.sum())
