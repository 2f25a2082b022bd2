"""Response generation: per-persona profiles and individual-level samples.

Two backends produce profiles:

* ``deterministic`` — a pure seeded function of (persona categories, question
  id, seed). Hashed logits give every persona a distinct, strictly positive
  profile, plus a documented monotone trend along the question's grouping
  attribute (later categories lean toward later response options) so that
  age-shaped outputs are exercisable offline.
* ``llm`` — prompts a chat-completion endpoint per persona through
  :mod:`persona_synth.llm` and parses the reply into a probability vector.

Sampling uses inverse-CDF over lexicographically ordered personas with a
counter-based generator (Philox), so results are order-stable, reproducible
under the seed, and independent of persona enumeration order.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BackendError, ConfigurationError, ValidationError
from .ingest import GroupedDistribution, MarginalTargets
from .personas import PersonaTable
from .schema import AttributeSchema, Question
from .validation import check_at_least, check_probability_rows

BACKEND_KINDS = ("deterministic", "llm")
METHOD_TIERS = ("naive", "structured", "guided")

# Deterministic-backend shape parameters: hashed noise amplitude and the
# strength of the monotone trend along the grouping attribute.
_NOISE_SPREAD = 1.5
_TREND_STRENGTH = 3.0


@dataclass(eq=False)
class ResponseProfileSet:
    """One probability vector over a question's responses per persona.

    Rows follow the persona table's lexicographic order.
    """

    schema: AttributeSchema
    question: Question
    probs: np.ndarray  # (n_personas, n_responses)

    def __post_init__(self):
        n = int(np.prod(self.schema.sizes))
        self.probs = check_probability_rows(
            self.probs, f"profiles for question {self.question.id!r}"
        )
        if self.probs.shape != (n, len(self.question.responses)):
            raise ValidationError(
                f"profiles for {self.question.id!r}: shape {self.probs.shape}, expected "
                f"({n}, {len(self.question.responses)})"
            )

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    def category_indices(self, attr_name: str) -> np.ndarray:
        axis = self.schema.index(attr_name)
        return np.unravel_index(np.arange(self.n), self.schema.sizes)[axis]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([*self.schema.names, *self.question.responses])
            sizes = self.schema.sizes
            for i in range(self.n):
                idx = np.unravel_index(i, sizes)
                labels = [
                    attr.categories[j] for attr, j in zip(self.schema.attributes, idx)
                ]
                writer.writerow([*labels, *(repr(float(p)) for p in self.probs[i])])

    @classmethod
    def read_csv(cls, path: str | Path, schema: AttributeSchema,
                 question: Question) -> "ResponseProfileSet":
        n = int(np.prod(schema.sizes))
        probs = np.zeros((n, len(question.responses)))
        seen = np.zeros(n, dtype=bool)
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            expected = [*schema.names, *question.responses]
            if header != expected:
                raise ValidationError(f"{path}: header does not match schema/question")
            k = len(schema.names)
            for row in reader:
                idx = tuple(
                    schema.category_index(name, label)
                    for name, label in zip(schema.names, row[:k])
                )
                flat = int(np.ravel_multi_index(idx, schema.sizes))
                probs[flat] = [float(v) for v in row[k:]]
                seen[flat] = True
        if not seen.all():
            raise ValidationError(f"{path}: profiles missing for {int((~seen).sum())} personas")
        return cls(schema=schema, question=question, probs=probs)


@dataclass
class IndividualRecord:
    """One synthetic respondent: categories, chosen responses, provenance."""

    categories: tuple[str, ...]
    responses: dict[str, str] = field(default_factory=dict)
    provenance: str = ""


@dataclass(frozen=True)
class BackendConfig:
    """Which backend produces profiles, and with what parameters."""

    kind: str = "deterministic"
    seed: int | None = None
    tier: str = "naive"
    model: str | None = None
    base_url: str | None = None
    temperature: float = 0.7
    max_tokens: int = 512
    max_retries: int = 3
    cache_dir: str | None = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigurationError(f"backend kind must be one of {BACKEND_KINDS}")
        if self.tier not in METHOD_TIERS:
            raise ConfigurationError(f"method tier must be one of {METHOD_TIERS}")
        if self.kind == "deterministic" and self.seed is None:
            raise ConfigurationError("deterministic backend requires a seed")
        if self.kind == "llm" and (not self.model or not self.base_url):
            raise ConfigurationError("llm backend requires model and base_url")

    @property
    def provenance(self) -> str:
        if self.kind == "deterministic":
            return f"deterministic:seed={self.seed}"
        return f"llm:model={self.model}"


def _unit_interval(seed: int, *parts: str) -> float:
    """Stable hash of the parts into [0, 1); pure function of its arguments."""
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    digest = hashlib.blake2b("\x1f".join(parts).encode("utf-8"), digest_size=8, key=key)
    return int.from_bytes(digest.digest(), "little") / 2.0**64


def deterministic_profiles(
    table: PersonaTable, question: Question, seed: int
) -> ResponseProfileSet:
    """Seeded softmax profiles mixing every attribute of the persona.

    Logits are hashed noise per (persona, option) plus a trend term
    ``(group_position - 1/2) * (option_position - 1/2)``, monotone in the
    grouping attribute for each option. Profiles are strictly positive and
    invariant to persona enumeration order.
    """
    schema = table.schema
    responses = question.responses
    k_group = schema.index(question.group_attribute)
    n_groups = schema.sizes[k_group]
    n = table.n
    option_pos = (
        np.linspace(-0.5, 0.5, len(responses)) if len(responses) > 1 else np.zeros(1)
    )
    probs = np.empty((n, len(responses)))
    sizes = schema.sizes
    for i in range(n):
        idx = np.unravel_index(i, sizes)
        labels = tuple(
            attr.categories[j] for attr, j in zip(schema.attributes, idx)
        )
        group_pos = (idx[k_group] / (n_groups - 1) - 0.5) if n_groups > 1 else 0.0
        logits = np.array(
            [
                _NOISE_SPREAD * (_unit_interval(seed, question.id, option, *labels) - 0.5)
                for option in responses
            ]
        )
        logits += _TREND_STRENGTH * group_pos * option_pos
        logits -= logits.max()
        weights = np.exp(logits)
        probs[i] = weights / weights.sum()
    return ResponseProfileSet(schema=schema, question=question, probs=probs)


def generate_profiles(
    table: PersonaTable,
    question: Question,
    cfg: BackendConfig,
    client=None,
    stats: GroupedDistribution | None = None,
) -> ResponseProfileSet:
    """One response profile per persona, from the configured backend.

    The llm path renders one prompt per persona (batched by persona cell, with
    cache-level dedup), parses each reply into a probability vector and never
    fabricates a distribution: unparseable output raises ``BackendError`` with
    the raw text attached, and the exchange stays inspectable in the cache.
    """
    if cfg.kind == "deterministic":
        return deterministic_profiles(table, question, cfg.seed)

    from . import llm  # deferred: keeps the deterministic path dependency-free

    if client is None:
        client = llm.LlmClient(cfg)
    template = llm.default_template(cfg.tier, persona_based=True)
    prompts = [
        llm.render_prompt(
            template,
            question,
            persona=table.persona_context(i),
            stats=stats if cfg.tier == "guided" else None,
        )
        for i in range(table.n)
    ]
    exchanges = client.complete_many(prompts)
    probs = np.empty((table.n, len(question.responses)))
    for i, exchange in enumerate(exchanges):
        try:
            probs[i] = llm.parse_distribution(exchange.response_text, question)
        except Exception as exc:
            client.record_parse_status(exchange, f"error: {exc}")
            raise BackendError(
                f"persona {i}: model output is not a valid distribution: {exc}",
                raw_output=exchange.response_text,
            ) from exc
        client.record_parse_status(exchange, "ok")
    return ResponseProfileSet(schema=table.schema, question=question, probs=probs)


def _sample_categorical_rows(cdf_rows: np.ndarray, row_idx: np.ndarray,
                             u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw where each sample uses its own row of ``cdf_rows``."""
    picked = cdf_rows[row_idx]
    return np.minimum(
        (picked < u[:, None]).sum(axis=1), cdf_rows.shape[1] - 1
    )


def sample_individuals(
    n: int,
    source: PersonaTable | MarginalTargets,
    profiles: ResponseProfileSet | Sequence[ResponseProfileSet] | None,
    cfg: BackendConfig,
) -> list[IndividualRecord]:
    """Draw ``n`` synthetic respondents.

    Attributes come jointly from a :class:`PersonaTable`'s densities, or
    independently per attribute from :class:`MarginalTargets`; responses come
    from the matching persona's profile. Identical seeds give identical
    record lists.
    """
    check_at_least(n, 1, "n")
    if cfg.seed is None:
        raise ConfigurationError("sampling requires a seed")
    profile_sets: list[ResponseProfileSet] = []
    if profiles is not None:
        profile_sets = [profiles] if isinstance(profiles, ResponseProfileSet) else list(profiles)

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    if isinstance(source, PersonaTable):
        schema = source.schema
        cdf = np.cumsum(source.densities)
        u = rng.random(n)
        persona_idx = np.minimum(np.searchsorted(cdf, u, side="right"), source.n - 1)
    elif isinstance(source, MarginalTargets):
        schema = source.schema
        draws = []
        for attr in schema.attributes:
            if attr.name not in source.shares:
                raise ValidationError(
                    f"independent sampling needs a marginal for attribute {attr.name!r}"
                )
            cdf = np.cumsum(source.shares[attr.name])
            u = rng.random(n)
            draws.append(np.minimum(np.searchsorted(cdf, u, side="right"), attr.size - 1))
        persona_idx = np.ravel_multi_index(tuple(draws), schema.sizes)
    else:
        raise ValidationError(f"unsupported density source {type(source).__name__}")

    n_personas = int(np.prod(schema.sizes))
    response_draws: list[tuple[str, np.ndarray]] = []
    for ps in profile_sets:
        if ps.schema != schema:
            raise ValidationError("profile set schema does not match the density source")
        if ps.probs.shape[0] != n_personas:
            raise BackendError(
                f"profile set for {ps.question.id!r} covers {ps.probs.shape[0]} personas, "
                f"expected {n_personas}"
            )
        cdf_rows = np.cumsum(ps.probs, axis=1)
        u = rng.random(n)
        choice = _sample_categorical_rows(cdf_rows, persona_idx, u)
        response_draws.append((ps.question.id, choice))

    attr_indices = np.unravel_index(persona_idx, schema.sizes)
    provenance = cfg.provenance
    records = []
    for row in range(n):
        categories = tuple(
            attr.categories[int(attr_indices[k][row])]
            for k, attr in enumerate(schema.attributes)
        )
        responses = {
            qid: profile_sets[j].question.responses[int(choice[row])]
            for j, (qid, choice) in enumerate(response_draws)
        }
        records.append(
            IndividualRecord(categories=categories, responses=responses,
                             provenance=provenance)
        )
    return records


def write_individuals_csv(
    records: Sequence[IndividualRecord],
    schema: AttributeSchema,
    questions: Sequence[Question],
    path: str | Path,
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*schema.names, *(q.id for q in questions), "provenance"])
        for rec in records:
            writer.writerow(
                [
                    *rec.categories,
                    *(rec.responses.get(q.id, "") for q in questions),
                    rec.provenance,
                ]
            )


def read_individuals_csv(
    path: str | Path, schema: AttributeSchema, questions: Sequence[Question]
) -> list[IndividualRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = [*schema.names, *(q.id for q in questions), "provenance"]
        if header != expected:
            raise ValidationError(f"{path}: header does not match schema/questions")
        k = len(schema.names)
        records = []
        for row in reader:
            categories = tuple(row[:k])
            for name, label in zip(schema.names, categories):
                schema.category_index(name, label)  # raises on unknown labels
            responses = {
                q.id: value
                for q, value in zip(questions, row[k : k + len(questions)])
                if value
            }
            for q in questions:
                if q.id in responses and responses[q.id] not in q.responses:
                    raise ValidationError(
                        f"{path}: unknown response {responses[q.id]!r} for {q.id!r}"
                    )
            records.append(
                IndividualRecord(categories=categories, responses=responses,
                                 provenance=row[-1])
            )
    return records
