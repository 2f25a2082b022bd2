"""Survey design: demographic attribute domains, questions and response scales.

Everything here is loaded from a JSON config document and immutable
afterwards, so schema objects can be shared freely across threads. Category
labels are matched case-sensitively and exactly everywhere downstream;
benchmark files must use identical labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import SchemaError

DEFAULT_NOT_SPECIFIED_LABEL = "not specified"
MERGE_STRATEGIES = ("argmax", "proportional")


@dataclass(frozen=True)
class Attribute:
    """One demographic attribute and its ordered category labels."""

    name: str
    categories: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered demographic attributes defining the persona space."""

    attributes: tuple[Attribute, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.attributes)

    def index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    def category_index(self, attr_name: str, label: str) -> int:
        attr = self.attribute(attr_name)
        try:
            return attr.categories.index(label)
        except ValueError:
            raise SchemaError(f"unknown category {label!r} for attribute {attr_name!r}") from None


@dataclass(frozen=True)
class Question:
    """A survey question with an ordered response scale.

    ``group_attribute`` names the demographic attribute used for grouped
    reporting of this question (age groups by default).
    """

    id: str
    text: str
    responses: tuple[str, ...]
    group_attribute: str = "Age Group"


@dataclass(frozen=True)
class SurveyConfig:
    """A full survey design: schema, questions and ingestion knobs."""

    schema: AttributeSchema
    questions: tuple[Question, ...]
    not_specified_label: str = DEFAULT_NOT_SPECIFIED_LABEL
    merge_strategy: str = "argmax"

    def question(self, question_id: str) -> Question:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise SchemaError(f"unknown question {question_id!r}")


def persona_space_size(schema: AttributeSchema) -> int:
    """Number of personas in the schema's Cartesian product of categories."""
    n = 1
    for size in schema.sizes:
        n *= size
    return n


def _check_unique(labels, what: str) -> None:
    seen = set()
    for label in labels:
        if label in seen:
            raise SchemaError(f"duplicate {what}: {label!r}")
        seen.add(label)


def parse_attribute_schema(doc) -> AttributeSchema:
    if not isinstance(doc, (list, tuple)) or not doc:
        raise SchemaError("config must define a non-empty 'attributes' list")
    attributes = []
    for entry in doc:
        name = entry.get("name") if isinstance(entry, Mapping) else None
        categories = entry.get("categories") if isinstance(entry, Mapping) else None
        if not name or not isinstance(name, str):
            raise SchemaError("every attribute needs a non-empty string 'name'")
        if not categories:
            raise SchemaError(f"attribute {name!r} has an empty category list")
        categories = tuple(str(c) for c in categories)
        _check_unique(categories, f"category in attribute {name!r}")
        attributes.append(Attribute(name=name, categories=categories))
    _check_unique((a.name for a in attributes), "attribute name")
    return AttributeSchema(attributes=tuple(attributes))


def parse_survey_config(doc: Mapping) -> SurveyConfig:
    """Build and validate a SurveyConfig from a parsed JSON document."""
    if not isinstance(doc, Mapping):
        raise SchemaError("config document must be a JSON object")
    schema = parse_attribute_schema(doc.get("attributes"))

    questions = []
    for entry in doc.get("questions", []):
        qid = entry.get("id")
        if not qid or not isinstance(qid, str):
            raise SchemaError("every question needs a non-empty string 'id'")
        responses = tuple(str(r) for r in entry.get("responses", ()))
        if len(responses) < 2:
            raise SchemaError(f"question {qid!r} needs at least 2 response options")
        _check_unique(responses, f"response in question {qid!r}")
        group_attribute = entry.get("group_attribute", "Age Group")
        if group_attribute not in schema.names:
            raise SchemaError(
                f"question {qid!r}: group attribute {group_attribute!r} is not in the schema"
            )
        questions.append(
            Question(
                id=qid,
                text=str(entry.get("text", qid)),
                responses=responses,
                group_attribute=group_attribute,
            )
        )
    _check_unique((q.id for q in questions), "question id")

    merge_strategy = doc.get("merge_strategy", "argmax")
    if merge_strategy not in MERGE_STRATEGIES:
        raise SchemaError(
            f"merge_strategy must be one of {MERGE_STRATEGIES}, got {merge_strategy!r}"
        )
    return SurveyConfig(
        schema=schema,
        questions=tuple(questions),
        not_specified_label=str(doc.get("not_specified_label", DEFAULT_NOT_SPECIFIED_LABEL)),
        merge_strategy=merge_strategy,
    )


def survey_config_to_doc(config: SurveyConfig) -> dict:
    return {
        "attributes": [
            {"name": a.name, "categories": list(a.categories)} for a in config.schema.attributes
        ],
        "questions": [
            {
                "id": q.id,
                "text": q.text,
                "responses": list(q.responses),
                "group_attribute": q.group_attribute,
            }
            for q in config.questions
        ],
        "not_specified_label": config.not_specified_label,
        "merge_strategy": config.merge_strategy,
    }


def load_survey_config(path: str | Path) -> SurveyConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config {path}: invalid JSON: {exc}") from exc
    return parse_survey_config(doc)


def save_survey_config(config: SurveyConfig, path: str | Path) -> None:
    text = json.dumps(survey_config_to_doc(config), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_schema(source: str | Path | Mapping) -> AttributeSchema:
    """Load just the attribute schema from a config path or parsed document."""
    if isinstance(source, Mapping):
        return parse_survey_config(source).schema
    return load_survey_config(source).schema


def data_path(name: str) -> Path:
    """Path of a bundled data file (default schema, fixtures, priors)."""
    return Path(str(resources.files("persona_synth").joinpath("data", name)))


def default_config_path() -> Path:
    return data_path("default_schema.json")


def load_default_config() -> SurveyConfig:
    return load_survey_config(default_config_path())
