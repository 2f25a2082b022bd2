"""Synthetic survey populations and responses from weighted personas.

The package enumerates a persona partition over demographic attributes,
evaluates persona densities from conditional probability chains, calibrates
densities and response profiles to real benchmark aggregates, simulates
responses through deterministic or LLM backends, and scores the alignment of
the synthetic survey against the benchmark.
"""

__version__ = "0.1.0"

from .calibrate import (
    CalibrationOptions,
    CalibrationReport,
    MarginalCalibrator,
    ResponseCalibrator,
    fit_densities_to_marginals,
    fit_responses_to_benchmark,
)
from .errors import PersonaSynthError
from .evaluate import (
    MetricReport,
    MetricRow,
    aggregate_individuals,
    aggregate_personas,
    conditional_entropy_gap,
    cramers_v,
    cramers_v_from_table,
    full_report,
    js_distance,
    js_divergence,
    mae_rmse,
    quantile_coupling,
    shannon_entropy,
)
from .ingest import (
    GroupedDistribution,
    MarginalTargets,
    ingest_benchmark,
    merge_not_specified,
)
from .personas import (
    ConditionalTable,
    PersonaTable,
    density_from_conditionals,
    enumerate_personas,
    independent_densities,
)
from .respond import (
    BackendConfig,
    IndividualRecord,
    ResponseProfileSet,
    deterministic_profiles,
    generate_profiles,
    sample_individuals,
)
from .schema import (
    Attribute,
    AttributeSchema,
    Question,
    SurveyConfig,
    load_default_config,
    load_schema,
    load_survey_config,
    persona_space_size,
)

__all__ = [
    "Attribute",
    "AttributeSchema",
    "BackendConfig",
    "CalibrationOptions",
    "CalibrationReport",
    "ConditionalTable",
    "GroupedDistribution",
    "IndividualRecord",
    "MarginalCalibrator",
    "MarginalTargets",
    "MetricReport",
    "MetricRow",
    "PersonaSynthError",
    "PersonaTable",
    "Question",
    "ResponseCalibrator",
    "ResponseProfileSet",
    "SurveyConfig",
    "aggregate_individuals",
    "aggregate_personas",
    "conditional_entropy_gap",
    "cramers_v",
    "cramers_v_from_table",
    "density_from_conditionals",
    "deterministic_profiles",
    "enumerate_personas",
    "fit_densities_to_marginals",
    "fit_responses_to_benchmark",
    "full_report",
    "generate_profiles",
    "independent_densities",
    "ingest_benchmark",
    "js_distance",
    "js_divergence",
    "load_default_config",
    "load_schema",
    "load_survey_config",
    "mae_rmse",
    "merge_not_specified",
    "persona_space_size",
    "quantile_coupling",
    "sample_individuals",
    "shannon_entropy",
]
