"""Run orchestration for the six survey generation methods.

Method tiers, in increasing use of real benchmark data:

* ``naive`` — independent sampling from bundled prior marginals.
* ``structured`` — prior densities raked onto benchmark marginals, then
  joint sampling.
* ``guided`` — structured, plus response profiles calibrated to the
  benchmark's grouped response statistics before sampling.
* ``naive-persona`` / ``structured-persona`` / ``guided-persona`` — the same
  ladder, but the output is the weighted persona table plus per-persona
  response profiles instead of sampled individuals.

Every run writes plain files into its output directory: a manifest (method,
seed, input hashes, tool version), the survey config, persona tables or
individual records, calibration reports and a deterministic log. With the
deterministic backend, equal manifests produce byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from .calibrate import (
    CalibrationOptions,
    CalibrationReport,
    MarginalCalibrator,
    ResponseCalibrator,
)
from .errors import ConfigurationError, PipelineError
from .evaluate import (
    MetricReport,
    aggregate_individuals,
    aggregate_personas,
    full_report,
    group_weights_from_marginals,
    joint_from_individuals,
    joint_from_personas,
)
from .ingest import GroupedDistribution, MarginalTargets, grouped_target_for, ingest_benchmark
from .personas import PersonaTable, independent_densities
from .report import render_comparison_svg, write_metrics_csv, write_metrics_text
from .respond import (
    BackendConfig,
    IndividualRecord,
    ResponseProfileSet,
    generate_profiles,
    read_individuals_csv,
    sample_individuals,
    write_individuals_csv,
)
from .schema import (
    SurveyConfig,
    data_path,
    default_config_path,
    load_survey_config,
    save_survey_config,
)

METHODS = (
    "naive",
    "structured",
    "guided",
    "naive-persona",
    "structured-persona",
    "guided-persona",
)

MANIFEST_NAME = "manifest.json"
CONFIG_NAME = "config.json"
PERSONAS_NAME = "personas.csv"
INDIVIDUALS_NAME = "individuals.csv"
CALIBRATION_NAME = "calibration.json"
LOG_NAME = "log.txt"


def default_prior_path() -> Path:
    return data_path("naive_prior.csv")


def default_benchmark_path() -> Path:
    return data_path("benchmark_fixture.csv")


def method_tier(method: str) -> str:
    return method.removesuffix("-persona")


def is_persona_method(method: str) -> bool:
    return method.endswith("-persona")


def sha256_file(path: str | Path) -> str:
    return sha256(Path(path).read_bytes()).hexdigest()


def profiles_name(question_id: str) -> str:
    return f"profiles_{question_id}.csv"


@dataclass
class RunManifest:
    """Everything needed to reproduce a generate run.

    With the deterministic backend, two runs with equal manifests produce
    byte-identical outputs.
    """

    method: str
    backend: str
    seed: int
    n: int
    response_mode: str
    schema_path: str
    benchmark_path: str | None
    prior_path: str
    out_dir: str
    tool_version: str
    llm_model: str | None = None
    llm_base_url: str | None = None
    input_hashes: dict[str, str] = field(default_factory=dict)

    def to_doc(self) -> dict:
        return {
            "method": self.method,
            "backend": self.backend,
            "seed": self.seed,
            "n": self.n,
            "response_mode": self.response_mode,
            "schema_path": self.schema_path,
            "benchmark_path": self.benchmark_path,
            "prior_path": self.prior_path,
            "out_dir": self.out_dir,
            "tool_version": self.tool_version,
            "llm_model": self.llm_model,
            "llm_base_url": self.llm_base_url,
            "input_hashes": dict(sorted(self.input_hashes.items())),
        }

    @classmethod
    def from_doc(cls, doc: Mapping) -> "RunManifest":
        return cls(
            method=doc["method"],
            backend=doc["backend"],
            seed=doc["seed"],
            n=doc["n"],
            response_mode=doc["response_mode"],
            schema_path=doc["schema_path"],
            benchmark_path=doc.get("benchmark_path"),
            prior_path=doc["prior_path"],
            out_dir=doc["out_dir"],
            tool_version=doc["tool_version"],
            llm_model=doc.get("llm_model"),
            llm_base_url=doc.get("llm_base_url"),
            input_hashes=dict(doc.get("input_hashes", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls.from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class GenerateResult:
    manifest: RunManifest
    run_dir: Path
    config: SurveyConfig
    table: PersonaTable
    profiles: dict[str, ResponseProfileSet]
    records: list[IndividualRecord]
    density_report: CalibrationReport | None
    response_reports: dict[str, CalibrationReport]


def generate_run(
    method: str,
    out_dir: str | Path,
    seed: int,
    n: int = 10_000,
    schema_path: str | Path | None = None,
    benchmark_path: str | Path | None = None,
    prior_path: str | Path | None = None,
    backend: str = "deterministic",
    response_mode: str = "per-group",
    options: CalibrationOptions | None = None,
    llm_model: str | None = None,
    llm_base_url: str | None = None,
    cache_dir: str | Path | None = None,
) -> GenerateResult:
    """Execute one method tier end to end and write its artifacts."""
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose from {METHODS}")
    tier = method_tier(method)
    if tier in ("structured", "guided") and benchmark_path is None:
        raise ConfigurationError(f"method {method!r} requires a benchmark file")

    schema_path = Path(schema_path) if schema_path else default_config_path()
    prior_path = Path(prior_path) if prior_path else default_prior_path()
    config = load_survey_config(schema_path)
    schema = config.schema

    cfg = BackendConfig(
        kind=backend,
        seed=seed,
        tier=tier,
        model=llm_model,
        base_url=llm_base_url,
        cache_dir=str(cache_dir) if cache_dir else None,
    )
    opts = options or CalibrationOptions(response_mode=response_mode)
    log: list[str] = [f"method={method}", f"backend={backend}", f"seed={seed}"]

    prior_targets, _ = ingest_benchmark(prior_path, config)
    table = independent_densities(schema, prior_targets)
    log.append(f"personas={table.n}")

    benchmark_targets: MarginalTargets | None = None
    benchmark_grouped: list[GroupedDistribution] = []
    density_report: CalibrationReport | None = None
    if tier in ("structured", "guided"):
        benchmark_targets, benchmark_grouped = ingest_benchmark(benchmark_path, config)
        calibrator = MarginalCalibrator(
            tolerance=opts.tolerance,
            max_iterations=opts.max_iterations,
            zero_floor=opts.zero_floor,
        ).fit(table, benchmark_targets)
        table = calibrator.table_
        density_report = calibrator.report_
        log.append(
            "density calibration: converged=%s iterations=%d max_dev=%r"
            % (density_report.converged, density_report.iterations,
               density_report.max_deviation)
        )

    profiles: dict[str, ResponseProfileSet] = {}
    response_reports: dict[str, CalibrationReport] = {}
    for question in config.questions:
        target = grouped_target_for(benchmark_grouped, question)
        ps = generate_profiles(
            table, question, cfg, stats=target if tier == "guided" else None
        )
        if tier == "guided" and target is not None:
            calibrator = ResponseCalibrator(
                tolerance=opts.tolerance,
                max_iterations=opts.max_iterations,
                mode=opts.response_mode,
            ).fit(ps, target, table=table)
            ps = calibrator.profiles_
            response_reports[question.id] = calibrator.report_
            log.append(
                "response calibration %s: converged=%s iterations=%d max_dev=%r"
                % (question.id, calibrator.report_.converged,
                   calibrator.report_.iterations, calibrator.report_.max_deviation)
            )
        profiles[question.id] = ps

    records: list[IndividualRecord] = []
    if not is_persona_method(method):
        source = prior_targets if tier == "naive" else table
        records = sample_individuals(n, source, list(profiles.values()), cfg)
        log.append(f"individuals={len(records)}")

    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        method=method,
        backend=backend,
        seed=seed,
        n=n,
        response_mode=opts.response_mode,
        schema_path=str(schema_path),
        benchmark_path=str(benchmark_path) if benchmark_path else None,
        prior_path=str(prior_path),
        out_dir=str(run_dir),
        tool_version=__version__,
        llm_model=llm_model,
        llm_base_url=llm_base_url,
        input_hashes={
            "schema": sha256_file(schema_path),
            "prior": sha256_file(prior_path),
            **({"benchmark": sha256_file(benchmark_path)} if benchmark_path else {}),
        },
    )
    manifest.save(run_dir / MANIFEST_NAME)
    save_survey_config(config, run_dir / CONFIG_NAME)
    if is_persona_method(method):
        table.write_csv(run_dir / PERSONAS_NAME)
        for qid, ps in profiles.items():
            ps.write_csv(run_dir / profiles_name(qid))
    else:
        write_individuals_csv(records, schema, config.questions,
                              run_dir / INDIVIDUALS_NAME)
    calibration_doc = {
        "density": density_report.to_doc() if density_report else None,
        "responses": {qid: rep.to_doc() for qid, rep in response_reports.items()},
    }
    (run_dir / CALIBRATION_NAME).write_text(
        json.dumps(calibration_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (run_dir / LOG_NAME).write_text("\n".join(log) + "\n", encoding="utf-8")
    return GenerateResult(
        manifest=manifest,
        run_dir=run_dir,
        config=config,
        table=table,
        profiles=profiles,
        records=records,
        density_report=density_report,
        response_reports=response_reports,
    )


@dataclass
class LoadedRun:
    manifest: RunManifest
    config: SurveyConfig
    table: PersonaTable | None
    profiles: dict[str, ResponseProfileSet]
    records: list[IndividualRecord]


def load_run(run_dir: str | Path) -> LoadedRun:
    """Reload a run directory's artifacts, checking completeness first."""
    run_dir = Path(run_dir)
    required = [MANIFEST_NAME, CONFIG_NAME]
    missing = [name for name in required if not (run_dir / name).exists()]
    if missing:
        raise PipelineError(f"run directory {run_dir} is missing: {', '.join(missing)}")
    manifest = RunManifest.load(run_dir / MANIFEST_NAME)
    config = load_survey_config(run_dir / CONFIG_NAME)
    if is_persona_method(manifest.method):
        needed = [PERSONAS_NAME] + [profiles_name(q.id) for q in config.questions]
    else:
        needed = [INDIVIDUALS_NAME]
    missing = [name for name in needed if not (run_dir / name).exists()]
    if missing:
        raise PipelineError(f"run directory {run_dir} is missing: {', '.join(missing)}")

    table = None
    profiles: dict[str, ResponseProfileSet] = {}
    records: list[IndividualRecord] = []
    if is_persona_method(manifest.method):
        table = PersonaTable.read_csv(run_dir / PERSONAS_NAME, config.schema)
        for q in config.questions:
            profiles[q.id] = ResponseProfileSet.read_csv(
                run_dir / profiles_name(q.id), config.schema, q
            )
    else:
        records = read_individuals_csv(run_dir / INDIVIDUALS_NAME, config.schema,
                                       config.questions)
    return LoadedRun(manifest=manifest, config=config, table=table,
                     profiles=profiles, records=records)


def synthetic_grouped(run: LoadedRun) -> dict[str, GroupedDistribution]:
    """The run's grouped response distributions, one per question."""
    out = {}
    for q in run.config.questions:
        if run.table is not None:
            out[q.id] = aggregate_personas(run.table, run.profiles[q.id])
        else:
            answered = [r for r in run.records if q.id in r.responses]
            if not answered:
                continue
            out[q.id] = aggregate_individuals(answered, q, run.config.schema)
    return out


def synthetic_joint(run: LoadedRun, question_id: str) -> np.ndarray:
    q = run.config.question(question_id)
    if run.table is not None:
        return joint_from_personas(run.table, run.profiles[question_id])
    return joint_from_individuals(run.records, q, run.config.schema)


@dataclass
class EvaluateResult:
    report: MetricReport
    out_dir: Path
    files: list[Path]


def evaluate_run(
    run_dir: str | Path,
    benchmark_path: str | Path,
    out_dir: str | Path | None = None,
) -> EvaluateResult:
    """Compare a run against a benchmark; write metric tables and plots."""
    run = load_run(run_dir)
    out = Path(out_dir) if out_dir else Path(run_dir) / "eval"
    out.mkdir(parents=True, exist_ok=True)
    targets, grouped_real = ingest_benchmark(benchmark_path, run.config)
    synth_by_q = synthetic_grouped(run)

    rows = []
    files = []
    for q in run.config.questions:
        real = grouped_target_for(grouped_real, q)
        if real is None or q.id not in synth_by_q:
            continue
        synth = synth_by_q[q.id]
        weights = group_weights_from_marginals(targets, real.group_attribute, real.groups)
        rows.append(
            full_report(synth, real, synthetic_joint(run, q.id), group_weights=weights)
        )
        svg = render_comparison_svg(
            [(run.manifest.method, synth)], real=real,
            title=f"{q.id}: response shares by {real.group_attribute}",
        )
        svg_path = out / f"plot_{q.id}.svg"
        svg_path.write_text(svg, encoding="utf-8")
        files.append(svg_path)
    if not rows:
        raise PipelineError(
            "nothing to evaluate: no question has both synthetic output and "
            "a benchmark distribution"
        )
    report = MetricReport(method=run.manifest.method, rows=tuple(rows))
    csv_path = out / "metrics.csv"
    txt_path = out / "metrics.txt"
    write_metrics_csv(csv_path, [report], include_pooled=True)
    write_metrics_text(txt_path, [report], include_pooled=True)
    files.extend([csv_path, txt_path])
    return EvaluateResult(report=report, out_dir=out, files=files)


@dataclass
class CompareResult:
    reports: list[MetricReport]
    out_dir: Path


def compare_methods(
    benchmark_path: str | Path,
    out_dir: str | Path,
    seed: int,
    n: int = 10_000,
    schema_path: str | Path | None = None,
    prior_path: str | Path | None = None,
    response_mode: str = "per-group",
    options: CalibrationOptions | None = None,
) -> CompareResult:
    """Run all six methods with the deterministic backend and summarize."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    panels_by_q: dict[str, list[tuple[str, GroupedDistribution]]] = {}
    config = load_survey_config(Path(schema_path) if schema_path else default_config_path())
    targets, grouped_real = ingest_benchmark(benchmark_path, config)

    for method in METHODS:
        result = generate_run(
            method,
            out / method,
            seed=seed,
            n=n,
            schema_path=schema_path,
            benchmark_path=benchmark_path,
            prior_path=prior_path,
            backend="deterministic",
            response_mode=response_mode,
            options=options,
        )
        run = load_run(result.run_dir)
        synth_by_q = synthetic_grouped(run)
        rows = []
        for q in config.questions:
            real = grouped_target_for(grouped_real, q)
            if real is None or q.id not in synth_by_q:
                continue
            synth = synth_by_q[q.id]
            weights = group_weights_from_marginals(
                targets, real.group_attribute, real.groups
            )
            rows.append(
                full_report(synth, real, synthetic_joint(run, q.id),
                            group_weights=weights)
            )
            panels_by_q.setdefault(q.id, []).append((method, synth))
        reports.append(MetricReport(method=method, rows=tuple(rows)))

    write_metrics_csv(out / "summary.csv", reports, include_pooled=True)
    write_metrics_text(out / "summary.txt", reports, include_pooled=True)
    for q in config.questions:
        real = grouped_target_for(grouped_real, q)
        if real is None or q.id not in panels_by_q:
            continue
        panels = [("real survey", real)] + panels_by_q[q.id]
        svg = render_comparison_svg(
            panels, real=real, title=f"{q.id}: response shares by {real.group_attribute}"
        )
        (out / f"compare_{q.id}.svg").write_text(svg, encoding="utf-8")
    return CompareResult(reports=reports, out_dir=out)
