"""Command-line interface: generate runs, evaluate them, compare all methods."""

from __future__ import annotations

import argparse
import sys

from .calibrate import CalibrationOptions
from .errors import PersonaSynthError
from .pipeline import (
    METHODS,
    compare_methods,
    default_benchmark_path,
    evaluate_run,
    generate_run,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="persona-synth",
        description="Generate synthetic survey populations and responses, "
                    "calibrate them to benchmarks, and score the alignment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run one survey generation method")
    gen.add_argument("--method", required=True, choices=METHODS)
    gen.add_argument("--backend", default="deterministic",
                     choices=("deterministic", "llm"))
    gen.add_argument("--seed", type=int, default=7)
    gen.add_argument("--n", type=int, default=10_000,
                     help="population size for non-persona methods")
    gen.add_argument("--schema", default=None, help="survey config JSON "
                     "(default: bundled)")
    gen.add_argument("--benchmark", default=None,
                     help="benchmark CSV (required for structured/guided methods)")
    gen.add_argument("--prior", default=None,
                     help="prior marginals CSV for the naive tiers (default: bundled)")
    gen.add_argument("--out", required=True, help="output run directory")
    gen.add_argument("--cache-dir", default=None, help="LLM exchange cache directory")
    gen.add_argument("--response-mode", default="per-group",
                     choices=("per-group", "overall"))
    gen.add_argument("--model", default=None, help="LLM model identifier")
    gen.add_argument("--base-url", default=None, help="LLM endpoint base URL")
    gen.add_argument("--tolerance", type=float, default=1e-6)
    gen.add_argument("--max-iterations", type=int, default=1000)
    gen.add_argument("--zero-floor", type=float, default=0.0)

    ev = sub.add_parser("evaluate", help="score a run directory against a benchmark")
    ev.add_argument("--run", required=True, help="run directory from 'generate'")
    ev.add_argument("--benchmark", required=True)
    ev.add_argument("--out", default=None,
                    help="output directory (default: <run>/eval)")

    cmp_ = sub.add_parser(
        "compare",
        help="run all six methods with the deterministic backend and summarize",
    )
    cmp_.add_argument("--benchmark", default=None,
                      help="benchmark CSV (default: bundled fixture)")
    cmp_.add_argument("--schema", default=None)
    cmp_.add_argument("--prior", default=None)
    cmp_.add_argument("--seed", type=int, default=7)
    cmp_.add_argument("--n", type=int, default=10_000)
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--response-mode", default="per-group",
                      choices=("per-group", "overall"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            options = CalibrationOptions(
                tolerance=args.tolerance,
                max_iterations=args.max_iterations,
                zero_floor=args.zero_floor,
                response_mode=args.response_mode,
            )
            result = generate_run(
                args.method,
                args.out,
                seed=args.seed,
                n=args.n,
                schema_path=args.schema,
                benchmark_path=args.benchmark,
                prior_path=args.prior,
                backend=args.backend,
                response_mode=args.response_mode,
                options=options,
                llm_model=args.model,
                llm_base_url=args.base_url,
                cache_dir=args.cache_dir,
            )
            print(f"wrote {result.run_dir}")
            if result.density_report is not None:
                print("density calibration:")
                print(result.density_report.to_text())
            for qid, report in result.response_reports.items():
                print(f"response calibration ({qid}):")
                print(report.to_text())
        elif args.command == "evaluate":
            result = evaluate_run(args.run, args.benchmark, args.out)
            print(f"wrote {result.out_dir}")
            for row in result.report.rows:
                print(
                    f"{row.question_id}: MAE {row.mae_pp:.3f}pp RMSE {row.rmse_pp:.3f}pp "
                    f"JS {row.js_distance:.4f} V {row.cramers_v:.3f}"
                )
        elif args.command == "compare":
            benchmark = args.benchmark or str(default_benchmark_path())
            result = compare_methods(
                benchmark,
                args.out,
                seed=args.seed,
                n=args.n,
                schema_path=args.schema,
                prior_path=args.prior,
                response_mode=args.response_mode,
            )
            print(f"wrote {result.out_dir}")
    except PersonaSynthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
