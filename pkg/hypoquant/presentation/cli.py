"""Command-line front end: phantom, binary, nonbinary, features, correlate, evaluate."""

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, NoReturn, Optional, Sequence

from pydantic import ValidationError

from hypoquant.config import settings
from hypoquant.domain.entities import (
    Hemisphere,
    PhantomSpec,
    RankOrientation,
    RowNormalization,
    RunConfig,
    SamplingMethod,
    ThresholdMode,
)
from hypoquant.domain.exceptions import HypoQuantError, UsageError
from hypoquant.services.run_logger import RunLogger
from hypoquant.workers.analysis_worker import FEATURE_KINDS, AnalysisWorker

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class HypoQuantArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors with exit status 1."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text}") from e


def _feature_kinds(text: str) -> List[str]:
    kinds = [part.strip() for part in text.split(",") if part.strip()]
    unknown = [k for k in kinds if k not in FEATURE_KINDS]
    if not kinds or unknown:
        raise argparse.ArgumentTypeError(
            f"features must be drawn from {', '.join(FEATURE_KINDS)}; got {text!r}"
        )
    return kinds


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", default=settings.output_root,
                        help="directory for result files (default: %(default)s)")
    common.add_argument("--workers", type=int, default=settings.workers,
                        help="worker threads for per-subject stages")
    common.add_argument("--seed", type=int, default=settings.seed,
                        help="PRNG seed (env HYPOQUANT_SEED, default %(default)s)")
    common.add_argument("--log-level", default="DEBUG" if settings.debug else "INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def _dataset_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument("--manifest", required=True, help="dataset manifest (JSON)")
    options.add_argument("--hemisphere", choices=[h.value for h in Hemisphere],
                         default=Hemisphere.WHOLE.value)
    options.add_argument("--threshold", choices=[m.value for m in ThresholdMode],
                         default=ThresholdMode.ADAPTIVE.value)
    options.add_argument("--rect", type=int, nargs=4, metavar=("ROW0", "COL0", "ROWS", "COLS"),
                         help="reference rectangle for --threshold reference")
    options.add_argument("--k", type=int, default=settings.threshold_candidates,
                         help="adaptive threshold candidates (default %(default)s)")
    options.add_argument("--tessellation", type=int, default=settings.tessellation_bands,
                         help="radial band count N (default %(default)s)")
    return options


def _eigen_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument("--sampling", choices=[m.value for m in SamplingMethod],
                         default=SamplingMethod.BALANCED.value)
    options.add_argument("--fraction", type=float, default=settings.variance_fraction,
                         help="retained variance fraction (default %(default)s)")
    options.add_argument("--row-normalization", choices=[m.value for m in RowNormalization],
                         default=RowNormalization.NONE.value)
    return options


def build_parser() -> HypoQuantArgumentParser:
    parser = HypoQuantArgumentParser(
        prog="hypoquant",
        description="Quantify ROI hypointensity with binary and eigenspace descriptors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app_version}")
    subcommands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common, dataset, eigen = _common_options(), _dataset_options(), _eigen_options()

    phantom = subcommands.add_parser("phantom", parents=[common],
                                     help="generate a synthetic study")
    phantom.add_argument("--subjects", type=int, default=30)
    phantom.add_argument("--width", type=int, default=64)
    phantom.add_argument("--height", type=int, default=64)
    phantom.add_argument("--fraction-min", type=float, default=0.0)
    phantom.add_argument("--fraction-max", type=float, default=0.6)
    phantom.add_argument("--base", type=float, default=80.0)
    phantom.add_argument("--dark-delta", type=float, default=100.0)
    phantom.add_argument("--noise-sigma", type=float, default=10.0)
    phantom.add_argument("--ordered", action="store_true",
                         help="keep planted order in the manifest")

    subcommands.add_parser("binary", parents=[common, dataset],
                           help="HypoLoad, ranking and band features")

    nonbinary = subcommands.add_parser("nonbinary", parents=[common, dataset, eigen],
                                       help="eigenspace distance ranking")
    nonbinary.add_argument("--fraction-sweep", type=_float_list,
                           help="comma-separated variance fractions to score")

    subcommands.add_parser("features", parents=[common, dataset, eigen],
                           help="binary band and eigenprojection features")

    correlate = subcommands.add_parser("correlate", parents=[common, dataset, eigen],
                                       help="Kendall tau heat maps between features")
    correlate.add_argument("--features", type=_feature_kinds, default=list(FEATURE_KINDS))
    correlate.add_argument("--mode", choices=["single", "multiple"], default="single")
    correlate.add_argument("--max-description", type=int,
                           help="largest description size (default: --tessellation)")
    correlate.add_argument("--runs", type=int, default=1)
    correlate.add_argument("--orientation", choices=[o.value for o in RankOrientation],
                           default=RankOrientation.QUERY.value)

    evaluate = subcommands.add_parser("evaluate", parents=[common],
                                      help="cluster agreement of rankings")
    evaluate.add_argument("--predicted", nargs="+", required=True, help="ranking CSV files")
    truth = evaluate.add_mutually_exclusive_group(required=True)
    truth.add_argument("--truth", help="labeled manifest")
    truth.add_argument("--truth-ratios", help="CSV with id,ratio for a two-cluster split")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    values = {
        "seed": args.seed,
        "workers": args.workers,
        "output_dir": args.output,
    }
    if hasattr(args, "manifest"):
        values.update(
            manifest=args.manifest,
            hemisphere=args.hemisphere,
            threshold_mode=args.threshold,
            reference_rect=tuple(args.rect) if args.rect else None,
            candidates=args.k,
            tessellation=args.tessellation,
        )
    if hasattr(args, "sampling"):
        values.update(
            sampling=args.sampling,
            variance_fraction=args.fraction,
            row_normalization=args.row_normalization,
        )
    return RunConfig(**values)


def _phantom_spec(args: argparse.Namespace) -> PhantomSpec:
    return PhantomSpec(
        subject_count=args.subjects,
        width=args.width,
        height=args.height,
        fraction_min=args.fraction_min,
        fraction_max=args.fraction_max,
        base_intensity=args.base,
        dark_delta=args.dark_delta,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
        ordered=args.ordered,
    )


def _dispatch(args: argparse.Namespace, worker: AnalysisWorker) -> List[Path]:
    handlers: Dict[str, Callable[[], List[Path]]] = {
        "phantom": lambda: worker.run_phantom(_phantom_spec(args)),
        "binary": worker.run_binary,
        "nonbinary": lambda: worker.run_nonbinary(args.fraction_sweep),
        "features": worker.run_features,
        "correlate": lambda: worker.run_correlate(
            args.features,
            multiple=args.mode == "multiple",
            max_description=args.max_description,
            runs=args.runs,
            orientation=RankOrientation(args.orientation),
        ),
        "evaluate": lambda: worker.run_evaluate(args.predicted, args.truth, args.truth_ratios),
    }
    return handlers[args.command]()


def _validate(args: argparse.Namespace) -> None:
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if args.command == "correlate":
        if args.runs < 1:
            raise UsageError("--runs must be >= 1")
        if args.max_description is not None and args.max_description < 1:
            raise UsageError("--max-description must be >= 1")


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, execute one subcommand and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

    logging.getLogger().setLevel(args.log_level)
    try:
        _validate(args)
        config = _run_config(args)
    except (UsageError, ValidationError) as e:
        parser.print_usage(sys.stderr)
        print(f"hypoquant {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE

    run_logger = RunLogger(Path(config.output_dir), args.command)
    run_logger.log_run_started({k: v for k, v in vars(args).items() if k != "command"})
    started = time.perf_counter()
    try:
        files = _dispatch(args, AnalysisWorker(config, run_logger))
    except UsageError as e:
        run_logger.log_error(e)
        print(f"hypoquant {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HypoQuantError, ValidationError, FileNotFoundError) as e:
        run_logger.log_error(e)
        if settings.debug:
            logger.exception(f"{args.command} failed")
        print(f"hypoquant {args.command}: error: {e}", file=sys.stderr)
        return EXIT_DATA

    run_logger.log_run_completed(time.perf_counter() - started)
    for path in files:
        logger.info(f"Wrote {path}")
    return EXIT_OK
