"""Command-line interface: ``hardness-bench <command> [options]``.

Exit codes: 0 success, 1 hard error, 2 partial sweep failure.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path

from dotenv import load_dotenv

from hardness_bench.config import CONFIG_SCHEMA, BenchConfig, load_config
from hardness_bench.const import VERSION
from hardness_bench.data.dataset import save_csv, standardize
from hardness_bench.data.enums import SetupStatus
from hardness_bench.exceptions import ConfigError, HardnessBenchError
from hardness_bench.hardness import perturb
from hardness_bench.helpers import write_json
from hardness_bench.report import emit_report
from hardness_bench.runner import (
    build_hardness_spec,
    derive_stage_seeds,
    load_dataset,
    run_setup,
    run_severity,
    run_stability,
    single_setup,
    sweep,
)

_LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARTIAL = 2


OPTION_HELP = {
    "out": "output directory (default: $HARDNESS_BENCH_OUT or ./results)",
    "seed": "master seed",
    "dataset": "blobs, patterns or csv",
    "csv_path": "CSV file for the csv dataset",
    "hardness": "hardness kinds, comma-separated; join kinds with '+' for a composite",
    "p": "perturbation proportions, comma-separated",
    "seeds": "replicate seeds, comma-separated",
    "hidden_sizes": "hidden layer widths, comma-separated ('none' for softmax regression)",
    "methods": "hardness methods, comma-separated",
    "input_grad_stride": "record input gradients every N epochs and at the last one (0 disables VoG)",
    "jobs": "parallel setups for sweeps",
}


class UsageExitParser(argparse.ArgumentParser):
    """Report usage errors with the general error exit code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _option_keys() -> list[str]:
    return [str(marker) for marker in CONFIG_SCHEMA.schema]


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key-value config file or JSON run/sweep manifest")
    for key in _option_keys():
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=key, metavar=key.upper(), help=OPTION_HELP.get(key, f"override '{key}'"))
    parser.add_argument(
        "--set",
        dest="assignments",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any configuration key; repeatable",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = UsageExitParser(prog="hardness-bench", description="Benchmark hardness characterization methods")
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    _add_common(commands.add_parser("generate", help="write the configured dataset as CSV"))
    _add_common(commands.add_parser("perturb", help="write a perturbed dataset and its hardness flags"))
    _add_common(commands.add_parser("run", help="run one setup"))
    stability_parser = commands.add_parser("stability", help="score stability across model seeds")
    _add_common(stability_parser)
    stability_parser.add_argument("--runs", type=int, default=3, help="number of model seeds (>= 2)")
    _add_common(commands.add_parser("sweep", help="run the full hardness x p x seed grid"))
    report_parser = commands.add_parser("report", help="render heatmaps and report.md from a results directory")
    report_parser.add_argument("results", nargs="?", help="results directory (default: --out)")
    _add_common(report_parser)
    severity_parser = commands.add_parser("severity", help="compare scorer responses at small and large severity")
    _add_common(severity_parser)
    severity_parser.add_argument("--small", type=float, help="small severity value (default: preset)")
    severity_parser.add_argument("--large", type=float, help="large severity value (default: preset)")
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    """Flag values, then ``--set`` assignments; unknown keys are rejected by the config schema."""
    overrides = {key: getattr(args, key, None) for key in _option_keys()}
    for assignment in getattr(args, "assignments", []):
        key, sep, value = assignment.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
        overrides[key] = value.strip()
    return overrides


def _cmd_generate(config: BenchConfig, args: argparse.Namespace) -> int:
    seeds = derive_stage_seeds(single_setup(config))
    ds = load_dataset(config, seeds["dataset"])
    path = save_csv(ds, Path(config.out) / f"{config.dataset_name}.csv")
    print(f"Wrote {ds.n} samples ({ds.d} features, {ds.k} classes) to {path}")
    return EXIT_OK


def _cmd_perturb(config: BenchConfig, args: argparse.Namespace) -> int:
    setup = single_setup(config)
    seeds = derive_stage_seeds(setup)
    ds = standardize(load_dataset(config, seeds["dataset"]))
    result = perturb(ds, build_hardness_spec(config, setup.hardness, setup.p, seeds["hardness"]))
    out = Path(config.out)
    data_path = save_csv(result.dataset, out / f"{setup.setup_id}.csv")
    write_json(out / f"{setup.setup_id}.flags.json", result.metadata)
    print(f"Perturbed {result.flags.count} of {ds.n} samples ({setup.hardness}); wrote {data_path}")
    return EXIT_OK


def _cmd_run(config: BenchConfig, args: argparse.Namespace) -> int:
    result = run_setup(single_setup(config), config.out)
    if result.status is SetupStatus.FAILED:
        print(f"Setup {result.setup_id} failed at {result.error['stage']}: {result.error['message']}")
        return EXIT_ERROR
    if result.status is SetupStatus.SKIPPED:
        print(f"Setup {result.setup_id} skipped: {result.error['message']}")
        return EXIT_OK
    print(f"{'method':<22} {'D-AUPRC':>8} {'D-AUROC':>8} {'rank':>6}")
    report = result.report
    for i, method in enumerate(report.methods):
        print(f"{method:<22} {report.d_auprc[i]:>8.3f} {report.d_auroc[i]:>8.3f} {report.ranks[i]:>6.1f}")
    return EXIT_OK


def _cmd_stability(config: BenchConfig, args: argparse.Namespace) -> int:
    report = run_stability(single_setup(config), runs=args.runs, out_dir=config.out)
    for method, rho in report.rho.items():
        print(f"{method:<22} {'undefined' if rho is None else f'{rho:.3f}'}")
    return EXIT_OK


def _cmd_sweep(config: BenchConfig, args: argparse.Namespace) -> int:
    result = asyncio.run(sweep(config, config.out, config.jobs))
    print(f"{len(result.reports)} setups evaluated, {len(result.failed)} failed; results in {result.out_dir}")
    return EXIT_PARTIAL if result.failed else EXIT_OK


def _cmd_report(config: BenchConfig, args: argparse.Namespace) -> int:
    path = emit_report(args.results or config.out)
    print(f"Wrote {path}")
    return EXIT_OK


def _cmd_severity(config: BenchConfig, args: argparse.Namespace) -> int:
    setup = single_setup(config)
    report = run_severity(setup, args.small, args.large, config.out)
    print(f"{setup.hardness}: {report.parameter} {report.small:g} -> {report.large:g}")
    for method, change in report.change_pct.items():
        print(f"{method:<22} {'undefined' if change is None else f'{change:+.1f}%'}")
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "perturb": _cmd_perturb,
    "run": _cmd_run,
    "stability": _cmd_stability,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
    "severity": _cmd_severity,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    load_dotenv()
    try:
        config = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](config, args)
    except HardnessBenchError as e:
        _LOGGER.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
