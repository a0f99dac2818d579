"""Command-line entry point: ``qemroute {run-routing,run-qram,calibrate,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiments import (
    ARMS,
    ExperimentConfig,
    MitigationResult,
    calibrate,
    emit_report,
    run_qram,
    run_routing,
)

log = logging.getLogger("qemroute")


def _shots(text: str) -> int | None:
    if text.lower() in ("exact", "none"):
        return None
    value = int(float(text))
    if value < 1:
        raise argparse.ArgumentTypeError("shots must be positive or 'exact'")
    return value


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# config field -> (argparse kwargs); every ExperimentConfig field except benchmark
_CONFIG_FLAGS = {
    "epsilon_cx": dict(type=float, help="depolarizing level after every CX"),
    "epsilon_1q": dict(type=float, help="depolarizing level after single-qubit gates"),
    "readout_p10": dict(type=float, help="P(read 1 | prepared 0) on every qubit"),
    "readout_p01": dict(type=float, help="P(read 0 | prepared 1) on every qubit"),
    "shots": dict(type=_shots, help="shots per circuit, or 'exact' for exact probabilities"),
    "arms": dict(nargs="+", choices=ARMS, help="mitigation arms to run ('none' is always added)"),
    "readout_mitigation": dict(type=_bool, help="invert the calibration matrix (true/false)"),
    "zne_lambdas": dict(type=float, nargs="+", help="scale factors for the ZNE arm"),
    "zne_folding": dict(choices=("left", "right", "random", "global")),
    "zne_extrapolator": dict(help="linear, polyN or exponential"),
    "concat_lambdas": dict(type=float, nargs="+", help="scale factors for ZNE+PEC"),
    "concat_folding": dict(choices=("left", "right", "random", "global")),
    "concat_extrapolator": dict(help="linear, polyN or exponential"),
    "pec_samples": dict(type=int, help="sampled circuits per PEC estimate"),
    "pec_mode": dict(choices=("auto", "sample", "expand")),
    "qram_d0": dict(nargs="*", help="gates preparing the D0 cell, e.g. H or RZ:0.3"),
    "workers": dict(type=int, help="thread-pool size"),
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--out", type=Path, default=None, help="output directory for result files")
    p.add_argument("--format", nargs="+", choices=("json", "csv"), default=["json", "csv"])
    for name, kwargs in _CONFIG_FLAGS.items():
        # absent flags leave no attribute, so an explicit "exact" (None) still overrides
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS, **kwargs)


def config_from_args(args: argparse.Namespace, benchmark: str) -> ExperimentConfig:
    data = json.loads(args.config.read_text()) if args.config else {}
    data["benchmark"] = benchmark
    for name in _CONFIG_FLAGS:
        if hasattr(args, name):
            data[name] = getattr(args, name)
    data["seed"] = args.seed
    return ExperimentConfig.from_dict(data)


def _print_summary(result: MitigationResult):
    for name, arm in result.arms.items():
        print(f"{name:8s} F = {arm.F:.6f}")
    for name, err in result.failures.items():
        print(f"{name:8s} FAILED: {err}")


def _cmd_run(args) -> int:
    benchmark = "routing" if args.command == "run-routing" else "qram"
    cfg = config_from_args(args, benchmark)
    result = (run_routing if benchmark == "routing" else run_qram)(cfg)
    _print_summary(result)
    if args.out is not None:
        for path in emit_report(result, args.out, args.format):
            log.info("wrote %s", path)
    return 0 if result.complete else 1


def _cmd_calibrate(args) -> int:
    cal = calibrate(args.qubits, args.p10, args.p01, args.shots, args.seed)
    text = json.dumps(cal.to_dict(), indent=1)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    else:
        print(text)
    print(f"condition number {cal.condition_number:.4g}", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    result = MitigationResult.from_json(args.result.read_text())
    _print_summary(result)
    if args.out is not None:
        emit_report(result, args.out, args.format)
    return 0 if result.complete else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser = argparse.ArgumentParser(prog="qemroute", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("run-routing", "quantum router benchmark"), ("run-qram", "two-cell QRAM benchmark")):
        p = sub.add_parser(name, help=text, parents=[common])
        _add_config_flags(p)
        p.set_defaults(func=_cmd_run)

    p = sub.add_parser("calibrate", help="estimate a readout calibration matrix", parents=[common])
    p.add_argument("--qubits", type=int, default=3)
    p.add_argument("--p10", type=float, default=0.0)
    p.add_argument("--p01", type=float, default=0.0)
    p.add_argument("--shots", type=_shots, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("report", help="summarize a result.json and re-emit its files", parents=[common])
    p.add_argument("result", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--format", nargs="+", choices=("json", "csv"), default=["json", "csv"])
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        log.error("%s", err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
