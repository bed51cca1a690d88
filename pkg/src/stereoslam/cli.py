"""Command line entry point: ``stereoslam run | eval | synth``.

Exit codes: 0 success, 1 usage or configuration error, 2 input could not be
loaded, 3 tracking halted (partial outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .dataset import DatasetError, load_kitti_sequence, read_trajectory
from .metrics import DegenerateAlignment, MetricsReport, ate_rmse, kitti_relative_errors
from .pipeline import (ConfigError, SlamConfig, TrackingHalted, format_config, parse_config,
                       run_pipeline)
from .synthworld import export_kitti, generate_scene, parse_scene_spec

EXIT_OK, EXIT_USAGE, EXIT_LOAD, EXIT_HALT = 0, 1, 2, 3

log = logging.getLogger("stereoslam")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this tool reserves 2 for load errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stereoslam", description="Stereo visual SLAM over rectified sequences.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more log output (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="process a KITTI-layout stereo sequence")
    run.add_argument("--dataset", required=True, type=Path, help="dataset root or sequence directory")
    run.add_argument("--sequence", default="", help="sequence id, e.g. 00")
    run.add_argument("--config", type=Path, help="key = value configuration file")
    run.add_argument("--out", required=True, type=Path, help="output directory")
    run.add_argument("--no-relocalization", action="store_true",
                     help="disable loop closing (ablation)")
    run.add_argument("--set", dest="overrides", action="append", default=[], type=_key_value,
                     metavar="KEY=VALUE", help="override one configuration value")
    run.add_argument("--print-config", action="store_true",
                     help="print the effective configuration and exit")

    ev = sub.add_parser("eval", help="score a trajectory file against ground truth")
    ev.add_argument("--estimate", required=True, type=Path)
    ev.add_argument("--truth", required=True, type=Path)
    ev.add_argument("--out", type=Path, help="also write metrics.txt and metrics.csv here")

    syn = sub.add_parser("synth", help="render a synthetic KITTI-layout sequence")
    syn.add_argument("--spec", required=True, type=Path, help="scene key = value file")
    syn.add_argument("--out", required=True, type=Path)
    syn.add_argument("--frames", type=int, help="only the first N frames")
    return parser


def _load_config(args) -> SlamConfig:
    config = SlamConfig()
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise DatasetError(f"cannot read configuration: {exc}") from None
        config = parse_config(text, config)
    overrides = dict(args.overrides)
    if args.no_relocalization:
        overrides["relocalization"] = "false"
    return config.with_overrides(overrides)


def _cmd_run(args) -> int:
    config = _load_config(args)
    if args.print_config:
        sys.stdout.write(format_config(config))
        return EXIT_OK
    manifest = load_kitti_sequence(args.dataset, args.sequence)
    log.info("sequence %s: %d frames", manifest.name, len(manifest))
    try:
        report, _ = run_pipeline(manifest, config, args.out)
    except TrackingHalted as exc:
        print(f"tracking halted: {exc}; partial outputs in {args.out}", file=sys.stderr)
        return EXIT_HALT
    sys.stdout.write(report.format_table())
    return EXIT_OK


def _cmd_eval(args) -> int:
    estimate = read_trajectory(args.estimate)
    truth = read_trajectory(args.truth)
    if len(estimate) != len(truth):
        raise DatasetError(f"estimate has {len(estimate)} poses, ground truth {len(truth)}")
    if len(truth) < 2:
        raise DatasetError("need at least two poses")
    report = MetricsReport(frames_processed=len(estimate),
                           relative_errors=kitti_relative_errors(estimate, truth))
    try:
        report.ate_rmse = ate_rmse(estimate, truth)
    except DegenerateAlignment as exc:
        log.warning("ATE not computed: %s", exc)
    if not report.relative_errors:
        log.warning("trajectory shorter than 100 m: no relative errors")
    sys.stdout.write(report.format_table())
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "metrics.txt").write_text(report.format_table())
        (args.out / "metrics.csv").write_text(report.to_csv())
    return EXIT_OK


def _cmd_synth(args) -> int:
    try:
        text = args.spec.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read scene spec: {exc}") from None
    try:
        spec = parse_scene_spec(text)
    except ValueError as exc:
        raise ConfigError(f"scene spec: {exc}") from None
    if args.frames is not None and args.frames < 1:
        raise ConfigError("--frames must be >= 1")
    scene = generate_scene(spec)
    stop = None if args.frames is None else min(args.frames, len(scene.poses))
    out = export_kitti(scene, args.out, stop=stop)
    print(f"wrote {len(list((out / 'image_0').iterdir()))} frames to {out}")
    return EXIT_OK


_COMMANDS = {"run": _cmd_run, "eval": _cmd_eval, "synth": _cmd_synth}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD


if __name__ == "__main__":
    sys.exit(main())
