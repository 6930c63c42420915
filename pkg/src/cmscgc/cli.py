"""Command-line entry point.

Subcommands::

    pipeline --config cfg.json --out DIR
    ablation --config cfg.json --case 1..5 [--out DIR]
    sweep    --config cfg.json --param lambda|k|w --values 0.1,1,10 [--out FILE]
    synth    --spec spec.json --out DIR
    eval     --truth labels.u16 --pred pred.u16

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 numeric failure (divergence, undefined quantity).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .errors import CmscgcError, ConfigError, FormatError, NumericError, ParameterError
from .hsi_store import save_cube, synth_multiview
from .metrics import evaluate
from .pipeline import (SYNTH_KEYS, PipelineConfig, metrics_json, run_ablation, run_pipeline,
                       run_sweep)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _load_config(path, out=None):
    cfg = PipelineConfig.from_json(path)
    if out is not None:
        cfg = cfg.replace(output_dir=out)
    return cfg


def cmd_pipeline(args):
    _, report = run_pipeline(_load_config(args.config, args.out))
    sys.stdout.write(metrics_json(report))


def cmd_ablation(args):
    report = run_ablation(_load_config(args.config, args.out), args.case)
    sys.stdout.write(json.dumps({"case": args.case, **report.to_dict()}, indent=2) + "\n")


def cmd_sweep(args):
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    try:
        csv = run_sweep(_load_config(args.config), args.param, values)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CmscgcError):
            raise
        raise ConfigError(f"bad sweep value: {exc}") from exc
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv)
    sys.stdout.write(csv)


def cmd_synth(args):
    try:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read synth spec {args.spec}: {exc}") from exc
    if not isinstance(spec, dict) or sorted(spec) != sorted(SYNTH_KEYS):
        raise ConfigError(f"synth spec needs exactly the keys {list(SYNTH_KEYS)}")
    _, cube = synth_multiview(**spec)
    save_cube(cube, os.path.join(args.out, "cube.json"))
    sys.stdout.write(os.path.join(args.out, "cube.json") + "\n")


def read_labels(path):
    """Raw little-endian uint16 label vector."""
    try:
        payload = np.fromfile(path, dtype=np.uint8)
    except FileNotFoundError as exc:
        raise FormatError(f"label file not found: {path}") from exc
    if payload.size % 2:
        raise FormatError(f"{path}: odd byte count {payload.size} for uint16 labels")
    return payload.view("<u2").astype(np.int64)


def cmd_eval(args):
    truth = read_labels(args.truth)
    pred = read_labels(args.pred)
    if truth.size != pred.size:
        raise FormatError(f"truth has {truth.size} labels, prediction has {pred.size}")
    keep = truth > 0
    sys.stdout.write(metrics_json(evaluate(truth[keep], pred[keep])))


def build_parser():
    parser = argparse.ArgumentParser(prog="cmscgc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablation", help="run one ablation case")
    p.add_argument("--config", required=True)
    p.add_argument("--case", required=True, type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("sweep", help="one run per parameter value, CSV report")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic cube in the container format")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score a predicted label raw file against the truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def exit_code(exc: CmscgcError) -> int:
    if isinstance(exc, (ConfigError, ParameterError)):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return EXIT_DATA


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CmscgcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK
