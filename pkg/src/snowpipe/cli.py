"""`snowpipe` command line: synth, features, train, predict, evaluate,
histogram.

Exit codes: 0 success, 1 usage error (bad/conflicting flags), 2 data or
validation error. All randomness is funneled through explicit --seed flags
with documented defaults, so every command is idempotent: identical inputs
and seeds produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluate as ev
from .errors import ShapeMismatch, SnowpipeError, UsageConflict
from .features import (
    CHANNEL_NAMES,
    CHANNEL_NAMES_WITH_LOS,
    assemble_features,
    write_features_csv,
)
from .gridstack import Grid, load_grid, load_stack, save_grid, save_stack, valid_mask
from .model import TrainConfig, load_model, predict, save_model
from .synth import SynthConfig, generate_scene


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise UsageConflict(f"--size must look like 96x96, got {text!r}") from exc


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise UsageConflict(f"--range must look like 0:2.5, got {text!r}") from exc


def _parse_spatial_half(text: str) -> tuple[str, float]:
    try:
        axis, frac = text.split(":")
        frac = float(frac)
    except ValueError as exc:
        raise UsageConflict(f"--spatial-half must look like row:0.5, got {text!r}") from exc
    if axis not in ("row", "col"):
        raise UsageConflict("--spatial-half axis must be 'row' or 'col'")
    return axis, frac


def cmd_synth(args) -> int:
    w, h = _parse_size(args.size)
    cfg = SynthConfig(seed=args.seed, width=w, height=h, terrain_seed=args.terrain_seed)
    stack = generate_scene(cfg)
    manifest = save_stack(stack, args.out)
    print(f"synth: wrote {w}x{h} scene (seed {args.seed}) to {manifest}")
    return 0


def cmd_features(args) -> int:
    stack = load_stack(args.stack)
    fm = assemble_features(stack, valid_mask(stack),
                           with_los_channel=args.with_los_channel)
    write_features_csv(fm, args.out)
    print(f"features: wrote {fm.rows} rows x {fm.n_channels} channels to {args.out}")
    return 0


def cmd_train(args) -> int:
    stack = load_stack(args.stack)
    config = TrainConfig(seed=args.seed)
    if args.holdout is not None:
        split = ev.SplitSpec.holdout(args.holdout, seed=config.seed)
    elif args.spatial_half is not None:
        axis, frac = _parse_spatial_half(args.spatial_half)
        split = ev.SplitSpec.spatial_half(axis, frac)
    else:
        split = None
    result = ev.run_regime(
        stack, config, split=split, debias=args.debias,
        with_los_channel=args.with_los_channel,
    )
    save_model(result.model, args.out)
    report_path = args.report or str(Path(args.out).parent / "report.csv")
    ev.write_report_csv(result.reports, report_path)
    tr = result.train_report
    print(f"train: {tr.epochs_run} epochs ({tr.stop_reason}), model -> {args.out}")
    for r in result.reports:
        print(r.summary())
    return 0


def _features_for_model(model, stack):
    layout = model.channel_names
    if layout == CHANNEL_NAMES:
        with_los = False
    elif layout == CHANNEL_NAMES_WITH_LOS:
        with_los = True
    else:
        raise ShapeMismatch(
            "model channel_layout does not match any layout this build produces"
        )
    return assemble_features(stack, valid_mask(stack), with_los_channel=with_los)


def cmd_predict(args) -> int:
    model = load_model(args.model)
    stack = load_stack(args.stack)
    fm = _features_for_model(model, stack)
    pred = predict(model, fm)
    out = np.full(stack.height * stack.width, np.nan, dtype=np.float32)
    out[fm.pixel_indices] = pred.astype(np.float32)
    save_grid(Grid(out.reshape(stack.height, stack.width)), args.out)
    print(f"predict: wrote depth grid for {fm.rows} valid pixels to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    stack = load_stack(args.stack)
    fm = _features_for_model(model, stack)
    targets = fm.targets
    if args.debias:
        targets = targets - targets.mean()
    pred = predict(model, fm)
    report = ev.score("transfer/test", pred, targets, debias=args.debias)
    ev.write_report_csv([report], args.report)
    print(report.summary())
    if args.hist:
        lo, hi = _parse_range(args.range)
        hist = ev.residual_histogram(
            pred, targets, nbins_x=args.bins, nbins_y=args.bins,
            x_range=(lo, hi), y_range=(lo, hi),
        )
        ev.write_histogram_csv(hist, args.hist)
        if args.pgm:
            ev.write_histogram_pgm(hist, args.pgm)
        print(f"evaluate: histogram -> {args.hist}"
              + (f" and {args.pgm}" if args.pgm else ""))
    return 0


def cmd_histogram(args) -> int:
    stack = load_stack(args.stack)
    pred_grid = load_grid(args.pred, stack.width, stack.height)
    truth_grid = (
        load_grid(args.truth, stack.width, stack.height)
        if args.truth
        else stack.target
    )
    p = pred_grid.values.ravel().astype(np.float64)
    t = truth_grid.values.ravel().astype(np.float64)
    ok = np.isfinite(p) & np.isfinite(t)
    lo, hi = _parse_range(args.range)
    hist = ev.residual_histogram(
        p[ok], t[ok], nbins_x=args.bins, nbins_y=args.bins,
        x_range=(lo, hi), y_range=(lo, hi),
    )
    ev.write_histogram_csv(hist, args.out)
    if args.pgm:
        ev.write_histogram_pgm(hist, args.pgm)
    print(
        f"histogram: {int(hist.counts.sum())} pairs binned, "
        f"{hist.n_out_of_range} out of range -> {args.out}"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="snowpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic scene stack")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--terrain-seed", type=int, default=None,
                   help="share terrain across season seeds")
    p.add_argument("--size", default="128x128", help="WIDTHxHEIGHT")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="dump the per-pixel feature matrix as CSV")
    p.add_argument("--stack", required=True, help="stack.json manifest")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--with-los-channel", action="store_true",
                   help="append the cumulative line-of-sight channel")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train the regressor on a scene")
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True, help="model.json path")
    p.add_argument("--seed", type=int, default=TrainConfig().seed)
    p.add_argument("--debias", action="store_true",
                   help="train/score on independently mean-centered targets")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--holdout", type=float, default=None,
                       help="seeded pixel holdout test fraction, e.g. 0.2")
    group.add_argument("--spatial-half", default=None,
                       help="axis:boundary fraction, e.g. row:0.5")
    p.add_argument("--with-los-channel", action="store_true")
    p.add_argument("--report", default=None,
                   help="report CSV path (default: report.csv beside the model)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write a predicted depth grid")
    p.add_argument("--model", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True, help="output .f32 grid")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a scene")
    p.add_argument("--model", required=True)
    p.add_argument("--stack", required=True)
    p.add_argument("--debias", action="store_true",
                   help="score against mean-centered test targets")
    p.add_argument("--report", default="report.csv")
    p.add_argument("--hist", default=None, help="also write a 2D histogram CSV")
    p.add_argument("--pgm", default=None, help="grayscale PGM of the histogram")
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--range", default="0:2.5", help="bin range, LO:HI")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("histogram", help="bin a prediction grid against truth")
    p.add_argument("--stack", required=True,
                   help="manifest providing geometry and default truth")
    p.add_argument("--pred", required=True, help="prediction .f32 grid")
    p.add_argument("--truth", default=None, help="override truth grid")
    p.add_argument("--out", required=True, help="histogram CSV")
    p.add_argument("--pgm", default=None)
    p.add_argument("--bins", type=int, default=60)
    p.add_argument("--range", default="0:2.5")
    p.set_defaults(func=cmd_histogram)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageConflict as exc:
        print(f"snowpipe: error: {exc}", file=sys.stderr)
        return 1
    except SnowpipeError as exc:
        print(f"snowpipe: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
