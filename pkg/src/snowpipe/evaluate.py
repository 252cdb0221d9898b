"""Metrics, evaluation regimes, mean-centering debias and 2D histograms.

Regimes mirror the experiment skeletons used for snow-depth retrieval:
an in-distribution seeded pixel holdout, full-scene transfer to a second
stack, and a spatial half split (train above a row/column boundary, test
below). With debias=True the target mean is subtracted independently from
the training subset and from the test subset before training/scoring, and
all metrics are computed in the centered space; predictions are not
re-offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadRange,
    DisjointnessViolation,
    LengthMismatch,
    ValidationError,
    ZeroVariance,
)
from .features import FeatureMatrix, assemble_features
from .gridstack import SceneStack, valid_mask
from .model import MlpModel, TrainConfig, TrainReport, predict, train
from .rng import HOLDOUT_STREAM, Xoshiro256pp, derive_seed


@dataclass(frozen=True)
class EvalReport:
    """Agreement between predictions and lidar truth on one pixel set."""

    regime_label: str
    n: int
    pearson_r: float
    rmse: float
    r2: float
    mean_bias: float
    debias: bool = False

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("an evaluation needs at least 2 pixels")
        if not -1.0 <= self.pearson_r <= 1.0 or self.rmse < 0.0:
            raise ValidationError("metric out of range")

    def summary(self) -> str:
        return (
            f"{self.regime_label}: n={self.n} pearson={self.pearson_r:.4f} "
            f"rmse={self.rmse:.4f} r2={self.r2:.4f} bias={self.mean_bias:+.4f}"
            + (" (debiased)" if self.debias else "")
        )


@dataclass(frozen=True)
class Histogram2D:
    """Counts of (truth, prediction) pairs on a uniform grid.

    x bins run over lidar truth, y bins over the prediction. Pairs outside
    either range are tallied in n_out_of_range, never silently dropped.
    """

    nbins_x: int
    nbins_y: int
    x_range: tuple[float, float]
    y_range: tuple[float, float]
    counts: np.ndarray  # (nbins_x, nbins_y) int64
    n_out_of_range: int


@dataclass(frozen=True)
class SplitSpec:
    """How to split one scene's valid pixels into train and test sets."""

    kind: str  # "holdout" | "spatial_half"
    fraction: float = 0.2
    seed: int = 42
    axis: str = "row"
    boundary_fraction: float = 0.5
    description: str = ""

    def __post_init__(self):
        if self.kind not in ("holdout", "spatial_half"):
            raise ValidationError(f"unknown split kind {self.kind!r}")
        if self.kind == "holdout" and not 0.0 < self.fraction < 1.0:
            raise ValidationError("holdout fraction must lie in (0, 1)")
        if self.kind == "spatial_half":
            if self.axis not in ("row", "col"):
                raise ValidationError("spatial_half axis must be 'row' or 'col'")
            if not 0.0 < self.boundary_fraction < 1.0:
                raise ValidationError("boundary_fraction must lie in (0, 1)")
        if not self.description:
            desc = (
                f"seeded holdout, test fraction {self.fraction}"
                if self.kind == "holdout"
                else f"train {self.axis} < {self.boundary_fraction} of extent"
            )
            object.__setattr__(self, "description", desc)

    @classmethod
    def holdout(cls, fraction: float, seed: int) -> "SplitSpec":
        return cls(kind="holdout", fraction=fraction, seed=seed)

    @classmethod
    def spatial_half(cls, axis: str, boundary_fraction: float = 0.5) -> "SplitSpec":
        return cls(kind="spatial_half", axis=axis, boundary_fraction=boundary_fraction)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _paired(a, b, min_len: int):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < min_len:
        raise LengthMismatch(f"need at least {min_len} values, got {a.size}")
    return a, b


def pearson(a, b) -> float:
    """Sample Pearson correlation coefficient."""
    a, b = _paired(a, b, 2)
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        raise ZeroVariance("pearson undefined for a constant input")
    r = float(da @ db) / math.sqrt(va * vb)
    return min(1.0, max(-1.0, r))


def rmse(a, b) -> float:
    """Root-mean-square difference."""
    a, b = _paired(a, b, 1)
    d = a - b
    return math.sqrt(float(d @ d) / d.size)


def r2(pred, truth) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot."""
    pred, truth = _paired(pred, truth, 2)
    dt = truth - truth.mean()
    ss_tot = float(dt @ dt)
    if ss_tot == 0.0:
        raise ZeroVariance("r2 undefined for constant truth")
    res = pred - truth
    return 1.0 - float(res @ res) / ss_tot


def score(label: str, pred, truth, *, debias: bool = False) -> EvalReport:
    """All four metrics in one report."""
    pred, truth = _paired(pred, truth, 2)
    return EvalReport(
        regime_label=label,
        n=pred.size,
        pearson_r=pearson(pred, truth),
        rmse=rmse(pred, truth),
        r2=r2(pred, truth),
        mean_bias=float((pred - truth).mean()),
        debias=debias,
    )


def residual_histogram(
    pred,
    truth,
    nbins_x: int = 60,
    nbins_y: int = 60,
    x_range: tuple[float, float] = (0.0, 2.5),
    y_range: tuple[float, float] = (0.0, 2.5),
) -> Histogram2D:
    """Bin (truth, prediction) pairs on a uniform nbins_x x nbins_y grid.

    A value v is in range when lo <= v <= hi; the bin index is
    int((v - lo) / (hi - lo) * nbins), with v == hi folded into the last
    bin. The brute-force oracle in the tests mirrors this formula exactly.
    """
    pred, truth = _paired(pred, truth, 1)
    if nbins_x < 1 or nbins_y < 1:
        raise BadRange("need at least one bin per axis")
    for lo, hi in (x_range, y_range):
        if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
            raise BadRange(f"bad range {lo}:{hi}")
    x_lo, x_hi = x_range
    y_lo, y_hi = y_range
    inside = (truth >= x_lo) & (truth <= x_hi) & (pred >= y_lo) & (pred <= y_hi)
    tx = truth[inside]
    py = pred[inside]
    ix = np.minimum(((tx - x_lo) / (x_hi - x_lo) * nbins_x).astype(np.int64),
                    nbins_x - 1)
    iy = np.minimum(((py - y_lo) / (y_hi - y_lo) * nbins_y).astype(np.int64),
                    nbins_y - 1)
    counts = np.zeros((nbins_x, nbins_y), dtype=np.int64)
    np.add.at(counts, (ix, iy), 1)
    return Histogram2D(
        nbins_x=nbins_x,
        nbins_y=nbins_y,
        x_range=(float(x_lo), float(x_hi)),
        y_range=(float(y_lo), float(y_hi)),
        counts=counts,
        n_out_of_range=int(pred.size - tx.size),
    )


# ---------------------------------------------------------------------------
# Regimes
# ---------------------------------------------------------------------------


@dataclass
class RegimeResult:
    """Everything one regime run produced."""

    regime_label: str
    model: MlpModel
    train_report: TrainReport
    train_eval: EvalReport
    test_eval: EvalReport | None
    train_pred: np.ndarray
    train_targets: np.ndarray
    test_pred: np.ndarray | None
    test_targets: np.ndarray | None

    @property
    def reports(self) -> list[EvalReport]:
        out = [self.train_eval]
        if self.test_eval is not None:
            out.append(self.test_eval)
        return out


def split_rows(stack: SceneStack, mask_indices: np.ndarray, spec: SplitSpec):
    """Row positions (into mask order) of the train and test pixel sets."""
    n = mask_indices.size
    if spec.kind == "holdout":
        gen = Xoshiro256pp(derive_seed(spec.seed, HOLDOUT_STREAM))
        perm = gen.permutation(n)
        n_test = int(round(n * spec.fraction))
        if not 0 < n_test < n:
            raise ValidationError(f"holdout of {n} pixels leaves an empty side")
        test_rows, train_rows = perm[:n_test], perm[n_test:]
        if np.intersect1d(train_rows, test_rows).size:
            raise DisjointnessViolation("holdout train/test sets intersect")
        return train_rows, test_rows
    if spec.axis == "row":
        coord = mask_indices // stack.width
        boundary = int(stack.height * spec.boundary_fraction)
    else:
        coord = mask_indices % stack.width
        boundary = int(stack.width * spec.boundary_fraction)
    train_rows = np.flatnonzero(coord < boundary)
    test_rows = np.flatnonzero(coord >= boundary)
    if train_rows.size == 0 or test_rows.size == 0:
        raise ValidationError("spatial_half split leaves an empty side")
    return train_rows, test_rows


def run_regime(
    train_stack: SceneStack,
    config: TrainConfig,
    *,
    split: SplitSpec | None = None,
    test_stack: SceneStack | None = None,
    debias: bool = False,
    with_los_channel: bool = False,
) -> RegimeResult:
    """Train and score one evaluation regime.

    Exactly one of `split` (single-scene holdout / spatial half) and
    `test_stack` (full-scene transfer) may be given; with neither, the
    model trains on all valid pixels and only in-sample metrics are
    reported.
    """
    if split is not None and test_stack is not None:
        raise ValueError("pass either split= or test_stack=, not both")

    fm = assemble_features(train_stack, valid_mask(train_stack),
                           with_los_channel=with_los_channel)
    if split is not None:
        label = "holdout" if split.kind == "holdout" else f"spatial_half_{split.axis}"
        train_rows, test_rows = split_rows(train_stack, fm.pixel_indices, split)
        fm_train = fm.subset(train_rows)
        fm_test = fm.subset(test_rows)
    elif test_stack is not None:
        label = "transfer"
        fm_train = fm
        fm_test = assemble_features(test_stack, valid_mask(test_stack),
                                    with_los_channel=with_los_channel)
    else:
        label = "full"
        fm_train = fm
        fm_test = None

    if debias:
        fm_train, _ = fm_train.center_targets()
        if fm_test is not None:
            fm_test, _ = fm_test.center_targets()

    model, report = train(config, fm_train)
    train_pred = predict(model, fm_train)
    train_eval = score(f"{label}/train", train_pred, fm_train.targets, debias=debias)
    test_pred = test_eval = test_targets = None
    if fm_test is not None:
        test_pred = predict(model, fm_test)
        test_eval = score(f"{label}/test", test_pred, fm_test.targets, debias=debias)
        test_targets = fm_test.targets
    return RegimeResult(
        regime_label=label,
        model=model,
        train_report=report,
        train_eval=train_eval,
        test_eval=test_eval,
        train_pred=train_pred,
        train_targets=fm_train.targets,
        test_pred=test_pred,
        test_targets=test_targets,
    )


# ---------------------------------------------------------------------------
# Report / histogram files
# ---------------------------------------------------------------------------

REPORT_HEADER = "regime_label,n,pearson,rmse,r2,mean_bias,debias"


def write_report_csv(reports: list[EvalReport], path) -> None:
    """One row per regime report."""
    with open(path, "w") as f:
        f.write(REPORT_HEADER + "\n")
        for r in reports:
            f.write(
                f"{r.regime_label},{r.n},{r.pearson_r!r},{r.rmse!r},"
                f"{r.r2!r},{r.mean_bias!r},{int(r.debias)}\n"
            )


def write_histogram_csv(hist: Histogram2D, path) -> None:
    """Metadata header lines, then one row per bin."""
    with open(path, "w") as f:
        f.write(
            f"# nbins_x={hist.nbins_x} nbins_y={hist.nbins_y}"
            f" x_range={hist.x_range[0]!r}:{hist.x_range[1]!r}"
            f" y_range={hist.y_range[0]!r}:{hist.y_range[1]!r}"
            f" n_out_of_range={hist.n_out_of_range}\n"
        )
        f.write("bin_x_index,bin_y_index,count\n")
        for i in range(hist.nbins_x):
            for j in range(hist.nbins_y):
                f.write(f"{i},{j},{hist.counts[i, j]}\n")


def write_histogram_pgm(hist: Histogram2D, path) -> None:
    """8-bit binary PGM, max-count normalized; y grows upward from the
    bottom image row, x rightward, so it reads like a scatter plot."""
    peak = int(hist.counts.max())
    img = np.zeros((hist.nbins_y, hist.nbins_x), dtype=np.uint8)
    if peak > 0:
        scaled = np.round(hist.counts.T * (255.0 / peak)).astype(np.uint8)
        img = scaled[::-1, :]
    header = f"P5\n{hist.nbins_x} {hist.nbins_y}\n255\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(img.tobytes())
