"""Per-pixel feature assembly with a frozen 21-channel layout.

The channel ordering below is a format contract shared by feature dumps
and model files; any change is a format break. Features are computed in
float64 from the float32 grids, and every per-pixel reduction over the 12
acquisitions runs in fixed acquisition order (np.add.reduce along the
acquisition axis), so the result is bit-identical to a straight per-pixel
loop. Coherence standard deviation is the population statistic (divide by
12). An optional cumulative line-of-sight channel (the per-pixel sum of
unwrapped phase over acquisitions) can be appended as channel 21; it is
never part of the default layout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import MaskNotValid, TooFewRows
from .gridstack import N_ACQUISITIONS, PixelMask, SceneStack

CHANNEL_NAMES: tuple[str, ...] = (
    ("phase_mean",)
    + tuple(f"amplitude_t{k:02d}" for k in range(N_ACQUISITIONS))
    + (
        "amplitude_mean",
        "coherence_mean",
        "coherence_std",
        "incidence",
        "slope",
        "aspect",
        "elevation",
        "veg_height",
    )
)
N_CHANNELS = len(CHANNEL_NAMES)  # 21
LOS_CHANNEL_NAME = "cum_los"
CHANNEL_NAMES_WITH_LOS: tuple[str, ...] = CHANNEL_NAMES + (LOS_CHANNEL_NAME,)


@dataclass(frozen=True)
class FeatureMatrix:
    """N valid pixels x C channels, float64, with pixel provenance."""

    data: np.ndarray
    targets: np.ndarray
    pixel_indices: np.ndarray
    channel_names: tuple[str, ...]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        idx = np.asarray(self.pixel_indices, dtype=np.int64)
        if data.ndim != 2 or data.shape[1] != len(self.channel_names):
            raise MaskNotValid(
                f"feature data must be N x {len(self.channel_names)}, got {data.shape}"
            )
        if targets.shape != (data.shape[0],) or idx.shape != (data.shape[0],):
            raise MaskNotValid("rows, targets and pixel_indices must align")
        if not np.isfinite(data).all() or not np.isfinite(targets).all():
            raise MaskNotValid("feature matrix must not contain NaN/inf")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "pixel_indices", idx)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    def subset(self, rows: np.ndarray) -> "FeatureMatrix":
        """Row subset in the given order (provenance follows)."""
        rows = np.asarray(rows, dtype=np.int64)
        return FeatureMatrix(
            self.data[rows], self.targets[rows], self.pixel_indices[rows],
            self.channel_names,
        )

    def center_targets(self) -> tuple["FeatureMatrix", float]:
        """Subtract this matrix's own target mean; returns (matrix, mean)."""
        mean = float(self.targets.mean())
        return replace(self, targets=self.targets - mean), mean


@dataclass(frozen=True)
class Normalizer:
    """Per-channel standardization statistics, fitted on training rows only."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise MaskNotValid("normalizer mean/std must be matching vectors")
        if (std <= 0).any():
            raise MaskNotValid("normalizer std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def apply(self, data: np.ndarray) -> np.ndarray:
        data = np.asarray(data, dtype=np.float64)
        return (data - self.mean) / self.std


def _mask_indices(stack: SceneStack, mask) -> np.ndarray:
    idx = mask.indices if isinstance(mask, PixelMask) else np.asarray(mask, np.int64)
    n_pixels = stack.width * stack.height
    if idx.size and (idx.min() < 0 or idx.max() >= n_pixels):
        raise MaskNotValid("mask index out of bounds for this stack")
    return idx


def _gather(stack: SceneStack, idx: np.ndarray):
    """(12, N) float64 views of phase/coherence/amplitude plus ancillary rows."""
    def pick(grid):
        return grid.values.ravel()[idx].astype(np.float64)

    phase = np.stack([pick(a.phase) for a in stack.acquisitions])
    coherence = np.stack([pick(a.coherence) for a in stack.acquisitions])
    amplitude = np.stack([pick(a.amplitude) for a in stack.acquisitions])
    ancillary = np.stack(
        [pick(stack.incidence), pick(stack.slope), pick(stack.aspect),
         pick(stack.elevation), pick(stack.veg_height)]
    )
    target = pick(stack.target)
    return phase, coherence, amplitude, ancillary, target


def assemble_features(
    stack: SceneStack, mask, *, with_los_channel: bool = False
) -> FeatureMatrix:
    """Build the feature matrix for the masked pixels.

    Channel layout: [0] mean unwrapped phase over the 12 acquisitions;
    [1..12] the 12 amplitudes in acquisition order; [13] amplitude mean;
    [14]/[15] coherence mean / population std; [16..20] incidence, slope,
    aspect, elevation, vegetation height; optional [21] cumulative LOS.
    """
    idx = _mask_indices(stack, mask)
    phase, coherence, amplitude, ancillary, target = _gather(stack, idx)
    if not (
        np.isfinite(phase).all()
        and np.isfinite(coherence).all()
        and np.isfinite(amplitude).all()
        and np.isfinite(ancillary).all()
        and np.isfinite(target).all()
    ):
        raise MaskNotValid("mask references a nodata (NaN) pixel")

    n = idx.size
    n_channels = N_CHANNELS + (1 if with_los_channel else 0)
    out = np.empty((n, n_channels), dtype=np.float64)
    # reductions along axis 0 accumulate acquisition-by-acquisition, matching
    # a sequential per-pixel loop bit for bit
    phase_sum = np.add.reduce(phase, axis=0)
    out[:, 0] = phase_sum / float(N_ACQUISITIONS)
    out[:, 1 : 1 + N_ACQUISITIONS] = amplitude.T
    out[:, 13] = np.add.reduce(amplitude, axis=0) / float(N_ACQUISITIONS)
    coh_mean = np.add.reduce(coherence, axis=0) / float(N_ACQUISITIONS)
    out[:, 14] = coh_mean
    dev = coherence - coh_mean
    out[:, 15] = np.sqrt(np.add.reduce(dev * dev, axis=0) / float(N_ACQUISITIONS))
    out[:, 16:21] = ancillary.T
    names = CHANNEL_NAMES
    if with_los_channel:
        out[:, 21] = phase_sum
        names = CHANNEL_NAMES_WITH_LOS
    return FeatureMatrix(out, target, idx, names)


def cumulative_los_proxy(stack: SceneStack, mask) -> np.ndarray:
    """Per-pixel sum of unwrapped phase across the 12 acquisitions."""
    idx = _mask_indices(stack, mask)
    phase = np.stack(
        [a.phase.values.ravel()[idx].astype(np.float64) for a in stack.acquisitions]
    )
    if not np.isfinite(phase).all():
        raise MaskNotValid("mask references a nodata (NaN) pixel")
    return np.add.reduce(phase, axis=0)


def fit_normalizer(train: FeatureMatrix) -> Normalizer:
    """Per-channel mean/std over training rows; zero-variance channels get
    mean = the constant value and std = 1 so they normalize to exactly 0."""
    if train.rows < 2:
        raise TooFewRows(f"normalizer needs >= 2 rows, got {train.rows}")
    c = train.n_channels
    mean = np.empty(c)
    std = np.empty(c)
    for j in range(c):
        col = train.data[:, j]
        lo, hi = col.min(), col.max()
        if lo == hi:
            mean[j] = lo
            std[j] = 1.0
            continue
        mean[j] = col.mean()
        s = col.std()
        std[j] = s if s > 0.0 else 1.0
    return Normalizer(mean, std)


def apply_normalizer(norm: Normalizer, matrix: FeatureMatrix) -> FeatureMatrix:
    """Channel-wise (x - mean) / std on a copy of the matrix."""
    if len(norm.mean) != matrix.n_channels:
        raise MaskNotValid(
            f"normalizer has {len(norm.mean)} channels, matrix has {matrix.n_channels}"
        )
    return replace(matrix, data=norm.apply(matrix.data))


def write_features_csv(matrix: FeatureMatrix, path) -> None:
    """Dump one row per pixel: the channels plus a final `target` column."""
    header = ",".join(matrix.channel_names + ("target",))
    with open(path, "w") as f:
        f.write(header + "\n")
        for row, y in zip(matrix.data, matrix.targets):
            f.write(",".join(repr(v) for v in row.tolist()))
            f.write("," + repr(float(y)) + "\n")
