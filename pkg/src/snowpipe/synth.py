"""Deterministic synthetic scene generator.

Builds terrain (midpoint-displacement fractal elevation, Horn slope and
aspect, incidence, patchy vegetation), a ground-truth snow-depth field,
and physically motivated radar observables, so the full pipeline can be
verified at desk scale. The simulator deliberately encodes an invertible
phase <-> depth relationship plus nuisance channels; it measures the
pipeline, not geophysical fidelity.

Observable model, per acquisition k (fixed seasonal accumulation weights
w_k >= 0, sum 1, splitting depth into increments dd_k = w_k * depth):

  phase_k     = phase_per_meter * dd_k / cos(incidence) + N(0, sigma_phi)
  coherence_k = clip(base - veg_coeff * veg - snow_coeff * |dd_k|, 0, 1)
  amplitude_k = (0.3 cos(incidence) + 0.02 veg) * speckle,
                speckle = mean of `speckle_looks` unit exponentials

Every random field draws from its own fixed substream of the config seed
(terrain fields use terrain_seed when given, so two seasons can share one
terrain), which makes scene bytes a pure function of the config. Noise is
always drawn and then scaled, so a zero sigma changes values, never the
stream layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import TooSmall, ValidationError
from .gridstack import Acquisition, Grid, SceneStack
from .rng import (
    PHASE_STREAM,
    SNOW_STREAM,
    SPECKLE_STREAM,
    TERRAIN_STREAM,
    VEG_STREAM,
    Xoshiro256pp,
    derive_seed,
)

N_ACQUISITIONS = 12
MIN_SCENE_SIZE = 9

# terrain shaping (not exposed in the config on purpose)
ELEVATION_BASE_M = 1500.0
ELEVATION_RELIEF_M = 600.0
FRACTAL_DECAY = 0.55
INCIDENCE_NOMINAL_DEG = 39.0
INCIDENCE_SLOPE_COEFF = 0.4
VEG_SMOOTH_SIGMA_PX = 3.0
VEG_SCALE_M = 4.0
BACKSCATTER_INCIDENCE_COEFF = 0.3
BACKSCATTER_VEG_COEFF = 0.02

# seasonal accumulation profile: sin ramp over the season, normalized to 1
ACCUMULATION_WEIGHTS = np.sin(
    math.pi * (np.arange(N_ACQUISITIONS) + 0.5) / N_ACQUISITIONS
)
ACCUMULATION_WEIGHTS = ACCUMULATION_WEIGHTS / ACCUMULATION_WEIGHTS.sum()


@dataclass(frozen=True)
class SnowParams:
    base_depth: float = 0.8          # m
    elevation_lapse: float = 0.0025  # m depth per m elevation
    aspect_amplitude: float = 0.15   # m, scales cos(aspect)
    noise_sigma: float = 0.10        # m, correlated field
    correlation_length: float = 6.0  # px


@dataclass(frozen=True)
class ObservableParams:
    phase_per_meter: float = 6.0       # rad per m of snow accumulation
    phase_noise_sigma: float = 0.25    # rad
    coherence_base: float = 0.8
    coherence_veg_coeff: float = 0.02  # per m of vegetation height
    coherence_snow_coeff: float = 0.25 # per m of per-acquisition accumulation
    speckle_looks: int = 4


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 42
    width: int = 128
    height: int = 128
    pixel_spacing_m: float = 80.0
    snow: SnowParams = field(default_factory=SnowParams)
    observables: ObservableParams = field(default_factory=ObservableParams)
    n_acquisitions: int = N_ACQUISITIONS
    terrain_seed: int | None = None  # share terrain across season seeds

    def __post_init__(self):
        if self.n_acquisitions != N_ACQUISITIONS:
            raise ValidationError(f"n_acquisitions is fixed at {N_ACQUISITIONS}")
        if self.snow.noise_sigma < 0 or self.observables.phase_noise_sigma < 0:
            raise ValidationError("noise sigmas must be >= 0")
        if not 0.0 <= self.observables.coherence_base <= 1.0:
            raise ValidationError("coherence_base must lie in [0, 1]")
        if self.observables.coherence_veg_coeff < 0 or \
                self.observables.coherence_snow_coeff < 0:
            raise ValidationError("coherence coefficients must be >= 0")
        if self.observables.speckle_looks < 1:
            raise ValidationError("speckle_looks must be >= 1")
        if self.pixel_spacing_m <= 0:
            raise ValidationError("pixel_spacing_m must be positive")

    @property
    def effective_terrain_seed(self) -> int:
        return self.seed if self.terrain_seed is None else self.terrain_seed


@dataclass(frozen=True)
class Terrain:
    elevation: Grid
    slope: Grid
    aspect: Grid
    incidence: Grid
    veg_height: Grid


def _fractal_surface(n: int, gen: Xoshiro256pp, decay: float) -> np.ndarray:
    """Midpoint-displacement (diamond-square) surface on an n x n lattice,
    n = 2^k + 1. Points are visited in a fixed row-major order so the
    surface is a pure function of the generator state."""
    z = np.zeros((n, n))
    amp = 1.0
    for r, c in ((0, 0), (0, n - 1), (n - 1, 0), (n - 1, n - 1)):
        z[r, c] = (2.0 * gen.random() - 1.0) * amp
    step = n - 1
    while step > 1:
        half = step // 2
        amp *= decay
        for r in range(half, n, step):
            for c in range(half, n, step):
                avg = (
                    z[r - half, c - half]
                    + z[r - half, c + half]
                    + z[r + half, c - half]
                    + z[r + half, c + half]
                ) / 4.0
                z[r, c] = avg + (2.0 * gen.random() - 1.0) * amp
        for r in range(0, n, half):
            offset = half if (r % step) == 0 else 0
            for c in range(offset, n, step):
                total = 0.0
                cnt = 0
                if r >= half:
                    total += z[r - half, c]
                    cnt += 1
                if r + half < n:
                    total += z[r + half, c]
                    cnt += 1
                if c >= half:
                    total += z[r, c - half]
                    cnt += 1
                if c + half < n:
                    total += z[r, c + half]
                    cnt += 1
                z[r, c] = total / cnt + (2.0 * gen.random() - 1.0) * amp
        step = half
    return z


def slope_aspect(elevation: np.ndarray, spacing_m: float):
    """Horn 3x3 slope/aspect.

    With z the edge-padded elevation and the window
        a b c
        d e f
        g h i
    (rows southward, columns eastward):
        dz/dx = ((c + 2f + i) - (a + 2d + g)) / (8 s)   eastward derivative
        dz/dy = ((g + 2h + i) - (a + 2b + c)) / (8 s)   southward derivative
    Slope is atan(hypot(dz/dx, dz/dy)) in degrees. Aspect is the compass
    direction of steepest descent, degrees clockwise from north in
    [0, 360); flat cells get 0 by convention.
    """
    z = np.pad(np.asarray(elevation, dtype=np.float64), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    s8 = 8.0 * spacing_m
    dzdx = ((c + 2.0 * f + i) - (a + 2.0 * d + g)) / s8
    dzdy = ((g + 2.0 * h + i) - (a + 2.0 * b + c)) / s8
    slope = np.degrees(np.arctan(np.hypot(dzdx, dzdy)))
    aspect = np.degrees(np.arctan2(-dzdx, dzdy)) % 360.0
    aspect[aspect >= 360.0] = 0.0
    aspect[slope == 0.0] = 0.0
    return slope, aspect


def generate_terrain(cfg: SynthConfig) -> Terrain:
    """Elevation, slope, aspect, incidence and vegetation height grids."""
    h, w = cfg.height, cfg.width
    if h < MIN_SCENE_SIZE or w < MIN_SCENE_SIZE:
        raise TooSmall(f"scene must be at least {MIN_SCENE_SIZE} px per side")
    tseed = cfg.effective_terrain_seed

    n = 1
    while n + 1 < max(h, w):
        n *= 2
    gen = Xoshiro256pp(derive_seed(tseed, TERRAIN_STREAM))
    surface = _fractal_surface(n + 1, gen, FRACTAL_DECAY)[:h, :w]
    lo, hi = surface.min(), surface.max()
    norm = (surface - lo) / (hi - lo) if hi > lo else np.zeros_like(surface)
    elevation = ELEVATION_BASE_M + ELEVATION_RELIEF_M * norm

    slope, aspect = slope_aspect(elevation, cfg.pixel_spacing_m)
    incidence = np.clip(
        INCIDENCE_NOMINAL_DEG
        + INCIDENCE_SLOPE_COEFF * slope * np.cos(np.radians(aspect)),
        15.0,
        75.0,
    )

    veg_gen = Xoshiro256pp(derive_seed(tseed, VEG_STREAM))
    white = veg_gen.normals(h * w).reshape(h, w)
    smooth = gaussian_filter(white, VEG_SMOOTH_SIGMA_PX)
    std = smooth.std()
    if std > 0:
        smooth = smooth / std
    veg = np.maximum(smooth, 0.0) * VEG_SCALE_M

    return Terrain(
        elevation=Grid(elevation),
        slope=Grid(slope),
        aspect=Grid(aspect),
        incidence=Grid(incidence),
        veg_height=Grid(veg),
    )


def generate_snow(cfg: SynthConfig, terrain: Terrain) -> Grid:
    """Truth snow depth: base + elevation lapse + aspect term + correlated
    noise, floored at 0."""
    h, w = cfg.height, cfg.width
    p = cfg.snow
    gen = Xoshiro256pp(derive_seed(cfg.seed, SNOW_STREAM))
    white = gen.normals(h * w).reshape(h, w)
    smooth = gaussian_filter(white, p.correlation_length)
    std = smooth.std()
    if std > 0:
        smooth = smooth / std
    noise = smooth * p.noise_sigma

    elev = terrain.elevation.values.astype(np.float64)
    aspect = terrain.aspect.values.astype(np.float64)
    depth = np.maximum(
        0.0,
        p.base_depth
        + p.elevation_lapse * (elev - elev.min())
        + p.aspect_amplitude * np.cos(np.radians(aspect))
        + noise,
    )
    return Grid(depth)


def simulate_observables(cfg: SynthConfig, terrain: Terrain, snow: Grid) -> SceneStack:
    """Phase/coherence/amplitude stacks for the given terrain and snow."""
    h, w = cfg.height, cfg.width
    o = cfg.observables
    depth = snow.values.astype(np.float64)
    veg = terrain.veg_height.values.astype(np.float64)
    inc_rad = np.radians(terrain.incidence.values.astype(np.float64))
    cos_inc = np.cos(inc_rad)

    phase_gen = Xoshiro256pp(derive_seed(cfg.seed, PHASE_STREAM))
    phase_noise = phase_gen.normals(N_ACQUISITIONS * h * w).reshape(
        N_ACQUISITIONS, h, w
    ) * o.phase_noise_sigma

    looks = o.speckle_looks
    speckle_gen = Xoshiro256pp(derive_seed(cfg.seed, SPECKLE_STREAM))
    exp = speckle_gen.exponentials(N_ACQUISITIONS * looks * h * w).reshape(
        N_ACQUISITIONS, looks, h, w
    )
    speckle = exp.sum(axis=1) / looks

    backscatter = BACKSCATTER_INCIDENCE_COEFF * cos_inc + BACKSCATTER_VEG_COEFF * veg

    acquisitions = []
    for k in range(N_ACQUISITIONS):
        dd = ACCUMULATION_WEIGHTS[k] * depth
        phase = o.phase_per_meter * dd / cos_inc + phase_noise[k]
        coherence = np.clip(
            o.coherence_base
            - o.coherence_veg_coeff * veg
            - o.coherence_snow_coeff * np.abs(dd),
            0.0,
            1.0,
        )
        amplitude = backscatter * speckle[k]
        acquisitions.append(
            Acquisition(
                index=k,
                date_label=f"acq{k:02d}",
                phase=Grid(phase),
                coherence=Grid(coherence),
                amplitude=Grid(amplitude),
            )
        )
    return SceneStack(
        acquisitions=tuple(acquisitions),
        incidence=terrain.incidence,
        slope=terrain.slope,
        aspect=terrain.aspect,
        elevation=terrain.elevation,
        veg_height=terrain.veg_height,
        target=snow,
        pixel_spacing_m=cfg.pixel_spacing_m,
    )


def generate_scene(cfg: SynthConfig) -> SceneStack:
    """Terrain + snow + observables in one call."""
    terrain = generate_terrain(cfg)
    snow = generate_snow(cfg, terrain)
    return simulate_observables(cfg, terrain, snow)


def depth_noise_floor(cfg: SynthConfig) -> float:
    """Depth-equivalent standard deviation of the phase noise that survives
    in the mean-phase channel, at the nominal incidence.

    The mean of the 12 phases carries noise sigma_phi/sqrt(12); inverting
    the accumulation model multiplies by 12 cos(incidence)/phase_per_meter.
    Coherence and amplitude channels may let a model beat this floor; it
    is a one-sided reference for acceptance bounds.
    """
    o = cfg.observables
    return (
        math.sqrt(N_ACQUISITIONS)
        * o.phase_noise_sigma
        * math.cos(math.radians(INCIDENCE_NOMINAL_DEG))
        / o.phase_per_meter
    )
