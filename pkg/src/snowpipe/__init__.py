"""Learning-based snow-depth retrieval from co-registered InSAR stacks.

Assembles a 21-channel per-pixel feature vector from phase/coherence/
amplitude time series plus terrain descriptors, trains a compact MLP
regressor natively, and evaluates in-distribution, transfer, spatial-half
and debiased regimes against a built-in synthetic scene oracle.
"""

from .errors import SnowpipeError
from .evaluate import (
    EvalReport,
    Histogram2D,
    RegimeResult,
    SplitSpec,
    pearson,
    r2,
    residual_histogram,
    rmse,
    run_regime,
    score,
    write_histogram_csv,
    write_histogram_pgm,
    write_report_csv,
)
from .features import (
    CHANNEL_NAMES,
    CHANNEL_NAMES_WITH_LOS,
    FeatureMatrix,
    Normalizer,
    apply_normalizer,
    assemble_features,
    cumulative_los_proxy,
    fit_normalizer,
    write_features_csv,
)
from .gridstack import (
    Acquisition,
    Grid,
    PixelMask,
    SceneStack,
    load_grid,
    load_stack,
    save_grid,
    save_stack,
    valid_mask,
)
from .model import (
    MlpModel,
    MlpParams,
    TrainConfig,
    TrainReport,
    adam_step,
    backward,
    forward,
    init_params,
    load_model,
    loss,
    predict,
    save_model,
    train,
)
from .synth import (
    ObservableParams,
    SnowParams,
    SynthConfig,
    Terrain,
    depth_noise_floor,
    generate_scene,
    generate_snow,
    generate_terrain,
    simulate_observables,
    slope_aspect,
)

__version__ = "0.1.0"
