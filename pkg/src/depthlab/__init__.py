"""Desk-scale numerics for self-supervised depth estimation in dynamic scenes.

Building blocks: differentiable view synthesis, minimum-reprojection
photometric loss, quantile-based dynamic-object masking, plane-sweep cost
volumes with auto-masking, spectral-entropy uncertainty fusion, a synthetic
scene generator with exact ground truth, and a direct depth optimizer that
makes the masking effects measurable.
"""

from .core import (
    BinaryMask,
    DepthMap,
    ImageGrid,
    PFMError,
    block_max_pool,
    elementwise,
    image_from_mask,
    load_pfm,
    read_pfm,
    save_pfm,
    save_pgm,
    write_pfm,
)
from .costvolume import (
    CostVolume,
    DepthHypotheses,
    FeatureMap,
    PlaneSweepResult,
    ProbabilityVolume,
    apply_cvam,
    build_cost_volume,
    consistency_mask,
    cost_to_probability,
    cvam_mask,
    downsample_cvam,
    extract_features,
    plane_sweep_depth,
    save_volume_pfm,
    soft_argmin_depth,
    upsample_nearest,
)
from .dynmask import QuantileSpec, channel_mask, dynamic_mask, flatten_channel, quantile
from .geometry import (
    CameraModel,
    Projection,
    RigidPose,
    WarpResult,
    bilinear_sample,
    inverse_warp,
    project,
    sample_bilinear,
    sample_bilinear_gradient,
    warp_jacobian_depth,
)
from .metrics import DepthMetrics, evaluate, region_split_evaluate
from .optimizer import (
    RefineConfig,
    RefineReport,
    finite_difference_gradient,
    objective_gradient,
    photometric_gradient,
    refine_depth,
    reprojection_losses,
    run_ablation,
    smoothness_gradient,
    write_ablation_csv,
)
from .photometric import (
    LossMap,
    LossWeights,
    edge_aware_smoothness,
    masked_depth_loss,
    min_reprojection,
    photometric_error,
    ssim_map,
    total_objective,
)
from .seu import (
    EntropyField,
    SeuParams,
    UncertaintyField,
    fft_depth_axis,
    fuse_depth,
    magnitude_probability,
    spectral_entropy,
    uncertainty_from_entropy,
)
from .synth import (
    BackgroundSpec,
    FrameTriplet,
    SceneSpec,
    SpriteSpec,
    default_dynamic_scene,
    default_static_scene,
    generate_triplet,
    render,
    scene_spec_from_json,
    scene_spec_to_json,
)

__version__ = "0.1.0"
