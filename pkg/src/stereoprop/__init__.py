"""Deterministic grid operators for normal-guided stereo refinement.

Disparity propagation with confidence-normalized (possibly offset) neighbor
weights, feature-level attention and affinity filtering with exact adjoints,
surface normals from disparity with dense/sparse ground-truth fusion, the
multi-scale loss stack, stereo evaluation metrics, dataset file formats and
a synthetic slanted-plane scene generator.
"""

from ._kernels import available_backends, backend_name, set_backend
from .grid import (
    ConfidenceMap,
    DisparityMap,
    Grid,
    Mask,
    NormalMap,
    Pyramid,
    bilinear_sample,
    build_pyramid,
    downsample,
    upsample,
)
from .matching import (
    CostVolume,
    WarpedError,
    build_correlation_volume,
    soft_argmin_disparity,
    warp_right_to_left,
    warped_error,
)
from .normals import (
    NormalGtBundle,
    build_normal_gt,
    epe_index,
    fuse_normal_gt,
    normal_from_disparity,
    residual_normal_update,
    sobel_gradients,
    sparse_normal_from_disparity,
    weighted_normal_loss,
)
from .propagation import (
    AffinityField,
    NormalizedAffinity,
    OffsetField,
    heuristic_offsets_from_normal,
    iterate_propagation,
    normalize_affinities,
    propagate_local,
    propagate_nonlocal,
    propagate_nonlocal_backward,
)
from .filtering import (
    LocalAffinity,
    attention_backward,
    attention_reweight,
    filter_backward,
    local_affinity_filter,
    normalize_local_affinity,
)
from .losses import (
    LossWeights,
    MetricReport,
    RegionMetrics,
    confidence_loss,
    disparity_loss,
    evaluate,
    normal_loss,
    smooth_l1,
    total_loss,
)
from .synthetic import PlaneSpec, SceneBundle, gen_planar_scene, occlusion_from_disparity

__version__ = "0.1.0"
