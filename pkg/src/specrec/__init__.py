"""Spectral color recovery in scattering media.

Forward image formation under attenuation and backscatter, camera projection
and its Gram-system inverse, six closed-form recovery-pattern solvers, a
majority-consensus recovery-set estimator, and synthetic scenes with exact
ground truth for validating all of it.
"""

__version__ = "0.1.0"

from .spectral import (
    SpectralGrid,
    Spectrum,
    inner_product,
    make_grid,
    norm,
)
from .camera import (
    CameraModel,
    best_approx,
    gaussian_rgb_camera,
    identity_camera,
    null_perturbation,
    project,
    reconstruct,
    residual,
)
from .medium import (
    DepthMap,
    MediumParams,
    SpectralImage,
    forward_model,
    invert_model,
    rte_integrate,
)
from .patterns import (
    MediumEstimate,
    PatternInstance,
    PatternKind,
    PixelDerivatives,
    Tolerances,
    consistency_check,
    phi,
    phi_inverse,
    solve_pattern,
    verify_pattern,
)
from .recovery import (
    DerivativeField,
    RecoverySetFit,
    differentiate,
    estimate_from_recovery_set,
    find_equal_depth_pair,
    fit_recovery_set,
    majority_line_fit,
    necessity_estimator,
    required_support,
)
from .scene import (
    BUILTIN_SCENE_NAMES,
    ConstantDepth,
    Material,
    NoiseSpec,
    PatternDecl,
    RampDepth,
    Region,
    SceneSpec,
    add_noise,
    builtin_scene,
    builtin_scenes,
    material_from_knots,
    medium_preset,
    render,
)
from . import errors

__all__ = [name for name in dir() if not name.startswith("_")]
