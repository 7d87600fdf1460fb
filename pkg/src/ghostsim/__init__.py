"""Computational ghost imaging: seeded speckle fields, Fresnel propagation,
single-pixel detection, and correlation reconstruction."""

from .errors import (
    DegenerateInput,
    DetectorKindMismatch,
    EmptyImage,
    FingerprintMismatch,
    GeometryMismatch,
    GhostSimError,
    GridMismatch,
    GridTooLarge,
    GridTooSmall,
    InsufficientData,
    InsufficientSamples,
    InvalidParameter,
    NonFiniteInput,
    PlaneMismatch,
    SamplingViolation,
    ShapeMismatch,
    UnsupportedFormat,
)
from .field import (
    ComplexField,
    GridSpec,
    PhaseMask,
    apply_mask,
    make_gaussian_input,
    random_phase_mask,
)
from .propagation import (
    PropagationPlan,
    SamplingReport,
    check_sampling,
    direct_quadrature_propagate,
    fourier_plane,
    fresnel_propagate,
)
from .scene import (
    MeasurementRecord,
    TransmissionObject,
    bucket_measure,
    load_object,
    make_double_slit,
    measure,
    pinhole_measure,
)
from .config import ExperimentConfig, load_config, preset_config, save_config
from .reconstruct import (
    CorrelationAccumulator,
    Fingerprint,
    PlaneRef,
    ReconstructionResult,
    depth_stack,
    read_records,
    reconstruct_at,
    replay_with_checkpoints,
    run_gd,
    run_gi,
    run_gi_with_checkpoints,
    verify_record,
    write_records,
)
from .analysis import (
    ResolutionReport,
    SnrCurve,
    SpeckleEnsemble,
    SpeckleStats,
    collect_speckle_ensemble,
    depth_sharpness_curve,
    fringe_spacing,
    ncc,
    sharpness,
    snr_curve,
    snr_curve_from_results,
    speckle_stats,
    theoretical_resolution,
)
from .phase_retrieval import (
    RetrievalProblem,
    RetrievalResult,
    align_global_phase,
    extract_intensities,
    gerchberg_saxton,
    relative_field_error,
)

__version__ = "0.1.0"
