"""Architected materials on Euclidean-isometry patterns: geometry, groupoid algebra and dynamics."""

__version__ = "0.1.0"

from .isometry import GroupMetricParams, Isometry, compose, group_distance, inverse, right_translate
from .pattern import (
    BallTimesO,
    Classification,
    Disordered,
    Explicit,
    ExplicitSet,
    Pattern,
    QuasiRotation,
    Wallpaper,
    Window,
    classify,
    generate,
    is_relatively_dense,
    is_separated,
    translate_pattern,
)
from .transversal import (
    WindowMetricParams,
    align_at,
    circle_embedding_check,
    estimate_transversal,
    window_distance,
)
from .groupoid import GroupoidElement, NotComposable, compose_elements, invert, range_fiber
from .algebra import (
    AlgebraElementSample,
    CouplingKernel,
    DeltaKernel,
    FunctionKernel,
    TabulatedKernel,
    convolve,
    inner_product,
    norm_estimate,
    restrict,
    star,
)
from .coupling import (
    CouplingMatrixSet,
    CouplingModel,
    DipoleDipole,
    EscapedBasin,
    ExternalField,
    ModelKernel,
    NonConvergence,
    SeedResonator,
    check_equivariance,
    coupling_matrices,
    dipole_pair_energy,
    find_equilibrium,
    reduce,
)
from .dynamics import (
    BandProjection,
    DynamicalMatrix,
    GapViolation,
    NonHermitian,
    Resonant,
    SpectrumResult,
    SweepSpec,
    assemble,
    band_projection,
    represent,
    respond,
    spectrum,
    sweep,
)

__all__ = [
    "__version__",
    "GroupMetricParams",
    "Isometry",
    "compose",
    "group_distance",
    "inverse",
    "right_translate",
    "BallTimesO",
    "Classification",
    "Disordered",
    "Explicit",
    "ExplicitSet",
    "Pattern",
    "QuasiRotation",
    "Wallpaper",
    "Window",
    "classify",
    "generate",
    "is_relatively_dense",
    "is_separated",
    "translate_pattern",
    "WindowMetricParams",
    "align_at",
    "circle_embedding_check",
    "estimate_transversal",
    "window_distance",
    "GroupoidElement",
    "NotComposable",
    "compose_elements",
    "invert",
    "range_fiber",
    "AlgebraElementSample",
    "CouplingKernel",
    "DeltaKernel",
    "FunctionKernel",
    "TabulatedKernel",
    "convolve",
    "inner_product",
    "norm_estimate",
    "restrict",
    "star",
    "CouplingMatrixSet",
    "CouplingModel",
    "DipoleDipole",
    "EscapedBasin",
    "ExternalField",
    "ModelKernel",
    "NonConvergence",
    "SeedResonator",
    "check_equivariance",
    "coupling_matrices",
    "dipole_pair_energy",
    "find_equilibrium",
    "reduce",
    "BandProjection",
    "DynamicalMatrix",
    "GapViolation",
    "NonHermitian",
    "Resonant",
    "SpectrumResult",
    "SweepSpec",
    "assemble",
    "band_projection",
    "represent",
    "respond",
    "spectrum",
    "sweep",
]
