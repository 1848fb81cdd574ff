"""Certified spectral analysis of perturbed diagonal operators.

The package turns a diagonal operator plus a summable perturbation into
a similar operator that is block diagonal along the spectral groups,
with explicit contraction certificates, weighted remainder bounds and
an independent eigensolver to check everything against.
"""

from .errors import (
    AssumptionViolationError,
    ConditionViolationError,
    ContractionViolationError,
    DegenerateWeightError,
    InvalidInputError,
    InvariantBreachError,
    MethodConditionError,
    NonConvergenceError,
    NotInvertibleError,
    NotSupportedError,
    OracleFailureError,
    ParseError,
    PartitionMismatchError,
    ResolutionError,
    SimspecError,
    WindowTooSmallError,
)
from .models import (
    MODELS,
    ModelProblem,
    coeffs_from_csv,
    coeffs_to_csv,
    dirac_model,
    hill_model,
    involution_model,
    involution_offdiag_energy,
    kernel_model,
    kernel_split_constants,
    random_trig_coeffs,
)
from .opmatrix import (
    BlockMatrix,
    NormReport,
    Partition,
    Spectrum,
    TruncationWindow,
    free_diagonal,
    operator_norm_estimate,
)
from .similarity import (
    PIPELINES,
    FixedPointResult,
    SimilarityResult,
    block_eigenvalue_estimates,
    diagonal_asymptotics,
    equiconvergence_bound,
    fixed_point,
    pipeline_block_norm,
    pipeline_contraction,
    pipeline_coarse,
    pipeline_rebase,
    preliminary_transform,
    projection_difference,
    similarity_residual,
)
from .splitting import (
    SplitBounds,
    SplitResult,
    certificate_from_constants,
    operator_norm_condition,
    split_certificate,
    split_eigenpair,
    split_system,
)
from .transforms import (
    SmoothingBounds,
    TransformContext,
    block_diagonal,
    commutator_inverse,
    commutator_residual,
    group_coupling,
    off_diagonal_part,
    smoothing_norm_bounds,
)
from .verify import (
    SpectrumMatch,
    SpectrumReport,
    build_spectrum_report,
    charpoly_eigenvalues,
    eigen_projection,
    match_spectra,
    oracle_eigenpairs,
    oracle_eigenvalues,
    projection_compare,
    tail_factor_inequality,
    tail_weight_check,
)
from .weighted import (
    WeightSequence,
    WeightedFactorization,
    decay_weights,
    factorize,
    select_coarsening,
    weighted_norm,
    weights_from_csv,
    weights_to_csv,
)

__version__ = "0.1.0"
