"""Spectral decompositions of self-adjoint operators on finite Hilbert--Kaplansky bundles."""
from ._config import config_context, get_config, set_config
from .bundle import (
    BundleOperator,
    Idempotent,
    MeasureSpace,
    ModuleElement,
    PartitionOfUnity,
    SGrid,
    StepFunction,
    adjoint,
    apply,
    inner_product,
    mix,
    module_norm,
    rank_one,
    vector_norm,
)
from .estimators import (
    CentralDiagonalizer,
    CyclicSchmidt,
    PartialIntegralSolver,
    SelfAdjointSpectrum,
    TruncationProjector,
)
from .pie import (
    KernelBundle,
    SolvabilityWitness,
    build_operator,
    check_solvable,
    hs_check,
    kernel_spectrum,
    solve_pie,
)
from .spectral import (
    CyclicDecomposition,
    SignedSequencePair,
    SpectralDecomposition,
    cyclic_schmidt,
    eigendecompose,
    positive_selfadjoint_form,
    selfadjoint_merge,
    split_parts,
    verify_merge_identity,
)
from .vna import (
    CentralDiagonalForm,
    MatrixField,
    ProjectionField,
    diagonalize,
    homogeneous_decomposition,
    left_support,
    to_diagonal_matrix,
    truncation_projection,
)

__version__ = "0.1.0"
