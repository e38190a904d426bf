"""scikit-learn style wrappers around the functional core.

Each estimator takes its tolerances as constructor parameters (so
``get_params``/``set_params``/``clone`` work), learns a decomposition in
``fit`` and exposes it through trailing-underscore attributes.
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bundle import ModuleElement, inner_product
from .pie import (
    build_operator,
    check_witness,
    hs_check,
    kernel_spectrum,
    match_branches,
    pie_residual,
)
from .exceptions import NotSolvableError
from .spectral import cyclic_schmidt, eigendecompose
from .validation import (
    check_element,
    check_kernel,
    check_matrix_field,
    check_operator,
    check_step_function,
    check_tolerance,
)
from .vna import (
    MatrixField,
    diagonalize,
    finite_certificate,
    to_diagonal_matrix,
    truncation_projection,
)


def _coefficients(xi, family):
    n_atoms = xi.space.n_atoms
    if not family:
        return np.zeros((n_atoms, 0), dtype=complex)
    return np.stack([inner_product(xi, v).values for v in family], axis=1)


def _synthesize(coef, family, space, grid):
    coef = np.asarray(coef, dtype=complex)
    fibers = np.zeros((space.n_atoms, grid.size), dtype=complex)
    for n, v in enumerate(family):
        fibers += coef[:, n, None] * v.fibers
    return ModuleElement(fibers, space, grid)


class CyclicSchmidt(TransformerMixin, BaseEstimator):
    """Fiberwise Schmidt decomposition of a bundle operator.

    ``transform`` returns the right-family coefficients ``<xi, eta_n>``
    per atom; ``inverse_transform`` synthesizes along the left family, so
    ``inverse_transform(transform(xi) * singular_values_)`` equals ``T xi``.
    """

    def __init__(self, rank_tol=1e-10, parallelism=None):
        self.rank_tol = rank_tol
        self.parallelism = parallelism

    def fit(self, T, y=None):
        check_tolerance("rank_tol", self.rank_tol)
        T = check_operator(T)
        self.decomposition_ = cyclic_schmidt(T, self.rank_tol, self.parallelism)
        self.rank_partition_ = self.decomposition_.rank_partition
        self.singular_values_ = self.decomposition_._values_matrix().real
        self.space_, self.grid_ = T.space, T.grid
        return self

    def transform(self, X):
        check_is_fitted(self)
        xi = check_element(X, self.space_, self.grid_)
        return _coefficients(xi, self.decomposition_.right)

    def inverse_transform(self, C):
        check_is_fitted(self)
        return _synthesize(C, self.decomposition_.left, self.space_, self.grid_)


class SelfAdjointSpectrum(TransformerMixin, BaseEstimator):
    """Modulus-ordered spectral representation of a self-adjoint bundle operator.

    ``eigenvalues_`` is an ``(n_atoms, N)`` array; an atom of rank ``k``
    has nonzero entries in its first ``k`` columns only.
    """

    def __init__(self, rank_tol=1e-10, parallelism=None):
        self.rank_tol = rank_tol
        self.parallelism = parallelism

    def fit(self, T, y=None):
        check_tolerance("rank_tol", self.rank_tol)
        T = check_operator(T, selfadjoint=True)
        self.spectrum_ = eigendecompose(T, self.rank_tol, self.parallelism)
        self.eigenvalues_ = self.spectrum_.eigenvalue_matrix()
        self.rank_partition_ = self.spectrum_.rank_partition
        self.residual_ = self.spectrum_.residual(T)
        self.space_, self.grid_ = T.space, T.grid
        return self

    def transform(self, X):
        check_is_fitted(self)
        xi = check_element(X, self.space_, self.grid_)
        return _coefficients(xi, self.spectrum_.vectors)

    def inverse_transform(self, C):
        check_is_fitted(self)
        return _synthesize(C, self.spectrum_.vectors, self.space_, self.grid_)

    def reconstruct(self):
        check_is_fitted(self)
        return self.spectrum_.reconstruct()


class PartialIntegralSolver(BaseEstimator):
    """Solvability of ``int_S k(t,s,w) f(s,w) ds = lam(w) f(t,w)`` for a fixed kernel.

    ``fit`` computes the branch spectrum once; ``predict`` answers for any
    number of candidate ``lam`` step functions.
    """

    def __init__(self, rank_tol=1e-10, solve_tol=1e-8, parallelism=None):
        self.rank_tol = rank_tol
        self.solve_tol = solve_tol
        self.parallelism = parallelism

    def fit(self, K, y=None):
        check_tolerance("rank_tol", self.rank_tol)
        check_tolerance("solve_tol", self.solve_tol)
        K = check_kernel(K)
        self.kernel_ = K
        self.hs_norms_ = hs_check(K)
        self.operator_ = build_operator(K)
        self.spectrum_ = kernel_spectrum(K, self.rank_tol, self.parallelism)
        return self

    def predict(self, lam):
        """Return a :class:`~kaplansky.pie.SolvabilityWitness`, or ``None``."""
        check_is_fitted(self)
        lam = check_step_function(lam, self.kernel_.space.n_atoms)
        return match_branches(self.spectrum_, lam, self.solve_tol)

    def solve(self, lam):
        check_is_fitted(self)
        lam = check_step_function(lam, self.kernel_.space.n_atoms)
        witness = match_branches(self.spectrum_, lam, self.solve_tol)
        if witness is None:
            raise NotSolvableError("lambda matches no eigenvalue branch on any atom")
        check_witness(self.operator_, witness.eigenfunction, lam, witness, self.solve_tol)
        return witness.eigenfunction

    def residual(self, f, lam):
        """Module norm of ``T f - lam f``."""
        check_is_fitted(self)
        lam = check_step_function(lam, self.kernel_.space.n_atoms)
        return pie_residual(self.operator_, f, lam)


class CentralDiagonalizer(TransformerMixin, BaseEstimator):
    """Diagonalize a self-adjoint matrix field over its center.

    After ``fit(x)``, ``transform(y)`` expresses any field in the fitted
    eigenbasis (``U* y U``); ``transform(x)`` is ``diagonal_``.
    """

    def __init__(self, rank_tol=1e-10, parallelism=None):
        self.rank_tol = rank_tol
        self.parallelism = parallelism

    def fit(self, x, y=None):
        check_tolerance("rank_tol", self.rank_tol)
        x = check_matrix_field(x)
        self.form_ = diagonalize(x, self.rank_tol, self.parallelism)
        self.diagonal_, self.unitary_ = to_diagonal_matrix(self.form_)
        self.central_partition_ = self.form_.central_partition
        return self

    def transform(self, y):
        check_is_fitted(self)
        y = check_matrix_field(y)
        U = self.unitary_
        return U.adjoint() @ y @ U

    def inverse_transform(self, d):
        check_is_fitted(self)
        d = check_matrix_field(d)
        U = self.unitary_
        return U @ d @ U.adjoint()


class TruncationProjector(TransformerMixin, BaseEstimator):
    """Projection onto the fiber directions where ``x`` acts with norm below ``eps``.

    ``transform(y)`` returns ``y p``; ``certificate_`` is the homogeneous
    decomposition of ``1 - p``.
    """

    def __init__(self, eps=1e-3, parallelism=None):
        self.eps = eps
        self.parallelism = parallelism

    def fit(self, x, y=None):
        check_tolerance("eps", self.eps)
        x = check_matrix_field(x)
        self.projection_ = truncation_projection(x, self.eps, self.parallelism)
        self.certificate_ = finite_certificate(self.projection_)
        return self

    def transform(self, y):
        check_is_fitted(self)
        y = check_matrix_field(y)
        return y @ MatrixField(self.projection_.matrices, self.projection_.space)
