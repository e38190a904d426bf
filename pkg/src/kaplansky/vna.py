"""Self-adjoint elements of a type I_n algebra, modelled as matrix fields.

The algebra of bounded module maps on ``L^inf(Omega, H)`` with
``dim H = n`` is, in the atomic model, one ``n x n`` matrix per atom; its
center is the step functions acting by scalar multiplication.
"""
from dataclasses import dataclass

import numpy as np

from ._config import resolve
from ._fibers import fiber_map
from .bundle import (
    BundleOperator,
    Idempotent,
    MeasureSpace,
    PartitionOfUnity,
    SGrid,
    StepFunction,
    _scale_fibers,
)
from .exceptions import DimensionMismatchError, NonFiniteError, NotProjectionError
from .spectral import eigendecompose


class MatrixField:
    """One ``n x n`` complex matrix per atom."""

    __array_priority__ = 1000

    def __init__(self, matrices, space=None):
        matrices = np.asarray(matrices, dtype=complex)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise DimensionMismatchError("matrix field must have shape (n_atoms, n, n)")
        if space is None:
            space = MeasureSpace.uniform(matrices.shape[0])
        if space.n_atoms != matrices.shape[0]:
            raise DimensionMismatchError("matrix field and measure space differ in atom count")
        matrices = matrices.copy()
        matrices.flags.writeable = False
        self.matrices = matrices
        self.space = space

    @classmethod
    def identity(cls, space, n):
        return cls(np.broadcast_to(np.eye(n), (space.n_atoms, n, n)), space)

    @classmethod
    def zeros(cls, space, n):
        return cls(np.zeros((space.n_atoms, n, n)), space)

    @classmethod
    def central(cls, c, n, space=None):
        """The central element ``c * 1`` for a step function ``c``."""
        if space is None:
            space = MeasureSpace.uniform(len(c))
        return c * cls.identity(space, n)

    @property
    def dim(self):
        return self.matrices.shape[1]

    def __repr__(self):
        return f"{type(self).__name__}(n_atoms={self.space.n_atoms}, dim={self.dim})"

    def _like(self, matrices):
        return MatrixField(matrices, self.space)

    def _check(self, other):
        if self.space != other.space or self.dim != other.dim:
            raise DimensionMismatchError("matrix fields over different spaces or dimensions")

    def __add__(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        self._check(other)
        return self._like(self.matrices + other.matrices)

    def __sub__(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        self._check(other)
        return self._like(self.matrices - other.matrices)

    def __neg__(self):
        return self._like(-self.matrices)

    def __mul__(self, other):
        scale = _scale_fibers(other, self.space.n_atoms)
        if scale is None:
            return NotImplemented
        return self._like(self.matrices * scale[:, None, None])

    __rmul__ = __mul__

    def __matmul__(self, other):
        if not isinstance(other, MatrixField):
            return NotImplemented
        self._check(other)
        return self._like(self.matrices @ other.matrices)

    def adjoint(self):
        return self._like(np.conj(np.swapaxes(self.matrices, 1, 2)))

    def fiber_norms(self):
        return StepFunction(np.linalg.norm(self.matrices, ord=2, axis=(1, 2)))

    def norm(self):
        return self.fiber_norms().sup()

    def trace(self):
        return StepFunction(np.trace(self.matrices, axis1=1, axis2=2))

    def is_selfadjoint(self, rtol=None):
        rtol = resolve("equality_tol", rtol)
        return (self - self.adjoint()).norm() <= rtol * max(self.norm(), 1.0)

    def check_finite(self):
        if not np.all(np.isfinite(self.matrices)):
            raise NonFiniteError("matrix field has non-finite entries")
        return self

    def as_operator(self):
        """View as a bundle operator over an ``n``-point counting-measure grid."""
        return BundleOperator(self.matrices, self.space, SGrid.unit(self.dim))

    @classmethod
    def from_operator(cls, T):
        return cls(T.hermitian_form(), T.space)


class ProjectionField(MatrixField):
    """A matrix field with ``p = p* = p^2`` on every fiber."""

    def __init__(self, matrices, space=None, atol=None):
        super().__init__(matrices, space)
        atol = resolve("equality_tol", atol)
        p = self.matrices
        herm = np.max(np.abs(p - np.conj(np.swapaxes(p, 1, 2))), initial=0.0)
        idem = np.max(np.abs(p @ p - p), initial=0.0)
        if herm > atol or idem > atol:
            raise NotProjectionError(
                f"not a projection field (hermitian defect {herm:.2e}, "
                f"idempotent defect {idem:.2e})")

    @classmethod
    def from_field(cls, field, atol=None):
        return cls(field.matrices, field.space, atol=atol)

    def ranks(self):
        return np.rint(self.trace().values.real).astype(int)


def _svd(x, parallelism):
    x.check_finite()
    return fiber_map(lambda M: np.linalg.svd(M), x.matrices, parallelism=parallelism)


def _column_projector(vectors, keep):
    """Sum of ``v v^H`` over the columns of ``vectors`` selected by ``keep``."""
    sel = vectors * keep[:, None, :]
    return sel @ np.conj(np.swapaxes(sel, 1, 2))


def left_support(y, rank_tol=None, parallelism=None):
    """Smallest projection ``p`` with ``p y = y``: the column-space projector per fiber."""
    rank_tol = resolve("rank_tol", rank_tol)
    U, s, _ = _svd(y, parallelism)
    keep = s > rank_tol * s[:, :1] if s.shape[1] else s > 0
    return ProjectionField(_column_projector(U, keep), y.space)


def homogeneous_decomposition(p):
    """Central masks ``q_r`` grouping atoms by the fiber rank ``r`` of ``p``.

    Every projection of the finite model is finite; this partition is the
    explicit splitting into homogeneous pieces. Labels are the ranks.
    """
    if not isinstance(p, ProjectionField):
        p = ProjectionField.from_field(p)
    return PartitionOfUnity.from_labels(p.ranks())


def truncation_projection(x, eps, parallelism=None):
    """Projection ``p`` onto right singular directions with singular value ``< eps``.

    Then ``||x p|| < eps`` and ``1 - p`` has the least fiber rank among
    projections achieving that bound.
    """
    if not eps > 0:
        raise ValueError("eps must be strictly positive")
    _, s, Vh = _svd(x, parallelism)
    V = np.conj(np.swapaxes(Vh, 1, 2))
    return ProjectionField(_column_projector(V, s < eps), x.space)


def finite_certificate(p):
    """Homogeneous decomposition of ``1 - p``, certifying it is finitely generated."""
    q = MatrixField.identity(p.space, p.dim) - p
    return homogeneous_decomposition(ProjectionField.from_field(q))


@dataclass
class CentralClass:
    k: int
    mask: Idempotent
    values: list
    projections: list


class CentralDiagonalForm:
    """``x = sum_k z_k sum_n f_{k,n} p_{k,n}`` with abelian (rank-one) ``p_{k,n}``."""

    def __init__(self, spectrum, space):
        self.spectrum = spectrum
        self.space = space
        self.dim = spectrum.grid.size

    @property
    def central_partition(self):
        return self.spectrum.rank_partition

    @property
    def classes(self):
        out = []
        for cls in self.spectrum.classes:
            projections = []
            for xi in cls.vectors:
                v = xi.fibers
                projections.append(
                    ProjectionField(v[:, :, None] * np.conj(v[:, None, :]), self.space))
            out.append(CentralClass(cls.k, cls.mask, cls.eigenvalues, projections))
        return out

    def reconstruct(self):
        x = MatrixField.zeros(self.space, self.dim)
        for cls in self.classes:
            for f, p in zip(cls.values, cls.projections):
                x = x + f * p
        return x


def diagonalize(x, rank_tol=None, parallelism=None):
    """Central diagonal form of a self-adjoint matrix field."""
    x.check_finite()
    spectrum = eigendecompose(x.as_operator(), rank_tol=rank_tol, parallelism=parallelism)
    return CentralDiagonalForm(spectrum, x.space)


def to_diagonal_matrix(form):
    """Return ``(D, U)`` with ``U`` unitary and ``U* x U = D`` per fiber.

    Columns of ``U`` are the eigenvectors in modulus order followed by a
    basis of the null space; ``D`` carries the matching eigenvalues.
    """
    spectrum = form.spectrum
    n_atoms, n = form.space.n_atoms, form.dim
    ranks = spectrum.ranks
    values = spectrum.eigenvalue_matrix()
    vectors = spectrum.vector_stack()
    nulls = (np.stack([v.fibers for v in spectrum.null_vectors], axis=2)
             if spectrum.null_vectors else np.zeros((n_atoms, n, 0), dtype=complex))
    U = np.zeros((n_atoms, n, n), dtype=complex)
    D = np.zeros((n_atoms, n, n), dtype=complex)
    for a in range(n_atoms):
        r = ranks[a]
        U[a, :, :r] = vectors[a, :, :r]
        U[a, :, r:] = nulls[a, :, :n - r]
        D[a, np.arange(r), np.arange(r)] = values[a, :r]
    return MatrixField(D, form.space), MatrixField(U, form.space)
