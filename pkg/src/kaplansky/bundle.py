"""Finite model of a Hilbert--Kaplansky module over an atomic measure space.

``Omega`` is a finite set of weighted atoms, so the commutative algebra of
bounded measurable functions becomes :class:`StepFunction` (one value per
atom) and its idempotents become boolean masks (:class:`Idempotent`). The
module of square-integrable-in-``s``, bounded-in-``omega`` functions is
sampled on a quadrature grid over ``S``; an element stores one complex
vector per atom (:class:`ModuleElement`) and a module-linear operator stores
one square matrix per atom (:class:`BundleOperator`).
"""
from dataclasses import dataclass
from numbers import Number

import numpy as np

from ._config import resolve
from .exceptions import DimensionMismatchError, InvalidPartitionError, NonFiniteError


def _frozen(array):
    array = np.array(array, copy=True)
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class MeasureSpace:
    """Atoms of ``Omega`` and their (strictly positive) masses."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights):
            raise DimensionMismatchError("atoms and weights differ in length")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom identifiers must be unique")
        if not all(np.isfinite(w) and w > 0 for w in weights):
            raise ValueError("atom weights must be finite and strictly positive")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n_atoms, weight=1.0):
        return cls(tuple(range(n_atoms)), (weight,) * n_atoms)

    @property
    def n_atoms(self):
        return len(self.atoms)


@dataclass(frozen=True)
class SGrid:
    """Quadrature nodes on ``S`` with strictly positive weights."""

    points: tuple
    quad_weights: tuple

    def __post_init__(self):
        points = tuple(self.points)
        weights = tuple(float(w) for w in self.quad_weights)
        if len(points) != len(weights):
            raise DimensionMismatchError("points and quad_weights differ in length")
        if not all(np.isfinite(w) and w > 0 for w in weights):
            raise ValueError("quadrature weights must be finite and strictly positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "quad_weights", weights)

    @classmethod
    def uniform(cls, size, total_mass=1.0):
        """Midpoint rule on ``[0, 1]`` scaled to ``total_mass``."""
        points = tuple((i + 0.5) / size for i in range(size))
        return cls(points, (total_mass / size,) * size)

    @classmethod
    def unit(cls, size):
        """Counting measure; the L2 inner product is the plain dot product."""
        return cls(tuple(range(size)), (1.0,) * size)

    @property
    def size(self):
        return len(self.points)

    @property
    def w(self):
        return np.asarray(self.quad_weights)


class Idempotent:
    """An idempotent of L-infinity: the indicator of a set of atoms."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        mask = np.asarray(mask)
        if mask.ndim != 1:
            raise DimensionMismatchError("idempotent mask must be one-dimensional")
        if mask.dtype != bool:
            if not np.all((mask == 0) | (mask == 1)):
                raise ValueError("idempotent values must lie in {0, 1}")
            mask = mask.astype(bool)
        object.__setattr__(self, "mask", _frozen(mask))

    def __setattr__(self, name, value):
        raise AttributeError("Idempotent is immutable")

    @classmethod
    def zeros(cls, n_atoms):
        return cls(np.zeros(n_atoms, dtype=bool))

    @classmethod
    def ones(cls, n_atoms):
        return cls(np.ones(n_atoms, dtype=bool))

    def __len__(self):
        return self.mask.shape[0]

    def __repr__(self):
        return f"Idempotent({self.mask.astype(int).tolist()})"

    def _check(self, other):
        if len(self) != len(other):
            raise DimensionMismatchError(f"atom counts differ: {len(self)} vs {len(other)}")

    def __and__(self, other):
        self._check(other)
        return Idempotent(self.mask & other.mask)

    def __or__(self, other):
        self._check(other)
        return Idempotent(self.mask | other.mask)

    def __invert__(self):
        return Idempotent(~self.mask)

    @property
    def perp(self):
        return ~self

    def __le__(self, other):
        self._check(other)
        return bool(np.all(~self.mask | other.mask))

    def __ge__(self, other):
        return other <= self

    def __sub__(self, other):
        """``self - other`` as idempotents; only defined when ``other <= self``."""
        if not other <= self:
            raise ValueError("difference of idempotents requires other <= self")
        return Idempotent(self.mask & ~other.mask)

    def __eq__(self, other):
        if not isinstance(other, Idempotent):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self):
        return hash(self.mask.tobytes())

    def __mul__(self, other):
        if isinstance(other, Idempotent):
            return self & other
        if isinstance(other, StepFunction):
            return other * self
        if isinstance(other, Number):
            return self.as_step() * other
        return NotImplemented

    __rmul__ = __mul__

    def as_step(self):
        return StepFunction(self.mask.astype(float))

    def any(self):
        return bool(self.mask.any())

    def count(self):
        return int(self.mask.sum())

    @property
    def indices(self):
        return np.flatnonzero(self.mask)


class StepFunction:
    """Element of L-infinity(Omega): one (real or complex) value per atom."""

    __slots__ = ("values",)
    __array_priority__ = 1000

    def __init__(self, values):
        values = np.asarray(values)
        if values.ndim != 1:
            raise DimensionMismatchError("step function values must be one-dimensional")
        values = values.astype(np.result_type(values.dtype, float))
        object.__setattr__(self, "values", _frozen(values))

    def __setattr__(self, name, value):
        raise AttributeError("StepFunction is immutable")

    @classmethod
    def zeros(cls, n_atoms):
        return cls(np.zeros(n_atoms))

    @classmethod
    def constant(cls, value, n_atoms):
        return cls(np.full(n_atoms, value))

    def __len__(self):
        return self.values.shape[0]

    def __repr__(self):
        return f"StepFunction({self.values.tolist()})"

    def _coerce(self, other):
        if isinstance(other, StepFunction):
            if len(other) != len(self):
                raise DimensionMismatchError(
                    f"atom counts differ: {len(self)} vs {len(other)}")
            return other.values
        if isinstance(other, Idempotent):
            return self._coerce(other.as_step())
        if isinstance(other, Number):
            return other
        return None

    def _binary(self, other, op):
        value = self._coerce(other)
        if value is None:
            return NotImplemented
        return StepFunction(op(self.values, value))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self._binary(other, lambda a, b: b + a)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return self._binary(other, lambda a, b: b - a)

    def __mul__(self, other):
        if isinstance(other, (ModuleElement, BundleOperator)):
            return NotImplemented
        return self._binary(other, np.multiply)

    def __rmul__(self, other):
        return self._binary(other, lambda a, b: b * a)

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __rtruediv__(self, other):
        return self._binary(other, lambda a, b: b / a)

    def __neg__(self):
        return StepFunction(-self.values)

    def __abs__(self):
        return StepFunction(np.abs(self.values))

    def conj(self):
        return StepFunction(np.conj(self.values))

    @property
    def real(self):
        return StepFunction(self.values.real)

    @property
    def imag(self):
        return StepFunction(self.values.imag)

    def sqrt(self):
        return StepFunction(np.sqrt(self.values))

    def positive_part(self):
        """``f_+ = max(Re f, 0)`` for a self-adjoint (real) element."""
        return StepFunction(np.maximum(self.values.real, 0.0))

    def support(self):
        """Indicator of the atoms where the function is nonzero."""
        return Idempotent(self.values != 0)

    def sup(self):
        """L-infinity norm: the largest modulus over atoms."""
        return float(np.max(np.abs(self.values))) if len(self) else 0.0

    def is_real(self, atol=None):
        atol = resolve("equality_tol", atol)
        return bool(np.all(np.abs(self.values.imag) <= atol))

    def allclose(self, other, atol=None):
        atol = resolve("equality_tol", atol)
        other = self._coerce(other)
        return bool(np.all(np.abs(self.values - other) <= atol))


class PartitionOfUnity:
    """Pairwise disjoint idempotents whose supremum is the unit."""

    def __init__(self, parts, labels=None):
        parts = tuple(p if isinstance(p, Idempotent) else Idempotent(p) for p in parts)
        if not parts:
            raise InvalidPartitionError("a partition of unity needs at least one part")
        n_atoms = len(parts[0])
        if any(len(p) != n_atoms for p in parts):
            raise InvalidPartitionError("parts have different atom counts")
        counts = np.sum([p.mask for p in parts], axis=0)
        if np.any(counts > 1):
            raise InvalidPartitionError("parts are not pairwise disjoint")
        if np.any(counts == 0):
            raise InvalidPartitionError("parts do not cover every atom")
        if labels is None:
            labels = tuple(range(len(parts)))
        labels = tuple(labels)
        if len(labels) != len(parts):
            raise InvalidPartitionError("labels and parts differ in length")
        self.parts = parts
        self.labels = labels

    @classmethod
    def from_labels(cls, atom_labels):
        """Group atoms by label; parts are ordered by sorted label."""
        atom_labels = np.asarray(atom_labels)
        keys = sorted(set(atom_labels.tolist()))
        return cls([Idempotent(atom_labels == key) for key in keys], labels=keys)

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)

    def __getitem__(self, label):
        return self.parts[self.labels.index(label)]

    def __repr__(self):
        inner = ", ".join(f"{lab}: {p.indices.tolist()}" for lab, p in zip(self.labels, self.parts))
        return f"PartitionOfUnity({{{inner}}})"

    @property
    def n_atoms(self):
        return len(self.parts[0])

    def atom_labels(self):
        out = [None] * self.n_atoms
        for label, part in zip(self.labels, self.parts):
            for i in part.indices:
                out[i] = label
        return out


def _check_compatible(a, b):
    if a.space != b.space:
        raise DimensionMismatchError("operands live over different measure spaces")
    if a.grid != b.grid:
        raise DimensionMismatchError("operands live over different S-grids")


def _scale_fibers(other, n_atoms):
    """Per-atom scalar factor for multiplying fibers, or None."""
    if isinstance(other, Idempotent):
        other = other.as_step()
    if isinstance(other, StepFunction):
        if len(other) != n_atoms:
            raise DimensionMismatchError("step function and element differ in atom count")
        return other.values
    if isinstance(other, Number):
        return np.full(n_atoms, other)
    return None


class ModuleElement:
    """An element of L^{2,inf}(S x Omega): one vector over the S-grid per atom."""

    __array_priority__ = 1000

    def __init__(self, fibers, space, grid):
        fibers = np.asarray(fibers, dtype=complex)
        if fibers.ndim != 2:
            raise DimensionMismatchError("fibers must have shape (n_atoms, grid size)")
        if fibers.shape != (space.n_atoms, grid.size):
            raise DimensionMismatchError(
                f"fibers shape {fibers.shape} does not match "
                f"({space.n_atoms}, {grid.size})")
        self.fibers = _frozen(fibers)
        self.space = space
        self.grid = grid

    @classmethod
    def zeros(cls, space, grid):
        return cls(np.zeros((space.n_atoms, grid.size)), space, grid)

    @classmethod
    def basis(cls, space, grid, index):
        """Weighted unit vector ``delta_index / sqrt(w_index)`` on every atom."""
        fibers = np.zeros((space.n_atoms, grid.size), dtype=complex)
        fibers[:, index] = 1.0 / np.sqrt(grid.quad_weights[index])
        return cls(fibers, space, grid)

    def __repr__(self):
        return f"ModuleElement(n_atoms={self.space.n_atoms}, grid={self.grid.size})"

    def _like(self, fibers):
        return ModuleElement(fibers, self.space, self.grid)

    def __add__(self, other):
        if not isinstance(other, ModuleElement):
            return NotImplemented
        _check_compatible(self, other)
        return self._like(self.fibers + other.fibers)

    def __sub__(self, other):
        if not isinstance(other, ModuleElement):
            return NotImplemented
        _check_compatible(self, other)
        return self._like(self.fibers - other.fibers)

    def __neg__(self):
        return self._like(-self.fibers)

    def __mul__(self, other):
        scale = _scale_fibers(other, self.space.n_atoms)
        if scale is None:
            return NotImplemented
        return self._like(self.fibers * scale[:, None])

    __rmul__ = __mul__

    def restrict(self, pi):
        return pi * self

    def allclose(self, other, atol=None):
        atol = resolve("equality_tol", atol)
        _check_compatible(self, other)
        return bool(np.all(np.abs(self.fibers - other.fibers) <= atol))


class BundleOperator:
    """A module-linear operator, stored as one matrix per atom.

    The quadrature weights are already absorbed into the matrices, so
    applying the operator is a plain matrix-vector product per fiber. The
    weighted structure enters only through the adjoint and the norms.
    """

    __array_priority__ = 1000

    def __init__(self, fiber_maps, space, grid):
        fiber_maps = np.asarray(fiber_maps, dtype=complex)
        m = grid.size
        if fiber_maps.shape != (space.n_atoms, m, m):
            raise DimensionMismatchError(
                f"fiber_maps shape {fiber_maps.shape} does not match "
                f"({space.n_atoms}, {m}, {m})")
        self.fiber_maps = _frozen(fiber_maps)
        self.space = space
        self.grid = grid

    @classmethod
    def identity(cls, space, grid):
        eye = np.broadcast_to(np.eye(grid.size), (space.n_atoms, grid.size, grid.size))
        return cls(eye, space, grid)

    @classmethod
    def zeros(cls, space, grid):
        return cls(np.zeros((space.n_atoms, grid.size, grid.size)), space, grid)

    @classmethod
    def from_hermitian_form(cls, fibers, space, grid):
        """Inverse of :meth:`hermitian_form`."""
        r = np.sqrt(grid.w)
        return cls(fibers / r[:, None] * r[None, :], space, grid)

    def __repr__(self):
        return f"BundleOperator(n_atoms={self.space.n_atoms}, grid={self.grid.size})"

    def _like(self, fiber_maps):
        return BundleOperator(fiber_maps, self.space, self.grid)

    def hermitian_form(self):
        """Fibers ``W^{1/2} A W^{-1/2}``: the operator in an orthonormal basis.

        In this form the weighted adjoint is the conjugate transpose, so
        fiber spectra and singular values can be taken with standard
        dense routines.
        """
        r = np.sqrt(self.grid.w)
        return self.fiber_maps * r[:, None] / r[None, :]

    def check_finite(self):
        if not np.all(np.isfinite(self.fiber_maps)):
            raise NonFiniteError("operator has non-finite entries")
        return self

    def fiber_norms(self):
        """Spectral norm of every fiber, in the weighted inner product."""
        if self.grid.size == 0:
            return StepFunction.zeros(self.space.n_atoms)
        return StepFunction(np.linalg.norm(self.hermitian_form(), ord=2, axis=(1, 2)))

    def norm(self):
        """Module operator norm: the largest fiber spectral norm."""
        return self.fiber_norms().sup()

    def selfadjoint_residual(self):
        """Largest fiber spectral norm of ``T - T*``."""
        return (self - adjoint(self)).norm()

    def is_selfadjoint(self, rtol=None):
        rtol = resolve("equality_tol", rtol)
        return self.selfadjoint_residual() <= rtol * max(self.norm(), 1.0)

    def __add__(self, other):
        if not isinstance(other, BundleOperator):
            return NotImplemented
        _check_compatible(self, other)
        return self._like(self.fiber_maps + other.fiber_maps)

    def __sub__(self, other):
        if not isinstance(other, BundleOperator):
            return NotImplemented
        _check_compatible(self, other)
        return self._like(self.fiber_maps - other.fiber_maps)

    def __neg__(self):
        return self._like(-self.fiber_maps)

    def __mul__(self, other):
        scale = _scale_fibers(other, self.space.n_atoms)
        if scale is None:
            return NotImplemented
        return self._like(self.fiber_maps * scale[:, None, None])

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, BundleOperator):
            _check_compatible(self, other)
            return self._like(self.fiber_maps @ other.fiber_maps)
        if isinstance(other, ModuleElement):
            return apply(self, other)
        return NotImplemented

    def allclose(self, other, atol=None):
        atol = resolve("equality_tol", atol)
        _check_compatible(self, other)
        return bool(np.all(np.abs(self.fiber_maps - other.fiber_maps) <= atol))


def inner_product(xi, eta):
    """L-infinity-valued inner product ``sum_s w_s xi(s) conj(eta(s))`` per atom."""
    _check_compatible(xi, eta)
    return StepFunction(np.einsum("as,s,as->a", xi.fibers, xi.grid.w, eta.fibers.conj()))


def vector_norm(xi):
    """The vector norm ``sqrt(<xi, xi>)`` as a nonnegative step function."""
    sq = np.einsum("as,s,as->a", xi.fibers, xi.grid.w, xi.fibers.conj()).real
    return StepFunction(np.sqrt(np.maximum(sq, 0.0)))


def module_norm(xi):
    """The scalar norm: essential supremum of :func:`vector_norm`."""
    return vector_norm(xi).sup()


def mix(partition, elements):
    """Splice ``elements`` along ``partition``: ``pi_i * result == pi_i * elements[i]``."""
    if not isinstance(partition, PartitionOfUnity):
        partition = PartitionOfUnity(partition)
    elements = list(elements)
    if len(elements) != len(partition):
        raise DimensionMismatchError(
            f"{len(partition)} parts but {len(elements)} elements")
    first = elements[0]
    for other in elements[1:]:
        _check_compatible(first, other)
    if partition.n_atoms != first.space.n_atoms:
        raise DimensionMismatchError("partition and elements differ in atom count")
    fibers = np.empty_like(first.fibers)
    for part, element in zip(partition, elements):
        fibers[part.mask] = element.fibers[part.mask]
    return first._like(fibers)


def apply(T, xi):
    """Fiberwise matrix-vector product ``(T xi)(omega) = T_omega xi(omega)``."""
    _check_compatible(T, xi)
    return xi._like(np.einsum("aij,aj->ai", T.fiber_maps, xi.fibers))


def rank_one(xi, eta):
    """The operator ``zeta -> <zeta, eta> xi``."""
    _check_compatible(xi, eta)
    maps = np.einsum("ai,aj,j->aij", xi.fibers, eta.fibers.conj(), xi.grid.w)
    return BundleOperator(maps, xi.space, xi.grid)


def adjoint(T):
    """Adjoint for the weighted inner product: ``W^{-1} A^H W`` per fiber."""
    w = T.grid.w
    maps = np.conj(np.swapaxes(T.fiber_maps, 1, 2)) * w[None, None, :] / w[None, :, None]
    return T._like(maps)
