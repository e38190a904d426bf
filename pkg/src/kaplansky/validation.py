"""Input coercion for the estimator layer.

Raw numpy arrays are accepted wherever a bundle object is expected: an
array of shape ``(n_atoms, m, m)`` becomes an operator over unit-mass
atoms and a counting-measure grid.
"""
import numpy as np

from .bundle import BundleOperator, MeasureSpace, ModuleElement, SGrid, StepFunction
from .exceptions import DimensionMismatchError, NotSelfAdjointError
from .pie import KernelBundle
from .vna import MatrixField


def check_tolerance(name, value):
    if value is None:
        return value
    if not (np.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a strictly positive finite number, got {value!r}")
    return float(value)


def _stack(X, what):
    X = np.asarray(X, dtype=complex)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise DimensionMismatchError(f"{what}: expected shape (n_atoms, m, m), got {X.shape}")
    return X


def check_operator(T, selfadjoint=False):
    if not isinstance(T, BundleOperator):
        X = _stack(T, "operator")
        T = BundleOperator(X, MeasureSpace.uniform(X.shape[0]), SGrid.unit(X.shape[1]))
    T.check_finite()
    if selfadjoint and not T.is_selfadjoint():
        raise NotSelfAdjointError("operator is not self-adjoint")
    return T


def check_kernel(K):
    if not isinstance(K, KernelBundle):
        X = _stack(K, "kernel")
        K = KernelBundle(X, MeasureSpace.uniform(X.shape[0]), SGrid.unit(X.shape[1]),
                         selfadjoint=True)
    return K.check_selfadjoint()


def check_matrix_field(x):
    if not isinstance(x, MatrixField):
        x = MatrixField(_stack(x, "matrix field"))
    return x.check_finite()


def check_step_function(f, n_atoms):
    if not isinstance(f, StepFunction):
        f = StepFunction(np.broadcast_to(np.asarray(f), (n_atoms,)).copy())
    if len(f) != n_atoms:
        raise DimensionMismatchError(f"expected {n_atoms} atoms, got {len(f)}")
    return f


def check_element(xi, space, grid):
    if not isinstance(xi, ModuleElement):
        xi = ModuleElement(np.asarray(xi, dtype=complex), space, grid)
    if xi.space != space or xi.grid != grid:
        raise DimensionMismatchError("element lives over a different bundle")
    return xi
