"""Partial integral operators with kernels ``k(t, s, omega)``.

The operator integrates over ``S`` only:

    T(f)(t, omega) = int_S k(t, s, omega) f(s, omega) ds,

so on the quadrature grid each atom carries the matrix
``k(t_i, s_j, omega) w_j``. For a self-adjoint kernel the eigenvalue
equation ``T f = lambda f`` with a step-function ``lambda`` is solvable
exactly when ``lambda`` agrees with some eigenvalue branch on a nonzero
set of atoms.
"""
from dataclasses import dataclass

import numpy as np

from ._config import resolve
from .bundle import (
    BundleOperator,
    Idempotent,
    ModuleElement,
    StepFunction,
    apply,
    module_norm,
    vector_norm,
)
from .exceptions import (
    DimensionMismatchError,
    KaplanskyError,
    NonFiniteError,
    NotSelfAdjointError,
    NotSolvableError,
    ToleranceInconsistencyError,
)
from .spectral import eigendecompose


class KernelBundle:
    """Samples ``k(t_i, s_j, omega)`` of a kernel on the S-grid, one matrix per atom."""

    def __init__(self, samples, space, grid, selfadjoint=False):
        samples = np.asarray(samples, dtype=complex)
        m = grid.size
        if samples.shape != (space.n_atoms, m, m):
            raise DimensionMismatchError(
                f"kernel samples shape {samples.shape} does not match "
                f"({space.n_atoms}, {m}, {m})")
        samples = samples.copy()
        samples.flags.writeable = False
        self.samples = samples
        self.space = space
        self.grid = grid
        self.selfadjoint = bool(selfadjoint)

    def __repr__(self):
        return (f"KernelBundle(n_atoms={self.space.n_atoms}, grid={self.grid.size}, "
                f"selfadjoint={self.selfadjoint})")

    def check_finite(self):
        if not np.all(np.isfinite(self.samples)):
            bad = np.argwhere(~np.isfinite(self.samples))[0]
            raise NonFiniteError(f"kernel has non-finite entry at (atom, t, s) = {tuple(bad)}")
        return self

    def asymmetry(self):
        """Largest ``|k(t,s,w) - conj(k(s,t,w))|`` and its ``(atom, t, s)`` location."""
        diff = np.abs(self.samples - np.conj(np.swapaxes(self.samples, 1, 2)))
        if diff.size == 0:
            return 0.0, None
        loc = np.unravel_index(int(np.argmax(diff)), diff.shape)
        return float(diff[loc]), tuple(int(i) for i in loc)

    def is_hermitian(self, rtol=None):
        rtol = resolve("equality_tol", rtol)
        scale = max(1.0, float(np.max(np.abs(self.samples), initial=0.0)))
        return self.asymmetry()[0] <= rtol * scale

    def check_selfadjoint(self):
        self.check_finite()
        if not self.is_hermitian():
            value, loc = self.asymmetry()
            raise NotSelfAdjointError(
                f"kernel is not self-adjoint: asymmetry {value:.3e} at (atom, t, s) = {loc}")
        return self


def hs_check(K):
    """Per-atom squared Hilbert--Schmidt norm ``sum_{t,s} w_t w_s |k(t,s,omega)|^2``.

    The L-infinity norm of the result (``.sup()``) is the admissibility bound.
    """
    K.check_finite()
    w = K.grid.w
    return StepFunction(np.einsum("t,ats,s->a", w, np.abs(K.samples) ** 2, w))


def build_operator(K):
    """Bundle operator with fibers ``k(t_i, s_j, omega) w_j``."""
    return BundleOperator(K.samples * K.grid.w[None, None, :], K.space, K.grid)


def kernel_spectrum(K, rank_tol=None, parallelism=None):
    """Eigenvalue branches of a self-adjoint kernel, ordered by modulus per atom.

    The rank partition of the result plays the role of the sets ``Omega_k``;
    on ``Omega_k`` there are ``k`` nonzero branches.
    """
    K.check_selfadjoint()
    hs_check(K)
    return eigendecompose(build_operator(K), rank_tol=rank_tol, parallelism=parallelism)


@dataclass
class Branch:
    """One eigenvalue branch ``(k, n)``: a value and eigenfunction supported on ``mask``."""

    k: int
    n: int
    mask: Idempotent
    value: StepFunction
    eigenfunction: ModuleElement

    @property
    def index(self):
        return (self.k, self.n)


def spectral_branches(spectrum):
    """Enumerate branches in lexicographic ``(k, n)`` order.

    Besides the nonzero terms, every class with ``k`` below the grid size
    gets a zero branch ``(k, k + 1)`` whose eigenfunction is a normalized
    null vector of the fiber.
    """
    m = spectrum.grid.size
    out = []
    for cls in spectrum.classes:
        for n, (f, g) in enumerate(zip(cls.eigenvalues, cls.vectors), start=1):
            out.append(Branch(cls.k, n, cls.mask, f.real, g))
        if cls.k < m and spectrum.null_vectors:
            out.append(Branch(cls.k, cls.k + 1, cls.mask,
                              StepFunction.zeros(spectrum.space.n_atoms),
                              cls.mask * spectrum.null_vectors[0]))
    return out


@dataclass
class SolvabilityWitness:
    """Nonzero idempotent ``pi`` with ``pi * lambda`` matching eigenvalue branches.

    ``branch`` is the branch covering the most atoms of ``pi`` (ties go to
    the lexicographically smallest index); ``atom_branches`` gives, per
    atom, the branch used there, or ``None`` off ``pi``. The eigenfunction
    mixes the branch eigenfunctions along that assignment.
    """

    pi: Idempotent
    branch: tuple
    eigenfunction: ModuleElement
    eigenvalue: StepFunction
    atom_branches: list
    max_gap: float


def _check_lambda(lam, spectrum):
    if len(lam) != spectrum.space.n_atoms:
        raise DimensionMismatchError("lambda and kernel differ in atom count")
    if not lam.is_real():
        raise KaplanskyError("lambda must be real-valued for a self-adjoint kernel")
    return lam.real


def match_branches(spectrum, lam, solve_tol=None):
    """Solvability witness for ``T f = lam f`` from a precomputed spectrum, or ``None``."""
    solve_tol = resolve("solve_tol", solve_tol)
    lam = _check_lambda(lam, spectrum)
    n_atoms = spectrum.space.n_atoms
    assigned = [None] * n_atoms
    gaps = np.full(n_atoms, np.inf)
    chosen = {}
    for br in spectral_branches(spectrum):
        gap = np.abs(lam.values - br.value.values)
        hit = br.mask.mask & (gap <= solve_tol)
        for a in np.flatnonzero(hit):
            if assigned[a] is None:
                assigned[a] = br.index
                gaps[a] = gap[a]
                chosen[br.index] = br
    pi = Idempotent([b is not None for b in assigned])
    if not pi.any():
        return None
    counts = {}
    for b in assigned:
        if b is not None:
            counts[b] = counts.get(b, 0) + 1
    dominant = min(counts, key=lambda b: (-counts[b], b))
    fibers = np.zeros((n_atoms, spectrum.grid.size), dtype=complex)
    values = np.zeros(n_atoms)
    for a, b in enumerate(assigned):
        if b is not None:
            fibers[a] = chosen[b].eigenfunction.fibers[a]
            values[a] = chosen[b].value.values[a]
    return SolvabilityWitness(
        pi=pi,
        branch=dominant,
        eigenfunction=ModuleElement(fibers, spectrum.space, spectrum.grid),
        eigenvalue=StepFunction(values),
        atom_branches=assigned,
        max_gap=float(np.max(gaps[pi.mask])),
    )


def check_solvable(K, lam, solve_tol=None, rank_tol=None):
    """Decide solvability of ``int_S k(t,s,w) f(s,w) ds = lam(w) f(t,w)``.

    Returns a :class:`SolvabilityWitness` or ``None`` when no branch
    comes within ``solve_tol`` of ``lam`` on any atom.
    """
    return match_branches(kernel_spectrum(K, rank_tol=rank_tol), lam, solve_tol)


def pie_residual(T, f, lam):
    """Module norm of ``T f - lam f``."""
    return module_norm(apply(T, f) - lam * f)


def solve_pie(K, lam, solve_tol=None, rank_tol=None):
    """Return a nonzero solution ``f`` supported on the witness idempotent.

    Raises :class:`NotSolvableError` if no witness exists and
    :class:`ToleranceInconsistencyError` if the witness fails the residual
    bound ``||T f - lam f|| <= 10 solve_tol ||T||``.
    """
    solve_tol = resolve("solve_tol", solve_tol)
    witness = check_solvable(K, lam, solve_tol=solve_tol, rank_tol=rank_tol)
    if witness is None:
        raise NotSolvableError("lambda matches no eigenvalue branch on any atom")
    T = build_operator(K)
    f = witness.eigenfunction
    check_witness(T, f, lam, witness, solve_tol)
    return f


def check_witness(T, f, lam, witness, solve_tol):
    """Residual and support checks shared by the solver and the CLI."""
    residual = pie_residual(T, f, lam)
    bound = 10 * solve_tol * T.norm()
    if residual > bound:
        raise ToleranceInconsistencyError(
            f"witness residual {residual:.3e} exceeds bound {bound:.3e}")
    if np.any(vector_norm(f).values[witness.pi.mask] == 0):
        raise ToleranceInconsistencyError("witness eigenfunction vanishes on part of pi")
    return residual
