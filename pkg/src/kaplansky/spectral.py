"""Fiberwise Schmidt and self-adjoint spectral decompositions.

A self-adjoint bundle operator is split into its positive and negative
parts, and the two nonincreasing eigenvalue sequences are merged into one
sequence ordered by modulus. The merge works on whole step functions: at
every stage a support idempotent decides, atom by atom, where the leading
remaining negative value is inserted, and values and vectors are spliced
with idempotent arithmetic. No per-atom sorting takes place in the merge.

Sequences are stored padded: a list of step functions ``f_1, f_2, ...``
in which an atom with only ``r`` nonzero terms carries zeros (and zero
vectors) from position ``r + 1`` on.
"""
from dataclasses import dataclass, field

import numpy as np

from ._config import resolve
from ._fibers import fiber_map
from .bundle import (
    BundleOperator,
    Idempotent,
    ModuleElement,
    PartitionOfUnity,
    StepFunction,
    apply,
    inner_product,
    module_norm,
    rank_one,
)
from .exceptions import (
    MalformedPartsError,
    NotPositiveError,
    NotSelfAdjointError,
)


def _fix_phase(vectors):
    """Rotate each column so its largest-modulus entry is real and positive.

    ``vectors`` has shape ``(n_atoms, m, k)``; ties go to the lowest index.
    """
    if vectors.shape[1] == 0 or vectors.shape[2] == 0:
        return vectors, np.ones(vectors.shape[::2], dtype=complex)
    idx = np.argmax(np.abs(vectors), axis=1)
    lead = np.take_along_axis(vectors, idx[:, None, :], axis=1)[:, 0, :]
    mag = np.abs(lead)
    phase = np.where(mag > 0, np.conj(lead) / np.where(mag > 0, mag, 1.0), 1.0)
    return vectors * phase[:, None, :], phase


def _reorthonormalize(values, vectors, tol):
    """Re-orthonormalize eigenvector columns inside near-degenerate clusters.

    ``values`` (sorted) and ``vectors`` belong to a single fiber.
    """
    k = values.shape[0]
    start = 0
    for stop in range(1, k + 1):
        if stop == k or values[stop] - values[stop - 1] >= tol:
            if stop - start > 1:
                q, _ = np.linalg.qr(vectors[:, start:stop])
                vectors[:, start:stop] = q
            start = stop
    return vectors


def _check_selfadjoint(T):
    T.check_finite()
    if not T.is_selfadjoint():
        raise NotSelfAdjointError(
            f"operator is not self-adjoint (residual {T.selfadjoint_residual():.3e})")


def _fiber_eigh(T, rank_tol, parallelism=None):
    """Per-fiber spectrum of a self-adjoint operator in the weighted inner product.

    Returns ascending eigenvalues ``(n_atoms, m)`` and eigenvectors
    ``(n_atoms, m, m)`` already mapped back to the grid representation.
    """
    B = T.hermitian_form()
    B = 0.5 * (B + np.conj(np.swapaxes(B, 1, 2)))

    def batch(B):
        lam, V = np.linalg.eigh(B)
        return lam, V

    lam, V = fiber_map(batch, B, parallelism=parallelism)
    V = V.copy()
    for a in range(lam.shape[0]):
        scale = np.max(np.abs(lam[a])) if lam.shape[1] else 0.0
        _reorthonormalize(lam[a], V[a], rank_tol * scale)
    V = V / np.sqrt(T.grid.w)[None, :, None]
    V, _ = _fix_phase(V)
    return lam, V


def _stack_to_sequence(values, vectors, space, grid):
    """``(n_atoms, k)`` values and ``(n_atoms, m, k)`` vectors to padded lists."""
    seq_values = [StepFunction(values[:, n]) for n in range(values.shape[1])]
    seq_vectors = [ModuleElement(vectors[:, :, n], space, grid) for n in range(vectors.shape[2])]
    return seq_values, seq_vectors


def _leading_nonzero_counts(values, what):
    """Count of nonzero terms per atom; they must form a prefix."""
    if values.shape[1] == 0:
        return np.zeros(values.shape[0], dtype=int)
    nonzero = values != 0
    counts = nonzero.sum(axis=1)
    prefix = np.arange(values.shape[1])[None, :] < counts[:, None]
    if not np.array_equal(nonzero, prefix):
        raise MalformedPartsError(f"{what}: zero terms must trail the nonzero ones")
    return counts


@dataclass
class SpectralClass:
    """The atoms of one rank class and the terms supported there."""

    k: int
    mask: Idempotent
    eigenvalues: list
    vectors: list


class _SequenceDecomposition:
    """Shared behaviour of padded decompositions."""

    def _values_matrix(self):
        n_atoms = self.space.n_atoms
        if not self.values:
            return np.zeros((n_atoms, 0))
        return np.stack([f.values for f in self.values], axis=1)

    @property
    def ranks(self):
        return _leading_nonzero_counts(self._values_matrix(), "sequence")

    @property
    def rank_partition(self):
        return PartitionOfUnity.from_labels(self.ranks)


class CyclicDecomposition(_SequenceDecomposition):
    """Rank partition, singular value step functions and two orthonormal families.

    ``T = sum_k pi_k sum_{n<=k} f_{k,n} xi_{k,n} (x) eta_{k,n}``.
    """

    def __init__(self, values, left, right, space, grid, left_null=()):
        self.values = list(values)
        self.left = list(left)
        self.right = list(right)
        self.left_null = list(left_null)
        self.space = space
        self.grid = grid

    @property
    def classes(self):
        out = []
        for k, pi in zip(self.rank_partition.labels, self.rank_partition.parts):
            out.append(SpectralClass(
                k, pi,
                [pi * self.values[n] for n in range(k)],
                [(pi * self.left[n], pi * self.right[n]) for n in range(k)],
            ))
        return out

    def reconstruct(self):
        T = BundleOperator.zeros(self.space, self.grid)
        for f, xi, eta in zip(self.values, self.left, self.right):
            T = T + f * rank_one(xi, eta)
        return T


class SpectralDecomposition(_SequenceDecomposition):
    """Real eigenvalue step functions ordered by modulus, with one orthonormal family.

    ``values[n]`` is ``f_{n+1}`` on every atom; on an atom of rank ``k`` the
    first ``k`` values are nonzero with ``|f_1| >= ... >= |f_k|`` and the
    rest are zero. ``null_vectors`` completes each fiber to an orthonormal
    basis (``m - k`` of them are nonzero on an atom of rank ``k``).
    ``merge_trace`` holds the support idempotents used by each merge step.
    """

    def __init__(self, values, vectors, space, grid, null_vectors=(), merge_trace=()):
        self.values = list(values)
        self.vectors = list(vectors)
        if len(self.values) != len(self.vectors):
            raise MalformedPartsError("values and vectors differ in length")
        self.null_vectors = list(null_vectors)
        self.space = space
        self.grid = grid
        self.merge_trace = list(merge_trace)
        self.ranks  # noqa: B018 - validates the prefix structure

    @property
    def classes(self):
        out = []
        for k, pi in zip(self.rank_partition.labels, self.rank_partition.parts):
            out.append(SpectralClass(
                k, pi,
                [pi * self.values[n] for n in range(k)],
                [pi * self.vectors[n] for n in range(k)],
            ))
        return out

    def eigenvalue_matrix(self):
        """``(n_atoms, N)`` array of the padded eigenvalue sequence."""
        return self._values_matrix().real

    def vector_stack(self):
        """``(n_atoms, m, N)`` array of the padded eigenvector sequence."""
        if not self.vectors:
            return np.zeros((self.space.n_atoms, self.grid.size, 0), dtype=complex)
        return np.stack([v.fibers for v in self.vectors], axis=2)

    def reconstruct(self):
        T = BundleOperator.zeros(self.space, self.grid)
        for f, xi in zip(self.values, self.vectors):
            T = T + f * rank_one(xi, xi)
        return T

    def residual(self, T):
        """Module operator norm of ``T`` minus the reassembled series."""
        return (T - self.reconstruct()).norm()


@dataclass
class SignedSequencePair:
    """Eigen-data of ``T_+`` and ``T_-`` with ``T = T_+ - T_-``.

    Both value lists hold nonnegative step functions, nonincreasing per
    atom, zero-padded (with zero vectors) past each atom's count.
    """

    pos_values: list
    pos_vectors: list
    neg_values: list
    neg_vectors: list
    space: object
    grid: object
    null_vectors: list = field(default_factory=list)

    def validate(self, atol=None):
        atol = resolve("equality_tol", atol)
        for name, values, vectors in (("pos", self.pos_values, self.pos_vectors),
                                      ("neg", self.neg_values, self.neg_vectors)):
            if len(values) != len(vectors):
                raise MalformedPartsError(f"{name}: values and vectors differ in length")
            if not values:
                continue
            mat = np.stack([f.values for f in values], axis=1)
            if np.iscomplexobj(mat) and np.any(mat.imag != 0):
                raise MalformedPartsError(f"{name}: values must be real")
            mat = mat.real
            if np.any(mat < 0):
                raise MalformedPartsError(f"{name}: values must be positive")
            if np.any(np.diff(mat, axis=1) > 0):
                raise MalformedPartsError(f"{name}: values must be nonincreasing per atom")
            _leading_nonzero_counts(mat, name)
            for f, xi in zip(values, vectors):
                dead = ~f.support()
                if np.any(np.abs((dead * xi).fibers) > 0):
                    raise MalformedPartsError(f"{name}: padding terms must carry zero vectors")
        for xp in self.pos_vectors:
            for xn in self.neg_vectors:
                if inner_product(xp, xn).sup() > atol:
                    raise MalformedPartsError("positive and negative families are not orthogonal")
        return self

    def operator(self):
        """``T_+ - T_-`` reassembled from the two families."""
        T = BundleOperator.zeros(self.space, self.grid)
        for f, xi in zip(self.pos_values, self.pos_vectors):
            T = T + f * rank_one(xi, xi)
        for f, xi in zip(self.neg_values, self.neg_vectors):
            T = T - f * rank_one(xi, xi)
        return T


@dataclass
class MergeStep:
    """Record of inserting one negative term: the support chain and both sequences."""

    z: list
    before: list
    after: list


def cyclic_schmidt(T, rank_tol=None, parallelism=None):
    """Fiberwise Schmidt decomposition grouped into rank classes.

    Singular values at or below ``rank_tol`` times the largest singular
    value of their fiber are treated as zero.
    """
    rank_tol = resolve("rank_tol", rank_tol)
    if not rank_tol > 0:
        raise ValueError("rank_tol must be strictly positive")
    T.check_finite()
    space, grid = T.space, T.grid
    r = np.sqrt(grid.w)
    U, s, Vh = fiber_map(lambda B: np.linalg.svd(B), T.hermitian_form(), parallelism=parallelism)
    U = U / r[None, :, None]
    V = np.conj(np.swapaxes(Vh, 1, 2)) / r[None, :, None]
    U, phase = _fix_phase(U)
    V = V * phase[:, None, :]

    smax = s[:, :1] if s.shape[1] else np.zeros((space.n_atoms, 1))
    keep = s > rank_tol * smax
    counts = keep.sum(axis=1)
    width = int(counts.max()) if counts.size else 0
    vals = np.where(keep, s, 0.0)[:, :width]
    left = np.where(keep[:, None, :], U, 0.0)[:, :, :width]
    right = np.where(keep[:, None, :], V, 0.0)[:, :, :width]
    null = _null_columns(U, counts)
    values, left_seq = _stack_to_sequence(vals, left, space, grid)
    _, right_seq = _stack_to_sequence(vals, right, space, grid)
    _, null_seq = _stack_to_sequence(np.zeros(null.shape[::2]), null, space, grid)
    return CyclicDecomposition(values, left_seq, right_seq, space, grid, left_null=null_seq)


def _null_columns(columns, counts):
    """Left-align the columns past each atom's rank: ``(n_atoms, m, m - min rank)``."""
    n_atoms, m, total = columns.shape
    width = total - int(counts.min()) if n_atoms else 0
    out = np.zeros((n_atoms, m, width), dtype=complex)
    for a in range(n_atoms):
        extra = columns[a, :, counts[a]:]
        out[a, :, :extra.shape[1]] = extra
    return out


def positive_selfadjoint_form(T, rank_tol=None, parallelism=None):
    """Spectral form of a positive operator, read off its Schmidt decomposition.

    For ``T >= 0`` we have ``T = sqrt(T T*)`` and ``T T* = sum f_n^2 xi_n (x) xi_n``,
    so the left Schmidt family alone diagonalizes ``T``.
    """
    rank_tol = resolve("rank_tol", rank_tol)
    _check_selfadjoint(T)
    B = T.hermitian_form()
    lam = np.linalg.eigvalsh(0.5 * (B + np.conj(np.swapaxes(B, 1, 2))))
    if lam.size:
        scale = np.max(np.abs(lam), axis=1)
        worst = lam[:, 0] / np.where(scale > 0, scale, 1.0)
        if np.any(worst < -rank_tol):
            a = int(np.argmin(worst))
            raise NotPositiveError(
                f"operator is not positive: fiber {a} has eigenvalue {lam[a, 0]:.3e}")
    dec = cyclic_schmidt(T, rank_tol=rank_tol, parallelism=parallelism)
    return SpectralDecomposition(dec.values, dec.left, T.space, T.grid,
                                 null_vectors=dec.left_null)


def split_parts(T, rank_tol=None, parallelism=None):
    """Eigen-data of the positive and negative parts of a self-adjoint ``T``.

    Eigenvalues with modulus at or below ``rank_tol`` times the largest
    modulus in their fiber are dropped; their eigenvectors are kept as
    ``null_vectors``.
    """
    rank_tol = resolve("rank_tol", rank_tol)
    if not rank_tol > 0:
        raise ValueError("rank_tol must be strictly positive")
    _check_selfadjoint(T)
    space, grid = T.space, T.grid
    n_atoms, m = space.n_atoms, grid.size
    lam, V = _fiber_eigh(T, rank_tol, parallelism)
    scale = np.max(np.abs(lam), axis=1, keepdims=True) if m else np.zeros((n_atoms, 1))
    thr = rank_tol * scale
    pos_mask = lam > thr
    neg_mask = lam < -thr
    n_pos = pos_mask.sum(axis=1)
    n_neg = neg_mask.sum(axis=1)
    n_null = m - n_pos - n_neg
    P = int(n_pos.max()) if n_atoms else 0
    Q = int(n_neg.max()) if n_atoms else 0
    N0 = int(n_null.max()) if n_atoms else 0
    pos_vals = np.zeros((n_atoms, P))
    neg_vals = np.zeros((n_atoms, Q))
    pos_vecs = np.zeros((n_atoms, m, P), dtype=complex)
    neg_vecs = np.zeros((n_atoms, m, Q), dtype=complex)
    null_vecs = np.zeros((n_atoms, m, N0), dtype=complex)
    for a in range(n_atoms):
        # eigh is ascending: positives read from the top, negatives from the bottom
        ip = np.flatnonzero(pos_mask[a])[::-1]
        ineg = np.flatnonzero(neg_mask[a])
        inull = np.flatnonzero(~(pos_mask[a] | neg_mask[a]))
        inull = inull[np.argsort(np.abs(lam[a, inull]), kind="stable")]
        pos_vals[a, :ip.size] = lam[a, ip]
        pos_vecs[a, :, :ip.size] = V[a][:, ip]
        neg_vals[a, :ineg.size] = -lam[a, ineg]
        neg_vecs[a, :, :ineg.size] = V[a][:, ineg]
        null_vecs[a, :, :inull.size] = V[a][:, inull]
    pv, px = _stack_to_sequence(pos_vals, pos_vecs, space, grid)
    nv, nx = _stack_to_sequence(neg_vals, neg_vecs, space, grid)
    _, zx = _stack_to_sequence(np.zeros((n_atoms, N0)), null_vecs, space, grid)
    return SignedSequencePair(pv, px, nv, nx, space, grid, null_vectors=zx)


def _splice(values, vectors, f, eta):
    """Insert ``-f`` (vector ``eta``) into a signed sequence ordered by modulus.

    With ``z_n = c((f - |g_n|)_+)``, the atoms where ``f`` beats the n-th
    term, the new sequence is

        g'_1 = -z_1 f + z_1^perp g_1
        g'_n = z_{n-1} g_{n-1} - (z_n - z_{n-1}) f + z_n^perp g_n,   n >= 2

    and likewise for the vectors with ``+eta``. Equal moduli leave ``z``
    unset, so the term already present stays in front.
    """
    n_atoms = len(f)
    zero = StepFunction.zeros(n_atoms)
    g = list(values) + [zero]
    xi = list(vectors) + [ModuleElement.zeros(eta.space, eta.grid)]
    z = [(f - abs(gn)).positive_part().support() for gn in g]
    new_values, new_vectors = [], []
    for n in range(len(g)):
        if n == 0:
            new_values.append(-(z[0] * f) + z[0].perp * g[0])
            new_vectors.append(z[0] * eta + z[0].perp * xi[0])
        else:
            inserted = z[n] - z[n - 1]
            new_values.append(z[n - 1] * g[n - 1] - inserted * f + z[n].perp * g[n])
            new_vectors.append(z[n - 1] * xi[n - 1] + inserted * eta + z[n].perp * xi[n])
    return new_values, new_vectors, MergeStep(z=z, before=g, after=new_values)


def selfadjoint_merge(parts):
    """Merge positive and negative eigen-data into one modulus-ordered sequence.

    Negative terms are inserted one at a time, largest first, by
    :func:`_splice`; each insertion is recorded in ``merge_trace``.
    """
    parts.validate()
    values = list(parts.pos_values)
    vectors = list(parts.pos_vectors)
    trace = []
    for f, eta in zip(parts.neg_values, parts.neg_vectors):
        values, vectors, step = _splice(values, vectors, f, eta)
        trace.append(step)
    while values and not values[-1].support().any():
        values.pop()
        vectors.pop()
    return SpectralDecomposition(values, vectors, parts.space, parts.grid,
                                 null_vectors=parts.null_vectors, merge_trace=trace)


def eigendecompose(T, rank_tol=None, parallelism=None):
    """Spectral representation ``T = sum_k pi_k sum_n f_{k,n} xi_{k,n} (x) xi_{k,n}``."""
    return selfadjoint_merge(split_parts(T, rank_tol=rank_tol, parallelism=parallelism))


@dataclass
class MergeIdentityReport:
    test_vector_deviation: float
    random_deviation: float
    n_test_vectors: int
    n_random: int
    tol: float

    @property
    def max_deviation(self):
        return max(self.test_vector_deviation, self.random_deviation)

    @property
    def passed(self):
        return self.max_deviation <= self.tol


def verify_merge_identity(parts, merged, n_random=8, seed=0, tol=1e-12):
    """Compare ``T_+ - T_-`` with the merged series on probe vectors.

    The probes are every input eigenvector plus ``n_random`` Gaussian
    elements scaled to unit module norm. Deviations are module norms of
    the difference of the two images, relative to the operator norm.
    """
    before = parts.operator()
    after = merged.reconstruct()
    scale = max(before.norm(), np.finfo(float).tiny)
    probes = [x for x in list(parts.pos_vectors) + list(parts.neg_vectors)
              if module_norm(x) > 0]
    dev_probe = max((module_norm(apply(before, x) - apply(after, x)) for x in probes),
                    default=0.0)
    rng = np.random.default_rng(seed)
    dev_random = 0.0
    shape = (parts.space.n_atoms, parts.grid.size)
    for _ in range(n_random if shape[1] else 0):
        x = ModuleElement(rng.standard_normal(shape) + 1j * rng.standard_normal(shape),
                          parts.space, parts.grid)
        x = x * (1.0 / module_norm(x))
        dev_random = max(dev_random, module_norm(apply(before, x) - apply(after, x)))
    return MergeIdentityReport(dev_probe / scale, dev_random / scale,
                               len(probes), n_random, tol)
