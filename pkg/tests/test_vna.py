import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kaplansky import (
    Idempotent,
    MatrixField,
    MeasureSpace,
    ProjectionField,
    StepFunction,
    diagonalize,
    homogeneous_decomposition,
    left_support,
    to_diagonal_matrix,
    truncation_projection,
)
from kaplansky.exceptions import NotProjectionError, NotSelfAdjointError
from kaplansky.vna import finite_certificate

from oracles import random_hermitian


def field(*matrices):
    return MatrixField(np.array(matrices, dtype=complex))


def fiber_norm(M):
    return np.linalg.norm(M, 2)


class TestProjectionField:
    def test_rejects_non_projection(self):
        with pytest.raises(NotProjectionError):
            ProjectionField(np.array([[[1.0, 1.0], [0.0, 0.0]]]))

    def test_ranks(self):
        p = ProjectionField(np.array([np.diag([1.0, 0, 0]), np.diag([1.0, 1, 0])]))
        assert p.ranks().tolist() == [1, 2]


class TestLeftSupport:
    def test_zero(self):
        assert np.all(left_support(MatrixField.zeros(MeasureSpace.uniform(2), 3)).matrices == 0)

    def test_invertible(self, rng):
        y = MatrixField(rng.standard_normal((3, 4, 4)))
        assert np.allclose(left_support(y).matrices, np.eye(4), atol=1e-12)

    def test_rank_one_column(self, rng):
        c = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        r = rng.standard_normal((3, 4))
        y = MatrixField(c[:, :, None] * r[:, None, :])
        expected = np.array([np.outer(v, v.conj()) / np.vdot(v, v).real for v in c])
        assert np.allclose(left_support(y).matrices, expected, atol=1e-12)

    def test_minimality(self, rng):
        n = 5
        for _ in range(10):
            A = rng.standard_normal((2, n, 2)) + 1j * rng.standard_normal((2, n, 2))
            y = MatrixField(A @ (rng.standard_normal((2, 2, n))))
            ly = left_support(y)
            assert ((ly @ y) - y).norm() <= 1e-12 * y.norm()
            # any projection containing the column space plus an extra direction dominates l(y)
            extra = rng.standard_normal((2, n, 1))
            Q, _ = np.linalg.qr(np.concatenate([A, extra], axis=2))
            q = MatrixField(Q @ np.conj(np.swapaxes(Q, 1, 2)))
            assert ((q @ y) - y).norm() <= 1e-12 * y.norm()
            gap = (q - ly).matrices
            assert np.all(np.linalg.eigvalsh(gap) >= -1e-12)


class TestHomogeneousDecomposition:
    def test_identity(self):
        part = homogeneous_decomposition(ProjectionField(np.broadcast_to(np.eye(3), (2, 3, 3))))
        assert part.labels == (3,)

    def test_zero(self):
        assert homogeneous_decomposition(ProjectionField(np.zeros((2, 3, 3)))).labels == (0,)

    def test_mixed_ranks(self):
        p = ProjectionField(np.array([np.diag([1.0, 0, 0]), np.diag([0, 1.0, 1])]))
        part = homogeneous_decomposition(p)
        assert part[1] == Idempotent([1, 0])
        assert part[2] == Idempotent([0, 1])


class TestTruncation:
    def test_zero(self):
        p = truncation_projection(MatrixField.zeros(MeasureSpace.uniform(2), 3), 0.5)
        assert np.allclose(p.matrices, np.eye(3))

    def test_identity(self):
        p = truncation_projection(MatrixField.identity(MeasureSpace.uniform(2), 3), 0.5)
        assert np.all(np.abs(p.matrices) < 1e-15)

    def test_small_direction(self, rng):
        Q1, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        Q2, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        x = field(Q1 @ np.diag([3.0, 0.1]) @ Q2.T)
        p = truncation_projection(x, 0.5)
        v = Q2[:, 1]
        assert np.allclose(p.matrices[0], np.outer(v, v), atol=1e-12)
        assert (x @ p).norm() == pytest.approx(0.1, abs=1e-12)
        assert finite_certificate(p).labels == (1,)

    def test_boundary_is_strict(self):
        x = field(np.diag([2.0, 1.0]))
        p = truncation_projection(x, 1.0)
        assert np.allclose(p.matrices[0], 0)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            truncation_projection(field(np.eye(2)), 0.0)


class TestDiagonalize:
    def test_zero(self):
        form = diagonalize(MatrixField.zeros(MeasureSpace.uniform(3), 2))
        assert form.central_partition.labels == (0,)
        assert form.classes[0].values == []

    def test_central_element(self):
        c = StepFunction([2.0, -1.5, 0.5])
        form = diagonalize(MatrixField.central(c, 3))
        assert form.central_partition.labels == (3,)
        (cls,) = form.classes
        for f in cls.values:
            assert f.allclose(c, atol=1e-13)
        for p in cls.projections:
            assert np.allclose(p.trace().values, 1.0)

    def test_two_classes(self):
        form = diagonalize(field(np.diag([3.0, -2.0]), np.diag([1.0, 0.0])))
        z = form.central_partition
        assert z[2] == Idempotent([1, 0]) and z[1] == Idempotent([0, 1])
        cls2 = [c for c in form.classes if c.k == 2][0]
        assert [f.values[0] for f in cls2.values] == pytest.approx([3, -2])
        cls1 = [c for c in form.classes if c.k == 1][0]
        assert cls1.values[0].values[1] == pytest.approx(1)

    def test_rejects_non_selfadjoint(self):
        with pytest.raises(NotSelfAdjointError):
            diagonalize(field([[0, 1], [0, 0]]))


class TestToDiagonalMatrix:
    def test_already_diagonal(self):
        x = field(np.diag([4.0, -3.0, 1.0]))
        D, U = to_diagonal_matrix(diagonalize(x))
        assert np.allclose(np.abs(U.matrices[0]), np.eye(3))
        assert np.allclose(D.matrices, x.matrices)

    def test_swap(self):
        D, U = to_diagonal_matrix(diagonalize(field([[0, 1], [1, 0]])))
        assert np.allclose(D.matrices[0], np.diag([1, -1]), atol=1e-14)
        s = 1 / np.sqrt(2)
        assert np.allclose(np.abs(U.matrices[0]), s, atol=1e-14)
        assert np.allclose(U.matrices[0][:, 0], [s, s], atol=1e-14)

    def test_rank_deficient_completion(self):
        x = field(np.array([[1.0, 1.0], [1.0, 1.0]]))
        D, U = to_diagonal_matrix(diagonalize(x))
        assert np.allclose(D.matrices[0], np.diag([2.0, 0.0]), atol=1e-14)
        assert np.allclose(U.adjoint().matrices[0] @ U.matrices[0], np.eye(2), atol=1e-14)


@st.composite
def hermitian_fields(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n_atoms = draw(st.integers(1, 8))
    n = draw(st.integers(1, 6))
    rng = np.random.default_rng(seed)
    return MatrixField(random_hermitian(rng, (n_atoms, n)))


@settings(max_examples=60, deadline=None)
@given(hermitian_fields())
def test_diagonal_form_invariants(x):
    form = diagonalize(x)
    D, U = to_diagonal_matrix(form)
    n = x.dim
    for a in range(x.space.n_atoms):
        Ua, Da, xa = U.matrices[a], D.matrices[a], x.matrices[a]
        assert fiber_norm(Ua.conj().T @ xa @ Ua - Da) <= 1e-11 * max(1.0, fiber_norm(xa))
        assert fiber_norm(Ua.conj().T @ Ua - np.eye(n)) <= 1e-12
    assert (x - form.reconstruct()).norm() <= 1e-10 * x.norm()
    for cls in form.classes:
        for i, p in enumerate(cls.projections):
            assert np.allclose(p.trace().values, cls.mask.mask.astype(float), atol=1e-12)
            for j, q in enumerate(cls.projections):
                if i != j:
                    assert (p @ q).norm() <= 1e-12
        for f, p in zip(cls.values, cls.projections):
            # central scalars act atomwise, so they commute exactly
            assert np.array_equal((f * p).matrices, (p * f).matrices)


@settings(max_examples=40, deadline=None)
@given(hermitian_fields(), st.integers(0, 6))
def test_truncation_contract(x, k):
    eps = 10.0 ** (-k)
    p = truncation_projection(x, eps)
    s = np.linalg.svd(x.matrices, compute_uv=False)
    assert (x @ p).norm() < eps
    complement = MatrixField.identity(x.space, x.dim) - p
    ranks = np.rint(complement.trace().values.real).astype(int)
    assert ranks.tolist() == (s >= eps).sum(axis=1).tolist()
