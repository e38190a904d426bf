"""Exit criteria for the package, one test per criterion.

Each test logs a ``PASS``/``FAIL`` line (shown in the terminal summary)
before asserting.
"""
import json
import time

import numpy as np
import pytest

from kaplansky import (
    BundleOperator,
    KernelBundle,
    MatrixField,
    ModuleElement,
    PartitionOfUnity,
    StepFunction,
    adjoint,
    apply,
    build_operator,
    check_solvable,
    diagonalize,
    inner_product,
    kernel_spectrum,
    mix,
    rank_one,
    selfadjoint_merge,
    split_parts,
    to_diagonal_matrix,
    truncation_projection,
    verify_merge_identity,
)
from kaplansky import io
from kaplansky.cli import main
from kaplansky.pie import pie_residual, spectral_branches

from oracles import (
    fiber_eigenvalues,
    oracle_signed_sequences,
    random_element,
    random_grid,
    random_hermitian,
    random_kernel_samples,
    random_selfadjoint_operator,
    random_space,
)

SOLVE_TOL = 1e-8


def _log(log, number, ok, detail):
    log(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def _corpus(seed, count, atoms=(2, 8), dims=(2, 6)):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n_atoms = int(rng.integers(atoms[0], atoms[1] + 1))
        m = int(rng.integers(dims[0], dims[1] + 1))
        yield random_selfadjoint_operator(rng, n_atoms, m)


@pytest.fixture(scope="module")
def merge_corpus():
    """500 self-adjoint bundles and their merged decompositions (timed)."""
    ops = list(_corpus(1, 500))
    start = time.perf_counter()
    decs = [selfadjoint_merge(split_parts(T)) for T in ops]
    return ops, decs, time.perf_counter() - start


def test_1_merge_oracle_equivalence(merge_corpus, acceptance_log):
    ops, decs, elapsed = merge_corpus
    start = time.perf_counter()
    mismatches = 0
    worst = 0.0
    for T, dec in zip(ops, decs):
        got = dec.eigenvalue_matrix()
        for a, seq in enumerate(oracle_signed_sequences(T)):
            row = got[a, :len(seq)]
            same_order = np.array_equal(np.sign(row), np.sign(seq)) and np.all(got[a, len(seq):] == 0)
            err = float(np.max(np.abs(row - seq), initial=0.0))
            worst = max(worst, err)
            mismatches += (not same_order) or err > 1e-12
    elapsed += time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    _log(acceptance_log, 1, ok,
         f"merge vs oracle on 500 bundles: {mismatches} mismatches, max |diff| {worst:.2e}, "
         f"{elapsed:.2f}s")
    assert mismatches == 0
    assert elapsed < 10


def test_2_selfadjoint_reconstruction(merge_corpus, acceptance_log):
    ops, decs, _ = merge_corpus
    worst_rel = worst_orth = 0.0
    monotone = True
    for T, dec in zip(ops, decs):
        worst_rel = max(worst_rel, dec.residual(T) / T.norm())
        monotone &= bool(np.all(np.diff(np.abs(dec.eigenvalue_matrix()), axis=1) <= 0))
        for cls in dec.classes:
            for i, xi in enumerate(cls.vectors):
                for j, eta in enumerate(cls.vectors):
                    target = cls.mask.as_step() * float(i == j)
                    worst_orth = max(worst_orth, (inner_product(xi, eta) - target).sup())
    ok = worst_rel <= 1e-10 and monotone and worst_orth <= 1e-12
    _log(acceptance_log, 2, ok,
         f"reconstruction rel {worst_rel:.2e} (<=1e-10), monotone={monotone}, "
         f"orthonormality {worst_orth:.2e} (<=1e-12)")
    assert ok


def test_3_proof_identities(acceptance_log):
    chain_ok = cases_ok = True
    worst = 0.0
    n_steps = 0
    for T in _corpus(3, 100):
        parts = split_parts(T)
        dec = selfadjoint_merge(parts)
        for step in dec.merge_trace:
            n_steps += 1
            chain_ok &= all(lo <= hi for lo, hi in zip(step.z, step.z[1:]))
            after = [abs(f) for f in step.after]
            for n in range(len(after) - 1):
                if n == 0:
                    cases = [step.z[0], step.z[0].perp]
                else:
                    cases = [step.z[n - 1], step.z[n] - step.z[n - 1], step.z[n].perp]
                for z in cases:
                    cases_ok &= bool(np.all((z * after[n]).values >= (z * after[n + 1]).values))
        worst = max(worst, verify_merge_identity(parts, dec).test_vector_deviation)
    ok = chain_ok and cases_ok and worst <= 1e-12
    _log(acceptance_log, 3, ok,
         f"{n_steps} merge steps: chain={chain_ok}, case inequalities={cases_ok}, "
         f"merge identity deviation {worst:.2e} (<=1e-12)")
    assert ok


def _lambda_candidates(rng, spectrum, eig, on_branch):
    n_atoms = spectrum.space.n_atoms
    if on_branch:
        branches = spectral_branches(spectrum)
        br = branches[int(rng.integers(len(branches)))]
        base = br.value.values.real.copy()
        # off the branch's class, pick an arbitrary eigenvalue of that fiber
        others = eig[np.arange(n_atoms), rng.integers(0, eig.shape[1], n_atoms)]
        base[~br.mask.mask] = others[~br.mask.mask]
        return base + rng.choice([-1.0, 1.0], n_atoms) * SOLVE_TOL / 10
    picks = eig[np.arange(n_atoms), rng.integers(0, eig.shape[1], n_atoms)]
    offset = SOLVE_TOL * rng.uniform(10, 1e4, n_atoms) * rng.choice([-1.0, 1.0], n_atoms)
    return picks + offset


def test_4_solvability_soundness_completeness(acceptance_log):
    rng = np.random.default_rng(4)
    disagreements = residual_failures = solvable_count = 0
    for trial in range(200):
        n_atoms = int(rng.integers(1, 7))
        m = int(rng.integers(1, 9))
        space, grid = random_space(rng, n_atoms), random_grid(rng, m)
        K = KernelBundle(random_kernel_samples(rng, n_atoms, m), space, grid, True)
        T = build_operator(K)
        spectrum = kernel_spectrum(K)
        eig = fiber_eigenvalues(T)
        lam = _lambda_candidates(rng, spectrum, eig, on_branch=trial % 2 == 0)
        expected = np.array([np.any(np.abs(lam[a] - eig[a]) <= SOLVE_TOL) for a in range(n_atoms)])
        witness = check_solvable(K, StepFunction(lam), solve_tol=SOLVE_TOL)
        if witness is None:
            disagreements += bool(expected.any())
            continue
        solvable_count += 1
        disagreements += witness.pi.mask.tolist() != expected.tolist()
        bound = 10 * SOLVE_TOL * T.norm()
        residual_failures += pie_residual(T, witness.eigenfunction, StepFunction(lam)) > bound
    ok = disagreements == 0 and residual_failures == 0
    _log(acceptance_log, 4, ok,
         f"200 kernels ({solvable_count} solvable): {disagreements} oracle disagreements, "
         f"{residual_failures} residual failures")
    assert ok


def test_5_separable_kernel_structure(acceptance_log):
    rng = np.random.default_rng(5)
    space, grid = random_space(rng, 5), random_grid(rng, 7)
    w = np.asarray(grid.quad_weights)
    pairs = []
    for _ in range(space.n_atoms):
        G = rng.standard_normal((grid.size, 2)) + 1j * rng.standard_normal((grid.size, 2))
        Q, _ = np.linalg.qr(np.sqrt(w)[:, None] * G)
        pairs.append(Q / np.sqrt(w)[:, None])
    pairs = np.array(pairs)
    phi1 = ModuleElement(pairs[:, :, 0], space, grid)
    phi2 = ModuleElement(pairs[:, :, 1], space, grid)

    def outer(f):
        return f.fibers[:, :, None] * np.conj(f.fibers[:, None, :])

    K = KernelBundle(2 * outer(phi1) - 3 * outer(phi2), space, grid, True)
    spec = kernel_spectrum(K)
    values = spec.eigenvalue_matrix()
    value_err = float(np.max(np.abs(values - [-3.0, 2.0])))

    def phase_distance(g, phi):
        # remove the best per-atom phase, then measure what is left
        c = inner_product(g, phi).values
        aligned = g * StepFunction(np.conj(c) / np.abs(c))
        return float(np.max(np.abs((aligned - phi).fibers)))

    vec_err = max(phase_distance(spec.vectors[0], phi2), phase_distance(spec.vectors[1], phi1))
    ok = spec.rank_partition.labels == (2,) and value_err <= 1e-10 and vec_err <= 1e-10
    _log(acceptance_log, 5, ok,
         f"branches {values[0].round(12).tolist()} (expect [-3, 2]), value err {value_err:.1e}, "
         f"eigenfunction err {vec_err:.1e}")
    assert ok


def test_6_central_diagonal_form(acceptance_log):
    rng = np.random.default_rng(6)
    worst_res = worst_unit = worst_rec = 0.0
    abelian = True
    for _ in range(200):
        n_atoms = int(rng.integers(1, 9))
        n = int(rng.integers(1, 7))
        x = MatrixField(random_hermitian(rng, (n_atoms, n)))
        form = diagonalize(x)
        D, U = to_diagonal_matrix(form)
        for a in range(n_atoms):
            Ua = U.matrices[a]
            worst_res = max(worst_res, np.linalg.norm(Ua.conj().T @ x.matrices[a] @ Ua - D.matrices[a], 2))
            worst_unit = max(worst_unit, np.linalg.norm(Ua.conj().T @ Ua - np.eye(n), 2))
        worst_rec = max(worst_rec, (x - form.reconstruct()).norm() / x.norm())
        for cls in form.classes:
            for p in cls.projections:
                ranks = np.linalg.matrix_rank(p.matrices[cls.mask.mask], tol=1e-8)
                abelian &= bool(np.all(ranks == 1))
    ok = worst_res <= 1e-11 and worst_unit <= 1e-12 and worst_rec <= 1e-10 and abelian
    _log(acceptance_log, 6, ok,
         f"U*xU-D {worst_res:.1e} (<=1e-11), U*U-1 {worst_unit:.1e} (<=1e-12), "
         f"reconstruction {worst_rec:.1e} (<=1e-10), abelian rank-one={abelian}")
    assert ok


def test_7_truncation(acceptance_log):
    rng = np.random.default_rng(7)
    failures = 0
    checks = 0
    for _ in range(30):
        n_atoms = int(rng.integers(1, 9))
        n = int(rng.integers(1, 7))
        x = MatrixField(rng.standard_normal((n_atoms, n, n)) + 1j * rng.standard_normal((n_atoms, n, n)))
        # spread singular values over many decades so each eps cuts somewhere
        U, _, Vh = np.linalg.svd(x.matrices)
        s = 10.0 ** rng.uniform(-7, 1, (n_atoms, n))
        x = MatrixField(U @ (s[:, :, None] * Vh))
        s_oracle = np.linalg.svd(x.matrices, compute_uv=False)
        for k in range(7):
            eps = 10.0 ** (-k)
            p = truncation_projection(x, eps)
            rank_c = np.rint(np.trace(np.eye(n) - p.matrices, axis1=1, axis2=2).real).astype(int)
            checks += 1
            failures += not ((x @ p).norm() < eps
                             and rank_c.tolist() == (s_oracle >= eps).sum(axis=1).tolist())
    ok = failures == 0
    _log(acceptance_log, 7, ok, f"{checks} (field, eps) pairs: {failures} failures")
    assert ok


def test_8_module_axioms(acceptance_log):
    rng = np.random.default_rng(8)
    worst = 0.0
    splice_exact = True
    for _ in range(100):
        n_atoms = int(rng.integers(1, 9))
        m = int(rng.integers(1, 7))
        space, grid = random_space(rng, n_atoms), random_grid(rng, m)
        xi, eta, zeta = (random_element(rng, space, grid) for _ in range(3))
        a = StepFunction(rng.standard_normal(n_atoms) + 1j * rng.standard_normal(n_atoms))
        scale = max(1.0, *(np.max(inner_product(v, v).values.real) for v in (xi, eta, zeta)))
        ip = inner_product
        T = BundleOperator(rng.standard_normal((n_atoms, m, m)) + 1j * rng.standard_normal((n_atoms, m, m)),
                           space, grid)
        rank_one_defect = np.abs((apply(rank_one(xi, eta), zeta) - ip(zeta, eta) * xi).fibers).max()
        errs = [
            max(0.0, -float(np.min(ip(xi, xi).values.real))) / scale,
            float(np.max(np.abs(ip(xi, xi).values.imag))) / scale,
            (ip(xi, eta) - ip(eta, xi).conj()).sup() / scale,
            (ip(a * xi, eta) - a * ip(xi, eta)).sup() / (scale * max(1.0, a.sup())),
            (ip(xi + eta, zeta) - ip(xi, zeta) - ip(eta, zeta)).sup() / scale,
            rank_one_defect / scale ** 1.5,
            float(np.max(np.abs((adjoint(adjoint(T)) - T).fiber_maps))) / max(1.0, T.norm()),
        ]
        worst = max(worst, *errs)
        labels = rng.integers(0, 3, n_atoms)
        partition = PartitionOfUnity.from_labels(labels)
        elements = [random_element(rng, space, grid) for _ in partition]
        out = mix(partition, elements)
        splice_exact &= all(np.array_equal((p * out).fibers, (p * e).fibers)
                            for p, e in zip(partition, elements))
    ok = worst <= 1e-13 and splice_exact
    _log(acceptance_log, 8, ok, f"100 random bundles: worst relative axiom defect {worst:.1e} "
                                f"(<=1e-13), mix splice exact={splice_exact}")
    assert ok


def test_9_cli_determinism_round_trip(tmp_path, acceptance_log, capsys):
    rng = np.random.default_rng(9)
    space, grid = random_space(rng, 6), random_grid(rng, 5)
    K = KernelBundle(random_kernel_samples(rng, 6, 5), space, grid, True)
    kpath = tmp_path / "kernel.json"
    kpath.write_text(io.dumps(io.kernel_to_dict(K)))
    outs = [tmp_path / f"dec{i}.json" for i in range(2)]
    codes = [main(["decompose", str(kpath), "--out", str(o)]) for o in outs]
    identical = outs[0].read_bytes() == outs[1].read_bytes()
    doc = json.loads(outs[0].read_text())
    rebuilt = io.decomposition_from_dict(doc)
    residual = rebuilt.residual(build_operator(io.kernel_from_dict(json.loads(kpath.read_text()))))
    residual_match = abs(residual - doc["residual"]) <= 1e-15 + 1e-12 * doc["residual"]

    x = MatrixField(random_hermitian(rng, (4, 3)))
    xpath = tmp_path / "field.json"
    xpath.write_text(io.dumps(io.matrix_field_to_dict(x)))
    douts = [tmp_path / f"diag{i}.json" for i in range(2)]
    codes += [main(["diagonalize", str(xpath), "--out", str(o)]) for o in douts]
    identical &= douts[0].read_bytes() == douts[1].read_bytes()
    capsys.readouterr()
    ok = codes == [0, 0, 0, 0] and identical and residual_match
    _log(acceptance_log, 9, ok,
         f"byte-identical reports={identical}, reloaded residual {residual:.3e} vs reported "
         f"{doc['residual']:.3e}")
    assert ok
