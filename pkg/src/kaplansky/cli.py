"""Command line front end.

Usage:
    kaplansky validate KERNEL.json
    kaplansky decompose INPUT.json [--out DEC.json]
    kaplansky diagonalize FIELD.json [--out REPORT.json]
    kaplansky solve KERNEL.json LAMBDA.json

Exit codes: 0 ok, 1 domain failure, 2 parse error, 3 not solvable,
4 internal tolerance inconsistency.
"""
import argparse
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import io
from ._config import config_context
from .exceptions import (
    KaplanskyError,
    NonFiniteError,
    NotSelfAdjointError,
    SchemaError,
    ToleranceInconsistencyError,
)
from .pie import build_operator, check_witness, hs_check, kernel_spectrum, match_branches
from .vna import diagonalize, to_diagonal_matrix

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_PARSE = 2
EXIT_NOT_SOLVABLE = 3
EXIT_INCONSISTENT = 4


@dataclass
class RunConfig:
    rank_tol: float = 1e-10
    solve_tol: float = 1e-8
    equality_tol: float = 1e-12
    parallelism: int = 0
    output_format: str = "json"

    def __post_init__(self):
        for name in ("rank_tol", "solve_tol", "equality_tol"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive")
        if self.parallelism < 0:
            raise ValueError("parallelism must be >= 0")
        if self.output_format not in ("json", "text"):
            raise ValueError("output_format must be 'json' or 'text'")


def _emit(report, config, out=None, text_lines=None):
    """Write the JSON report to ``out`` (if any) and print it or a text summary."""
    payload = io.dumps(report)
    if out:
        with open(out, "w") as fh:
            fh.write(payload)
    if config.output_format == "text":
        print("\n".join(text_lines or []))
    elif not out:
        sys.stdout.write(payload)


def _load_kernel(path):
    return io.kernel_from_dict(io.load_json(path))


def cmd_validate(args, config):
    K = _load_kernel(args.kernel)
    finite = bool(np.all(np.isfinite(K.samples)))
    report = {"schema": io.SCHEMA, "command": "validate", "config": asdict(config),
              "finite": finite, "selfadjoint_flag": K.selfadjoint}
    ok = finite
    if finite:
        asym, loc = K.asymmetry()
        hs = hs_check(K)
        report["max_asymmetry"] = asym
        report["asymmetry_location"] = (
            None if loc is None else dict(zip(("atom", "t", "s"), loc)))
        report["hs_norms"] = [float(v) for v in hs.values.real]
        report["hs_sup"] = hs.sup()
        if K.selfadjoint:
            report["selfadjoint_ok"] = K.is_hermitian()
            ok = ok and report["selfadjoint_ok"]
    report["passed"] = bool(ok)
    lines = [f"validate {args.kernel}: {'PASS' if ok else 'FAIL'}"]
    if finite:
        lines.append(f"  HS sup norm^2: {report['hs_sup']:.6g}")
        lines.append(f"  max asymmetry: {report['max_asymmetry']:.3e} at {report['asymmetry_location']}")
    _emit(report, config, args.out, lines)
    return EXIT_OK if ok else EXIT_DOMAIN


def _class_counts(partition):
    return {str(k): p.count() for k, p in zip(partition.labels, partition.parts)}


def _diagonal_report(x, config):
    form = diagonalize(x)
    D, U = to_diagonal_matrix(form)
    residual = float(np.max(np.linalg.norm(
        (U.adjoint() @ x @ U - D).matrices, ord=2, axis=(1, 2)), initial=0.0))
    report = {
        "schema": io.SCHEMA,
        "command": "diagonalize",
        "config": asdict(config),
        "space": io.space_to_dict(x.space),
        "dim": x.dim,
        "central_partition": [io.mask_to_list(p) for p in form.central_partition],
        "classes": [
            {
                "k": int(cls.k),
                "values": [io.step_to_dict(f.real, tagged=False) for f in cls.values],
                "projections": [io.encode_complex(p.matrices) for p in cls.projections],
            }
            for cls in form.classes
        ],
        "unitary": io.encode_complex(U.matrices),
        "diagonal": io.encode_complex(D.matrices),
        "residual": residual,
        "class_counts": _class_counts(form.central_partition),
    }
    lines = [f"diagonalize: residual {residual:.3e}",
             "  atoms per class: " + ", ".join(f"k={k}: {c}" for k, c in report["class_counts"].items())]
    return report, lines


def cmd_decompose(args, config):
    doc = io.load_json(args.input)
    io.check_schema(doc, args.input)
    if "fields" in doc:
        report, lines = _diagonal_report(io.matrix_field_from_dict(doc), config)
        _emit(report, config, args.out, lines)
        return EXIT_OK
    K = io.kernel_from_dict(doc)
    spectrum = kernel_spectrum(K)
    T = build_operator(K)
    residual = spectrum.residual(T)
    norm = T.norm()
    report = io.decomposition_to_dict(spectrum)
    report.update({
        "command": "decompose",
        "config": asdict(config),
        "residual": residual,
        "relative_residual": residual / norm if norm > 0 else 0.0,
        "class_counts": _class_counts(spectrum.rank_partition),
    })
    lines = [f"decompose {args.input}: residual {residual:.3e}",
             "  atoms per class: " + ", ".join(f"k={k}: {c}" for k, c in report["class_counts"].items())]
    _emit(report, config, args.out, lines)
    return EXIT_OK


def cmd_diagonalize(args, config):
    x = io.matrix_field_from_dict(io.load_json(args.field))
    report, lines = _diagonal_report(x, config)
    _emit(report, config, args.out, lines)
    return EXIT_OK


def cmd_solve(args, config):
    K = _load_kernel(args.kernel)
    lam = io.step_from_dict(io.load_json(args.lam))
    spectrum = kernel_spectrum(K)
    witness = match_branches(spectrum, lam, config.solve_tol)
    report = {"schema": io.SCHEMA, "command": "solve", "config": asdict(config),
              "solvable": witness is not None}
    if witness is None:
        report.update({"pi": [False] * K.space.n_atoms, "branch": None,
                       "max_gap": None, "residual": None, "atom_branches": None})
        _emit(report, config, args.out, ["not solvable"])
        return EXIT_NOT_SOLVABLE
    T = build_operator(K)
    status = EXIT_OK
    try:
        residual = check_witness(T, witness.eigenfunction, lam, witness, config.solve_tol)
    except ToleranceInconsistencyError as exc:
        residual = None
        report["error"] = str(exc)
        status = EXIT_INCONSISTENT
    report.update({
        "pi": io.mask_to_list(witness.pi),
        "branch": list(witness.branch),
        "max_gap": witness.max_gap,
        "residual": residual,
        "atom_branches": [None if b is None else list(b) for b in witness.atom_branches],
        "eigenfunction": io.element_to_dict(witness.eigenfunction, tagged=False),
    })
    lines = [f"solvable on {witness.pi.count()} of {K.space.n_atoms} atoms, "
             f"branch {witness.branch}, max gap {witness.max_gap:.3e}"]
    if residual is not None:
        lines.append(f"  residual {residual:.3e}")
    _emit(report, config, args.out, lines)
    return status


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rank-tol", type=float, default=1e-10)
    common.add_argument("--solve-tol", type=float, default=1e-8)
    common.add_argument("--equality-tol", type=float, default=1e-12)
    common.add_argument("--parallelism", type=int, default=0,
                        help="worker threads over atoms (0 = one per CPU)")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("--out", help="write the JSON report to this file")

    parser = argparse.ArgumentParser(prog="kaplansky", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", parents=[common], help="check a kernel file")
    p.add_argument("kernel")
    p.set_defaults(func=cmd_validate)
    p = sub.add_parser("decompose", parents=[common], help="spectral decomposition")
    p.add_argument("input", help="kernel or matrix-field file")
    p.set_defaults(func=cmd_decompose)
    p = sub.add_parser("diagonalize", parents=[common], help="diagonalize a matrix field")
    p.add_argument("field")
    p.set_defaults(func=cmd_diagonalize)
    p = sub.add_parser("solve", parents=[common], help="solve T f = lambda f")
    p.add_argument("kernel")
    p.add_argument("lam", metavar="lambda")
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = RunConfig(args.rank_tol, args.solve_tol, args.equality_tol,
                           args.parallelism, args.format)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        with config_context(rank_tol=config.rank_tol, solve_tol=config.solve_tol,
                            equality_tol=config.equality_tol,
                            parallelism=config.parallelism):
            return args.func(args, config)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (NotSelfAdjointError, NonFiniteError, KaplanskyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
