"""JSON encoding of the ``kaplansky/v1`` document schemas.

Complex numbers are written as ``[re, im]`` pairs and matrices row-major.
Top-level documents carry ``"schema": "kaplansky/v1"``.
"""
import json

import numpy as np

from .bundle import (
    BundleOperator,
    Idempotent,
    MeasureSpace,
    ModuleElement,
    SGrid,
    StepFunction,
)
from .exceptions import KaplanskyError, SchemaError
from .pie import KernelBundle
from .spectral import SpectralDecomposition
from .vna import MatrixField

SCHEMA = "kaplansky/v1"


def encode_complex(array):
    """Nested lists of ``[re, im]`` pairs, preserving the array shape."""
    array = np.asarray(array, dtype=complex)
    pairs = np.stack([array.real, array.imag], axis=-1)
    return pairs.tolist()


def decode_complex(data, ndim, what):
    try:
        array = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{what}: expected numeric [re, im] pairs") from exc
    if array.ndim != ndim + 1 or array.shape[-1] != 2:
        raise SchemaError(f"{what}: expected {ndim}-dimensional array of [re, im] pairs")
    return array[..., 0] + 1j * array[..., 1]


def _require(doc, key, what):
    if not isinstance(doc, dict) or key not in doc:
        raise SchemaError(f"{what}: missing field {key!r}")
    return doc[key]


def check_schema(doc, what="document"):
    if not isinstance(doc, dict):
        raise SchemaError(f"{what}: expected a JSON object")
    tag = doc.get("schema")
    if tag != SCHEMA:
        raise SchemaError(f"{what}: schema tag {tag!r} is not {SCHEMA!r}")
    return doc


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc


def dumps(doc):
    """Canonical serialization; identical documents give identical bytes."""
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def space_to_dict(space):
    return {"atoms": list(space.atoms), "weights": list(space.weights)}


def space_from_dict(doc):
    try:
        return MeasureSpace(_require(doc, "atoms", "space"), _require(doc, "weights", "space"))
    except (KaplanskyError, ValueError, TypeError) as exc:
        raise SchemaError(f"space: {exc}") from exc


def grid_to_dict(grid):
    return {"points": list(grid.points), "quad_weights": list(grid.quad_weights)}


def grid_from_dict(doc):
    try:
        return SGrid(_require(doc, "points", "grid"), _require(doc, "quad_weights", "grid"))
    except (KaplanskyError, ValueError, TypeError) as exc:
        raise SchemaError(f"grid: {exc}") from exc


def step_to_dict(f, tagged=True):
    doc = {"values": encode_complex(f.values)}
    return {"schema": SCHEMA, **doc} if tagged else doc


def step_from_dict(doc, tagged=True):
    if tagged:
        check_schema(doc, "step function")
    return StepFunction(decode_complex(_require(doc, "values", "step function"), 1, "values"))


def mask_to_list(pi):
    return [bool(b) for b in pi.mask]


def mask_from_list(data):
    return Idempotent(np.asarray(data, dtype=bool))


def element_to_dict(xi, tagged=True):
    doc = {"fibers": encode_complex(xi.fibers)}
    return {"schema": SCHEMA, **doc} if tagged else doc


def element_from_dict(doc, space, grid, tagged=True):
    if tagged:
        check_schema(doc, "module element")
    fibers = decode_complex(_require(doc, "fibers", "module element"), 2, "fibers")
    try:
        return ModuleElement(fibers, space, grid)
    except KaplanskyError as exc:
        raise SchemaError(f"module element: {exc}") from exc


def operator_to_dict(T):
    return {
        "schema": SCHEMA,
        "space": space_to_dict(T.space),
        "grid": grid_to_dict(T.grid),
        "fiber_maps": encode_complex(T.fiber_maps),
    }


def operator_from_dict(doc):
    check_schema(doc, "bundle operator")
    space = space_from_dict(_require(doc, "space", "bundle operator"))
    grid = grid_from_dict(_require(doc, "grid", "bundle operator"))
    maps = decode_complex(_require(doc, "fiber_maps", "bundle operator"), 3, "fiber_maps")
    try:
        return BundleOperator(maps, space, grid)
    except KaplanskyError as exc:
        raise SchemaError(f"bundle operator: {exc}") from exc


def kernel_to_dict(K, storage="full"):
    if storage == "full":
        samples = encode_complex(K.samples)
    elif storage == "upper":
        m = K.grid.size
        samples = [[encode_complex(K.samples[a, i, i:]) for i in range(m)]
                   for a in range(K.space.n_atoms)]
    else:
        raise ValueError(f"unknown storage {storage!r}")
    return {
        "schema": SCHEMA,
        "space": space_to_dict(K.space),
        "grid": grid_to_dict(K.grid),
        "selfadjoint": K.selfadjoint,
        "storage": storage,
        "samples": samples,
    }


def _mirror_upper(rows, m, what):
    """Rebuild a Hermitian matrix from its upper-triangle rows (row i holds columns i..m-1)."""
    if not isinstance(rows, list) or len(rows) != m:
        raise SchemaError(f"{what}: expected {m} upper-triangle rows")
    out = np.zeros((m, m), dtype=complex)
    for i, row in enumerate(rows):
        vals = decode_complex(row, 1, what) if len(row) else np.zeros(0)
        if vals.shape[0] != m - i:
            raise SchemaError(f"{what}: row {i} must hold {m - i} entries")
        out[i, i:] = vals
        out[i:, i] = np.conj(vals)
    return out


def kernel_from_dict(doc):
    """Kernel document; ``storage: "upper"`` rows are mirrored and conjugated."""
    check_schema(doc, "kernel")
    space = space_from_dict(_require(doc, "space", "kernel"))
    grid = grid_from_dict(_require(doc, "grid", "kernel"))
    selfadjoint = _require(doc, "selfadjoint", "kernel")
    if not isinstance(selfadjoint, bool):
        raise SchemaError("kernel: 'selfadjoint' must be a boolean")
    storage = doc.get("storage", "full")
    raw = _require(doc, "samples", "kernel")
    if storage == "full":
        samples = decode_complex(raw, 3, "samples")
    elif storage == "upper":
        if not selfadjoint:
            raise SchemaError("kernel: upper-triangle storage requires selfadjoint: true")
        if not isinstance(raw, list) or len(raw) != space.n_atoms:
            raise SchemaError("kernel: one upper-triangle block per atom expected")
        samples = np.stack([_mirror_upper(rows, grid.size, f"samples[{a}]")
                            for a, rows in enumerate(raw)]) if raw else np.zeros((0, grid.size, grid.size))
    else:
        raise SchemaError(f"kernel: unknown storage {storage!r}")
    try:
        return KernelBundle(samples, space, grid, selfadjoint=selfadjoint)
    except KaplanskyError as exc:
        raise SchemaError(f"kernel: {exc}") from exc


def matrix_field_to_dict(x):
    return {
        "schema": SCHEMA,
        "space": space_to_dict(x.space),
        "dim": x.dim,
        "fields": encode_complex(x.matrices),
    }


def matrix_field_from_dict(doc):
    check_schema(doc, "matrix field")
    space = space_from_dict(_require(doc, "space", "matrix field"))
    dim = _require(doc, "dim", "matrix field")
    fields = decode_complex(_require(doc, "fields", "matrix field"), 3, "fields")
    if not isinstance(dim, int) or fields.shape[1:] != (dim, dim):
        raise SchemaError(f"matrix field: fields do not have dimension {dim}")
    try:
        return MatrixField(fields, space)
    except KaplanskyError as exc:
        raise SchemaError(f"matrix field: {exc}") from exc


def decomposition_to_dict(spectrum):
    return {
        "schema": SCHEMA,
        "space": space_to_dict(spectrum.space),
        "grid": grid_to_dict(spectrum.grid),
        "rank_partition": [mask_to_list(p) for p in spectrum.rank_partition],
        "classes": [
            {
                "k": int(cls.k),
                "eigenvalues": [step_to_dict(f.real, tagged=False) for f in cls.eigenvalues],
                "vectors": [element_to_dict(v, tagged=False) for v in cls.vectors],
            }
            for cls in spectrum.classes
        ],
    }


def decomposition_from_dict(doc):
    """Rebuild a :class:`SpectralDecomposition` from its exported classes."""
    check_schema(doc, "decomposition")
    space = space_from_dict(_require(doc, "space", "decomposition"))
    grid = grid_from_dict(_require(doc, "grid", "decomposition"))
    classes = _require(doc, "classes", "decomposition")
    masks = [mask_from_list(m) for m in _require(doc, "rank_partition", "decomposition")]
    if len(masks) != len(classes):
        raise SchemaError("decomposition: rank_partition and classes differ in length")
    width = max((int(c["k"]) for c in classes), default=0)
    values = np.zeros((space.n_atoms, width))
    vectors = np.zeros((space.n_atoms, grid.size, width), dtype=complex)
    for mask, cls in zip(masks, classes):
        k = int(_require(cls, "k", "class"))
        evs = _require(cls, "eigenvalues", "class")
        vecs = _require(cls, "vectors", "class")
        if len(evs) != k or len(vecs) != k:
            raise SchemaError(f"decomposition: class {k} must list {k} terms")
        for n in range(k):
            f = step_from_dict(evs[n], tagged=False)
            v = element_from_dict(vecs[n], space, grid, tagged=False)
            values[mask.mask, n] = f.values.real[mask.mask]
            vectors[mask.mask, :, n] = v.fibers[mask.mask]
    return SpectralDecomposition(
        [StepFunction(values[:, n]) for n in range(width)],
        [ModuleElement(vectors[:, :, n], space, grid) for n in range(width)],
        space, grid,
    )
