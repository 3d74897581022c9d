"""JSON documents for operators, value tables, Markov specs and run reports.

Complex numbers are ``[re, im]`` pairs. Parsing rejects NaN and infinities.
Serialization is deterministic: sorted keys, fixed separators, ``repr`` floats.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .contexts import Context, ProductContext
from .linalg import Operator
from .monad import FiniteDist, FiniteSet, Kernel, MarkovChainSpec

SCHEMA_VERSION = 1


class InputError(ValueError):
    """Malformed or inconsistent input document."""


def _reject_constant(name):
    raise InputError(f"non-finite number {name} is not allowed")


def loads(text: str) -> Any:
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise InputError(f"invalid JSON: {e}") from None


def dumps(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def read_document(path: str | Path) -> tuple[Any, str]:
    """Parsed document and the sha256 of its bytes."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise InputError(f"{path} is not UTF-8 text") from None
    return loads(text), hashlib.sha256(raw).hexdigest()


# --- complex matrices -----------------------------------------------------------------


def encode_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    # adding 0.0 turns -0.0 into 0.0 so equal matrices serialize identically
    return [[[float(z.real) + 0.0, float(z.imag) + 0.0] for z in row] for row in m]


def encode_vector(v: np.ndarray) -> list:
    return [[float(z.real) + 0.0, float(z.imag) + 0.0] for z in np.asarray(v, dtype=complex)]


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InputError(f"{where}: expected a number, got {type(x).__name__}")
    if not math.isfinite(x):
        raise InputError(f"{where}: non-finite number")
    return float(x)


def decode_matrix(entries, shape: tuple[int, int] | None = None, where: str = "entries"
                  ) -> np.ndarray:
    if not isinstance(entries, list) or not all(isinstance(r, list) for r in entries):
        raise InputError(f"{where}: expected a list of rows")
    rows = []
    for i, row in enumerate(entries):
        out = []
        for j, z in enumerate(row):
            if not isinstance(z, list) or len(z) != 2:
                raise InputError(f"{where}[{i}][{j}]: expected an [re, im] pair")
            out.append(complex(_number(z[0], f"{where}[{i}][{j}]"),
                               _number(z[1], f"{where}[{i}][{j}]")))
        rows.append(out)
    if len({len(r) for r in rows}) > 1:
        raise InputError(f"{where}: rows have different lengths")
    m = np.array(rows, dtype=complex).reshape(len(rows), -1 if rows else 0)
    if shape is not None and m.shape != shape:
        raise InputError(f"{where}: shape {m.shape} does not match expected {shape}")
    return m


def _dims(doc, where: str = "dims") -> tuple[int, ...]:
    if not isinstance(doc, list) or not all(
            isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in doc):
        raise InputError(f"{where}: expected a list of positive integers")
    return tuple(doc)


# --- operators ------------------------------------------------------------------------


def operator_to_doc(op: Operator) -> dict:
    return {"dims": list(op.dims), "entries": encode_matrix(op.mat)}


def operator_from_doc(doc) -> Operator:
    if not isinstance(doc, dict) or "dims" not in doc or "entries" not in doc:
        raise InputError("operator document needs 'dims' and 'entries'")
    dims = _dims(doc["dims"])
    n = int(np.prod(dims))
    return Operator(decode_matrix(doc["entries"], (n, n)), dims)


def read_operator(path) -> tuple[Operator, str]:
    doc, digest = read_document(path)
    return operator_from_doc(doc), digest


# --- value tables ---------------------------------------------------------------------
# {"dims": [...], "records": [{"context": [[P, ...] per factor], "element": [i, j] | matrix,
#   "value": x}, ...]}; a bare record list is accepted when dims come from elsewhere.


def product_context_to_doc(pc: ProductContext) -> list:
    return [[encode_matrix(p) for p in c.projectors] for c in pc.components]


def product_context_from_doc(doc, dims: Sequence[int], where: str) -> ProductContext:
    if not isinstance(doc, list) or len(doc) != len(dims):
        raise InputError(f"{where}: expected one projector list per factor ({len(dims)})")
    comps = []
    for k, (projs, d) in enumerate(zip(doc, dims)):
        if not isinstance(projs, list):
            raise InputError(f"{where}[{k}]: expected a list of projectors")
        mats = tuple(decode_matrix(p, (d, d), f"{where}[{k}][{i}]") for i, p in enumerate(projs))
        try:
            comps.append(Context(d, mats))
        except ValueError as e:
            raise InputError(f"{where}[{k}]: {e}") from None
    return ProductContext(tuple(comps))


def table_to_doc(dims: Sequence[int], records: Sequence[tuple[ProductContext, Any, float]]) -> dict:
    out = []
    for pc, element, value in records:
        if isinstance(element, tuple):
            el = [int(i) for i in element]
        else:
            el = encode_matrix(element)
        out.append({"context": product_context_to_doc(pc), "element": el, "value": float(value)})
    return {"dims": list(dims), "records": out}


def table_from_doc(doc, dims: Sequence[int] | None = None
                   ) -> tuple[tuple[int, ...], list[tuple[np.ndarray, float]]]:
    """Dims and ``(element matrix, value)`` pairs; index elements become product projectors."""
    if isinstance(doc, dict):
        if dims is None and "dims" in doc:
            dims = doc["dims"]
        records = doc.get("records")
    else:
        records = doc
    if dims is None:
        raise InputError("value table has no 'dims'; pass --dims")
    dims = _dims(list(dims))
    if not isinstance(records, list):
        raise InputError("value table needs a list of records")
    n = int(np.prod(dims))
    pairs = []
    for i, rec in enumerate(records):
        where = f"records[{i}]"
        if not isinstance(rec, dict) or not {"context", "element", "value"} <= rec.keys():
            raise InputError(f"{where}: needs 'context', 'element' and 'value'")
        pc = product_context_from_doc(rec["context"], dims, f"{where}.context")
        el = rec["element"]
        if isinstance(el, list) and el and all(isinstance(x, int) and not isinstance(x, bool)
                                               for x in el):
            if len(el) != len(dims) or any(not 0 <= x < s for x, s in zip(el, pc.shape)):
                raise InputError(f"{where}.element: index tuple out of range")
            mat = pc.projector(el)
        else:
            mat = decode_matrix(el, (n, n), f"{where}.element")
            if not pc.joint().contains(mat):
                raise InputError(f"{where}.element: not in the span of its context")
        pairs.append((mat, _number(rec["value"], f"{where}.value")))
    return dims, pairs


# --- Markov specs ---------------------------------------------------------------------
# {"initial": [p, ...], "kernels": [[[row], ...], ...]}


def markov_to_doc(spec: MarkovChainSpec) -> dict:
    return {"initial": [float(x) for x in spec.initial.weights],
            "kernels": [[[float(x) for x in row] for row in k.matrix] for k in spec.kernels]}


def _real_array(x, where: str, ndim: int) -> np.ndarray:
    try:
        a = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise InputError(f"{where}: expected a numeric array") from None
    if a.ndim != ndim or a.size == 0:
        raise InputError(f"{where}: expected a nonempty {ndim}-dimensional array")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{where}: non-finite number")
    return a


def markov_from_doc(doc) -> MarkovChainSpec:
    if not isinstance(doc, dict) or "initial" not in doc:
        raise InputError("Markov spec needs 'initial' and 'kernels'")
    kernels = doc.get("kernels", [])
    if not isinstance(kernels, list):
        raise InputError("kernels: expected a list of matrices")
    try:
        p = _real_array(doc["initial"], "initial", 1)
        sets = [FiniteSet("X1", p.size)]
        ks = []
        for i, m in enumerate(kernels):
            m = _real_array(m, f"kernels[{i}]", 2)
            src = FiniteSet(f"X{i + 1}", m.shape[0])
            if src.size != sets[-1].size:
                raise InputError(f"kernels[{i}] has {m.shape[0]} rows, position {i + 1} has "
                                 f"{sets[-1].size} outcomes")
            sets.append(FiniteSet(f"X{i + 2}", m.shape[1]))
            ks.append(Kernel(sets[-2], sets[-1], m))
        return MarkovChainSpec(FiniteDist(sets[0], p), tuple(ks))
    except InputError:
        raise
    except ValueError as e:
        raise InputError(str(e)) from None


# --- reports --------------------------------------------------------------------------


def report(command: Sequence[str], status: str, results: dict, seed: int | None = None,
           inputs: dict[str, str] | None = None) -> dict:
    return {"schema_version": SCHEMA_VERSION, "tool": "toposlab", "version": __version__,
            "command": list(command), "seed": seed, "inputs": dict(inputs or {}),
            "status": status, "results": results}
