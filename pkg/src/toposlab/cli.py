"""Command-line driver: ``toposlab {make,certify,reconstruct,markov,monogamy}``.

Reports are JSON on stdout (or ``--report``); artifacts go to ``--out``.
Exit codes: 0 success, 1 input error, 2 negative verdict, 3 undecided.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from typing import Sequence

import numpy as np

from . import io
from .contexts import ProductContext
from .integrals import (MissingDirectionsError, ReconstructionError, dimension_warnings, ic_contexts,
                        reconstruct_state)
from .linalg import (NotAStateError, NotHermitianError, Operator, classically_correlated,
                     maximally_entangled, maximally_mixed, min_eigenvalue, partial_trace,
                     partial_transpose, random_density, random_pure, tensor)
from .monad import (build_markov_chain, check_marginal_locality, check_product_stability,
                    check_state_preservation, closed_form_joint, random_chain_spec, random_dist,
                    random_kernel, FiniteDist, FiniteSet)
from .monogamy import (HypothesisError, Verdict, check_extendibility_obstruction,
                       classical_contrast, monogamy_witness)
from .popt import Certification, certify_popt

EXIT_OK, EXIT_INPUT, EXIT_NEGATIVE, EXIT_UNDECIDED = 0, 1, 2, 3
LEMMA_TOL = 1e-12


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _dims_arg(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not dims or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return dims


def _require_seed(args):
    if args.seed is None:
        raise CommandError(f"'{args.command}' is stochastic: --seed is required")


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _certified_state(op: Operator, args, label: str):
    st = certify_popt(op, restarts=args.restarts, seed=args.seed, tol=args.tol)
    if not st.certified:
        raise CommandError(f"{label} is not certified POPT ({st.status.value}, "
                           f"minimum {st.min_value:.3g})", EXIT_NEGATIVE)
    return st


# --- make -----------------------------------------------------------------------------


def _violator(d: int) -> Operator:
    """``(1 + t) I / d^2 - t Phi`` with ``t = 2/(d-1)``: unit trace, negative on ``|00>``."""
    t = 2.0 / (d - 1)
    phi = maximally_entangled(d)
    return Operator((1 + t) * np.eye(d * d) / d ** 2 - t * phi.mat, (d, d))


def _ic_table(op: Operator) -> dict:
    """Values of the state on every outcome of every product of informationally complete contexts.

    The table is over-complete, so a corrupted entry shows up as inconsistency.
    """
    records = []
    for ctxs in itertools.product(*(ic_contexts(d) for d in op.dims)):
        pc = ProductContext(ctxs)
        for idx in pc.index_tuples():
            records.append((pc, idx, float(np.trace(op.mat @ pc.projector(idx)).real)))
    return io.table_to_doc(op.dims, records)


def cmd_make(args) -> int:
    inputs = {}
    if args.maxent:
        doc = io.operator_to_doc(maximally_entangled(args.maxent))
    elif args.pt_maxent:
        doc = io.operator_to_doc(partial_transpose(maximally_entangled(args.pt_maxent), 1))
    elif args.classical:
        doc = io.operator_to_doc(classically_correlated(args.classical))
    elif args.mixed:
        doc = io.operator_to_doc(maximally_mixed(args.mixed))
    elif args.violator:
        if args.violator < 2:
            raise CommandError("the violator needs dimension at least 2")
        doc = io.operator_to_doc(_violator(args.violator))
    elif args.table:
        op, inputs[args.table] = io.read_operator(args.table)
        doc = _ic_table(op)
    else:
        _require_seed(args)
        rng = np.random.default_rng(args.seed)
        if args.random_density:
            doc = io.operator_to_doc(random_density(args.random_density, rng))
        elif args.random_pt_pure:
            doc = io.operator_to_doc(partial_transpose(random_pure(args.random_pt_pure, rng), 1))
        elif args.random_product:
            doc = io.operator_to_doc(tensor([random_density((d,), rng)
                                             for d in args.random_product]))
        else:
            doc = io.markov_to_doc(random_chain_spec(args.markov, rng, args.max_size))
    _emit(io.dumps(doc), args.out)
    return EXIT_OK


# --- certify --------------------------------------------------------------------------


def cmd_certify(args) -> tuple[int, dict]:
    _require_seed(args)
    op, digest = io.read_operator(args.input)
    st = certify_popt(op, restarts=args.restarts, n_samples=args.samples, seed=args.seed,
                      tol=args.tol)
    results = {
        "dims": list(op.dims),
        "min_product_overlap": st.min_value,
        "sample_min": st.sample_min,
        "witness": [io.encode_vector(v) for v in st.witness],
        "min_eigenvalue": min_eigenvalue(op),
        "config": st.config,
    }
    code = {Certification.CERTIFIED_POPT: EXIT_OK, Certification.REFUTED: EXIT_NEGATIVE,
            Certification.UNKNOWN: EXIT_UNDECIDED}[st.status]
    return code, io.report(args.argv, st.status.value, results, args.seed, {args.input: digest})


# --- reconstruct ----------------------------------------------------------------------


def cmd_reconstruct(args) -> tuple[int, dict]:
    doc, digest = io.read_document(args.table)
    dims, pairs = io.table_from_doc(doc, args.dims)
    tol = args.tol if args.tol is not None else 1e-8
    try:
        op = reconstruct_state(pairs, dims, tol=tol)
    except MissingDirectionsError as e:
        raise CommandError(f"table is not informationally complete (rank {e.rank} of {e.needed}); "
                           f"missing directions: {', '.join(e.missing)}")
    except ReconstructionError as e:
        raise CommandError(str(e))
    resid = max(abs(float(np.trace(op.mat @ a).real) - v) for a, v in pairs)
    if args.out is not None:
        _emit(io.dumps(io.operator_to_doc(op)), args.out)
    results = {"dims": list(dims), "n_records": len(pairs), "residual": resid,
               "trace": float(op.trace().real), "warnings": dimension_warnings(dims),
               "operator": io.operator_to_doc(op)}
    return EXIT_OK, io.report(args.argv, "RECONSTRUCTED", results, None, {args.table: digest})


# --- markov ---------------------------------------------------------------------------


def _spec_lemmas(spec) -> dict:
    """Lemma suites on the chain's own kernels and the marginals they act on."""
    joint = closed_form_joint(spec)
    sets = spec.sets
    out = {"product_stability": [], "marginal_locality": [], "state_preservation": []}
    for i, k in enumerate(spec.kernels):
        prefix = joint.marginal(list(range(i + 1)))
        flat = FiniteDist(FiniteSet("P", prefix.over.size), prefix.weights)
        out["marginal_locality"].append(check_marginal_locality(flat, k))
        out["state_preservation"].append(check_state_preservation(flat, k))
        if i + 1 < len(spec.kernels):
            g = spec.kernels[i + 1]
            p_x = joint.marginal([i])
            p_y = joint.marginal([i + 1])
            out["product_stability"].append(check_product_stability(
                FiniteDist(sets[i], p_x.weights), FiniteDist(sets[i + 1], p_y.weights), k, g))
    return out


def _random_lemmas(n: int, seed: int, max_size: int = 4) -> dict:
    rng = np.random.default_rng(seed)
    worst = {"product_stability": 0.0, "marginal_locality": 0.0, "state_preservation": 0.0}
    for _ in range(n):
        a, b, c, e = (FiniteSet(s, int(rng.integers(1, max_size + 1))) for s in "ABCE")
        f, g = random_kernel(a, b, rng), random_kernel(c, e, rng)
        worst["product_stability"] = max(worst["product_stability"], check_product_stability(
            random_dist(a, rng), random_dist(c, rng), f, g))
        p = random_dist(FiniteSet("XY", c.size * a.size), rng, sparse=True)
        worst["marginal_locality"] = max(worst["marginal_locality"], check_marginal_locality(p, f))
        worst["state_preservation"] = max(worst["state_preservation"],
                                          check_state_preservation(p, f))
    return worst


def cmd_markov(args) -> tuple[int, dict]:
    doc, digest = io.read_document(args.spec)
    spec = io.markov_from_doc(doc)
    joint = build_markov_chain(spec)
    closed = closed_form_joint(spec)
    dev = float(np.max(np.abs(joint.weights - closed.weights)))
    results = {"shape": list(spec.joint_set.shape), "joint": [float(x) for x in joint.weights],
               "closed_form_deviation": dev}
    ok = dev <= LEMMA_TOL
    if args.check_lemmas:
        lemmas = {"spec": _spec_lemmas(spec)}
        worst = [x for v in lemmas["spec"].values() for x in v]
        if args.lemma_instances:
            _require_seed(args)
            lemmas["random"] = dict(instances=args.lemma_instances,
                                    max_deviation=_random_lemmas(args.lemma_instances, args.seed))
            worst += list(lemmas["random"]["max_deviation"].values())
        lemmas["tolerance"] = LEMMA_TOL
        lemmas["all_pass"] = all(x <= LEMMA_TOL for x in worst)
        ok = ok and lemmas["all_pass"]
        results["lemmas"] = lemmas
    return (EXIT_OK if ok else EXIT_NEGATIVE,
            io.report(args.argv, "OK" if ok else "FAILED", results, args.seed,
                      {args.spec: digest}))


# --- monogamy -------------------------------------------------------------------------


def _bipartite(path: str, inputs: dict, label: str) -> Operator:
    op, inputs[path] = io.read_operator(path)
    if op.n_factors != 2:
        raise CommandError(f"{label} must be bipartite, got dims {list(op.dims)}")
    if not op.is_hermitian(1e-9) or abs(op.trace() - 1) > 1e-9:
        raise CommandError(f"{label} must be Hermitian with unit trace")
    return op


def _witness_trace(tr) -> dict:
    return {"pair": list(tr.pair), "order": list(tr.order),
            "eigenvalues": [float(x) for x in tr.eigenvalues],
            "basis": io.encode_matrix(tr.basis), "phi": io.encode_vector(tr.phi)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer, int)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


def cmd_monogamy(args) -> tuple[int, dict]:
    inputs: dict[str, str] = {}
    w = _bipartite(args.input, inputs, "omega_XY")
    if args.action == "witness":
        try:
            r, tr = monogamy_witness(w)
        except HypothesisError as e:
            raise CommandError(f"no witness: {e}", EXIT_NEGATIVE)
        if args.out is not None:
            _emit(io.dumps(io.operator_to_doc(r)), args.out)
        gap = float(np.linalg.norm(partial_trace(r, [0]).mat - partial_trace(w, [1]).mat))
        results = {"rho_YZ": io.operator_to_doc(r), "trace": _witness_trace(tr),
                   "marginal_gap": gap}
        return EXIT_OK, io.report(args.argv, "WITNESS", results, None, inputs)

    _require_seed(args)
    witness = None
    if args.partner is not None:
        r = _bipartite(args.partner, inputs, "rho_YZ")
    else:
        try:
            r, witness = monogamy_witness(w)
        except HypothesisError as e:
            raise CommandError(f"no witness: {e}", EXIT_NEGATIVE)
    if w.dims[1] != r.dims[0]:
        raise CommandError(f"shared factor mismatch: omega_XY has Y of dimension {w.dims[1]}, "
                           f"rho_YZ has {r.dims[0]}")
    if args.action == "obstruct":
        v = check_extendibility_obstruction(w, r, witness, seed=args.seed)
        results = {"certificate": _jsonable(v.certificate)}
        if v.extension is not None:
            results["extension"] = io.operator_to_doc(v.extension)
        code = {Verdict.EXTENDIBLE_WITNESSED: EXIT_OK, Verdict.NOT_EXTENDIBLE_CERTIFIED: EXIT_OK,
                Verdict.OVERLAP_MISMATCH: EXIT_NEGATIVE, Verdict.UNDECIDED: EXIT_UNDECIDED}
        return code[v.status], io.report(args.argv, v.status.value, results, args.seed, inputs)

    ext = classical_contrast(_certified_state(w, args, "omega_XY"),
                             _certified_state(r, args, "rho_YZ"))
    results = {"l1_gap": ext.l1_gap}
    if ext.joint is not None:
        results["joint_shape"] = list(ext.joint.over.shape)
        results["joint"] = [float(x) for x in ext.joint.weights]
    code = EXIT_OK if ext.status == "EXTENDIBLE" else EXIT_NEGATIVE
    return code, io.report(args.argv, ext.status, results, args.seed, inputs)


# --- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="seed for stochastic steps (required there)")
    common.add_argument("--out", help="file for the produced artifact")

    p = argparse.ArgumentParser(prog="toposlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("make", parents=[common], help="write a canonical fixture")
    g = m.add_mutually_exclusive_group(required=True)
    g.add_argument("--maxent", type=int, metavar="D", help="maximally entangled state on D x D")
    g.add_argument("--pt-maxent", type=int, metavar="D", help="its partial transpose")
    g.add_argument("--classical", type=int, metavar="D", help="sum_i |ii><ii| / D")
    g.add_argument("--mixed", type=_dims_arg, metavar="DIMS", help="maximally mixed state")
    g.add_argument("--violator", type=int, metavar="D",
                   help="unit-trace operator negative on a product vector")
    g.add_argument("--random-density", type=_dims_arg, metavar="DIMS",
                   help="random mixed state (Hilbert-Schmidt measure)")
    g.add_argument("--random-pt-pure", type=_dims_arg, metavar="DIMS",
                   help="partial transpose of a random pure state")
    g.add_argument("--random-product", type=_dims_arg, metavar="DIMS",
                   help="tensor product of random single-factor densities")
    g.add_argument("--table", metavar="STATE",
                   help="value table of STATE on informationally complete product contexts")
    g.add_argument("--markov", type=int, metavar="N", help="random Markov spec with N positions")
    m.add_argument("--max-size", type=int, default=4, help="largest alphabet for --markov")

    def reporting(sp):
        sp.add_argument("--report", help="write the report here instead of stdout")
        sp.add_argument("--tol", type=float, default=None)

    c = sub.add_parser("certify", parents=[common], help="certify block positivity")
    c.add_argument("input")
    c.add_argument("--restarts", type=int, default=64)
    c.add_argument("--samples", type=int, default=10000)
    reporting(c)

    r = sub.add_parser("reconstruct", parents=[common], help="state from a value table")
    r.add_argument("table")
    r.add_argument("--dims", type=_dims_arg)
    reporting(r)

    k = sub.add_parser("markov", parents=[common], help="joint law of a Markov spec")
    k.add_argument("spec")
    k.add_argument("--check-lemmas", action="store_true")
    k.add_argument("--lemma-instances", type=int, default=0,
                   help="also run the lemma suites on this many random instances (needs --seed)")
    reporting(k)

    o = sub.add_parser("monogamy", parents=[common], help="extendibility workflows")
    o.add_argument("action", choices=["witness", "obstruct", "contrast"])
    o.add_argument("input", help="omega_XY operator file")
    o.add_argument("partner", nargs="?",
                   help="rho_YZ operator file (default: the witness built from omega_XY)")
    o.add_argument("--restarts", type=int, default=64)
    reporting(o)
    return p


HANDLERS = {"certify": cmd_certify, "reconstruct": cmd_reconstruct, "markov": cmd_markov,
            "monogamy": cmd_monogamy}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    args.argv = argv
    if getattr(args, "tol", None) is None and args.command in ("certify", "monogamy"):
        args.tol = 1e-9
    try:
        if args.command == "make":
            return cmd_make(args)
        code, rep = HANDLERS[args.command](args)
    except CommandError as e:
        print(f"toposlab {args.command}: {e}", file=sys.stderr)
        return e.code
    except (io.InputError, NotHermitianError, NotAStateError, ValueError, OSError) as e:
        print(f"toposlab {args.command}: {e}", file=sys.stderr)
        return EXIT_INPUT
    _emit(io.dumps(rep), args.report)
    return code


if __name__ == "__main__":
    sys.exit(main())
