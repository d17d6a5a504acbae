"""Command-line front end.

Subcommands mirror the toolkit layers: ``symbol`` (evaluation, sampling,
determinant Taylor data, reference intervals), ``spectra`` (table and
figure data), ``solve`` / ``bench`` (Krylov runs).  Outputs are UTF-8
CSV/JSON with LF line endings; identical invocations with the same seed
produce byte-identical files.

Exit codes: 0 success, 2 argument/validation error, 3 size guard
exceeded, 4 solver did not converge.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from . import spectra as sp
from .assembly import assemble_pressure_operator, build_basis, extract_boundary_part
from .krylov import (bench_csv, bench_iterations, build_strang, cg, pcg,
                     project_out_constant, random_smooth_rhs)
from .spectra import SpectrumGuardError
from .structured import SizeGuardError
from .symbols import (builtin_dg_symbol, det_taylor_at_origin, sample_eigs,
                      SymbolError)

EXIT_OK, EXIT_USAGE, EXIT_GUARD, EXIT_NOCONV = 0, 2, 3, 4


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _parse_sizes(spec: str) -> list[int]:
    if ":" in spec:
        parts = [int(x) for x in spec.split(":")]
        if len(parts) != 3:
            raise ValueError("size sweep must be start:stop:step")
        start, stop, step = parts
        out = list(range(start, stop + 1, step))
    else:
        out = [int(x) for x in spec.split(",") if x]
    if not out:
        raise ValueError("empty size sweep")
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- symbol ------------------------------------------------------------------

def cmd_symbol(args) -> int:
    sym = builtin_dg_symbol(args.p)
    if args.sub == "eval":
        t1, t2 = (float(x) for x in args.theta.split(","))
        mat = sym.eval((t1, t2))
        rows = [[f"{v:.17g}" for v in row] for row in mat.real]
        _write(args.output, _csv_text(
            [f"c{i}" for i in range(sym.s)], rows))
    elif args.sub == "sample":
        sample = sample_eigs(sym, args.n, args.grid)
        _write(args.output, sample.to_csv())
    elif args.sub == "det-taylor":
        value, grad, hess = det_taylor_at_origin(sym)
        import json
        _write(args.output, json.dumps({
            "value": float(value),
            "gradient": [float(g) for g in grad],
            "hessian": [[float(h) for h in row] for row in hess],
            "hessian_exact": [[str(h) for h in row] for row in hess],
        }, indent=1) + "\n")
    elif args.sub == "intervals":
        iv = sp.reference_intervals(sym, n=args.n)
        rows = [[l + 1, f"{iv[l, 0]:.9f}", f"{iv[l, 1]:.9f}"] for l in range(sym.s)]
        _write(args.output, _csv_text(["l", "m_l", "M_l"], rows))
    return EXIT_OK


# -- spectra -----------------------------------------------------------------

def _dirichlet_spectrum(n: int, p: int):
    op = assemble_pressure_operator(build_basis(p), n, n, bc="dirichlet")
    return op, sp.operator_spectrum_cached(op, f"K_dirichlet_p{p}_n{n}x{n}")


def cmd_spectra(args) -> int:
    sym = builtin_dg_symbol(args.p)
    intervals = sp.reference_intervals(sym)
    if args.sub == "table1":
        rows = []
        for n in _parse_sizes(args.sizes):
            _, eigs = _dirichlet_spectrum(n, args.p)
            rep = sp.outlier_report(eigs, intervals, n)
            counts = sp.interval_counts(eigs, intervals, n)
            rows.append([n, counts.counts[0], counts.expected[0],
                         rep.deficit, f"{rep.ratio_deficit:.2f}"])
        _write(args.output, _csv_text(
            ["n", "eigs_in_first_interval", "expected", "outliers",
             "outliers_over_sqrtN"], rows))
    elif args.sub == "table2":
        rows = []
        for n in _parse_sizes(args.sizes):
            _, eigs = _dirichlet_spectrum(n, args.p)
            rep = sp.outlier_report(eigs, intervals, n)
            rows.append([n, rep.exceedance, f"{rep.ratio_exceedance:.2f}",
                         "exceedance_above_M9"])
        _write(args.output, _csv_text(
            ["n", "outliers", "outliers_over_sqrtN", "definition"], rows))
    elif args.sub == "table3":
        rows = []
        for n in _parse_sizes(args.sizes):
            op = assemble_pressure_operator(build_basis(args.p), n, n)
            rep = extract_boundary_part(op)
            rows.append([n, rep.rank, rep.rank_formula])
        _write(args.output, _csv_text(["n", "rank_E_n", "rank_36n_minus_36"], rows))
    elif args.sub == "compare":
        n = args.n
        _, eigs = _dirichlet_spectrum(n, args.p)
        sample = sample_eigs(sym, n, "half")
        flat = np.sort(sample.flat())
        rows = [[i + 1, f"{eigs[i]:.17g}", f"{flat[i]:.17g}"]
                for i in range(len(eigs))]
        _write(args.output, _csv_text(
            ["index", "operator_eigenvalue", "symbol_sample"], rows))
    elif args.sub == "blocks":
        n = args.n
        _, eigs = _dirichlet_spectrum(n, args.p)
        sample = sample_eigs(sym, n, "half")
        blocks = sp.block_partition(eigs, n)
        levels = ((1, 1), (2, 3), (4, 6), (7, 9))
        rows = []
        idx = 0
        for t, (blk, (lo, hi)) in enumerate(zip(blocks, levels), start=1):
            evals = np.concatenate([sample.level(l) for l in range(lo, hi + 1)])
            match = sp.match_eigs(blk, evals, sample)
            for val, (j, k), res in zip(blk, match.nodes, match.residuals):
                idx += 1
                rows.append([idx, f"{val:.17g}", t, j, k, f"{res:.17g}"])
        _write(args.output, _csv_text(
            ["index", "eigenvalue", "block", "node_j", "node_k", "residual"], rows))
    return EXIT_OK


# -- solve / bench -------------------------------------------------------------

def cmd_solve(args) -> int:
    basis = build_basis(args.p)
    op = assemble_pressure_operature = assemble_pressure_operator(
        basis, args.n, args.n, bc=args.bc)
    b = random_smooth_rhs(op.lattice, seed=args.seed)
    if args.bc == "periodic":
        b = project_out_constant(b)
    precond = None
    if args.pre == "strang":
        precond = build_strang(op.symbol, op.lattice).apply
    x, rep = pcg(op.matvec, precond, b, tol=args.tol)
    rep.preconditioner = args.pre
    _write(args.output, rep.to_json(history=args.history) + "\n")
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_bench(args) -> int:
    rows = bench_iterations(_parse_sizes(args.sizes), p=args.p, bc=args.bc,
                            pre=args.pre, tol=args.tol, seed=args.seed)
    _write(args.output, bench_csv(rows))
    return EXIT_OK if all(r.converged_all for r in rows) else EXIT_NOCONV


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="toepspec",
        description="Spectral analysis and solvers for the staggered DG "
                    "pressure operator family")
    ap.add_argument("--p", type=int, default=2, help="polynomial degree (default 2)")
    ap.add_argument("-o", "--output", default=None, help="output path (default stdout)")
    sub = ap.add_subparsers(dest="command", required=True)

    sym = sub.add_parser("symbol", help="symbol evaluation and sampling")
    sym_sub = sym.add_subparsers(dest="sub", required=True)
    ev = sym_sub.add_parser("eval")
    ev.add_argument("--theta", required=True, help="t1,t2")
    sm = sym_sub.add_parser("sample")
    sm.add_argument("--n", type=int, required=True)
    sm.add_argument("--grid", choices=("half", "periodic"), default="half")
    sym_sub.add_parser("det-taylor")
    iv = sym_sub.add_parser("intervals")
    iv.add_argument("--n", type=int, default=500)

    spc = sub.add_parser("spectra", help="table and figure data")
    spc_sub = spc.add_subparsers(dest="sub", required=True)
    for name in ("table1", "table2", "table3"):
        t = spc_sub.add_parser(name)
        t.add_argument("--sizes", default="10:40:5")
    for name in ("compare", "blocks"):
        t = spc_sub.add_parser(name)
        t.add_argument("--n", type=int, default=40)

    sol = sub.add_parser("solve", help="single CG/PCG solve with seeded RHS")
    sol.add_argument("--n", type=int, required=True)
    sol.add_argument("--bc", choices=("dirichlet", "periodic"), default="dirichlet")
    sol.add_argument("--pre", choices=("none", "strang"), default="none")
    sol.add_argument("--tol", type=float, default=1e-8)
    sol.add_argument("--seed", type=int, default=42)
    sol.add_argument("--history", action="store_true",
                     help="include the residual history in the report")

    ben = sub.add_parser("bench", help="iteration-count benchmark sweep; the "
                         "warm-guess rows emulate time stepping with a "
                         "10-step RHS drift of 1e-2 relative magnitude")
    ben.add_argument("--sizes", required=True)
    ben.add_argument("--bc", choices=("dirichlet", "periodic"), default="dirichlet")
    ben.add_argument("--pre", choices=("none", "strang"), default="none")
    ben.add_argument("--tol", type=float, default=1e-8)
    ben.add_argument("--seed", type=int, default=42)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        if args.command == "symbol":
            return cmd_symbol(args)
        if args.command == "spectra":
            return cmd_spectra(args)
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bench":
            return cmd_bench(args)
    except (SizeGuardError, SpectrumGuardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, SymbolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
