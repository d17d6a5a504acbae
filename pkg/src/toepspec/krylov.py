"""Conjugate gradients with an FFT-applied corrected circulant preconditioner.

The preconditioner is the block circulant generated by the operator's
symbol plus the rank-one shift e e^T / N^2 that removes the singular
zero-frequency block; its application costs two 2-level FFTs and one
batched s x s solve per Krylov step.
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .structured import BlockCirculant, BlockLattice
from .symbols import MatrixSymbol


class IndefiniteOperatorError(RuntimeError):
    pass


class PreconditionerError(RuntimeError):
    pass


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    tol: float
    atol: float
    wall_time: float
    preconditioner: str = "none"

    @property
    def final_relative_residual(self) -> float:
        return self.residual_history[-1] / max(self.residual_history[0], 1e-300)

    def to_json(self, history: bool = False) -> str:
        import json
        data = {
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol,
            "atol": self.atol,
            "wall_time_s": self.wall_time,
            "preconditioner": self.preconditioner,
            "final_residual": self.residual_history[-1],
            "final_relative_residual": self.final_relative_residual,
        }
        if history:
            data["residual_history"] = self.residual_history
        return json.dumps(data, indent=1)


def _threshold(tol, atol, r0):
    return max(tol * r0, atol)


def cg(matvec, b, x0=None, tol: float = 1e-8, atol: float = 0.0,
       max_iter: int | None = None):
    """Conjugate gradient for a symmetric positive (semi)definite operator.

    Stops when ||r_k|| <= max(tol * ||r_0||, atol).  Returns (x, report).
    A non-positive curvature p^T A p aborts with IndefiniteOperatorError.
    """
    return pcg(matvec, None, b, x0=x0, tol=tol, atol=atol, max_iter=max_iter)


def pcg(matvec, precond, b, x0=None, tol: float = 1e-8, atol: float = 0.0,
        max_iter: int | None = None):
    """Preconditioned CG; ``precond`` maps r to an approximate solve, or None."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if max_iter is None:
        max_iter = b.size
    start = time.perf_counter()
    r = b - matvec(x)
    r0 = float(np.linalg.norm(r))
    history = [r0]
    stop = _threshold(tol, atol, r0)
    label = "none" if precond is None else "custom"
    if r0 <= stop:
        return x, SolveReport(0, history, True, tol, atol,
                              time.perf_counter() - start, label)
    z = r if precond is None else precond(r)
    p = z.copy()
    rz = float(r @ z)
    converged = False
    k = 0
    while k < max_iter:
        ap = matvec(p)
        curv = float(p @ ap)
        if curv <= 0:
            raise IndefiniteOperatorError(
                f"non-positive curvature p^T A p = {curv:.3e} at iteration {k}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * ap
        k += 1
        rn = float(np.linalg.norm(r))
        history.append(rn)
        if rn <= stop:
            converged = True
            break
        z = r if precond is None else precond(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(k, history, converged, tol, atol,
                          time.perf_counter() - start, label)


class StrangPreconditioner:
    """Corrected block circulant in block-Schur form, applied via FFT.

    The zero-frequency block receives the rank-one shift
    (1 / (s^2 n_hat)) e_s e_s^T, the Fourier-space image of e e^T / N^2.
    """

    def __init__(self, lattice: BlockLattice, symbol: MatrixSymbol):
        self.lattice = lattice
        self.symbol = symbol
        circ = BlockCirculant(lattice, symbol)
        blocks = circ.spectral_blocks().copy()
        s = lattice.s
        zero_block = blocks[0, 0].real
        kernel_residual = float(np.abs(zero_block @ np.ones(s)).max())
        self.zero_block_has_ones_kernel = kernel_residual <= 1e-12 * max(
            1.0, np.abs(zero_block).max())
        blocks[0, 0] = blocks[0, 0] + np.ones((s, s)) / (s * s * lattice.n_hat)
        eigs = np.linalg.eigvalsh(blocks)
        if eigs.min() <= 0:
            bad = np.unravel_index(int(np.argmin(eigs[..., 0])), eigs.shape[:2])
            raise PreconditionerError(
                "corrected spectral block at r=%s is singular; eigenvalues %s"
                % (bad, eigs[bad]))
        self.block_condition = float(eigs.max() / eigs.min())
        self._inv = np.linalg.inv(blocks)

    def apply(self, r: np.ndarray) -> np.ndarray:
        """z = P^{-1} r through forward FFT, block solves, inverse FFT."""
        lat = self.lattice
        w = np.fft.ifft2(lat.grid_vec(np.asarray(r, dtype=complex)), axes=(0, 1))
        w = np.einsum("jkab,jkb->jka", self._inv, w)
        return lat.flat_vec(np.fft.fft2(w, axes=(0, 1))).real

    def dense(self) -> np.ndarray:
        circ = BlockCirculant(self.lattice, self.symbol)
        n = self.lattice.order
        return circ.dense() + np.ones((n, n)) / (n * n)

    def __call__(self, r):
        return self.apply(r)


def build_strang(sym: MatrixSymbol, lattice: BlockLattice) -> StrangPreconditioner:
    return StrangPreconditioner(lattice, sym)


def project_out_constant(v: np.ndarray) -> np.ndarray:
    """Remove the component along the all-ones vector (periodic null mode)."""
    v = np.asarray(v, dtype=float)
    return v - v.mean()


def random_smooth_rhs(lattice: BlockLattice, seed: int = 42,
                      decay: float = 2.0) -> np.ndarray:
    """Seeded random right-hand side with an algebraically decaying spectrum."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(lattice.shape)
    freq = np.fft.fft2(noise, axes=(0, 1))
    k1 = np.fft.fftfreq(lattice.n1) * lattice.n1
    k2 = np.fft.fftfreq(lattice.n2) * lattice.n2
    rad = np.hypot(*np.meshgrid(k1, k2, indexing="ij"))
    freq *= (1.0 + rad[..., None]) ** (-decay)
    b = lattice.flat_vec(np.fft.ifft2(freq, axes=(0, 1)).real)
    return b / np.linalg.norm(b)


@dataclass
class BenchRow:
    n: int
    N: int
    solver: str
    guess_mode: str
    avg_iters: float
    avg_ms: float
    converged_all: bool


def bench_iterations(sizes, p: int = 2, bc: str = "dirichlet",
                     pre: str = "none", tol: float = 1e-8, seed: int = 42,
                     steps: int = 10, drift: float = 1e-2,
                     max_iter: int | None = None) -> list[BenchRow]:
    """Average CG/PCG iteration counts over a slowly drifting RHS sequence.

    Emulates a time-stepping run: b_t = b + t * db with |db| = drift * |b|,
    solved with a trivial guess (x0 = b_t) and with a warm guess (x0 =
    previous solution).  The stopping threshold is absolute, fixed for the
    whole sequence at tol times the initial residual of the first trivial
    solve, so a good guess genuinely reduces the count.
    """
    from .assembly import assemble_pressure_operator, build_basis

    basis = build_basis(p)
    rows = []
    for n in sizes:
        op = assemble_pressure_operator(basis, n, n, bc=bc)
        lat = op.lattice
        matvec = op.matvec
        precond = None
        if pre == "strang":
            precond = build_strang(op.symbol, lat).apply
        elif pre != "none":
            raise ValueError(f"unknown preconditioner {pre!r}")
        b = random_smooth_rhs(lat, seed=seed)
        db = drift * random_smooth_rhs(lat, seed=seed + 1)
        if bc == "periodic":
            b, db = project_out_constant(b), project_out_constant(db)
        atol = tol * float(np.linalg.norm(b - matvec(b)))
        for guess_mode in ("trivial", "warm"):
            iters, elapsed, all_ok = [], [], True
            prev = None
            for t in range(steps):
                bt = b + t * db
                x0 = bt if guess_mode == "trivial" or prev is None else prev
                try:
                    x, rep = pcg(matvec, precond, bt, x0=x0, tol=0.0,
                                 atol=atol, max_iter=max_iter)
                    prev = x
                    iters.append(rep.iterations)
                    elapsed.append(rep.wall_time * 1e3)
                    all_ok &= rep.converged
                except IndefiniteOperatorError:
                    all_ok = False
            rows.append(BenchRow(
                n=n, N=lat.order,
                solver="cg" if precond is None else "pcg",
                guess_mode=guess_mode,
                avg_iters=float(np.mean(iters)) if iters else float("nan"),
                avg_ms=float(np.mean(elapsed)) if elapsed else float("nan"),
                converged_all=all_ok))
    return rows


def bench_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "N", "solver", "guess_mode", "avg_iters",
                     "avg_ms", "converged_all"])
    for r in rows:
        writer.writerow([r.n, r.N, r.solver, r.guess_mode,
                         f"{r.avg_iters:.1f}", f"{r.avg_ms:.3f}",
                         str(r.converged_all).lower()])
    return buf.getvalue()
