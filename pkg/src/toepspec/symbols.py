"""Matrix-valued trigonometric polynomial symbols and their eigenvalue fields.

A symbol is a finitely supported map from 2-indices to real s x s blocks,
f(theta) = sum_j fhat_j exp(i <j, theta>).  The built-in symbol is the
interior stencil of the staggered DG pressure operator for quadratic
elements (s = 9), stored with exact rational entries.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _exact

HERMITIAN_TOL = 1e-14


class SymbolError(ValueError):
    pass


def _parse_table(rows: list[str]) -> list[list[Fraction]]:
    return [[Fraction(tok) for tok in row.split()] for row in rows]


# Interior stencil blocks of the quadratic (p=2) staggered DG pressure
# operator; exact rationals.  The remaining two blocks are transposes:
# fhat_(1,0) = fhat_(-1,0)^T and fhat_(0,1) = fhat_(0,-1)^T.
_DG_P2_CENTER = _parse_table([
    "127/360 41/480 -43/320 41/480 -1/360 -2/45 -43/320 -2/45 13/288",
    "41/480 103/90 41/480 -1/360 5/24 -1/360 -2/45 -113/240 -2/45",
    "-43/320 41/480 127/360 -2/45 -1/360 41/480 13/288 -2/45 -43/320",
    "41/480 -1/360 -2/45 103/90 5/24 -113/240 41/480 -1/360 -2/45",
    "-1/360 5/24 -1/360 5/24 158/45 5/24 -1/360 5/24 -1/360",
    "-2/45 -1/360 41/480 -113/240 5/24 103/90 -2/45 -1/360 41/480",
    "-43/320 -2/45 13/288 41/480 -1/360 -2/45 127/360 41/480 -43/320",
    "-2/45 -113/240 -2/45 -1/360 5/24 -1/360 41/480 103/90 41/480",
    "13/288 -2/45 -43/320 -2/45 -1/360 41/480 -43/320 41/480 127/360",
])

_DG_P2_WEST = _parse_table([
    "5/288 5/576 -5/1152 23/720 23/1440 -23/2880 -11/1440 -11/2880 11/5760",
    "5/576 5/72 5/576 23/1440 23/180 23/1440 -11/2880 -11/360 -11/2880",
    "-5/1152 5/576 5/288 -23/2880 23/1440 23/720 11/5760 -11/2880 -11/1440",
    "-17/144 -17/288 17/576 -47/360 -47/720 47/1440 23/720 23/1440 -23/2880",
    "-17/288 -17/36 -17/288 -47/720 -47/90 -47/720 23/1440 23/180 23/1440",
    "17/576 -17/288 -17/144 47/1440 -47/720 -47/360 -23/2880 23/1440 23/720",
    "-7/288 -7/576 7/1152 -17/144 -17/288 17/576 5/288 5/576 -5/1152",
    "-7/576 -7/72 -7/576 -17/288 -17/36 -17/288 5/576 5/72 5/576",
    "7/1152 -7/576 -7/288 17/576 -17/288 -17/144 -5/1152 5/576 5/288",
])

_DG_P2_SOUTH = _parse_table([
    "5/288 23/720 -11/1440 5/576 23/1440 -11/2880 -5/1152 -23/2880 11/5760",
    "-17/144 -47/360 23/720 -17/288 -47/720 23/1440 17/576 47/1440 -23/2880",
    "-7/288 -17/144 5/288 -7/576 -17/288 5/576 7/1152 17/576 -5/1152",
    "5/576 23/1440 -11/2880 5/72 23/180 -11/360 5/576 23/1440 -11/2880",
    "-17/288 -47/720 23/1440 -17/36 -47/90 23/180 -17/288 -47/720 23/1440",
    "-7/576 -17/288 5/576 -7/72 -17/36 5/72 -7/576 -17/288 5/576",
    "-5/1152 -23/2880 11/5760 5/576 23/1440 -11/2880 5/288 23/720 -11/1440",
    "17/576 47/1440 -23/2880 -17/288 -47/720 23/1440 -17/144 -47/360 23/720",
    "7/1152 17/576 -5/1152 -7/576 -17/288 5/576 -7/288 -17/144 5/288",
])


class MatrixSymbol:
    """Finitely supported matrix-valued trigonometric polynomial.

    Parameters
    ----------
    coeffs : dict
        Map (j1, j2) -> s x s block.  Blocks may be float arrays or
        Fraction tables; Fraction tables are kept for exact work and
        mirrored into float arrays for evaluation.

    The Hermitian-symbol condition is enforced at construction: the block
    at -j must equal the transpose of the block at j, and the (0, 0)
    block must be symmetric.
    """

    def __init__(self, coeffs: dict):
        if not coeffs:
            raise SymbolError("empty coefficient map")
        self._exact = {}
        self.coeffs = {}
        s = None
        for j, block in coeffs.items():
            j = (int(j[0]), int(j[1]))
            if isinstance(block[0][0], Fraction):
                self._exact[j] = [list(row) for row in block]
                arr = np.array([[float(x) for x in row] for row in block])
            else:
                arr = np.asarray(block, dtype=float)
            if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
                raise SymbolError(f"block at {j} is not square")
            if s is None:
                s = arr.shape[0]
            elif arr.shape[0] != s:
                raise SymbolError("inconsistent block sizes")
            self.coeffs[j] = arr
        self.s = s
        self._check_hermitian_condition()
        self.degree = (max(abs(j[0]) for j in self.coeffs),
                       max(abs(j[1]) for j in self.coeffs))

    def _check_hermitian_condition(self):
        for j, blk in self.coeffs.items():
            neg = (-j[0], -j[1])
            if neg not in self.coeffs:
                raise SymbolError(f"missing block at {neg} for Hermitian condition")
            err = np.abs(self.coeffs[neg] - blk.T).max()
            scale = max(np.abs(blk).max(), 1.0)
            if err > HERMITIAN_TOL * scale:
                raise SymbolError(f"block at {neg} is not the transpose of block at {j}")

    @property
    def support(self):
        return sorted(self.coeffs)

    @property
    def is_exact(self) -> bool:
        return set(self._exact) == set(self.coeffs)

    def exact_block(self, j):
        return self._exact.get(tuple(j))

    def eval(self, theta) -> np.ndarray:
        """f(theta) as a complex Hermitian s x s matrix."""
        t1, t2 = float(theta[0]), float(theta[1])
        out = np.zeros((self.s, self.s), dtype=complex)
        for (j1, j2), blk in self.coeffs.items():
            out += blk * np.exp(1j * (j1 * t1 + j2 * t2))
        return out

    def eval_grid(self, theta1, theta2) -> np.ndarray:
        """Vectorized evaluation: returns an array of shape (..., s, s)."""
        t1 = np.asarray(theta1, dtype=float)
        t2 = np.asarray(theta2, dtype=float)
        out = np.zeros(t1.shape + (self.s, self.s), dtype=complex)
        for (j1, j2), blk in self.coeffs.items():
            out += np.exp(1j * (j1 * t1 + j2 * t2))[..., None, None] * blk
        return out

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        entries = []
        for j in self.support:
            if j in self._exact:
                block = [[str(x) for x in row] for row in self._exact[j]]
            else:
                block = [[repr(float(x)) for x in row] for row in self.coeffs[j]]
            entries.append({"j": list(j), "block": block})
        return json.dumps({"s": self.s, "coeffs": entries}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MatrixSymbol":
        data = json.loads(text)
        coeffs = {}
        for entry in data["coeffs"]:
            j = tuple(entry["j"])
            rows = entry["block"]
            if any("/" in str(x) for row in rows for x in row):
                coeffs[j] = [[Fraction(str(x)) for x in row] for row in rows]
            else:
                coeffs[j] = [[float(x) for x in row] for row in rows]
        sym = cls(coeffs)
        if sym.s != data["s"]:
            raise SymbolError("declared block size does not match blocks")
        return sym


def builtin_dg_symbol(p: int = 2) -> MatrixSymbol:
    """The pressure-stencil symbol with published exact coefficients.

    Only p = 2 has tabulated coefficients; other degrees must be produced
    by the assembly module (``toepspec.assembly.symbol_from_basis``).
    """
    if p != 2:
        raise SymbolError(f"no builtin coefficients for p={p}; assemble them instead")
    west = _DG_P2_WEST
    south = _DG_P2_SOUTH
    return MatrixSymbol({
        (0, 0): _DG_P2_CENTER,
        (-1, 0): west,
        (1, 0): _exact.mat_t(west),
        (0, -1): south,
        (0, 1): _exact.mat_t(south),
    })


def scalar_symbol(coeffs: dict) -> MatrixSymbol:
    """Convenience wrapper: scalar (s=1) symbol from {j: value}."""
    return MatrixSymbol({j: [[v]] for j, v in coeffs.items()})


# -- eigenvalue sampling ---------------------------------------------------

@dataclass(frozen=True)
class EigenSample:
    """Ascending eigenvalue fields of a symbol on an equispaced grid.

    ``eigs`` has shape (n, n, s): node (j, k) in row-major order, levels
    ascending along the last axis.  ``grid_kind`` is "half" for the grid
    {(j pi/n, k pi/n)} on [0, pi)^2 or "periodic" for {(2 pi j/n, ...)} on
    [0, 2 pi)^2.
    """
    n: int
    grid_kind: str
    eigs: np.ndarray

    @property
    def s(self) -> int:
        return self.eigs.shape[2]

    @property
    def nodes(self) -> np.ndarray:
        step = np.pi / self.n if self.grid_kind == "half" else 2 * np.pi / self.n
        return step * np.arange(self.n)

    def level(self, l: int) -> np.ndarray:
        """Sample vector of the l-th eigenvalue function (1-based), n^2 long."""
        return self.eigs[:, :, l - 1].ravel()

    def flat(self) -> np.ndarray:
        """All samples ordered level-major (level 1 nodes first)."""
        return np.concatenate([self.level(l) for l in range(1, self.s + 1)])

    @property
    def intervals(self) -> np.ndarray:
        """(s, 2) array of per-level sample extremes [m_l, M_l]."""
        flat = self.eigs.reshape(-1, self.s)
        return np.stack([flat.min(axis=0), flat.max(axis=0)], axis=1)

    def to_csv(self) -> str:
        t = self.nodes
        lines = ["l,j,k,theta1,theta2,lambda"]
        for l in range(self.s):
            for j in range(self.n):
                for k in range(self.n):
                    lines.append(f"{l + 1},{j},{k},{t[j]:.17g},{t[k]:.17g},"
                                 f"{self.eigs[j, k, l]:.17g}")
        return "\n".join(lines) + "\n"


def sample_eigs(sym: MatrixSymbol, n: int, grid_kind: str = "half",
                block_rows: int = 4096) -> EigenSample:
    """Ascending eigenvalues of f on G_n ("half") or J_n ("periodic").

    Deterministic: nodes are evaluated in a fixed order and written to
    preassigned slots, so the result does not depend on batching.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if grid_kind not in ("half", "periodic"):
        raise ValueError(f"unknown grid kind {grid_kind!r}")
    step = np.pi / n if grid_kind == "half" else 2 * np.pi / n
    t = step * np.arange(n)
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    t1, t2 = t1.ravel(), t2.ravel()
    out = np.empty((n * n, sym.s))
    for lo in range(0, n * n, block_rows):
        hi = min(lo + block_rows, n * n)
        out[lo:hi] = np.linalg.eigvalsh(sym.eval_grid(t1[lo:hi], t2[lo:hi]))
    return EigenSample(n=n, grid_kind=grid_kind, eigs=out.reshape(n, n, sym.s))


# -- determinant Taylor data at the origin ----------------------------------

def _weighted_sums(sym: MatrixSymbol, exact: bool):
    """F0 = f(0); G_k = sum j_k fhat_j; Fkl = -sum j_k j_l fhat_j."""
    if exact:
        s = sym.s
        z = _exact.zeros(s, s)
        acc = {key: z for key in ("F0", "G1", "G2", "F11", "F22", "F12")}
        for (j1, j2), _ in sym.coeffs.items():
            blk = sym.exact_block((j1, j2))
            acc["F0"] = _exact.mat_add(acc["F0"], blk)
            if j1:
                acc["G1"] = _exact.mat_add(acc["G1"], _exact.mat_scale(blk, Fraction(j1)))
                acc["F11"] = _exact.mat_add(acc["F11"], _exact.mat_scale(blk, Fraction(-j1 * j1)))
            if j2:
                acc["G2"] = _exact.mat_add(acc["G2"], _exact.mat_scale(blk, Fraction(j2)))
                acc["F22"] = _exact.mat_add(acc["F22"], _exact.mat_scale(blk, Fraction(-j2 * j2)))
            if j1 and j2:
                acc["F12"] = _exact.mat_add(acc["F12"], _exact.mat_scale(blk, Fraction(-j1 * j2)))
        return acc
    acc = {key: np.zeros((sym.s, sym.s)) for key in ("F0", "G1", "G2", "F11", "F22", "F12")}
    for (j1, j2), blk in sym.coeffs.items():
        acc["F0"] += blk
        acc["G1"] += j1 * blk
        acc["G2"] += j2 * blk
        acc["F11"] -= j1 * j1 * blk
        acc["F22"] -= j2 * j2 * blk
        acc["F12"] -= j1 * j2 * blk
    return acc


def _det_replace(base, repl, cols, exact: bool):
    """det of `base` with the listed columns taken from the paired matrices."""
    if exact:
        m = [list(row) for row in base]
        for c, src in cols:
            for r in range(len(m)):
                m[r][c] = src[r][c]
        return _exact.mat_det(m)
    m = np.array(base, dtype=float, copy=True)
    for c, src in cols:
        m[:, c] = np.asarray(src)[:, c]
    return float(np.linalg.det(m))


def det_taylor_at_origin(sym: MatrixSymbol):
    """Value, gradient and Hessian of det f at theta = (0, 0).

    Uses the multilinear column expansion of the determinant applied to
    the exact second-order matrix Taylor polynomial of f, so the result is
    exact (rational) whenever the symbol stores exact coefficients.  The
    i-factors from the first-order terms are tracked by sign: products of
    two first-order columns contribute with weight -1.
    """
    exact = sym.is_exact
    w = _weighted_sums(sym, exact)
    s = sym.s
    zero = Fraction(0) if exact else 0.0

    value = _det_replace(w["F0"], None, [], exact)

    grad = []
    for g in (w["G1"], w["G2"]):
        acc = zero
        for c in range(s):
            acc += _det_replace(w["F0"], None, [(c, g)], exact)
        # the true gradient entry is i * acc, which must be real: acc == 0
        grad.append(acc)

    def quad(gk, gl, fkl, diagonal):
        acc = zero
        for c in range(s):
            acc += _det_replace(w["F0"], None, [(c, fkl)], exact)
        pair = zero
        for c in range(s):
            for d in range(c + 1, s):
                pair += _det_replace(w["F0"], None, [(c, gk), (d, gl)], exact)
                if not diagonal:
                    pair += _det_replace(w["F0"], None, [(c, gl), (d, gk)], exact)
        if diagonal:
            # d^2/dtheta_k^2 = 2 * (coefficient of theta_k^2)
            return acc - 2 * pair
        return acc - pair

    h11 = quad(w["G1"], w["G1"], w["F11"], diagonal=True)
    h22 = quad(w["G2"], w["G2"], w["F22"], diagonal=True)
    h12 = quad(w["G1"], w["G2"], w["F12"], diagonal=False)

    conv = float if not exact else (lambda x: x)
    hess = [[conv(h11), conv(h12)], [conv(h12), conv(h22)]]
    return conv(value), [conv(g) for g in grad], hess


def det_taylor_fd(sym: MatrixSymbol, h: float = 1e-4):
    """Finite-difference cross-check of det_taylor_at_origin.

    Central differences with one Richardson step (h, h/2).
    """
    def det(t1, t2):
        return float(np.linalg.det(sym.eval((t1, t2))).real)

    def stencil(h):
        d0 = det(0.0, 0.0)
        g1 = (det(h, 0) - det(-h, 0)) / (2 * h)
        g2 = (det(0, h) - det(0, -h)) / (2 * h)
        h11 = (det(h, 0) - 2 * d0 + det(-h, 0)) / h**2
        h22 = (det(0, h) - 2 * d0 + det(0, -h)) / h**2
        h12 = (det(h, h) - det(h, -h) - det(-h, h) + det(-h, -h)) / (4 * h**2)
        return np.array([g1, g2, h11, h22, h12]), d0

    coarse, d0 = stencil(h)
    fine, _ = stencil(h / 2)
    rich = (4 * fine - coarse) / 3
    grad = [rich[0], rich[1]]
    hess = [[rich[2], rich[4]], [rich[4], rich[3]]]
    return d0, grad, hess


def min_eig_zero_order(sample: EigenSample, radius: float = np.pi / 2) -> float:
    """Exponent alpha of the minimal eigenvalue function's zero at the origin.

    Bins the grid nodes with 0 < |theta| <= radius into geometric radius
    shells, takes the minimum of lambda_1 per shell and fits the log-log
    slope.  Requires a grid fine enough to populate several shells.
    """
    if sample.n < 8:
        raise ValueError("sample too coarse for a zero-order fit (need n >= 8)")
    t = sample.nodes
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    r = np.hypot(t1, t2).ravel()
    lam = sample.eigs[:, :, 0].ravel()
    mask = (r > 0) & (r <= radius)
    r, lam = r[mask], lam[mask]
    edges = np.geomspace(r.min() * 0.999, radius, 12)
    logs_r, logs_l = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = np.flatnonzero((r >= lo) & (r < hi))
        if sel.size:
            at = sel[np.argmin(lam[sel])]
            logs_r.append(np.log(r[at]))
            logs_l.append(np.log(lam[at]))
    if len(logs_r) < 3:
        raise ValueError("not enough radius shells for a fit")
    slope, _ = np.polyfit(logs_r, logs_l, 1)
    return float(slope)
