"""2-level block Toeplitz and circulant matrices generated by a symbol.

Unknown ordering: the block coordinate is fastest, then the level-2 index,
then the level-1 index, i.e. linear index ((i1 * n2) + i2) * s + b.  With
this ordering the dense matrices are the Kronecker sums
sum_j J_{n1}^{j1} (x) J_{n2}^{j2} (x) fhat_j (Toeplitz) and the same with
periodic shift matrices (circulant).
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse

from .symbols import MatrixSymbol

DENSE_GUARD = 40_000


class SizeGuardError(ValueError):
    pass


@dataclass(frozen=True)
class BlockLattice:
    """Dimensions tying the grid to the matrix order N = s * n1 * n2."""
    n1: int
    n2: int
    s: int

    def __post_init__(self):
        if min(self.n1, self.n2, self.s) < 1:
            raise ValueError("lattice dimensions must be positive")

    @property
    def n_hat(self) -> int:
        return self.n1 * self.n2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2, self.s)

    @property
    def order(self) -> int:
        return self.s * self.n_hat

    def grid_vec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.order:
            raise ValueError(f"vector length {x.shape[-1]} != N = {self.order}")
        return x.reshape(x.shape[:-1] + self.shape)

    def flat_vec(self, g: np.ndarray) -> np.ndarray:
        return np.asarray(g).reshape(g.shape[:-3] + (self.order,))


def _guard(lattice: BlockLattice):
    if lattice.order > DENSE_GUARD:
        raise SizeGuardError(
            f"dense construction of order {lattice.order} exceeds guard {DENSE_GUARD}")


def _shift(n: int, j: int, periodic: bool) -> np.ndarray:
    """Matrix with (i, h) entry 1 when i - h == j (mod n if periodic)."""
    m = np.zeros((n, n))
    for i in range(n):
        h = i - j
        if periodic:
            m[i, h % n] = 1.0
        elif 0 <= h < n:
            m[i, h] = 1.0
    return m


def _dense(sym: MatrixSymbol, lattice: BlockLattice, periodic: bool) -> np.ndarray:
    _guard(lattice)
    if sym.s != lattice.s:
        raise ValueError("symbol block size does not match lattice")
    out = np.zeros((lattice.order, lattice.order))
    for (j1, j2), blk in sym.coeffs.items():
        out += np.kron(_shift(lattice.n1, j1, periodic),
                       np.kron(_shift(lattice.n2, j2, periodic), blk))
    return out


class BlockToeplitz:
    """T_n(f): matrix-free operator with dense export for small orders."""

    def __init__(self, lattice: BlockLattice, symbol: MatrixSymbol):
        if symbol.s != lattice.s:
            raise ValueError("symbol block size does not match lattice")
        self.lattice = lattice
        self.symbol = symbol

    @property
    def shape(self):
        n = self.lattice.order
        return (n, n)

    def dense(self) -> np.ndarray:
        return _dense(self.symbol, self.lattice, periodic=False)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Direct stencil application, cost O(|support| s^2 n_hat)."""
        lat = self.lattice
        g = lat.grid_vec(np.asarray(x, dtype=float if np.isrealobj(x) else complex))
        out = np.zeros_like(g)
        n1, n2 = lat.n1, lat.n2
        for (j1, j2), blk in self.symbol.coeffs.items():
            # rows i receive blk @ x[i - j] for i - j inside the lattice
            r1lo, r1hi = max(0, j1), n1 + min(0, j1)
            r2lo, r2hi = max(0, j2), n2 + min(0, j2)
            if r1lo >= r1hi or r2lo >= r2hi:
                continue
            src = g[r1lo - j1:r1hi - j1, r2lo - j2:r2hi - j2]
            out[r1lo:r1hi, r2lo:r2hi] += src @ blk.T
        return lat.flat_vec(out)

    def matvec_embedded(self, x: np.ndarray) -> np.ndarray:
        """Same product via embedding into a circulant on a padded lattice."""
        lat = self.lattice
        d1, d2 = self.symbol.degree
        big = BlockLattice(lat.n1 + d1, lat.n2 + d2, lat.s)
        circ = BlockCirculant(big, self.symbol)
        pad = np.zeros(big.shape, dtype=np.asarray(x).dtype)
        pad[:lat.n1, :lat.n2] = lat.grid_vec(np.asarray(x))
        res = big.grid_vec(circ.matvec(big.flat_vec(pad)))
        return lat.flat_vec(res[:lat.n1, :lat.n2])

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.dense())

    def export_mm(self, path):
        export_dense_mm(self.dense(), path)


class BlockCirculant:
    """C_n(f): block-Schur diagonalized by the 2-level Fourier matrix."""

    def __init__(self, lattice: BlockLattice, symbol: MatrixSymbol):
        if symbol.s != lattice.s:
            raise ValueError("symbol block size does not match lattice")
        self.lattice = lattice
        self.symbol = symbol
        self._blocks = None

    @property
    def shape(self):
        n = self.lattice.order
        return (n, n)

    def dense(self) -> np.ndarray:
        return _dense(self.symbol, self.lattice, periodic=True)

    def spectral_blocks(self) -> np.ndarray:
        """The n1 x n2 Hermitian blocks S_n(f)(theta_r), theta_r = 2 pi r / n.

        Evaluating f at the grid nodes aliases every coefficient with
        index j onto j mod n, so this equals the folded Fourier sum for
        every lattice size, not only n past twice the degree.
        """
        if self._blocks is None:
            lat = self.lattice
            t1 = 2 * np.pi * np.arange(lat.n1) / lat.n1
            t2 = 2 * np.pi * np.arange(lat.n2) / lat.n2
            g1, g2 = np.meshgrid(t1, t2, indexing="ij")
            self._blocks = self.symbol.eval_grid(g1, g2)
        return self._blocks

    def eigenvalues(self) -> np.ndarray:
        """All s * n_hat eigenvalues, ascending, from the spectral blocks."""
        return np.sort(np.linalg.eigvalsh(self.spectral_blocks()).ravel())

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """(F (x) I_s) D (F (x) I_s)^* x via FFTs over the two level axes.

        Real input with a real-coefficient symbol returns a real vector;
        the discarded imaginary part is below 1e-12 * |x|.
        """
        lat = self.lattice
        x = np.asarray(x)
        g = lat.grid_vec(x.astype(complex))
        w = np.fft.ifft2(g, axes=(0, 1))
        w = np.einsum("jkab,jkb->jka", self.spectral_blocks(), w)
        y = np.fft.fft2(w, axes=(0, 1))
        y = lat.flat_vec(y)
        if np.isrealobj(x) and all(np.isrealobj(b) for b in self.symbol.coeffs.values()):
            return y.real
        return y

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Exact solve through the block-Schur form (blocks must be regular)."""
        lat = self.lattice
        w = np.fft.ifft2(lat.grid_vec(np.asarray(b, dtype=complex)), axes=(0, 1))
        w = np.linalg.solve(self.spectral_blocks(), w[..., None])[..., 0]
        y = lat.flat_vec(np.fft.fft2(w, axes=(0, 1)))
        return y.real if np.isrealobj(b) else y

    def export_spectral_blocks_json(self) -> str:
        import json
        blocks = self.spectral_blocks()
        lat = self.lattice
        entries = []
        for r1 in range(lat.n1):
            for r2 in range(lat.n2):
                entries.append({
                    "r": [r1, r2],
                    "block_real": blocks[r1, r2].real.tolist(),
                    "block_imag": blocks[r1, r2].imag.tolist(),
                })
        return json.dumps({"s": lat.s, "n": [lat.n1, lat.n2], "blocks": entries})

    def export_mm(self, path):
        export_dense_mm(self.dense(), path)


def toeplitz_dense(sym: MatrixSymbol, lattice: BlockLattice) -> np.ndarray:
    return BlockToeplitz(lattice, sym).dense()


def circulant_dense(sym: MatrixSymbol, lattice: BlockLattice) -> np.ndarray:
    return BlockCirculant(lattice, sym).dense()


def export_dense_mm(a: np.ndarray, path) -> None:
    """Matrix Market coordinate export (symmetric when the matrix is)."""
    sp = scipy.sparse.coo_matrix(a)
    symmetry = "symmetric" if np.allclose(a, a.T, atol=1e-14) else "general"
    if symmetry == "symmetric":
        sp = scipy.sparse.tril(sp)
    scipy.io.mmwrite(path, sp, symmetry=symmetry)


def export_sparse_mm(a, path) -> None:
    scipy.io.mmwrite(path, scipy.sparse.coo_matrix(a), symmetry="symmetric")
