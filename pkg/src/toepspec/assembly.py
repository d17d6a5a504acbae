"""Staggered DG pressure operator on a uniform 2D grid.

Pressure lives on main-grid cells, velocity on edge-centered dual cells
that straddle two neighbouring main cells.  Eliminating the velocity from
the coupled gradient/divergence system leaves a block-pentadiagonal
pressure operator whose interior stencil is a 2-level Toeplitz stencil;
Dirichlet data enters through half-width dual cells hugging the boundary
and only perturbs the center block of boundary cells.

All reference-element integrals are rational and evaluated exactly, so
the interior stencil reproduces the published coefficient tables to the
last bit (unit cell size and unit time step).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _exact
from ._exact import (Mat, kron, lagrange_basis, mat_add, mat_inv, mat_mul,
                     mat_scale, mat_t, poly_compose_affine, poly_deriv,
                     poly_eval, poly_integral, poly_mul)
from .structured import BlockLattice, BlockToeplitz, export_sparse_mm
from .symbols import MatrixSymbol, builtin_dg_symbol

STENCIL_ANCHOR_TOL = 1e-13

HALF = Fraction(1, 2)


class AssemblyError(RuntimeError):
    pass


def _tofl(a: Mat) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in a])


@dataclass
class Basis1D:
    """Nodal Lagrange basis on [0, 1] with staggered coupling matrices.

    ``coupling_right``/``coupling_left`` act in the momentum equation of a
    dual cell (pressure of the right/left main cell), ``div_left``/
    ``div_right`` in the divergence over a main cell (velocity of the
    right/left dual cell); the boundary variants are the half-width dual
    cell versions.  All matrices are (p+1) x (p+1) Fraction tables.
    """
    p: int
    nodes: list[Fraction]
    mass: Mat
    coupling_right: Mat      # \tilde R
    coupling_left: Mat       # \tilde L
    div_left: Mat            # \bar L
    div_right: Mat           # \bar R
    boundary_coupling_left: Mat = field(repr=False, default=None)   # at x = 0
    boundary_div_left: Mat = field(repr=False, default=None)
    boundary_coupling_right: Mat = field(repr=False, default=None)  # at x = 1
    boundary_div_right: Mat = field(repr=False, default=None)

    @property
    def mass_float(self) -> np.ndarray:
        return _tofl(self.mass)


def build_basis(p: int) -> Basis1D:
    """Equispaced nodal basis of degree p with exact staggered couplings.

    The dual-cell gradient integrals include the pressure jump at the
    straddled edge; pairing identities (div_left == coupling_left^T etc.)
    are asserted, they are what makes the pressure operator symmetric.
    """
    if p < 1:
        raise ValueError("polynomial degree must be >= 1")
    q = p + 1
    nodes = [Fraction(m, p) for m in range(q)]
    phi = lagrange_basis(nodes)
    dphi = [poly_deriv(b) for b in phi]

    mass = [[poly_integral(poly_mul(phi[k], phi[l]), 0, 1) for l in range(q)]
            for k in range(q)]

    cr = _exact.zeros(q, q)
    cl = _exact.zeros(q, q)
    for k in range(q):
        for m in range(q):
            cr[k][m] = (poly_integral(
                poly_mul(phi[k], poly_compose_affine(dphi[m], 1, -HALF)), HALF, 1)
                + poly_eval(phi[k], HALF) * poly_eval(phi[m], 0))
            cl[k][m] = (poly_eval(phi[k], HALF) * poly_eval(phi[m], 1)
                        - poly_integral(
                poly_mul(phi[k], poly_compose_affine(dphi[m], 1, HALF)), 0, HALF))
    dl = _exact.zeros(q, q)
    dr = _exact.zeros(q, q)
    for m in range(q):
        for k in range(q):
            dl[m][k] = (poly_integral(
                poly_mul(phi[m], poly_compose_affine(dphi[k], 1, -HALF)), HALF, 1)
                + poly_eval(phi[m], HALF) * poly_eval(phi[k], 0))
            dr[m][k] = (poly_eval(phi[m], HALF) * poly_eval(phi[k], 1)
                        - poly_integral(
                poly_mul(phi[m], poly_compose_affine(dphi[k], 1, HALF)), 0, HALF))

    # half-width dual cell at the left wall: squeezed basis phi(2x) on
    # [0, 1/2], Dirichlet datum enters through the x = 0 jump
    bcl = _exact.zeros(q, q)
    bdl = _exact.zeros(q, q)
    for k in range(q):
        sq = poly_compose_affine(phi[k], 2, 0)
        dsq = poly_compose_affine(dphi[k], 2, 0)
        for m in range(q):
            bcl[k][m] = (poly_eval(phi[k], 0) * poly_eval(phi[m], 0)
                         + poly_integral(poly_mul(sq, dphi[m]), 0, HALF))
            bdl[m][k] = (poly_eval(phi[m], HALF) * poly_eval(phi[k], 1)
                         - 2 * poly_integral(poly_mul(phi[m], dsq), 0, HALF))
    # mirrored half-width dual cell at the right wall, basis phi(2x - 1)
    bcr = _exact.zeros(q, q)
    bdr = _exact.zeros(q, q)
    for k in range(q):
        sq = poly_compose_affine(phi[k], 2, -1)
        dsq = poly_compose_affine(dphi[k], 2, -1)
        for m in range(q):
            bcr[k][m] = (poly_eval(phi[k], 1) * poly_eval(phi[m], 1)
                         - poly_integral(poly_mul(sq, dphi[m]), HALF, 1))
            bdr[m][k] = (poly_eval(phi[m], HALF) * poly_eval(phi[k], 0)
                         + 2 * poly_integral(poly_mul(phi[m], dsq), HALF, 1))

    basis = Basis1D(p=p, nodes=nodes, mass=mass,
                    coupling_right=cr, coupling_left=cl,
                    div_left=dl, div_right=dr,
                    boundary_coupling_left=bcl, boundary_div_left=bdl,
                    boundary_coupling_right=bcr, boundary_div_right=bdr)
    _validate_basis(basis)
    return basis


def _validate_basis(b: Basis1D):
    if b.div_left != mat_t(b.coupling_left) or b.div_right != mat_t(b.coupling_right):
        raise AssemblyError("divergence couplings are not transposes of the "
                            "gradient couplings; operator would be unsymmetric")
    if b.boundary_div_left != mat_t(b.boundary_coupling_left):
        raise AssemblyError("left boundary couplings fail the transpose pairing")
    if b.boundary_div_right != mat_t(b.boundary_coupling_right):
        raise AssemblyError("right boundary couplings fail the transpose pairing")
    eigs = np.linalg.eigvalsh(b.mass_float)
    if eigs[0] <= 0:
        raise AssemblyError("reference mass matrix is not positive definite")


@dataclass
class HOperators:
    """1D three-term pressure stencil and its boundary-modified centers.

    center_left/center_right replace `center` in the first/last cell of a
    Dirichlet row; the half-width dual cell contributes with weight 2
    because its mass matrix is half the reference one.
    """
    right: Mat
    left: Mat
    center: Mat
    center_left: Mat
    center_right: Mat

    def as_float(self):
        return {k: _tofl(getattr(self, k))
                for k in ("right", "left", "center", "center_left", "center_right")}


def build_h_operators(basis: Basis1D) -> HOperators:
    """Eliminate the dual-cell velocity: H^R = -(L. M^-1 R~) and friends."""
    try:
        minv = mat_inv(basis.mass)
    except ZeroDivisionError as exc:
        raise AssemblyError("singular reference mass matrix") from exc
    hr = mat_scale(mat_mul(basis.div_left, mat_mul(minv, basis.coupling_right)), -1)
    hl = mat_scale(mat_mul(basis.div_right, mat_mul(minv, basis.coupling_left)), -1)
    hc = mat_add(mat_mul(basis.div_left, mat_mul(minv, basis.coupling_left)),
                 mat_mul(basis.div_right, mat_mul(minv, basis.coupling_right)))
    hc_l = mat_add(mat_mul(basis.div_left, mat_mul(minv, basis.coupling_left)),
                   mat_scale(mat_mul(basis.boundary_div_left,
                                     mat_mul(minv, basis.boundary_coupling_left)), 2))
    hc_r = mat_add(mat_scale(mat_mul(basis.boundary_div_right,
                                     mat_mul(minv, basis.boundary_coupling_right)), 2),
                   mat_mul(basis.div_right, mat_mul(minv, basis.coupling_right)))
    if hl != mat_t(hr) or hc != mat_t(hc) or hc_l != mat_t(hc_l) or hc_r != mat_t(hc_r):
        raise AssemblyError("H operators violate the symmetry identities")
    return HOperators(right=hr, left=hl, center=hc,
                      center_left=hc_l, center_right=hc_r)


def symbol_from_basis(basis: Basis1D) -> MatrixSymbol:
    """Interior-stencil symbol: x-coupling in the slow Kronecker factor."""
    h = build_h_operators(basis)
    m = basis.mass
    return MatrixSymbol({
        (0, 0): mat_add(kron(h.center, m), kron(m, h.center)),
        (-1, 0): kron(h.right, m),
        (1, 0): kron(h.left, m),
        (0, -1): kron(m, h.right),
        (0, 1): kron(m, h.left),
    })


class PressureOperator:
    """Assembled pressure system K_N = T_n(f) + E_n (matrix-free).

    The interior five-block stencil is shared with the symbol; Dirichlet
    boundaries add a per-direction center correction on boundary cells.
    ``center_corrections`` maps a cell (i1, i2) to the additive 9x9 block
    on top of the interior center block.
    """

    def __init__(self, lattice: BlockLattice, symbol: MatrixSymbol,
                 bc: str, corr_x, corr_y):
        self.lattice = lattice
        self.symbol = symbol
        self.bc = bc
        self._toeplitz = BlockToeplitz(lattice, symbol)
        if bc == "periodic":
            from .structured import BlockCirculant
            self._circulant = BlockCirculant(lattice, symbol)
        self._corr_x = corr_x   # (2, s, s): left / right x-boundary corrections
        self._corr_y = corr_y

    @property
    def shape(self):
        n = self.lattice.order
        return (n, n)

    def toeplitz_part(self) -> BlockToeplitz:
        return self._toeplitz

    def center_correction(self, i1: int, i2: int) -> np.ndarray | None:
        lat = self.lattice
        if self.bc != "dirichlet":
            return None
        out = None
        if i1 == 0:
            out = self._corr_x[0].copy()
        elif i1 == lat.n1 - 1:
            out = self._corr_x[1].copy()
        if i2 == 0 or i2 == lat.n2 - 1:
            c = self._corr_y[0] if i2 == 0 else self._corr_y[1]
            out = c.copy() if out is None else out + c
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        lat = self.lattice
        if self.bc == "periodic":
            return self._circulant.matvec(x)
        g = lat.grid_vec(np.asarray(x, dtype=float))
        out = lat.grid_vec(self._toeplitz.matvec(x))
        out[0] += g[0] @ self._corr_x[0].T
        out[lat.n1 - 1] += g[lat.n1 - 1] @ self._corr_x[1].T
        out[:, 0] += g[:, 0] @ self._corr_y[0].T
        out[:, lat.n2 - 1] += g[:, lat.n2 - 1] @ self._corr_y[1].T
        return lat.flat_vec(out)

    def dense(self) -> np.ndarray:
        if self.bc == "periodic":
            from .structured import circulant_dense
            return circulant_dense(self.symbol, self.lattice)
        k = self._toeplitz.dense()
        lat = self.lattice
        s = lat.s
        for i1 in range(lat.n1):
            for i2 in range(lat.n2):
                corr = self.center_correction(i1, i2)
                if corr is not None:
                    a = (i1 * lat.n2 + i2) * s
                    k[a:a + s, a:a + s] += corr
        return k

    def boundary_part_dense(self) -> np.ndarray:
        """E_n = K_N - T_n(f) as a dense matrix (zero for periodic bc)."""
        lat = self.lattice
        e = np.zeros((lat.order, lat.order))
        s = lat.s
        for i1 in range(lat.n1):
            for i2 in range(lat.n2):
                corr = self.center_correction(i1, i2)
                if corr is not None:
                    a = (i1 * lat.n2 + i2) * s
                    e[a:a + s, a:a + s] += corr
        return e

    def export_mm(self, path):
        import scipy.sparse
        lat = self.lattice
        s = lat.s
        rows, cols, vals = [], [], []

        def add(i1, i2, j1, j2, blk):
            a = (i1 * lat.n2 + i2) * s
            b = (j1 * lat.n2 + j2) * s
            r, c = np.nonzero(blk)
            rows.extend(a + r)
            cols.extend(b + c)
            vals.extend(blk[r, c])

        for i1 in range(lat.n1):
            for i2 in range(lat.n2):
                for (j1, j2), blk in self.symbol.coeffs.items():
                    t1, t2 = i1 - j1, i2 - j2
                    if self.bc == "periodic":
                        add(i1, i2, t1 % lat.n1, t2 % lat.n2, blk)
                    elif 0 <= t1 < lat.n1 and 0 <= t2 < lat.n2:
                        add(i1, i2, t1, t2, blk)
                corr = self.center_correction(i1, i2)
                if corr is not None:
                    add(i1, i2, i1, i2, corr)
        mat = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                      shape=(lat.order, lat.order)).tocsr().tocoo()
        export_sparse_mm(mat, path)


def assemble_pressure_operator(basis: Basis1D, n1: int, n2: int,
                               bc: str = "dirichlet") -> PressureOperator:
    """Assemble K_N with unit cell size and unit time step.

    For quadratic elements the interior stencil is checked against the
    published coefficient tables; a mismatch beyond 1e-13 is an assembly
    validation error.  Periodic assembly is exactly the block circulant
    generated by the interior symbol.
    """
    if bc not in ("dirichlet", "periodic"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if min(n1, n2) < 4:
        raise ValueError("need at least 4 cells per direction")
    sym = symbol_from_basis(basis)
    if basis.p == 2:
        ref = builtin_dg_symbol(2)
        for j in ref.support:
            err = np.abs(sym.coeffs[j] - ref.coeffs[j]).max()
            if err > STENCIL_ANCHOR_TOL:
                raise AssemblyError(
                    f"interior stencil block {j} deviates from the published "
                    f"table by {err:.3e} (> {STENCIL_ANCHOR_TOL})")
    h = build_h_operators(basis)
    m = basis.mass
    dl = mat_add(h.center_left, h.center, sign=-1)
    dr = mat_add(h.center_right, h.center, sign=-1)
    corr_x = np.stack([_tofl(kron(dl, m)), _tofl(kron(dr, m))])
    corr_y = np.stack([_tofl(kron(m, dl)), _tofl(kron(m, dr))])
    lattice = BlockLattice(n1, n2, sym.s)
    return PressureOperator(lattice, sym, bc, corr_x, corr_y)


# -- boundary-part structure report ----------------------------------------

@dataclass
class BoundaryReport:
    """Structural facts about E_n = K_N - T_n(f).

    Slices along the slow level index: one s*n2 x s*n2 diagonal block per
    i1 (left slice, n1 - 2 repeated center slices, right slice), each of
    which is itself diagonal in 9x9 blocks indexed by i2.
    """
    n: int
    s: int
    left_blocks: np.ndarray        # (n, s, s) diagonal 9x9 blocks of E^(l)
    right_blocks: np.ndarray
    center_blocks: np.ndarray      # blocks of one interior slice E^(c)
    center_slices_equal: bool
    center_interior_zero: bool
    left_interior_constant: bool
    flip_left_right: dict
    flip_center: bool
    block_min_eigs: dict
    rank: int
    rank_formula: int

    @property
    def psd(self) -> bool:
        return all(v >= -1e-12 for v in self.block_min_eigs.values())

    def to_json(self) -> str:
        import json
        return json.dumps({
            "n": self.n,
            "rank": self.rank,
            "rank_36n_minus_36": self.rank_formula,
            "center_slices_equal": self.center_slices_equal,
            "center_interior_zero": self.center_interior_zero,
            "left_interior_constant": self.left_interior_constant,
            "flip_left_right": self.flip_left_right,
            "flip_center": self.flip_center,
            "psd": self.psd,
            "block_min_eigenvalues": {k: float(v) for k, v in self.block_min_eigs.items()},
        }, indent=1)


def extract_boundary_part(op: PressureOperator, rank_rtol: float = 1e-10) -> BoundaryReport:
    """E_n with its three-slice partition, flip symmetries and numerical rank.

    The numerical rank counts singular values above rank_rtol times the
    largest one; because E_n is 9x9-block-diagonal the singular values are
    the union over blocks.
    """
    if op.bc != "dirichlet":
        raise ValueError("boundary part is defined for the Dirichlet assembly")
    lat = op.lattice
    if lat.n1 != lat.n2:
        raise ValueError("structure report assumes a square lattice")
    n, s = lat.n1, lat.s

    def slice_blocks(i1):
        return np.stack([
            op.center_correction(i1, i2) if op.center_correction(i1, i2) is not None
            else np.zeros((s, s))
            for i2 in range(n)])

    left = slice_blocks(0)
    right = slice_blocks(n - 1)
    centers = [slice_blocks(i1) for i1 in range(1, n - 1)]
    center = centers[0]
    center_equal = all(np.array_equal(c, center) for c in centers[1:])
    center_zero = all(not center[i].any() for i in range(1, n - 1))
    left_const = all(np.array_equal(left[i], left[1]) for i in range(2, n - 1))

    flip = np.fliplr(np.eye(s))

    def flipped(b):
        return flip @ b @ flip

    tol = 1e-12 * max(np.abs(left).max(), 1.0)
    flip_lr = {
        "r1_vs_ln": bool(np.abs(right[0] - flipped(left[n - 1])).max() <= tol),
        "rn_vs_l1": bool(np.abs(right[n - 1] - flipped(left[0])).max() <= tol),
        "ri_vs_li_interior": bool(all(
            np.abs(right[i] - flipped(left[i])).max() <= tol for i in range(1, n - 1))),
    }
    flip_c = bool(np.abs(center[n - 1] - flipped(center[0])).max() <= tol)

    min_eigs = {}
    for name, blocks, idxs in (("l", left, range(n)), ("r", right, range(n)),
                               ("c", center, (0, n - 1))):
        for i in idxs:
            min_eigs[f"e_{name}_{i + 1}"] = float(np.linalg.eigvalsh(blocks[i]).min())
    # interior center slices repeat; account for their multiplicity in the rank
    all_svals = np.concatenate(
        [np.linalg.svd(left[i], compute_uv=False) for i in range(n)]
        + [np.linalg.svd(right[i], compute_uv=False) for i in range(n)]
        + [np.linalg.svd(center[i], compute_uv=False)
           for _ in range(n - 2) for i in (0, n - 1)])
    cutoff = rank_rtol * all_svals.max()
    rank = int((all_svals > cutoff).sum())

    report = BoundaryReport(
        n=n, s=s, left_blocks=left, right_blocks=right, center_blocks=center,
        center_slices_equal=center_equal, center_interior_zero=center_zero,
        left_interior_constant=left_const, flip_left_right=flip_lr,
        flip_center=flip_c, block_min_eigs=min_eigs, rank=rank,
        rank_formula=36 * n - 36)
    return report
