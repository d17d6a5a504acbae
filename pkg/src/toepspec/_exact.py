"""Exact rational linear algebra and polynomial quadrature.

Small dense problems only (reference-element integrals, 9x9 determinant
expansions).  Matrices are lists of lists of ``fractions.Fraction``.
"""
from __future__ import annotations

from fractions import Fraction

Mat = list[list[Fraction]]


def zeros(r: int, c: int) -> Mat:
    return [[Fraction(0)] * c for _ in range(r)]


def mat_mul(a: Mat, b: Mat) -> Mat:
    out = zeros(len(a), len(b[0]))
    for i, row in enumerate(a):
        for t, x in enumerate(row):
            if x:
                brow = b[t]
                orow = out[i]
                for j, y in enumerate(brow):
                    orow[j] += x * y
    return out


def mat_add(a: Mat, b: Mat, sign: int = 1) -> Mat:
    return [[x + sign * y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)]


def mat_scale(a: Mat, s: Fraction | int) -> Mat:
    return [[s * x for x in row] for row in a]


def mat_t(a: Mat) -> Mat:
    return [list(col) for col in zip(*a)]


def mat_inv(a: Mat) -> Mat:
    """Gauss-Jordan inverse; raises ZeroDivisionError on singular input."""
    n = len(a)
    m = [list(row) + [Fraction(i == j) for j in range(n)] for i, row in enumerate(a)]
    for col in range(n):
        piv = next(r for r in range(col, n) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        pv = m[col][col]
        m[col] = [x / pv for x in m[col]]
        for r in range(n):
            if r != col and m[r][col]:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [row[n:] for row in m]


def mat_det(a: Mat) -> Fraction:
    """Fraction-exact determinant by fraction-free Gaussian elimination."""
    n = len(a)
    m = [list(row) for row in a]
    sign = 1
    for col in range(n - 1):
        piv = next((r for r in range(col, n) if m[r][col] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            sign = -sign
        pv = m[col][col]
        for r in range(col + 1, n):
            f = m[r][col] / pv
            if f:
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    det = Fraction(sign)
    for i in range(n):
        det *= m[i][i]
    return det


def kron(a: Mat, b: Mat) -> Mat:
    ra, ca, rb, cb = len(a), len(a[0]), len(b), len(b[0])
    out = zeros(ra * rb, ca * cb)
    for i in range(ra):
        for j in range(ca):
            x = a[i][j]
            if x:
                for k in range(rb):
                    for l in range(cb):
                        out[i * rb + k][j * cb + l] = x * b[k][l]
    return out


# -- polynomials: coefficient lists over Fraction, ascending powers --------

def poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] += ai * bj
    return out


def poly_add(a, b):
    out = [Fraction(0)] * max(len(a), len(b))
    for i, x in enumerate(a):
        out[i] += x
    for i, x in enumerate(b):
        out[i] += x
    return out


def poly_deriv(a):
    return [Fraction(i) * a[i] for i in range(1, len(a))] or [Fraction(0)]


def poly_eval(a, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def poly_compose_affine(a, alpha, beta):
    """Coefficients of p(alpha*x + beta)."""
    acc = [Fraction(0)]
    lin = [Fraction(beta), Fraction(alpha)]
    for c in reversed(a):
        acc = poly_add(poly_mul(acc, lin), [c])
    return acc


def poly_integral(a, lo, hi) -> Fraction:
    lo, hi = Fraction(lo), Fraction(hi)
    acc = Fraction(0)
    for i, c in enumerate(a):
        acc += c * (hi ** (i + 1) - lo ** (i + 1)) / (i + 1)
    return acc


def lagrange_basis(nodes: list[Fraction]) -> list[list[Fraction]]:
    """Cardinal polynomials through the given distinct nodes."""
    basis = []
    for m, xm in enumerate(nodes):
        poly = [Fraction(1)]
        for j, xj in enumerate(nodes):
            if j != m:
                d = xm - xj
                poly = poly_mul(poly, [-xj / d, 1 / d])
        basis.append(poly)
    return basis
