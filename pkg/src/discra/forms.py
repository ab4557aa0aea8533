"""Cochains on the double and on the diamond: coboundary, Hodge star, type
projections, wedge products, the averaging map A and its pseudo-inverse B.

Indexing conventions (see mesh.DoubleMap): Lambda vertices are primal then
dual; Lambda edges are primal block then dual block (dual edge ids equal
primal ids); Lambda faces are primal faces then dual faces.  1-forms store
one value per canonical edge orientation; reversed access negates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import eidx, esign


class FormError(ValueError):
    pass


@dataclass
class Cochain:
    carrier: str          # 'L' for Lambda, 'D' for diamond
    degree: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)

    def copy(self):
        return Cochain(self.carrier, self.degree, self.values.copy())


def n_cells(dm, carrier, degree):
    if carrier == 'L':
        return (dm.n_lv, dm.n_le, dm.n_lf)[degree]
    return (dm.n_lv, dm.diamond.n_edges, dm.diamond.n_faces)[degree]


def zero(dm, carrier, degree):
    return Cochain(carrier, degree, np.zeros(n_cells(dm, carrier, degree)))


def check(dm, c):
    if c.values.shape != (n_cells(dm, c.carrier, c.degree),):
        raise FormError("cochain size does not match its carrier")


# -- coboundary operators as sparse integer matrices ------------------------

def d0_matrix(dm):
    """Lambda: function -> 1-form, df(e) = f(head) - f(tail)."""
    rows, cols, vals = [], [], []
    for e, (t, h) in enumerate(dm.gamma.edges):
        rows += [e, e]
        cols += [h, t]
        vals += [1.0, -1.0]
    off = dm.n_pv
    for e, (t, h) in enumerate(dm.gamma_star.edges):
        rows += [dm.n_edges + e] * 2
        cols += [h + off, t + off]
        vals += [1.0, -1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(dm.n_le, dm.n_lv))


def d1_matrix(dm):
    """Lambda: 1-form -> 2-form by the oriented boundary sum."""
    rows, cols, vals = [], [], []
    for fi, cycle in enumerate(dm.gamma.faces):
        for r in cycle:
            rows.append(fi)
            cols.append(eidx(r))
            vals.append(float(esign(r)))
    for fi, cycle in enumerate(dm.gamma_star.faces):
        for r in cycle:
            rows.append(dm.n_pf + fi)
            cols.append(dm.n_edges + eidx(r))
            vals.append(float(esign(r)))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dm.n_lf, dm.n_le))


def d0_matrix_diamond(dm):
    dia = dm.diamond
    rows, cols, vals = [], [], []
    for s, (u, v) in enumerate(dia.sides):
        rows += [s, s]
        cols += [v, u]
        vals += [1.0, -1.0]
    return sp.csr_matrix((vals, (rows, cols)), shape=(dia.n_edges, dm.n_lv))


def d1_matrix_diamond(dm):
    dia = dm.diamond
    rows, cols, vals = [], [], []
    for q, refs in enumerate(dia.quad_sides):
        for r in refs:
            rows.append(q)
            cols.append(eidx(r))
            vals.append(float(esign(r)))
    return sp.csr_matrix((vals, (rows, cols)), shape=(dia.n_faces, dia.n_edges))


def coboundary(dm, c):
    check(dm, c)
    if c.degree >= 2:
        raise FormError("coboundary of a 2-form")
    if c.carrier == 'L':
        mat = d0_matrix(dm) if c.degree == 0 else d1_matrix(dm)
    else:
        mat = d0_matrix_diamond(dm) if c.degree == 0 else d1_matrix_diamond(dm)
    return Cochain(c.carrier, c.degree + 1, mat @ c.values)


# -- Hodge star on Lambda ----------------------------------------------------

def hodge_star(dm, c):
    check(dm, c)
    if c.carrier != 'L':
        raise FormError("no Hodge star on the diamond")
    nE = dm.n_edges
    if c.degree == 1:
        # int_e *a = -rho(e*) int_{e*} a; for a dual edge, e** = -e
        out = np.empty(dm.n_le, dtype=complex)
        out[:nE] = -(1.0 / dm.rho) * c.values[nE:]
        out[nE:] = dm.rho * c.values[:nE]
        return Cochain('L', 1, out)
    if c.degree == 0:
        out = np.empty(dm.n_lf, dtype=complex)
        for fi in range(dm.n_pf):
            out[fi] = c.values[dm.dual_vertex(dm.pf_center[fi])]
        for fj in range(dm.n_df):
            out[dm.n_pf + fj] = c.values[dm.df_center[fj]]
        return Cochain('L', 2, out)
    # degree 2: *w(x) = integral of w over the face x sits in the middle of
    out = np.zeros(dm.n_lv, dtype=complex)
    for v in range(dm.n_pv):
        fj = dm.pv_face.get(v)
        if fj is not None:
            out[v] = c.values[dm.n_pf + fj]
    for dv in range(dm.n_dv):
        fi = dm.dv_face.get(dv)
        if fi is not None:
            out[dm.dual_vertex(dv)] = c.values[fi]
    return Cochain('L', 0, out)


def type_project(dm, a, tag):
    """tag '10' -> (Id + i*)/2, tag '01' -> (Id - i*)/2."""
    check(dm, a)
    if a.degree != 1 or a.carrier != 'L':
        raise FormError("type projection needs a Lambda 1-form")
    s = hodge_star(dm, a).values
    if tag in ('10', (1, 0)):
        return Cochain('L', 1, 0.5 * (a.values + 1j * s))
    if tag in ('01', (0, 1)):
        return Cochain('L', 1, 0.5 * (a.values - 1j * s))
    raise FormError("unknown type tag %r" % (tag,))


def d_prime(dm, f):
    """d' on functions: the (1,0) part of df."""
    return type_project(dm, coboundary(dm, f), '10')


def d_second(dm, f):
    """d'' on functions: the (0,1) part of df."""
    return type_project(dm, coboundary(dm, f), '01')


def d_prime_1(dm, a):
    """d' on 1-forms: d of the (0,1) part."""
    return coboundary(dm, type_project(dm, a, '01'))


def d_second_1(dm, a):
    """d'' on 1-forms: d of the (1,0) part."""
    return coboundary(dm, type_project(dm, a, '10'))


def epsilon(dm):
    return Cochain('L', 0, dm.epsilon().astype(complex))


# -- the averaging map A and its pseudo-inverse B ---------------------------

def average_matrix_1(dm):
    """A on 1-forms: Lambda edges x diamond sides, the half-sum of the two
    diamond paths joining the endpoints of each diagonal."""
    dia = dm.diamond
    rows, cols, vals = [], [], []
    sidx = dia.side_index
    for q, (x, y, xp, yp) in enumerate(dia.quads):
        s_xy, s_xpy = sidx[(x, y)], sidx[(xp, y)]
        s_xpyp, s_xyp = sidx[(xp, yp)], sidx[(x, yp)]
        # primal edge q = (x -> xp): paths x-y-xp and x-yp-xp
        for s, w in ((s_xy, 0.5), (s_xpy, -0.5), (s_xyp, 0.5), (s_xpyp, -0.5)):
            rows.append(q)
            cols.append(s)
            vals.append(w)
        # dual edge (y -> yp): paths y-xp-yp and y-x-yp
        for s, w in ((s_xpy, -0.5), (s_xpyp, 0.5), (s_xy, -0.5), (s_xyp, 0.5)):
            rows.append(dm.n_edges + q)
            cols.append(s)
            vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(dm.n_le, dia.n_edges))


def average_matrix_2(dm):
    """A on 2-forms: each Lambda face gets half the fan of incident quads."""
    dia = dm.diamond
    rows, cols, vals = [], [], []
    for fi, cycle in enumerate(dm.gamma.faces):
        for r in cycle:
            rows.append(fi)
            cols.append(eidx(r))
            vals.append(0.5)
    for fj, cycle in enumerate(dm.gamma_star.faces):
        for r in cycle:
            rows.append(dm.n_pf + fj)
            cols.append(eidx(r))
            vals.append(0.5)
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(dm.n_lf, dia.n_faces))


def average(dm, c):
    check(dm, c)
    if c.carrier != 'D':
        raise FormError("A averages diamond cochains")
    if c.degree == 0:
        return Cochain('L', 0, c.values.copy())
    if c.degree == 1:
        return Cochain('L', 1, average_matrix_1(dm) @ c.values)
    return Cochain('L', 2, average_matrix_2(dm) @ c.values)


def b_matrix(dm):
    """Minimum-norm pseudo-inverse of A on 1-forms (a representative of the
    class modulo Ker A).  Dense; meshes here are desk-scale."""
    A = average_matrix_1(dm).toarray()
    return np.linalg.pinv(A, rcond=1e-12)


def b_lift(dm, a, pinv=None):
    """A representative diamond 1-form with A(b_lift(a)) ~ a; the residual
    ||A B a - a|| is returned alongside."""
    check(dm, a)
    if a.carrier != 'L' or a.degree != 1:
        raise FormError("B lifts Lambda 1-forms")
    if pinv is None:
        pinv = b_matrix(dm)
    v = pinv @ a.values
    res = np.linalg.norm(average_matrix_1(dm) @ v - a.values)
    return Cochain('D', 1, v), res


# -- products ----------------------------------------------------------------

def side_integral(dia, values, u, v):
    """Integral of a diamond 1-form along the side from u to v."""
    if (u, v) in dia.side_index:
        return values[dia.side_index[(u, v)]]
    return -values[dia.side_index[(v, u)]]


def wedge(dm, a, b):
    """Products on the diamond: f.g, f.a (endpoint average), a^b (quad
    formula), f.w (four-corner average)."""
    check(dm, a)
    check(dm, b)
    if a.carrier != 'D' or b.carrier != 'D':
        raise FormError("wedge lives on the diamond")
    if a.degree + b.degree > 2:
        raise FormError("degree overflow in wedge")
    if a.degree > b.degree and b.degree == 0:
        # normalize to function-first for the mixed products
        return wedge(dm, b, a)
    dia = dm.diamond
    if a.degree == 0 and b.degree == 0:
        return Cochain('D', 0, a.values * b.values)
    if a.degree == 0 and b.degree == 1:
        out = np.empty(dia.n_edges, dtype=complex)
        for s, (u, v) in enumerate(dia.sides):
            out[s] = 0.5 * (a.values[u] + a.values[v]) * b.values[s]
        return Cochain('D', 1, out)
    if a.degree == 0 and b.degree == 2:
        out = np.empty(dia.n_faces, dtype=complex)
        for q, corners in enumerate(dia.quads):
            out[q] = 0.25 * sum(a.values[c] for c in corners) * b.values[q]
        return Cochain('D', 2, out)
    # two 1-forms
    out = np.zeros(dia.n_faces, dtype=complex)
    for q, corners in enumerate(dia.quads):
        acc = 0.0 + 0.0j
        for k in range(4):
            cm, ck, cp = corners[k - 1], corners[k], corners[(k + 1) % 4]
            acc += (side_integral(dia, a.values, cm, ck)
                    * side_integral(dia, b.values, ck, cp)
                    - side_integral(dia, a.values, cp, ck)
                    * side_integral(dia, b.values, ck, cm))
        out[q] = 0.25 * acc
    return Cochain('D', 2, out)


def hetero_wedge(dm, a, b):
    """Wedge of two Lambda 1-forms, landing on diamond faces."""
    check(dm, a)
    check(dm, b)
    if (a.carrier, a.degree) != ('L', 1) or (b.carrier, b.degree) != ('L', 1):
        raise FormError("hetero wedge takes two Lambda 1-forms")
    nE = dm.n_edges
    out = (a.values[:nE] * b.values[nE:]
           + a.values[nE:] * (-b.values[:nE]))
    return Cochain('D', 2, out)


def inner_product(dm, a, b):
    """(a, b) = sum over Lambda edges of rho(e) int_e a conj(int_e b)."""
    check(dm, a)
    check(dm, b)
    if (a.degree, b.degree) != (1, 1) or 'D' in (a.carrier, b.carrier):
        raise FormError("scalar product is for Lambda 1-forms")
    w = dm.lam_rho()
    return complex(np.sum(w * a.values * np.conj(b.values)))


def total_integral(dm, w, over='diamond'):
    """Integral of a 2-form over the whole surface."""
    check(dm, w)
    if w.carrier == 'D':
        if over != 'diamond':
            raise FormError("diamond 2-forms integrate over the diamond")
        return complex(np.sum(w.values))
    if over == 'primal':
        return complex(np.sum(w.values[:dm.n_pf]))
    if over == 'dual':
        return complex(np.sum(w.values[dm.n_pf:]))
    return complex(np.sum(w.values))


# -- Hodge star as sparse matrices (for solver assembly) ---------------------

def star1_matrix(dm):
    """Hodge star on Lambda 1-forms as a sparse matrix."""
    nE = dm.n_edges
    neg = sp.diags(-1.0 / dm.rho)
    pos = sp.diags(dm.rho)
    return sp.bmat([[None, neg], [pos, None]]).tocsr()


def star2_matrix(dm):
    """Hodge star on Lambda 2-forms (faces -> center vertices), sparse.

    Rows for vertices without a dual face (boundary) are zero.
    """
    rows, cols, vals = [], [], []
    for v in range(dm.n_pv):
        fj = dm.pv_face.get(v)
        if fj is not None:
            rows.append(v)
            cols.append(dm.n_pf + fj)
            vals.append(1.0)
    for dv in range(dm.n_dv):
        fi = dm.dv_face.get(dv)
        if fi is not None:
            rows.append(dm.dual_vertex(dv))
            cols.append(fi)
            vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dm.n_lv, dm.n_lf))


def star0_matrix(dm):
    """Hodge star on Lambda 0-forms (center vertices -> faces), sparse."""
    rows, cols, vals = [], [], []
    for fi in range(dm.n_pf):
        rows.append(fi)
        cols.append(dm.dual_vertex(dm.pf_center[fi]))
        vals.append(1.0)
    for fj in range(dm.n_df):
        rows.append(dm.n_pf + fj)
        cols.append(dm.df_center[fj])
        vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dm.n_lf, dm.n_lv))


def codifferential_matrix(dm, degree):
    """d* = -*d* on Lambda forms of the given degree, sparse."""
    if degree == 1:
        return -star2_matrix(dm) @ d1_matrix(dm) @ star1_matrix(dm)
    if degree == 2:
        return -star1_matrix(dm) @ d0_matrix(dm) @ star2_matrix(dm)
    raise FormError("codifferential on 1- and 2-forms only")
