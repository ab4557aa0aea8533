"""Discrete holomorphy: Cauchy-Riemann checks, residues, meromorphic forms
with prescribed poles and holonomies, the Cauchy kernel and integral
formula, and the function calculus attached to a flat coordinate Z
(dagger conjugation, derivative, monomials, minimal polynomial).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import eidx, esign
from . import forms, harmonic
from .forms import Cochain, FormError, check
from .harmonic import BoundaryData, HarmonicError


class HolomorphicError(ValueError):
    pass


# -- Cauchy-Riemann -----------------------------------------------------------

@dataclass
class CRReport:
    max_residual: float
    worst_face: int
    residuals: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self):
        return self.max_residual <= 1e-12


def check_holomorphic(dm, f):
    """Cauchy-Riemann residual of a function per diamond face:
    f(y') - f(y) - i rho(x,x') (f(x') - f(x))."""
    check(dm, f)
    if (f.carrier, f.degree) != ('L', 0):
        raise FormError("CR check takes a Lambda function")
    dia = dm.diamond
    res = np.empty(len(dia.quads))
    for q, (x, y, xp, yp) in enumerate(dia.quads):
        r = (f.values[yp] - f.values[y]
             - 1j * dm.rho[q] * (f.values[xp] - f.values[x]))
        res[q] = abs(r)
    worst = int(np.argmax(res)) if len(res) else -1
    return CRReport(float(res.max()) if len(res) else 0.0, worst, res)


def check_holomorphic_form(dm, a):
    """A 1-form is holomorphic when closed and of type (1,0)."""
    check(dm, a)
    da = forms.coboundary(dm, a).values
    ta = forms.hodge_star(dm, a).values + 1j * a.values
    res = np.abs(da)
    worst = int(np.argmax(res)) if len(res) else -1
    mr = max(float(res.max()) if len(res) else 0.0,
             float(np.abs(ta).max()))
    return CRReport(mr, worst, res)


def residue(dm, a, x):
    """(1 / 2 i pi) times the contour sum of a around the face dual to x."""
    check(dm, a)
    if (a.carrier, a.degree) != ('L', 1):
        raise FormError("residue of a Lambda 1-form")
    nE = dm.n_edges
    if dm.is_dual_vertex(x):
        fi = dm.dv_face.get(x - dm.n_pv)
        if fi is None:
            raise HolomorphicError("vertex %d has no dual face" % x)
        cyc, off = dm.gamma.faces[fi], 0
    else:
        fj = dm.pv_face.get(x)
        if fj is None:
            raise HolomorphicError("vertex %d has no dual face" % x)
        cyc, off = dm.gamma_star.faces[fj], nE
    total = sum(esign(r) * a.values[off + eidx(r)] for r in cyc)
    return complex(total / (2j * np.pi))


# -- holonomies and probe loops ----------------------------------------------

def holonomy(dm, a, loop):
    """Sum of a 1-form along a loop of signed Lambda edge refs."""
    return complex(sum(esign(r) * a.values[eidx(r)] for r in loop))


def probe_loops(dm, part='primal', avoid=(), avoid_vertices=()):
    """Fundamental cycles of a spanning tree of one part of Lambda.

    avoid: Lambda edge ids whose *duals* must not appear in any loop
    (the loops must not cross the edges in avoid).  avoid_vertices:
    Lambda vertex ids the loops must keep away from (needed when the
    avoided edges form a cut path: loops through its vertices would
    not survive cutting the surface open).
    """
    nE = dm.n_edges
    if part == 'primal':
        cx, off = dm.gamma, 0
        vban = {v for v in avoid_vertices if not dm.is_dual_vertex(v)}
    else:
        cx, off = dm.gamma_star, nE
        vban = {v - dm.n_pv for v in avoid_vertices if dm.is_dual_vertex(v)}
    banned = {(k + nE) % (2 * nE) for k in avoid}
    out_of = {}
    usable = []
    for e, (t, h) in enumerate(cx.edges):
        if off + e in banned or t in vban or h in vban:
            continue
        usable.append(e)
        out_of.setdefault(t, []).append((h, e + 1))
        out_of.setdefault(h, []).append((t, -(e + 1)))
    parent = {}
    tree = set()
    for root in out_of:
        if root in parent:
            continue
        parent[root] = (None, 0)
        stack = [root]
        while stack:
            u = stack.pop()
            for v, r in out_of[u]:
                if v not in parent:
                    parent[v] = (u, r)
                    tree.add(eidx(r))
                    stack.append(v)

    def path_to_root(v):
        refs = []
        while parent[v][0] is not None:
            u, r = parent[v]
            refs.append(-r)      # r goes u -> v; reverse it
            v = u
        return refs

    loops = []
    for e in usable:
        if e in tree:
            continue
        t, h = cx.edges[e]
        up_t = path_to_root(t)
        up_h = path_to_root(h)
        while up_t and up_h and up_t[-1] == up_h[-1]:
            up_t.pop()
            up_h.pop()
        # loop: e from t to h, then h up to meeting point, then down to t
        loop = [e + 1] + up_h + [-r for r in reversed(up_t)]
        loops.append([(r + off if esign(r) > 0 else r - off) if off else r
                      for r in loop])
    return loops


# -- meromorphic forms --------------------------------------------------------

def cut_vertices(dm, cut):
    """Lambda vertex ids touched by a set of Lambda edge ids."""
    nE = dm.n_edges
    verts = set()
    for k in cut:
        if k < nE:
            verts.update(dm.gamma.edges[k])
        else:
            verts.update(dm.dual_vertex(v)
                         for v in dm.gamma_star.edges[k - nE])
    return verts


@dataclass
class MeromorphicForm:
    form: Cochain
    poles: dict
    cut: tuple = ()
    kind: str = 'imaginary'


def holomorphic_space(dm, cutoff=1e-9):
    """Matrix whose columns span {alpha : d alpha = 0, *alpha = -i alpha},
    computed as an SVD null space (works with or without boundary)."""
    D1 = forms.d1_matrix(dm).toarray()
    S1 = forms.star1_matrix(dm).toarray()
    M = np.vstack([D1, S1 + 1j * np.eye(2 * dm.n_edges)])
    _, s, vh = np.linalg.svd(M)
    smax = s[0] if len(s) else 1.0
    nz = int(np.sum(s > cutoff * smax))
    return vh[nz:].conj().T


def _pole_part(dm, x):
    return 'dual' if dm.is_dual_vertex(x) else 'primal'


def _green_function(dm, x, xp=None):
    """Real f, harmonic away from the poles: Dirichlet with a source at x
    (zero on the boundary of the part) or a dipole solve for (x, xp)."""
    part = _pole_part(dm, x)
    verts = harmonic._part_vertices(dm, part)
    L = harmonic.laplacian_matrix(dm).toarray()[np.ix_(verts, verts)]
    rhs = np.zeros(len(verts))
    loc = {int(v): i for i, v in enumerate(verts)}
    rhs[loc[x]] = 1.0
    if xp is not None:
        if _pole_part(dm, xp) != part:
            raise HolomorphicError("pole pair must sit in the same part")
        rhs[loc[xp]] = -1.0
        sol, *_ = np.linalg.lstsq(L, rhs, rcond=None)
    else:
        closed = dm.gamma.is_closed() and dm.gamma_star.is_closed()
        if closed:
            raise HolomorphicError(
                "a single pole needs a surface with boundary")
        # the boundary condition lives on the vertices that are not the
        # center of any face of the other part: closedness of (Id+i*)df
        # is only checked on existing faces, so harmonicity is required
        # exactly at face centers and the remaining vertices are free
        if part == 'primal':
            centered = set(dm.pv_face)
        else:
            centered = {dm.dual_vertex(w) for w in dm.dv_face}
        free = [i for i, v in enumerate(verts) if int(v) in centered]
        sol = np.zeros(len(verts))
        sol[free] = np.linalg.solve(L[np.ix_(free, free)], rhs[free])
    f = np.zeros(dm.n_lv, dtype=complex)
    f[verts] = sol
    return Cochain('L', 0, f)


def _pole_face_row(dm, x):
    """Complex row r with r . beta = contour sum around the face dual
    to x, plus the face index in the Lambda 2-form numbering."""
    nE = dm.n_edges
    row = np.zeros(2 * nE, dtype=complex)
    if dm.is_dual_vertex(x):
        fi = dm.dv_face.get(x - dm.n_pv)
        if fi is None:
            raise HolomorphicError("vertex %d has no dual face" % x)
        for r in dm.gamma.faces[fi]:
            row[eidx(r)] += esign(r)
        face = fi
    else:
        fj = dm.pv_face.get(x)
        if fj is None:
            raise HolomorphicError("vertex %d has no dual face" % x)
        for r in dm.gamma_star.faces[fj]:
            row[nE + eidx(r)] += esign(r)
        face = dm.n_pf + fj
    return row, face


def _real_holonomy_form(dm, x, xp, cut):
    """Meromorphic 1-form with real holonomies on loops not crossing the
    cut: solved directly as a real-linear system (type (1,0), closed off
    the poles, residue +1, vanishing imaginary holonomy parts).  The
    difference from the Dirichlet-based form is holomorphic only on the
    cut surface, so a global correction ansatz would not reach it."""
    nE = dm.n_edges
    n = 2 * nE
    S1 = forms.star1_matrix(dm).toarray()
    D1 = forms.d1_matrix(dm).toarray()
    row_x, face_x = _pole_face_row(dm, x)
    faces = [f for f in range(dm.n_lf) if f != face_x]
    if xp is not None:
        _, face_xp = _pole_face_row(dm, xp)
        faces = [f for f in faces if f != face_xp]

    cplx_rows = [S1 + 1j * np.eye(n), D1[faces],
                 row_x[None, :] / (2j * np.pi)]
    cplx_rhs = [np.zeros(n), np.zeros(len(faces)), np.array([1.0])]
    M = np.vstack(cplx_rows)
    b = np.concatenate(cplx_rhs)
    # over real unknowns (Re beta, Im beta): complex row m -> two real rows
    blocks = [np.vstack([np.hstack([M.real, -M.imag]),
                         np.hstack([M.imag, M.real])])]
    tgts = [np.concatenate([b.real, b.imag])]

    cv = cut_vertices(dm, cut)
    loops = (probe_loops(dm, 'primal', avoid=cut, avoid_vertices=cv)
             + probe_loops(dm, 'dual', avoid=cut, avoid_vertices=cv))
    if loops:
        rows = np.zeros((len(loops), n))
        for i, lp in enumerate(loops):
            for r in lp:
                rows[i, eidx(r)] += esign(r)
        # Im(holonomy) = rows . Im(beta) ... with real row coefficients
        blocks.append(np.hstack([np.zeros_like(rows), rows]))
        tgts.append(np.zeros(len(loops)))

    A_r = np.vstack(blocks)
    t = np.concatenate(tgts)
    sol, *_ = np.linalg.lstsq(A_r, t, rcond=None)
    res = float(np.linalg.norm(A_r @ sol - t))
    if res > 1e-8 * (1.0 + float(np.abs(t).max())):
        raise HolomorphicError(
            "no meromorphic form with real holonomies found "
            "(defect %.2e); check the cut path" % res)
    return sol[:n] + 1j * sol[n:]


def meromorphic_form(dm, poles, cut=(), kind='imaginary'):
    """Meromorphic 1-form (Id + i*) df with residue +1 at the first pole.

    poles: a vertex x (surface with boundary) or a pair (x, x') in the
    same part of Lambda.  kind 'imaginary' keeps the Dirichlet solution's
    pure imaginary holonomies; kind 'real' adds a holomorphic correction
    killing the imaginary holonomy parts on probe loops that do not cross
    the cut.
    """
    if isinstance(poles, (tuple, list)):
        x, xp = poles
    else:
        x, xp = poles, None
    if kind == 'imaginary':
        f = _green_function(dm, x, xp)
        df = forms.coboundary(dm, f)
        a = Cochain('L', 1,
                    df.values + 1j * forms.hodge_star(dm, df).values)
        r = residue(dm, a, x)
        if abs(r) < 1e-14:
            raise HolomorphicError("degenerate pole at %d" % x)
        vals = a.values / r
    elif kind == 'real':
        vals = _real_holonomy_form(dm, x, xp, cut)
    else:
        raise HolomorphicError("kind must be 'imaginary' or 'real'")

    pole_res = {x: complex(residue(dm, Cochain('L', 1, vals), x))}
    if xp is not None:
        pole_res[xp] = complex(residue(dm, Cochain('L', 1, vals), xp))
    return MeromorphicForm(Cochain('L', 1, vals), pole_res, tuple(cut), kind)


def phi_ab(dm, loop_a, loop_b):
    """The unique holomorphic 1-form with Re of the B-holonomy equal to 1
    and pure imaginary holonomies along loops not crossing A.

    loop_a, loop_b: loops of signed Lambda edge refs, mutually dual in
    the sense that exactly one edge of A is dual to an edge of B.
    """
    H = holomorphic_space(dm)
    if not H.shape[1]:
        raise HolomorphicError("no holomorphic forms (genus 0)")
    avoid = {eidx(r) for r in loop_a}
    parts = []
    for part in ('primal', 'dual'):
        parts.extend(probe_loops(dm, part, avoid=avoid))
    cols = [Cochain('L', 1, H[:, k]) for k in range(H.shape[1])]
    hol_b = np.array([holonomy(dm, c, loop_b) for c in cols])
    hol_p = np.array([[holonomy(dm, c, lp) for c in cols] for lp in parts]) \
        if parts else np.zeros((0, H.shape[1]))
    # unknown complex coefficients as (Re, Im); constraints are real-linear
    n = H.shape[1]
    rows = [np.concatenate([hol_b.real, -hol_b.imag])]
    tgts = [1.0]
    for j in range(hol_p.shape[0]):
        rows.append(np.concatenate([hol_p[j].real, -hol_p[j].imag]))
        tgts.append(0.0)
    A_r = np.array(rows)
    c, *_ = np.linalg.lstsq(A_r, np.array(tgts), rcond=None)
    coef = c[:n] + 1j * c[n:]
    return Cochain('L', 1, H @ coef)


# -- Cauchy kernel and integral formula ---------------------------------------

def _region_boundary_sides(dia, quad_ids):
    """Directed boundary sides (u, v) of a diamond region, region on the
    left (each quad traversed along its ccw cycle)."""
    count = {}
    for q in quad_ids:
        cyc = dia.quads[q]
        for i in range(4):
            u, v = cyc[i], cyc[(i + 1) % 4]
            s = dia.side_index[(u, v) if (u, v) in dia.side_index else (v, u)]
            count[s] = count.get(s, 0) + 1
    out = []
    for q in quad_ids:
        cyc = dia.quads[q]
        for i in range(4):
            u, v = cyc[i], cyc[(i + 1) % 4]
            s = dia.side_index[(u, v) if (u, v) in dia.side_index else (v, u)]
            if count[s] == 1:
                out.append((u, v))
    return out


def cauchy_kernel(dm, quad_ids, x, y):
    """Discrete Cauchy kernel nu for the diamond edge (x, y) inside the
    region: A nu equals mu = alpha_x + alpha_y away from (x, y), nu is
    closed off the two faces R adjacent to (x, y), and the contour
    around R gives 2 i pi.  nu carries no value on the side (x, y)
    itself (stored as zero); the Lambda edges whose averaging paths run
    through it are listed in info['averaged_edges']'s complement.
    Solved as one least squares system; the solution is unique modulo
    d of the bipartite sign function, fixed by minimum norm.

    Returns (nu, mu, info).
    """
    dia = dm.diamond
    quad_ids = sorted(int(q) for q in quad_ids)
    mu_x = meromorphic_form(dm, x).form
    mu_y = meromorphic_form(dm, y).form
    mu = Cochain('L', 1, mu_x.values + mu_y.values)

    key = (x, y) if (x, y) in dia.side_index else (y, x)
    if key not in dia.side_index:
        raise HolomorphicError("(x, y) is not a diamond edge")
    side = dia.side_index[key]
    R = [q for q in quad_ids if side in
         [dia.side_index[(dia.quads[q][i], dia.quads[q][(i + 1) % 4])
                         if (dia.quads[q][i], dia.quads[q][(i + 1) % 4])
                         in dia.side_index else
                         (dia.quads[q][(i + 1) % 4], dia.quads[q][i])]
          for i in range(4)]]
    if len(R) != 2:
        raise HolomorphicError("the edge (x, y) must be interior")

    ns = len(dia.sides)
    A1 = forms.average_matrix_1(dm).toarray()
    D1 = forms.d1_matrix_diamond(dm).toarray()
    # mu is defined only up to a global holomorphic form on D; the right
    # representative is part of the problem, so solve for nu and the
    # holomorphic correction together.
    H = holomorphic_space(dm)
    # nu is undefined on the side (x, y) itself: the averaging identity
    # holds away from it, so drop the rows whose paths run through it
    # and pin the unused unknown to zero.
    keep = np.abs(A1[:, side]) < 1e-15
    pin = np.zeros((1, ns + H.shape[1]))
    pin[0, side] = 1.0
    rows = [np.hstack([A1[keep], -H[keep]])]
    rhs = [mu.values[keep]]
    rows.append(pin.astype(complex))
    rhs.append(np.zeros(1, dtype=complex))
    off_r = [q for q in quad_ids if q not in R]
    rows.append(np.hstack([D1[off_r],
                           np.zeros((len(off_r), H.shape[1]))]))
    rhs.append(np.zeros(len(off_r), dtype=complex))
    # contour around R: the union boundary of its two quads
    contour = np.zeros((1, ns + H.shape[1]), dtype=complex)
    for u, v in _region_boundary_sides(dia, R):
        s = dia.side_index[(u, v) if (u, v) in dia.side_index else (v, u)]
        contour[0, s] += 1.0 if (u, v) in dia.side_index else -1.0
    rows.append(contour)
    rhs.append(np.array([2j * np.pi]))
    M = np.vstack(rows)
    b = np.concatenate(rhs)
    sol, res, *_ = np.linalg.lstsq(M, b, rcond=None)
    nu = sol[:ns]
    mu = Cochain('L', 1, mu.values + H @ sol[ns:])
    info = {'residual': float(np.linalg.norm(M @ sol - b)),
            'rectangle': R, 'side': side,
            'averaged_edges': np.flatnonzero(keep)}
    return Cochain('D', 1, nu), mu, info


def contour_integral_function(dm, quad_ids, f, nu):
    """Contour sum of the product f . nu along the region boundary."""
    dia = dm.diamond
    total = 0.0 + 0.0j
    for u, v in _region_boundary_sides(dia, quad_ids):
        iv = forms.side_integral(dia, nu.values, u, v)
        total += 0.5 * (f.values[u] + f.values[v]) * iv
    return complex(total)


def cauchy_integral(dm, quad_ids, f, x, y, kernel=None):
    """Cauchy integral of f for the edge (x, y): returns (value, defect)
    where value = (1 / 2 i pi) times the contour sum of f . nu, and
    defect is the residual of the integral identity

        contour(f . nu) = (1/2) iint_D d''f ^ mu + 2 i pi (f(x)+f(y))/2

    (the 1/2 reflects the average-vs-diamond wedge normalization).
    """
    check(dm, f)
    if kernel is None:
        kernel = cauchy_kernel(dm, quad_ids, x, y)
    nu, mu, _ = kernel
    lhs = contour_integral_function(dm, quad_ids, f, nu)
    dsf = forms.d_second(dm, f)
    w = forms.hetero_wedge(dm, dsf, mu)
    area = 0.5 * sum(w.values[q] for q in quad_ids)
    defect = lhs - area - 2j * np.pi * 0.5 * (f.values[x] + f.values[y])
    return complex(lhs / (2j * np.pi)), complex(defect)


# -- function calculus for a flat coordinate ----------------------------------

def dagger(dm, f):
    """f-dagger: epsilon times the complex conjugate, pointwise."""
    check(dm, f)
    if (f.carrier, f.degree) != ('L', 0):
        raise FormError("dagger acts on Lambda functions")
    return Cochain('L', 0, dm.epsilon() * np.conj(f.values))


def _side_graph(dia):
    out_of = {}
    for s, (u, v) in enumerate(dia.sides):
        out_of.setdefault(u, []).append((v, s, 1.0))
        out_of.setdefault(v, []).append((u, s, -1.0))
    return out_of


def integrate_product(dm, g, dZ, z0, tol=1e-12):
    """Path integral from z0 of the function-times-form product g . dZ
    over the diamond, with the endpoint-average rule.  Checks path
    independence through the closedness of g . dZ on every quad."""
    check(dm, g)
    check(dm, dZ)
    if (dZ.carrier, dZ.degree) != ('D', 1):
        raise FormError("the form must be a diamond 1-form")
    dia = dm.diamond
    prod = np.empty(len(dia.sides), dtype=complex)
    for s, (u, v) in enumerate(dia.sides):
        prod[s] = 0.5 * (g.values[u] + g.values[v]) * dZ.values[s]
    d = forms.d1_matrix_diamond(dm) @ prod
    closure = float(np.abs(d).max()) if len(d) else 0.0
    scale = 1.0 + float(np.abs(prod).max()) if len(prod) else 1.0
    if closure > tol * scale:
        raise HolomorphicError(
            "path-dependent integral (closure defect %.2e)" % closure)
    out = np.zeros(dm.n_lv, dtype=complex)
    seen = {z0}
    stack = [z0]
    out_of = _side_graph(dia)
    while stack:
        u = stack.pop()
        for v, s, sg in out_of.get(u, ()):
            if v not in seen:
                seen.add(v)
                out[v] = out[u] + sg * prod[s]
                stack.append(v)
    if len(seen) != dm.n_lv:
        raise HolomorphicError("diamond is disconnected")
    return Cochain('L', 0, out)


def z_power(dm, dZ, k, z0, normalization='paper'):
    """The monomial hierarchy: Z^0 = 1 and Z^k integrates c_k Z^(k-1) dZ
    from z0, with c_k = 1/k ('paper') or k ('continuum')."""
    if k < 0 or int(k) != k:
        raise HolomorphicError("k must be a non-negative integer")
    if normalization not in ('paper', 'continuum'):
        raise HolomorphicError("unknown normalization %r" % (normalization,))
    cur = Cochain('L', 0, np.ones(dm.n_lv, dtype=complex))
    for j in range(1, int(k) + 1):
        c = (1.0 / j) if normalization == 'paper' else float(j)
        scaled = Cochain('L', 0, c * cur.values)
        cur = integrate_product(dm, scaled, dZ, z0)
    return cur


def derivative(dm, dZ, f, z0, delta):
    """f' = (4 / delta^2) (integral of f-dagger dZ)-dagger; the discrete
    derivative with respect to the flat coordinate of common side delta.
    Returns (fprime, edge_residual) where edge_residual is the largest
    defect of df = f' dZ over diamond sides (endpoint-average rule)."""
    F = integrate_product(dm, dagger(dm, f), dZ, z0)
    fp = Cochain('L', 0, (4.0 / delta ** 2) * dagger(dm, F).values)
    dia = dm.diamond
    worst = 0.0
    for s, (u, v) in enumerate(dia.sides):
        pred = 0.5 * (fp.values[u] + fp.values[v]) * dZ.values[s]
        worst = max(worst, abs((f.values[v] - f.values[u]) - pred))
    return fp, float(worst)


def minimal_polynomial(dm, dZ, z0, vertices=None, cutoff=1e-8,
                       normalization='paper'):
    """Least-degree monic dependence among the Z^k on a vertex set.

    Returns (coeffs, residual): coeffs c with Z^n + c[n-1] Z^(n-1) + ...
    + c[0] = 0 on the vertices, or (None, None) when no dependence shows
    up through degree |vertices|.
    """
    if vertices is None:
        vertices = range(dm.n_lv)
    vertices = list(vertices)
    powers = [np.ones(len(vertices), dtype=complex)]
    cur = Cochain('L', 0, np.ones(dm.n_lv, dtype=complex))
    for n in range(1, len(vertices) + 1):
        c = (1.0 / n) if normalization == 'paper' else float(n)
        cur = integrate_product(
            dm, Cochain('L', 0, c * cur.values), dZ, z0)
        col = cur.values[vertices]
        M = np.array(powers).T
        sol, *_ = np.linalg.lstsq(M, -col, rcond=None)
        res = float(np.linalg.norm(M @ sol + col))
        if res <= cutoff * (1.0 + float(np.abs(col).max())):
            return list(sol), res
        powers.append(col)
    return None, None
