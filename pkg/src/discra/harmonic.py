"""Harmonic analysis on a double map: the Laplacian, Dirichlet and Neumann
boundary value problems, Hodge decomposition, holomorphic 1-form bases, and
the Weyl / Green integral identities.

Conventions: functions live on Lambda vertices (primal then dual); the
Laplacian is the positive weighted graph Laplacian, so harmonic means
Delta f = 0.  The Neumann problem is solved only on discs, by integrating
the star of the conjugate Dirichlet solution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeshError, eidx, esign, validate
from . import forms
from .forms import Cochain, FormError, check

DENSE_LIMIT = 2000


class HarmonicError(ValueError):
    pass


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    energy: float


@dataclass
class BoundaryData:
    """Dirichlet data: dict Lambda vertex -> value.

    Neumann data: base dual vertex y0 (Lambda id) with value f0, and alpha,
    a dict primal boundary edge id -> integral of the data 1-form over the
    crossing dual edge (canonical orientation, right face to left face).
    """
    dirichlet: dict | None = None
    y0: int | None = None
    f0: complex = 0.0
    alpha: dict | None = None


@dataclass
class HodgeSplit:
    exact: Cochain
    coexact: Cochain
    harmonic: Cochain


# -- Laplacian ----------------------------------------------------------------

def _lam_edges(dm):
    """(tail, head) in Lambda vertex ids for all 2 n_edges Lambda edges."""
    nE = dm.n_edges
    te = np.empty(2 * nE, dtype=int)
    he = np.empty(2 * nE, dtype=int)
    for e, (t, h) in enumerate(dm.gamma.edges):
        te[e], he[e] = t, h
    for e, (t, h) in enumerate(dm.gamma_star.edges):
        te[nE + e], he[nE + e] = dm.dual_vertex(t), dm.dual_vertex(h)
    return te, he


def laplacian(dm, f):
    """(Delta f)(x) = sum over neighbors rho(x, x_k) (f(x) - f(x_k))."""
    check(dm, f)
    if (f.carrier, f.degree) != ('L', 0):
        raise FormError("Laplacian acts on Lambda functions")
    te, he = _lam_edges(dm)
    w = dm.lam_rho()
    out = np.zeros(dm.n_lv, dtype=complex)
    d = f.values[he] - f.values[te]
    np.add.at(out, te, -w * d)
    np.add.at(out, he, w * d)
    return Cochain('L', 0, out)


def laplacian_matrix(dm):
    """The same Laplacian as a sparse symmetric matrix."""
    D0 = forms.d0_matrix(dm)
    return (D0.T @ sp.diags(dm.lam_rho()) @ D0).tocsr()


def laplacian_operator(dm, f):
    """Delta = -d*d* - *d*d, composed from the elementary operators."""
    a = forms.coboundary(dm, f)
    part2 = forms.hodge_star(dm, forms.coboundary(dm, forms.hodge_star(dm, a)))
    return Cochain('L', 0, -part2.values)


# -- linear solves ------------------------------------------------------------

def _solve_spd(L, rhs, solver='auto'):
    """Solve the SPD system L x = rhs; returns (x, method, iterations, res)."""
    n = L.shape[0]
    if solver == 'auto':
        solver = 'dense' if n < DENSE_LIMIT else 'cg'
    if solver == 'dense':
        x = np.linalg.solve(L.toarray(), rhs)
        res = np.linalg.norm(L @ x - rhs) / (1.0 + np.linalg.norm(rhs))
        return x, 'dense', 0, float(res)
    if solver == 'cg':
        count = {'it': 0}

        def cb(_):
            count['it'] += 1

        # real and imaginary parts separately: cg wants hermitian,
        # L is real symmetric
        xr, info_r = spla.cg(L, rhs.real, rtol=1e-12, atol=0.0,
                             maxiter=10 * n, callback=cb)
        xi, info_i = spla.cg(L, rhs.imag, rtol=1e-12, atol=0.0,
                             maxiter=10 * n, callback=cb)
        if info_r or info_i:
            raise HarmonicError("conjugate gradient did not converge")
        x = xr + 1j * xi
        res = np.linalg.norm(L @ x - rhs) / (1.0 + np.linalg.norm(rhs))
        return x, 'cg', count['it'], float(res)
    raise HarmonicError("unknown solver %r" % (solver,))


def _part_vertices(dm, part):
    if part == 'primal':
        return np.arange(dm.n_pv)
    if part == 'dual':
        return np.arange(dm.n_pv, dm.n_lv)
    if part == 'lambda':
        return np.arange(dm.n_lv)
    raise HarmonicError("part must be 'primal', 'dual' or 'lambda'")


def dirichlet_energy(dm, f, part='lambda'):
    """(df, df) restricted to the edges of the requested part."""
    te, he = _lam_edges(dm)
    w = dm.lam_rho()
    nE = dm.n_edges
    if part == 'primal':
        sl = slice(0, nE)
    elif part == 'dual':
        sl = slice(nE, 2 * nE)
    else:
        sl = slice(0, 2 * nE)
    d = f.values[he[sl]] - f.values[te[sl]]
    return float(np.sum(w[sl] * np.abs(d) ** 2))


def solve_dirichlet(dm, bd, part='primal', solver='auto'):
    """Harmonic extension of prescribed values on a marked vertex set.

    Returns (f, report); f is a Lambda 0-form, zero off the chosen part.
    """
    if not bd.dirichlet:
        raise HarmonicError("Dirichlet data needs a non-empty marked set")
    verts = _part_vertices(dm, part)
    vset = set(int(v) for v in verts)
    marked = {int(v): complex(val) for v, val in bd.dirichlet.items()}
    if not set(marked) <= vset:
        raise HarmonicError("marked vertices outside the requested part")

    # adjacency restricted to the part (Lambda edges stay inside one part)
    te, he = _lam_edges(dm)
    w = dm.lam_rho()
    keep = np.array([t in vset for t in te])
    te, he, w = te[keep], he[keep], w[keep]

    # every connected component must see the boundary
    comp = {v: v for v in vset}

    def find(v):
        while comp[v] != v:
            comp[v] = comp[comp[v]]
            v = comp[v]
        return v

    for t, h in zip(te, he):
        comp[find(int(t))] = find(int(h))
    anchored = {find(v) for v in marked}
    for v in vset:
        if find(v) not in anchored:
            raise HarmonicError(
                "component of vertex %d has no boundary data" % v)

    free = [v for v in sorted(vset) if v not in marked]
    idx = {v: i for i, v in enumerate(free)}
    n = len(free)
    vals = np.zeros(dm.n_lv, dtype=complex)
    for v, val in marked.items():
        vals[v] = val
    if n:
        rows, cols, dat = [], [], []
        rhs = np.zeros(n, dtype=complex)
        diag = np.zeros(n)
        for t, h, wt in zip(te, he, w):
            t, h = int(t), int(h)
            for a, b in ((t, h), (h, t)):
                if a in idx:
                    diag[idx[a]] += wt
                    if b in idx:
                        rows.append(idx[a])
                        cols.append(idx[b])
                        dat.append(-wt)
                    else:
                        rhs[idx[a]] += wt * vals[b]
        L = sp.csr_matrix((dat, (rows, cols)), shape=(n, n)) + sp.diags(diag)
        x, method, its, res = _solve_spd(L, rhs, solver)
        for v, i in idx.items():
            vals[v] = x[i]
    else:
        method, its, res = 'none', 0, 0.0

    f = Cochain('L', 0, vals)
    return f, SolveReport(method, its, res, dirichlet_energy(dm, f, part))


def boundary_edges(gamma):
    """Edges lying on the boundary (adjacent to fewer than two faces)."""
    return [e for e, c in enumerate(gamma.edge_face_count()) if c < 2]


def _integrate_over(edges_list, edge_values, anchors):
    """Integrate prescribed increments over a connected edge set by a
    spanning tree; anchors is {vertex: value}.  Returns (values dict,
    worst closure defect over the non-tree edges)."""
    out_of = {}
    for e, (t, h) in edges_list:
        out_of.setdefault(t, []).append((h, e, 1.0))
        out_of.setdefault(h, []).append((t, e, -1.0))
    vals = dict(anchors)
    stack = list(anchors)
    used = set()
    while stack:
        u = stack.pop()
        for v, e, s in out_of.get(u, ()):
            if v not in vals:
                vals[v] = vals[u] + s * edge_values[e]
                used.add(e)
                stack.append(v)
    if len(vals) != len(out_of) + len(
            [a for a in anchors if a not in out_of]):
        raise HarmonicError("edge set is disconnected from the anchor")
    defect = 0.0
    for e, (t, h) in edges_list:
        if e not in used:
            defect = max(defect,
                         abs(vals[h] - vals[t] - edge_values[e]))
    return vals, defect


def solve_neumann(dm, bd, solver='auto'):
    """Neumann problem on a disc: f on the dual with prescribed df across
    the boundary.  Solved through the conjugate Dirichlet problem on the
    primal graph, then integrating i * dg over the dual.

    The disc must use truncated dual cells (boundary dual edges end at
    dangling vertices, as produced by build_dual), so that the primal
    boundary is a cycle.  Returns (f, report); report.residual carries
    the flux defect (zero exactly when the data is solvable).
    """
    top = validate(dm)
    if top.closed or top.euler_characteristic != 1 or \
            top.boundary_components != 1:
        raise HarmonicError("Neumann solve requires a disc")
    if bd.alpha is None or bd.y0 is None:
        raise HarmonicError("Neumann data needs y0 and alpha")
    if not dm.is_dual_vertex(bd.y0):
        raise HarmonicError("y0 must be a dual vertex")

    bnd = boundary_edges(dm.gamma)
    alpha = {int(e): complex(v) for e, v in bd.alpha.items()}
    missing = [e for e in bnd if e not in alpha]
    if missing:
        raise HarmonicError("alpha missing on boundary edges %s" % missing)

    # dg(e) = -(i / rho(e)) alpha(e*) makes i rho dg match alpha across
    # the boundary; integrate g over the boundary subgraph.  The closure
    # defects of its cycles are the flux obstruction.
    incr = {e: (-1j / dm.rho[e]) * alpha[e] for e in bnd}
    anchor = min(v for e in bnd for v in dm.gamma.edges[e])
    gvals, flux = _integrate_over([(e, dm.gamma.edges[e]) for e in bnd],
                                  incr, {anchor: 0.0 + 0.0j})

    g, rep = solve_dirichlet(dm, BoundaryData(dirichlet=gvals),
                             part='primal', solver=solver)

    # df on dual edges: the dual block of i * dg
    dg = np.array([g.values[h] - g.values[t] for t, h in dm.gamma.edges])
    df = 1j * dm.rho * dg

    # integrate over the dual graph from y0
    y0 = bd.y0 - dm.n_pv
    fvals = np.zeros(dm.n_lv, dtype=complex)
    seen = {y0}
    fvals[dm.dual_vertex(y0)] = complex(bd.f0)
    out_of = {}
    for e, (t, h) in enumerate(dm.gamma_star.edges):
        out_of.setdefault(t, []).append((h, df[e]))
        out_of.setdefault(h, []).append((t, -df[e]))
    stack = [y0]
    while stack:
        u = stack.pop()
        for v, dv in out_of.get(u, ()):
            if v not in seen:
                seen.add(v)
                fvals[dm.dual_vertex(v)] = fvals[dm.dual_vertex(u)] + dv
                stack.append(v)
    if len(seen) != dm.n_dv:
        raise HarmonicError("dual graph is disconnected")

    f = Cochain('L', 0, fvals)
    report = SolveReport(rep.method, rep.iterations, float(flux),
                         dirichlet_energy(dm, f, 'dual'))
    return f, report


# -- Hodge decomposition ------------------------------------------------------

def hodge_decompose(dm, c):
    """Split a form on a closed surface into exact + coexact + harmonic,
    orthogonally for the rho-weighted scalar product on 1-forms."""
    check(dm, c)
    if c.carrier != 'L':
        raise FormError("Hodge decomposition on Lambda forms")
    if not (dm.gamma.is_closed() and dm.gamma_star.is_closed()):
        raise HarmonicError("Hodge decomposition needs a closed surface")

    if c.degree == 1:
        D0 = forms.d0_matrix(dm).toarray()
        S1 = forms.star1_matrix(dm).toarray()
        wsq = np.sqrt(dm.lam_rho())
        # exact = D0 f, coexact = d*(2-form) = -*(D0 h) with h = *omega
        M = np.hstack([D0, -S1 @ D0]) * wsq[:, None]
        sol, *_ = np.linalg.lstsq(M, wsq * c.values, rcond=None)
        n = dm.n_lv
        exact = D0 @ sol[:n]
        coexact = -(S1 @ (D0 @ sol[n:]))
        harm = c.values - exact - coexact
        return HodgeSplit(Cochain('L', 1, exact), Cochain('L', 1, coexact),
                          Cochain('L', 1, harm))

    if c.degree == 0:
        Dstar = forms.codifferential_matrix(dm, 1).toarray()
        sol, *_ = np.linalg.lstsq(Dstar, c.values, rcond=None)
        coexact = Dstar @ sol
        harm = c.values - coexact
        return HodgeSplit(Cochain('L', 0, np.zeros(dm.n_lv, dtype=complex)),
                          Cochain('L', 0, coexact), Cochain('L', 0, harm))

    D1 = forms.d1_matrix(dm).toarray()
    sol, *_ = np.linalg.lstsq(D1, c.values, rcond=None)
    exact = D1 @ sol
    harm = c.values - exact
    return HodgeSplit(Cochain('L', 2, exact),
                      Cochain('L', 2, np.zeros(dm.n_lf, dtype=complex)),
                      Cochain('L', 2, harm))


# -- harmonic and holomorphic 1-forms ----------------------------------------

def harmonic_kernel(dm, cutoff=1e-9):
    """Basis of closed and coclosed 1-forms, with the singular value gap."""
    if not (dm.gamma.is_closed() and dm.gamma_star.is_closed()):
        raise HarmonicError("harmonic forms need a closed surface")
    D1 = forms.d1_matrix(dm).toarray()
    Dstar = forms.codifferential_matrix(dm, 1).toarray()
    M = np.vstack([D1, Dstar])
    _, s, vh = np.linalg.svd(M)
    smax = s[0] if len(s) else 1.0
    nz = int(np.sum(s > cutoff * smax))
    dim = M.shape[1] - nz
    # separation between the kept spectrum and the numerical kernel:
    # smallest non-null singular value over the largest null one
    gap = np.inf
    if dim and nz and s[nz] > 0:
        gap = float(s[nz - 1] / s[nz])
    return vh[nz:].conj().T, dim, gap


def holomorphic_basis(dm, cutoff=1e-9):
    """Orthonormal basis of {alpha : d alpha = 0, *alpha = -i alpha}.

    Returns (basis list, info dict).  Dimension is 2 genus; the harmonic
    kernel it comes from has twice that.  Gamma* partners of Gamma forms
    appear through the type projection (alpha_dual = i * alpha_primal).
    """
    K, harm_dim, gap = harmonic_kernel(dm, cutoff)
    if harm_dim and gap < 1e3:
        warnings.warn("harmonic rank gap %.2e is marginal" % gap)
    if harm_dim == 0:
        return [], {'harmonic_dim': 0, 'dim': 0, 'sv_gap': gap}
    S1 = forms.star1_matrix(dm).toarray()
    P = 0.5 * (np.eye(2 * dm.n_edges) + 1j * S1)
    B = P @ K
    w = dm.lam_rho()
    G = B.conj().T @ (w[:, None] * B)
    lam, V = np.linalg.eigh(G)
    keep = lam > cutoff * max(lam[-1], 1.0)
    basis = B @ V[:, keep] / np.sqrt(lam[keep])
    out = [Cochain('L', 1, basis[:, j]) for j in range(basis.shape[1])]
    info = {'harmonic_dim': harm_dim, 'dim': len(out), 'sv_gap': gap}
    return out, info


# -- Weyl and Green -----------------------------------------------------------

def weyl_residual(dm, f, g):
    """Integral over Lambda faces of f . Delta g (the Weyl pairing)."""
    check(dm, f)
    check(dm, g)
    lap = laplacian(dm, g).values
    total = 0.0 + 0.0j
    for fi in range(dm.n_pf):
        v = dm.dual_vertex(dm.pf_center[fi])
        total += f.values[v] * lap[v]
    for fj in range(dm.n_df):
        v = dm.df_center[fj]
        total += f.values[v] * lap[v]
    return complex(total)


def green_identity_residual(dm, quad_ids, f, g, pinv=None, tol=1e-8):
    """Green's identity defect on a diamond region D:

        sum_D (f . Delta_D g - g . Delta_D f)
        - sum_{boundary of D} (f . B*dg - g . B*df)

    with Delta_D = d_diamond B * d.  Warns when the lift residual of B is
    above tol (the result is then unreliable).
    """
    check(dm, f)
    check(dm, g)
    if pinv is None:
        pinv = forms.b_matrix(dm)
    dia = dm.diamond

    def lift(func):
        a = forms.hodge_star(dm, forms.coboundary(dm, func))
        lifted, res = forms.b_lift(dm, a, pinv)
        return lifted, res

    ag, res_g = lift(g)
    af, res_f = lift(f)
    if max(res_f, res_g) > tol * (1 + max(np.abs(f.values).max(),
                                          np.abs(g.values).max())):
        warnings.warn("averaging map lift residual %.2e; Green defect "
                      "unreliable" % max(res_f, res_g))
    lap_g = forms.coboundary(dm, ag).values
    lap_f = forms.coboundary(dm, af).values

    quad_ids = set(int(q) for q in quad_ids)
    total = 0.0 + 0.0j
    for q in quad_ids:
        corners = dia.quads[q]
        favg = 0.25 * sum(f.values[c] for c in corners)
        gavg = 0.25 * sum(g.values[c] for c in corners)
        total += favg * lap_g[q] - gavg * lap_f[q]

    # boundary sides: sides of D quads not shared with another D quad,
    # traversed in the quad cycle order (region on the left)
    side_count = {}
    for q in quad_ids:
        cyc = dia.quads[q]
        for i in range(4):
            s = dia.side_index[
                (cyc[i], cyc[(i + 1) % 4])
                if (cyc[i], cyc[(i + 1) % 4]) in dia.side_index
                else (cyc[(i + 1) % 4], cyc[i])]
            side_count[s] = side_count.get(s, 0) + 1
    for q in quad_ids:
        cyc = dia.quads[q]
        for i in range(4):
            u, v = cyc[i], cyc[(i + 1) % 4]
            s = dia.side_index[(u, v) if (u, v) in dia.side_index else (v, u)]
            if side_count[s] != 1:
                continue
            ig = forms.side_integral(dia, ag.values, u, v)
            iff = forms.side_integral(dia, af.values, u, v)
            total -= (0.5 * (f.values[u] + f.values[v]) * ig
                      - 0.5 * (g.values[u] + g.values[v]) * iff)
    return complex(total)
