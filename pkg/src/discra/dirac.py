"""Spin structures and the discrete Dirac equation.

Double covers of the triple graph (built by maximal-tree peeling),
half-angle systems, Dirac spinor construction and existence, the spin
symmetry and Dotsenko propagation equations, spinor-pair 1-forms, and the
massive layer with elliptic half-angles.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import eref, eidx, esign
from .forms import Cochain


class DiracError(ValueError):
    pass


# ---------------------------------------------------------------------------
# half angles on the triple graph
#
# A triple-graph edge passes a corner c of its quad and cuts the diagonal
# through c.  Its half angle is +-phi(b)/2 where b is that diagonal and
# tan(phi(b)/2) = rho(b).  The positive traversal direction of a quad face,
# for spinor purposes, is the REVERSE of the stored quad cycle: with that
# choice the constructed spinor satisfies the spin symmetry zeta(xi3+) =
# i zeta(xi1+), the per-edge phase (rho(a)+i)/sqrt(1+rho(a)^2), and its
# square is proportional to the flat side differentials.  The cut diagonal
# is the Lambda edge dual to the one the edge integrates across
# (tri.edge_cross_lambda).


def _rho_lambda(dm):
    return np.concatenate([dm.rho, 1.0 / dm.rho])


@dataclass
class HalfAngleSystem:
    """Signed half angles per stored triple-graph edge.

    theta[i] is the half angle of edge i in its stored orientation; the
    reversed edge carries -theta[i].  Around every quad the four positive
    traversals sum to pi; around a flat vertex to (minus) half the conic
    angle.
    """
    theta: np.ndarray

    def of(self, ref):
        return esign(ref) * self.theta[eidx(ref)]


def _edge_quad_sign(tri, i, nE):
    """(quad, +1/-1): direction of stored edge i around its quad face,
    positive meaning against the stored cycle order (see module note)."""
    lam = tri.edge_cross_lambda[i]
    q = lam % nE
    cyc = tri.quad_cycle[q]
    u, v = tri.edges[i]
    iu, iv = cyc.index(u), cyc.index(v)
    return q, (-1 if (iu + 1) % 4 == iv else 1)


def half_angles(dm):
    tri = dm.triple
    nE = dm.n_edges
    rho_l = _rho_lambda(dm)
    theta = np.empty(len(tri.edges))
    for i in range(len(tri.edges)):
        lam = tri.edge_cross_lambda[i]
        cut = (lam + nE) % (2 * nE)
        phi = 2.0 * math.atan(rho_l[cut])
        q, sgn = _edge_quad_sign(tri, i, nE)
        theta[i] = sgn * 0.5 * phi
    return HalfAngleSystem(theta=theta)


# ---------------------------------------------------------------------------
# spin structures


@dataclass
class SpinStructure:
    """Double cover of the triple graph's 1-skeleton.

    tau[i] in {0,1}: whether crossing edge i exchanges the two sheets.
    The cover restricted to every face boundary is non-trivial (odd tau
    sum), so a walk around any face returns to the other sheet.  basis
    lists the edges whose tau bits were free choices (one per generator
    of the fundamental group); mu records the chosen bits.
    """
    tau: np.ndarray
    basis: list
    mu: dict

    def face_sum(self, tri, face_edges):
        return int(sum(self.tau[i] for i in face_edges)) % 2


def build_spin_structure(dm, mu=None):
    """Construct a spin structure by tree/cotree peeling.

    A maximal tree of the triple graph carries no sheet exchange; faces
    with a single undetermined edge are peeled repeatedly (each face must
    lift non-trivially, fixing the remaining bit).  When the peeling
    stalls, one undetermined edge is a free generator choice, taken from
    mu (sequence or dict index -> bit, default all 0).  Raises if the
    face conditions are inconsistent.
    """
    tri = dm.triple
    n = len(tri.edges)
    tau = np.full(n, -1, dtype=int)

    # maximal tree by breadth-first search
    adj = {}
    for i, (u, v) in enumerate(tri.edges):
        adj.setdefault(u, []).append((v, i))
        adj.setdefault(v, []).append((u, i))
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v, i in adj.get(u, ()):
            if v not in seen:
                seen.add(v)
                tau[i] = 0
                stack.append(v)
    if len(seen) != tri.n_vertices:
        raise DiracError("triple graph is disconnected")

    faces = tri.face_edge_lists()
    if mu is None:
        mu_bits = {}
    elif isinstance(mu, dict):
        mu_bits = dict(mu)
    else:
        mu_bits = dict(enumerate(mu))
    basis, chosen = [], {}
    pending = set(range(len(faces)))
    while True:
        progress = True
        while progress:
            progress = False
            for fi in list(pending):
                unset = [i for i in faces[fi] if tau[i] < 0]
                if not unset:
                    if sum(tau[i] for i in faces[fi]) % 2 != 1:
                        raise DiracError(
                            "face %d cannot lift non-trivially" % fi)
                    pending.discard(fi)
                    progress = True
                elif len(unset) == 1:
                    s = sum(tau[i] for i in faces[fi] if tau[i] >= 0)
                    tau[unset[0]] = (1 - s) % 2
                    pending.discard(fi)
                    progress = True
        free = sorted(i for i in range(n) if tau[i] < 0
                      and any(i in faces[fi] for fi in pending))
        if not free:
            break
        e = free[0]
        bit = int(mu_bits.get(len(basis), 0)) % 2
        tau[e] = bit
        basis.append(e)
        chosen[len(basis) - 1] = bit
    tau[tau < 0] = 0        # edges on no face (patch boundary)
    for fi, fe in enumerate(faces):
        if sum(tau[i] for i in fe) % 2 != 1:
            raise DiracError("face %d lifts trivially" % fi)
    return SpinStructure(tau=tau, basis=basis, mu=chosen)


def _cover_isomorphic(tri, s1, s2):
    """Two covers are isomorphic iff tau1 + tau2 is a vertex coboundary."""
    diff = (s1.tau + s2.tau) % 2
    color = {0: 0}
    stack = [0]
    adj = {}
    for i, (u, v) in enumerate(tri.edges):
        adj.setdefault(u, []).append((v, i))
        adj.setdefault(v, []).append((u, i))
    while stack:
        u = stack.pop()
        for v, i in adj.get(u, ()):
            want = (color[u] + diff[i]) % 2
            if v not in color:
                color[v] = want
                stack.append(v)
            elif color[v] != want:
                return False
    return True


def enumerate_spin_structures(dm):
    """All pairwise non-isomorphic spin structures (2^(2g) of them)."""
    probe = build_spin_structure(dm)
    b = len(probe.basis)
    out = []
    for bits in range(2 ** b):
        mu = [(bits >> k) & 1 for k in range(b)]
        s = build_spin_structure(dm, mu)
        if not any(_cover_isomorphic(dm.triple, s, t) for t in out):
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# spinors


@dataclass
class Spinor:
    """An equivariant function on the spin double cover.

    values[xi] is the value at a chosen lift of triple-graph vertex xi
    (the other lift carries -values[xi]); tau[i] in {0,1} says whether
    edge i connects equal (0) or opposite (1) lifts of its endpoints,
    defining the underlying cover.
    """
    values: np.ndarray
    tau: np.ndarray

    def serialize(self):
        out = []
        for xi, v in enumerate(self.values):
            out.append((xi, 0, float(v.real), float(v.imag)))
            out.append((xi, 1, float(-v.real), float(-v.imag)))
        return out


def _tri_adj(tri):
    adj = {}
    for i, (u, v) in enumerate(tri.edges):
        adj.setdefault(u, []).append((v, i, 1))
        adj.setdefault(v, []).append((u, i, -1))
    return adj


def construct_dirac_spinor(dm, base=0, tol=1e-9):
    """Dirac spinor by half-angle phase propagation, zeta(base lift) = 1.

    Breadth-first propagation of exp(i theta) factors from the base;
    every non-tree edge must close up to a sign (the two sheets), which
    is verified on the whole edge set.  A closure defect beyond tol means
    the cone-angle condition fails; the offending edge cycle is reported.
    """
    tri = dm.triple
    has = half_angles(dm)
    n = tri.n_vertices
    vals = np.zeros(n, dtype=complex)
    parent = {base: None}
    vals[base] = 1.0
    order = [base]
    adj = _tri_adj(tri)
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v, i, sgn in adj.get(u, ()):
            if v not in parent:
                parent[v] = (u, i)
                vals[v] = vals[u] * cmath.exp(1j * sgn * has.theta[i])
                order.append(v)
    if len(parent) != n:
        raise DiracError("triple graph is disconnected")
    tau = np.zeros(len(tri.edges), dtype=int)
    for i, (u, v) in enumerate(tri.edges):
        pred = vals[u] * cmath.exp(1j * has.theta[i])
        if abs(pred - vals[v]) <= tol:
            tau[i] = 0
        elif abs(pred + vals[v]) <= tol:
            tau[i] = 1
        else:
            err = DiracError(
                "path-dependent phases: closure defect %.3e on the cycle "
                "through triple edge %d" % (
                    min(abs(pred - vals[v]), abs(pred + vals[v])), i))
            err.witness = _witness_cycle(parent, i, tri)
            raise err
    return Spinor(values=vals, tau=tau)


def _witness_cycle(parent, edge, tri):
    u, v = tri.edges[edge]

    def path(w):
        out = []
        while parent[w] is not None:
            w0, i = parent[w]
            out.append(i)
            w = w0
        return out

    pu, pv = path(u), path(v)
    while pu and pv and pu[-1] == pv[-1]:
        pu.pop()
        pv.pop()
    return pu[::-1] + [edge] + pv


def _quad_lift(dm, sp, q):
    """Values (z1, z2, z3, z4) on one coherent lift of quad q's face.

    The face cycle is (xi2, xi3, xi4, xi1) in the stored order; the lift
    starts at xi2 on the chosen sheet and follows tau.  Returns also the
    total sheet exchange around the face (must be 1 for a spinor).
    """
    tri = dm.triple
    cyc = tri.quad_cycle[q]
    # positive traversal reverses the stored cycle; the anchor makes the
    # step xi1 -> xi2 pass the primal tail corner
    order = (cyc[1], cyc[0], cyc[3], cyc[2])     # xi1, xi2, xi3, xi4
    sign = 1
    out = []
    for kk in range(4):
        out.append(sign * sp.values[order[kk]])
        a, b = order[kk], order[(kk + 1) % 4]
        key = (a, b) if (a, b) in tri.edge_index else (b, a)
        i = tri.edge_index[key]
        sign *= (-1) ** int(sp.tau[i])
    return tuple(out), (1 if sign == -1 else 0)


def dirac_residual(dm, sp, tol=1e-9):
    """Maximal spin-symmetry and Dotsenko residuals over all quad lifts.

    Spin symmetry: z3 = i z1 and z4 = i z2 on the positively oriented
    face lift.  Dotsenko: z1 = sqrt(1+rho^2) z2 - rho z3 and its three
    rotations around the diamond (with rho and rho* alternating).  An
    input whose cover is trivial around some face is rejected as a
    malformed spinor.
    """
    scale = float(np.abs(sp.values).max()) or 1.0
    sym = dot = 0.0
    for q in range(dm.n_edges):
        (z1, z2, z3, z4), odd = _quad_lift(dm, sp, q)
        if not odd:
            raise DiracError(
                "malformed spinor: trivial cover around quad %d" % q)
        r, rs = dm.rho[q], 1.0 / dm.rho[q]
        sym = max(sym, abs(z3 - 1j * z1), abs(z4 - 1j * z2))
        # the diagonal separating (xi2, xi3) from (xi4, xi1) is the dual
        # edge for the anchored labels, then they alternate
        for (a, b, c, rr) in ((z1, z2, z3, rs), (z2, z3, z4, r),
                              (z3, z4, -z1, rs), (z4, -z1, -z2, r)):
            dot = max(dot, abs(a - (math.sqrt(1 + rr * rr) * b - rr * c)))
    return sym / scale, dot / scale


@dataclass
class DiracResult:
    ok: bool
    spinor: Spinor | None
    witness: list        # offending Lambda vertices (or triple-edge cycle)
    residuals: tuple | None


def dirac_exists(dm, tol=1e-9):
    """Decide Dirac spinor existence from the conformal structure alone.

    The angle phi(a) = 2 arctan rho(a) per Lambda edge always satisfies
    phi(a) + phi(a*) = pi; existence requires exp(i sum phi/2) = -1 at
    every interior vertex (conic angle 2 pi mod 4 pi).  On success the
    spinor is constructed and both residuals verified; on failure the
    violating vertices are returned.
    """
    rho_l = _rho_lambda(dm)
    bad = []
    for v in _interior_vertices(dm):
        s = sum(math.atan(rho_l[eidx(r)]) for r in _incident_refs(dm, v))
        if abs(cmath.exp(1j * s) + 1.0) > tol:
            bad.append(v)
    if bad:
        return DiracResult(ok=False, spinor=None, witness=bad,
                           residuals=None)
    try:
        sp = construct_dirac_spinor(dm, tol=max(tol, 1e-9))
    except DiracError as e:
        return DiracResult(ok=False, spinor=None,
                           witness=getattr(e, 'witness', []), residuals=None)
    res = dirac_residual(dm, sp)
    if max(res) > max(tol, 1e-9):
        return DiracResult(ok=False, spinor=None, witness=[],
                           residuals=res)
    return DiracResult(ok=True, spinor=sp, witness=[], residuals=res)


def _incident_refs(dm, v):
    from .critical import _incident_refs as f
    return f(dm, v)


def _interior_vertices(dm):
    from .critical import _interior_vertices as f
    return f(dm)


# ---------------------------------------------------------------------------
# spinor-pair 1-forms


def spinor_form(dm, z, zp):
    """The Lambda 1-form of a spinor pair, 2 int_a = z3 z3' - z2 z2' +
    z4 z4' - z1 z1' per quad (and the rotated formula on the dual edge).

    The pointwise products descend from the cover to the triple graph, so
    the formula needs no lift bookkeeping.  Returns (form, report) where
    report carries the closedness defect, the Cauchy-Riemann residual of
    the form, and (when dm.embedding is set) the ratio spread of the form
    against dZ.
    """
    from . import forms as F
    tri = dm.triple
    p = np.asarray(z.values) * np.asarray(zp.values)
    nE = dm.n_edges
    w = np.zeros(2 * nE, dtype=complex)
    for q in range(nE):
        c2, c3, c4, c1 = tri.quad_cycle[q]
        p1, p2, p3, p4 = p[c1], p[c2], p[c3], p[c4]
        w[q] = 0.5 * (p3 - p2 + p4 - p1)
        w[nE + q] = 0.5 * (p4 - p3 + p1 - p2)
    form = Cochain('L', 1, w)
    d1 = F.d1_matrix(dm)
    closure = float(np.abs(d1 @ w).max()) if d1.shape[0] else 0.0
    # pure type: w(a*) = +- i rho(a) w(a); the sign depends on whether the
    # form is paired with the face orientation of the mesh or the reversed
    # one the spinor construction uses
    starw = F.hodge_star(dm, form).values
    t_direct = float(np.abs(starw + 1j * w).max())
    t_reversed = float(np.abs(starw - 1j * w).max())
    scale = 1e-9 * (1 + float(np.abs(w).max()))
    report = {
        'closure': closure,
        'type_residual': min(t_direct, t_reversed),
        'orientation': 'direct' if t_direct <= t_reversed else 'reversed',
        'closed': closure <= scale,
        'holomorphic': closure <= scale and min(t_direct, t_reversed) <= scale,
    }
    emb = getattr(dm, 'embedding', None)
    if emb is not None:
        from .critical import embedding_dz
        dZ_sides = embedding_dz(dm, emb)
        dia = dm.diamond
        dz = np.zeros(2 * nE, dtype=complex)
        for q, (x, y, xp, yp) in enumerate(dia.quads):
            s1 = dia.side_index[(x, y)]
            s2 = dia.side_index[(xp, y)]
            dz[q] = dZ_sides.values[s1] - dZ_sides.values[s2]
            s3 = dia.side_index[(xp, yp)]
            dz[nE + q] = dZ_sides.values[s3] - dZ_sides.values[s2]
        lam = w / dz
        # the ratio is a single constant on each of the two edge blocks;
        # the primal->dual orientation of the quad sides makes the two
        # constants exact negatives of each other
        lp, ld = lam[:nE], lam[nE:]
        mp, md = complex(lp.mean()), complex(ld.mean())
        report['lambda_primal'] = mp
        report['lambda_dual'] = md
        sp_p = float(np.abs(lp - mp).max() / max(abs(mp), 1e-300))
        sp_d = float(np.abs(ld - md).max() / max(abs(md), 1e-300))
        report['lambda_spread'] = max(sp_p, sp_d)
        report['lambda_antisymmetry'] = float(
            abs(mp + md) / max(abs(mp), 1e-300))
    return form, report


def dotsenko_solutions(dm, zeta, cutoff=1e-8):
    """Basis of solutions of the Dotsenko equation, relative to a Dirac
    spinor zeta: any spinor on the same cover is g * zeta for a function
    g on the triple graph, and the Dotsenko equation becomes linear in g.

    Returns a list of Spinors (sharing zeta's cover).  The space contains
    zeta itself (g = 1) and conj(zeta) (g = 1/zeta^2)."""
    tri = dm.triple
    n = tri.n_vertices
    rows = []
    for q in range(dm.n_edges):
        (z1, z2, z3, z4), _ = _quad_lift(dm, Spinor(zeta.values, zeta.tau), q)
        cyc = tri.quad_cycle[q]
        c1, c2, c3, c4 = cyc[1], cyc[0], cyc[3], cyc[2]
        r, rs = dm.rho[q], 1.0 / dm.rho[q]
        for (ia, ib, ic, za, zb, zc, rr) in (
                (c1, c2, c3, z1, z2, z3, rs),
                (c2, c3, c4, z2, z3, z4, r)):
            row = np.zeros(n, dtype=complex)
            row[ia] += za
            row[ib] -= math.sqrt(1 + rr * rr) * zb
            row[ic] += rr * zc
            rows.append(row)
    M = np.asarray(rows)
    _, sv, vh = np.linalg.svd(M)
    ker = [vh[i].conj() for i in range(len(vh))
           if i >= len(sv) or sv[i] <= cutoff * (sv[0] if len(sv) else 1)]
    return [Spinor(values=g * zeta.values, tau=zeta.tau.copy()) for g in ker]


# ---------------------------------------------------------------------------
# massive layer: elliptic half angles


def _agm_complete(k):
    """Complete elliptic integral K(k') via the arithmetic-geometric mean:
    I = pi / (2 agm(1, k)) where k is the modulus complementary to the
    one inside the integrand."""
    a, b = 1.0, float(k)
    for _ in range(64):
        if abs(a - b) <= 4e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (2 * a)


def _agm_incomplete(phi, m):
    """Incomplete elliptic integral F(phi, m) by the descending Landen /
    AGM phase recursion (modulus m in [0, 1))."""
    if m == 0:
        return float(phi)
    a, b = 1.0, math.sqrt(1.0 - m * m)
    twon = 1.0
    # the AGM converges quadratically but can stall one ulp apart, so cap
    # the iteration count as well as testing relative agreement
    for _ in range(64):
        if abs(a - b) <= 4e-16 * a:
            break
        # phase roughly doubles: tan(phi_{n+1} - phi_n) = (b/a) tan phi_n,
        # with the branch of the arctangent nearest to phi_n
        inc = (math.atan((b / a) * math.tan(phi))
               if abs(math.cos(phi)) > 1e-12 else math.pi / 2)
        inc += math.pi * round((phi - inc) / math.pi)
        phi = phi + inc
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        twon *= 2.0
    return phi / (twon * a)


def complete_I(kprime):
    """I = integral of dphi / sqrt(1 - k'^2 sin^2 phi) over [0, pi/2]."""
    if not 0 <= kprime < 1:
        raise DiracError("k' must lie in [0, 1): the integral diverges")
    k = math.sqrt(max(0.0, 1.0 - kprime * kprime))
    return _agm_complete(k)


def elliptic_half_angle(phi, k, crosscheck=1e-11):
    """Massive half angle u = F(phi/2, k') with k'^2 = 1 - k^2.

    Evaluated both by adaptive quadrature and by the hand-written AGM
    recursion; the two routes must agree to crosscheck.
    """
    if not 0 < phi < math.pi:
        raise DiracError("phi must lie in (0, pi)")
    if not 0 < k <= 1:
        raise DiracError("modulus k must lie in (0, 1]")
    kp = math.sqrt(max(0.0, 1.0 - k * k))
    from scipy.integrate import quad
    val_q, _ = quad(lambda t: 1.0 / math.sqrt(1.0 - (kp * math.sin(t)) ** 2),
                    0.0, phi / 2, epsabs=1e-13, epsrel=1e-13)
    val_a = _agm_incomplete(phi / 2, kp)
    if abs(val_q - val_a) > crosscheck * (1 + abs(val_q)):
        raise DiracError("elliptic evaluation cross-check failed: "
                         "quadrature %.15g vs AGM %.15g" % (val_q, val_a))
    return val_a


@dataclass
class MassiveParams:
    k: float
    kprime: float = field(init=False)
    I: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.k <= 1:
            raise DiracError("modulus k must lie in (0, 1]")
        self.kprime = math.sqrt(max(0.0, 1.0 - self.k * self.k))
        self.I = math.pi / 2 if self.k == 1 else complete_I(self.kprime)


@dataclass
class MassiveReport:
    ok_modulus: bool
    modulus_offenders: list
    face_residual: dict
    vertex_residual: dict
    flat: bool
    params: MassiveParams


def massive_flatness(dm, k, rho_lambda=None, tol=1e-9):
    """Flatness report for a massive structure of modulus k.

    rho_lambda gives independent conductances on the primal and dual
    blocks (default: the conformal ones, rho and 1/rho, which satisfy the
    modulus condition only at k = 1).  Checks rho(a) rho(a*) = 1/k per
    pair, then evaluates the half angles u(a) = F(phi(a)/2, k') and the
    residuals of sum over a face boundary of (I - u(a)) = I mod 4I and of
    sum over edges at a vertex of u(a) = I mod 4I, reduced to [-2I, 2I).
    The formulas are reported verbatim; at k = 1 they do not reduce to
    the critical-case identities (sum u = pi at a flat vertex vs I =
    pi/2), and the nonzero residual is reported, not repaired.
    """
    nE = dm.n_edges
    rho_l = (np.asarray(rho_lambda, dtype=float) if rho_lambda is not None
             else _rho_lambda(dm))
    if rho_l.shape != (2 * nE,):
        raise DiracError("rho_lambda must give one value per Lambda edge")
    params = MassiveParams(k=k)
    offenders = [e for e in range(nE)
                 if abs(rho_l[e] * rho_l[nE + e] - 1.0 / k) > tol]
    ok_mod = not offenders

    if k == 1:
        u = np.arctan(rho_l)                   # u = phi/2 exactly
    else:
        u = np.array([elliptic_half_angle(2 * math.atan(r), k)
                      for r in rho_l])
    I = params.I

    def reduce4I(val):
        return ((val - I + 2 * I) % (4 * I)) - 2 * I

    face_res = {}
    for part, comp, off in (('primal', dm.gamma, 0),
                            ('dual', dm.gamma_star, nE)):
        for fi, cycle in enumerate(comp.faces):
            s = sum(I - u[off + eidx(r)] for r in cycle)
            face_res[(part, fi)] = float(reduce4I(s))
    vert_res = {}
    for v in _interior_vertices(dm):
        s = sum(u[eidx(r)] for r in _incident_refs(dm, v))
        vert_res[v] = float(reduce4I(s))
    flat = (ok_mod
            and all(abs(r) <= tol for r in face_res.values())
            and all(abs(r) <= tol for r in vert_res.values()))
    return MassiveReport(ok_modulus=ok_mod, modulus_offenders=offenders,
                         face_residual=face_res, vertex_residual=vert_res,
                         flat=flat, params=params)
