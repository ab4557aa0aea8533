"""Planar embeddings and criticality.

Lattice generators (rhombic deformations of the square and triangular
lattices), Voronoi/Delaunay dual pairs, the semi-critical/critical
classifier with angle systems and conic-angle reports, rhombus refinement,
a refinement convergence harness, and Ising coupling criticality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshError, eref, eidx, esign, double_from_quads


class CriticalError(ValueError):
    pass


# ---------------------------------------------------------------------------
# domain types


@dataclass
class PlanarEmbedding:
    """Positions of Lambda vertices in the plane.

    position[v]: complex position of Lambda vertex v (dual offset by n_pv).
    periods: None for planar patches, (p1, p2) translation periods on the
    torus (positions are then those of canonical representatives).
    quad_corners[q]: the four corner positions (x, y, xp, yp) of diamond
    face q, locally developed so that each quad is a true planar
    quadrilateral even when positions wrap around the periods.
    conic: cone angles at marked vertices (empty for generated lattices,
    which are flat everywhere).
    """
    position: np.ndarray
    periods: tuple | None = None
    quad_corners: np.ndarray | None = None
    conic: dict = field(default_factory=dict)

    def corners(self, dm):
        if self.quad_corners is not None:
            return self.quad_corners
        quads = dm.diamond.quads
        out = np.empty((len(quads), 4), dtype=complex)
        for q, cyc in enumerate(quads):
            out[q] = [self.position[v] for v in cyc]
        return out


@dataclass
class AngleSystem:
    """Directed-diagonal angles per oriented Lambda edge.

    phi[ref] for a signed Lambda edge ref r = +-(e+1) (dual block offset by
    n_edges) is the quadrilateral corner angle at the tail of r, i.e. the
    angle under which the two quad sides leave the tail vertex.  For every
    quad the four values sum to 2*pi; on a critical map phi(r) = phi(-r)
    = 2*arctan(rho) and phi(e) + phi(e*) = pi.
    """
    phi: dict
    delta: float

    def conic_angle(self, dm, v):
        """Total angle around Lambda vertex v (sum of incident corners)."""
        total = 0.0
        for r in _incident_refs(dm, v):
            total += self.phi[r]
        return total


@dataclass
class IsingCouplings:
    """Ising interaction constants on Lambda edges, K = arcsinh(rho)/2.

    K has one entry per Lambda edge (primal block then dual block); the
    coupling is orientation independent.
    """
    K: np.ndarray

    def rho(self):
        return np.sinh(2.0 * self.K)


@dataclass
class ClassifyReport:
    verdict: str                    # 'none' | 'semi-critical' | 'critical'
    angles: AngleSystem | None
    conic: dict                     # interior Lambda vertex -> angle
    nonflat: list                   # vertices with conic angle != 2*pi
    mod4pi: dict                    # vertex -> angle class in {2pi, ...} mod 4pi
    violations: list                # (quad id, reason) for failing faces
    delta: float
    side_spread: float


# ---------------------------------------------------------------------------
# incidence helpers


def _incident_refs(dm, v):
    """Signed Lambda edge refs with tail v (both blocks)."""
    nE = dm.n_edges
    refs = []
    if v < dm.n_pv:
        for e, (t, h) in enumerate(dm.gamma.edges):
            if t == v:
                refs.append(eref(e, 1))
            if h == v:
                refs.append(eref(e, -1))
    else:
        w = v - dm.n_pv
        for e, (t, h) in enumerate(dm.gamma_star.edges):
            if t == w:
                refs.append(eref(nE + e, 1))
            if h == w:
                refs.append(eref(nE + e, -1))
    return refs


def _interior_vertices(dm):
    """Lambda vertices surrounded by a full fan of quads."""
    ins = [v for v in range(dm.n_pv) if v in dm.pv_face]
    ins += [dm.n_pv + w for w in range(dm.n_dv) if w in dm.dv_face]
    return ins


# ---------------------------------------------------------------------------
# classifier


def _corner_angle(p, a, b):
    """Angle at p between directions (a - p) and (b - p), in (0, 2*pi)."""
    u, v = a - p, b - p
    if u == 0 or v == 0:
        raise CriticalError("degenerate quad corner")
    ang = math.atan2((v / u).imag, (v / u).real)
    if ang <= 0:
        ang += 2 * math.pi
    return ang


def classify_map(dm, emb, rtol=1e-9):
    """Classify an embedded double as none / semi-critical / critical.

    Semi-critical: every diamond face is a non-degenerate quadrilateral
    with orthogonal, positively oriented diagonals whose length ratio
    matches rho.  Critical: additionally all quad sides share a common
    length delta (relative tolerance rtol).  The report carries the angle
    system, the conic angle at each interior vertex (flagging angles
    different from 2*pi and their mod-4*pi class) and the violating faces.
    """
    corners = emb.corners(dm)
    nE = dm.n_edges
    violations = []
    phi = {}
    sides = []
    for q in range(dm.diamond.n_faces):
        x, y, xp, yp = corners[q]
        dp, dd = xp - x, yp - y
        lp, ld = abs(dp), abs(dd)
        if lp == 0 or ld == 0:
            raise CriticalError("degenerate diagonal on quad %d" % q)
        cross = (dp.conjugate() * dd).imag
        dot = (dp.conjugate() * dd).real
        if cross <= 0:
            violations.append((q, "diagonals not positively oriented"))
        if abs(dot) > rtol * lp * ld:
            violations.append((q, "diagonals not orthogonal"))
        if abs(ld / lp - dm.rho[q]) > rtol * (1 + dm.rho[q]):
            violations.append((q, "diagonal length ratio differs from rho"))
        if dm.lengths is not None:
            if (abs(lp - dm.lengths[0][q]) > rtol * lp
                    or abs(ld - dm.lengths[1][q]) > rtol * ld):
                violations.append((q, "segment lengths differ from ell"))
        phi[eref(q, 1)] = _corner_angle(x, y, yp)
        phi[eref(q, -1)] = _corner_angle(xp, yp, y)
        phi[eref(nE + q, 1)] = _corner_angle(y, xp, x)
        phi[eref(nE + q, -1)] = _corner_angle(yp, x, xp)
        sides += [abs(y - x), abs(xp - y), abs(yp - xp), abs(x - yp)]

    sides = np.asarray(sides)
    delta = float(sides.max())
    spread = float((sides.max() - sides.min()) / sides.max())
    semi = not violations
    critical = semi and spread <= rtol

    angles = AngleSystem(phi=phi, delta=delta)
    conic, nonflat, mod4pi = {}, [], {}
    for v in _interior_vertices(dm):
        theta = angles.conic_angle(dm, v)
        conic[v] = theta
        if abs(theta - 2 * math.pi) > max(rtol, 1e-8):
            nonflat.append(v)
        # class used by the spinor existence theorem: theta mod 4*pi,
        # reported as the winding parity round(theta / (2*pi)) mod 2
        mod4pi[v] = int(round(theta / (2 * math.pi))) % 2

    verdict = 'critical' if critical else ('semi-critical' if semi else 'none')
    return ClassifyReport(verdict=verdict, angles=angles, conic=conic,
                          nonflat=nonflat, mod4pi=mod4pi,
                          violations=violations, delta=delta,
                          side_spread=spread)


# ---------------------------------------------------------------------------
# lattice generators
#
# The square-lattice families are built from a rhombic tiling of the plane
# whose tiles are spanned by four unit side vectors sigma_0, sigma_1,
# tau_0, tau_1 (two families of parallel strips, period 2 in each).  The
# primal vertex (i, j) sits at S(i+j) + T(i-j) where S, T are the partial
# sums of delta*sigma, delta*tau; face centers interleave.  Every diamond
# face is then a rhombus of side delta with orthogonal diagonals, so the
# construction is critical by design, and the vertex flatness constraint
# is exactly sum arctan(rho_i) = pi.


def _prefix(k, v0, v1):
    """Sum of v_{k' mod 2} for k' in [0, k) (signed for negative k)."""
    return (k // 2) * (v0 + v1) + (k % 2) * v0


def _period2_vectors(rhos, delta):
    r1, r2, r3, r4 = rhos
    if min(rhos) <= 0:
        raise CriticalError("rho parameters must be positive")
    total = sum(math.atan(r) for r in rhos)
    if abs(total - math.pi) > 1e-12:
        raise CriticalError(
            "period-2 parameters must satisfy "
            "arctan(r1)+arctan(r2)+arctan(r3)+arctan(r4) = pi "
            "(got %.12g)" % total)
    # rhombus angles of the four strip-crossing types
    A = 2 * math.atan(r2)            # (sigma0, tau0): vertical edge type 2
    D = 2 * math.atan(r4)            # (sigma1, tau1): vertical edge type 4
    B = math.pi - 2 * math.atan(r1)  # (sigma1, tau0): horizontal type 1
    C = math.pi - 2 * math.atan(r3)  # (sigma0, tau1): horizontal type 3
    rot = 1j ** 0.5                  # cosmetic global rotation
    sigma = [delta * rot, delta * rot * np.exp(1j * (A - B))]
    tau = [delta * rot * np.exp(1j * A),
           delta * rot * np.exp(1j * (A - B + D))]
    return sigma, tau


def _square_family(rhos, extent, topology, delta):
    m, n = extent
    sigma, tau = _period2_vectors(rhos, delta)
    period2 = not (abs(sigma[0] - sigma[1]) < 1e-15
                   and abs(tau[0] - tau[1]) < 1e-15)
    if topology == 'torus' and period2 and (m % 2 or n % 2):
        raise CriticalError("period-2 torus extents must be even")
    if m < 2 or n < 2:
        raise CriticalError("extent must be at least 2x2")

    def pos_p(i, j):
        return (_prefix(i + j, sigma[0], sigma[1])
                + _prefix(i - j, tau[0], tau[1]))

    def pos_d(i, j):
        return (_prefix(i + j + 1, sigma[0], sigma[1])
                + _prefix(i - j, tau[0], tau[1]))

    torus = topology == 'torus'

    def P(i, j):
        return ('p', i % m, j % n) if torus else ('p', i, j)

    def Dv(i, j):
        if torus:
            return ('d', i % m, j % n)
        if 0 <= i < m and 0 <= j < n:
            return ('d', i, j)
        return ('dx', i, j)          # dangling dual beyond the patch

    quads, qcorn, qid = [], [], {}
    hrange = [(i, j) for i in range(m + (0 if torus else 1))
              for j in range(n)]
    vrange = [(i, j) for i in range(m)
              for j in range(n + (0 if torus else 1))]
    for i, j in hrange:
        qid[('h', i, j)] = len(quads)
        quads.append((P(i, j), Dv(i - 1, j), P(i, j + 1), Dv(i, j)))
        qcorn.append((pos_p(i, j), pos_d(i - 1, j),
                      pos_p(i, j + 1), pos_d(i, j)))
    for i, j in vrange:
        qid[('v', i, j)] = len(quads)
        quads.append((P(i, j), Dv(i, j), P(i + 1, j), Dv(i, j - 1)))
        qcorn.append((pos_p(i, j), pos_d(i, j),
                      pos_p(i + 1, j), pos_d(i, j - 1)))

    qcorn = np.asarray(qcorn, dtype=complex)
    lp = np.abs(qcorn[:, 2] - qcorn[:, 0])
    ld = np.abs(qcorn[:, 3] - qcorn[:, 1])
    dm, pidx, didx = double_from_quads(quads, lengths=(lp, ld))

    pos = np.empty(dm.n_lv, dtype=complex)
    for (tag, i, j), k in pidx.items():
        pos[k] = pos_p(i, j)
    for (tag, i, j), k in didx.items():
        pos[dm.n_pv + k] = pos_d(i, j)

    periods = None
    if torus:
        s01, t01 = sigma[0] + sigma[1], tau[0] + tau[1]
        periods = ((n / 2) * (s01 - t01), (m / 2) * (s01 + t01))
        dm.cycles = {
            'a': [eref(qid[('h', 0, j)], 1) for j in range(n)],
            'b': [eref(qid[('v', i, 0)], 1) for i in range(m)],
            'a*': [eref(dm.n_edges + qid[('v', 0, j)], -1)
                   for j in range(n)],
            'b*': [eref(dm.n_edges + qid[('h', i, 0)], 1)
                   for i in range(m)],
        }
    emb = PlanarEmbedding(position=pos, periods=periods, quad_corners=qcorn)
    dm.embedding = emb
    return dm, emb


def _triangular_family(alpha, beta, extent, topology, scale):
    gammaa = math.pi - alpha - beta
    for ang in (alpha, beta, gammaa):
        if not 0 < ang < math.pi:
            raise CriticalError("triangle angles must lie in (0, pi)")
        if ang >= math.pi / 2 - 1e-12:
            raise CriticalError(
                "triangle angles must be acute for a critical embedding")
    m, n = extent
    if m < 2 or n < 2:
        raise CriticalError("extent must be at least 2x2")
    e1 = complex(scale)
    e2 = scale * math.sin(beta) / math.sin(alpha + beta) * np.exp(1j * alpha)
    # circumcenter of the triangle (0, e1, e2)
    ax, ay = e1.real, e1.imag
    bx, by = e2.real, e2.imag
    dd = 2 * (ax * by - ay * bx)
    ux = (by * (ax * ax + ay * ay) - ay * (bx * bx + by * by)) / dd
    uy = (ax * (bx * bx + by * by) - bx * (ax * ax + ay * ay)) / dd
    cc_up = complex(ux, uy)
    cc_dn = e1 + e2 - cc_up

    torus = topology == 'torus'

    def base(i, j):
        return j * e1 + i * e2

    def P(i, j):
        return ('p', i % m, j % n) if torus else ('p', i, j)

    def U(i, j):
        if torus:
            return ('u', i % m, j % n)
        if 0 <= i < m and 0 <= j < n:
            return ('u', i, j)
        return ('ux', i, j)

    def Dn(i, j):
        if torus:
            return ('w', i % m, j % n)
        if 0 <= i < m and 0 <= j < n:
            return ('w', i, j)
        return ('wx', i, j)

    quads, qcorn, qid = [], [], {}
    r1 = [(i, j) for i in range(m + (0 if torus else 1)) for j in range(n)]
    r2 = [(i, j) for i in range(m) for j in range(n + (0 if torus else 1))]
    r3 = [(i, j) for i in range(m) for j in range(n)]
    for i, j in r1:                  # edge P(i,j) -> P(i,j+1)
        qid[('e1', i, j)] = len(quads)
        quads.append((P(i, j), Dn(i - 1, j), P(i, j + 1), U(i, j)))
        qcorn.append((base(i, j), base(i - 1, j) + cc_dn,
                      base(i, j) + e1, base(i, j) + cc_up))
    for i, j in r2:                  # edge P(i,j) -> P(i+1,j)
        qid[('e2', i, j)] = len(quads)
        quads.append((P(i, j), U(i, j), P(i + 1, j), Dn(i, j - 1)))
        qcorn.append((base(i, j), base(i, j) + cc_up,
                      base(i, j) + e2, base(i, j - 1) + cc_dn))
    for i, j in r3:                  # edge P(i,j+1) -> P(i+1,j)
        qid[('e3', i, j)] = len(quads)
        quads.append((P(i, j + 1), Dn(i, j), P(i + 1, j), U(i, j)))
        qcorn.append((base(i, j) + e1, base(i, j) + cc_dn,
                      base(i, j) + e2, base(i, j) + cc_up))

    qcorn = np.asarray(qcorn, dtype=complex)
    lp = np.abs(qcorn[:, 2] - qcorn[:, 0])
    ld = np.abs(qcorn[:, 3] - qcorn[:, 1])
    dm, pidx, didx = double_from_quads(quads, lengths=(lp, ld))

    pos = np.empty(dm.n_lv, dtype=complex)
    for (tag, i, j), k in pidx.items():
        pos[k] = base(i, j)
    for (tag, i, j), k in didx.items():
        pos[dm.n_pv + k] = base(i, j) + (cc_up if tag in ('u', 'ux')
                                         else cc_dn)
    periods = None
    if torus:
        periods = (n * e1, m * e2)
        dm.cycles = {
            'a': [eref(qid[('e1', 0, j)], 1) for j in range(n)],
            'b': [eref(qid[('e2', i, 0)], 1) for i in range(m)],
        }
    emb = PlanarEmbedding(position=pos, periods=periods, quad_corners=qcorn)
    dm.embedding = emb
    return dm, emb


def generate_lattice(kind, params, extent, topology='planar', scale=1.0):
    """Generate a critical lattice of the given family.

    kind: 'square' (params (alpha,)), 'rectangular_period2'
    (params (rho1, rho2, rho3, rho4) with sum arctan rho_i = pi) or
    'triangular_hexagonal' (params (alpha, beta), acute triangles).
    extent: (m, n) face grid; topology 'planar' or 'torus'.  scale sets
    the primal lattice spacing (square families: spacing = scale at the
    square point; triangular: primal edge length scale).

    Returns (DoubleMap, PlanarEmbedding); on the torus the homology loops
    are stored in dm.cycles and the embedding carries the two periods.
    """
    if isinstance(extent, int):
        extent = (extent, extent)
    if topology not in ('planar', 'torus'):
        raise CriticalError("topology must be 'planar' or 'torus'")
    if kind == 'square':
        (alpha,) = params
        if not 0 < alpha < math.pi:
            raise CriticalError("alpha must lie in (0, pi)")
        t = math.tan(alpha / 2)
        delta = scale * math.sqrt(0.5)
        return _square_family((t, 1 / t, t, 1 / t), extent, topology, delta)
    if kind == 'rectangular_period2':
        rhos = tuple(params)
        if len(rhos) != 4:
            raise CriticalError("rectangular_period2 takes four rho values")
        delta = scale * math.sqrt(0.5)
        return _square_family(rhos, extent, topology, delta)
    if kind == 'triangular_hexagonal':
        alpha, beta = params
        return _triangular_family(alpha, beta, extent, topology, scale)
    raise CriticalError("unknown lattice kind %r" % (kind,))


# ---------------------------------------------------------------------------
# Voronoi / Delaunay


def voronoi_delaunay(points):
    """Delaunay/Voronoi dual pair of a finite planar point set.

    Builds the double whose primal complex is the Delaunay triangulation
    and whose dual vertices are the circumcenters (truncated by midpoint
    reflection on hull edges).  Cocircular degeneracies are resolved by a
    deterministic perturbation indexed by the input order, so the output
    is reproducible.  Diagonals of every diamond face are orthogonal by
    the mediatrix property.
    """
    from scipy.spatial import Delaunay

    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise CriticalError("need at least 3 planar points")
    span = pts.max(axis=0) - pts.min(axis=0)
    scl = max(span.max(), 1.0)
    d0 = pts - pts[0]
    if np.abs(d0[:, 0] * d0[1, 1] - d0[:, 1] * d0[1, 0]).max() == 0:
        raise CriticalError("points are collinear")
    # deterministic symbolic perturbation by input index
    k = np.arange(len(pts))
    ang = 2 * math.pi * 0.6180339887498949 * (k + 1)
    pert = 1e-9 * scl * ((k + 1) / len(pts))[:, None] * \
        np.stack([np.cos(ang), np.sin(ang)], axis=1)
    z = (pts + pert) @ np.array([1, 1j])

    tri = Delaunay(pts + pert)
    simplices = []
    for simp in tri.simplices:
        a, b, c = (z[v] for v in simp)
        area2 = ((b - a).conjugate() * (c - a)).imag
        if abs(area2) < 1e-7 * scl * scl:
            continue            # perturbation sliver of collinear points
        if area2 < 0:
            simp = simp[[0, 2, 1]]
        simplices.append(tuple(int(v) for v in simp))
    if not simplices:
        raise CriticalError("points are collinear")

    def circumcenter(a, b, c):
        d = 2 * ((b - a).conjugate() * (c - a)).imag
        if d == 0:
            raise CriticalError("degenerate (collinear) Delaunay triangle")
        u = ((abs(c - a) ** 2) * (b - a) - (abs(b - a) ** 2) * (c - a))
        return a + 1j * u / d

    # peel hull triangles whose circumcenter falls beyond their hull edge:
    # there the Voronoi ray leaves through the hull and no embedded
    # truncation of the dual edge can cross the primal edge
    while True:
        side = {}
        for t, (a, b, c) in enumerate(simplices):
            for u, v in ((a, b), (b, c), (c, a)):
                side[(u, v)] = t
        drop = set()
        for (u, v), t in side.items():
            if (v, u) in side:
                continue
            cc = circumcenter(*(z[w] for w in simplices[t]))
            if ((z[v] - z[u]).conjugate() * (cc - z[u])).imag <= 0:
                drop.add(t)
        if not drop:
            break
        simplices = [s for t, s in enumerate(simplices) if t not in drop]
        if not simplices:
            raise CriticalError(
                "no non-degenerate Delaunay core for these points")

    centers = [circumcenter(z[a], z[b], z[c]) for a, b, c in simplices]
    quads, qcorn = [], []
    dang = {}
    seen = set()
    for (u, v) in list(side):
        if (v, u) in seen:
            continue
        seen.add((u, v))
        tl = side[(u, v)]
        tr = side.get((v, u))
        yp, cyp = ('d', tl), centers[tl]
        if tr is not None:
            y, cy = ('d', tr), centers[tr]
        else:
            # hull edge: truncate the Voronoi ray at the reflection of the
            # circumcenter through the edge midpoint (still on the
            # mediatrix, on the opposite side of the edge)
            y = ('dx', (u, v))
            cy = z[u] + z[v] - centers[tl]
            dang[y] = cy
        quads.append((('p', u), y, ('p', v), yp))
        qcorn.append((z[u], cy, z[v], cyp))

    qcorn = np.asarray(qcorn, dtype=complex)
    lp = np.abs(qcorn[:, 2] - qcorn[:, 0])
    ld = np.abs(qcorn[:, 3] - qcorn[:, 1])
    if (ld == 0).any():
        raise CriticalError("coincident circumcenters; perturbation failed")
    dm, pidx, didx = double_from_quads(quads, lengths=(lp, ld))
    pos = np.empty(dm.n_lv, dtype=complex)
    for (tag, u), kk in pidx.items():
        pos[kk] = z[u]
    for lbl, kk in didx.items():
        pos[dm.n_pv + kk] = dang[lbl] if lbl in dang else centers[lbl[1]]
    emb = PlanarEmbedding(position=pos, quad_corners=qcorn)
    dm.embedding = emb
    return dm, emb


# ---------------------------------------------------------------------------
# refinement


def refine(dm, emb):
    """Split every diamond face into four half-scale quadrilaterals.

    The refined primal complex has the old Lambda vertices plus the quad
    centers as vertices (the old primal and dual complexes merge); the
    refined dual vertices are the old quad side midpoints.  Criticality
    is preserved with half the rhombus side.  Homology loops in dm.cycles
    are translated to the refined double.

    Returns (dm2, emb2, vmap) where vmap maps old Lambda vertex ids to
    refined primal vertex ids.
    """
    dia = dm.diamond
    corners = emb.corners(dm)
    quads2, qcorn2 = [], []
    new_qid = {}
    for q, cyc in enumerate(dia.quads):
        pos4 = corners[q]
        cen = pos4.sum() / 4
        for k in range(4):
            p_lbl = ('v', cyc[k])
            nxt, prv = cyc[(k + 1) % 4], cyc[(k - 1) % 4]
            s_in = dia.side_index[_canon_side(dm, cyc[k], nxt)]
            s_out = dia.side_index[_canon_side(dm, cyc[k], prv)]
            new_qid[(q, k)] = len(quads2)
            quads2.append((p_lbl, ('m', s_in), ('c', q), ('m', s_out)))
            qcorn2.append((pos4[k], (pos4[k] + pos4[(k + 1) % 4]) / 2,
                           cen, (pos4[k] + pos4[(k - 1) % 4]) / 2))
    qcorn2 = np.asarray(qcorn2, dtype=complex)
    lp = np.abs(qcorn2[:, 2] - qcorn2[:, 0])
    ld = np.abs(qcorn2[:, 3] - qcorn2[:, 1])
    dm2, pidx, didx = double_from_quads(quads2, lengths=(lp, ld))

    pos = np.empty(dm2.n_lv, dtype=complex)
    for lbl, kk in pidx.items():
        q, k = _first_new_corner(dm, lbl, new_qid)
        pos[kk] = qcorn2[new_qid[(q, k)]][0 if lbl[0] == 'v' else 2]
    for lbl, kk in didx.items():
        s = lbl[1]
        qq = _quad_of_side(dm, s)
        cyc = dia.quads[qq]
        u, v = dia.sides[s]
        pos[dm2.n_pv + kk] = (corners[qq][cyc.index(u)]
                              + corners[qq][cyc.index(v)]) / 2
    periods = emb.periods
    emb2 = PlanarEmbedding(position=pos, periods=periods, quad_corners=qcorn2)
    dm2.embedding = emb2

    vmap = {v: pidx[('v', v)] for v in range(dm.n_lv) if ('v', v) in pidx}

    # translate homology loops: old Lambda edge r (diag of quad e) becomes
    # the two refined primal edges tail -> center -> head
    if dm.cycles:
        nE = dm.n_edges
        cyc2 = {}
        for name, loop in dm.cycles.items():
            out = []
            for r in loop:
                e = eidx(r)
                q = e % nE
                x, y, xp, yp = dia.quads[q]
                tail_c, head_c = (x, xp) if e < nE else (y, yp)
                if esign(r) < 0:
                    tail_c, head_c = head_c, tail_c
                cyc = dia.quads[q]
                out.append(eref(new_qid[(q, cyc.index(tail_c))], 1))
                out.append(eref(new_qid[(q, cyc.index(head_c))], -1))
            cyc2[name] = out
        dm2.cycles = cyc2
    return dm2, emb2, vmap


def _canon_side(dm, u, v):
    """Side key in canonical (primal, dual) vertex order."""
    return (u, v) if u < dm.n_pv else (v, u)


def _quad_of_side(dm, s):
    dia = dm.diamond
    u, v = dia.sides[s]
    for q, cyc in enumerate(dia.quads):
        if u in cyc and v in cyc:
            return q
    raise CriticalError("side %d not on any quad" % s)


def _first_new_corner(dm, lbl, new_qid):
    dia = dm.diamond
    if lbl[0] == 'v':
        v = lbl[1]
        for q, cyc in enumerate(dia.quads):
            if v in cyc:
                return q, cyc.index(v)
    else:
        return lbl[1], 0
    raise CriticalError("isolated Lambda vertex %r" % (lbl,))


def embedding_dz(dm, emb):
    """The flat coordinate differential dZ as a diamond 1-form.

    Side values are taken from the locally developed quad corners, so the
    form is well defined on torus embeddings too.
    """
    from .forms import Cochain
    dia = dm.diamond
    corners = emb.corners(dm)
    vals = np.zeros(len(dia.sides), dtype=complex)
    for q, cyc in enumerate(dia.quads):
        pos4 = corners[q]
        for k in range(4):
            u, v = cyc[k], cyc[(k + 1) % 4]
            key = _canon_side(dm, u, v)
            s = dia.side_index[key]
            du = pos4[(k + 1) % 4] - pos4[k]
            vals[s] = du if key == (u, v) else -du
    return Cochain('D', 1, vals)


# ---------------------------------------------------------------------------
# convergence harness


def min_corner_angle(dm, emb):
    corners = emb.corners(dm)
    best = math.inf
    for q in range(dm.diamond.n_faces):
        pos4 = corners[q]
        for k in range(4):
            a = _corner_angle(pos4[k], pos4[(k + 1) % 4], pos4[(k - 1) % 4])
            best = min(best, a, 2 * math.pi - a)
    return best


def convergence_test(dm, emb, build, target, levels=3, eta=1e-3):
    """Sup-norm errors of a discrete function family under refinement.

    build(dm, emb) returns a vertex cochain on Lambda; target(z) is the
    continuum comparison function evaluated at the vertex positions.  The
    domain is refined levels-1 times; faces with a corner angle below eta
    are rejected, matching the hypothesis of the convergence theorem.
    Returns the list of sup-norm errors, one per level.
    """
    if levels < 1:
        raise CriticalError("need at least one level")
    errors = []
    for lev in range(levels):
        if min_corner_angle(dm, emb) < eta:
            raise CriticalError("degenerate face: corner angle below eta")
        f = build(dm, emb)
        zs = emb.position
        err = float(np.max(np.abs(np.asarray(f.values)
                                  - target(np.asarray(zs)))))
        errors.append(err)
        if lev + 1 < levels:
            dm, emb, _ = refine(dm, emb)
    return errors


# ---------------------------------------------------------------------------
# Ising couplings


def _rho_lambda(dm):
    return np.concatenate([dm.rho, 1.0 / dm.rho])


def ising_couplings(rho):
    """Interaction constants K = arcsinh(rho)/2 per Lambda edge.

    Accepts a DoubleMap (couplings on both blocks, dual from 1/rho) or an
    array of positive conductances.
    """
    if hasattr(rho, 'rho'):
        rho = _rho_lambda(rho)
    rho = np.asarray(rho, dtype=float)
    if (rho <= 0).any():
        raise CriticalError("rho must be positive")
    return IsingCouplings(K=0.5 * np.arcsinh(rho))


def couplings_to_rho(K):
    """Inverse of ising_couplings: rho = sinh(2K)."""
    K = K.K if isinstance(K, IsingCouplings) else np.asarray(K, dtype=float)
    if (np.asarray(K) <= 0).any():
        raise CriticalError("couplings must be positive")
    return np.sinh(2.0 * np.asarray(K, dtype=float))


@dataclass
class IsingReport:
    critical: bool
    residual: dict          # interior Lambda vertex -> sum arctan rho - pi
    max_residual: float
    special: list           # (kind, vertex, residual) closed-form checks


def ising_criticality(dm, K=None, tol=1e-9):
    """Flat criticality report for Ising couplings on the double.

    The generalized flat critical condition at a vertex is
    sum_{e at v} arctan rho(e) = pi (conic angle 2*pi); rho is taken from
    the double or from the couplings via rho = sinh 2K.  Closed-form
    specializations are evaluated where the local pattern matches: at
    degree-4 vertices carrying two alternating couplings the product
    sinh(2K_h) sinh(2K_v) - 1, at degree-6 vertices with three couplings
    the triangular identity s1 s2 s3 - (s1 + s2 + s3).  The verdict and
    residuals are invariant under the duality rho <-> 1/rho exchanging
    the two complexes, since both vertex classes are checked.
    """
    if K is None:
        rho_l = _rho_lambda(dm)
    else:
        KK = K.K if isinstance(K, IsingCouplings) else np.asarray(K)
        if len(KK) == dm.n_edges:
            KK = np.concatenate([KK, KK])
        rho_l = np.sinh(2.0 * np.asarray(KK, dtype=float))
    residual, special = {}, []
    for v in _interior_vertices(dm):
        rhos = [rho_l[eidx(r)] for r in _incident_refs(dm, v)]
        res = sum(math.atan(r) for r in rhos) - math.pi
        residual[v] = res
        vals = sorted(set(round(float(x), 12) for x in rhos))
        if len(rhos) == 4 and len(vals) <= 2:
            special.append(('square', v, vals[0] * vals[-1] - 1.0))
        elif len(rhos) == 3:
            special.append(('triangular', v,
                            rhos[0] * rhos[1] * rhos[2] - sum(rhos)))
    mx = max((abs(r) for r in residual.values()), default=0.0)
    return IsingReport(critical=mx <= tol, residual=residual,
                       max_residual=mx, special=special)


# ---------------------------------------------------------------------------
# quad boundary path bound


def boundary_path_ratio(corners4, t1, t2):
    """Straight-line over along-boundary distance for two boundary points.

    corners4: the four corner positions of a quad; t1, t2 in [0, 4)
    parametrize points along the boundary (integer part = side index,
    fraction = position along the side).  For quads with orthogonal
    diagonals and corner angles at least eta the ratio is bounded below
    by sin(eta)/4.
    """
    corners4 = list(corners4)

    def point(t):
        k = int(t) % 4
        f = t - int(t)
        return corners4[k] * (1 - f) + corners4[(k + 1) % 4] * f

    lens = [abs(corners4[(k + 1) % 4] - corners4[k]) for k in range(4)]

    def arc(t):
        k = int(t) % 4
        f = t - int(t)
        return sum(lens[:k]) + lens[k] * f

    a, b = sorted((arc(t1 % 4), arc(t2 % 4)))
    total = sum(lens)
    ell = min(b - a, total - (b - a))
    if ell == 0:
        return 1.0
    return abs(point(t1) - point(t2)) / ell
