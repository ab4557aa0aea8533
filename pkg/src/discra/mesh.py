"""Cellular decompositions, their duals, the double, the diamond and the triple graph.

Oriented edges are referenced by signed integers: +(e+1) means edge e in its
canonical (tail -> head) orientation, -(e+1) the reverse.  Faces are cyclic
lists of such references.  All structures are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def eref(e, sign=1):
    return (e + 1) * (1 if sign >= 0 else -1)


def eidx(ref):
    return abs(ref) - 1


def esign(ref):
    return 1 if ref > 0 else -1


class MeshError(ValueError):
    pass


class CellComplex:
    """An oriented 2-complex: vertices, oriented edges, cyclic faces."""

    def __init__(self, n_vertices, edges, faces, boundary_vertices=(),
                 boundary_edges=()):
        self.n_vertices = n_vertices
        self.edges = [tuple(e) for e in edges]          # (tail, head)
        self.faces = [tuple(f) for f in faces]          # signed edge refs
        self.boundary_vertices = frozenset(boundary_vertices)
        self.boundary_edges = frozenset(boundary_edges)
        self._check_ids()
        # face_of[ref]: face index whose cycle contains the oriented edge ref
        self.face_of = {}
        self.next_in_face = {}
        self.prev_in_face = {}
        for fi, cycle in enumerate(self.faces):
            k = len(cycle)
            for i, r in enumerate(cycle):
                if r in self.face_of:
                    raise MeshError(
                        "oriented edge %d appears in two faces" % r)
                self.face_of[r] = fi
                self.next_in_face[r] = cycle[(i + 1) % k]
                self.prev_in_face[r] = cycle[(i - 1) % k]

    # -- basic accessors -------------------------------------------------

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    def tail(self, ref):
        e = self.edges[eidx(ref)]
        return e[0] if ref > 0 else e[1]

    def head(self, ref):
        e = self.edges[eidx(ref)]
        return e[1] if ref > 0 else e[0]

    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def _check_ids(self):
        for t, h in self.edges:
            if not (0 <= t < self.n_vertices and 0 <= h < self.n_vertices):
                raise MeshError("edge endpoint out of range")
        for f in self.faces:
            for r in f:
                if not (0 <= eidx(r) < len(self.edges)):
                    raise MeshError("face references missing edge %d" % r)

    # -- combinatorial structure -----------------------------------------

    def face_cycle_violations(self):
        """Faces whose boundary is not a closed vertex chain (dd != 0)."""
        bad = []
        for fi, cycle in enumerate(self.faces):
            for i, r in enumerate(cycle):
                nxt = cycle[(i + 1) % len(cycle)]
                if self.head(r) != self.tail(nxt):
                    bad.append(fi)
                    break
        return bad

    def edge_face_count(self):
        """For each edge, in how many face boundaries it appears."""
        cnt = [0] * self.n_edges
        for cycle in self.faces:
            for r in cycle:
                cnt[eidx(r)] += 1
        return cnt

    def orientation_violations(self):
        """Interior edges must be used once forward and once backward."""
        bad = []
        for e in range(self.n_edges):
            pos = eref(e) in self.face_of
            neg = -eref(e) in self.face_of
            if pos and neg:
                continue
            if e not in self.boundary_edges and not (pos or neg):
                bad.append(e)
        return bad

    def rotation_next(self, ref):
        """Next outgoing oriented edge counterclockwise around tail(ref).

        Derived from the face data: with faces counterclockwise, the ccw
        successor of an outgoing half-edge h is reverse(prev_in_face(h)).
        Returns None at a boundary gap.
        """
        p = self.prev_in_face.get(ref)
        return None if p is None else -p

    def vertex_star(self, v, some_out=None):
        """Outgoing oriented edges around v in ccw order, or None if the
        rotation does not close (boundary vertex)."""
        if some_out is None:
            some_out = next((eref(e) for e, (t, h) in enumerate(self.edges)
                             if t == v), None)
            if some_out is None:
                some_out = next((-eref(e) for e, (t, h) in enumerate(self.edges)
                                 if h == v), None)
            if some_out is None:
                return None
        out = [some_out]
        deg = sum((t == v) + (h == v) for t, h in self.edges)
        while True:
            n = self.rotation_next(out[-1])
            if n is None:
                return None
            if n == out[0]:
                return out
            out.append(n)
            if len(out) > deg:
                raise MeshError("rotation around vertex %d does not close" % v)

    def is_closed(self):
        cnt = self.edge_face_count()
        return all(c == 2 for c in cnt)

    def connected_components(self):
        parent = list(range(self.n_vertices))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for t, h in self.edges:
            ra, rb = find(t), find(h)
            if ra != rb:
                parent[ra] = rb
        return len({find(v) for v in range(self.n_vertices)})


def build_dual(gamma):
    """Poincare dual of gamma, with (e, e*) direct at their crossing.

    Dual vertex i = face i of gamma; a dangling vertex is appended for every
    boundary edge (half-edge truncation).  Dual edge e = (right face, left
    face) of primal edge e, so ids line up with primal edge ids.  Dual faces
    exist around interior primal vertices only.
    """
    nfv = gamma.n_faces
    dangling = {}          # primal edge -> dangling dual vertex id
    dual_edges = []
    d_boundary_vertices = set()
    d_boundary_edges = set()
    for e in range(gamma.n_edges):
        left = gamma.face_of.get(eref(e))
        right = gamma.face_of.get(-eref(e))
        if left is None and right is None:
            raise MeshError("edge %d belongs to no face; dual undefined" % e)
        if left is None or right is None:
            dv = nfv + len(dangling)
            dangling[e] = dv
            d_boundary_vertices.add(dv)
            d_boundary_edges.add(e)
            if left is None:
                left = dv
            else:
                right = dv
        dual_edges.append((right, left))

    dual_faces = []
    dual_face_center = []           # primal vertex at the middle of each dual face
    for v in range(gamma.n_vertices):
        if v in gamma.boundary_vertices:
            continue
        star = gamma.vertex_star(v)
        if star is None:
            continue
        # boundary of v* is the ccw cycle of duals of outgoing half-edges,
        # each oriented by the (e, e*) direct rule: same sign as the half-edge
        cycle = [eref(eidx(h), esign(h)) for h in star]
        dual_faces.append(tuple(cycle))
        dual_face_center.append(v)

    dual = CellComplex(nfv + len(dangling), dual_edges, dual_faces,
                       boundary_vertices=d_boundary_vertices,
                       boundary_edges=d_boundary_edges)
    dual.face_center = dual_face_center
    return dual


@dataclass
class Diamond:
    """Quad complex with one four-sided face per dual edge pair.

    quads[q] = (x, y, xp, yp) as Lambda-vertex ids, with q equal to the
    primal edge id whose diagonal is (x, xp); (y, yp) is the dual diagonal.
    sides: list of (u, v) Lambda-vertex pairs, canonically primal -> dual.
    quad_sides[q]: 4 signed side refs tracing x -> y -> xp -> yp.
    """
    quads: list
    sides: list
    quad_sides: list
    side_index: dict
    even_loops: bool = True

    @property
    def n_faces(self):
        return len(self.quads)

    @property
    def n_edges(self):
        return len(self.sides)


class DoubleMap:
    """The double Lambda = Gamma u Gamma* with the conformal structure rho.

    Dual edge ids equal primal edge ids; the dual edge is oriented so that
    (e, e*) is direct.  Lambda-cell ids: vertices are primal then dual
    (offset n_primal_vertices); edges are primal then dual (offset n_edges);
    faces are primal faces then dual faces.
    """

    def __init__(self, gamma, gamma_star, rho, lengths=None):
        import numpy as np
        self.gamma = gamma
        self.gamma_star = gamma_star
        if gamma.n_edges != gamma_star.n_edges:
            raise MeshError("primal/dual edge counts differ")
        rho = np.asarray(rho, dtype=float)
        if rho.shape != (gamma.n_edges,):
            raise MeshError("rho must give one value per primal edge")
        if not (rho > 0).all():
            raise MeshError("rho must be strictly positive")
        self.rho = rho
        self.lengths = None
        if lengths is not None:
            lp = np.asarray(lengths[0], dtype=float)
            ld = np.asarray(lengths[1], dtype=float)
            if not np.allclose(ld / lp, rho, rtol=1e-9):
                raise MeshError("lengths inconsistent with rho")
            self.lengths = (lp, ld)
        self._diamond = None
        self._triple = None
        self.embedding = None
        self.cycles = {}        # optional named homology loops
        # face <-> surrounded-vertex maps, needed by the Hodge star on
        # functions/2-forms: primal face F sits around dual vertex F*.
        self.pf_center = list(getattr(gamma, 'face_center',
                                      range(gamma.n_faces)))
        self.df_center = list(getattr(gamma_star, 'face_center', []))
        if len(self.df_center) != gamma_star.n_faces:
            raise MeshError("dual complex lacks face centers")
        self.pv_face = {v: j for j, v in enumerate(self.df_center)}
        self.dv_face = {v: j for j, v in enumerate(self.pf_center)}

    # -- Lambda indexing ---------------------------------------------------

    @property
    def n_pv(self):
        return self.gamma.n_vertices

    @property
    def n_dv(self):
        return self.gamma_star.n_vertices

    @property
    def n_lv(self):
        return self.n_pv + self.n_dv

    @property
    def n_edges(self):
        return self.gamma.n_edges

    @property
    def n_le(self):
        return 2 * self.n_edges

    @property
    def n_pf(self):
        return self.gamma.n_faces

    @property
    def n_df(self):
        return self.gamma_star.n_faces

    @property
    def n_lf(self):
        return self.n_pf + self.n_df

    def lam_rho(self):
        """rho per Lambda edge (primal block then dual block)."""
        import numpy as np
        return np.concatenate([self.rho, 1.0 / self.rho])

    def dual_vertex(self, dv):
        """Lambda id of dual vertex dv."""
        return self.n_pv + dv

    def is_dual_vertex(self, lv):
        return lv >= self.n_pv

    def epsilon(self):
        import numpy as np
        eps = np.ones(self.n_lv)
        eps[self.n_pv:] = -1.0
        return eps

    # -- derived complexes ---------------------------------------------------

    @property
    def diamond(self):
        if self._diamond is None:
            self._diamond = self._build_diamond()
        return self._diamond

    def _build_diamond(self):
        g, gs = self.gamma, self.gamma_star
        quads = []
        sides = []
        side_index = {}
        quad_sides = []
        for e in range(self.n_edges):
            x, xp = g.edges[e]
            y, yp = gs.edges[e]
            y += self.n_pv
            yp += self.n_pv
            quads.append((x, y, xp, yp))
            refs = []
            # trace x -> y -> xp -> yp; sides stored primal -> dual
            for (u, v, fwd) in ((x, y, True), (y, xp, False),
                                (xp, yp, True), (yp, x, False)):
                key = (u, v) if fwd else (v, u)
                if key not in side_index:
                    side_index[key] = len(sides)
                    sides.append(key)
                refs.append(eref(side_index[key], 1 if fwd else -1))
            quad_sides.append(tuple(refs))
        even = True      # sides always join a primal and a dual vertex here
        return Diamond(quads, sides, quad_sides, side_index, even)

    @property
    def triple(self):
        if self._triple is None:
            self._triple = build_triple(self)
        return self._triple

    def validate(self):
        return validate(self)


def build_double(gamma, rho, lengths=None, gamma_star=None):
    """Assemble the DoubleMap, constructing the dual if not supplied."""
    if gamma_star is None:
        gamma_star = build_dual(gamma)
        if not hasattr(gamma, 'face_center'):
            # dual vertices are exactly the primal faces (plus dangling ends)
            gamma.face_center = list(range(gamma.n_faces))
    return DoubleMap(gamma, gamma_star, rho, lengths=lengths)


def double_from_quads(quads, rho=None, lengths=None):
    """Build a DoubleMap from a list of diamond faces.

    quads: list of 4-tuples (x, y, xp, yp) of hashable vertex labels, in ccw
    order, with x, xp in the primal class and y, yp in the dual class.  The
    primal edge of quad q is its diagonal (x -> xp), the dual edge (y -> yp);
    ids line up by construction and (e, e*) is direct because the cycle is ccw.

    Returns (dm, primal_label_index, dual_label_index).
    """
    pidx, didx = {}, {}
    for x, y, xp, yp in quads:
        for lbl in (x, xp):
            if lbl in didx:
                raise MeshError("label %r used in both classes" % (lbl,))
            pidx.setdefault(lbl, len(pidx))
        for lbl in (y, yp):
            if lbl in pidx:
                raise MeshError("label %r used in both classes" % (lbl,))
            didx.setdefault(lbl, len(didx))

    p_edges = [(pidx[x], pidx[xp]) for x, y, xp, yp in quads]
    d_edges = [(didx[y], didx[yp]) for x, y, xp, yp in quads]

    # sides: unordered (label, label) -> quads containing it
    side_quads = {}
    corner_sides = {}   # (label, quad) -> (entry side, exit side) for the walk
    for q, cyc in enumerate(quads):
        for i, c in enumerate(cyc):
            nxt, prv = cyc[(i + 1) % 4], cyc[(i - 1) % 4]
            s_in = frozenset((c, nxt))
            s_out = frozenset((c, prv))
            side_quads.setdefault(s_in, set()).add(q)
            side_quads.setdefault(s_out, set()).add(q)
            corner_sides[(c, q)] = (s_in, s_out)

    quad_at = {}   # label -> any quad containing it as a corner
    for q, cyc in enumerate(quads):
        for c in cyc:
            quad_at.setdefault(c, q)

    def walk(label):
        """Quads around a corner in ccw order, or None at a boundary."""
        q0 = quad_at[label]
        order = [q0]
        s0 = corner_sides[(label, q0)][0]
        cur_q, cur_exit = q0, corner_sides[(label, q0)][1]
        while True:
            others = side_quads[cur_exit] - {cur_q}
            if not others:
                return None
            cur_q = next(iter(others))
            if corner_sides[(label, cur_q)][0] != cur_exit:
                raise MeshError("inconsistent quad orientation at %r" % (label,))
            if cur_q == q0:
                return order
            order.append(cur_q)
            cur_exit = corner_sides[(label, cur_q)][1]
            if len(order) > len(quads):
                raise MeshError("corner walk did not close at %r" % (label,))

    fans = {lbl: walk(lbl) for lbl in quad_at}

    p_faces, p_face_center = [], []
    for lbl, j in didx.items():
        fan = fans[lbl]
        if fan is None:
            continue
        refs = []
        for q in fan:
            x, y, xp, yp = quads[q]
            refs.append(eref(q, 1 if lbl == yp else -1))
        p_faces.append(tuple(refs))
        p_face_center.append(j)

    d_faces, d_face_center = [], []
    for lbl, i in pidx.items():
        fan = fans[lbl]
        if fan is None:
            continue
        refs = []
        for q in fan:
            x, y, xp, yp = quads[q]
            refs.append(eref(q, 1 if lbl == x else -1))
        d_faces.append(tuple(refs))
        d_face_center.append(i)

    p_bnd_v = {pidx[l] for l in pidx if fans[l] is None}
    d_bnd_v = {didx[l] for l in didx if fans[l] is None}
    p_bnd_e = {q for q, (x, y, xp, yp) in enumerate(quads)
               if fans[y] is None or fans[yp] is None}
    d_bnd_e = {q for q, (x, y, xp, yp) in enumerate(quads)
               if fans[x] is None or fans[xp] is None}

    gamma = CellComplex(len(pidx), p_edges, p_faces,
                        boundary_vertices=p_bnd_v, boundary_edges=p_bnd_e)
    gstar = CellComplex(len(didx), d_edges, d_faces,
                        boundary_vertices=d_bnd_v, boundary_edges=d_bnd_e)
    gamma.face_center = p_face_center      # dual vertex each primal face surrounds
    gstar.face_center = d_face_center      # primal vertex each dual face surrounds

    if rho is None:
        if lengths is None:
            raise MeshError("need rho or lengths")
        rho = [lengths[1][e] / lengths[0][e] for e in range(len(quads))]
    dm = DoubleMap(gamma, gstar, rho, lengths=lengths)
    return dm, pidx, didx


@dataclass
class TripleGraph:
    """Vertices are unoriented diamond edges; two vertices are adjacent when
    they share a Lambda-vertex and bound a common diamond face.

    edges[i] = (u, v): an adjacency, oriented so that traversing u -> v
    crosses its Lambda-edge from tail to head side.
    crossing[lambda_edge_id] = list of 2 triple-edge ids crossing it, both
    oriented with the Lambda edge.
    quad_cycle[q]: the 4 triple-vertex ids of quad q in ccw order
    (sides {x,y}, {y,xp}, {xp,yp}, {yp,x}).
    faces: list of (family, cycle of triple-vertex ids); families are
    'quad', 'primal' (around Gamma vertices), 'dual' (around Gamma* vertices).
    """
    n_vertices: int
    edges: list
    edge_index: dict
    crossing: list
    quad_cycle: list
    faces: list
    edge_cross_lambda: list    # per triple edge: the Lambda edge id it crosses

    def face_edge_lists(self):
        """Faces as lists of unoriented triple-edge ids."""
        out = []
        for fam, cyc in self.faces:
            ids = []
            for i in range(len(cyc)):
                a, b = cyc[i], cyc[(i + 1) % len(cyc)]
                key = (a, b) if (a, b) in self.edge_index else (b, a)
                ids.append(self.edge_index[key])
            out.append(ids)
        return out


def build_triple(dm):
    dia = dm.diamond
    nE = dm.n_edges
    edges = []
    edge_index = {}
    edge_cross = []
    crossing = [[] for _ in range(2 * nE)]

    def add_edge(u, v, lam):
        key = (u, v)
        if key in edge_index:
            return edge_index[key]
        i = len(edges)
        edge_index[key] = i
        edges.append(key)
        edge_cross.append(lam)
        crossing[lam].append(i)
        return i

    quad_cycle = []
    for q, (x, y, xp, yp) in enumerate(dia.quads):
        s_xy = dia.side_index[(x, y)]
        s_yxp = dia.side_index[(xp, y)]
        s_xpyp = dia.side_index[(xp, yp)]
        s_ypx = dia.side_index[(x, yp)]
        quad_cycle.append((s_xy, s_yxp, s_xpyp, s_ypx))
        # the two crossings of the primal diagonal q = (x -> xp): the side
        # pairs sharing an endpoint of the dual diagonal
        add_edge(s_xy, s_yxp, q)          # through y
        add_edge(s_ypx, s_xpyp, q)        # through yp
        # crossings of the dual diagonal (y -> yp): pairs sharing x or xp
        add_edge(s_xy, s_ypx, nE + q)     # through x
        add_edge(s_yxp, s_xpyp, nE + q)   # through xp

    faces = [('quad', list(c)) for c in quad_cycle]

    # faces around Lambda vertices: walk quads sharing diamond sides.
    # At corner c of a ccw quad (..., prev, c, next, ...) the ccw successor
    # side around c inside the quad is {c, next} -> {c, prev}.
    at_corner = {}   # (vertex, side id) -> (quad, successor side id)
    for q, (x, y, xp, yp) in enumerate(dia.quads):
        cyc = (x, y, xp, yp)
        for i, c in enumerate(cyc):
            nxt, prv = cyc[(i + 1) % 4], cyc[(i - 1) % 4]
            s_in = _side_id(dia, c, nxt)
            s_out = _side_id(dia, c, prv)
            at_corner[(c, s_in)] = (q, s_out)

    seen = set()
    for (c, s), _ in list(at_corner.items()):
        if (c, s) in seen:
            continue
        cycle = []
        cur = s
        closed = True
        while True:
            nxt = at_corner.get((c, cur))
            if nxt is None:
                closed = False
                break
            seen.add((c, cur))
            cycle.append(cur)
            cur = nxt[1]
            if cur == s:
                break
            if len(cycle) > 4 * dia.n_edges:
                raise MeshError("triple-face walk did not close")
        if closed and len(cycle) >= 2:
            fam = 'primal' if not dm.is_dual_vertex(c) else 'dual'
            faces.append((fam, cycle))

    return TripleGraph(dia.n_edges, edges, edge_index, crossing,
                       quad_cycle, faces, edge_cross)


def _side_id(dia, a, b):
    key = (a, b) if (a, b) in dia.side_index else (b, a)
    return dia.side_index[key]


@dataclass
class TopologyReport:
    euler_characteristic: int
    genus: int | None
    boundary_components: int
    closed: bool
    connected: bool
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def validate(dm):
    """Collect invariant checks on the double; never raises."""
    violations = []
    g, gs = dm.gamma, dm.gamma_star
    for name, cx in (("primal", g), ("dual", gs)):
        bad = cx.face_cycle_violations()
        if bad:
            violations.append("dd != 0 on %s faces %s" % (name, bad))
        for e, c in enumerate(cx.edge_face_count()):
            if c > 2:
                violations.append("%s edge %d in %d faces" % (name, e, c))
    # bidual check: dual edge of the dual edge must be the reversed primal.
    # Bidual vertices are faces of the dual; map them back through the face
    # centers recorded at construction.
    try:
        bidual = build_dual(gs)
        centers = getattr(gs, 'face_center', None)
        if centers is not None:
            for e in range(g.n_edges):
                bt, bh = bidual.edges[e]
                if bt >= gs.n_faces or bh >= gs.n_faces:
                    continue          # dangling end, boundary edge
                if (centers[bt], centers[bh]) != (g.edges[e][1], g.edges[e][0]):
                    violations.append("(e*)* != -e at edge %d" % e)
                    break
    except MeshError as exc:
        if g.is_closed() and gs.is_closed():
            violations.append("bidual construction failed: %s" % exc)

    import numpy as np
    if not np.allclose(dm.rho * (1.0 / dm.rho), 1.0):
        violations.append("rho(e) rho(e*) != 1")

    closed = g.is_closed() and gs.is_closed()
    chi = g.euler_characteristic()
    genus = (2 - chi) // 2 if closed else None
    if closed and (2 - chi) % 2:
        violations.append("odd Euler defect on a closed surface")

    # boundary components: chain boundary primal edges
    bnd = [e for e, c in enumerate(g.edge_face_count()) if c < 2]
    ncomp = 0
    if bnd:
        adj = {}
        for e in bnd:
            t, h = g.edges[e]
            adj.setdefault(t, set()).add(h)
            adj.setdefault(h, set()).add(t)
        todo = set(adj)
        while todo:
            ncomp += 1
            stack = [next(iter(todo))]
            while stack:
                v = stack.pop()
                if v in todo:
                    todo.remove(v)
                    stack.extend(adj[v] & todo)

    connected = g.connected_components() == 1
    return TopologyReport(chi, genus, ncomp, closed, connected, violations)
