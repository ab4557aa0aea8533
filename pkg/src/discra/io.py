"""JSON mesh interchange and SVG rendering.

The mesh file format ("discra-mesh", version 1) serializes a double map
with its optional embedding:

    {
      "format": "discra-mesh",
      "version": 1,
      "topology": "planar" | "torus",
      "primal":  {"n_vertices": int, "edges": [[tail, head], ...],
                  "faces": [[signed edge ref, ...], ...],
                  "boundary_vertices": [...], "boundary_edges": [...],
                  "face_centers": [...]},
      "dual":    {... same shape ...},
      "edges":   [{"rho": float}, ...]    # one record per primal edge
      "embedding": {"positions": [[x, y], ...],       # Lambda order
                    "periods": [[x, y], [x, y]] | null,
                    "quad_corners": [[[x,y] * 4], ...] | null,
                    "conic": {"vertex id": angle}} | null,
      "cycles":  {"name": [signed edge ref, ...]}     # homology loops
    }

Signed edge refs are +-(e + 1), positive along the stored orientation.
Round trips are lossless: floats are written with repr (17 significant
digits), so parse(write(dm)) reproduces every value bit for bit.
"""

import json

import numpy as np

from .mesh import CellComplex, DoubleMap, MeshError, eidx
from .critical import PlanarEmbedding

FORMAT = "discra-mesh"
VERSION = 1


class CodecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON codec


def _complex_to_obj(cx):
    return {
        "n_vertices": cx.n_vertices,
        "edges": [list(e) for e in cx.edges],
        "faces": [list(f) for f in cx.faces],
        "boundary_vertices": sorted(cx.boundary_vertices),
        "boundary_edges": sorted(cx.boundary_edges),
        "face_centers": list(getattr(cx, "face_center",
                                     range(cx.n_faces))),
    }


def _complex_from_obj(obj, name):
    for key in ("n_vertices", "edges", "faces"):
        if key not in obj:
            raise CodecError("%s complex: missing field %r" % (name, key))
    try:
        cx = CellComplex(int(obj["n_vertices"]),
                         [tuple(e) for e in obj["edges"]],
                         [tuple(f) for f in obj["faces"]],
                         obj.get("boundary_vertices", ()),
                         obj.get("boundary_edges", ()))
    except MeshError as exc:
        raise CodecError("%s complex: %s" % (name, exc))
    centers = obj.get("face_centers")
    if centers is not None:
        if len(centers) != cx.n_faces:
            raise CodecError("%s complex: face_centers length %d != "
                             "face count %d" % (name, len(centers),
                                                cx.n_faces))
        cx.face_center = [int(c) for c in centers]
    return cx


def _xy(z):
    return [float(np.real(z)), float(np.imag(z))]


def mesh_to_obj(dm, emb=None):
    """Serialize a double map (and embedding, if available) to a plain
    JSON-compatible object."""
    if emb is None:
        emb = dm.embedding
    topology = "torus" if (emb is not None and emb.periods is not None) \
        else "planar"
    obj = {
        "format": FORMAT,
        "version": VERSION,
        "topology": topology,
        "primal": _complex_to_obj(dm.gamma),
        "dual": _complex_to_obj(dm.gamma_star),
        "edges": [{"rho": float(r)} for r in dm.rho],
        "cycles": {str(k): [int(r) for r in v]
                   for k, v in dm.cycles.items()},
        "embedding": None,
    }
    if emb is not None:
        eobj = {
            "positions": [_xy(z) for z in emb.position],
            "periods": None if emb.periods is None
            else [_xy(p) for p in emb.periods],
            "quad_corners": None if emb.quad_corners is None
            else [[_xy(z) for z in row] for row in emb.quad_corners],
            "conic": {str(v): float(a) for v, a in emb.conic.items()},
        }
        obj["embedding"] = eobj
    return obj


def mesh_from_obj(obj):
    """Parse the JSON object back into (DoubleMap, PlanarEmbedding|None)."""
    if not isinstance(obj, dict):
        raise CodecError("mesh document must be a JSON object")
    if obj.get("format") != FORMAT:
        raise CodecError("not a %s document" % FORMAT)
    if obj.get("version") != VERSION:
        raise CodecError("unsupported version %r" % obj.get("version"))
    topology = obj.get("topology", "planar")
    if topology not in ("planar", "torus"):
        raise CodecError("topology must be 'planar' or 'torus'")
    gamma = _complex_from_obj(obj.get("primal", {}), "primal")
    gstar = _complex_from_obj(obj.get("dual", {}), "dual")
    recs = obj.get("edges")
    if recs is None or len(recs) != gamma.n_edges:
        raise CodecError("edges array must carry one record per primal "
                         "edge (%d)" % gamma.n_edges)
    rho = []
    for i, rec in enumerate(recs):
        if not isinstance(rec, dict) or "rho" not in rec:
            raise CodecError("edge %d: missing \"rho\"" % i)
        r = float(rec["rho"])
        if not r > 0:
            raise CodecError("edge %d: rho must be positive" % i)
        rho.append(r)
    try:
        dm = DoubleMap(gamma, gstar, rho)
    except MeshError as exc:
        raise CodecError(str(exc))
    for name, refs in obj.get("cycles", {}).items():
        for r in refs:
            if not (1 <= eidx(r) + 1 <= 2 * dm.n_edges):
                raise CodecError("cycle %r: dangling edge ref %d"
                                 % (name, r))
        dm.cycles[name] = [int(r) for r in refs]

    emb = None
    eobj = obj.get("embedding")
    if eobj is not None:
        pos = eobj.get("positions")
        if pos is None or len(pos) != dm.n_lv:
            raise CodecError("embedding positions must cover all %d Lambda "
                             "vertices" % dm.n_lv)
        position = np.array([complex(x, y) for x, y in pos])
        periods = eobj.get("periods")
        if periods is not None:
            periods = tuple(complex(x, y) for x, y in periods)
        qc = eobj.get("quad_corners")
        if qc is not None:
            if len(qc) != dm.n_edges:
                raise CodecError("quad_corners must cover all %d diamond "
                                 "faces" % dm.n_edges)
            qc = np.array([[complex(x, y) for x, y in row] for row in qc])
        conic = {int(v): float(a)
                 for v, a in eobj.get("conic", {}).items()}
        emb = PlanarEmbedding(position=position, periods=periods,
                              quad_corners=qc, conic=conic)
    if topology == "torus" and (emb is None or emb.periods is None):
        raise CodecError("topology torus requires periods")
    if emb is not None:
        dm.embedding = emb
    return dm, emb


def write_mesh(path, dm, emb=None):
    with open(path, "w") as fh:
        json.dump(mesh_to_obj(dm, emb), fh, indent=1)
        fh.write("\n")


def read_mesh(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CodecError("%s: invalid JSON at line %d column %d"
                         % (path, exc.lineno, exc.colno))
    return mesh_from_obj(obj)


# ---------------------------------------------------------------------------
# spinor serialization


def spinor_to_obj(sp):
    return {"format": "discra-spinor", "version": VERSION,
            "values": [[int(xi), int(sheet), re, im]
                       for xi, sheet, re, im in sp.serialize()],
            "tau": [int(t) for t in sp.tau]}


# ---------------------------------------------------------------------------
# SVG rendering


def _fmt(x):
    return "%.6f" % x


def render_svg(dm, emb, residuals=None, spinor=None, size=640.0):
    """Deterministic SVG picture of the embedded double.

    Primal edges are drawn solid, dual edges dashed; diamond faces are
    shaded by the per-face residual map when one is given (white = 0 up
    to red = max).  A spinor overlay draws arg zeta as an oriented tick
    at each diamond-side midpoint.  Output depends only on the inputs.
    """
    if emb is None:
        raise CodecError("rendering requires an embedding with positions")
    corners = emb.corners(dm)
    pts = np.concatenate([corners.ravel(), np.asarray(emb.position)])
    x0, x1 = float(pts.real.min()), float(pts.real.max())
    y0, y1 = float(pts.imag.min()), float(pts.imag.max())
    span = max(x1 - x0, y1 - y0, 1e-12)
    pad = 0.05 * span
    scale = size / (span + 2 * pad)

    def P(z):
        # y grows downwards in SVG
        return (scale * (z.real - x0 + pad),
                scale * (y1 + pad - z.imag))

    w = scale * (x1 - x0 + 2 * pad)
    h = scale * (y1 - y0 + 2 * pad)
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<svg xmlns="http://www.w3.org/2000/svg" '
           'width="%s" height="%s" viewBox="0 0 %s %s">'
           % (_fmt(w), _fmt(h), _fmt(w), _fmt(h))]

    # shaded diamond faces
    res = residuals or {}
    rmax = max((abs(v) for v in res.values()), default=0.0)
    out.append('<g stroke="none">')
    for q in range(dm.diamond.n_faces):
        level = 0.0 if rmax == 0 else min(1.0, abs(res.get(q, 0.0)) / rmax)
        g = int(round(255 * (1.0 - 0.85 * level)))
        poly = " ".join("%s,%s" % tuple(map(_fmt, P(z)))
                        for z in corners[q])
        out.append('<polygon points="%s" fill="rgb(255,%d,%d)"/>'
                   % (poly, g, g))
    out.append('</g>')

    # primal edges solid: corner0 -> corner2 of each quad is (x, xp)
    out.append('<g stroke="black" stroke-width="1.5" fill="none">')
    for q in range(dm.diamond.n_faces):
        a, b = P(corners[q][0]), P(corners[q][2])
        out.append('<line x1="%s" y1="%s" x2="%s" y2="%s"/>'
                   % (_fmt(a[0]), _fmt(a[1]), _fmt(b[0]), _fmt(b[1])))
    out.append('</g>')
    # dual edges dashed: corner1 -> corner3 is (y, yp)
    out.append('<g stroke="gray" stroke-width="1.0" '
               'stroke-dasharray="4,3" fill="none">')
    for q in range(dm.diamond.n_faces):
        a, b = P(corners[q][1]), P(corners[q][3])
        out.append('<line x1="%s" y1="%s" x2="%s" y2="%s"/>'
                   % (_fmt(a[0]), _fmt(a[1]), _fmt(b[0]), _fmt(b[1])))
    out.append('</g>')

    # vertices
    out.append('<g>')
    for v in range(dm.n_pv):
        cx, cy = P(emb.position[v])
        out.append('<circle cx="%s" cy="%s" r="3" fill="black"/>'
                   % (_fmt(cx), _fmt(cy)))
    for v in range(dm.n_pv, dm.n_lv):
        cx, cy = P(emb.position[v])
        out.append('<circle cx="%s" cy="%s" r="2" fill="gray"/>'
                   % (_fmt(cx), _fmt(cy)))
    out.append('</g>')

    # spinor overlay: oriented tick with angle arg(zeta) at each side
    if spinor is not None:
        sides = dm.diamond.sides
        tick = 0.22 * span / max(dm.n_edges ** 0.5, 1.0)
        out.append('<g stroke="blue" stroke-width="1.2">')
        for xi, (u, v) in enumerate(sides):
            z = spinor.values[xi]
            mid = 0.5 * (emb.position[u] + emb.position[v])
            ang = np.angle(z)
            d = tick * complex(np.cos(ang), np.sin(ang))
            a, b = P(mid), P(mid + d)
            out.append('<line x1="%s" y1="%s" x2="%s" y2="%s" '
                       'marker-end="none"/>'
                       % (_fmt(a[0]), _fmt(a[1]), _fmt(b[0]), _fmt(b[1])))
            # arrowhead dot marks the oriented end
            out.append('<circle cx="%s" cy="%s" r="1.2" fill="blue" '
                       'stroke="none"/>' % (_fmt(b[0]), _fmt(b[1])))
        out.append('</g>')

    out.append('</svg>')
    return "\n".join(out) + "\n"
