"""Command-line entry point.

Every subcommand prints one machine-readable JSON report on stdout
(schema field "report_version": 1) and a one-line human summary on
stderr.  Exit codes: 0 verdict pass, 1 verdict fail, 2 input error.
The verdict tolerance defaults to 1e-9 and can be overridden by the
DISCRA_TOLERANCE environment variable or the --tolerance flag.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import critical, dirac, forms, harmonic, holomorphic, io, mesh

DEFAULT_TOL = 1e-9


class InputError(ValueError):
    pass


def _tolerance(args):
    if args.tolerance is not None:
        return args.tolerance
    env = os.environ.get("DISCRA_TOLERANCE")
    if env is not None:
        try:
            return float(env)
        except ValueError:
            raise InputError("DISCRA_TOLERANCE must be a float, got %r"
                             % env)
    return DEFAULT_TOL


def _load(path):
    try:
        return io.read_mesh(path)
    except FileNotFoundError:
        raise InputError("no such file: %s" % path)
    except io.CodecError as exc:
        raise InputError(str(exc))


def _need_embedding(emb):
    if emb is None:
        raise InputError("this command needs an embedded mesh "
                         "(no embedding in the input file)")
    return emb


def _complexify(report):
    """JSON-encode numpy scalars, complex numbers and dict keys."""
    if isinstance(report, dict):
        return {str(k): _complexify(v) for k, v in report.items()}
    if isinstance(report, (list, tuple)):
        return [_complexify(v) for v in report]
    if isinstance(report, (bool, np.bool_)):
        return bool(report)
    if isinstance(report, (np.floating, float)):
        return float(report)
    if isinstance(report, (np.integer, int)):
        return int(report)
    if isinstance(report, (np.complexfloating, complex)):
        return {"re": float(np.real(report)), "im": float(np.imag(report))}
    if isinstance(report, np.ndarray):
        return [_complexify(v) for v in report.tolist()]
    if isinstance(report, (bool, str)) or report is None:
        return report
    return str(report)


# ---------------------------------------------------------------------------
# subcommands; each returns (report dict, passed bool, summary string)


def cmd_generate(args):
    kind = args.lattice
    if kind == "voronoi":
        rng = np.random.default_rng(args.seed)
        pts = rng.random((args.points, 2))
        dm, emb = critical.voronoi_delaunay(pts)
    else:
        if kind == "square":
            rho = args.rho or [1.0]
            if len(rho) != 1:
                raise InputError("square lattice takes one --rho value")
            params = (2.0 * math.atan(rho[0]),)
        elif kind == "rectangular_period2":
            rho = args.rho
            if not rho or len(rho) != 4:
                raise InputError(
                    "rectangular_period2 takes four --rho values")
            params = tuple(rho)
        elif kind == "triangular_hexagonal":
            params = (args.alpha, args.beta)
        else:
            raise InputError("unknown lattice kind %r" % kind)
        dm, emb = critical.generate_lattice(
            kind, params, extent=(args.nx, args.ny),
            topology=args.topology, scale=args.scale)
    rep = critical.classify_map(dm, emb, rtol=max(_tolerance(args), 1e-12))
    if args.output:
        io.write_mesh(args.output, dm, emb)
    report = {
        "lattice": kind,
        "topology": "torus" if emb.periods is not None else "planar",
        "primal_vertices": dm.n_pv,
        "primal_edges": dm.n_edges,
        "primal_faces": dm.n_pf,
        "classification": rep.verdict,
        "delta": rep.delta,
        "side_spread": rep.side_spread,
        "output": args.output,
    }
    passed = rep.verdict in ("critical", "semi-critical")
    return report, passed, "generated %s lattice: classify = %s" % (
        kind, rep.verdict)


def cmd_validate(args):
    dm, _ = _load(args.mesh)
    top = mesh.validate(dm)
    report = {
        "euler_characteristic": top.euler_characteristic,
        "genus": top.genus,
        "boundary_components": top.boundary_components,
        "closed": top.closed,
        "connected": top.connected,
        "violations": top.violations,
        "ok": top.ok,
    }
    return report, top.ok, "validate: %s (chi=%d, genus=%s)" % (
        "ok" if top.ok else "%d violations" % len(top.violations),
        top.euler_characteristic, top.genus)


def cmd_classify(args):
    dm, emb = _load(args.mesh)
    _need_embedding(emb)
    rep = critical.classify_map(dm, emb, rtol=max(_tolerance(args), 1e-12))
    report = {
        "verdict": rep.verdict,
        "delta": rep.delta,
        "side_spread": rep.side_spread,
        "nonflat_vertices": rep.nonflat,
        "violations": rep.violations[:20],
        "n_violations": len(rep.violations),
    }
    return report, rep.verdict == "critical", "classify: %s" % rep.verdict


def _load_data(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError("no such file: %s" % path)
    except json.JSONDecodeError as exc:
        raise InputError("%s: invalid JSON at line %d" % (path, exc.lineno))


def cmd_solve(args):
    dm, emb = _load(args.mesh)
    tol = _tolerance(args)
    if args.problem == "dirichlet":
        if args.data:
            obj = _load_data(args.data)
            if "dirichlet" not in obj:
                raise InputError("data file needs a \"dirichlet\" mapping")
            marked = {int(v): complex(val) if not isinstance(val, list)
                      else complex(*val)
                      for v, val in obj["dirichlet"].items()}
        else:
            _need_embedding(emb)
            marked = {int(v): emb.position[v].real
                      for v in dm.gamma.boundary_vertices}
            if not marked:
                raise InputError("mesh has no boundary vertices; provide "
                                 "--data with a marked set")
        bd = harmonic.BoundaryData(dirichlet=marked)
        f, rep = harmonic.solve_dirichlet(dm, bd, part=args.part)
        check = max((abs(f.values[v] - val) for v, val in marked.items()),
                    default=0.0)
        report = {
            "problem": "dirichlet",
            "part": args.part,
            "marked": len(marked),
            "residual": rep.residual,
            "boundary_error": float(check),
            "energy": rep.energy,
            "values": None if not args.output else args.output,
        }
        if args.output:
            with open(args.output, "w") as fh:
                json.dump(_complexify({"vertex_values":
                                       list(f.values)}), fh)
        passed = rep.residual <= tol and check <= tol
        return report, passed, "dirichlet solve: residual %.3e" % \
            rep.residual
    # Neumann
    if args.data:
        obj = _load_data(args.data)
        for key in ("y0", "f0", "alpha"):
            if key not in obj:
                raise InputError("Neumann data needs y0, f0 and alpha")
        bd = harmonic.BoundaryData(
            y0=int(obj["y0"]), f0=complex(obj["f0"]),
            alpha={int(e): complex(v) for e, v in obj["alpha"].items()})
        g = None
    else:
        # round-trip default: alpha = dg for g = Re Z on the dual
        _need_embedding(emb)
        g = np.array([emb.position[dm.n_pv + j].real
                      for j in range(dm.n_dv)])
        alpha = {}
        for e in harmonic.boundary_edges(dm.gamma):
            t, h = dm.gamma_star.edges[e]
            alpha[e] = (g[h] if h < dm.n_dv else 0.0) - \
                (g[t] if t < dm.n_dv else 0.0)
        y0 = dm.n_pv
        bd = harmonic.BoundaryData(y0=y0, f0=g[0], alpha=alpha)
    f, rep = harmonic.solve_neumann(dm, bd)
    report = {
        "problem": "neumann",
        "flux_defect": rep.residual,
        "energy": rep.energy,
    }
    passed = rep.residual <= tol
    if g is not None:
        err = max(abs(f.values[dm.n_pv + j] - g[j])
                  for j in range(dm.n_dv))
        report["roundtrip_error"] = float(err)
        passed = passed and err <= max(tol, 1e-10)
    return report, passed, "neumann solve: flux defect %.3e" % rep.residual


def cmd_basis(args):
    dm, _ = _load(args.mesh)
    top = mesh.validate(dm)
    basis, info = harmonic.holomorphic_basis(dm, cutoff=1e-9)
    report = {
        "harmonic_dim": info["harmonic_dim"],
        "holomorphic_dim": info["dim"],
        "sv_gap": info["sv_gap"],
        "genus": top.genus,
    }
    expected = None if top.genus is None else 2 * top.genus
    passed = expected is not None and info["dim"] == expected
    return report, passed, "holomorphic 1-forms: dim %d (genus %s)" % (
        info["dim"], top.genus)


def cmd_cauchy(args):
    dm, _ = _load(args.mesh)
    tol = _tolerance(args)
    quad_ids = list(range(dm.diamond.n_faces))
    boundary_lv = set(dm.gamma.boundary_vertices)
    boundary_lv |= {dm.n_pv + v for v in dm.gamma_star.boundary_vertices}
    pick = None
    for q in quad_ids:
        if not (set(dm.diamond.quads[q]) & boundary_lv):
            pick = q
            break
    if pick is None:
        raise InputError("no interior diamond face for the Cauchy kernel")
    x, y = dm.diamond.quads[pick][0], dm.diamond.quads[pick][1]
    nu, mu, info = holomorphic.cauchy_kernel(dm, quad_ids, x, y)
    contour = complex(sum(
        forms.side_integral(dm.diamond, nu.values, u, v)
        for u, v in holomorphic._region_boundary_sides(
            dm.diamond, info["rectangle"])))
    rng = np.random.default_rng(args.seed)
    f = forms.Cochain('L', 0, rng.standard_normal(dm.n_lv)
                      + 1j * rng.standard_normal(dm.n_lv))
    value, defect = holomorphic.cauchy_integral(dm, quad_ids, f, x, y,
                                                kernel=(nu, mu, info))
    report = {
        "edge": [int(x), int(y)],
        "contour_integral": contour,
        "contour_error": None if contour is None
        else abs(contour - 2j * math.pi),
        "cauchy_value": value,
        "cauchy_defect": float(abs(defect)),
    }
    passed = abs(defect) <= max(tol, 1e-9)
    if contour is not None:
        passed = passed and abs(contour - 2j * math.pi) <= max(tol, 1e-9)
    return report, passed, "cauchy: defect %.3e" % abs(defect)


def cmd_ising(args):
    dm, _ = _load(args.mesh)
    tol = _tolerance(args)
    rep = critical.ising_criticality(dm, tol=tol)
    K = critical.ising_couplings(dm.rho).K
    report = {
        "critical": rep.critical,
        "max_residual": rep.max_residual,
        "K_min": float(np.min(K)),
        "K_max": float(np.max(K)),
        "special_identities": [
            {"kind": kind, "vertex": int(v), "residual": float(r)}
            for kind, v, r in rep.special[:50]],
    }
    if np.allclose(K, K[0]):
        report["K"] = float(K[0])
    return report, rep.critical, "ising: %s (max residual %.3e)" % (
        "critical" if rep.critical else "not critical", rep.max_residual)


def cmd_dirac(args):
    dm, _ = _load(args.mesh)
    tol = _tolerance(args)
    result = dirac.dirac_exists(dm, tol=tol)
    report = {
        "exists": result.ok,
        "residuals": result.residuals,
        "witness": result.witness,
    }
    if result.ok and args.output:
        with open(args.output, "w") as fh:
            json.dump(_complexify(io.spinor_to_obj(result.spinor)), fh)
        report["output"] = args.output
    if result.ok:
        mags = np.abs(result.spinor.values)
        report["unit_modulus_error"] = float(np.max(np.abs(mags - 1.0)))
    return report, result.ok, "dirac: %s" % (
        "spinor constructed" if result.ok else "no spinor (witness: %s)"
        % (result.witness,))


def cmd_massive(args):
    dm, _ = _load(args.mesh)
    tol = _tolerance(args)
    rho_l = None
    if args.rescale:
        s = math.sqrt(1.0 / args.k)
        rho_l = np.concatenate([dm.rho * s, (1.0 / dm.rho) * s])
    rep = dirac.massive_flatness(dm, args.k, rho_lambda=rho_l, tol=tol)
    fr = max((abs(v) for v in rep.face_residual.values()), default=0.0)
    vr = max((abs(v) for v in rep.vertex_residual.values()), default=0.0)
    report = {
        "k": args.k,
        "kprime": rep.params.kprime,
        "I": rep.params.I,
        "modulus_ok": rep.ok_modulus,
        "modulus_offenders": rep.modulus_offenders[:20],
        "n_modulus_offenders": len(rep.modulus_offenders),
        "max_face_residual": float(fr),
        "max_vertex_residual": float(vr),
        "flat": rep.flat,
    }
    return report, rep.ok_modulus, "massive k=%g: modulus %s, flat=%s" % (
        args.k, "ok" if rep.ok_modulus else
        "%d offenders" % len(rep.modulus_offenders), rep.flat)


def cmd_refine(args):
    dm, emb = _load(args.mesh)
    _need_embedding(emb)
    rtol = max(_tolerance(args), 1e-12)
    before = critical.classify_map(dm, emb, rtol=rtol)
    dm2, emb2, _ = critical.refine(dm, emb)
    after = critical.classify_map(dm2, emb2, rtol=rtol)
    if args.output:
        io.write_mesh(args.output, dm2, emb2)
    report = {
        "verdict_before": before.verdict,
        "verdict_after": after.verdict,
        "delta_before": before.delta,
        "delta_after": after.delta,
        "output": args.output,
    }
    passed = after.verdict == before.verdict
    if before.delta and after.delta:
        passed = passed and abs(after.delta / before.delta - 0.5) <= 1e-9
    return report, passed, "refine: %s -> %s, delta %.4g -> %.4g" % (
        before.verdict, after.verdict, before.delta, after.delta)


def cmd_converge(args):
    dm, emb = critical.generate_lattice(
        "square", (math.pi / 2,), extent=(args.nx, args.ny),
        topology="planar", scale=args.delta)
    z0 = 0
    p0 = emb.position[z0]
    k = args.power

    def build(d, e):
        dZ = critical.embedding_dz(d, e)
        return holomorphic.z_power(d, dZ, k, z0, normalization="continuum")

    errors = critical.convergence_test(
        dm, emb, build, lambda z: (z - p0) ** k, levels=args.levels)
    ratios = [errors[i + 1] / errors[i] if errors[i] > 1e-12 else 0.0
              for i in range(len(errors) - 1)]
    # exactness guard: polynomial degree <= 2 is reproduced exactly
    exact = all(e <= 1e-10 for e in errors)
    converged = exact or all(r <= 0.6 for r in ratios)
    report = {
        "power": k,
        "delta0": args.delta,
        "errors": errors,
        "ratios": ratios,
        "exact": exact,
        "converged": converged,
    }
    return report, converged, "converge Z^%d: errors %s" % (
        k, ", ".join("%.3e" % e for e in errors))


def cmd_render(args):
    dm, emb = _load(args.mesh)
    _need_embedding(emb)
    residuals = None
    if args.shade:
        rep = critical.classify_map(dm, emb,
                                    rtol=max(_tolerance(args), 1e-12))
        corners = emb.corners(dm)
        residuals = {}
        delta = rep.delta or 1.0
        for q in range(dm.diamond.n_faces):
            pos4 = corners[q]
            lens = [abs(pos4[(i + 1) % 4] - pos4[i]) for i in range(4)]
            residuals[q] = max(abs(l - delta) for l in lens)
    spinor = None
    if args.spinor:
        result = dirac.dirac_exists(dm, tol=_tolerance(args))
        if not result.ok:
            raise InputError("no Dirac spinor on this mesh: %s"
                             % (result.witness,))
        spinor = result.spinor
    doc = io.render_svg(dm, emb, residuals=residuals, spinor=spinor)
    with open(args.output, "w") as fh:
        fh.write(doc)
    report = {
        "output": args.output,
        "bytes": len(doc.encode()),
        "primal_vertices": dm.n_pv,
        "primal_edges": dm.n_edges,
        "shaded": bool(args.shade),
        "spinor_overlay": bool(args.spinor),
    }
    return report, True, "rendered %s (%d bytes)" % (args.output,
                                                     len(doc.encode()))


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _build_parser():
    top = argparse.ArgumentParser(
        prog="discra",
        description="Discrete Riemann surfaces on double cellular "
                    "decompositions.")
    sub = top.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, mesh=True):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--tolerance", type=float, default=None,
                       help="verdict tolerance (default 1e-9, or "
                            "DISCRA_TOLERANCE)")
        p.add_argument("--seed", type=int, default=0,
                       help="RNG seed for randomized steps")
        if mesh:
            p.add_argument("mesh", help="input mesh JSON file")
        return p

    p = add("generate", cmd_generate, "generate a lattice family or "
            "Voronoi double", mesh=False)
    p.add_argument("--lattice", required=True,
                   choices=["square", "rectangular_period2",
                            "triangular_hexagonal", "voronoi"])
    p.add_argument("--rho", type=float, nargs="+", default=None,
                   help="diagonal ratio parameters (1 or 4 values)")
    p.add_argument("--alpha", type=float, default=math.pi / 3,
                   help="triangle angle alpha (triangular family)")
    p.add_argument("--beta", type=float, default=math.pi / 3,
                   help="triangle angle beta (triangular family)")
    p.add_argument("--nx", type=int, default=4)
    p.add_argument("--ny", type=int, default=4)
    p.add_argument("--topology", choices=["planar", "torus"],
                   default="planar")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--points", type=int, default=50,
                   help="random point count (voronoi)")
    p.add_argument("--output", default=None, help="mesh file to write")

    add("validate", cmd_validate, "check structural invariants")
    add("classify", cmd_classify, "criticality classification")

    p = add("solve", cmd_solve, "boundary value problems")
    p.add_argument("--problem", choices=["dirichlet", "neumann"],
                   default="dirichlet")
    p.add_argument("--part", choices=["primal", "dual", "lambda"],
                   default="primal")
    p.add_argument("--data", default=None,
                   help="JSON boundary data file")
    p.add_argument("--output", default=None, help="solution file to write")

    add("basis", cmd_basis, "holomorphic 1-form basis dimensions")
    add("cauchy", cmd_cauchy, "Cauchy kernel and integral identity")

    p = add("ising", cmd_ising, "Ising couplings and criticality")
    p.add_argument("--check", action="store_true",
                   help="(default behavior; kept for pipelines)")

    p = add("dirac", cmd_dirac, "Dirac spinor existence and construction")
    p.add_argument("--exists", action="store_true",
                   help="(default behavior; kept for pipelines)")
    p.add_argument("--output", default=None, help="spinor file to write")

    p = add("massive", cmd_massive, "massive flatness report")
    p.add_argument("--k", type=float, required=True, help="modulus k")
    p.add_argument("--rescale", action="store_true",
                   help="rescale rho by sqrt(1/k) so the modulus "
                        "precondition holds")

    p = add("refine", cmd_refine, "split every diamond face in four")
    p.add_argument("--output", default=None, help="mesh file to write")

    p = add("converge", cmd_converge, "refinement convergence harness",
            mesh=False)
    p.add_argument("--power", type=int, default=3,
                   help="monomial degree to test")
    p.add_argument("--delta", type=float, default=0.25,
                   help="coarsest lattice spacing")
    p.add_argument("--nx", type=int, default=4)
    p.add_argument("--ny", type=int, default=4)
    p.add_argument("--levels", type=int, default=3)

    p = add("render", cmd_render, "emit an SVG figure")
    p.add_argument("--output", required=True, help="SVG file to write")
    p.add_argument("--shade", action="store_true",
                   help="shade diamond faces by criticality residual")
    p.add_argument("--spinor", action="store_true",
                   help="overlay Dirac spinor phases as oriented ticks")

    return top


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        report, passed, summary = args.fn(args)
    except (InputError, io.CodecError, mesh.MeshError,
            critical.CriticalError, harmonic.HarmonicError,
            holomorphic.HolomorphicError, dirac.DiracError) as exc:
        doc = {"report_version": 1, "command": args.command,
               "error": str(exc)}
        print(json.dumps(_complexify(doc), indent=1))
        print("error: %s" % exc, file=sys.stderr)
        return 2
    doc = {"report_version": 1, "command": args.command,
           "passed": bool(passed)}
    doc.update(report)
    print(json.dumps(_complexify(doc), indent=1))
    print(summary, file=sys.stderr)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
