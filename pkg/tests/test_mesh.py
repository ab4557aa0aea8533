import math

import numpy as np
import pytest

from discra import mesh
from discra.critical import generate_lattice

from conftest import random_double, tetra_double


def test_eref_roundtrip():
    for e in range(5):
        for s in (1, -1):
            r = mesh.eref(e, s)
            assert mesh.eidx(r) == e
            assert mesh.esign(r) == s


def test_square_torus_counts():
    dm, _ = generate_lattice('square', (math.pi / 2,), extent=(4, 4),
                             topology='torus')
    assert dm.n_pv == 16
    assert dm.n_edges == 32
    assert dm.n_pf == 16
    assert dm.n_dv == 16
    top = mesh.validate(dm)
    assert top.ok
    assert top.euler_characteristic == 0
    assert top.genus == 1
    assert top.closed


def test_sphere_counts():
    dm = tetra_double()
    top = mesh.validate(dm)
    assert top.ok
    assert top.euler_characteristic == 2
    assert top.genus == 0
    assert top.closed


def test_diamond_and_triple_stats():
    dm, _ = generate_lattice('square', (math.pi / 2,), extent=(3, 3),
                             topology='torus')
    dia = dm.diamond
    assert dia.n_faces == dm.n_edges          # one quad per edge pair
    tri = dm.triple
    assert tri.n_vertices == dia.n_edges      # one vertex per side
    fams = [fam for fam, _ in tri.faces]
    assert fams.count('quad') == dm.n_edges
    assert fams.count('primal') == dm.n_pv
    assert fams.count('dual') == dm.n_dv
    # quad id q has primal diagonal = primal edge q
    for q in range(dia.n_faces):
        x, y, xp, yp = dia.quads[q]
        assert (x, xp) == dm.gamma.edges[q]


def test_rho_positive_required():
    dm, _ = generate_lattice('square', (math.pi / 2,), extent=(2, 2),
                             topology='torus')
    bad = np.ones(dm.n_edges)
    bad[0] = -1.0
    with pytest.raises(mesh.MeshError):
        mesh.DoubleMap(dm.gamma, dm.gamma_star, bad)


def test_edge_count_mismatch_rejected():
    dm, _ = generate_lattice('square', (math.pi / 2,), extent=(2, 2),
                             topology='torus')
    with pytest.raises(mesh.MeshError):
        mesh.DoubleMap(dm.gamma, dm.gamma_star, np.ones(dm.n_edges + 1))


def test_validate_random_doubles(rng):
    for _ in range(5):
        dm = random_double(rng)
        top = mesh.validate(dm)
        assert top.ok, top.violations


def test_vertex_star_closes():
    dm, _ = generate_lattice('square', (math.pi / 2,), extent=(3, 3),
                             topology='torus')
    for v in range(dm.gamma.n_vertices):
        star = dm.gamma.vertex_star(v)
        assert len(star) == 4
