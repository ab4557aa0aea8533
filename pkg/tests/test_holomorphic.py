import math

import numpy as np
import pytest

from discra import critical, forms, holomorphic

from conftest import random_double


def _interior_quads(dm):
    boundary_lv = set(dm.gamma.boundary_vertices)
    boundary_lv |= {dm.n_pv + v for v in dm.gamma_star.boundary_vertices}
    return [q for q in range(dm.diamond.n_faces)
            if not set(dm.diamond.quads[q]) & boundary_lv]


def test_z_and_z_squared_holomorphic(square_disc):
    dm, emb = square_disc
    z = forms.Cochain('L', 0, np.asarray(emb.position, dtype=complex))
    rep = holomorphic.check_holomorphic(dm, z)
    assert rep.max_residual <= 1e-12
    z2 = forms.Cochain('L', 0, np.asarray(emb.position) ** 2)
    rep2 = holomorphic.check_holomorphic(dm, z2)
    assert rep2.max_residual <= 1e-12
    # |z|^2 is a control: not holomorphic
    bad = forms.Cochain('L', 0, np.abs(emb.position) ** 2 + 0j)
    rep3 = holomorphic.check_holomorphic(dm, bad)
    assert rep3.max_residual > 1e-3


def test_cauchy_kernel_contour_and_identity(rng, square_disc):
    dm, _ = square_disc
    quad_ids = list(range(dm.diamond.n_faces))
    q = _interior_quads(dm)[0]
    x, y = dm.diamond.quads[q][0], dm.diamond.quads[q][1]
    kernel = holomorphic.cauchy_kernel(dm, quad_ids, x, y)
    nu, mu, info = kernel
    contour = sum(
        forms.side_integral(dm.diamond, nu.values, u, v)
        for u, v in holomorphic._region_boundary_sides(
            dm.diamond, info['rectangle']))
    assert abs(contour - 2j * math.pi) <= 1e-9
    for _ in range(20):
        f = forms.Cochain('L', 0, rng.standard_normal(dm.n_lv)
                          + 1j * rng.standard_normal(dm.n_lv))
        value, defect = holomorphic.cauchy_integral(dm, quad_ids, f, x, y,
                                                    kernel=kernel)
        assert abs(defect) <= 1e-9


def test_cauchy_integral_reproduces_holomorphic(square_disc):
    dm, emb = square_disc
    quad_ids = list(range(dm.diamond.n_faces))
    q = _interior_quads(dm)[len(_interior_quads(dm)) // 2]
    x, y = dm.diamond.quads[q][0], dm.diamond.quads[q][1]
    kernel = holomorphic.cauchy_kernel(dm, quad_ids, x, y)
    for fz in (np.asarray(emb.position, dtype=complex),
               np.asarray(emb.position) ** 2):
        f = forms.Cochain('L', 0, fz)
        value, defect = holomorphic.cauchy_integral(dm, quad_ids, f, x, y,
                                                    kernel=kernel)
        target = 0.5 * (fz[x] + fz[y])
        assert abs(value - target) <= 1e-9
        assert abs(defect) <= 1e-9


def test_meromorphic_residues_disc(square_disc):
    dm, _ = square_disc
    interior = [v for v in range(dm.n_pv)
                if v not in dm.gamma.boundary_vertices]
    x = interior[0]
    mf = holomorphic.meromorphic_form(dm, x)
    assert abs(mf.poles[x] - 1.0) <= 1e-10


def test_meromorphic_residue_pair_sums_to_zero(rng):
    dm = random_double(rng, extent=(4, 4), topology='torus')
    x, xp = 0, 5
    mf = holomorphic.meromorphic_form(dm, (x, xp))
    assert abs(mf.poles[x] - 1.0) <= 1e-10
    assert abs(mf.poles[xp] + 1.0) <= 1e-10
    total = sum(holomorphic.residue(dm, mf.form, v)
                for v in range(dm.n_pv))
    assert abs(total) <= 1e-12


def test_z_power_hierarchy(square_disc):
    dm, emb = square_disc
    dZ = critical.embedding_dz(dm, emb)
    z0 = 0
    p0 = emb.position[z0]
    for k in (1, 2):
        f = holomorphic.z_power(dm, dZ, k, z0, normalization='continuum')
        target = (np.asarray(emb.position) - p0) ** k
        assert np.max(np.abs(f.values - target)) <= 1e-10
