import math

import numpy as np
import pytest

from discra import critical, forms, holomorphic, mesh

KC_SQUARE = 0.5 * math.log(1.0 + math.sqrt(2.0))


def test_square_family_critical():
    for alpha in (math.pi / 2, 1.1, 2.0):
        dm, emb = critical.generate_lattice('square', (alpha,),
                                            extent=(4, 4), topology='torus')
        rep = critical.classify_map(dm, emb)
        assert rep.verdict == 'critical'
        assert rep.side_spread <= 1e-12


def test_rectangular_period2_critical():
    rhos = (0.5, 2.0, 1.5, 1.0 / 1.5)
    assert abs(sum(math.atan(r) for r in rhos) - math.pi) <= 1e-12
    dm, emb = critical.generate_lattice('rectangular_period2', rhos,
                                        extent=(4, 4), topology='torus')
    rep = critical.classify_map(dm, emb)
    assert rep.verdict == 'critical'


def test_triangular_family_critical():
    dm, emb = critical.generate_lattice('triangular_hexagonal',
                                        (1.0, 1.1), extent=(4, 4))
    rep = critical.classify_map(dm, emb)
    assert rep.verdict == 'critical'


def test_perturbation_not_critical():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(4, 4), topology='torus')
    rho = dm.rho.copy()
    rho[3] *= 1.05
    dm2 = mesh.DoubleMap(dm.gamma, dm.gamma_star, rho)
    rep = critical.classify_map(dm2, emb)
    assert rep.verdict != 'critical'


def test_voronoi_semi_critical(rng):
    pts = rng.random((50, 2))
    dm, emb = critical.voronoi_delaunay(pts)
    rep = critical.classify_map(dm, emb, rtol=1e-6)
    assert rep.verdict in ('semi-critical', 'critical')


def test_ising_coupling_roundtrip(rng):
    rho = rng.uniform(0.2, 5.0, 40)
    K = critical.ising_couplings(rho)
    back = critical.couplings_to_rho(K.K)
    assert np.max(np.abs(back - rho)) <= 1e-14
    assert np.max(np.abs(np.sinh(2 * K.K) - rho)) <= 1e-14


def test_square_critical_coupling():
    dm, _ = critical.generate_lattice('square', (math.pi / 2,),
                                      extent=(4, 4), topology='torus')
    K = critical.ising_couplings(dm.rho).K
    assert np.max(np.abs(K - KC_SQUARE)) <= 1e-9
    rep = critical.ising_criticality(dm)
    assert rep.critical


def test_triangular_hexagonal_product_sum():
    dm, _ = critical.generate_lattice('triangular_hexagonal',
                                      (math.pi / 3, math.pi / 3),
                                      extent=(4, 4))
    rep = critical.ising_criticality(dm)
    assert rep.critical
    tri = [r for kind, v, r in rep.special if kind == 'triangular']
    assert tri
    assert max(abs(r) for r in tri) <= 1e-9


def test_ising_perturbation_fails():
    dm, _ = critical.generate_lattice('square', (math.pi / 2,),
                                      extent=(4, 4), topology='torus')
    rho = dm.rho.copy()
    rho[0] *= 1.05
    dm2 = mesh.DoubleMap(dm.gamma, dm.gamma_star, rho)
    rep = critical.ising_criticality(dm2)
    assert not rep.critical
    assert rep.max_residual > 0


def test_refine_preserves_criticality():
    dm, emb = critical.generate_lattice('square', (1.2,), extent=(3, 3))
    before = critical.classify_map(dm, emb)
    dm2, emb2, _ = critical.refine(dm, emb)
    after = critical.classify_map(dm2, emb2)
    assert before.verdict == after.verdict == 'critical'
    assert abs(after.delta / before.delta - 0.5) <= 1e-12


def test_convergence_z3():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(4, 4), scale=0.25)
    z0 = 0
    p0 = emb.position[z0]

    def build(d, e):
        dZ = critical.embedding_dz(d, e)
        return holomorphic.z_power(d, dZ, 3, z0, normalization='continuum')

    errors = critical.convergence_test(dm, emb, build,
                                       lambda z: (z - p0) ** 3, levels=3)
    for e0, e1 in zip(errors, errors[1:]):
        assert e1 <= 0.6 * e0


def test_convergence_z_exact():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(4, 4), scale=0.25)
    z0 = 0
    p0 = emb.position[z0]

    def build(d, e):
        dZ = critical.embedding_dz(d, e)
        return holomorphic.z_power(d, dZ, 1, z0, normalization='continuum')

    errors = critical.convergence_test(dm, emb, build,
                                       lambda z: z - p0, levels=3)
    assert max(errors) <= 1e-12


def test_nonholomorphic_control_does_not_converge():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(4, 4), scale=0.25)

    def build(d, e):
        return forms.Cochain('L', 0, np.conj(np.asarray(e.position)))

    errors = critical.convergence_test(dm, emb, build,
                                       lambda z: z ** 2, levels=3)
    assert errors[-1] > 0.5 * errors[0]


def test_quad_path_lemma(rng):
    dm, emb = critical.generate_lattice('triangular_hexagonal',
                                        (1.0, 1.0), extent=(3, 3))
    corners = emb.corners(dm)
    eta = critical.min_corner_angle(dm, emb)
    for _ in range(1000):
        q = int(rng.integers(dm.diamond.n_faces))
        t1, t2 = sorted(rng.random(2) * 4.0)
        ratio = critical.boundary_path_ratio(corners[q], t1, t2)
        assert ratio >= math.sin(eta) / 4.0 - 1e-12


def test_generate_rejects_bad_params():
    with pytest.raises(critical.CriticalError):
        critical.generate_lattice('square', (4.0,), extent=(2, 2))
    with pytest.raises(critical.CriticalError):
        critical.generate_lattice('square', (1.0,), extent=(2, 2),
                                  topology='klein')
