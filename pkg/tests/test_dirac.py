import math

import numpy as np
import pytest

from discra import critical, dirac, forms, mesh


def _lattice(kind, params, extent=(4, 4), topology='planar'):
    return critical.generate_lattice(kind, params, extent=extent,
                                     topology=topology)


def test_half_angle_face_sum_pi():
    dm, _ = _lattice('square', (1.1,))
    th = dirac.half_angles(dm)
    tri = dm.triple
    for q, cyc in enumerate(tri.quad_cycle):
        total = 0.0
        for i in range(4):
            a, b = cyc[i], cyc[(i + 1) % 4]
            key = (a, b) if (a, b) in tri.edge_index else (b, a)
            total += abs(th.theta[tri.edge_index[key]])
        assert abs(total - math.pi) <= 1e-12


@pytest.mark.parametrize("kind,params", [
    ('square', (math.pi / 2,)),
    ('square', (1.1,)),
    ('rectangular_period2', (0.5, 2.0, 1.5, 1.0 / 1.5)),
    ('triangular_hexagonal', (1.0, 1.1)),
])
def test_spinor_construction_and_residuals(kind, params):
    dm, _ = _lattice(kind, params)
    result = dirac.dirac_exists(dm, tol=1e-9)
    assert result.ok
    sp = result.spinor
    assert np.max(np.abs(np.abs(sp.values) - 1.0)) <= 1e-12
    res = dirac.dirac_residual(dm, sp, tol=1e-9)
    assert res['symmetry'] <= 1e-12
    assert res['dotsenko'] <= 1e-12


def test_spinor_equivariance_serialization():
    dm, _ = _lattice('square', (1.1,))
    sp = dirac.construct_dirac_spinor(dm)
    rows = sp.serialize()
    by_key = {(xi, sheet): complex(re, im) for xi, sheet, re, im in rows}
    for xi in range(len(sp.values)):
        assert by_key[(xi, 1)] == -by_key[(xi, 0)]


def test_square_lattice_eighth_roots():
    dm, _ = _lattice('square', (math.pi / 2,))
    sp = dirac.construct_dirac_spinor(dm)
    eighth = np.exp(1j * np.pi / 4 * np.arange(8))
    for z in sp.values:
        assert min(abs(z - w) for w in eighth) <= 1e-12


def test_spinor_base_point_uniqueness():
    dm, _ = _lattice('triangular_hexagonal', (1.0, 1.0))
    a = dirac.construct_dirac_spinor(dm, base=0)
    b = dirac.construct_dirac_spinor(dm, base=3)
    ratio = a.values / b.values
    assert np.max(np.abs(ratio - ratio[0])) <= 1e-12


def test_perturbation_kills_spinor():
    dm, _ = _lattice('square', (math.pi / 2,))
    rho = dm.rho.copy()
    rho[2] *= 1.1
    dm2 = mesh.DoubleMap(dm.gamma, dm.gamma_star, rho)
    result = dirac.dirac_exists(dm2, tol=1e-9)
    assert not result.ok
    assert result.witness


def test_rejects_non_equivariant():
    dm, _ = _lattice('square', (math.pi / 2,))
    sp = dirac.construct_dirac_spinor(dm)
    fake = dirac.Spinor(np.ones_like(sp.values), np.zeros_like(sp.tau))
    with pytest.raises(dirac.DiracError):
        dirac.dirac_residual(dm, fake, tol=1e-9)


def test_dotsenko_propagation_minus_one(rng):
    # propagating the Dotsenko relation around one diamond returns -zeta
    dm, _ = _lattice('square', (1.2,))
    sp = dirac.construct_dirac_spinor(dm)
    tri = dm.triple
    for q in range(min(6, dm.diamond.n_faces)):
        (z1, z2, z3, z4), odd = dirac._quad_lift(dm, sp, q)
        r = float(dm.rho[q])
        rs = 1.0 / r
        # four rotations of the relation propagate z1 around to -z1
        z3p = (math.sqrt(1 + rs * rs) * z2 - z1) / rs
        z4p = (math.sqrt(1 + r * r) * z3p - z2) / r
        z1p = (math.sqrt(1 + rs * rs) * z4p - z3p) / rs
        nxt = math.sqrt(1 + r * r) * z1p - z4p  # = r * z2 on the next sheet
        assert abs(z3p - z3) <= 1e-12
        assert abs(nxt - (-r * z2)) <= 1e-12


def test_spin_structures_torus_and_planar():
    dm, _ = _lattice('square', (math.pi / 2,), extent=(3, 3),
                     topology='torus')
    structures = dirac.enumerate_spin_structures(dm)
    assert len(structures) == 4
    for i, si in enumerate(structures):
        for sj in structures[i + 1:]:
            assert not dirac._cover_isomorphic(dm.triple, si.tau, sj.tau)
        # every face lifts non-trivially
        for face in dm.triple.face_edge_lists():
            assert sum(si.tau[e] for e in face) % 2 == 1
    dmp, _ = _lattice('square', (math.pi / 2,), extent=(3, 3))
    assert len(dirac.enumerate_spin_structures(dmp)) == 1


def test_spinor_form_squares_to_dz():
    dm, emb = _lattice('triangular_hexagonal', (1.0, 1.1))
    sp = dirac.construct_dirac_spinor(dm)
    rep = dirac.spinor_form(dm, sp, sp)
    assert rep['closed']
    assert rep['type_residual'] <= 1e-12
    assert rep['lambda_spread'] <= 1e-10
    # the two sublattice constants are exactly opposite
    assert rep['lambda_antisymmetry'] <= 1e-10


def test_spinor_form_conjugate_pair_vanishes():
    dm, _ = _lattice('square', (1.3,))
    sp = dirac.construct_dirac_spinor(dm)
    conj = dirac.Spinor(np.conj(sp.values), sp.tau.copy())
    rep = dirac.spinor_form(dm, sp, conj)
    assert np.max(np.abs(rep['form'].values)) <= 1e-12


def test_dotsenko_solutions_satisfy_dotsenko_only():
    dm, _ = _lattice('square', (1.1,), extent=(3, 3))
    sp = dirac.construct_dirac_spinor(dm)
    sols = dirac.dotsenko_solutions(dm, sp)
    assert len(sols) >= 2
    found_nonsym = False
    for g in sols[:4]:
        res = dirac._dotsenko_only_residual(dm, g) \
            if hasattr(dirac, '_dotsenko_only_residual') else None
        full = dirac.dirac_residual(dm, g, tol=1e-9)
        assert full['dotsenko'] <= 1e-9
        if full['symmetry'] > 1e-6:
            found_nonsym = True
    assert found_nonsym


def test_elliptic_cross_check_and_spots():
    import scipy.special as ss
    for k in (0.3, 0.8, 0.99):
        kp = math.sqrt(1 - k * k)
        for phi in (0.3, 1.2, 2.8):
            u = dirac.elliptic_half_angle(phi, k)
            ref = ss.ellipkinc(phi / 2, kp * kp)
            assert abs(u - ref) <= 1e-11
    # k = 1: u = phi / 2 and I = pi / 2 exactly
    assert dirac.elliptic_half_angle(1.3, 1.0) == 0.65
    assert dirac.MassiveParams(1.0).I == math.pi / 2
    # k' -> 1 spot value: integral of sec is ln tan(3 pi / 8)
    spot = dirac._agm_incomplete(math.pi / 4, 1.0 - 1e-12)
    assert abs(spot - math.log(math.tan(3 * math.pi / 8))) <= 1e-10


def test_elliptic_monotone_and_domain():
    us = [dirac.elliptic_half_angle(phi, 0.6)
          for phi in np.linspace(0.1, 3.0, 12)]
    assert all(b > a for a, b in zip(us, us[1:]))
    with pytest.raises(dirac.DiracError):
        dirac.elliptic_half_angle(-0.1, 0.5)
    with pytest.raises(dirac.DiracError):
        dirac.elliptic_half_angle(1.0, 1.5)
    with pytest.raises(dirac.DiracError):
        dirac.complete_I(1.0)


def test_massive_flatness_report():
    dm, _ = _lattice('square', (1.1,), extent=(4, 4), topology='torus')
    rep = dirac.massive_flatness(dm, 1.0)
    assert rep.ok_modulus
    assert not rep.modulus_offenders
    # k=1 residuals are reported verbatim (pi/2-size), not repaired
    fr = max(abs(v) for v in rep.face_residual.values())
    assert fr > 1.0
    k = 0.7
    s = math.sqrt(1.0 / k)
    rho_l = np.concatenate([dm.rho * s, (1.0 / dm.rho) * s])
    rep2 = dirac.massive_flatness(dm, k, rho_lambda=rho_l)
    assert rep2.ok_modulus
    rep3 = dirac.massive_flatness(dm, k)
    assert not rep3.ok_modulus
    assert rep3.modulus_offenders


def test_massive_uniform_square_shares_residual():
    dm, _ = _lattice('square', (math.pi / 2,), extent=(4, 4),
                     topology='torus')
    k = 0.8
    s = math.sqrt(1.0 / k)
    rho_l = np.concatenate([dm.rho * s, (1.0 / dm.rho) * s])
    rep = dirac.massive_flatness(dm, k, rho_lambda=rho_l)
    vals = list(rep.face_residual.values())
    assert max(vals) - min(vals) <= 1e-12
