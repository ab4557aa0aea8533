import math

import numpy as np
import pytest

from discra import critical, mesh


def random_double(rng, extent=(3, 3), topology='torus'):
    """A structurally valid double with random rho (no embedding claims)."""
    dm, _ = critical.generate_lattice('square', (math.pi / 2,),
                                      extent=extent, topology=topology)
    rho = rng.uniform(0.2, 5.0, dm.n_edges)
    return mesh.DoubleMap(dm.gamma, dm.gamma_star, rho)


def tetra_double(rho=None):
    """Genus-0 closed double: tetrahedron with its face-dual."""
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]

    def face_left(u, v):
        for i, f in enumerate(faces):
            for k in range(3):
                if f[k] == u and f[(k + 1) % 3] == v:
                    return i

    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    quads = [(u, 'f%d' % face_left(v, u), v, 'f%d' % face_left(u, v))
             for u, v in edges]
    if rho is None:
        rho = np.ones(len(edges))
    dm, _, _ = mesh.double_from_quads(quads, rho=rho)
    return dm


def path_double(n):
    """Path graph on n primal vertices with a trivial (dangling) dual."""
    gamma = mesh.CellComplex(n, [(i, i + 1) for i in range(n - 1)], [],
                             boundary_vertices=range(n),
                             boundary_edges=range(n - 1))
    gstar = mesh.CellComplex(2 * (n - 1),
                             [(2 * i, 2 * i + 1) for i in range(n - 1)], [],
                             boundary_vertices=range(2 * (n - 1)),
                             boundary_edges=range(n - 1))
    gstar.face_center = []
    return mesh.DoubleMap(gamma, gstar, np.ones(n - 1))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def square_torus():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(4, 4), topology='torus')
    return dm, emb


@pytest.fixture
def square_disc():
    dm, emb = critical.generate_lattice('square', (math.pi / 2,),
                                        extent=(6, 6), topology='planar')
    return dm, emb
