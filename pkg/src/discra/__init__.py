"""Discrete Riemann surfaces on double cellular decompositions.

A double map carries a graph and its dual with a conformal structure
rho on edge pairs; on top of it live discrete exterior calculus,
harmonic and holomorphic function theory, criticality of rhombic
embeddings, Ising critical couplings, and the discrete Dirac equation
on spin structures.
"""

from .mesh import (CellComplex, Diamond, DoubleMap, MeshError,
                   TopologyReport, TripleGraph, build_double, build_dual,
                   build_triple, double_from_quads, eidx, eref, esign,
                   validate)
from .forms import (Cochain, FormError, average, coboundary, d_prime,
                    d_second, hodge_star, inner_product, total_integral,
                    wedge)
from .harmonic import (BoundaryData, HarmonicError, HodgeSplit,
                       SolveReport, dirichlet_energy, green_identity_residual,
                       harmonic_kernel, hodge_decompose, holomorphic_basis,
                       laplacian, solve_dirichlet, solve_neumann,
                       weyl_residual)
from .holomorphic import (CRReport, HolomorphicError, MeromorphicForm,
                          cauchy_integral, cauchy_kernel, check_holomorphic,
                          check_holomorphic_form, derivative, holonomy,
                          meromorphic_form, residue, z_power)
from .critical import (AngleSystem, ClassifyReport, CriticalError,
                       IsingCouplings, IsingReport, PlanarEmbedding,
                       classify_map, convergence_test, couplings_to_rho,
                       embedding_dz, generate_lattice, ising_couplings,
                       ising_criticality, refine, voronoi_delaunay)
from .dirac import (DiracError, DiracResult, HalfAngleSystem, MassiveParams,
                    MassiveReport, SpinStructure, Spinor,
                    build_spin_structure, complete_I,
                    construct_dirac_spinor, dirac_exists, dirac_residual,
                    dotsenko_solutions, elliptic_half_angle,
                    enumerate_spin_structures, half_angles,
                    massive_flatness, spinor_form)
from .io import (CodecError, mesh_from_obj, mesh_to_obj, read_mesh,
                 render_svg, spinor_to_obj, write_mesh)

__version__ = "0.1.0"
