"""Triangle meshes in edge lengths and dihedral angles.

Surfaces are represented by NRIC vectors (edge lengths plus dihedral angles).
The package provides quaternion integrability conditions, elastic energies, an
augmented Lagrange solver for integrable shapes, rigidity analysis and
reconstruction of vertex positions.
"""

from .energies import (MaterialParameters, NonlinearEnergy, QuadraticEnergy, QuadraticWeights,
                       local_membrane, make_energy, quadratic_weights)
from .errors import *  # noqa: F401,F403
from .integrability import ConstraintSystem, StackedConstraints
from .mesh import (INFEASIBLE, SimplicialSurface, angle_defects, dihedral_angles, edge_lengths,
                   forward_map, jacobian_forward_map, triangle_inequalities)
from .objectives import (GeodesicPath, dissimilarity_objective, elastic_average_objective,
                         geodesic_objective, initialize_geodesic, linear_blend)
from .optim import ObjectiveFunction, SolverConfig, augmented_lagrangian, solve_constrained
from .reconstruction import (build_tree, edge_weights, preassembled_weights, procrustes_rms,
                             reconstruct, traverse_reconstruct, variational_refine)
from .rigidity import rigidity_test, tangent_basis

__version__ = "0.1.0"
