"""Bond percolation on high-dimensional tori.

Cluster exploration coupled between the torus and Z^d, Monte Carlo
estimators for susceptibilities and two-point functions, an internal
critical-point solver, exact enumeration oracles for tiny graphs, and the
scaling experiments built on top of them.
"""

from .lattice import TorusSpec
from .randomness import RandomStream, bond_uniform, is_occupied
from .cluster import ClusterStats, ExplorationResult, Lattice, Torus, decompose_torus, explore_cluster
from .coupling import CoupledResult, coupled_explore, verify_coupling_invariants
from .estimators import Estimate, QuantileSummary

__version__ = "0.1.0"

__all__ = [
    "TorusSpec",
    "RandomStream",
    "bond_uniform",
    "is_occupied",
    "ClusterStats",
    "ExplorationResult",
    "Torus",
    "Lattice",
    "decompose_torus",
    "explore_cluster",
    "CoupledResult",
    "coupled_explore",
    "verify_coupling_invariants",
    "Estimate",
    "QuantileSummary",
    "__version__",
]
