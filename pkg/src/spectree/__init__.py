"""Deficiency indices of Schrödinger operators on trees, at finite truncation scale."""

from .criteria import Outcome, Problem, Verdict, classify
from .decomposition import JacobiBlock, decompose, verify_spectral_equivalence
from .defect import build_tree_defect_vector, jacobi_defect_solution
from .errors import (
    BudgetExceeded,
    CheckFailed,
    InsufficientRange,
    InvalidOffspring,
    NoCutFound,
    NotSphereSymmetric,
    SpectreeError,
    UnknownVertex,
)
from .graph_core import OffspringSequence, TreeTopology, WeightedGraph, build_offspring_tree
from .operators import PotentialSpec, SchrodingerOperator
from .random_trees import OffspringDistribution, sample_gw_tree

__version__ = "0.1.0"
