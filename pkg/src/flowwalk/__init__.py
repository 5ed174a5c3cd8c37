"""Random walks in a flow with killing, approximating the semigroup of ``-Lap - b + V``."""

__version__ = "0.1.0"

from .geometry import CEMETERY, Manifold, is_cemetery
from .partition import Partition, circle_partition, grid_partition, locate, model2d_partition
from .proximity import ProximityGraph, build_graph
from .flow import audit_conditions, explosion_time, flow
from .kernel import GraphFunction, TransitionOperator, apply, build_operator, symmetry_check
from .semigroup import RunConfig, generator_residual, run_semigroup, scale, simulate
from .reference import feynman_kac_mc, ref_circle, ref_feynman_kac_mc, ref_line_gaussian, ref_line_ou
