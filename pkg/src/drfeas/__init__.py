"""Douglas-Rachford and alternating projections for finite unions of closed sets."""

from .analysis import (FixClassification, FixStatus, NotStrongFixedError, RadiusEstimate, accumulation_analysis,
                       classify_fixed_point, final_full_turn, radius_certified, radius_sampled)
from .engine import (Diagnostics, PolicyKind, SelectionPolicy, StepRecord, StopReason, StoppingConfig, Trajectory,
                     detect_cycle, diagnose, dr_run, dr_step, enumerate_T, map_run, pair_operator)
from .lift import LiftedProblem, LiftTooLargeError, ProductPiece, ProductUnion, lift, solve_lifted
from .scenarios import Scenario, builtin_scenario, dump_scenario, parse_scenario
from .sets import (AffineSubspace, Ball, BaseCircle, Box, CylinderMantle, DimensionError, Halfspace,
                   InvalidPieceError, Piece, PieceProjection, Segment, Singleton, SolidCylinder, Sphere,
                   SpiralBranch, dist_piece, line_through, project_piece, reflect_piece)
from .spiral import SpiralScene, dr_spiral_run, map_spiral_run, verify_claims
from .unions import ActivePairSet, UnionSet, active_pairs, project_union, separation_gaps

__version__ = "0.1.0"
