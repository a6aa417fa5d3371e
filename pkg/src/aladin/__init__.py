"""Distributed-optimization toolkit: augmented-Lagrangian coordination with
quasi-Newton sensitivity recovery, event-triggered real-time variants, and a
time-splitting moving-horizon-estimation benchmark."""

from .coordinator import (CoordinationResult, NodeBlocks, assemble_blocks,
                          solve_closed_form, solve_kkt_oracle)
from .errors import (AladinError, CoordinationSingular, DomainError, LayoutError,
                     MeasurementSingular, NotPositiveDefinite, NumericalError,
                     OracleError, RankDeficientConstraints, ShapeError, SolveStalled)
from .local_solver import (LocalSolution, LocalSolveConfig, centralized_solve,
                           solve_local)
from .problem import (CouplingSpec, DistributedProblem, NodeProblem,
                      check_derivatives, coupling_residual, load_problem_json,
                      quadratic_node)
from .runtime import (IterationRecord, NodeState, RunConfig, UplinkMessage,
                      Variant, empirical_contraction, run, uplink_cost, write_trace)
from .sensitivity import (DiffPack, SensitivityState, adjoint_jacobian_update,
                          bfgs_update, is_trigger, make_diffs)

__all__ = [
    "AladinError", "CoordinationResult", "CoordinationSingular", "CouplingSpec",
    "DiffPack", "DistributedProblem", "DomainError", "IterationRecord",
    "LayoutError", "LocalSolution", "LocalSolveConfig", "MeasurementSingular",
    "NodeBlocks", "NodeProblem", "NodeState", "NotPositiveDefinite",
    "NumericalError", "OracleError", "RankDeficientConstraints", "RunConfig",
    "SensitivityState", "ShapeError", "SolveStalled", "UplinkMessage", "Variant",
    "adjoint_jacobian_update", "assemble_blocks", "bfgs_update",
    "centralized_solve", "check_derivatives", "coupling_residual",
    "empirical_contraction", "is_trigger", "load_problem_json", "make_diffs",
    "quadratic_node", "run", "solve_closed_form", "solve_kkt_oracle",
    "solve_local", "uplink_cost", "write_trace",
]

__version__ = "0.1.0"
