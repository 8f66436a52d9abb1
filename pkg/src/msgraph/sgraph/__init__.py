"""Situational graph: node/factor container, residuals and the solver."""
from .config import DEFAULT_INFORMATION, InformationConfig, OptimizerConfig
from .factors import (
    GAP_MIN,
    PARALLEL_TOL,
    corridor_center,
    residual_corridor,
    residual_doorway,
    residual_marker,
    residual_odometry,
    residual_room,
    residual_wall_marker,
    room_center,
)
from .graph import (
    LAYER,
    RESIDUAL_DIM,
    SIGNATURE,
    TANGENT_DIM,
    Factor,
    FactorKind,
    Node,
    NodeKind,
    SituationalGraph,
    check_information,
)
from .optimizer import OptimizeReport, Problem, factor_residual, jacobian, optimize, total_cost

__all__ = [
    "DEFAULT_INFORMATION", "InformationConfig", "OptimizerConfig", "GAP_MIN", "PARALLEL_TOL",
    "corridor_center", "room_center", "residual_corridor", "residual_doorway", "residual_marker",
    "residual_odometry", "residual_room", "residual_wall_marker", "LAYER", "RESIDUAL_DIM",
    "SIGNATURE", "TANGENT_DIM", "Factor", "FactorKind", "Node", "NodeKind", "SituationalGraph",
    "check_information", "OptimizeReport", "Problem", "factor_residual", "jacobian", "optimize",
    "total_cost",
]
