"""Marker-driven situational graphs: keyframes, fiducial markers, walls,
doorways, rooms and corridors in one jointly optimized factor graph."""
__version__ = "0.1.0"

from . import errors
from .evaluation import AteReport, Trajectory, TrajectoryPair, align, ate, format_table, read_trajectory, write_trajectory
from .geometry import Plane, Pose, SphericalPlane, Tangent6, boxminus, boxplus, compose, exp, inverse, log
from .pipeline import RunResult, baseline_config, build_graph, run
from .semantics import (
    LAYERS,
    DictEntry,
    EntityLedger,
    MarkerObservation,
    SemanticConfig,
    SemanticDictionary,
    ingest,
    load_dictionary,
    try_form_space,
)
from .sgraph import (
    Factor,
    FactorKind,
    InformationConfig,
    Node,
    NodeKind,
    OptimizeReport,
    OptimizerConfig,
    SituationalGraph,
    optimize,
)
from .simulator import TEMPLATES, NoiseModel, SceneSpec, SimDataset, generate, template_scene

__all__ = [
    "__version__", "errors",
    "AteReport", "Trajectory", "TrajectoryPair", "align", "ate", "format_table", "read_trajectory",
    "write_trajectory",
    "Plane", "Pose", "SphericalPlane", "Tangent6", "boxminus", "boxplus", "compose", "exp", "inverse", "log",
    "RunResult", "baseline_config", "build_graph", "run",
    "LAYERS", "DictEntry", "EntityLedger", "MarkerObservation", "SemanticConfig", "SemanticDictionary",
    "ingest", "load_dictionary", "try_form_space",
    "Factor", "FactorKind", "InformationConfig", "Node", "NodeKind", "OptimizeReport", "OptimizerConfig",
    "SituationalGraph", "optimize",
    "TEMPLATES", "NoiseModel", "SceneSpec", "SimDataset", "generate", "template_scene",
]
