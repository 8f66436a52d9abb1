"""Dataset replay, optimization and evaluation glue."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .evaluation import AteReport, Trajectory, TrajectoryPair, ate
from .geometry import Pose, compose, plane_to_spherical
from .semantics import LAYERS, EntityLedger, SemanticConfig, ingest, try_form_space
from .sgraph.config import OptimizerConfig
from .sgraph.graph import Factor, FactorKind, Node, NodeKind, SituationalGraph
from .sgraph.optimizer import OptimizeReport, optimize, total_cost
from .simulator import SimDataset

log = logging.getLogger(__name__)


@dataclass
class BuiltGraph:
    graph: SituationalGraph
    ledger: EntityLedger
    keyframes: list                         # step index -> keyframe node id
    mutations: list = field(default_factory=list)


def build_graph(dataset: SimDataset, cfg: SemanticConfig | None = None) -> BuiltGraph:
    """Replay the dataset: one keyframe per step, chained odometry initial guesses.

    The first keyframe is fixed at the ground-truth start pose to remove the
    gauge freedom.
    """
    cfg = cfg or SemanticConfig()
    g = SituationalGraph()
    ledger = EntityLedger()
    odo_info = cfg.information.matrix(FactorKind.ODOMETRY)
    kfs = [g.add_node(Node(NodeKind.KEYFRAME, dataset.ground_truth[0], fixed=True))]
    muts = []
    for ev in dataset.events():
        if ev.kind == "odometry":
            prev = kfs[-1]
            est = compose(g.nodes[prev].value, ev.odometry)
            kfs.append(g.add_node(Node(NodeKind.KEYFRAME, est)))
            g.add_factor(Factor(FactorKind.ODOMETRY, (prev, kfs[-1]), ev.odometry, odo_info))
        else:
            muts.extend(ingest(ev.detection.observation(kfs[ev.step]), dataset.dictionary, ledger, g, cfg))
    return BuiltGraph(g, ledger, kfs, muts)


def replay_detections(built: BuiltGraph, dataset: SimDataset, cfg: SemanticConfig | None = None,
                      keyframes=None) -> list:
    """Feed every detection again, against ``keyframes`` (default: the same ones)."""
    cfg = cfg or SemanticConfig()
    kfs = built.keyframes if keyframes is None else keyframes
    out = []
    for d in dataset.detections:
        out.extend(ingest(d.observation(kfs[d.step]), dataset.dictionary, built.ledger, built.graph, cfg))
    return out


def assign_ground_truth(built: BuiltGraph, dataset: SimDataset) -> None:
    """Overwrite every node value with its noiseless counterpart from the scene."""
    g, ledger, scene = built.graph, built.ledger, dataset.scene
    for step, nid in enumerate(built.keyframes):
        g.set_value(nid, dataset.ground_truth[step])
    for mid, nid in ledger.markers.items():
        g.set_value(nid, scene.marker(mid).pose)
    for (sid, slot), nid in ledger.walls.items():
        g.set_value(nid, plane_to_spherical(scene.space(sid).wall(slot).plane()))
    for sid, nid in ledger.spaces.items():
        g.set_value(nid, scene.space_center(sid))
    for mid, nid in ledger.doorways.items():
        g.set_value(nid, scene.marker(mid).pose)


def keyframe_trajectory(built: BuiltGraph, timestamps) -> Trajectory:
    return Trajectory(np.asarray(timestamps), [built.graph.nodes[k].value for k in built.keyframes])


@dataclass
class RunResult:
    layers: frozenset
    built: BuiltGraph
    reports: list                   # one OptimizeReport per optimization round
    estimate: Trajectory
    ate_aligned: AteReport
    ate_raw: AteReport

    @property
    def report(self) -> OptimizeReport:
        return self.reports[-1]


def run(dataset: SimDataset, sem_cfg: SemanticConfig | None = None,
        opt_cfg: OptimizerConfig | None = None, max_rounds: int = 3) -> RunResult:
    """Build, optimize and score one configuration.

    Spaces whose walls disagree on the drifted initial guess are retried on
    the optimized walls; each round that forms a new space is followed by
    another optimization, up to ``max_rounds`` in total.
    """
    sem_cfg = sem_cfg or SemanticConfig()
    built = build_graph(dataset, sem_cfg)
    reports = []
    for _ in range(max_rounds):
        formed = [sid for sid in sorted(dataset.dictionary.spaces)
                  if sid not in built.ledger.spaces
                  and try_form_space(sid, dataset.dictionary, built.ledger, built.graph, sem_cfg)]
        if reports and not formed:
            break
        reports.append(optimize(built.graph, opt_cfg))
    est = keyframe_trajectory(built, dataset.timestamps)
    ref = Trajectory(dataset.timestamps, dataset.ground_truth)
    pair = TrajectoryPair(est, ref)
    return RunResult(sem_cfg.layers, built, reports, est, ate(pair, True), ate(pair, False))


def baseline_config(cfg: SemanticConfig) -> SemanticConfig:
    """Same settings with every semantic layer switched off (odometry only)."""
    return SemanticConfig(frozenset(), cfg.parallel_tol, cfg.gap_min, cfg.refine_planes, cfg.information)


def zero_noise_cost(dataset: SimDataset, cfg: SemanticConfig | None = None) -> float:
    """Total cost after ingesting everything and snapping node values to ground truth."""
    built = build_graph(dataset, cfg or SemanticConfig(frozenset(LAYERS)))
    assign_ground_truth(built, dataset)
    return total_cost(built.graph)
