"""Command-line entry point: ``msgraph simulate | run | evaluate | export``.

Exit status is 0 on success, 1 for invalid input (files, flags, configs) and
2 for failures while computing.

File formats
------------
Every document is JSON with ``"format"`` and ``"version": 1`` keys, sorted
keys, and floats written as the shortest string that round-trips exactly.
Poses are ``{"R": [9 row-major floats], "t": [3 floats]}``.

``msgraph-graph``
    ``nodes``: ``{id, kind, fixed, value, [marker_id], [size], [axis]}``.
    ``value`` is a pose for keyframe/marker/doorway nodes,
    ``{azimuth, elevation, distance}`` for walls, and ``[x, y, z]`` for rooms
    and corridors. ``factors``: ``{id, kind, nodes, measurement,
    information}``; ``measurement`` is a pose (odometry, marker_obs), a
    3-vector (corridor, doorway_room) or null, and ``information`` is the
    full row-major matrix. ``next_node_id``/``next_factor_id`` keep id
    allocation stable across a round trip.
``msgraph-dictionary``
    ``entries``: ``{marker_id, entity_kind, space_id, wall_axis_hint,
    [slot]}``. No poses.
``msgraph-scene``
    ``spaces`` (walls given by axis, offset, inward sign, extent, height),
    ``markers`` (pose, role, space_id, slot, size), ``doors`` and the
    ``trajectory`` waypoints ``{t, position}``.
``msgraph-dataset``
    The scene, the noise model, per-step ``timestamps`` and
    ``ground_truth``, ``odometry`` (step k to k+1) and ``detections``
    ``{step, marker_id, size, local_pose, nearby_points}`` plus the
    dictionary. Replay order is the detections of step 0, then for each later
    step its odometry followed by its detections.
Trajectories
    One pose per line: ``timestamp tx ty tz qx qy qz qw`` with a ``#`` header.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import ParseError, SGraphError, ValidationError
from .evaluation import (
    Trajectory,
    TrajectoryPair,
    ate,
    format_table,
    read_trajectory,
    write_trajectory,
)
from .pipeline import baseline_config, run
from .semantics import LAYERS, SemanticConfig
from .sgraph.config import InformationConfig, OptimizerConfig
from .sgraph.graph import FactorKind, NodeKind, SituationalGraph
from .simulator import TEMPLATES, NoiseModel, SceneSpec, SimDataset, generate, template_scene

log = logging.getLogger("msgraph")

NOISE_PARAMS = ("odom_rot_sigma", "odom_trans_sigma", "marker_rot_sigma", "marker_trans_sigma",
                "detection_range", "detection_half_fov")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _read_text(path) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc


def _with_source(path, fn, text):
    try:
        return fn(text)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def load_scene(source: str) -> SceneSpec:
    if source in TEMPLATES:
        return template_scene(source)
    if os.path.exists(source):
        return _with_source(source, SceneSpec.from_json, _read_text(source))
    return template_scene(source)   # raises UnknownTemplate


def parse_layers(text: str) -> frozenset:
    text = text.strip().lower()
    if text == "all":
        return frozenset(LAYERS)
    if text in ("none", ""):
        return frozenset()
    return frozenset(x.strip() for x in text.split(",") if x.strip())


def noise_from_args(args) -> NoiseModel:
    kw = {"seed": args.seed}
    for p in NOISE_PARAMS:
        v = getattr(args, f"noise_{p}")
        if v is not None:
            kw[p] = v
    return NoiseModel(**kw)


def information_from_args(args) -> InformationConfig:
    info = InformationConfig()
    for kind in FactorKind:
        v = getattr(args, f"info_{kind.value}", None)
        if v is not None:
            try:
                vals = [float(x) for x in v.split(",")]
            except ValueError as exc:
                raise UsageError(f"--info.{kind.value}: {exc}") from exc
            info = info.with_override(kind, vals)
    return info


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _dump_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    ds = generate(scene, noise_from_args(args))
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "scene.json"), scene.to_json())
    _write(os.path.join(args.out, "dictionary.json"), ds.dictionary.to_json())
    _write(os.path.join(args.out, "dataset.json"), ds.to_json())
    write_trajectory(os.path.join(args.out, "ground_truth.txt"), Trajectory(ds.timestamps, ds.ground_truth))
    print(f"{scene.name}: {len(ds)} keyframes, {len(ds.detections)} detections -> {args.out}")
    return 0


def _load_dataset(args) -> SimDataset:
    if args.dataset:
        return _with_source(args.dataset, SimDataset.from_json, _read_text(args.dataset))
    return generate(load_scene(args.scene), noise_from_args(args))


def cmd_run(args) -> int:
    sem_cfg = SemanticConfig(parse_layers(args.layers), information=information_from_args(args))
    opt_cfg = OptimizerConfig(max_iters=args.max_iters, g_tol=args.g_tol, f_tol=args.f_tol,
                              lambda_init=args.lambda_init, jacobian=args.jacobian)
    ds = _load_dataset(args)
    name = ds.scene.name or "scene"

    semantic = run(ds, sem_cfg, opt_cfg)
    baseline = run(ds, baseline_config(sem_cfg), opt_cfg)

    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, "graph.json"), semantic.built.graph.to_json())
    write_trajectory(os.path.join(args.out, "trajectory_semantic.txt"), semantic.estimate)
    write_trajectory(os.path.join(args.out, "trajectory_baseline.txt"), baseline.estimate)
    write_trajectory(os.path.join(args.out, "ground_truth.txt"), Trajectory(ds.timestamps, ds.ground_truth))

    label = "semantic[" + ",".join(l for l in LAYERS if l in sem_cfg.layers) + "]"
    table = ("ATE aligned (m)\n"
             + format_table({"odometry-only": {name: baseline.ate_aligned}, label: {name: semantic.ate_aligned}})
             + "\nATE unaligned (m)\n"
             + format_table({"odometry-only": {name: baseline.ate_raw}, label: {name: semantic.ate_raw}}))
    _write(os.path.join(args.out, "metrics.txt"), table)

    report = {
        "format": "msgraph-report",
        "version": 1,
        "scene": name,
        "noise": ds.noise.to_dict(),
        "layers": sorted(sem_cfg.layers),
        "information": sem_cfg.information.to_dict(),
        "optimizer": {"max_iters": opt_cfg.max_iters, "g_tol": opt_cfg.g_tol, "f_tol": opt_cfg.f_tol,
                      "lambda_init": opt_cfg.lambda_init, "jacobian": opt_cfg.jacobian},
        "runs": {
            "baseline": {"ate_aligned": baseline.ate_aligned.to_dict(), "ate_unaligned": baseline.ate_raw.to_dict(),
                         "optimize": [r.to_dict() for r in baseline.reports], "counts": baseline.built.graph.counts()},
            "semantic": {"ate_aligned": semantic.ate_aligned.to_dict(), "ate_unaligned": semantic.ate_raw.to_dict(),
                         "optimize": [r.to_dict() for r in semantic.reports], "counts": semantic.built.graph.counts()},
        },
    }
    _write(os.path.join(args.out, "report.json"), _dump_json(report))
    sys.stdout.write(table)
    return 0


def cmd_evaluate(args) -> int:
    est = read_trajectory(args.estimate)
    ref = read_trajectory(args.reference)
    rep = ate(TrajectoryPair(est, ref), not args.no_align)
    if args.format == "json":
        sys.stdout.write(_dump_json(rep.to_dict()))
    else:
        print(f"aligned={rep.aligned} poses={len(rep.errors)} rmse={rep.rmse:.6f} std={rep.std:.6f} "
              f"mean={rep.mean:.6f}")
    return 0


def graph_to_dot(g: SituationalGraph) -> str:
    shapes = {NodeKind.KEYFRAME: "circle", NodeKind.MARKER: "square", NodeKind.WALL: "box",
              NodeKind.DOORWAY: "diamond", NodeKind.ROOM: "doubleoctagon", NodeKind.CORRIDOR: "octagon"}
    lines = ["graph sgraph {"]
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        label = n.kind.value if n.marker_id is None else f"{n.kind.value} {n.marker_id}"
        lines.append(f'  n{nid} [label="{label}", shape={shapes[n.kind]}];')
    for fid in sorted(g.factors):
        f = g.factors[fid]
        for other in f.nodes[1:]:
            lines.append(f'  n{f.nodes[0]} -- n{other} [label="{f.kind.value}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_summary(g: SituationalGraph) -> str:
    counts = g.counts()
    width = max(len(k) for k in counts)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in counts.items())


def cmd_export(args) -> int:
    g = _with_source(args.graph, SituationalGraph.from_json, _read_text(args.graph))
    if args.format == "json":
        text = g.to_json()
    elif args.format == "dot":
        text = graph_to_dot(g)
    else:
        text = graph_summary(g)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_scene_args(p):
    p.add_argument("--scene", default="seq01", help=f"template ({', '.join(TEMPLATES)}) or scene JSON file")
    p.add_argument("--seed", type=int, default=0)
    for name in NOISE_PARAMS:
        p.add_argument(f"--noise.{name}", dest=f"noise_{name}", type=float, default=None, metavar="X",
                       help="radians" if "rot" in name or "fov" in name else "meters")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="msgraph", description="Marker-based situational graph SLAM backend.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a dataset")
    _add_scene_args(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="build, optimize and evaluate against an odometry-only baseline")
    _add_scene_args(r)
    r.add_argument("--dataset", help="dataset JSON written by 'simulate' (overrides --scene/--seed/--noise.*)")
    r.add_argument("--layers", default="all", help="comma list from markers,walls,spaces,doorways; or all/none")
    r.add_argument("--max-iters", type=int, default=100)
    r.add_argument("--g-tol", type=float, default=1e-8)
    r.add_argument("--f-tol", type=float, default=1e-10)
    r.add_argument("--lambda-init", type=float, default=1e-4)
    r.add_argument("--jacobian", choices=("analytic", "numeric"), default="analytic")
    for kind in FactorKind:
        r.add_argument(f"--info.{kind.value}", dest=f"info_{kind.value}", default=None, metavar="V[,V...]",
                       help="information diagonal (one value or one per residual component)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="ATE between two trajectory files")
    e.add_argument("estimate")
    e.add_argument("reference")
    e.add_argument("--no-align", action="store_true")
    e.add_argument("--format", choices=("text", "json"), default="text")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export", help="re-serialize or convert a graph file")
    x.add_argument("graph")
    x.add_argument("--format", choices=("json", "dot", "summary"), default="json")
    x.add_argument("--out")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SGraphError, OSError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
