"""Acceptance gate: one test per criterion, each checked at its stated tolerance.

Run ``pytest tests/test_acceptance.py`` for the gate alone; the terminal
summary prints one PASS/FAIL line per criterion. The drift criterion compares
against the per-seed values frozen in ``tests/data/drift_baseline.json``;
refresh them with ``python tests/test_acceptance.py --freeze`` after an
intentional numerical change.
"""
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msgraph.evaluation import Trajectory, TrajectoryPair, ate, errors_to_report, format_table  # noqa: E402
from msgraph.geometry import Plane, Pose, compose  # noqa: E402
from msgraph.pipeline import baseline_config, build_graph, replay_detections, run, zero_noise_cost  # noqa: E402
from msgraph.semantics import SemanticConfig  # noqa: E402
from msgraph.sgraph import (  # noqa: E402
    Factor,
    FactorKind,
    Node,
    NodeKind,
    OptimizerConfig,
    SituationalGraph,
    corridor_center,
    jacobian,
    optimize,
    room_center,
)
from msgraph.simulator import TEMPLATES, NoiseModel, generate, template_scene  # noqa: E402

from _util import INFO, factor_graph, random_pose, relative_error  # noqa: E402

pytestmark = pytest.mark.acceptance

BASELINE = Path(__file__).parent / "data" / "drift_baseline.json"
DRIFT_SCENES = ("seq01", "seq03", "seq05")
DRIFT_SEEDS = range(10)

# runs produced by the drift criterion, reused for the cost-trace check
_RUNS = {}


def crit(num, title):
    return pytest.mark.criterion(num, title)


def _warm_up():
    """Load (or compile) the jitted kernels outside any timed section."""
    run(generate(template_scene("seq06"), NoiseModel(seed=0)), opt_cfg=OptimizerConfig(max_iters=2))


@pytest.fixture(scope="module", autouse=True)
def warm():
    _warm_up()


# ---------------------------------------------------------------------------

@crit(1, "zero-residual closure on all templates, cost < 1e-18, < 5 s each")
@pytest.mark.parametrize("name", TEMPLATES)
def test_zero_residual_closure(name):
    t0 = time.perf_counter()
    cost = zero_noise_cost(generate(template_scene(name), NoiseModel.zero()))
    secs = time.perf_counter() - t0
    print(f"{name}: cost {cost:.3e} in {secs:.2f} s")
    assert cost < 1e-18
    assert secs < 5.0


@crit(2, "analytic vs central-difference Jacobians, rel. err < 1e-5 at 100 points per kind, < 10 s")
def test_jacobian_suite():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {}
    for kind in FactorKind:
        errs = []
        for _ in range(100):
            g, fid = factor_graph(kind, rng, bound=0.1)
            errs.append(relative_error(jacobian(g, fid), jacobian(g, fid, "numeric", step=1e-6)))
        worst[kind.value] = max(errs)
    secs = time.perf_counter() - t0
    print({k: f"{v:.2e}" for k, v in worst.items()}, f"{secs:.2f} s")
    assert max(worst.values()) < 1e-5
    assert secs < 10.0


def _axis_plane(axis, value, flip):
    n = np.zeros(3)
    n[axis] = 1.0
    p = Plane(n, -value)
    return p.flipped() if flip else p


def _mid_plane_oracle(a: Plane, b: Plane, axis):
    """Coordinate of the mid-plane, from one explicit point on each plane."""
    pa = -a.offset * a.normal
    pb = -b.offset * b.normal
    return 0.5 * (pa[axis] + pb[axis])


@crit(3, "center formulas match brute-force oracles to 1e-9 on 1000 axis-aligned configurations, < 5 s")
def test_center_oracles():
    # the worked examples first
    assert np.allclose(corridor_center(_axis_plane(0, 0, False), _axis_plane(0, 4, False), (1, 2.5, 1.2)),
                       (2, 2.5, 1.2), atol=1e-9)
    assert np.allclose(corridor_center(_axis_plane(1, -3, False), _axis_plane(1, 3, True), (7, 0, 0)),
                       (7, 0, 0), atol=1e-9)
    assert np.allclose(room_center(_axis_plane(0, 0, False), _axis_plane(0, 4, True),
                                   _axis_plane(1, 0, False), _axis_plane(1, 6, True)), (2, 3, 0), atol=1e-9)
    assert np.allclose(room_center(_axis_plane(0, -2, True), _axis_plane(0, 2, False),
                                   _axis_plane(1, -3, False), _axis_plane(1, 3, False)), (0, 0, 0), atol=1e-9)

    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        # corridor: walls normal to x or y
        axis = int(rng.integers(0, 2))
        lo = rng.uniform(-20, 20)
        hi = lo + rng.uniform(0.05, 10) * rng.choice([-1, 1])
        a, b = _axis_plane(axis, lo, rng.random() < 0.5), _axis_plane(axis, hi, rng.random() < 0.5)
        c = rng.uniform(-20, 20, 3)
        want = c.copy()
        want[axis] = _mid_plane_oracle(a, b, axis)
        worst = max(worst, float(np.abs(corridor_center(a, b, c) - want).max()))

        # room: the two mid-planes and z = 0 meet in one point
        xs = [rng.uniform(-20, 20)]
        xs.append(xs[0] + rng.uniform(0.05, 10) * rng.choice([-1, 1]))
        ys = [rng.uniform(-20, 20)]
        ys.append(ys[0] + rng.uniform(0.05, 10) * rng.choice([-1, 1]))
        wx = [_axis_plane(0, v, rng.random() < 0.5) for v in xs]
        wy = [_axis_plane(1, v, rng.random() < 0.5) for v in ys]
        A = np.eye(3)
        rhs = np.array([_mid_plane_oracle(*wx, 0), _mid_plane_oracle(*wy, 1), 0.0])
        want = np.linalg.solve(A, rhs)
        worst = max(worst, float(np.abs(room_center(*wx, *wy) - want).max()))
    secs = time.perf_counter() - t0
    print(f"max deviation {worst:.2e} in {secs:.2f} s")
    assert worst < 1e-9
    assert secs < 5.0


def _drift_values():
    out = {}
    cfg = SemanticConfig()
    for name in DRIFT_SCENES:
        scene = template_scene(name)
        for seed in DRIFT_SEEDS:
            ds = generate(scene, NoiseModel(seed=seed))
            sem = run(ds, cfg)
            base = run(ds, baseline_config(cfg))
            _RUNS[(name, seed)] = (sem, base)
            out[f"{name}/{seed}"] = {"baseline": base.ate_aligned.rmse, "semantic": sem.ate_aligned.rmse}
    return out


@crit(4, "drift: semantic beats odometry-only on >= 9/10 seeds, mean reduction >= 30%, frozen values within 1e-6, < 60 s")
def test_drift_reduction():
    t0 = time.perf_counter()
    values = _drift_values()
    secs = time.perf_counter() - t0
    for name in DRIFT_SCENES:
        rows = [values[f"{name}/{s}"] for s in DRIFT_SEEDS]
        wins = sum(r["semantic"] < r["baseline"] for r in rows)
        red = float(np.mean([1 - r["semantic"] / r["baseline"] for r in rows]))
        print(f"{name}: {wins}/10 wins, mean reduction {100 * red:.1f}%")
        assert wins >= 9
        assert red >= 0.30
    frozen = json.loads(BASELINE.read_text())["values"]
    assert frozen.keys() == values.keys()
    dev = max(abs(values[k][m] - frozen[k][m]) for k in values for m in ("baseline", "semantic"))
    print(f"max deviation from frozen values {dev:.2e}; {secs:.1f} s")
    assert dev <= 1e-6
    assert secs < 60.0


@crit(5, "published figures are report-layout references only, never numeric targets")
def test_reference_figures_not_targets():
    # The metrics table takes any extra method rows; the reference figures
    # come from hardware runs that cannot be regenerated here, so nothing is
    # compared against them.
    ds = generate(template_scene("seq06"), NoiseModel(seed=0))
    res = run(ds)
    ref = errors_to_report([0.25, 0.75], True, Pose.identity())
    table = format_table({"odometry-only": {"seq06": run(ds, baseline_config(SemanticConfig())).ate_aligned},
                          "semantic": {"seq06": res.ate_aligned},
                          "reference": {"seq06": ref, "seq01": ref}}, ["seq01", "seq06"])
    lines = table.splitlines()
    assert lines[0].split() == ["Method", "seq01", "seq01", "seq06", "seq06"]
    assert lines[1].split() == ["RMSE", "STD"] * 2
    assert [l.split()[0] for l in lines[3:]] == ["odometry-only", "semantic", "reference"]
    assert lines[3].split()[1:3] == ["-", "-"]


def _closed_form_counts(ds):
    d = ds.dictionary
    dets = ds.detections
    ids = {x.marker_id for x in dets}
    wall_ids = {i for i in ids if d.get(i) is not None and d.get(i).entity_kind == "wall"}
    wall_dets = sum(1 for x in dets if x.marker_id in wall_ids)
    return {"marker": len(ids), "wall": len(wall_ids), "f:marker_obs": len(dets), "f:wall_marker": wall_dets}


@crit(6, "association idempotence and closed-form counts, < 5 s")
def test_association_idempotence():
    t0 = time.perf_counter()
    for name in ("seq01", "seq03", "seq05"):
        ds = generate(template_scene(name), NoiseModel(seed=1))
        built = build_graph(ds)
        counts = built.graph.counts()
        want = _closed_form_counts(ds)
        assert {k: counts[k] for k in want} == want, name

        # same keyframes again: every (marker, keyframe) pair was seen already
        snapshot = built.graph.to_json()
        assert replay_detections(built, ds) == []
        assert built.graph.to_json() == snapshot

        # a second keyframe chain: exactly the duplicate observation factors
        g = built.graph
        second = [g.add_node(Node(NodeKind.KEYFRAME, g.nodes[k].value)) for k in built.keyframes]
        pending = sum(1 for sid in built.ledger.spaces
                      if ds.dictionary.spaces[sid].kind == "corridor")
        muts = replay_detections(built, ds, keyframes=second)
        added = {}
        for m in muts:
            assert m.action == "add_factor", m
            added[m.kind] = added.get(m.kind, 0) + 1
        corridor_wall_dets = sum(1 for x in ds.detections
                                 if (e := ds.dictionary.get(x.marker_id)) is not None and e.entity_kind == "wall"
                                 and ds.dictionary.spaces[e.space_id].kind == "corridor")
        expect = {"marker_obs": len(ds.detections), "wall_marker": want["f:wall_marker"]}
        if corridor_wall_dets:
            expect["corridor"] = corridor_wall_dets
        assert added == expect, (name, pending)
        built.ledger.check(g)
    secs = time.perf_counter() - t0
    print(f"{secs:.2f} s")
    assert secs < 5.0


def _translation_chain():
    """Three keyframes with identity rotations, perfect odometry, middle one shifted."""
    gt = [np.array([0.0, 0, 0]), np.array([1.0, 0.5, 0.0]), np.array([2.0, 0.2, 0.3])]
    g = SituationalGraph()
    init = [gt[0], gt[1] + [0.4, -0.3, 0.2], gt[2]]
    ids = [g.add_node(Node(NodeKind.KEYFRAME, Pose.from_translation(p), fixed=(i == 0))) for i, p in enumerate(init)]
    meas = [gt[1] - gt[0], gt[2] - gt[1]]
    for i, m in enumerate(meas):
        g.add_factor(Factor(FactorKind.ODOMETRY, (ids[i], ids[i + 1]), Pose.from_translation(m),
                            INFO.matrix(FactorKind.ODOMETRY)))
    # linear oracle: t1 - t0 = m0, t2 - t1 = m1 with t0 fixed
    A = np.block([[np.eye(3), np.zeros((3, 3))], [-np.eye(3), np.eye(3)]])
    b = np.concatenate([meas[0] + gt[0], meas[1]])
    x = np.linalg.lstsq(A, b, rcond=None)[0]
    return g, ids, [gt[0], x[:3], x[3:]]


@crit(7, "accepted-step cost traces monotone; 3-keyframe chain matches the linear oracle to 1e-9")
def test_optimizer_sanity():
    g, ids, oracle = _translation_chain()
    rep = optimize(g)
    traces = [rep.cost_trace]
    for nid, want in zip(ids, oracle):
        assert np.abs(g.nodes[nid].value.t - want).max() < 1e-9
        assert np.abs(g.nodes[nid].value.R - np.eye(3)).max() < 1e-9

    if not _RUNS:
        _drift_values()
    for sem, base in _RUNS.values():
        traces += [r.cost_trace for r in sem.reports + base.reports]
    bad = [t for t in traces if any(b > a for a, b in zip(t, t[1:]))]
    print(f"{len(traces)} traces checked")
    assert not bad


@crit(8, "ATE identities: bias-variance to 1e-12, alignment invariance to 1e-9, {0,0,3,4} -> 2.5")
def test_ate_identities():
    rng = np.random.default_rng(8)
    for _ in range(200):
        e = rng.exponential(rng.uniform(0.01, 3), size=rng.integers(1, 200))
        rep = errors_to_report(e, False, Pose.identity())
        assert abs(rep.rmse ** 2 - (rep.std ** 2 + rep.mean ** 2)) <= 1e-12 * max(1.0, rep.rmse ** 2)

    ts = np.arange(40) * 0.1
    ref = Trajectory(ts, [random_pose(rng) for _ in ts])
    est = Trajectory(ts, [compose(p, Pose.from_rotvec(0.02 * rng.normal(size=3), 0.2 * rng.normal(size=3)))
                          for p in ref.poses])
    base = ate(TrajectoryPair(est, ref)).rmse
    for _ in range(50):
        T = random_pose(rng, 20.0)
        moved = Trajectory(ts, [compose(T, p) for p in est.poses])
        assert abs(ate(TrajectoryPair(moved, ref)).rmse - base) < 1e-9

    assert errors_to_report([0, 0, 3, 4], False, Pose.identity()).rmse == 2.5


# ---------------------------------------------------------------------------

def freeze():
    values = _drift_values()
    doc = {"description": "aligned ATE RMSE (m) per scene/seed at default noise, all layers vs odometry only",
           "values": values}
    BASELINE.parent.mkdir(exist_ok=True)
    BASELINE.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {BASELINE}")


if __name__ == "__main__":
    if "--freeze" in sys.argv:
        freeze()
    else:
        sys.exit(pytest.main([__file__, "-v"]))
