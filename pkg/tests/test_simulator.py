import dataclasses
import json
import math

import numpy as np
import pytest

from msgraph.errors import ConfigError, InvalidScene, ParseError, UnknownTemplate
from msgraph.geometry import Pose, compose, inverse, pose_distance
from msgraph.semantics import load_dictionary
from msgraph.simulator import (
    TEMPLATES,
    NoiseModel,
    SceneSpec,
    SimDataset,
    chain_odometry,
    dictionary_from_scene,
    generate,
    template_scene,
    visible,
)

SEQ01 = template_scene("seq01")


@pytest.fixture(scope="module")
def seq01_noisy():
    return generate(SEQ01, NoiseModel(seed=4))


@pytest.fixture(scope="module")
def seq01_clean():
    return generate(SEQ01, NoiseModel.zero())


def space_kinds(scene):
    kinds = [s.kind for s in scene.spaces]
    return {k: kinds.count(k) for k in set(kinds)}


def test_seq01_counts():
    assert space_kinds(SEQ01) == {"room": 2}
    roles = [m.role for m in SEQ01.markers]
    assert roles.count("wall") == 8 and roles.count("doorway") == 1
    d = SEQ01.dictionary()
    assert len(d) == 9 and {l.kind for l in d.spaces.values()} == {"room"}


@pytest.mark.parametrize("name, kinds", [
    ("seq01", {"room": 2}),
    ("seq02", {"corridor": 2, "room": 1}),
    ("seq03", {"corridor": 1, "room": 5}),
    ("seq04", {"corridor": 2, "area": 1}),
    ("seq05", {"corridor": 4, "room": 1}),
    ("seq06", {"corridor": 1, "room": 1}),
])
def test_template_topologies(name, kinds):
    assert space_kinds(template_scene(name)) == kinds


def test_unknown_template():
    with pytest.raises(UnknownTemplate):
        template_scene("seq99")


@pytest.mark.parametrize("name", TEMPLATES)
def test_template_dimensions(name):
    scene = template_scene(name)
    for s in scene.spaces:
        if s.kind == "area":
            continue
        offsets = {}
        for w in s.walls:
            offsets.setdefault(w.axis, []).append(w.offset)
        spans = [abs(v[1] - v[0]) for v in offsets.values()]
        if s.kind == "corridor":
            spans.append(s.walls[0].extent[1] - s.walls[0].extent[0])
        assert sorted(spans) == pytest.approx([2.0, 10.0] if s.kind == "corridor" else [4.0, 6.0])
    assert all(m.size == 0.08 for m in scene.markers)


@pytest.mark.parametrize("name", TEMPLATES)
def test_scene_json_roundtrip(name):
    scene = template_scene(name)
    text = scene.to_json()
    assert SceneSpec.from_json(text).to_json() == text


def test_dictionary_ignores_poses():
    doc = SEQ01.to_dict()
    for m in doc["markers"]:
        del m["pose"]
    doc["doors"] = []
    doc["trajectory"] = []
    assert dictionary_from_scene(doc) == SEQ01.dictionary()
    assert load_dictionary(SEQ01.dictionary().to_json()) == SEQ01.dictionary()


def _edited(doc_edit):
    doc = SEQ01.to_dict()
    doc_edit(doc)
    return doc


@pytest.mark.parametrize("edit", [
    lambda d: d["markers"][0]["pose"]["t"].__setitem__(0, d["markers"][0]["pose"]["t"][0] + 0.01),
    lambda d: d["markers"].append(dict(d["markers"][0])),
    lambda d: d["spaces"][0]["walls"][0].__setitem__("extent", [1.0, 1.0]),
    lambda d: d["spaces"][0].__setitem__("kind", "hall"),
    lambda d: d["markers"][0].__setitem__("size", 0.0),
    lambda d: d["trajectory"].__setitem__(1, dict(d["trajectory"][1], t=d["trajectory"][0]["t"])),
    lambda d: d["doors"][0].__setitem__("marker_id", d["markers"][0]["marker_id"]),
    lambda d: d.__setitem__("markers", [m for m in d["markers"] if m["slot"] != 0 or m["space_id"] != 1]),
], ids=["off-wall", "duplicate-id", "empty-extent", "bad-kind", "zero-size", "time-order", "door-role",
        "missing-wall"])
def test_invalid_scene(edit):
    with pytest.raises(InvalidScene):
        SceneSpec.from_dict(_edited(edit))


@pytest.mark.parametrize("text", ["nope", "[]", '{"format": "msgraph-scene", "version": 1}'])
def test_scene_parse_error(text):
    with pytest.raises(ParseError):
        SceneSpec.from_json(text)


@pytest.mark.parametrize("kw", [{"odom_rot_sigma": -1.0}, {"marker_trans_sigma": float("nan")},
                                {"detection_range": 0.0}, {"detection_half_fov": 2.0}])
def test_noise_model_validation(kw):
    with pytest.raises(ConfigError):
        NoiseModel(**kw)


def test_same_seed_is_byte_identical(seq01_noisy):
    again = generate(SEQ01, NoiseModel(seed=4))
    assert again.to_json() == seq01_noisy.to_json()
    assert generate(SEQ01, NoiseModel(seed=5)).to_json() != seq01_noisy.to_json()


def test_dataset_json_roundtrip(seq01_noisy):
    text = seq01_noisy.to_json()
    back = SimDataset.from_json(text)
    assert back.to_json() == text


def test_zero_noise_invariant(seq01_clean):
    ds = seq01_clean
    chained = chain_odometry(ds.ground_truth[0], ds.odometry)
    assert max(pose_distance(a, b) for a, b in zip(chained, ds.ground_truth)) < 1e-9
    for d in ds.detections:
        exact = compose(inverse(ds.ground_truth[d.step]), SEQ01.marker(d.marker_id).pose)
        np.testing.assert_array_equal(d.local_pose.R, exact.R)
        np.testing.assert_array_equal(d.local_pose.t, exact.t)
        if d.nearby_points is not None:
            world = ds.ground_truth[d.step].transform(d.nearby_points)
            wall = SEQ01.host_wall(SEQ01.marker(d.marker_id)).plane()
            assert np.abs(wall.signed_distance(world)).max() < 1e-12


def test_visibility_brute_force(seq01_noisy):
    ds = seq01_noisy
    noise = ds.noise
    emitted = {(d.step, d.marker_id) for d in ds.detections}
    expected = {(s, m.marker_id) for s, cam in enumerate(ds.ground_truth) for m in SEQ01.markers
                if visible(cam, m.pose, noise)}
    assert emitted == expected
    for s, mid in emitted:
        cam, mk = ds.ground_truth[s], SEQ01.marker(mid).pose
        ray = mk.t - cam.t
        assert np.linalg.norm(ray) <= noise.detection_range
        assert mk.R[:, 2] @ ray < 0          # facing the camera
        assert cam.R[:, 2] @ ray > 0         # never behind the camera


def test_detection_requires_facing():
    cam = Pose(np.eye(3), (0, 0, 0))           # looking along +z
    toward = Pose(np.diag([1.0, -1.0, -1.0]), (0, 0, 2))
    away = Pose(np.eye(3), (0, 0, 2))
    behind = Pose(np.eye(3), (0, 0, -2))
    noise = NoiseModel()
    assert visible(cam, toward, noise)
    assert not visible(cam, away, noise)
    assert not visible(cam, behind, noise)
    assert not visible(cam, Pose(toward.R, (0, 0, 6)), noise)
    assert not visible(cam, Pose(toward.R, (2.1, 0, 2)), noise)


def test_trajectory_sampling(seq01_clean):
    ds = seq01_clean
    assert np.all(np.diff(ds.timestamps) > 0)
    steps = [np.linalg.norm(b.t - a.t) for a, b in zip(ds.ground_truth, ds.ground_truth[1:])]
    assert max(steps) <= 0.1 + 1e-9
    turns = [math.acos(np.clip((np.trace(a.R.T @ b.R) - 1) / 2, -1, 1))
             for a, b in zip(ds.ground_truth, ds.ground_truth[1:])]
    assert max(turns) <= math.radians(15) + 1e-9
    # camera optical axis stays horizontal, heading along the motion
    for a, b in zip(ds.ground_truth, ds.ground_truth[1:]):
        d = b.t - a.t
        if np.linalg.norm(d) > 1e-9:
            assert a.R[:, 2] @ d / np.linalg.norm(d) == pytest.approx(1.0, abs=1e-9) or \
                b.R[:, 2] @ d / np.linalg.norm(d) == pytest.approx(1.0, abs=1e-9)


def test_events_order(seq01_noisy):
    evs = list(seq01_noisy.events())
    assert sum(e.kind == "odometry" for e in evs) == len(seq01_noisy) - 1
    assert sum(e.kind == "detection" for e in evs) == len(seq01_noisy.detections)
    step = 0
    for e in evs:
        if e.kind == "odometry":
            assert e.step == step + 1
            step = e.step
        else:
            assert e.detection.step == step


def test_noise_affects_streams(seq01_noisy, seq01_clean):
    diffs = [pose_distance(a, b) for a, b in zip(seq01_noisy.odometry, seq01_clean.odometry)]
    assert 0 < np.mean(diffs) < 0.1
