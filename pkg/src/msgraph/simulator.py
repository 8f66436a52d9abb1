"""Synthetic indoor scenes and noisy odometry/marker-detection streams.

Conventions
-----------
* World frame: z up. Walls are vertical and axis aligned.
* Camera frame: z forward along the direction of motion, y down, x right.
* Marker frame: z is the wall normal pointing into the space the marker
  faces, y is world up.
* Every trajectory step is a keyframe; ``odometry[i]`` is the measured
  relative pose from step ``i`` to step ``i + 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _lie_np
from .errors import ConfigError, InvalidScene, InvalidTopology, ParseError, UnknownTemplate
from .geometry import Plane, Pose, compose, exp, inverse
from .semantics import DictEntry, MarkerObservation, SemanticDictionary
from .sgraph.graph import pose_from_record, pose_to_record

SCENE_FORMAT = "msgraph-scene"
DATASET_FORMAT = "msgraph-dataset"
FORMAT_VERSION = 1

MARKER_SIZE = 0.08
STEPS_PER_METER = 10
MAX_TURN_STEP = math.radians(15.0)
NEARBY_POINTS = 16
NEARBY_RADIUS = 0.5

TEMPLATES = ("seq01", "seq02", "seq03", "seq04", "seq05", "seq06")


# ---------------------------------------------------------------------------
# scene description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WallSpec:
    slot: int
    axis: str            # normal axis, "x" or "y"
    offset: float        # wall lies at axis-coordinate == offset
    inward: int          # +1 / -1: sign of the normal pointing into the space
    extent: tuple        # (lo, hi) along the other horizontal axis
    height: tuple = (0.0, 2.5)

    def normal(self) -> np.ndarray:
        n = np.zeros(3)
        n["xy".index(self.axis)] = float(self.inward)
        return n

    def plane(self) -> Plane:
        """Plane with its normal pointing into the space."""
        return Plane(self.normal(), -self.inward * self.offset)

    def point(self, along: float, z: float) -> np.ndarray:
        return np.array([self.offset, along, z]) if self.axis == "x" else np.array([along, self.offset, z])


@dataclass(frozen=True)
class SpaceSpec:
    space_id: int
    kind: str            # "room" | "corridor" | "area" (unlabeled)
    walls: tuple
    name: str = ""

    def wall(self, slot: int) -> WallSpec:
        for w in self.walls:
            if w.slot == slot:
                return w
        raise InvalidScene(f"space {self.space_id} has no wall slot {slot}")


@dataclass(frozen=True, eq=False)
class MarkerSpec:
    marker_id: int
    pose: Pose
    role: str            # "wall" | "doorway" | "landmark"
    space_id: int
    slot: int            # host wall
    size: float = MARKER_SIZE


@dataclass(frozen=True, eq=False)
class DoorSpec:
    marker_id: int
    pose: Pose           # door-frame center; x along the opening, z through it


@dataclass(frozen=True)
class Waypoint:
    t: float
    position: tuple


@dataclass(frozen=True, eq=False)
class SceneSpec:
    name: str
    spaces: tuple
    markers: tuple
    doors: tuple
    trajectory: tuple

    def space(self, space_id: int) -> SpaceSpec:
        for s in self.spaces:
            if s.space_id == space_id:
                return s
        raise InvalidScene(f"unknown space {space_id}")

    def marker(self, marker_id: int) -> MarkerSpec:
        for m in self.markers:
            if m.marker_id == marker_id:
                return m
        raise KeyError(marker_id)

    def host_wall(self, m: MarkerSpec) -> WallSpec:
        return self.space(m.space_id).wall(m.slot)

    def dictionary(self) -> SemanticDictionary:
        return dictionary_from_scene(self.to_dict())

    def space_center(self, space_id: int) -> np.ndarray:
        """Ground-truth center as the semantic layer defines it."""
        from .sgraph.factors import corridor_center, room_center
        s = self.space(space_id)
        labeled = sorted({m.slot for m in self.markers if m.space_id == space_id and m.role == "wall"})
        planes = {w.slot: w.plane() for w in s.walls}
        if s.kind == "room":
            xs = [k for k in labeled if s.wall(k).axis == "x"]
            ys = [k for k in labeled if s.wall(k).axis == "y"]
            return room_center(planes[xs[0]], planes[xs[1]], planes[ys[0]], planes[ys[1]])
        first = min((m for m in self.markers if m.space_id == space_id and m.role == "wall"),
                    key=lambda m: m.marker_id)
        return corridor_center(planes[labeled[0]], planes[labeled[1]], first.pose.t)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": SCENE_FORMAT,
            "version": FORMAT_VERSION,
            "name": self.name,
            "spaces": [{"space_id": s.space_id, "kind": s.kind, "name": s.name,
                        "walls": [{"slot": w.slot, "axis": w.axis, "offset": w.offset, "inward": w.inward,
                                   "extent": list(w.extent), "height": list(w.height)} for w in s.walls]}
                       for s in self.spaces],
            "markers": [{"marker_id": m.marker_id, "role": m.role, "space_id": m.space_id, "slot": m.slot,
                         "size": m.size, "pose": pose_to_record(m.pose)} for m in self.markers],
            "doors": [{"marker_id": d.marker_id, "pose": pose_to_record(d.pose)} for d in self.doors],
            "trajectory": [{"t": w.t, "position": list(w.position)} for w in self.trajectory],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> SceneSpec:
        if not isinstance(doc, dict) or doc.get("format") != SCENE_FORMAT or doc.get("version") != FORMAT_VERSION:
            raise ParseError("not a version-1 scene document")
        try:
            spaces = tuple(
                SpaceSpec(int(s["space_id"]), str(s["kind"]),
                          tuple(WallSpec(int(w["slot"]), str(w["axis"]), float(w["offset"]), int(w["inward"]),
                                         tuple(float(x) for x in w["extent"]),
                                         tuple(float(x) for x in w["height"])) for w in s["walls"]),
                          str(s.get("name", "")))
                for s in doc["spaces"])
            markers = tuple(MarkerSpec(int(m["marker_id"]), pose_from_record(m["pose"]), str(m["role"]),
                                       int(m["space_id"]), int(m["slot"]), float(m["size"]))
                            for m in doc["markers"])
            doors = tuple(DoorSpec(int(d["marker_id"]), pose_from_record(d["pose"])) for d in doc["doors"])
            traj = tuple(Waypoint(float(w["t"]), tuple(float(x) for x in w["position"]))
                         for w in doc["trajectory"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed scene document: {exc}") from exc
        scene = cls(str(doc.get("name", "")), spaces, markers, doors, traj)
        validate_scene(scene)
        return scene

    @classmethod
    def from_json(cls, text: str) -> SceneSpec:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"scene is not valid JSON: {exc}") from exc


def dictionary_from_scene(doc: dict) -> SemanticDictionary:
    """Derive the id-only dictionary from a scene document.

    Only marker roles and wall slots are read, so stripping every pose from
    the document leaves the result unchanged.
    """
    axes = {(s["space_id"], w["slot"]): w["axis"] for s in doc["spaces"] for w in s["walls"]}
    entries = []
    for m in doc["markers"]:
        if m["role"] == "wall":
            entries.append(DictEntry(m["marker_id"], "wall", m["space_id"],
                                     axes[(m["space_id"], m["slot"])], m["slot"]))
        elif m["role"] == "doorway":
            entries.append(DictEntry(m["marker_id"], "doorway", m["space_id"], "none"))
    return SemanticDictionary(entries)


def validate_scene(scene: SceneSpec) -> None:
    """Raise InvalidScene when the scene breaks a structural invariant."""
    ids = [s.space_id for s in scene.spaces]
    if len(set(ids)) != len(ids):
        raise InvalidScene("duplicate space id")
    for s in scene.spaces:
        if s.kind not in ("room", "corridor", "area"):
            raise InvalidScene(f"space {s.space_id}: unknown kind {s.kind!r}")
        slots = [w.slot for w in s.walls]
        if len(set(slots)) != len(slots):
            raise InvalidScene(f"space {s.space_id}: duplicate wall slot")
        for w in s.walls:
            if w.axis not in ("x", "y") or w.inward not in (1, -1):
                raise InvalidScene(f"space {s.space_id} wall {w.slot}: bad axis or inward sign")
            if not (w.extent[1] > w.extent[0] and w.height[1] > w.height[0]):
                raise InvalidScene(f"space {s.space_id} wall {w.slot}: extents must be positive")
    mids = [m.marker_id for m in scene.markers]
    if len(set(mids)) != len(mids):
        raise InvalidScene("duplicate marker id")
    for m in scene.markers:
        if m.role not in ("wall", "doorway", "landmark"):
            raise InvalidScene(f"marker {m.marker_id}: unknown role {m.role!r}")
        if not m.size > 0:
            raise InvalidScene(f"marker {m.marker_id}: size must be positive")
        w = scene.host_wall(m)
        if abs(float(w.plane().signed_distance(m.pose.t))) > 1e-9:
            raise InvalidScene(f"marker {m.marker_id} is off its host wall")
        if abs(float(m.pose.R[:, 2] @ w.normal())) < 1.0 - 1e-9:
            raise InvalidScene(f"marker {m.marker_id} is not flush with its host wall")
    roles = {m.marker_id: m.role for m in scene.markers}
    for d in scene.doors:
        if roles.get(d.marker_id) != "doorway":
            raise InvalidScene(f"door references marker {d.marker_id}, which is not a doorway marker")
    if len(scene.trajectory) < 2:
        raise InvalidScene("trajectory needs at least 2 waypoints")
    for a, b in zip(scene.trajectory, scene.trajectory[1:]):
        if not b.t > a.t:
            raise InvalidScene("waypoint timestamps must be strictly increasing")
        if np.linalg.norm(np.subtract(b.position, a.position)) < 1e-9:
            raise InvalidScene("consecutive waypoints coincide")
    try:
        scene.dictionary()
    except (InvalidTopology, ParseError) as exc:
        raise InvalidScene(f"derived dictionary is invalid: {exc}") from exc


# ---------------------------------------------------------------------------
# template layouts
# ---------------------------------------------------------------------------

CAMERA_HEIGHT = 0.6
WALL_MARKER_Z = 1.0
DOOR_MARKER_Z = 1.5
SPEED = 0.5             # m/s, only used to stamp template waypoints


def marker_rotation(normal) -> np.ndarray:
    z = np.asarray(normal, dtype=np.float64)
    y = np.array([0.0, 0.0, 1.0])
    return np.column_stack([np.cross(y, z), y, z])


def camera_rotation(heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[s, 0.0, c], [-c, 0.0, s], [0.0, -1.0, 0.0]])


class _Builder:
    def __init__(self, name):
        self.name = name
        self.spaces = []
        self.markers = []
        self.doors = []
        self._next_id = 1

    def room(self, sid, x0, x1, y0, y1, name=""):
        walls = (WallSpec(0, "x", x0, 1, (y0, y1)), WallSpec(1, "x", x1, -1, (y0, y1)),
                 WallSpec(2, "y", y0, 1, (x0, x1)), WallSpec(3, "y", y1, -1, (x0, x1)))
        self.spaces.append(SpaceSpec(sid, "room", walls, name))

    def corridor(self, sid, x0, x1, y0, y1, name=""):
        # the two long walls carry the labels
        if x1 - x0 >= y1 - y0:
            walls = (WallSpec(0, "y", y0, 1, (x0, x1)), WallSpec(1, "y", y1, -1, (x0, x1)))
        else:
            walls = (WallSpec(0, "x", x0, 1, (y0, y1)), WallSpec(1, "x", x1, -1, (y0, y1)))
        self.spaces.append(SpaceSpec(sid, "corridor", walls, name))

    def area(self, sid, x0, x1, y0, y1, name=""):
        walls = (WallSpec(0, "x", x0, 1, (y0, y1)), WallSpec(1, "x", x1, -1, (y0, y1)),
                 WallSpec(2, "y", y0, 1, (x0, x1)), WallSpec(3, "y", y1, -1, (x0, x1)))
        self.spaces.append(SpaceSpec(sid, "area", walls, name))

    def _wall(self, sid, slot):
        return next(s for s in self.spaces if s.space_id == sid).wall(slot)

    def marker(self, sid, slot, along, role="wall", z=WALL_MARKER_Z):
        w = self._wall(sid, slot)
        mid = self._next_id
        self._next_id += 1
        self.markers.append(MarkerSpec(mid, Pose(marker_rotation(w.normal()), w.point(along, z)),
                                       role, sid, slot))
        return mid

    def door(self, sid, slot, along, marker_along):
        """Door opening centered at ``along`` with its marker beside it on the same wall."""
        mid = self.marker(sid, slot, marker_along, role="doorway", z=DOOR_MARKER_Z)
        w = self._wall(sid, slot)
        frame = Pose(marker_rotation(w.normal()), w.point(along, 1.0))
        self.doors.append(DoorSpec(mid, frame))
        return mid

    def build(self, path, start_time=0.0) -> SceneSpec:
        pts = [np.array([x, y, CAMERA_HEIGHT]) for x, y in path]
        t = start_time
        wps = [Waypoint(t, tuple(pts[0]))]
        heading = None
        for a, b in zip(pts, pts[1:]):
            d = b - a
            h = math.atan2(d[1], d[0])
            turn = 0.0 if heading is None else abs(_wrap(h - heading))
            t += float(np.linalg.norm(d)) / SPEED + turn / (math.pi / 4)
            t = round(t, 6)
            wps.append(Waypoint(t, tuple(b)))
            heading = h
        scene = SceneSpec(self.name, tuple(self.spaces), tuple(self.markers), tuple(self.doors), tuple(wps))
        validate_scene(scene)
        return scene


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _four_walls(b, sid, door_slot=None, door_along=None):
    """One marker per wall at its midpoint, shifted away from a door on that wall."""
    s = next(x for x in b.spaces if x.space_id == sid)
    for w in s.walls:
        mid = 0.5 * (w.extent[0] + w.extent[1])
        if w.slot == door_slot:
            mid = door_along - 1.2 if door_along - 1.2 > w.extent[0] + 0.3 else door_along + 1.2
        b.marker(sid, w.slot, mid)


def _seq01():
    b = _Builder("seq01")
    b.room(1, 0.0, 4.0, 0.0, 6.0, "A")
    b.room(2, 4.2, 8.2, 0.0, 6.0, "B")
    _four_walls(b, 1, door_slot=1, door_along=3.0)
    _four_walls(b, 2, door_slot=0, door_along=3.0)
    b.door(1, 1, 3.0, 3.8)
    path = [(1.0, 1.0), (3.0, 1.0), (3.0, 5.0), (1.0, 5.0), (1.0, 3.0),
            (5.2, 3.0), (7.2, 3.0), (7.2, 5.0), (5.2, 5.0), (5.2, 1.0), (7.2, 1.0), (7.2, 3.0),
            (2.0, 3.0), (2.0, 1.2), (1.2, 1.2)]
    return b.build(path)


def _seq02():
    b = _Builder("seq02")
    b.corridor(1, 0.0, 10.0, 0.0, 2.0, "C1")
    b.room(2, 10.2, 14.2, -2.0, 4.0, "R")
    b.corridor(3, 11.2, 13.2, 4.2, 14.2, "C2")
    b.marker(1, 0, 5.0)
    b.marker(1, 1, 5.0)
    _four_walls(b, 2, door_slot=0, door_along=1.0)
    b.marker(3, 0, 9.2)
    b.marker(3, 1, 9.2)
    b.door(2, 0, 1.0, 2.0)
    b.door(2, 3, 12.2, 13.3)
    path = [(1.0, 1.0), (9.5, 1.0), (11.0, 1.0), (13.4, 1.0), (13.4, -1.2), (11.0, -1.2), (11.0, 3.0),
            (12.2, 3.0), (12.2, 13.5), (12.2, 12.5), (12.2, 3.2), (11.0, 1.0), (1.0, 1.0), (2.0, 1.0)]
    return b.build(path)


def _seq03():
    b = _Builder("seq03")
    b.corridor(1, 0.0, 10.0, 0.0, 2.0, "corridor")
    rooms = {2: (0.5, 4.5, 2.2, 8.2, "N1"), 3: (5.5, 9.5, 2.2, 8.2, "N2"),
             4: (0.5, 4.5, -6.2, -0.2, "S1"), 5: (5.5, 9.5, -6.2, -0.2, "S2"),
             6: (10.2, 16.2, -1.0, 3.0, "E")}
    for sid, (x0, x1, y0, y1, name) in rooms.items():
        b.room(sid, x0, x1, y0, y1, name)
    b.marker(1, 0, 5.0)
    b.marker(1, 1, 5.0)
    doors = {2: (2, 2.5), 3: (2, 7.5), 4: (3, 2.5), 5: (3, 7.5), 6: (0, 1.0)}
    for sid, (slot, along) in doors.items():
        _four_walls(b, sid, door_slot=slot, door_along=along)
    for sid, (slot, along) in doors.items():
        b.door(sid, slot, along, along + 0.8)
    path = [(0.8, 1.0), (2.5, 1.0),
            # N1
            (2.5, 3.5), (3.8, 3.5), (3.8, 7.0), (1.2, 7.0), (1.2, 3.5), (2.5, 3.5), (2.5, 1.0),
            # S1
            (2.5, -1.5), (3.8, -1.5), (3.8, -5.0), (1.2, -5.0), (1.2, -1.5), (2.5, -1.5), (2.5, 1.0),
            # N2
            (7.5, 1.0), (7.5, 3.5), (8.8, 3.5), (8.8, 7.0), (6.2, 7.0), (6.2, 3.5), (7.5, 3.5), (7.5, 1.0),
            # S2
            (7.5, -1.5), (8.8, -1.5), (8.8, -5.0), (6.2, -5.0), (6.2, -1.5), (7.5, -1.5), (7.5, 1.0),
            # E
            (11.0, 1.0), (15.2, 1.0), (15.2, 2.3), (11.0, 2.3), (11.0, 1.0),
            (1.0, 1.0), (2.0, 1.0)]
    return b.build(path)


def _seq04():
    b = _Builder("seq04")
    b.corridor(1, 0.0, 10.0, 0.0, 2.0, "C1")
    b.area(2, 10.2, 13.2, -0.5, 2.5, "landing")
    b.corridor(3, 11.2, 13.2, 2.7, 12.7, "C2")
    b.marker(1, 0, 5.0)
    b.marker(1, 1, 5.0)
    b.marker(3, 0, 7.7)
    b.marker(3, 1, 7.7)
    b.marker(2, 1, 0.5, role="landmark")
    b.marker(2, 2, 12.2, role="landmark")
    path = [(1.0, 1.0), (9.0, 1.0), (12.2, 1.0), (12.2, 12.0), (12.2, 11.0), (12.2, 1.2),
            (1.0, 1.0), (2.0, 1.0)]
    return b.build(path)


def _seq05():
    b = _Builder("seq05")
    b.room(1, 0.0, 4.0, 0.0, 6.0, "R")
    b.corridor(2, 4.2, 14.2, 4.0, 6.0, "C1")
    b.corridor(3, 14.2, 16.2, 6.2, 16.2, "C2")
    b.corridor(4, 4.2, 14.2, 16.2, 18.2, "C3")
    b.corridor(5, 1.0, 3.0, 6.2, 16.2, "C4")
    _four_walls(b, 1, door_slot=1, door_along=5.0)
    for sid, along in ((2, 9.2), (3, 11.2), (4, 9.2), (5, 11.2)):
        b.marker(sid, 0, along)
        b.marker(sid, 1, along)
    b.door(1, 1, 5.0, 3.8)
    b.door(1, 3, 2.0, 3.2)
    path = [(1.0, 1.0), (3.0, 1.0), (3.0, 5.0),
            (15.2, 5.0), (15.2, 17.2), (2.0, 17.2), (2.0, 5.0),
            (2.0, 2.0), (1.0, 1.5), (1.0, 1.0), (2.0, 1.0)]
    return b.build(path)


def _seq06():
    b = _Builder("seq06")
    b.room(1, 0.0, 4.0, 0.0, 6.0, "R")
    b.corridor(2, 4.2, 14.2, 2.0, 4.0, "C")
    _four_walls(b, 1, door_slot=1, door_along=3.0)
    b.marker(2, 0, 9.2)
    b.marker(2, 1, 9.2)
    b.door(1, 1, 3.0, 1.8)
    path = [(1.0, 1.0), (3.0, 1.0), (3.0, 5.0), (1.0, 5.0), (1.0, 3.0),
            (13.5, 3.0), (12.5, 3.0), (2.0, 3.0), (2.0, 1.2), (1.2, 1.2)]
    return b.build(path)


_TEMPLATES = {"seq01": _seq01, "seq02": _seq02, "seq03": _seq03,
              "seq04": _seq04, "seq05": _seq05, "seq06": _seq06}


def template_scene(name: str) -> SceneSpec:
    """Built-in layouts: rooms 4 m x 6 m, corridors 2 m x 10 m, 8 cm markers."""
    try:
        return _TEMPLATES[name]()
    except KeyError:
        raise UnknownTemplate(f"unknown template {name!r}; choose from {', '.join(TEMPLATES)}") from None


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

def sample_trajectory(scene: SceneSpec):
    """Keyframe timestamps and camera poses along the waypoint path.

    Straight segments are sampled at ``STEPS_PER_METER``; a heading change at
    a waypoint is spread over in-place turning steps of at most 15 degrees.
    """
    pts = [np.asarray(w.position, dtype=np.float64) for w in scene.trajectory]
    times = [w.t for w in scene.trajectory]
    h0 = math.atan2(*(pts[1] - pts[0])[[1, 0]])
    stamps, poses = [times[0]], [Pose(camera_rotation(h0), pts[0])]
    heading = h0
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        d = b - a
        h = math.atan2(d[1], d[0])
        dh = _wrap(h - heading)
        n_turn = int(math.ceil(abs(dh) / MAX_TURN_STEP - 1e-9))
        n_move = max(1, int(math.ceil(np.linalg.norm(d) * STEPS_PER_METER - 1e-9)))
        total = n_turn + n_move
        for k in range(1, total + 1):
            ts = times[i] + (times[i + 1] - times[i]) * k / total
            if k <= n_turn:
                psi, p = heading + dh * k / n_turn, a
            else:
                psi, p = h, a + d * (k - n_turn) / n_move
            stamps.append(ts)
            poses.append(Pose(camera_rotation(psi), p))
        heading = h
    return np.array(stamps), poses


# ---------------------------------------------------------------------------
# noise and datasets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    odom_rot_sigma: float = math.radians(0.5)
    odom_trans_sigma: float = 0.01
    marker_rot_sigma: float = math.radians(0.2)
    marker_trans_sigma: float = 0.005
    detection_range: float = 5.0
    detection_half_fov: float = math.radians(45.0)
    seed: int = 0

    def __post_init__(self):
        for k in ("odom_rot_sigma", "odom_trans_sigma", "marker_rot_sigma", "marker_trans_sigma"):
            v = getattr(self, k)
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"{k} must be a finite value >= 0, got {v}")
        if not self.detection_range > 0:
            raise ConfigError("detection_range must be positive")
        if not 0 < self.detection_half_fov <= math.pi / 2:
            raise ConfigError("detection_half_fov must lie in (0, pi/2]")

    @classmethod
    def zero(cls, **kw) -> NoiseModel:
        return cls(0.0, 0.0, 0.0, 0.0, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class Detection:
    step: int
    marker_id: int
    local_pose: Pose
    size: float
    nearby_points: np.ndarray | None = None

    def observation(self, keyframe_id: int) -> MarkerObservation:
        return MarkerObservation(self.marker_id, self.local_pose, keyframe_id, self.size, self.nearby_points)


@dataclass(frozen=True)
class Event:
    kind: str                     # "odometry" | "detection"
    step: int                     # odometry: target step; detection: observing step
    odometry: Pose | None = None
    detection: Detection | None = None


@dataclass(eq=False)
class SimDataset:
    scene: SceneSpec
    noise: NoiseModel
    timestamps: np.ndarray
    ground_truth: list
    odometry: list
    detections: list
    dictionary: SemanticDictionary = field(default=None)

    def __post_init__(self):
        if self.dictionary is None:
            self.dictionary = self.scene.dictionary()

    def __len__(self):
        return len(self.ground_truth)

    def events(self):
        """Replay order: detections of step 0, then per step odometry followed by its detections."""
        by_step = {}
        for d in self.detections:
            by_step.setdefault(d.step, []).append(d)
        for step in range(len(self.ground_truth)):
            if step > 0:
                yield Event("odometry", step, odometry=self.odometry[step - 1])
            for d in by_step.get(step, ()):
                yield Event("detection", step, detection=d)

    def to_dict(self) -> dict:
        return {
            "format": DATASET_FORMAT,
            "version": FORMAT_VERSION,
            "scene": self.scene.to_dict(),
            "noise": self.noise.to_dict(),
            "timestamps": [float(t) for t in self.timestamps],
            "ground_truth": [pose_to_record(p) for p in self.ground_truth],
            "odometry": [pose_to_record(p) for p in self.odometry],
            "detections": [{"step": d.step, "marker_id": d.marker_id, "size": d.size,
                            "local_pose": pose_to_record(d.local_pose),
                            "nearby_points": None if d.nearby_points is None
                            else [[float(x) for x in p] for p in d.nearby_points]}
                           for d in self.detections],
            "dictionary": self.dictionary.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> SimDataset:
        from .semantics import load_dictionary
        if not isinstance(doc, dict) or doc.get("format") != DATASET_FORMAT or doc.get("version") != FORMAT_VERSION:
            raise ParseError("not a version-1 dataset document")
        try:
            dets = [Detection(int(d["step"]), int(d["marker_id"]), pose_from_record(d["local_pose"]),
                              float(d["size"]),
                              None if d["nearby_points"] is None else np.array(d["nearby_points"], dtype=np.float64))
                    for d in doc["detections"]]
            return cls(SceneSpec.from_dict(doc["scene"]), NoiseModel(**doc["noise"]),
                       np.array(doc["timestamps"], dtype=np.float64),
                       [pose_from_record(p) for p in doc["ground_truth"]],
                       [pose_from_record(p) for p in doc["odometry"]], dets,
                       load_dictionary(doc["dictionary"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed dataset document: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> SimDataset:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"dataset is not valid JSON: {exc}") from exc


def _tangent_noise(rng, n, rot_sigma, trans_sigma):
    xi = rng.standard_normal((n, 6))
    xi[:, :3] *= rot_sigma
    xi[:, 3:] *= trans_sigma
    return xi


def visible(camera: Pose, marker: Pose, noise: NoiseModel) -> bool:
    """Range, field-of-view and facing test for one marker from one camera pose."""
    d = marker.t - camera.t
    dist = float(np.linalg.norm(d))
    if dist == 0.0 or dist > noise.detection_range:
        return False
    cos_angle = float(camera.R[:, 2] @ d) / dist
    if cos_angle < math.cos(noise.detection_half_fov):
        return False
    return float(marker.R[:, 2] @ d) < 0.0


def _visibility(cam_R, cam_t, mk_R, mk_t, noise):
    """(steps, markers) boolean mask; same predicates as :func:`visible`."""
    d = mk_t[None, :, :] - cam_t[:, None, :]
    dist = np.linalg.norm(d, axis=-1)
    fwd = np.einsum("si,smi->sm", cam_R[:, :, 2], d)
    facing = np.einsum("mi,smi->sm", mk_R[:, :, 2], d)
    with np.errstate(invalid="ignore", divide="ignore"):
        in_fov = fwd >= math.cos(noise.detection_half_fov) * dist
    return (dist > 0) & (dist <= noise.detection_range) & in_fov & (facing < 0.0)


def generate(scene: SceneSpec, noise: NoiseModel | None = None) -> SimDataset:
    """Noisy odometry and detections along the scene trajectory.

    Noise is drawn from ``numpy.random.default_rng(noise.seed)``: first every
    odometry perturbation, then per detection (in step order, markers by id)
    the pose perturbation followed by its wall points.
    """
    noise = noise or NoiseModel()
    validate_scene(scene)
    rng = np.random.default_rng(noise.seed)
    stamps, gt = sample_trajectory(scene)
    n = len(gt)

    odo_xi = _tangent_noise(rng, n - 1, noise.odom_rot_sigma, noise.odom_trans_sigma)
    odometry = [compose(compose(inverse(gt[i]), gt[i + 1]), exp(odo_xi[i])) for i in range(n - 1)]

    markers = sorted(scene.markers, key=lambda m: m.marker_id)
    mk_R = np.array([m.pose.R for m in markers])
    mk_t = np.array([m.pose.t for m in markers])
    cam_R = np.array([p.R for p in gt])
    cam_t = np.array([p.t for p in gt])
    mask = _visibility(cam_R, cam_t, mk_R, mk_t, noise)

    detections = []
    for step, j in zip(*np.nonzero(mask)):
        m = markers[j]
        cam_inv = inverse(gt[step])
        local = compose(compose(cam_inv, m.pose),
                        exp(_tangent_noise(rng, 1, noise.marker_rot_sigma, noise.marker_trans_sigma)[0]))
        pts = None
        if m.role == "wall":
            r = NEARBY_RADIUS * np.sqrt(rng.random(NEARBY_POINTS))
            ang = 2.0 * math.pi * rng.random(NEARBY_POINTS)
            disk = np.column_stack([r * np.cos(ang), r * np.sin(ang), np.zeros(NEARBY_POINTS)])
            world = m.pose.transform(disk) + noise.marker_trans_sigma * rng.standard_normal((NEARBY_POINTS, 3))
            pts = cam_inv.transform(world)
        detections.append(Detection(int(step), m.marker_id, local, m.size, pts))
    return SimDataset(scene, noise, stamps, gt, odometry, detections)


def chain_odometry(start: Pose, odometry) -> list:
    """Dead-reckoned poses from ``start`` and relative measurements."""
    R = np.ascontiguousarray(start.R)[None]
    t = np.ascontiguousarray(start.t)[None]
    out = [start]
    for m in odometry:
        R, t = _lie_np.compose(R, t, np.ascontiguousarray(m.R)[None], np.ascontiguousarray(m.t)[None])
        out.append(Pose(R[0], t[0]))
    return out
