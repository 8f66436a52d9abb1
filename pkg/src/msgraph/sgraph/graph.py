"""Typed node/factor container for the situational graph."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..errors import BadInformationMatrix, KindMismatch, ParseError, UnknownNode
from ..geometry import Pose, SphericalPlane

FORMAT_VERSION = 1


class NodeKind(str, Enum):
    KEYFRAME = "keyframe"
    MARKER = "marker"
    WALL = "wall"
    DOORWAY = "doorway"
    ROOM = "room"
    CORRIDOR = "corridor"


class FactorKind(str, Enum):
    ODOMETRY = "odometry"
    MARKER_OBS = "marker_obs"
    WALL_MARKER = "wall_marker"
    CORRIDOR = "corridor"
    ROOM = "room"
    DOORWAY_ROOM = "doorway_room"


# keyframes, then markers, then walls/doorways, then rooms/corridors
LAYER = {
    NodeKind.KEYFRAME: 1.0,
    NodeKind.MARKER: 1.5,
    NodeKind.WALL: 2.0,
    NodeKind.DOORWAY: 2.0,
    NodeKind.ROOM: 3.0,
    NodeKind.CORRIDOR: 3.0,
}

TANGENT_DIM = {
    NodeKind.KEYFRAME: 6,
    NodeKind.MARKER: 6,
    NodeKind.WALL: 3,
    NodeKind.DOORWAY: 3,
    NodeKind.ROOM: 3,
    NodeKind.CORRIDOR: 3,
}

_SPACE = (NodeKind.ROOM, NodeKind.CORRIDOR)

SIGNATURE = {
    FactorKind.ODOMETRY: ((NodeKind.KEYFRAME,), (NodeKind.KEYFRAME,)),
    FactorKind.MARKER_OBS: ((NodeKind.KEYFRAME,), (NodeKind.MARKER,)),
    FactorKind.WALL_MARKER: ((NodeKind.WALL,), (NodeKind.MARKER,)),
    FactorKind.CORRIDOR: ((NodeKind.CORRIDOR,), (NodeKind.WALL,), (NodeKind.WALL,)),
    FactorKind.ROOM: ((NodeKind.ROOM,),) + ((NodeKind.WALL,),) * 4,
    FactorKind.DOORWAY_ROOM: ((NodeKind.DOORWAY,), _SPACE),
}

RESIDUAL_DIM = {
    FactorKind.ODOMETRY: 6,
    FactorKind.MARKER_OBS: 6,
    FactorKind.WALL_MARKER: 3,
    FactorKind.CORRIDOR: 3,
    FactorKind.ROOM: 3,
    FactorKind.DOORWAY_ROOM: 3,
}

_POSE_NODES = (NodeKind.KEYFRAME, NodeKind.MARKER, NodeKind.DOORWAY)
_POSE_MEAS = (FactorKind.ODOMETRY, FactorKind.MARKER_OBS)
_VEC_MEAS = (FactorKind.CORRIDOR, FactorKind.DOORWAY_ROOM)


@dataclass
class Node:
    kind: NodeKind
    value: object
    fixed: bool = False
    marker_id: int | None = None
    size: float | None = None
    axis: str | None = None


@dataclass
class Factor:
    kind: FactorKind
    nodes: tuple
    measurement: object
    information: np.ndarray


def _as_vec3(v):
    return np.array(v, dtype=np.float64).reshape(3)


def check_information(info, dim: int) -> np.ndarray:
    L = np.array(info, dtype=np.float64)
    if L.shape != (dim, dim):
        raise BadInformationMatrix(f"expected {dim}x{dim} information, got shape {L.shape}")
    if not np.isfinite(L).all():
        raise BadInformationMatrix("information matrix has non-finite entries")
    scale = max(1.0, float(np.abs(L).max()))
    if float(np.abs(L - L.T).max()) > 1e-12 * scale:
        raise BadInformationMatrix("information matrix is not symmetric")
    try:
        np.linalg.cholesky(L)
    except np.linalg.LinAlgError:
        raise BadInformationMatrix("information matrix is not positive definite") from None
    return L


@dataclass
class SituationalGraph:
    nodes: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict)
    _next_node: int = 0
    _next_factor: int = 0
    _adjacency: dict = field(default_factory=dict)
    _marker_ids: dict = field(default_factory=dict)

    # -- construction -----------------------------------------------------

    def add_node(self, node: Node) -> int:
        node = self._validated_node(node)
        nid = self._next_node
        self._next_node += 1
        self.nodes[nid] = node
        self._adjacency[nid] = set()
        if node.kind is NodeKind.MARKER:
            self._marker_ids[node.marker_id] = nid
        return nid

    def _validated_node(self, node: Node) -> Node:
        kind = NodeKind(node.kind)
        value = node.value
        if kind in _POSE_NODES:
            if not isinstance(value, Pose):
                raise KindMismatch(f"{kind.value} node needs a Pose value")
        elif kind is NodeKind.WALL:
            if not isinstance(value, SphericalPlane):
                raise KindMismatch("wall node needs a SphericalPlane value")
            if not -math.pi / 2 < value.elevation < math.pi / 2:
                raise KindMismatch(f"wall elevation {value.elevation} outside (-pi/2, pi/2)")
        else:
            value = _as_vec3(value)
        if kind is NodeKind.MARKER:
            if node.marker_id is None or node.size is None or not node.size > 0:
                raise KindMismatch("marker node needs an id and a positive size")
            if node.marker_id in self._marker_ids:
                raise KindMismatch(f"marker id {node.marker_id} already has a node")
        if kind is NodeKind.CORRIDOR and node.axis not in ("x", "y"):
            raise KindMismatch(f"corridor axis must be 'x' or 'y', got {node.axis!r}")
        return Node(kind, value, bool(node.fixed), node.marker_id,
                    None if node.size is None else float(node.size), node.axis)

    def add_factor(self, factor: Factor) -> int:
        kind = FactorKind(factor.kind)
        ends = tuple(int(n) for n in factor.nodes)
        sig = SIGNATURE[kind]
        for n in ends:
            if n not in self.nodes:
                raise UnknownNode(f"node {n} does not exist")
        if len(ends) != len(sig):
            raise KindMismatch(f"{kind.value} factor takes {len(sig)} nodes, got {len(ends)}")
        for n, allowed in zip(ends, sig):
            if self.nodes[n].kind not in allowed:
                raise KindMismatch(
                    f"{kind.value} factor cannot attach {self.nodes[n].kind.value} node {n}")
        if len(set(ends)) != len(ends):
            raise KindMismatch(f"{kind.value} factor connects a node to itself")
        info = check_information(factor.information, RESIDUAL_DIM[kind])
        meas = factor.measurement
        if kind in _POSE_MEAS:
            if not isinstance(meas, Pose):
                raise KindMismatch(f"{kind.value} factor needs a Pose measurement")
        elif kind in _VEC_MEAS:
            meas = _as_vec3(meas)
        else:
            meas = None
        fid = self._next_factor
        self._next_factor += 1
        self.factors[fid] = Factor(kind, ends, meas, info)
        for n in ends:
            self._adjacency[n].add(fid)
        return fid

    def remove_factor(self, fid: int) -> None:
        f = self.factors.pop(fid)
        for n in f.nodes:
            self._adjacency[n].discard(fid)

    def remove_node(self, nid: int) -> None:
        if nid not in self.nodes:
            raise UnknownNode(f"node {nid} does not exist")
        for fid in sorted(self._adjacency[nid]):
            self.remove_factor(fid)
        node = self.nodes.pop(nid)
        del self._adjacency[nid]
        if node.kind is NodeKind.MARKER:
            del self._marker_ids[node.marker_id]

    def set_value(self, nid: int, value) -> None:
        node = self.nodes[nid]
        self.nodes[nid] = self._validated_replacement(node, value)

    def _validated_replacement(self, node: Node, value) -> Node:
        marker_ids = self._marker_ids
        self._marker_ids = {}
        try:
            return self._validated_node(Node(node.kind, value, node.fixed, node.marker_id,
                                             node.size, node.axis))
        finally:
            self._marker_ids = marker_ids

    # -- queries ----------------------------------------------------------

    def node(self, nid: int) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise UnknownNode(f"node {nid} does not exist") from None

    def marker_node(self, marker_id: int):
        return self._marker_ids.get(marker_id)

    def factors_of(self, nid: int) -> list:
        return sorted(self._adjacency[nid])

    def nodes_of_kind(self, kind: NodeKind) -> list:
        return [n for n, v in self.nodes.items() if v.kind is kind]

    def factors_of_kind(self, kind: FactorKind) -> list:
        return [f for f, v in self.factors.items() if v.kind is kind]

    def layer(self, level: float) -> list:
        return [n for n, v in self.nodes.items() if LAYER[v.kind] == level]

    def fixed_keyframes(self) -> list:
        return [n for n, v in self.nodes.items() if v.kind is NodeKind.KEYFRAME and v.fixed]

    def counts(self) -> dict:
        out = {k.value: 0 for k in NodeKind}
        for v in self.nodes.values():
            out[v.kind.value] += 1
        for k in FactorKind:
            out["f:" + k.value] = 0
        for f in self.factors.values():
            out["f:" + f.kind.value] += 1
        return out

    def check_invariants(self) -> None:
        """Raise if any structural invariant is violated."""
        for fid, f in self.factors.items():
            sig = SIGNATURE[f.kind]
            if len(f.nodes) != len(sig):
                raise KindMismatch(f"factor {fid} has wrong arity")
            for n, allowed in zip(f.nodes, sig):
                if n not in self.nodes:
                    raise UnknownNode(f"factor {fid} references missing node {n}")
                if self.nodes[n].kind not in allowed:
                    raise KindMismatch(f"factor {fid} violates the layer signature")
                if fid not in self._adjacency[n]:
                    raise UnknownNode(f"adjacency of node {n} misses factor {fid}")
        seen = {}
        for nid, v in self.nodes.items():
            if v.kind is NodeKind.MARKER:
                if v.marker_id in seen:
                    raise KindMismatch(f"marker id {v.marker_id} used twice")
                seen[v.marker_id] = nid
        if seen != self._marker_ids:
            raise KindMismatch("marker id index out of sync")

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "msgraph-graph",
            "version": FORMAT_VERSION,
            "next_node_id": self._next_node,
            "next_factor_id": self._next_factor,
            "nodes": [_node_record(nid, self.nodes[nid]) for nid in sorted(self.nodes)],
            "factors": [_factor_record(fid, self.factors[fid]) for fid in sorted(self.factors)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> SituationalGraph:
        if not isinstance(doc, dict) or doc.get("format") != "msgraph-graph":
            raise ParseError("not a graph document")
        if doc.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported graph version {doc.get('version')!r}")
        g = cls()
        try:
            for rec in doc["nodes"]:
                nid = int(rec["id"])
                g._next_node = nid
                got = g.add_node(_node_from_record(rec))
                assert got == nid
            g._next_node = int(doc["next_node_id"])
            for rec in doc["factors"]:
                g._next_factor = int(rec["id"])
                g.add_factor(_factor_from_record(rec))
            g._next_factor = int(doc["next_factor_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed graph document: {exc}") from exc
        return g

    @classmethod
    def from_json(cls, text: str) -> SituationalGraph:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"graph file is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def pose_to_record(p: Pose) -> dict:
    return {"R": [float(x) for x in p.R.ravel()], "t": [float(x) for x in p.t]}


def pose_from_record(rec) -> Pose:
    return Pose(np.array(rec["R"], dtype=np.float64).reshape(3, 3), rec["t"])


def _value_record(kind: NodeKind, value):
    if kind in _POSE_NODES:
        return pose_to_record(value)
    if kind is NodeKind.WALL:
        return {"azimuth": value.azimuth, "elevation": value.elevation, "distance": value.distance}
    return [float(x) for x in value]


def _node_record(nid: int, n: Node) -> dict:
    rec = {"id": nid, "kind": n.kind.value, "fixed": n.fixed, "value": _value_record(n.kind, n.value)}
    if n.marker_id is not None:
        rec["marker_id"] = n.marker_id
    if n.size is not None:
        rec["size"] = n.size
    if n.axis is not None:
        rec["axis"] = n.axis
    return rec


def _node_from_record(rec) -> Node:
    kind = NodeKind(rec["kind"])
    v = rec["value"]
    if kind in _POSE_NODES:
        value = pose_from_record(v)
    elif kind is NodeKind.WALL:
        value = SphericalPlane(float(v["azimuth"]), float(v["elevation"]), float(v["distance"]))
    else:
        value = np.array(v, dtype=np.float64)
    return Node(kind, value, bool(rec["fixed"]), rec.get("marker_id"), rec.get("size"), rec.get("axis"))


def _factor_record(fid: int, f: Factor) -> dict:
    if isinstance(f.measurement, Pose):
        meas = pose_to_record(f.measurement)
    elif f.measurement is None:
        meas = None
    else:
        meas = [float(x) for x in f.measurement]
    return {"id": fid, "kind": f.kind.value, "nodes": list(f.nodes), "measurement": meas,
            "information": [[float(x) for x in row] for row in f.information]}


def _factor_from_record(rec) -> Factor:
    kind = FactorKind(rec["kind"])
    m = rec["measurement"]
    if kind in _POSE_MEAS:
        meas = pose_from_record(m)
    elif m is None:
        meas = None
    else:
        meas = np.array(m, dtype=np.float64)
    return Factor(kind, tuple(rec["nodes"]), meas, np.array(rec["information"], dtype=np.float64))
