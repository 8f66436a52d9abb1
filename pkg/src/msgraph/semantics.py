"""Marker classification, wall/doorway creation and room/corridor formation.

The semantic dictionary is an id-only lookup: each entry says whether a marker
sits on a wall of some space (and on which wall slot) or marks a doorway into
it. Observations are folded into a :class:`SituationalGraph` one at a time by
:func:`ingest`, which keeps the association state in an :class:`EntityLedger`.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    GeometryError,
    InvalidTopology,
    ParseError,
    UnknownKeyframe,
)
from .geometry import Pose, compose, plane_from_marker, plane_refine, plane_to_spherical, spherical_to_plane
from .sgraph import factors as F
from .sgraph.config import InformationConfig
from .sgraph.graph import Factor, FactorKind, Node, NodeKind, SituationalGraph

log = logging.getLogger(__name__)

DICT_FORMAT = "msgraph-dictionary"
DICT_VERSION = 1
LAYERS = ("markers", "walls", "spaces", "doorways")
_REQUIRES = {"walls": "markers", "spaces": "walls", "doorways": "spaces"}


# ---------------------------------------------------------------------------
# dictionary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DictEntry:
    marker_id: int
    entity_kind: str            # "wall" | "doorway"
    space_id: int
    wall_axis_hint: str = "none"  # normal axis of the host wall: "x" | "y" | "none"
    slot: int | None = None     # wall slot within the space; markers sharing a slot share a wall

    def to_dict(self) -> dict:
        d = {"marker_id": self.marker_id, "entity_kind": self.entity_kind,
             "space_id": self.space_id, "wall_axis_hint": self.wall_axis_hint}
        if self.slot is not None:
            d["slot"] = self.slot
        return d


@dataclass(frozen=True)
class SpaceLayout:
    space_id: int
    kind: str                   # "room" | "corridor"
    axis: str | None            # corridor wall-normal axis
    x_slots: tuple
    y_slots: tuple

    @property
    def slots(self) -> tuple:
        return self.x_slots + self.y_slots


class SemanticDictionary:
    """Validated marker-id -> entity records."""

    def __init__(self, entries):
        self.entries = {}
        for e in entries:
            if e.marker_id in self.entries:
                raise ParseError(f"duplicate marker id {e.marker_id}")
            self.entries[e.marker_id] = e
        self.spaces = _derive_spaces(self.entries)

    def get(self, marker_id: int):
        return self.entries.get(marker_id)

    def wall_slot(self, e: DictEntry) -> int:
        return e.marker_id if e.slot is None else e.slot

    def markers_of(self, space_id: int) -> list:
        return sorted(m for m, e in self.entries.items() if e.space_id == space_id)

    def __eq__(self, other):
        return isinstance(other, SemanticDictionary) and self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def to_dict(self) -> dict:
        return {"format": DICT_FORMAT, "version": DICT_VERSION,
                "entries": [self.entries[m].to_dict() for m in sorted(self.entries)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _derive_spaces(entries: dict) -> dict:
    walls = {}
    for e in entries.values():
        if e.entity_kind != "wall":
            continue
        slot = e.marker_id if e.slot is None else e.slot
        per_space = walls.setdefault(e.space_id, {})
        if e.wall_axis_hint not in ("x", "y"):
            raise InvalidTopology(f"wall marker {e.marker_id} needs an x or y axis hint")
        if per_space.setdefault(slot, e.wall_axis_hint) != e.wall_axis_hint:
            raise InvalidTopology(f"space {e.space_id} slot {slot} has conflicting axis hints")
    spaces = {}
    for sid, slots in sorted(walls.items()):
        xs = tuple(sorted(s for s, a in slots.items() if a == "x"))
        ys = tuple(sorted(s for s, a in slots.items() if a == "y"))
        if len(slots) == 2 and (len(xs) == 2 or len(ys) == 2):
            spaces[sid] = SpaceLayout(sid, "corridor", "x" if xs else "y", xs, ys)
        elif len(xs) == 2 and len(ys) == 2:
            spaces[sid] = SpaceLayout(sid, "room", None, xs, ys)
        else:
            raise InvalidTopology(
                f"space {sid} has {len(xs)} x-walls and {len(ys)} y-walls; "
                "need 2 parallel walls (corridor) or 2+2 (room)")
    for e in entries.values():
        if e.entity_kind == "doorway" and e.space_id not in spaces:
            raise InvalidTopology(f"doorway marker {e.marker_id} references unknown space {e.space_id}")
    return spaces


def _entry_from_record(rec) -> DictEntry:
    try:
        kind = str(rec["entity_kind"])
        if kind not in ("wall", "doorway"):
            raise ParseError(f"entity_kind must be 'wall' or 'doorway', got {kind!r}")
        hint = rec.get("wall_axis_hint", "none")
        hint = "none" if hint is None else str(hint)
        if hint not in ("x", "y", "none"):
            raise ParseError(f"wall_axis_hint must be x, y or none, got {hint!r}")
        slot = rec.get("slot")
        return DictEntry(int(rec["marker_id"]), kind, int(rec["space_id"]), hint,
                         None if slot is None else int(slot))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad dictionary entry {rec!r}: {exc}") from exc


def load_dictionary(source) -> SemanticDictionary:
    """Build a dictionary from a mapping, a JSON string or a path to a JSON file."""
    if isinstance(source, SemanticDictionary):
        return source
    if isinstance(source, (str, os.PathLike)):
        text = str(source)
        if not text.lstrip().startswith("{"):
            try:
                with open(source) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ParseError(f"cannot read dictionary {source}: {exc}") from exc
        try:
            source = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"dictionary is not valid JSON: {exc}") from exc
    if isinstance(source, dict):
        if source.get("format", DICT_FORMAT) != DICT_FORMAT:
            raise ParseError(f"not a dictionary document: {source.get('format')!r}")
        if source.get("version", DICT_VERSION) != DICT_VERSION:
            raise ParseError(f"unsupported dictionary version {source.get('version')!r}")
        records = source.get("entries")
    else:
        records = source
    if not isinstance(records, list):
        raise ParseError("dictionary needs a list of entries")
    return SemanticDictionary([_entry_from_record(r) for r in records])


# ---------------------------------------------------------------------------
# observations, config and ledger
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarkerObservation:
    marker_id: int
    local_pose: Pose
    keyframe_id: int
    size: float = 0.08
    nearby_points: np.ndarray | None = None   # camera frame, (n, 3)

    def __post_init__(self):
        if not self.size > 0:
            raise ValueError("marker size must be positive")


@dataclass(frozen=True)
class SemanticConfig:
    layers: frozenset = frozenset(LAYERS)
    parallel_tol: float = F.PARALLEL_TOL
    gap_min: float = F.GAP_MIN
    refine_planes: bool = True
    information: InformationConfig = field(default_factory=InformationConfig)

    def __post_init__(self):
        layers = frozenset(self.layers)
        object.__setattr__(self, "layers", layers)
        unknown = layers - set(LAYERS)
        if unknown:
            raise ConfigError(f"unknown layers: {sorted(unknown)}")
        for layer, needs in _REQUIRES.items():
            if layer in layers and needs not in layers:
                raise ConfigError(f"layer '{layer}' requires '{needs}'")


@dataclass(frozen=True)
class Mutation:
    action: str     # "add_node" | "add_factor"
    kind: str
    id: int


@dataclass
class EntityLedger:
    markers: dict = field(default_factory=dict)     # marker id -> Marker node
    walls: dict = field(default_factory=dict)       # (space, slot) -> Wall node
    spaces: dict = field(default_factory=dict)      # space id -> Room/Corridor node
    doorways: dict = field(default_factory=dict)    # marker id -> Doorway node
    linked_doorways: set = field(default_factory=set)
    seen: set = field(default_factory=set)          # (marker id, keyframe node)
    # latest global marker center per space, consumed by corridor factors
    pending_centers: dict = field(default_factory=dict)

    def check(self, graph: SituationalGraph) -> None:
        """Raise AssertionError when an entry does not resolve to a live node of the right kind."""
        tables = ((self.markers, NodeKind.MARKER), (self.walls, NodeKind.WALL),
                  (self.doorways, NodeKind.DOORWAY))
        for table, kind in tables:
            assert len(set(table.values())) == len(table), f"{kind.value} map is not injective"
            for key, nid in table.items():
                assert nid in graph.nodes and graph.nodes[nid].kind is kind, (key, nid)
        assert len(set(self.spaces.values())) == len(self.spaces)
        for sid, nid in self.spaces.items():
            assert nid in graph.nodes and graph.nodes[nid].kind in (NodeKind.ROOM, NodeKind.CORRIDOR), sid
        for mid, nid in self.markers.items():
            assert graph.nodes[nid].marker_id == mid


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _add_node(graph, out, node):
    nid = graph.add_node(node)
    out.append(Mutation("add_node", node.kind.value, nid))
    return nid


def _add_factor(graph, out, cfg, kind, nodes, meas=None):
    fid = graph.add_factor(Factor(kind, nodes, meas, cfg.information.matrix(kind)))
    out.append(Mutation("add_factor", kind.value, fid))
    return fid


def ingest(obs: MarkerObservation, dictionary: SemanticDictionary, ledger: EntityLedger,
           graph: SituationalGraph, cfg: SemanticConfig | None = None) -> list:
    """Fold one marker detection into the graph; returns the mutations applied."""
    cfg = cfg or SemanticConfig()
    kf = graph.nodes.get(obs.keyframe_id)
    if kf is None or kf.kind is not NodeKind.KEYFRAME:
        raise UnknownKeyframe(f"keyframe {obs.keyframe_id} is not in the graph")
    out = []
    if "markers" not in cfg.layers:
        return out
    key = (obs.marker_id, obs.keyframe_id)
    if key in ledger.seen:
        return out

    K = kf.value
    m_global = compose(K, obs.local_pose)
    entry = dictionary.get(obs.marker_id)

    # build the wall plane first so a geometry error leaves the graph untouched
    wall_key, sph = None, None
    if entry is not None and entry.entity_kind == "wall" and "walls" in cfg.layers:
        wall_key = (entry.space_id, dictionary.wall_slot(entry))
        if wall_key not in ledger.walls:
            plane = plane_from_marker(m_global, observer=K.t)
            if cfg.refine_planes and obs.nearby_points is not None and len(obs.nearby_points) >= 3:
                plane = plane_refine(K.transform(obs.nearby_points), plane)
            sph = plane_to_spherical(plane)

    ledger.seen.add(key)
    mnode = ledger.markers.get(obs.marker_id)
    if mnode is None:
        mnode = _add_node(graph, out, Node(NodeKind.MARKER, m_global, marker_id=obs.marker_id,
                                           size=float(obs.size)))
        ledger.markers[obs.marker_id] = mnode
    _add_factor(graph, out, cfg, FactorKind.MARKER_OBS, (obs.keyframe_id, mnode), obs.local_pose)

    if entry is None:
        return out

    if wall_key is not None:
        wnode = ledger.walls.get(wall_key)
        if wnode is None:
            wnode = _add_node(graph, out, Node(NodeKind.WALL, sph))
            ledger.walls[wall_key] = wnode
        _add_factor(graph, out, cfg, FactorKind.WALL_MARKER, (wnode, mnode))
        if "spaces" in cfg.layers:
            layout = dictionary.spaces[entry.space_id]
            if layout.kind == "corridor":
                ledger.pending_centers[entry.space_id] = m_global.t.copy()
            try_form_space(entry.space_id, dictionary, ledger, graph, cfg, _out=out)

    elif entry.entity_kind == "doorway" and "doorways" in cfg.layers:
        if obs.marker_id not in ledger.doorways:
            ledger.doorways[obs.marker_id] = _add_node(graph, out, Node(NodeKind.DOORWAY, m_global))
        _link_doorways(entry.space_id, dictionary, ledger, graph, cfg, out)
    return out


def _link_doorways(space_id, dictionary, ledger, graph, cfg, out):
    snode = ledger.spaces.get(space_id)
    if snode is None:
        return
    center = graph.nodes[snode].value
    for mid in dictionary.markers_of(space_id):
        dnode = ledger.doorways.get(mid)
        if dnode is None or mid in ledger.linked_doorways:
            continue
        delta = graph.nodes[dnode].value.t - center
        _add_factor(graph, out, cfg, FactorKind.DOORWAY_ROOM, (dnode, snode), delta)
        ledger.linked_doorways.add(mid)


def _wall_planes(slots, space_id, ledger, graph):
    nodes = [ledger.walls.get((space_id, s)) for s in slots]
    if any(n is None for n in nodes):
        return None, None
    return nodes, [spherical_to_plane(graph.nodes[n].value) for n in nodes]


def try_form_space(space_id: int, dictionary: SemanticDictionary, ledger: EntityLedger,
                   graph: SituationalGraph, cfg: SemanticConfig | None = None, *, _out=None) -> bool:
    """Create the room or corridor node once all of its walls are mapped.

    Once formed, a corridor gains one more factor for every new marker-center
    measurement left by :func:`ingest`; rooms are left alone.
    """
    cfg = cfg or SemanticConfig()
    out = [] if _out is None else _out
    layout = dictionary.spaces.get(space_id)
    if layout is None or "spaces" not in cfg.layers:
        return False
    tol = {"parallel_tol": cfg.parallel_tol, "gap_min": cfg.gap_min}
    snode = ledger.spaces.get(space_id)
    if snode is not None:
        if layout.kind == "corridor" and space_id in ledger.pending_centers:
            nodes, _ = _wall_planes(layout.slots, space_id, ledger, graph)
            c = ledger.pending_centers.pop(space_id)
            _add_factor(graph, out, cfg, FactorKind.CORRIDOR, (snode, *nodes), c)
        return True

    nodes, planes = _wall_planes(layout.slots, space_id, ledger, graph)
    if nodes is None:
        return False
    try:
        if layout.kind == "corridor":
            c = ledger.pending_centers.get(space_id)
            if c is None:
                return False
            center = F.corridor_center(planes[0], planes[1], c, **tol)
        else:
            center = F.room_center(*planes, **tol)
    except GeometryError as exc:
        log.info("space %d not formed: %s", space_id, exc)
        return False

    if layout.kind == "corridor":
        snode = _add_node(graph, out, Node(NodeKind.CORRIDOR, center, axis=layout.axis))
        c = ledger.pending_centers.pop(space_id)
        _add_factor(graph, out, cfg, FactorKind.CORRIDOR, (snode, *nodes), c)
    else:
        snode = _add_node(graph, out, Node(NodeKind.ROOM, center))
        _add_factor(graph, out, cfg, FactorKind.ROOM, (snode, *nodes))
    ledger.spaces[space_id] = snode
    if "doorways" in cfg.layers:
        _link_doorways(space_id, dictionary, ledger, graph, cfg, out)
    return True
