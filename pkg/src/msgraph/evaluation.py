"""Absolute trajectory error with optional rigid alignment."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateAlignment, EmptyAssociation, ParseError, ValidationError
from .geometry import Pose

TRAJ_HEADER = "# msgraph-trajectory version 1: timestamp tx ty tz qx qy qz qw"
MATCH_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Trajectory:
    timestamps: np.ndarray
    poses: list

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if len(ts) != len(self.poses):
            raise ValidationError(f"{len(ts)} timestamps for {len(self.poses)} poses")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", list(self.poses))

    def __len__(self):
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self.poses]).reshape(-1, 3)


@dataclass(frozen=True, eq=False)
class TrajectoryPair:
    estimate: Trajectory
    reference: Trajectory

    def associate(self):
        """Index pairs (estimate, reference) of poses sharing a timestamp."""
        te, tr = self.estimate.timestamps, self.reference.timestamps
        j = np.clip(np.searchsorted(tr, te), 0, max(len(tr) - 1, 0))
        jm = np.clip(j - 1, 0, None)
        if len(tr):
            j = np.where(np.abs(tr[jm] - te) < np.abs(tr[j] - te), jm, j)
            hit = np.abs(tr[j] - te) <= MATCH_TOL
        else:
            hit = np.zeros(len(te), dtype=bool)
        return np.nonzero(hit)[0], j[hit]

    def matched_positions(self):
        ie, ir = self.associate()
        if len(ie) < 2:
            raise EmptyAssociation(f"only {len(ie)} poses share a timestamp; need at least 2")
        return self.estimate.positions()[ie], self.reference.positions()[ir]


@dataclass(frozen=True, eq=False)
class AteReport:
    rmse: float
    std: float
    mean: float
    errors: np.ndarray
    aligned: bool
    alignment: Pose

    def to_dict(self) -> dict:
        return {"rmse": self.rmse, "std": self.std, "mean": self.mean, "aligned": self.aligned,
                "count": int(len(self.errors))}


def _kabsch(src: np.ndarray, dst: np.ndarray) -> Pose:
    if len(src) < 3:
        raise DegenerateAlignment(f"need at least 3 positions to align, got {len(src)}")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateAlignment("positions are collinear")
    rot, _ = Rotation.align_vectors(b, a)
    R = rot.as_matrix()
    return Pose(R, cd - R @ cs)


def align(pair: TrajectoryPair) -> Pose:
    """Rigid transform (no scale) taking estimate positions onto the reference."""
    est, ref = pair.matched_positions()
    return _kabsch(est, ref)


def errors_to_report(e, aligned: bool, alignment: Pose) -> AteReport:
    e = np.asarray(e, dtype=np.float64)
    if len(e) == 0:
        raise EmptyAssociation("no errors to summarize")
    return AteReport(float(np.sqrt(np.mean(e * e))), float(np.std(e)), float(np.mean(e)),
                     e, aligned, alignment)


def ate(pair: TrajectoryPair, do_align: bool = True) -> AteReport:
    est, ref = pair.matched_positions()
    T = _kabsch(est, ref) if do_align else Pose.identity()
    e = np.linalg.norm(est @ T.R.T + T.t - ref, axis=1)
    return errors_to_report(e, do_align, T)


# ---------------------------------------------------------------------------
# files and tables
# ---------------------------------------------------------------------------

def format_trajectory(traj: Trajectory) -> str:
    lines = [TRAJ_HEADER]
    for t, p in zip(traj.timestamps, traj.poses):
        vals = [t, *p.t, *p.quat()]
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def parse_trajectory(text: str, source: str = "<string>") -> Trajectory:
    stamps, poses = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 8:
            raise ParseError(f"{source}:{lineno}: expected 8 columns, got {len(parts)}")
        try:
            v = [float(x) for x in parts]
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from exc
        q = np.array(v[4:])
        if not math.isclose(float(np.linalg.norm(q)), 1.0, abs_tol=1e-6):
            raise ParseError(f"{source}:{lineno}: quaternion is not unit length")
        stamps.append(v[0])
        poses.append(Pose.from_quat(q, v[1:4]))
    try:
        return Trajectory(np.array(stamps), poses)
    except ValidationError as exc:
        raise ParseError(f"{source}: {exc}") from exc


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w") as fh:
        fh.write(format_trajectory(traj))


def read_trajectory(path) -> Trajectory:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    return parse_trajectory(text, str(path))


def format_table(results: dict, sequences=None) -> str:
    """Method rows x sequence columns, each with RMSE and STD in meters.

    ``results`` maps method -> {sequence -> AteReport}; missing cells print '-'.
    """
    if sequences is None:
        sequences = sorted({s for row in results.values() for s in row})
    head1 = ["Method"] + [f"{s}" for s in sequences for _ in (0, 1)]
    head2 = [""] + ["RMSE", "STD"] * len(sequences)
    rows = [head1, head2]
    for method, row in results.items():
        cells = [method]
        for s in sequences:
            r = row.get(s)
            cells += ["-", "-"] if r is None else [f"{r.rmse:.4f}", f"{r.std:.4f}"]
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head1))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip()
             for r in rows]
    lines.insert(2, "-" * len(lines[0]))
    return "\n".join(lines) + "\n"
