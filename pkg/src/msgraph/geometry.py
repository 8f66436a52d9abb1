"""Rigid-body and plane geometry.

Poses are SE(3) elements stored as a rotation matrix and a translation.
Perturbations are applied on the right: ``boxplus(P, xi) = P * exp(xi)`` with
``xi = (rot, trans)``.

Planes use the convention ``normal . x + offset = 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import _lie
from .errors import DegenerateFit, PoleSingularity

POLE_GUARD = 1e-6


def _vec3(x) -> np.ndarray:
    a = np.array(x, dtype=np.float64).reshape(3)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=np.float64).reshape(3, 3)
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", _vec3(self.t))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x, y=None, z=None) -> Pose:
        t = x if y is None else (x, y, z)
        return cls(np.eye(3), t)

    @classmethod
    def from_rotvec(cls, rotvec, t=(0.0, 0.0, 0.0)) -> Pose:
        return cls(_lie.so3_exp(np.asarray(rotvec, dtype=np.float64)), t)

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_quat(cls, q_xyzw, t) -> Pose:
        return cls(Rotation.from_quat(q_xyzw).as_matrix(), t)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def quat(self) -> np.ndarray:
        """Unit quaternion (x, y, z, w) with w >= 0."""
        q = Rotation.from_matrix(self.R).as_quat()
        return -q if q[3] < 0 else q

    def transform(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.R.T + self.t

    def __matmul__(self, other: Pose) -> Pose:
        return compose(self, other)

    def __repr__(self):
        rv = _lie.so3_log(np.ascontiguousarray(self.R))
        return f"Pose(rotvec={np.round(rv, 6).tolist()}, t={np.round(self.t, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class Tangent6:
    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rot", _vec3(self.rot))
        object.__setattr__(self, "trans", _vec3(self.trans))

    @classmethod
    def from_vector(cls, xi) -> Tangent6:
        xi = np.asarray(xi, dtype=np.float64)
        return cls(xi[:3], xi[3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rot, self.trans])

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector()))


@dataclass(frozen=True, eq=False)
class Plane:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if not norm > 0:
            raise DegenerateFit("plane normal has zero length")
        n = n / norm
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal + self.offset

    def flipped(self) -> Plane:
        return Plane(-self.normal, -self.offset)

    def vector(self) -> np.ndarray:
        return np.append(self.normal, self.offset)

    def __repr__(self):
        return f"Plane(normal={np.round(self.normal, 9).tolist()}, offset={self.offset:.9g})"


@dataclass(frozen=True)
class SphericalPlane:
    azimuth: float
    elevation: float
    distance: float

    def vector(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation, self.distance])

    @classmethod
    def from_vector(cls, v) -> SphericalPlane:
        return cls(float(v[0]), float(v[1]), float(v[2]))


def _rt(p: Pose):
    return np.ascontiguousarray(p.R), np.ascontiguousarray(p.t)


def compose(a: Pose, b: Pose) -> Pose:
    R, t = _lie.compose(*_rt(a), *_rt(b))
    return Pose(R, t)


def inverse(p: Pose) -> Pose:
    R, t = _lie.inverse(*_rt(p))
    return Pose(R, t)


def exp(xi) -> Pose:
    if isinstance(xi, Tangent6):
        xi = xi.vector()
    R, t = _lie.se3_exp(np.asarray(xi, dtype=np.float64))
    return Pose(R, t)


def log(p: Pose) -> Tangent6:
    return Tangent6.from_vector(_lie.se3_log(*_rt(p)))


def boxplus(p: Pose, xi) -> Pose:
    return compose(p, exp(xi))


def boxminus(a: Pose, b: Pose) -> Tangent6:
    """Tangent of ``b^-1 a``: the right-perturbation taking ``b`` to ``a``."""
    return Tangent6.from_vector(_lie.boxminus(*_rt(a), *_rt(b)))


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=np.float64), 2.0 * np.pi)


def canonicalize(plane: Plane, observer) -> Plane:
    """Flip ``plane`` so that ``observer`` lies on its positive side."""
    if observer is None:
        return plane
    if plane.signed_distance(observer) < 0.0:
        return plane.flipped()
    return plane


def plane_from_marker(marker_pose: Pose, observer=None) -> Plane:
    """Plane through the marker origin with the marker z-axis as normal."""
    n = marker_pose.R[:, 2]
    return canonicalize(Plane(n, -float(n @ marker_pose.t)), observer)


def plane_refine(points, init: Plane) -> Plane:
    """Total least-squares plane through ``points``, sign-matched to ``init``."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) < 3:
        raise DegenerateFit(f"need at least 3 points, got {len(P)}")
    centroid = P.mean(axis=0)
    _, s, vt = np.linalg.svd(P - centroid)
    scale = max(s[0], 1e-300)
    if s[1] <= 1e-9 * scale or s[0] == 0.0:
        raise DegenerateFit("points are collinear")
    n = vt[2]
    plane = Plane(n, -float(n @ centroid))
    if plane.normal @ init.normal < 0.0:
        plane = plane.flipped()
    return plane


def plane_to_spherical(p: Plane) -> SphericalPlane:
    n = p.normal
    if abs(n[2]) >= math.cos(POLE_GUARD):
        raise PoleSingularity(f"normal {n.tolist()} is within {POLE_GUARD} rad of the pole")
    return SphericalPlane(math.atan2(n[1], n[0]), math.asin(n[2]), p.offset)


def spherical_to_plane(s: SphericalPlane) -> Plane:
    ce = math.cos(s.elevation)
    n = np.array([ce * math.cos(s.azimuth), ce * math.sin(s.azimuth), math.sin(s.elevation)])
    return Plane(n, s.distance)


def plane_in_frame(T: Pose, p: Plane) -> Plane:
    """Express ``p`` in the local frame of ``T``.

    ``x_local`` lies on the result iff ``T * x_local`` lies on ``p``.
    """
    return Plane(T.R.T @ p.normal, float(p.normal @ T.t) + p.offset)


def rot_z(angle: float, t=(0.0, 0.0, 0.0)) -> Pose:
    return Pose.from_rotvec([0.0, 0.0, angle], t)


def pose_distance(a: Pose, b: Pose) -> float:
    """Norm of ``boxminus(a, b)``; zero iff the poses coincide."""
    return boxminus(a, b).norm()
