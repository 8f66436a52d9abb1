"""Residuals for the six factor kinds.

Scalar functions (``residual_*``, ``corridor_center``, ``room_center``) are the
public per-factor API. The ``*_batch`` functions evaluate one factor kind over
a leading batch axis and return analytic Jacobian blocks, one per endpoint, in
the endpoint order of :data:`msgraph.sgraph.graph.SIGNATURE`.
"""
from __future__ import annotations

import math

import numpy as np

from .. import _kernels
from ..errors import DegenerateGap, NotParallel, NotPerpendicular, PoleSingularity
from ..geometry import Plane, Pose, SphericalPlane

PARALLEL_TOL = math.radians(10.0)
GAP_MIN = 0.01


# ---------------------------------------------------------------------------
# between-plane midpoint with forward-mode derivatives
# ---------------------------------------------------------------------------

def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _sph_normals(sph):
    """Unit normals and their derivatives wrt (azimuth, elevation)."""
    phi, th = sph[:, 0], sph[:, 1]
    cp, sp, ct, st = np.cos(phi), np.sin(phi), np.cos(th), np.sin(th)
    n = np.stack([ct * cp, ct * sp, st], axis=-1)
    d_phi = np.stack([-ct * sp, ct * cp, np.zeros_like(ct)], axis=-1)
    d_th = np.stack([-st * cp, -st * sp, ct], axis=-1)
    return n, d_phi, d_th


def _midpoint(na, dna, da, dda, nb, dnb, db, ddb, c):
    """Point midway between two near-parallel planes on the line through ``c``.

    The line runs along the bisected normal direction ``u`` and passes through
    the projection of ``c`` onto the plane orthogonal to ``u``; ``c = 0`` gives
    the midpoint of the two planes' closest points to the origin. Tangent
    inputs ``dna`` etc. carry a trailing parameter axis; the returned
    derivative has shape ``(N, 3, P)``.
    """
    sigma = np.where(_dot(na, nb) < 0.0, -1.0, 1.0)
    m = na + sigma[:, None] * nb
    dm = dna + sigma[:, None, None] * dnb
    mn = np.linalg.norm(m, axis=-1)
    u = m / mn[:, None]
    proj = np.eye(3) - u[:, :, None] * u[:, None, :]
    du = proj @ dm / mn[:, None, None]

    cu = _dot(c, u)
    dcu = np.einsum("ni,nip->np", c, du)
    cperp = c - cu[:, None] * u
    dcperp = -(u[:, :, None] * dcu[:, None, :]) - cu[:, None, None] * du

    def along(n, dn, d, dd):
        num = d + _dot(n, cperp)
        dnum = dd + np.einsum("nip,ni->np", dn, cperp) + np.einsum("ni,nip->np", n, dcperp)
        den = _dot(n, u)
        dden = np.einsum("nip,ni->np", dn, u) + np.einsum("ni,nip->np", n, du)
        s = -num / den
        ds = -(dnum * den[:, None] - num[:, None] * dden) / (den * den)[:, None]
        return s, ds

    sa, dsa = along(na, dna, da, dda)
    sb, dsb = along(nb, dnb, db, ddb)
    sbar = 0.5 * (sa + sb)
    dsbar = 0.5 * (dsa + dsb)
    center = sbar[:, None] * u + cperp
    dcenter = u[:, :, None] * dsbar[:, None, :] + sbar[:, None, None] * du + dcperp
    return center, dcenter, u, np.abs(sa - sb)


def pair_midpoint_sph(sph_a, sph_b, c):
    """Batched midpoint for walls in the (azimuth, elevation, distance) chart.

    Returns ``center (N,3)``, ``J (N,3,6)`` wrt ``[sph_a, sph_b]``, the shared
    direction ``u`` and the along-line gap between the planes.
    """
    N = len(sph_a)
    na, pa, ta = _sph_normals(sph_a)
    nb, pb, tb = _sph_normals(sph_b)
    dna = np.zeros((N, 3, 6))
    dna[:, :, 0], dna[:, :, 1] = pa, ta
    dnb = np.zeros((N, 3, 6))
    dnb[:, :, 3], dnb[:, :, 4] = pb, tb
    dda = np.zeros((N, 6))
    dda[:, 2] = 1.0
    ddb = np.zeros((N, 6))
    ddb[:, 5] = 1.0
    return _midpoint(na, dna, sph_a[:, 2], dda, nb, dnb, sph_b[:, 2], ddb, c)


def _checked_pair(a: Plane, b: Plane, c, parallel_tol, gap_min):
    if abs(float(a.normal @ b.normal)) < math.cos(parallel_tol) - 1e-15:
        angle = math.degrees(math.acos(min(1.0, abs(float(a.normal @ b.normal)))))
        raise NotParallel(f"walls differ by {angle:.3f} deg (tolerance {math.degrees(parallel_tol):.3f})")
    zeros3 = np.zeros((1, 3, 1))
    zeros1 = np.zeros((1, 1))
    center, _, u, gap = _midpoint(a.normal[None], zeros3, np.array([a.offset]), zeros1,
                                  b.normal[None], zeros3, np.array([b.offset]), zeros1,
                                  np.asarray(c, dtype=np.float64).reshape(1, 3))
    if gap[0] <= gap_min:
        raise DegenerateGap(f"walls are {gap[0]:.4g} m apart (minimum {gap_min})")
    return center[0], u[0]


def corridor_center(wall_a: Plane, wall_b: Plane, marker_center, *,
                    parallel_tol: float = PARALLEL_TOL, gap_min: float = GAP_MIN) -> np.ndarray:
    """Corridor center: midway between the walls, off-normal part from ``marker_center``."""
    center, _ = _checked_pair(wall_a, wall_b, marker_center, parallel_tol, gap_min)
    return center


def room_center(wx_a: Plane, wx_b: Plane, wy_a: Plane, wy_b: Plane, *,
                parallel_tol: float = PARALLEL_TOL, gap_min: float = GAP_MIN) -> np.ndarray:
    zero = np.zeros(3)
    qx, ux = _checked_pair(wx_a, wx_b, zero, parallel_tol, gap_min)
    qy, uy = _checked_pair(wy_a, wy_b, zero, parallel_tol, gap_min)
    if abs(float(ux @ uy)) > math.sin(parallel_tol) + 1e-15:
        angle = math.degrees(math.acos(min(1.0, abs(float(ux @ uy)))))
        raise NotPerpendicular(f"wall pairs meet at {angle:.3f} deg")
    return qx + qy


# ---------------------------------------------------------------------------
# batched kind evaluators: (r, [J per endpoint], ok)
# ---------------------------------------------------------------------------

def odometry_batch(Ri, ti, Rj, tj, Rm, tm):
    r, Ji, Jj = _kernels.odometry(Ri, ti, Rj, tj, Rm, tm)
    return r, [Ji, Jj], np.ones(len(r), dtype=bool)


def marker_obs_batch(Rk, tk, Rm, tm, Rl, tl):
    r, Jk, Jm = _kernels.marker_obs(Rk, tk, Rm, tm, Rl, tl)
    return r, [Jk, Jm], np.ones(len(r), dtype=bool)


def wall_marker_batch(sph, Rm, tm):
    r, Jw, Jm, ok = _kernels.wall_marker(sph, Rm, tm)
    return r, [Jw, Jm], ok


def corridor_batch(eta, sph_a, sph_b, c):
    center, J, _, _ = pair_midpoint_sph(sph_a, sph_b, c)
    N = len(eta)
    eye = np.broadcast_to(np.eye(3), (N, 3, 3)).copy()
    ok = np.all(np.isfinite(center), axis=-1)
    return eta - center, [eye, -J[:, :, :3], -J[:, :, 3:]], ok


def room_batch(rho, sxa, sxb, sya, syb):
    zero = np.zeros((len(rho), 3))
    qx, Jx, _, _ = pair_midpoint_sph(sxa, sxb, zero)
    qy, Jy, _, _ = pair_midpoint_sph(sya, syb, zero)
    N = len(rho)
    eye = np.broadcast_to(np.eye(3), (N, 3, 3)).copy()
    ok = np.all(np.isfinite(qx + qy), axis=-1)
    return rho - qx - qy, [eye, -Jx[:, :, :3], -Jx[:, :, 3:], -Jy[:, :, :3], -Jy[:, :, 3:]], ok


def doorway_batch(td, rc, meas):
    N = len(td)
    eye = np.broadcast_to(np.eye(3), (N, 3, 3)).copy()
    return meas - (td - rc), [-eye, eye], np.ones(N, dtype=bool)


# ---------------------------------------------------------------------------
# scalar API
# ---------------------------------------------------------------------------

def _pose_arrays(*poses):
    out = []
    for p in poses:
        out.append(np.ascontiguousarray(p.R)[None])
        out.append(np.ascontiguousarray(p.t)[None])
    return out


def residual_marker(k: Pose, m_global: Pose, meas_local: Pose) -> np.ndarray:
    """``boxminus(k * meas_local, m_global)``: predicted vs estimated marker pose."""
    r, _, _ = marker_obs_batch(*_pose_arrays(k, m_global, meas_local))
    return r[0]


def residual_odometry(k_i: Pose, k_j: Pose, meas: Pose) -> np.ndarray:
    r, _, _ = odometry_batch(*_pose_arrays(k_i, k_j, meas))
    return r[0]


def residual_wall_marker(w: SphericalPlane, m: Pose) -> np.ndarray:
    """(azimuth diff, elevation diff, distance) of the wall seen from the marker.

    Angles are measured in a marker-relative chart whose reference direction
    is the marker +z axis; azimuth turns about the marker y axis and elevation
    tilts towards it.
    """
    r, _, ok = wall_marker_batch(w.vector()[None], *_pose_arrays(m))
    if not ok[0]:
        raise PoleSingularity("wall normal is perpendicular to the marker x-z plane")
    return r[0]


def residual_corridor(r, wall_a: Plane, wall_b: Plane, marker_center, **tol) -> np.ndarray:
    return np.asarray(r, dtype=np.float64) - corridor_center(wall_a, wall_b, marker_center, **tol)


def residual_room(r, wx_a: Plane, wx_b: Plane, wy_a: Plane, wy_b: Plane, **tol) -> np.ndarray:
    return np.asarray(r, dtype=np.float64) - room_center(wx_a, wx_b, wy_a, wy_b, **tol)


def residual_doorway(d: Pose, r_center, meas_delta) -> np.ndarray:
    return np.asarray(meas_delta, dtype=np.float64) - (d.t - np.asarray(r_center, dtype=np.float64))
