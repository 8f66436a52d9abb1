"""Batched residual/Jacobian kernels for the pose-heavy factor kinds.

Two implementations of each kernel live here: an explicit loop compiled with
numba (``*_numba``) and a vectorized numpy version (``*_numpy``). The
unsuffixed names point at whichever backend :mod:`msgraph._jit` selected.

All pose perturbations are right-multiplicative, ``T <- T exp(xi)`` with
``xi = (rot, trans)``.
"""
import math

import numpy as np

from . import _lie
from . import _lie_np as L
from ._jit import USE_NUMBA, BACKEND, numba

POLE_COS = math.cos(1e-6)


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------

def odometry_numpy(Ri, ti, Rj, tj, Rm, tm):
    """r = log(meas^-1 Ki^-1 Kj) with Jacobians wrt Ki and Kj."""
    Rii, tii = L.inverse(Ri, ti)
    Rrel, trel = L.compose(Rii, tii, Rj, tj)
    Rmi, tmi = L.inverse(Rm, tm)
    Re, te = L.compose(Rmi, tmi, Rrel, trel)
    r = L.se3_log(Re, te)
    Jinv = L.se3_right_jacobian_inv(r)
    Rji, tji = L.inverse(Rj, tj)
    Rb, tb = L.compose(Rji, tji, Ri, ti)
    Ji = -Jinv @ L.adjoint(Rb, tb)
    return r, Ji, Jinv


def marker_obs_numpy(Rk, tk, Rm, tm, Rl, tl):
    """r = log(M^-1 K L) with Jacobians wrt K and M."""
    Rp, tp = L.compose(Rk, tk, Rl, tl)
    Rmi, tmi = L.inverse(Rm, tm)
    Re, te = L.compose(Rmi, tmi, Rp, tp)
    r = L.se3_log(Re, te)
    Jinv = L.se3_right_jacobian_inv(r)
    Rli, tli = L.inverse(Rl, tl)
    Jk = Jinv @ L.adjoint(Rli, tli)
    Rpi, tpi = L.inverse(Rp, tp)
    Rb, tb = L.compose(Rpi, tpi, Rm, tm)
    Jm = -Jinv @ L.adjoint(Rb, tb)
    return r, Jk, Jm


def wall_marker_numpy(sph, Rm, tm):
    """Wall (azimuth, elevation, distance) against a marker pose.

    Returns ``(r, Jw, Jm, ok)``; ``ok`` is False where the wall normal falls
    on the pole of the marker-relative chart.
    """
    phi, th, d = sph[:, 0], sph[:, 1], sph[:, 2]
    cp, sp, ct, st = np.cos(phi), np.sin(phi), np.cos(th), np.sin(th)
    n = np.stack([ct * cp, ct * sp, st], axis=-1)
    dn_phi = np.stack([-ct * sp, ct * cp, np.zeros_like(ct)], axis=-1)
    dn_th = np.stack([-st * cp, -st * sp, ct], axis=-1)
    RT = np.swapaxes(Rm, -1, -2)
    nl = np.einsum("nij,nj->ni", RT, n)
    dl = np.einsum("ni,ni->n", n, tm) + d
    cx, cy, cz = nl[:, 2], nl[:, 0], nl[:, 1]
    ok = np.abs(cz) < POLE_COS
    czs = np.clip(cz, -POLE_COS, POLE_COS)
    r = np.stack([L.wrap_angle(np.arctan2(cy, cx)), np.arcsin(czs), dl], axis=-1)

    # d(nl)/d(param) as (N, 3, k); chart rows reorder nl to (z, x, y)
    dnl_w = np.zeros((len(sph), 3, 3))
    dnl_w[:, :, 0] = np.einsum("nij,nj->ni", RT, dn_phi)
    dnl_w[:, :, 1] = np.einsum("nij,nj->ni", RT, dn_th)
    dnl_m = np.zeros((len(sph), 3, 6))
    dnl_m[:, :, :3] = L.hat(nl)

    rho2 = cx * cx + cy * cy
    safe_rho2 = np.where(ok, rho2, 1.0)
    inv_c = np.where(ok, 1.0 / np.sqrt(np.where(ok, 1.0 - czs * czs, 1.0)), 0.0)

    def chart_rows(D):
        dcx, dcy, dcz = D[:, 2], D[:, 0], D[:, 1]
        row0 = (cx[:, None] * dcy - cy[:, None] * dcx) / safe_rho2[:, None]
        row1 = inv_c[:, None] * dcz
        return row0, row1

    Jw = np.zeros((len(sph), 3, 3))
    Jw[:, 0], Jw[:, 1] = chart_rows(dnl_w)
    Jw[:, 2, 0] = np.einsum("ni,ni->n", dn_phi, tm)
    Jw[:, 2, 1] = np.einsum("ni,ni->n", dn_th, tm)
    Jw[:, 2, 2] = 1.0
    Jm = np.zeros((len(sph), 3, 6))
    Jm[:, 0], Jm[:, 1] = chart_rows(dnl_m)
    Jm[:, 2, 3:] = nl
    return r, Jw, Jm, ok


def retract_poses_numpy(R, t, delta):
    Re, te = L.se3_exp(delta)
    return L.compose(R, t, Re, te)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if USE_NUMBA:
    # The loops below avoid per-factor heap allocation: every 3x3 product
    # writes into scratch buffers allocated once per call, and the 6x6
    # Jacobians are assembled from their 3x3 blocks.

    @numba.njit(cache=True)
    def _mm3(A, B, C):
        for i in range(3):
            for j in range(3):
                C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]

    @numba.njit(cache=True)
    def _hat3(w, K):
        K[0, 0] = 0.0
        K[0, 1] = -w[2]
        K[0, 2] = w[1]
        K[1, 0] = w[2]
        K[1, 1] = 0.0
        K[1, 2] = -w[0]
        K[2, 0] = -w[1]
        K[2, 1] = w[0]
        K[2, 2] = 0.0

    @numba.njit(cache=True)
    def _jl_inv3(w, sign, out, K, K2):
        """Left Jacobian inverse of ``sign * w`` written into ``out``."""
        th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
        th = math.sqrt(th2)
        if th < _lie.SMALL_ANGLE:
            c = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0
        else:
            c = 1.0 / th2 - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
        _hat3(w, K)
        _mm3(K, K, K2)
        for i in range(3):
            for j in range(3):
                out[i, j] = -0.5 * sign * K[i, j] + c * K2[i, j]
            out[i, i] += 1.0

    @numba.njit(cache=True)
    def _q3(rho, phi, out, S):
        """SE(3) Jacobian off-diagonal block Q(rho, phi); S is (8, 3, 3) scratch."""
        th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
        th = math.sqrt(th2)
        if th < _lie.SMALL_ANGLE_Q:
            a = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
            b = 1.0 / 24.0 - th2 / 720.0 + th2 * th2 / 40320.0
            c = 1.0 / 120.0 - th2 / 2520.0 + th2 * th2 / 120960.0
        else:
            s = math.sin(th)
            co = math.cos(th)
            a = (th - s) / (th2 * th)
            b = (th2 + 2.0 * co - 2.0) / (2.0 * th2 * th2)
            c = (2.0 * th - 3.0 * s + th * co) / (2.0 * th2 * th2 * th)
        P, Rh, PR, RP, PRP, T1, T2, T3 = S[0], S[1], S[2], S[3], S[4], S[5], S[6], S[7]
        _hat3(phi, P)
        _hat3(rho, Rh)
        _mm3(P, Rh, PR)
        _mm3(Rh, P, RP)
        _mm3(PR, P, PRP)
        _mm3(P, PR, T1)      # P P Rh
        _mm3(RP, P, T2)      # Rh P P
        for i in range(3):
            for j in range(3):
                out[i, j] = (0.5 * Rh[i, j] + a * (PR[i, j] + RP[i, j] + PRP[i, j])
                             + b * (T1[i, j] + T2[i, j] - 3.0 * PRP[i, j]))
        _mm3(PRP, P, T1)
        _mm3(P, PRP, T3)
        for i in range(3):
            for j in range(3):
                out[i, j] += c * (T1[i, j] + T3[i, j])

    @numba.njit(cache=True)
    def _log_jrinv(Re, te, r, A, C, S, v3, w3):
        """r = log(Re, te); Jr^-1(r) = [[A, 0], [C, A]]."""
        cth = 0.5 * (Re[0, 0] + Re[1, 1] + Re[2, 2] - 1.0)
        if cth > -0.9:
            v0 = Re[2, 1] - Re[1, 2]
            v1 = Re[0, 2] - Re[2, 0]
            v2 = Re[1, 0] - Re[0, 1]
            s = 0.5 * math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
            f = 0.5 if s < 1e-15 else math.atan2(s, cth) / (2.0 * s)
            r[0] = f * v0
            r[1] = f * v1
            r[2] = f * v2
        else:
            w = _lie.so3_log(Re)
            r[0] = w[0]
            r[1] = w[1]
            r[2] = w[2]
        w3[0] = r[0]
        w3[1] = r[1]
        w3[2] = r[2]
        _jl_inv3(w3, 1.0, A, S[0], S[1])
        for i in range(3):
            r[3 + i] = A[i, 0] * te[0] + A[i, 1] * te[1] + A[i, 2] * te[2]
        # Jr^-1(xi) = Jl^-1(-xi)
        _jl_inv3(w3, -1.0, A, S[0], S[1])
        for i in range(3):
            w3[i] = -r[i]
            v3[i] = -r[3 + i]
        _q3(v3, w3, S[2], S[3:])
        _mm3(A, S[2], S[0])
        _mm3(S[0], A, C)
        for i in range(3):
            for j in range(3):
                C[i, j] = -C[i, j]

    @numba.njit(cache=True)
    def _times_adjoint(A, C, R, t, sign, J, S):
        """J = sign * [[A, 0], [C, A]] @ Ad(R, t); Ad = [[R, 0], [t^ R, R]]."""
        AR, TR, W = S[0], S[1], S[2]
        _mm3(A, R, AR)
        _hat3(t, W)
        _mm3(W, R, TR)
        _mm3(A, TR, W)       # A t^ R
        _mm3(C, R, TR)       # C R
        for i in range(3):
            for j in range(3):
                J[i, j] = sign * AR[i, j]
                J[i, 3 + j] = 0.0
                J[3 + i, j] = sign * (TR[i, j] + W[i, j])
                J[3 + i, 3 + j] = sign * AR[i, j]

    @numba.njit(cache=True)
    def _inv_compose(Ra, ta, Rb, tb, R, t):
        """(R, t) = a^-1 b."""
        for i in range(3):
            for j in range(3):
                R[i, j] = Ra[0, i] * Rb[0, j] + Ra[1, i] * Rb[1, j] + Ra[2, i] * Rb[2, j]
            t[i] = (Ra[0, i] * (tb[0] - ta[0]) + Ra[1, i] * (tb[1] - ta[1])
                    + Ra[2, i] * (tb[2] - ta[2]))

    @numba.njit(cache=True)
    def _compose(Ra, ta, Rb, tb, R, t):
        for i in range(3):
            for j in range(3):
                R[i, j] = Ra[i, 0] * Rb[0, j] + Ra[i, 1] * Rb[1, j] + Ra[i, 2] * Rb[2, j]
            t[i] = Ra[i, 0] * tb[0] + Ra[i, 1] * tb[1] + Ra[i, 2] * tb[2] + ta[i]

    @numba.njit(cache=True)
    def odometry_numba(Ri, ti, Rj, tj, Rm, tm):
        n = Ri.shape[0]
        r = np.empty((n, 6))
        Ji = np.empty((n, 6, 6))
        Jj = np.empty((n, 6, 6))
        S = np.empty((11, 3, 3))
        A = np.empty((3, 3))
        C = np.empty((3, 3))
        Rrel = np.empty((3, 3))
        Re = np.empty((3, 3))
        Rb = np.empty((3, 3))
        trel = np.empty(3)
        te = np.empty(3)
        tb = np.empty(3)
        v3 = np.empty(3)
        w3 = np.empty(3)
        for k in range(n):
            _inv_compose(Ri[k], ti[k], Rj[k], tj[k], Rrel, trel)
            _inv_compose(Rm[k], tm[k], Rrel, trel, Re, te)
            _log_jrinv(Re, te, r[k], A, C, S, v3, w3)
            _inv_compose(Rj[k], tj[k], Ri[k], ti[k], Rb, tb)
            _times_adjoint(A, C, Rb, tb, -1.0, Ji[k], S)
            for a in range(3):
                for b in range(3):
                    Jj[k, a, b] = A[a, b]
                    Jj[k, a, 3 + b] = 0.0
                    Jj[k, 3 + a, b] = C[a, b]
                    Jj[k, 3 + a, 3 + b] = A[a, b]
        return r, Ji, Jj

    @numba.njit(cache=True)
    def marker_obs_numba(Rk, tk, Rm, tm, Rl, tl):
        n = Rk.shape[0]
        r = np.empty((n, 6))
        Jk = np.empty((n, 6, 6))
        Jm = np.empty((n, 6, 6))
        S = np.empty((11, 3, 3))
        A = np.empty((3, 3))
        C = np.empty((3, 3))
        Rp = np.empty((3, 3))
        Re = np.empty((3, 3))
        Rb = np.empty((3, 3))
        tp = np.empty(3)
        te = np.empty(3)
        tb = np.empty(3)
        v3 = np.empty(3)
        w3 = np.empty(3)
        I3 = np.eye(3)
        z3 = np.zeros(3)
        for k in range(n):
            _compose(Rk[k], tk[k], Rl[k], tl[k], Rp, tp)
            _inv_compose(Rm[k], tm[k], Rp, tp, Re, te)
            _log_jrinv(Re, te, r[k], A, C, S, v3, w3)
            _inv_compose(Rl[k], tl[k], I3, z3, Rb, tb)
            _times_adjoint(A, C, Rb, tb, 1.0, Jk[k], S)
            _inv_compose(Rp, tp, Rm[k], tm[k], Rb, tb)
            _times_adjoint(A, C, Rb, tb, -1.0, Jm[k], S)
        return r, Jk, Jm

    @numba.njit(cache=True)
    def wall_marker_numba(sph, Rm, tm):
        n = sph.shape[0]
        r = np.zeros((n, 3))
        Jw = np.zeros((n, 3, 3))
        Jm = np.zeros((n, 3, 6))
        ok = np.ones(n, dtype=np.bool_)
        for k in range(n):
            phi, th, d = sph[k, 0], sph[k, 1], sph[k, 2]
            cp, sp, ct, st = math.cos(phi), math.sin(phi), math.cos(th), math.sin(th)
            n0, n1, n2 = ct * cp, ct * sp, st
            p0, p1 = -ct * sp, ct * cp                  # dn/dphi (z part is 0)
            e0, e1, e2 = -st * cp, -st * sp, ct         # dn/dtheta
            R = Rm[k]
            # local normal and its derivatives, R^T applied column-wise
            lx = R[0, 0] * n0 + R[1, 0] * n1 + R[2, 0] * n2
            ly = R[0, 1] * n0 + R[1, 1] * n1 + R[2, 1] * n2
            lz = R[0, 2] * n0 + R[1, 2] * n1 + R[2, 2] * n2
            cx, cy, cz = lz, lx, ly
            if abs(cz) >= POLE_COS:
                ok[k] = False
                continue
            r[k, 0] = _lie.wrap_angle(math.atan2(cy, cx))
            r[k, 1] = math.asin(cz)
            r[k, 2] = n0 * tm[k, 0] + n1 * tm[k, 1] + n2 * tm[k, 2] + d
            rho2 = cx * cx + cy * cy
            inv_c = 1.0 / math.sqrt(1.0 - cz * cz)
            # wall parameters: columns phi, theta
            for j in range(2):
                if j == 0:
                    a0, a1, a2 = p0, p1, 0.0
                else:
                    a0, a1, a2 = e0, e1, e2
                dx = R[0, 0] * a0 + R[1, 0] * a1 + R[2, 0] * a2
                dy = R[0, 1] * a0 + R[1, 1] * a1 + R[2, 1] * a2
                dz = R[0, 2] * a0 + R[1, 2] * a1 + R[2, 2] * a2
                Jw[k, 0, j] = (cx * dx - cy * dz) / rho2
                Jw[k, 1, j] = inv_c * dy
            Jw[k, 2, 0] = p0 * tm[k, 0] + p1 * tm[k, 1]
            Jw[k, 2, 1] = e0 * tm[k, 0] + e1 * tm[k, 1] + e2 * tm[k, 2]
            Jw[k, 2, 2] = 1.0
            # marker rotation: d(nl)/d(omega) = hat(nl), columns of the skew matrix
            for j in range(3):
                if j == 0:
                    dx, dy, dz = 0.0, lz, -ly
                elif j == 1:
                    dx, dy, dz = -lz, 0.0, lx
                else:
                    dx, dy, dz = ly, -lx, 0.0
                Jm[k, 0, j] = (cx * dx - cy * dz) / rho2
                Jm[k, 1, j] = inv_c * dy
            Jm[k, 2, 3] = lx
            Jm[k, 2, 4] = ly
            Jm[k, 2, 5] = lz
        return r, Jw, Jm, ok

    @numba.njit(cache=True)
    def retract_poses_numba(R, t, delta):
        n = R.shape[0]
        Ro = np.empty_like(R)
        to = np.empty_like(t)
        K = np.empty((3, 3))
        K2 = np.empty((3, 3))
        Re = np.empty((3, 3))
        te = np.empty(3)
        for k in range(n):
            w = delta[k, :3]
            v = delta[k, 3:]
            th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
            th = math.sqrt(th2)
            # R = I + a K + b K^2 and V = I + b K + c K^2 (SO(3) left Jacobian)
            if th < 1e-12:
                a = 1.0
                b = 0.5
            else:
                a = math.sin(th) / th
                h = math.sin(0.5 * th) / (0.5 * th)
                b = 0.5 * h * h
            if th < _lie.SMALL_ANGLE:
                bv = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
                c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
            else:
                bv = b
                c = (th - math.sin(th)) / (th2 * th)
            _hat3(w, K)
            _mm3(K, K, K2)
            for i in range(3):
                acc = v[i]
                for j in range(3):
                    Re[i, j] = a * K[i, j] + b * K2[i, j]
                    acc += (bv * K[i, j] + c * K2[i, j]) * v[j]
                Re[i, i] += 1.0
                te[i] = acc
            _compose(R[k], t[k], Re, te, Ro[k], to[k])
        return Ro, to

    odometry = odometry_numba
    marker_obs = marker_obs_numba
    wall_marker = wall_marker_numba
    retract_poses = retract_poses_numba
else:
    odometry = odometry_numpy
    marker_obs = marker_obs_numpy
    wall_marker = wall_marker_numpy
    retract_poses = retract_poses_numpy

__all__ = ["BACKEND", "USE_NUMBA", "odometry", "marker_obs", "wall_marker", "retract_poses"]
