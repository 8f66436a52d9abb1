"""Scalar SO(3)/SE(3) primitives.

Every function here is written in the numba-compatible subset of numpy so the
same source serves the scalar API and the jitted batch kernels. Tangent
vectors are ordered ``(rot, trans)``; rotations are 3x3 matrices.
"""
import math

import numpy as np

from ._jit import USE_NUMBA, maybe_njit, numba

SMALL_ANGLE = 1e-2
SMALL_ANGLE_Q = 5e-2

if USE_NUMBA:
    # explicit loops: for 3x3 and 6x6 operands these beat a BLAS call

    @numba.njit(cache=True)
    def mm(A, B):
        n, p = A.shape
        m = B.shape[1]
        out = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for k in range(p):
                    acc += A[i, k] * B[k, j]
                out[i, j] = acc
        return out

    @numba.njit(cache=True)
    def mv(A, x):
        n, p = A.shape
        out = np.empty(n)
        for i in range(n):
            acc = 0.0
            for k in range(p):
                acc += A[i, k] * x[k]
            out[i] = acc
        return out
else:
    def mm(A, B):
        return A @ B

    def mv(A, x):
        return A @ x


@maybe_njit
def hat(w):
    m = np.zeros((3, 3))
    m[0, 1] = -w[2]
    m[0, 2] = w[1]
    m[1, 0] = w[2]
    m[1, 2] = -w[0]
    m[2, 0] = -w[1]
    m[2, 1] = w[0]
    return m


@maybe_njit
def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - a) % (2.0 * math.pi)


@maybe_njit
def so3_exp(w):
    th = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = hat(w)
    if th < 1e-12:
        a = 1.0
        b = 0.5
    else:
        a = math.sin(th) / th
        h = math.sin(0.5 * th) / (0.5 * th)
        b = 0.5 * h * h
    return np.eye(3) + a * K + b * mm(K, K)


@maybe_njit
def so3_log(R):
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    v = np.empty(3)
    v[0] = R[2, 1] - R[1, 2]
    v[1] = R[0, 2] - R[2, 0]
    v[2] = R[1, 0] - R[0, 1]
    s = 0.5 * math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    th = math.atan2(s, c)
    if c > -0.9:
        if s < 1e-15:
            return 0.5 * v
        return (th / (2.0 * s)) * v
    # near pi the antisymmetric part vanishes; recover the axis from the symmetric part
    B = 0.5 * (R + R.T)
    one_c = 1.0 - c
    i = 0
    if B[1, 1] > B[i, i]:
        i = 1
    if B[2, 2] > B[i, i]:
        i = 2
    a = np.empty(3)
    ai = math.sqrt(max((B[i, i] - c) / one_c, 0.0))
    for j in range(3):
        if j == i:
            a[j] = ai
        else:
            a[j] = B[i, j] / (one_c * ai)
    if a[0] * v[0] + a[1] * v[1] + a[2] * v[2] < 0.0:
        a = -a
    return th * a


@maybe_njit
def so3_left_jacobian(w):
    th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    th = math.sqrt(th2)
    K = hat(w)
    if th < SMALL_ANGLE:
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0
        c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
    else:
        h = math.sin(0.5 * th) / (0.5 * th)
        b = 0.5 * h * h
        c = (th - math.sin(th)) / (th2 * th)
    return np.eye(3) + b * K + c * mm(K, K)


@maybe_njit
def so3_left_jacobian_inv(w):
    th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2]
    th = math.sqrt(th2)
    K = hat(w)
    if th < SMALL_ANGLE:
        c = 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0
    else:
        c = 1.0 / th2 - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
    return np.eye(3) - 0.5 * K + c * mm(K, K)


@maybe_njit
def se3_q(rho, phi):
    """Off-diagonal block of the SE(3) left Jacobian."""
    th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    th = math.sqrt(th2)
    P = hat(phi)
    Rh = hat(rho)
    if th < SMALL_ANGLE_Q:
        a = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0
        b = 1.0 / 24.0 - th2 / 720.0 + th2 * th2 / 40320.0
        c = 1.0 / 120.0 - th2 / 2520.0 + th2 * th2 / 120960.0
    else:
        s = math.sin(th)
        co = math.cos(th)
        a = (th - s) / (th2 * th)
        b = (th2 + 2.0 * co - 2.0) / (2.0 * th2 * th2)
        c = (2.0 * th - 3.0 * s + th * co) / (2.0 * th2 * th2 * th)
    PR = mm(P, Rh)
    RP = mm(Rh, P)
    PRP = mm(PR, P)
    PP = mm(P, P)
    return (0.5 * Rh + a * (PR + RP + PRP)
            + b * (mm(PP, Rh) + mm(RP, P) - 3.0 * PRP)
            + c * (mm(PRP, P) + mm(P, PRP)))


@maybe_njit
def se3_exp(xi):
    w = xi[:3].copy()
    v = xi[3:].copy()
    return so3_exp(w), mv(so3_left_jacobian(w), v)


@maybe_njit
def se3_log(R, t):
    w = so3_log(R)
    out = np.empty(6)
    out[:3] = w
    out[3:] = mv(so3_left_jacobian_inv(w), t)
    return out


@maybe_njit
def se3_right_jacobian_inv(xi):
    # Jr^-1(xi) = Jl^-1(-xi); block form in (rot, trans) order is
    # [[J^-1, 0], [-J^-1 Q J^-1, J^-1]]
    w = -xi[:3]
    v = -xi[3:]
    Ji = so3_left_jacobian_inv(w)
    Q = se3_q(v, w)
    out = np.zeros((6, 6))
    out[:3, :3] = Ji
    out[3:, 3:] = Ji
    out[3:, :3] = -mm(mm(Ji, Q), Ji)
    return out


@maybe_njit
def adjoint(R, t):
    out = np.zeros((6, 6))
    out[:3, :3] = R
    out[3:, 3:] = R
    out[3:, :3] = mm(hat(t), R)
    return out


@maybe_njit
def compose(Ra, ta, Rb, tb):
    return mm(Ra, Rb), mv(Ra, tb) + ta


@maybe_njit
def inverse(R, t):
    Rt = R.T.copy()
    return Rt, -mv(Rt, t)


@maybe_njit
def boxminus(Ra, ta, Rb, tb):
    """log(b^-1 a)."""
    Rbi, tbi = inverse(Rb, tb)
    R, t = compose(Rbi, tbi, Ra, ta)
    return se3_log(R, t)


@maybe_njit
def boxplus(R, t, xi):
    Re, te = se3_exp(xi)
    return compose(R, t, Re, te)
