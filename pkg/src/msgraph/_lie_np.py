"""Vectorized SO(3)/SE(3) primitives over a leading batch axis.

Mirror of :mod:`msgraph._lie` for the pure-numpy kernel path. Shapes are
``(N, 3)`` for vectors and ``(N, 3, 3)`` for rotations.
"""
import numpy as np

from ._lie import SMALL_ANGLE, SMALL_ANGLE_Q


def hat(w):
    m = np.zeros(w.shape[:-1] + (3, 3))
    m[..., 0, 1] = -w[..., 2]
    m[..., 0, 2] = w[..., 1]
    m[..., 1, 0] = w[..., 2]
    m[..., 1, 2] = -w[..., 0]
    m[..., 2, 0] = -w[..., 1]
    m[..., 2, 1] = w[..., 0]
    return m


def wrap_angle(a):
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


def _sq(w):
    return np.einsum("...i,...i->...", w, w)


def so3_exp(w):
    th = np.sqrt(_sq(w))
    K = hat(w)
    safe = np.where(th < 1e-12, 1.0, th)
    a = np.where(th < 1e-12, 1.0, np.sin(safe) / safe)
    h = np.where(th < 1e-12, 1.0, np.sin(0.5 * safe) / (0.5 * safe))
    b = 0.5 * h * h
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def so3_log(R):
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    v = np.stack([R[..., 2, 1] - R[..., 1, 2],
                  R[..., 0, 2] - R[..., 2, 0],
                  R[..., 1, 0] - R[..., 0, 1]], axis=-1)
    s = 0.5 * np.sqrt(_sq(v))
    th = np.arctan2(s, c)
    scale = np.where(s < 1e-15, 0.5, th / (2.0 * np.where(s < 1e-15, 1.0, s)))
    out = scale[..., None] * v
    near_pi = c <= -0.9
    if np.any(near_pi):
        idx = np.nonzero(near_pi)[0]
        for k in idx:
            out[k] = _log_near_pi(R[k], c[k], v[k], th[k])
    return out


def _log_near_pi(R, c, v, th):
    B = 0.5 * (R + R.T)
    one_c = 1.0 - c
    i = int(np.argmax(np.diag(B)))
    ai = np.sqrt(max((B[i, i] - c) / one_c, 0.0))
    a = B[i] / (one_c * ai)
    a[i] = ai
    if a @ v < 0.0:
        a = -a
    return th * a


def so3_left_jacobian(w):
    th2 = _sq(w)
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE
    safe = np.where(small, 1.0, th)
    h = np.sin(0.5 * safe) / (0.5 * safe)
    b = np.where(small, 0.5 - th2 / 24.0 + th2 * th2 / 720.0, 0.5 * h * h)
    c = np.where(small, 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0,
                 (safe - np.sin(safe)) / safe ** 3)
    K = hat(w)
    return np.eye(3) + b[..., None, None] * K + c[..., None, None] * (K @ K)


def so3_left_jacobian_inv(w):
    th2 = _sq(w)
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE
    safe = np.where(small, 1.0, th)
    c = np.where(small, 1.0 / 12.0 + th2 / 720.0 + th2 * th2 / 30240.0,
                 1.0 / safe ** 2 - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)))
    K = hat(w)
    return np.eye(3) - 0.5 * K + c[..., None, None] * (K @ K)


def se3_q(rho, phi):
    th2 = _sq(phi)
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE_Q
    t = np.where(small, 1.0, th)
    s, co = np.sin(t), np.cos(t)
    a = np.where(small, 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0, (t - s) / t ** 3)
    b = np.where(small, 1.0 / 24.0 - th2 / 720.0 + th2 * th2 / 40320.0,
                 (t * t + 2.0 * co - 2.0) / (2.0 * t ** 4))
    c = np.where(small, 1.0 / 120.0 - th2 / 2520.0 + th2 * th2 / 120960.0,
                 (2.0 * t - 3.0 * s + t * co) / (2.0 * t ** 5))
    P, Rh = hat(phi), hat(rho)
    PR, RP = P @ Rh, Rh @ P
    PRP = PR @ P
    PP = P @ P
    a, b, c = a[..., None, None], b[..., None, None], c[..., None, None]
    return (0.5 * Rh + a * (PR + RP + PRP)
            + b * (PP @ Rh + RP @ P - 3.0 * PRP)
            + c * (PRP @ P + P @ PRP))


def se3_exp(xi):
    w, v = xi[..., :3], xi[..., 3:]
    return so3_exp(w), np.einsum("...ij,...j->...i", so3_left_jacobian(w), v)


def se3_log(R, t):
    w = so3_log(R)
    v = np.einsum("...ij,...j->...i", so3_left_jacobian_inv(w), t)
    return np.concatenate([w, v], axis=-1)


def se3_right_jacobian_inv(xi):
    w, v = -xi[..., :3], -xi[..., 3:]
    Ji = so3_left_jacobian_inv(w)
    Q = se3_q(v, w)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ji
    out[..., 3:, 3:] = Ji
    out[..., 3:, :3] = -(Ji @ Q @ Ji)
    return out


def adjoint(R, t):
    out = np.zeros(R.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., 3:, :3] = hat(t) @ R
    return out


def compose(Ra, ta, Rb, tb):
    return Ra @ Rb, np.einsum("...ij,...j->...i", Ra, tb) + ta


def inverse(R, t):
    Rt = np.swapaxes(R, -1, -2)
    return Rt, -np.einsum("...ij,...j->...i", Rt, t)
