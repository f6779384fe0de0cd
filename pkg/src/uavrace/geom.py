"""Quaternion and small-vector helpers shared by the sim and renderer.

Quaternions are (w, x, y, z) tuples of Python floats; the body frame is
right-handed with x forward, y left, z up.  Scalar math keeps the 60 Hz
step loop fast and bit-deterministic.
"""

from __future__ import annotations

import math

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

TAU = 2.0 * math.pi

IDENTITY_QUAT: Quat = (1.0, 0.0, 0.0, 0.0)


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    r = math.remainder(a, TAU)
    return math.pi if r == -math.pi else r


def quat_mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def quat_norm(q: Quat) -> float:
    return math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


def quat_normalize(q: Quat) -> Quat:
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize zero quaternion")
    return (q[0] / n, q[1] / n, q[2] / n, q[3] / n)


def quat_from_axis_angle(axis: Vec3, angle: float) -> Quat:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    h = 0.5 * angle
    s = math.sin(h) / n
    return (math.cos(h), ax * s, ay * s, az * s)


def quat_from_yaw(yaw: float) -> Quat:
    """Rotation about world/body +z by `yaw` (CCW seen from above)."""
    h = 0.5 * yaw
    return (math.cos(h), 0.0, 0.0, math.sin(h))


def quat_exp_rotvec(rx: float, ry: float, rz: float) -> Quat:
    """Quaternion for a rotation vector (axis * angle)."""
    angle = math.sqrt(rx * rx + ry * ry + rz * rz)
    if angle < 1e-12:
        # second-order small-angle expansion keeps the step map smooth
        return quat_normalize((1.0, 0.5 * rx, 0.5 * ry, 0.5 * rz))
    s = math.sin(0.5 * angle) / angle
    return (math.cos(0.5 * angle), rx * s, ry * s, rz * s)


def quat_rotate(q: Quat, v: Vec3) -> Vec3:
    """Rotate vector `v` by quaternion `q` (body -> world for pose quats)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * (q.xyz cross v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_rotate_inv(q: Quat, v: Vec3) -> Vec3:
    return quat_rotate(quat_conj(q), v)


def quat_to_matrix(q: Quat) -> list[list[float]]:
    """3x3 rotation matrix (rows) mapping body coords to world coords."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return [
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ]


def yaw_of(q: Quat) -> float:
    """Heading of the body x axis projected on the ground plane."""
    fx, fy, _ = quat_rotate(q, (1.0, 0.0, 0.0))
    return math.atan2(fy, fx)


def euler_zyx(q: Quat) -> tuple[float, float, float]:
    """(roll, pitch, yaw) for R = Rz(yaw) @ Ry(pitch) @ Rx(roll).

    With the FLU body frame: roll > 0 banks right, pitch > 0 tips the nose
    down, yaw follows the right-hand rule about +z.
    """
    r = quat_to_matrix(q)
    sin_pitch = max(-1.0, min(1.0, -r[2][0]))
    pitch = math.asin(sin_pitch)
    roll = math.atan2(r[2][1], r[2][2])
    yaw = math.atan2(r[1][0], r[0][0])
    return roll, pitch, yaw
