"""Rigid-body math, the pinhole stereo camera and the stereo reprojection Jacobian.

Conventions used throughout the package:

* camera frame: x right, y down, z forward (optical axis)
* image coordinates are (r, c) = (row, column); the projection of a camera
  point is ``c = F_x * x / z + C_x`` and ``r = F_y * y / z + C_y``
* 6-vectors are ordered translation first, rotation second
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Base class for invalid geometric input."""


class BehindCamera(GeometryError):
    """A point has non-positive depth in the camera it is projected into."""


class PointAtInfinity(GeometryError):
    """A stereo pair has less than one pixel of disparity."""


class CutLocus(GeometryError):
    """The SE(3) logarithm is requested for a rotation angle at (or too close to) pi."""


def skew(v) -> np.ndarray:
    """Cross-product matrix, ``skew(a) @ b == np.cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


@dataclass(frozen=True, eq=False)
class Isometry3:
    """A rigid transform ``p -> rotation @ p + translation``.

    ``a @ b`` composes transforms; ``a @ p`` applies one to a 3-vector or to an
    ``(N, 3)`` array of points.
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> Isometry3:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> Isometry3:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3].copy(), m[:3, 3].copy())

    @classmethod
    def from_translation(cls, t) -> Isometry3:
        return cls(np.eye(3), np.asarray(t, dtype=float))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> Isometry3:
        rt = self.rotation.T
        return Isometry3(rt, -rt @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Isometry3):
            return Isometry3(self.rotation @ other.rotation,
                             self.rotation @ other.translation + self.translation)
        p = np.asarray(other, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def normalized(self) -> Isometry3:
        """Same transform with the rotation projected back onto SO(3).

        Chained compositions accumulate rounding that ``inverse`` (a plain
        transpose) would otherwise amplify.
        """
        u, _, vt = np.linalg.svd(self.rotation)
        r = u @ vt
        if np.linalg.det(r) < 0.0:
            r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
        return Isometry3(r, self.translation.copy())

    def angle(self) -> float:
        """Rotation angle in radians, in [0, pi]."""
        return rotation_angle(self.rotation)

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        ortho = np.linalg.norm(r.T @ r - np.eye(3))
        return bool(ortho < tol and abs(np.linalg.det(r) - 1.0) <= tol
                    and np.all(np.isfinite(self.translation)))

    def __repr__(self) -> str:
        return f"Isometry3(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rotation_angle(r: np.ndarray) -> float:
    s = 0.5 * np.linalg.norm(vee(r - r.T))
    c = 0.5 * (np.trace(r) - 1.0)
    return math.atan2(s, c)


def so3_exp(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = math.sqrt(phi @ phi)
    k = skew(phi)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def so3_log(r: np.ndarray) -> np.ndarray:
    theta = rotation_angle(r)
    w = vee(r - r.T)
    if theta < 1e-8:
        # R - R^T = 2 sin(t) [a]x, sin(t) ~ t
        return 0.5 * w
    if theta < 3.0:
        return theta / (2.0 * math.sin(theta)) * w
    # near pi the antisymmetric part vanishes: recover the axis from the
    # symmetric part, (R + R^T)/2 - cos(t) I = (1 - cos(t)) a a^T
    sym = 0.5 * (r + r.T) - math.cos(theta) * np.eye(3)
    i = int(np.argmax(np.diag(sym)))
    axis = sym[:, i] / math.sqrt(sym[i, i])
    if axis @ w < 0.0:
        axis = -axis
    return theta * axis


def _left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(phi @ phi)
    k = skew(phi)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    t2 = theta * theta
    return (np.eye(3) + (1.0 - math.cos(theta)) / t2 * k
            + (theta - math.sin(theta)) / (t2 * theta) * (k @ k))


def _left_jacobian_inverse(phi: np.ndarray) -> np.ndarray:
    theta = math.sqrt(phi @ phi)
    k = skew(phi)
    if theta < 1e-8:
        return np.eye(3) - 0.5 * k + (k @ k) / 12.0
    half = 0.5 * theta
    coef = (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)
    return np.eye(3) - 0.5 * k + coef * (k @ k)


def se3_exp(twist) -> Isometry3:
    """Exponential map of a twist ``(v, w)``: Rodrigues rotation, ``V(w) v`` translation."""
    twist = np.asarray(twist, dtype=float).reshape(6)
    rho, phi = twist[:3], twist[3:]
    return Isometry3(so3_exp(phi), _left_jacobian(phi) @ rho)


def se3_log(t: Isometry3) -> np.ndarray:
    """Inverse of :func:`se3_exp` for rotation angles below ``pi - 1e-6``."""
    theta = t.angle()
    if theta > math.pi - 1e-6:
        raise CutLocus(f"log at cut locus: rotation angle {theta!r} too close to pi")
    phi = so3_log(t.rotation)
    rho = _left_jacobian_inverse(phi) @ t.translation
    return np.concatenate([rho, phi])


def v2t(dx) -> Isometry3:
    """Pose increment used by the iterative solvers.

    The first three entries are the translation, the last three the vector
    part of a unit quaternion (``w = sqrt(1 - |q|^2)``). For small increments
    the rotation is ``I + 2 skew(q)``, which is what the stereo Jacobian's
    ``-2 skew(p_c)`` block differentiates.
    """
    dx = np.asarray(dx, dtype=float).reshape(6)
    qx, qy, qz = dx[3:]
    n = qx * qx + qy * qy + qz * qz
    if n > 1.0:
        s = 1.0 / math.sqrt(n)
        qx, qy, qz, qw = qx * s, qy * s, qz * s, 0.0
    else:
        qw = math.sqrt(1.0 - n)
    return Isometry3(quaternion_to_rotation(qw, qx, qy, qz), dx[:3].copy())


def quaternion_to_rotation(w: float, x: float, y: float, z: float) -> np.ndarray:
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def rotation_to_quaternion(r: np.ndarray) -> tuple[float, float, float, float]:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    tr = np.trace(r)
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        w, x, y, z = 0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        w, x, y, z = (r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        w, x, y, z = (r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s
    else:
        s = 2.0 * math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        w, x, y, z = (r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    n = math.sqrt(w * w + x * x + y * y + z * z)
    return w / n, x / n, y / n, z / n


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera with a 3x4 projection matrix ``P`` (pixels)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    P: np.ndarray = None

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point outside the image")
        if self.P is None:
            p = np.array([[self.fx, 0.0, self.cx, 0.0],
                          [0.0, self.fy, self.cy, 0.0],
                          [0.0, 0.0, 1.0, 0.0]])
        else:
            p = np.asarray(self.P, dtype=float).reshape(3, 4)
        object.__setattr__(self, "P", p)

    def contains(self, r: float, c: float) -> bool:
        return 0.0 <= r < self.height and 0.0 <= c < self.width


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Rectified stereo pair. ``B`` is ``F_x`` times the metric baseline."""

    cam_L: Camera
    cam_R: Camera
    B: float

    def __post_init__(self):
        if not self.B > 0:
            raise GeometryError("stereo baseline term B must be positive")
        a, b = self.cam_L, self.cam_R
        if (a.width, a.height, a.fx, a.fy, a.cy) != (b.width, b.height, b.fx, b.fy, b.cy):
            raise GeometryError("stereo cameras are not in rectified configuration")

    @classmethod
    def from_intrinsics(cls, fx: float, fy: float, cx: float, cy: float,
                        baseline_m: float, width: int, height: int) -> StereoRig:
        B = fx * baseline_m
        left = Camera(fx, fy, cx, cy, width, height)
        p_r = left.P.copy()
        p_r[0, 3] = -B
        right = Camera(fx, fy, cx, cy, width, height, p_r)
        return cls(left, right, B)

    @property
    def baseline(self) -> float:
        return self.B / self.cam_L.fx


def project(p_c, cam: Camera) -> tuple[float, float]:
    """Project a camera-frame point, returns ``(r, c)``.

    Points outside the image are returned as-is; use :meth:`Camera.contains`.
    """
    a, b, c = cam.P @ np.append(np.asarray(p_c, dtype=float), 1.0)
    if c <= 0.0:
        raise BehindCamera(f"point {p_c!r} is behind the camera")
    return b / c, a / c


def project_points(points_c: np.ndarray, P: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of ``(N, 3)`` camera points, returns ``(r, c, depth)``.

    Rows with non-positive depth come back as NaN.
    """
    h = points_c @ P[:, :3].T + P[:, 3]
    depth = h[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(depth > 0.0, 1.0 / depth, np.nan)
    return h[:, 1] * inv, h[:, 0] * inv, depth


def triangulate(k_L, k_R, rig: StereoRig) -> np.ndarray:
    """Camera-frame point of a rectified stereo keypoint pair."""
    if k_L.r != k_R.r:
        raise GeometryError(f"stereo pair on different rows ({k_L.r} vs {k_R.r})")
    disparity = k_L.c - k_R.c
    if disparity < 1.0:
        raise PointAtInfinity(f"disparity {disparity} below one pixel")
    cam = rig.cam_L
    z = rig.B / disparity
    return np.array([z / cam.fx * (k_L.c - cam.cx), z / cam.fy * (k_L.r - cam.cy), z])


def stereo_jacobians(points_c: np.ndarray, rig: StereoRig) -> np.ndarray:
    """``(N, 4, 6)`` Jacobians of (left-c, left-r, right-c, right-r) w.r.t. a pose increment.

    Each is ``[J_L P_L; J_R P_R] J_T`` with ``J_T = [I, -2 skew(p_c); 0, 0]``,
    matching the increment parameterization of :func:`v2t`.
    """
    pts = np.asarray(points_c, dtype=float).reshape(-1, 3)
    n = len(pts)
    jt = np.zeros((n, 4, 6))
    jt[:, 0, 0] = jt[:, 1, 1] = jt[:, 2, 2] = 1.0
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    # -2 * skew(p)
    jt[:, 0, 4], jt[:, 0, 5] = 2.0 * z, -2.0 * y
    jt[:, 1, 3], jt[:, 1, 5] = -2.0 * z, 2.0 * x
    jt[:, 2, 3], jt[:, 2, 4] = 2.0 * y, -2.0 * x

    out = np.empty((n, 4, 6))
    for row, P in ((0, rig.cam_L.P), (2, rig.cam_R.P)):
        h = pts @ P[:, :3].T + P[:, 3]
        a, b, c = h[:, 0], h[:, 1], h[:, 2]
        if np.any(c <= 0.0):
            raise BehindCamera("point behind camera in stereo Jacobian")
        jp = np.zeros((n, 2, 3))
        jp[:, 0, 0] = jp[:, 1, 1] = 1.0 / c
        jp[:, 0, 2] = -a / (c * c)
        jp[:, 1, 2] = -b / (c * c)
        out[:, row:row + 2, :] = jp @ P @ jt
    return out


def stereo_jacobian(T_w2c: Isometry3, p_c, rig: StereoRig) -> np.ndarray:
    """4x6 stereo image point Jacobian at camera point ``p_c``.

    ``T_w2c`` is the pose the point was transformed with; the Jacobian only
    depends on ``p_c``, the argument is kept so call sites read like the
    optimizer they belong to.
    """
    return stereo_jacobians(np.asarray(p_c, dtype=float)[None, :], rig)[0]
