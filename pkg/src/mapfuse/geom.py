"""Core geometry: unit quaternions, SE(3) poses, trajectories, WGS84->ENU.

Conventions
-----------
* Quaternions are numpy arrays [w, x, y, z], unit norm, hemisphere
  normalized to w >= 0 after every operation.
* A pose maps sensor/body coordinates into the parent frame:
  ``x_parent = R @ x_body + t``.
* Twists are 6-vectors ordered (rotation rad, translation m).
* The local Cartesian frame is East-North-Up anchored at a configurable
  geodetic origin (by default the first valid GNSS fix of a run).

All values are immutable in spirit: operations return new objects and
never mutate their inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfRange, PreconditionError

# WGS84 ellipsoid
_WGS84_A = 6378137.0
_WGS84_F = 1.0 / 298.257223563
_WGS84_E2 = _WGS84_F * (2.0 - _WGS84_F)

GRAVITY = 9.80665  # m/s^2, ENU convention: gravity acts along -z


# ---------------------------------------------------------------------------
# quaternion primitives
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    """Unit-norm, hemisphere (w >= 0) representative of q."""
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0 or not math.isfinite(n):
        raise PreconditionError("cannot normalize zero/non-finite quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b (rotation b followed by a)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return quat_normalize(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = np.array([q[0], -q[1], -q[2], -q[3]])
    if out[0] < 0.0:
        out = -out
    return out


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix to quaternion (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s,
             (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s,
             (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s,
             (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
             (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return quat_normalize(q)


def quat_from_rotvec(v) -> np.ndarray:
    """Exponential map: rotation vector (axis * angle) to quaternion."""
    v = np.asarray(v, dtype=float)
    angle = math.sqrt(float(v @ v))
    if angle < 1e-12:
        # first-order series keeps tiny-angle updates exact to O(angle^3)
        return quat_normalize([1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
    axis = v / angle
    half = 0.5 * angle
    s = math.sin(half)
    return quat_normalize([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_to_rotvec(q) -> np.ndarray:
    """Logarithm map: quaternion to rotation vector."""
    q = quat_normalize(q)
    w = min(1.0, max(-1.0, float(q[0])))
    xyz = q[1:]
    s = math.sqrt(float(xyz @ xyz))
    if s < 1e-12:
        return 2.0 * xyz
    angle = 2.0 * math.atan2(s, w)
    return xyz * (angle / s)


def quat_slerp(a, b, u: float) -> np.ndarray:
    """Spherical linear interpolation from a (u=0) to b (u=1)."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    dot = float(a @ b)
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(a + u * (b - a))
    theta = math.acos(min(1.0, dot))
    st = math.sin(theta)
    return quat_normalize(
        a * (math.sin((1.0 - u) * theta) / st) + b * (math.sin(u * theta) / st)
    )


def so3_exp(v) -> np.ndarray:
    """Rotation vector to rotation matrix (Rodrigues)."""
    return quat_to_matrix(quat_from_rotvec(v))


def so3_log(m) -> np.ndarray:
    return quat_to_rotvec(matrix_to_quat(m))


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# SE(3)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseSE3:
    """Rigid transform: x_parent = R(q) @ x + t."""

    q: np.ndarray = field(default_factory=quat_identity)
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(self.q))
        t = np.asarray(self.t, dtype=float).reshape(3).copy()
        if not np.all(np.isfinite(t)):
            raise PreconditionError("non-finite translation")
        object.__setattr__(self, "t", t)

    @staticmethod
    def identity() -> "PoseSE3":
        return PoseSE3()

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def compose(self, other: "PoseSE3") -> "PoseSE3":
        r = self.rotation
        return PoseSE3(quat_multiply(self.q, other.q), r @ other.t + self.t)

    def inverse(self) -> "PoseSE3":
        qc = quat_conjugate(self.q)
        return PoseSE3(qc, -(quat_to_matrix(qc) @ self.t))

    def apply(self, points) -> np.ndarray:
        """Transform an (N,3) array or single 3-vector."""
        p = np.asarray(points, dtype=float)
        single = p.ndim == 1
        p = np.atleast_2d(p)
        out = p @ self.rotation.T + self.t
        return out[0] if single else out

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.t
        return m

    @staticmethod
    def from_matrix(m) -> "PoseSE3":
        m = np.asarray(m, dtype=float)
        return PoseSE3(matrix_to_quat(m[:3, :3]), m[:3, 3])

    def almost_equal(self, other: "PoseSE3", tol: float = 1e-9) -> bool:
        dq = min(np.abs(self.q - other.q).max(), np.abs(self.q + other.q).max())
        return dq <= tol and np.abs(self.t - other.t).max() <= tol


def se3_compose(a: PoseSE3, b: PoseSE3) -> PoseSE3:
    return a.compose(b)


def se3_log(p: PoseSE3) -> np.ndarray:
    """Twist (rx, ry, rz, tx, ty, tz) with exp(log(p)) == p."""
    theta = quat_to_rotvec(p.q)
    v_inv = _so3_left_jacobian_inv(theta)
    rho = v_inv @ p.t
    return np.concatenate([theta, rho])


def se3_exp(xi) -> PoseSE3:
    xi = np.asarray(xi, dtype=float)
    theta = xi[:3]
    rho = xi[3:]
    v = _so3_left_jacobian(theta)
    return PoseSE3(quat_from_rotvec(theta), v @ rho)


def _so3_left_jacobian(theta) -> np.ndarray:
    angle = math.sqrt(float(theta @ theta))
    s = skew(theta)
    if angle < 1e-8:
        return np.eye(3) + 0.5 * s + (s @ s) / 6.0
    a2 = angle * angle
    return (
        np.eye(3)
        + ((1.0 - math.cos(angle)) / a2) * s
        + ((angle - math.sin(angle)) / (a2 * angle)) * (s @ s)
    )


def _so3_left_jacobian_inv(theta) -> np.ndarray:
    angle = math.sqrt(float(theta @ theta))
    s = skew(theta)
    if angle < 1e-8:
        return np.eye(3) - 0.5 * s + (s @ s) / 12.0
    half = 0.5 * angle
    cot = half / math.tan(half)
    return np.eye(3) - 0.5 * s + ((1.0 - cot) / (angle * angle)) * (s @ s)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

class Trajectory:
    """Time-indexed pose sequence with strictly increasing stamps."""

    def __init__(self, stamps, poses):
        stamps = np.asarray(stamps, dtype=float)
        if stamps.ndim != 1 or len(stamps) != len(poses):
            raise PreconditionError("stamps/poses length mismatch")
        if len(stamps) >= 2 and not np.all(np.diff(stamps) > 0):
            raise PreconditionError("trajectory stamps must strictly increase")
        self.stamps = stamps
        self.poses = list(poses)

    def __len__(self):
        return len(self.stamps)

    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self.poses])

    def interpolate(self, t: float) -> PoseSE3:
        """Pose at time t: lerp translation, slerp rotation."""
        ts = self.stamps
        if len(ts) == 0:
            raise OutOfRange("empty trajectory")
        if t < ts[0] or t > ts[-1]:
            raise OutOfRange(f"t={t} outside [{ts[0]}, {ts[-1]}]")
        i = int(np.searchsorted(ts, t))
        if i < len(ts) and ts[i] == t:
            return self.poses[i]
        lo, hi = i - 1, i
        u = (t - ts[lo]) / (ts[hi] - ts[lo])
        pa, pb = self.poses[lo], self.poses[hi]
        return PoseSE3(quat_slerp(pa.q, pb.q, u), (1.0 - u) * pa.t + u * pb.t)

    def transformed(self, world_from_old: PoseSE3) -> "Trajectory":
        return Trajectory(self.stamps, [world_from_old.compose(p) for p in self.poses])


def interpolate_pose(traj: Trajectory, t: float) -> PoseSE3:
    return traj.interpolate(t)


# ---------------------------------------------------------------------------
# geodetic conversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeoCoordinate:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        if not (abs(self.latitude) <= 90.0 and abs(self.longitude) <= 180.0):
            raise PreconditionError(
                f"invalid geodetic coordinate ({self.latitude}, {self.longitude})"
            )


def _geodetic_to_ecef(g: GeoCoordinate) -> np.ndarray:
    lat = math.radians(g.latitude)
    lon = math.radians(g.longitude)
    sl, cl = math.sin(lat), math.cos(lat)
    n = _WGS84_A / math.sqrt(1.0 - _WGS84_E2 * sl * sl)
    return np.array(
        [
            (n + g.altitude) * cl * math.cos(lon),
            (n + g.altitude) * cl * math.sin(lon),
            (n * (1.0 - _WGS84_E2) + g.altitude) * sl,
        ]
    )


def _ecef_to_geodetic(p) -> GeoCoordinate:
    # Bowring's iteration; converges to sub-mm in a handful of steps
    x, y, z = p
    lon = math.atan2(y, x)
    r = math.hypot(x, y)
    lat = math.atan2(z, r * (1.0 - _WGS84_E2))
    for _ in range(6):
        sl = math.sin(lat)
        n = _WGS84_A / math.sqrt(1.0 - _WGS84_E2 * sl * sl)
        alt = r / math.cos(lat) - n
        lat = math.atan2(z, r * (1.0 - _WGS84_E2 * n / (n + alt)))
    sl = math.sin(lat)
    n = _WGS84_A / math.sqrt(1.0 - _WGS84_E2 * sl * sl)
    alt = r / math.cos(lat) - n
    return GeoCoordinate(math.degrees(lat), math.degrees(lon), alt)


class EnuOrigin:
    """Geodetic anchor caching the local East-North-Up tangent basis."""

    def __init__(self, origin: GeoCoordinate):
        self.origin = origin
        self._ecef0 = _geodetic_to_ecef(origin)
        lat = math.radians(origin.latitude)
        lon = math.radians(origin.longitude)
        sl, cl = math.sin(lat), math.cos(lat)
        so, co = math.sin(lon), math.cos(lon)
        # rows: east, north, up unit vectors in ECEF
        self._rot = np.array(
            [
                [-so, co, 0.0],
                [-sl * co, -sl * so, cl],
                [cl * co, cl * so, sl],
            ]
        )

    def to_enu(self, g: GeoCoordinate) -> np.ndarray:
        return self._rot @ (_geodetic_to_ecef(g) - self._ecef0)

    def to_geodetic(self, enu) -> GeoCoordinate:
        enu = np.asarray(enu, dtype=float)
        return _ecef_to_geodetic(self._ecef0 + self._rot.T @ enu)


def wgs84_to_enu(g: GeoCoordinate, origin: EnuOrigin) -> np.ndarray:
    return origin.to_enu(g)


def enu_to_wgs84(enu, origin: EnuOrigin) -> GeoCoordinate:
    return origin.to_geodetic(enu)
