"""Small rigid-body helpers shared by the scene, camera and arm code.

Quaternions are stored scalar-first, ``(w, x, y, z)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_TOL = 1e-9


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def ypr_matrix(yaw_deg, pitch_deg, roll_deg):
    """Rotation from intrinsic yaw (z), pitch (y), roll (x) angles in degrees."""
    y, p, r = np.radians([yaw_deg, pitch_deg, roll_deg])
    return rot_z(y) @ rot_y(p) @ rot_x(r)


def quat_from_matrix(R):
    q = Rotation.from_matrix(R).as_quat(scalar_first=True)
    # canonical hemisphere keeps serialized output stable
    if q[0] < 0:
        q = -q
    return q


def matrix_from_quat(q):
    return Rotation.from_quat(np.asarray(q, dtype=float), scalar_first=True).as_matrix()


def homogeneous(R, t):
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def se2_matrix(base_pose):
    """Lift an SE(2) pose ``(x, y, yaw)`` to a 4x4 transform on the ground plane."""
    x, y, yaw = base_pose
    return homogeneous(rot_z(yaw), [x, y, 0.0])


def look_at(position, target, up=(0.0, 0.0, 1.0)):
    """Rotation whose +x axis points from ``position`` toward ``target``.

    The camera's +z is kept as close to ``up`` as possible (no roll). Falls
    back to world +x as the up hint when looking straight up or down.
    """
    fwd = np.asarray(target, dtype=float) - np.asarray(position, dtype=float)
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        return np.eye(3)
    fwd = fwd / n
    up = np.asarray(up, dtype=float)
    left = np.cross(up, fwd)
    if np.linalg.norm(left) < 1e-9:
        left = np.cross([1.0, 0.0, 0.0], fwd)
    left /= np.linalg.norm(left)
    cam_up = np.cross(fwd, left)
    return np.column_stack([fwd, left, cam_up])


def angle_between(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class Pose6:
    """Camera pose: position in meters and unit quaternion ``(w, x, y, z)``.

    The optical axis is the local +x axis, +y points left and +z up.
    """

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.asarray(self.position, dtype=float).reshape(3)
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
            raise ValueError(f"quaternion norm {np.linalg.norm(q)!r} is not 1")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        q = quat_from_matrix(T[:3, :3])
        return cls(T[:3, 3].copy(), q / np.linalg.norm(q))

    @classmethod
    def from_rotation(cls, position, R):
        q = quat_from_matrix(R)
        return cls(position, q / np.linalg.norm(q))

    @property
    def rotation(self):
        return matrix_from_quat(self.orientation)

    @property
    def matrix(self):
        return homogeneous(self.rotation, self.position)

    @property
    def axis(self):
        """Unit optical axis in world coordinates."""
        return self.rotation[:, 0]

    def distance_to(self, other):
        """Return ``(position error in m, orientation error in rad)``."""
        dp = float(np.linalg.norm(self.position - other.position))
        dR = self.rotation.T @ other.rotation
        ang = float(np.linalg.norm(Rotation.from_matrix(dR).as_rotvec()))
        return dp, ang
