"""Serial-arm kinematics and the trapezoidal-velocity joint displacement bound.

The chain is a list of revolute joints. Each joint first translates by its
fixed link offset and then rotates about its local axis:

    camera = lift(base) @ mount @ prod_i(Trans(offset_i) Rot(axis_i, q_i)) @ flange @ eef_to_camera
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from .geometry import Pose6, homogeneous, se2_matrix, ypr_matrix

POS_TOL = 1e-3
ANG_TOL = np.radians(0.5)
DATA = Path(__file__).parent / "data"


class JointLimitError(ValueError):
    pass


@dataclass
class ArmModel:
    axes: np.ndarray
    offsets: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    omega_max: np.ndarray
    alpha_max: np.ndarray
    mount: np.ndarray = field(default_factory=lambda: np.eye(4))
    flange: np.ndarray = field(default_factory=lambda: np.eye(4))
    eef_to_camera: np.ndarray = field(default_factory=lambda: np.eye(4))
    ready: np.ndarray | None = None
    name: str = "arm"

    def __post_init__(self):
        self.axes = np.asarray(self.axes, dtype=float).reshape(-1, 3)
        self.axes /= np.linalg.norm(self.axes, axis=1, keepdims=True)
        n = len(self.axes)
        self.offsets = np.asarray(self.offsets, dtype=float).reshape(n, 3)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        self.omega_max = np.broadcast_to(np.asarray(self.omega_max, dtype=float), (n,)).copy()
        self.alpha_max = np.broadcast_to(np.asarray(self.alpha_max, dtype=float), (n,)).copy()
        if np.any(self.lower >= self.upper):
            raise ValueError("joint limits need min < max")
        if np.any(self.omega_max <= 0) or np.any(self.alpha_max <= 0):
            raise ValueError("omega_max and alpha_max must be positive")
        if self.ready is None:
            self.ready = np.clip(np.zeros(n), self.lower, self.upper)
        self.ready = np.asarray(self.ready, dtype=float)

    @property
    def n_joints(self):
        return len(self.axes)

    @property
    def reach(self):
        """Upper bound on the distance from the arm root to the camera."""
        return float(np.linalg.norm(self.offsets, axis=1).sum()
                     + np.linalg.norm(self.flange[:3, 3]) + np.linalg.norm(self.eef_to_camera[:3, 3]))

    def within_limits(self, q, tol=1e-12):
        q = np.asarray(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clip(self, q):
        return np.clip(q, self.lower, self.upper)


def _transform(d):
    xyz = d.get("xyz", [0.0, 0.0, 0.0])
    ypr = d.get("ypr", [0.0, 0.0, 0.0])
    return homogeneous(ypr_matrix(*ypr), xyz)


def load_arm(path=None):
    """Read an arm description YAML; ``None`` loads the bundled default arm."""
    path = Path(path) if path is not None else DATA / "default_arm.yaml"
    d = yaml.safe_load(path.read_text())
    joints = d["joints"]
    return ArmModel(
        axes=[j["axis"] for j in joints],
        offsets=[j.get("offset", [0.0, 0.0, 0.0]) for j in joints],
        lower=[j["limits"][0] for j in joints],
        upper=[j["limits"][1] for j in joints],
        omega_max=[j.get("omega_max", d.get("omega_max")) for j in joints],
        alpha_max=[j.get("alpha_max", d.get("alpha_max")) for j in joints],
        mount=_transform(d.get("mount", {})),
        flange=_transform(d.get("flange", {})),
        eef_to_camera=_transform(d.get("eef_to_camera", {})),
        ready=d.get("ready"),
        name=d.get("name", path.stem),
    )


def default_arm():
    return load_arm(None)


# --------------------------------------------------------------------------
# forward kinematics


def _axis_rotations(axes, q):
    """Batched Rodrigues: rotation matrices for angles ``q`` (B, n) about ``axes`` (n, 3)."""
    B, n = q.shape
    K = np.zeros((n, 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -axes[:, 2], axes[:, 1]
    K[:, 1, 0], K[:, 1, 2] = axes[:, 2], -axes[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -axes[:, 1], axes[:, 0]
    K2 = K @ K
    s = np.sin(q)[:, :, None, None]
    c = np.cos(q)[:, :, None, None]
    return np.eye(3) + s * K[None] + (1.0 - c) * K2[None]


def chain_frames(arm, q, root=None):
    """Joint frames and camera transform for a batch of configurations.

    Returns ``(origins, axes_world, T_cam)`` with shapes (B, n, 3), (B, n, 3)
    and (B, 4, 4). ``root`` is the world transform of the arm root, one per
    batch entry or shared.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    B, n = q.shape
    if root is None:
        root = np.eye(4)
    root = np.broadcast_to(root, (B, 4, 4))
    Rj = _axis_rotations(arm.axes, q)
    R = root[:, :3, :3].copy()
    p = root[:, :3, 3].copy()
    origins = np.empty((B, n, 3))
    axes_w = np.empty((B, n, 3))
    for i in range(n):
        p = p + R @ arm.offsets[i]
        origins[:, i] = p
        axes_w[:, i] = R @ arm.axes[i]
        R = R @ Rj[:, i]
    tail = arm.flange @ arm.eef_to_camera
    T = np.zeros((B, 4, 4))
    T[:, :3, :3] = R @ tail[:3, :3]
    T[:, :3, 3] = p + R @ tail[:3, 3]
    T[:, 3, 3] = 1.0
    return origins, axes_w, T


def arm_root(arm, base_pose):
    return se2_matrix(base_pose) @ arm.mount


def forward_kinematics(arm, q, base_pose=(0.0, 0.0, 0.0), check_limits=True):
    """Camera pose for joint angles ``q`` with the base at SE(2) ``base_pose``."""
    q = np.asarray(q, dtype=float)
    if check_limits and not arm.within_limits(q):
        raise JointLimitError(f"configuration {q} violates joint limits")
    _, _, T = chain_frames(arm, q[None], arm_root(arm, base_pose))
    return Pose6.from_matrix(T[0])


def fk_matrix(arm, q, base_pose=(0.0, 0.0, 0.0)):
    _, _, T = chain_frames(arm, np.asarray(q, dtype=float)[None], arm_root(arm, base_pose))
    return T[0]


# --------------------------------------------------------------------------
# inverse kinematics


def _rotation_error(R_target, R_cur):
    """World-frame rotation vector taking ``R_cur`` to ``R_target`` (batched)."""
    return Rotation.from_matrix(R_target @ np.transpose(R_cur, (0, 2, 1))).as_rotvec()


@dataclass
class IKResult:
    q: np.ndarray
    success: bool
    iterations: int
    pos_err: float
    ang_err: float


def solve_ik_batch(arm, targets, root, seed, max_iter=200, damping=0.05, max_step=0.3,
                   pos_tol=POS_TOL, ang_tol=ANG_TOL, stall=25):
    """Damped least-squares IK for many targets from a shared seed.

    Args:
        targets: (B, 4, 4) camera transforms in world coordinates.
        root: world transform of the arm root (shared by the batch).
        seed: starting configuration (n,) or per-target (B, n).
        stall: give up on a target whose error (meters plus radians) has not
            dropped by 1% within this many iterations; 0 disables.

    Returns:
        ``(q, success, iterations, pos_err, ang_err)`` arrays. Joint angles
        are clamped to the limits after every step, so every returned
        configuration is within limits.
    """
    targets = np.asarray(targets, dtype=float)
    B = len(targets)
    n = arm.n_joints
    q = np.array(np.broadcast_to(seed, (B, n)), dtype=float)
    q = arm.clip(q)
    iters = np.zeros(B, dtype=int)
    pos_err = np.full(B, np.inf)
    ang_err = np.full(B, np.inf)
    done = np.zeros(B, dtype=bool)
    lam2 = damping**2
    active = np.arange(B)
    best = np.full(B, np.inf)
    best_it = np.zeros(B, dtype=int)
    for it in range(max_iter + 1):
        if len(active) == 0:
            break
        origins, axes_w, T = chain_frames(arm, q[active], root)
        ep = targets[active, :3, 3] - T[:, :3, 3]
        eo = _rotation_error(targets[active, :3, :3], T[:, :3, :3])
        pe = np.linalg.norm(ep, axis=1)
        ae = np.linalg.norm(eo, axis=1)
        pos_err[active] = pe
        ang_err[active] = ae
        ok = (pe < pos_tol) & (ae < ang_tol)
        done[active[ok]] = True
        iters[active] = it
        if it == max_iter:
            break
        err = pe + ae
        better = err < 0.99 * best[active]
        best[active[better]] = err[better]
        best_it[active[better]] = it
        keep = ~ok & (it - best_it[active] < stall) if stall else ~ok
        active = active[keep]
        if len(active) == 0:
            break
        origins, axes_w, T = origins[keep], axes_w[keep], T[keep]
        ep, eo = ep[keep], eo[keep]
        # geometric Jacobian, rows: linear then angular velocity
        lever = T[:, None, :3, 3] - origins
        J = np.concatenate([np.cross(axes_w, lever), axes_w], axis=2).transpose(0, 2, 1)
        e = np.concatenate([ep, eo], axis=1)
        JJt = J @ J.transpose(0, 2, 1) + lam2 * np.eye(6)
        dq = (J.transpose(0, 2, 1) @ np.linalg.solve(JJt, e[:, :, None]))[:, :, 0]
        big = np.abs(dq).max(axis=1, keepdims=True)
        dq *= np.minimum(1.0, max_step / np.maximum(big, 1e-12))
        q[active] = arm.clip(q[active] + dq)
    return q, done, iters, pos_err, ang_err


def restart_configs(arm, count):
    """Fixed pseudo-random start configurations used when the seeded solve fails."""
    return np.random.default_rng(12345).uniform(arm.lower, arm.upper, (count, arm.n_joints))


def inverse_kinematics(arm, target, base_pose, seed, max_iter=200, restarts=12):
    """Joint angles placing the camera at ``target`` or ``None`` on failure.

    Success means the forward kinematics of the result is within 1 mm and
    0.5 degrees of the target, with every joint inside its limits. The solve
    starts from ``seed``; if that does not converge it is retried from
    ``restarts`` fixed start configurations, so the result depends only on
    the inputs.
    """
    res = ik_detail(arm, target, base_pose, seed, max_iter, restarts)
    return res.q if res.success else None


def ik_detail(arm, target, base_pose, seed, max_iter=200, restarts=0):
    seed = np.asarray(seed, dtype=float)
    if not arm.within_limits(seed):
        raise JointLimitError("IK seed violates joint limits")
    root = arm_root(arm, base_pose)
    starts = [seed] + list(restart_configs(arm, restarts))
    best = None
    for start in starts:
        q, ok, it, pe, ae = solve_ik_batch(arm, target.matrix[None], root, start, max_iter)
        res = IKResult(q[0], bool(ok[0]), int(it[0]), float(pe[0]), float(ae[0]))
        if res.success:
            return res
        if best is None:
            best = res
    return best


# --------------------------------------------------------------------------
# trapezoidal velocity profile bound


def tvp_bound(omega_max, alpha_max, t):
    """Largest joint displacement reachable from rest in time ``t``.

    Accelerate at ``alpha_max`` until ``omega_max`` is reached at
    ``T_q = omega_max / alpha_max``, then cruise. Works elementwise on arrays.
    """
    omega_max = np.asarray(omega_max, dtype=float)
    alpha_max = np.asarray(alpha_max, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    tq = omega_max / alpha_max
    ramp = 0.5 * alpha_max * t**2
    cruise = 0.5 * alpha_max * tq**2 + omega_max * (t - tq)
    out = np.where(t > tq, cruise, ramp)
    return out if out.ndim else float(out)


def joint_step_bound(arm, T_step):
    return tvp_bound(arm.omega_max, arm.alpha_max, T_step)


def reachable_within_step(arm, q_from, q_to, T_step):
    """Every joint moves no further than its own TVP bound in ``T_step``."""
    dq = np.abs(np.asarray(q_to, dtype=float) - np.asarray(q_from, dtype=float))
    return bool(np.all(dq <= joint_step_bound(arm, T_step)))
