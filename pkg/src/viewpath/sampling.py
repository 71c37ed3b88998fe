"""Candidate camera poses for the next base location and their filtering.

Candidates are drawn in the ball the end effector can sweep in one step
(``v_eef * T_step`` around the current camera position). A candidate
survives when its clearance sphere is free, IK seeded at the current joint
configuration converges, and no joint has to move further than its
trapezoidal-velocity bound allows.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import Pose6, look_at, quat_from_matrix
from .kinematics import arm_root, joint_step_bound, solve_ik_batch

CLEARANCE = 0.12
LOOK_AT_FRACTION = 0.7
STAGES = ("collision", "ik", "joint_distance")


@dataclass
class PoseBatch:
    """Array-backed sequence of camera poses (positions and rotation matrices)."""

    positions: np.ndarray
    rotations: np.ndarray

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i):
        if isinstance(i, (slice, np.ndarray, list)):
            return PoseBatch(self.positions[i], self.rotations[i])
        return Pose6.from_rotation(self.positions[i], self.rotations[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def axes(self):
        return self.rotations[:, :, 0]

    @property
    def matrices(self):
        T = np.zeros((len(self), 4, 4))
        T[:, :3, :3] = self.rotations
        T[:, :3, 3] = self.positions
        T[:, 3, 3] = 1.0
        return T

    @classmethod
    def from_poses(cls, poses):
        poses = list(poses)
        if not poses:
            return cls(np.zeros((0, 3)), np.zeros((0, 3, 3)))
        return cls(np.array([p.position for p in poses]), np.array([p.rotation for p in poses]))


def _unit_vectors(n, rng):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_candidates(tau_curr, v_eef, T_step, targets, M, rng, look_at_fraction=LOOK_AT_FRACTION,
                      surface_only=False):
    """Draw ``M`` camera poses reachable by the end effector within one step.

    Args:
        tau_curr: current camera pose.
        targets: list of ``(lo, hi)`` world boxes of the objects of interest;
            look-at orientations aim at points drawn in these boxes.
        rng: ``numpy.random.Generator`` or an integer seed.
        surface_only: put every position on the sphere of radius
            ``v_eef * T_step`` instead of in the ball.

    Positions are stratified by shell: the ``M`` radii split the ball into
    equal-volume shells with one sample each. ``look_at_fraction`` of the
    candidates look at an object of interest (objects taken round robin),
    the rest get uniformly random orientations.
    """
    if not (v_eef >= 0 and T_step >= 0 and M >= 1):
        raise ValueError("need v_eef >= 0, T_step >= 0 and M >= 1")
    rng = np.random.default_rng(rng)
    radius = v_eef * T_step
    if surface_only:
        r = np.full(M, radius)
    else:
        shells = (rng.permutation(M) + rng.random(M)) / M
        r = radius * np.cbrt(shells)
    positions = tau_curr.position + r[:, None] * _unit_vectors(M, rng)
    n_look = int(round(look_at_fraction * M)) if targets else 0
    rotations = np.empty((M, 3, 3))
    for k in range(n_look):
        lo, hi = targets[k % len(targets)]
        aim = lo + rng.random(3) * (hi - lo)
        rotations[k] = look_at(positions[k], aim)
    if n_look < M:
        rotations[n_look:] = Rotation.random(M - n_look, random_state=rng).as_matrix()
    return PoseBatch(positions, rotations)


def interest_boxes(scene):
    return [o.aabb() for o in scene.interest_objects]


def _box_offsets(grid, clearance):
    w = int(np.ceil(clearance / grid.voxel_size)) + 1
    r = np.arange(-w, w + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


def collision_free(grid, positions, clearance=CLEARANCE):
    """True where a sphere of radius ``clearance`` around the point is in free space.

    Every voxel the closed sphere touches must be free; cells outside the
    grid count as occupied, so the ground plane and the world boundary act
    as walls.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    out = grid.in_bounds(positions)
    if not out.any():
        return out
    vs = grid.voxel_size
    offs = _box_offsets(grid, clearance)
    idx = grid.locate(positions[out])
    cells = idx[:, None, :] + offs[None, :, :]
    lo = grid.origin + cells * vs
    nearest = np.clip(positions[out][:, None, :], lo, lo + vs)
    touch = np.linalg.norm(nearest - positions[out][:, None, :], axis=2) <= clearance
    dims = np.asarray(grid.dims)
    inside = np.all((cells >= 0) & (cells < dims), axis=2)
    clipped = np.clip(cells, 0, dims - 1)
    occ = grid.labels[clipped[..., 0], clipped[..., 1], clipped[..., 2]] != 0
    blocked = touch & (occ | ~inside)
    out[np.flatnonzero(out)] = ~blocked.any(axis=1)
    return out


@dataclass
class CandidateSet:
    """Filtered candidates for one base index."""

    base_index: int
    poses: PoseBatch
    joints: np.ndarray
    stats: dict = field(default_factory=dict)
    source: np.ndarray | None = None

    def __len__(self):
        return len(self.poses)


def filter_candidates(candidates, q_curr, grid, arm, base_next, T_step, base_index=0,
                      joint_filter=True, clearance=CLEARANCE):
    """Keep the candidates the arm can reach by the next base pose.

    Stages, in order: a workspace-radius prefilter (counted as IK
    rejections), clearance-sphere collision check, damped least-squares IK
    seeded at ``q_curr``, and the per-joint TVP displacement bound. The
    outcome does not depend on the order. With ``joint_filter=False`` the
    last stage is skipped (ablation).
    """
    n = len(candidates)
    stats = {"total": n, "collision": 0, "ik": 0, "joint_distance": 0, "kept": 0}
    keep = np.arange(n)
    root = arm_root(arm, base_next)
    reach = np.linalg.norm(candidates.positions - root[:3, 3], axis=1) <= arm.reach + 1e-9
    free = collision_free(grid, candidates.positions, clearance)
    stats["collision"] = int((~free & reach).sum())
    stats["ik"] = int((~reach).sum())
    keep = keep[reach & free]
    q = np.zeros((0, arm.n_joints))
    if len(keep):
        q, ok, *_ = solve_ik_batch(arm, candidates.matrices[keep], root, q_curr)
        stats["ik"] += int((~ok).sum())
        keep, q = keep[ok], q[ok]
    if joint_filter and len(keep):
        bound = joint_step_bound(arm, T_step)
        ok = np.all(np.abs(q - q_curr) <= bound, axis=1)
        stats["joint_distance"] = int((~ok).sum())
        keep, q = keep[ok], q[ok]
    stats["kept"] = len(keep)
    return CandidateSet(base_index, candidates[keep], q, stats, keep)


def reachability_map(cset_positions, grid_size):
    """Count surviving candidates per cell of a cubic binning (a reachability map)."""
    cells = np.floor(np.asarray(cset_positions) / grid_size).astype(np.int64)
    keys, counts = np.unique(cells, axis=0, return_counts=True)
    return {tuple(k): int(c) for k, c in zip(keys, counts)}


def dump_candidates_csv(path, candidates, survivors_idx, stage_of_reject=None):
    """Write every candidate with its survive/reject status."""
    survived = np.zeros(len(candidates), dtype=bool)
    survived[np.asarray(survivors_idx, dtype=int)] = True
    with open(path, "w") as f:
        f.write("x,y,z,qw,qx,qy,qz,survived,stage\n")
        for i in range(len(candidates)):
            q = quat_from_matrix(candidates.rotations[i])
            p = candidates.positions[i]
            stage = "" if survived[i] else (stage_of_reject[i] if stage_of_reject is not None else "rejected")
            f.write(f"{p[0]:.6f},{p[1]:.6f},{p[2]:.6f},{q[0]:.9f},{q[1]:.9f},{q[2]:.9f},{q[3]:.9f},"
                    f"{int(survived[i])},{stage}\n")
