import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viewpath.config import PlannerConfig
from viewpath.geometry import Pose6
from viewpath.kinematics import forward_kinematics, ik_detail, joint_step_bound
from viewpath.scene import SceneDescription, SceneObject, voxelize
from viewpath.sampling import (
    PoseBatch,
    collision_free,
    filter_candidates,
    interest_boxes,
    reachability_map,
    sample_candidates,
)


def sphere_is_free(grid, p, r):
    """Independent clearance check: scan every voxel of the grid."""
    # cells beyond the world count as occupied
    if np.any(p - grid.origin <= r) or np.any(grid.world_max - p <= r):
        return False
    occ = np.argwhere(grid.labels != 0)
    vlo = grid.origin + occ * grid.voxel_size
    nearest = np.clip(p, vlo, vlo + grid.voxel_size)
    return bool(np.all(np.linalg.norm(nearest - p, axis=1) > r))


def test_zero_radius_keeps_current_position():
    tau = Pose6.from_rotation([0.3, -0.2, 1.0], np.eye(3))
    batch = sample_candidates(tau, 0.0, 1.0, [], 50, 0)
    assert np.all(batch.positions == tau.position)


def test_default_candidate_count():
    cfg = PlannerConfig()
    assert cfg.M == 980
    tau = Pose6.from_rotation([0.0, 0.0, 1.0], np.eye(3))
    batch = sample_candidates(tau, cfg.v_eef, cfg.T_step, [(np.zeros(3), np.ones(3))], cfg.M, 1)
    assert len(batch) == 980


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.floats(0.2, 3.0), st.booleans())
def test_positions_stay_in_the_ball(seed, v, T, surface):
    tau = Pose6.from_rotation([1.0, 2.0, 1.0], np.eye(3))
    batch = sample_candidates(tau, v, T, [(np.zeros(3), np.ones(3))], 200, seed, surface_only=surface)
    r = np.linalg.norm(batch.positions - tau.position, axis=1)
    assert np.all(r <= v * T + 1e-12)
    if surface:
        assert r == pytest.approx(np.full(200, v * T))
    R = batch.rotations
    assert np.einsum("nij,nik->njk", R, R) == pytest.approx(np.broadcast_to(np.eye(3), R.shape), abs=1e-9)


def test_ball_sampling_reaches_inner_shells():
    tau = Pose6.from_rotation([0.0, 0.0, 0.0], np.eye(3))
    batch = sample_candidates(tau, 0.65, 1.0, [], 980, 3)
    r = np.linalg.norm(batch.positions, axis=1) / 0.65
    # equal-volume shells: the fraction inside radius s is s^3
    assert np.mean(r <= 0.5) == pytest.approx(0.125, abs=0.01)


def test_look_at_share_aims_at_targets():
    tau = Pose6.from_rotation([0.0, -2.0, 1.0], np.eye(3))
    box = (np.array([-0.5, -0.5, 0.0]), np.array([0.5, 0.5, 1.0]))
    batch = sample_candidates(tau, 0.5, 1.0, [box], 100, 7, look_at_fraction=0.7)
    for k in range(70):
        p, ax = batch.positions[k], batch.axes[k]
        s = np.linspace(0, 5, 2001)[:, None]
        pts = p + s * ax
        assert np.any(np.all((pts >= box[0] - 1e-6) & (pts <= box[1] + 1e-6), axis=1))


def test_sampling_is_deterministic():
    tau = Pose6.from_rotation([0.0, 0.0, 1.0], np.eye(3))
    a = sample_candidates(tau, 0.65, 1.0, [(np.zeros(3), np.ones(3))], 100, 42)
    b = sample_candidates(tau, 0.65, 1.0, [(np.zeros(3), np.ones(3))], 100, 42)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.rotations, b.rotations)


def test_candidate_inside_object_is_a_collision(cube, arm):
    _, grid = cube
    batch = PoseBatch(np.array([[0.0, 0.0, 0.5]]), np.eye(3)[None])
    assert not collision_free(grid, batch.positions)[0]
    cset = filter_candidates(batch, arm.ready, grid, arm, (-1.0, 0.0, 0.0), 1.0)
    assert len(cset) == 0
    assert cset.stats["collision"] == 1


def test_collision_check_matches_scan(cube):
    _, grid = cube
    rng = np.random.default_rng(8)
    pts = rng.uniform([-2.6, -2.6, -0.1], [2.6, 2.6, 2.1], (300, 3))
    fast = collision_free(grid, pts, 0.12)
    slow = [sphere_is_free(grid, p, 0.12) for p in pts]
    assert fast.tolist() == slow


def test_identity_candidate_survives(cube, arm):
    _, grid = cube
    base = (-1.8, 0.0, 0.0)
    tau = forward_kinematics(arm, arm.ready, base)
    cset = filter_candidates(PoseBatch.from_poses([tau]), arm.ready, grid, arm, base, 1.0)
    assert len(cset) == 1
    assert cset.joints[0] == pytest.approx(arm.ready)


def check_filter(grid, arm, q_curr, base_next, cands, T, joint_filter=True):
    cset = filter_candidates(cands, q_curr, grid, arm, base_next, T, joint_filter=joint_filter)
    bound = joint_step_bound(arm, T)
    survivors = set(cset.source.tolist())
    for k, q in zip(cset.source, cset.joints):
        tau = cands[int(k)]
        assert sphere_is_free(grid, tau.position, 0.12)
        assert arm.within_limits(q)
        dp, ang = forward_kinematics(arm, q, base_next).distance_to(tau)
        assert dp < 1e-3 and ang < np.radians(0.5)
        if joint_filter:
            assert np.all(np.abs(q - q_curr) <= bound)
    for k in range(len(cands)):
        if k in survivors:
            continue
        tau = cands[k]
        if not sphere_is_free(grid, tau.position, 0.12):
            continue
        res = ik_detail(arm, tau, base_next, q_curr)
        if not res.success:
            continue
        assert joint_filter and not np.all(np.abs(res.q - q_curr) <= bound)
    return cset


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_filter_equals_predicate_recheck(seed, arm):
    rng = np.random.default_rng(seed)
    objs = [SceneObject("o", "box", {"size": rng.uniform(0.3, 0.8, 3)}, [rng.uniform(-0.4, 0.4), 0.6, 0.45])]
    scene = SceneDescription(objs, [-2.0, -2.0, 0.0], [2.0, 2.0, 2.0], 0.05)
    grid = voxelize(scene)
    base = (rng.uniform(-0.5, 0.5), -0.9, rng.uniform(0.5, 2.5))
    tau = forward_kinematics(arm, arm.ready, base)
    cands = sample_candidates(tau, 0.65, 1.0, interest_boxes(scene), 60, seed)
    cset = check_filter(grid, arm, arm.ready, base, cands, 1.0)
    assert cset.stats["total"] == 60
    assert sum(cset.stats[k] for k in ("collision", "ik", "joint_distance", "kept")) == 60
    # without the joint filter the survivors form a superset
    loose = check_filter(grid, arm, arm.ready, base, cands, 1.0, joint_filter=False)
    assert set(cset.source.tolist()) <= set(loose.source.tolist())


def test_filter_is_deterministic(cube, arm):
    scene, grid = cube
    base = (-1.8, 0.0, 0.0)
    tau = forward_kinematics(arm, arm.ready, base)
    runs = []
    for _ in range(2):
        cands = sample_candidates(tau, 0.65, 1.0, interest_boxes(scene), 80, 5)
        cset = filter_candidates(cands, arm.ready, grid, arm, base, 1.0)
        runs.append((cset.source.copy(), cset.joints.copy()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])


def test_reachability_map_support_is_the_ball(arm):
    scene = SceneDescription([], [-3.0, -3.0, 0.0], [3.0, 3.0, 3.0], 0.1)
    grid = voxelize(scene)
    base = (0.0, 0.0, 0.0)
    tau = forward_kinematics(arm, arm.ready, base)
    radius = 0.4
    cands = sample_candidates(tau, radius, 1.0, [], 300, 9)
    cset = filter_candidates(cands, arm.ready, grid, arm, base, 1.0, joint_filter=False)
    assert len(cset) > 0
    cell = 0.1
    cells = reachability_map(cset.poses.positions, cell)
    assert sum(cells.values()) == len(cset)
    for key in cells:
        lo = np.array(key) * cell
        nearest = np.clip(tau.position, lo, lo + cell)
        assert np.linalg.norm(nearest - tau.position) <= radius + 1e-12
