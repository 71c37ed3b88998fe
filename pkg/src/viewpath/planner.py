"""Greedy long-horizon view path planning along a fixed base path.

At every base sample the planner draws candidate camera poses around the
current one, keeps those the arm can reach before the base arrives, and
commits the candidate with the largest marginal coverage gain. The
see-nearest baseline and the exhaustive oracle on small view graphs live
here too.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose6
from .kinematics import forward_kinematics, joint_step_bound
from .sampling import collision_free, filter_candidates, interest_boxes, sample_candidates
from .visibility import ObservedSet, batch_marginal_ig, visible_surface_voxels

SPACING_TOL = 1e-9


class PlanningError(Exception):
    pass


class BudgetExceeded(PlanningError):
    pass


# --------------------------------------------------------------------------
# base path


@dataclass
class BasePath:
    """Uniformly timed SE(2) samples ``(x, y, yaw)`` of the base trajectory."""

    poses: np.ndarray
    v_base: float
    T_step: float
    times: np.ndarray | None = None
    kind: str = "custom"

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        if self.times is None:
            self.times = np.arange(len(self.poses)) * self.T_step
        self.times = np.asarray(self.times, dtype=float)
        self.validate()

    @property
    def N(self):
        return len(self.poses)

    @property
    def spacing(self):
        return self.v_base * self.T_step

    @property
    def length(self):
        return float(np.linalg.norm(np.diff(self.poses[:, :2], axis=0), axis=1).sum())

    def validate(self):
        if self.N < 2:
            raise ValueError("a base path needs at least 2 poses")
        if len(self.times) != self.N:
            raise ValueError("one timestamp per pose required")
        if not np.allclose(np.diff(self.times), self.T_step, rtol=0, atol=1e-9):
            raise ValueError("consecutive timestamps must differ by exactly T_step")
        steps = np.linalg.norm(np.diff(self.poses[:, :2], axis=0), axis=1)
        if np.any(steps > self.spacing + SPACING_TOL):
            raise ValueError("consecutive base poses farther apart than v_base * T_step")
        return self

    @classmethod
    def from_polyline(cls, points, v_base, T_step, N=None, closed=False, kind="custom"):
        """Resample a polyline at arc-length spacing ``v_base * T_step``.

        Without ``N`` the path keeps every sample that fits on the polyline;
        with ``N`` the last segment is extended (or the polyline cut) to give
        exactly ``N`` samples. Headings follow the direction of travel.
        """
        pts = np.asarray(points, dtype=float)[:, :2]
        if closed:
            pts = np.vstack([pts, pts[:1]])
        seg = np.diff(pts, axis=0)
        seglen = np.linalg.norm(seg, axis=1)
        keep = seglen > 1e-12
        pts = np.vstack([pts[:1], pts[1:][keep]])
        seg, seglen = seg[keep], seglen[keep]
        cum = np.concatenate([[0.0], np.cumsum(seglen)])
        total = cum[-1]
        s = v_base * T_step
        if N is None:
            N = int(math.floor(total / s + 1e-9)) + 1
            if closed and N > 1 and abs((N - 1) * s - total) < 1e-9:
                # last sample would duplicate the start
                N -= 1
        if N < 2:
            raise ValueError("path too short for two samples at this spacing")
        arc = np.arange(N) * s
        xy = np.empty((N, 2))
        for k, a in enumerate(arc):
            if a >= total:
                xy[k] = pts[-1] + (a - total) * seg[-1] / seglen[-1]
                continue
            j = int(np.searchsorted(cum, a, side="right") - 1)
            xy[k] = pts[j] + (a - cum[j]) * seg[j] / seglen[j]
        d = np.diff(xy, axis=0)
        yaw = np.arctan2(d[:, 1], d[:, 0])
        yaw = np.concatenate([yaw, yaw[-1:]])
        return cls(np.column_stack([xy, yaw]), v_base, T_step, kind=kind)

    def to_csv(self, path=None):
        lines = ["index,t,x,y,yaw"]
        for i, (p, t) in enumerate(zip(self.poses, self.times)):
            lines.append(f"{i},{t:.6f},{p[0]:.9f},{p[1]:.9f},{p[2]:.9f}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as f:
                f.write(text)
        return text

    @classmethod
    def from_csv(cls, path, v_base, T_step):
        """Read a waypoint file.

        Files written by :meth:`to_csv` (``index,t,x,y,yaw``) load pose for
        pose. Any other file is read as ``x,y`` polyline vertices (extra
        columns ignored, header optional) and resampled at ``v_base * T_step``.
        """
        rows, sampled = [], True
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                try:
                    vals = [float(x) for x in line.replace(",", " ").split()]
                except ValueError:
                    continue
                sampled = sampled and len(vals) == 5
                rows.append(vals)
        if not rows:
            raise ValueError(f"no waypoints in {path}")
        if sampled:
            return cls(np.array([r[2:5] for r in rows]), v_base, T_step, kind="custom")
        return cls.from_polyline(np.array([r[:2] for r in rows]), v_base, T_step)


# --------------------------------------------------------------------------
# view path


@dataclass
class ViewStep:
    base_index: int
    t: float
    base_pose: np.ndarray
    pose: Pose6
    q: np.ndarray
    marginal_ig: int
    held: bool = False
    stationary: bool = False


@dataclass
class ViewPath:
    steps: list = field(default_factory=list)
    planner: str = "greedy"
    survey_time: float = 0.0
    observed: ObservedSet | None = None
    layers: list = field(default_factory=list)
    N: int | None = None

    @property
    def total_ig(self):
        return int(sum(s.marginal_ig for s in self.steps))

    def __len__(self):
        return len(self.steps)

    def transitions(self):
        for a, b in zip(self.steps[:-1], self.steps[1:]):
            yield a, b, b.t - a.t

    def violations(self, arm):
        """Indices ``i`` where step ``i -> i+1`` exceeds a joint's TVP bound."""
        bad = []
        for i, (a, b, dt) in enumerate(self.transitions()):
            if np.any(np.abs(b.q - a.q) > joint_step_bound(arm, dt)):
                bad.append(i)
        return bad

    def executable(self, arm):
        return not self.violations(arm)

    def to_text(self):
        """Line-oriented serialization, one step per line."""
        n = len(self.steps[0].q) if self.steps else 6
        cols = ["base_index", "t", "base_x", "base_y", "base_yaw", "x", "y", "z", "qw", "qx", "qy", "qz"]
        cols += [f"j{i + 1}" for i in range(n)] + ["marginal_ig", "held"]
        lines = [f"# planner={self.planner} survey_time={self.survey_time:.6f}", "# " + " ".join(cols)]
        for s in self.steps:
            vals = [str(s.base_index), f"{s.t:.6f}"]
            vals += [f"{v:.9f}" for v in s.base_pose]
            vals += [f"{v:.9f}" for v in s.pose.position]
            vals += [f"{v:.9f}" for v in s.pose.orientation]
            vals += [f"{v:.9f}" for v in s.q]
            vals += [str(int(s.marginal_ig)), str(int(s.held))]
            lines.append(" ".join(vals))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        vp = cls()
        for line in text.splitlines():
            if line.startswith("# planner="):
                meta = dict(kv.split("=") for kv in line[2:].split())
                vp.planner = meta["planner"]
                vp.survey_time = float(meta["survey_time"])
                continue
            if not line.strip() or line.startswith("#"):
                continue
            v = line.split()
            q = np.array([float(x) for x in v[12:-2]])
            quat = np.array([float(x) for x in v[8:12]])
            pose = Pose6(np.array([float(x) for x in v[5:8]]), quat / np.linalg.norm(quat))
            vp.steps.append(ViewStep(int(v[0]), float(v[1]), np.array([float(x) for x in v[2:5]]), pose, q,
                                     int(v[-2]), bool(int(v[-1]))))
        return vp


# --------------------------------------------------------------------------
# planners


def _layer_rng(seed, layer, sub, stream=0):
    return np.random.default_rng([int(seed), int(layer), int(sub), int(stream)])


def initial_state(scene, grid, arm, base_path, config):
    q0 = np.asarray(config.initial_q if config.initial_q is not None else arm.ready, dtype=float)
    if not arm.within_limits(q0):
        raise PlanningError("initial joint configuration violates joint limits")
    pose = forward_kinematics(arm, q0, base_path.poses[0])
    if not collision_free(grid, pose.position, config.clearance)[0]:
        raise PlanningError("initial camera pose is in collision or out of bounds")
    return q0, pose


def sampling_center(arm, q, pose, base_next, frame="base"):
    """Pose the candidate ball is centered on for the next layer.

    ``"base"`` treats the end-effector speed as relative to the moving base:
    the current camera pose is carried along by the base motion (joints
    frozen). ``"world"`` keeps the current camera pose fixed in the world.
    """
    if frame == "world":
        return pose
    return forward_kinematics(arm, q, base_next)


def _choose_greedy(gains, rng):
    best = gains.max()
    ties = np.flatnonzero(gains == best)
    return int(ties[0] if len(ties) == 1 else rng.choice(ties))


def _choose_nearest(cset, base_xy, centers, rng):
    d = np.linalg.norm(centers[:, :2] - base_xy, axis=1)
    near = np.flatnonzero(d <= d.min() + 1e-9)
    target = centers[near[0] if len(near) == 1 else rng.choice(near)]
    to = target - cset.poses.positions
    to /= np.maximum(np.linalg.norm(to, axis=1, keepdims=True), 1e-12)
    err = np.arccos(np.clip(np.einsum("ij,ij->i", cset.poses.axes, to), -1.0, 1.0))
    ties = np.flatnonzero(err <= err.min() + 1e-12)
    return int(ties[0] if len(ties) == 1 else rng.choice(ties))


class _Run:
    """Mutable planning state shared by the planner variants."""

    def __init__(self, scene, grid, arm, cam, base_path, config, planner, record):
        self.scene, self.grid, self.arm, self.cam = scene, grid, arm, cam
        self.config = config
        self.base_path = base_path
        self.targets = interest_boxes(scene)
        self.centers = np.array([o.center() for o in scene.interest_objects]) if scene.interest_objects \
            else np.zeros((0, 3))
        self.observed = ObservedSet(grid)
        self.record = record
        self.path = ViewPath(planner=planner, N=base_path.N)
        q0, pose0 = initial_state(scene, grid, arm, base_path, config)
        self.q, self.pose, self.t = q0, pose0, 0.0
        self.commit(0, base_path.poses[0], pose0, q0, held=False)

    def commit(self, base_index, base_pose, pose, q, held, stationary=False):
        vis = visible_surface_voxels(self.grid, pose, self.cam)
        gain = self.observed.add(vis, len(self.path.steps))
        self.path.steps.append(ViewStep(base_index, self.t, np.asarray(base_pose, dtype=float).copy(), pose,
                                        np.asarray(q, dtype=float).copy(), gain, held, stationary))
        self.q, self.pose = np.asarray(q, dtype=float), pose
        return gain

    def layer(self, base_index, dt, layer_id, sub, choose):
        cfg = self.config
        base_next = self.base_path.poses[base_index]
        center = sampling_center(self.arm, self.q, self.pose, base_next, cfg.sample_frame)
        cands = sample_candidates(center, cfg.v_eef, dt, self.targets, cfg.M, _layer_rng(cfg.seed, layer_id, sub),
                                  cfg.look_at_fraction, cfg.surface_only)
        cset = filter_candidates(cands, self.q, self.grid, self.arm, base_next, dt, base_index,
                                 joint_filter=cfg.joint_filter, clearance=cfg.clearance)
        self.t += dt
        info = {"base_index": base_index, "dt": dt, "stats": cset.stats}
        if len(cset) == 0:
            pose = forward_kinematics(self.arm, self.q, base_next)
            info["choice"] = None
            if self.record:
                info["cset"], info["gains"] = cset, np.zeros(0, dtype=np.int64)
            self.path.layers.append(info)
            return self.commit(base_index, base_next, pose, self.q, held=True, stationary=sub > 0)
        rng = _layer_rng(cfg.seed, layer_id, sub, 1)
        gains = None
        if choose == "greedy" or self.record:
            gains = batch_marginal_ig(list(cset.poses), self.observed, self.grid, self.cam)
        if choose == "greedy":
            k = _choose_greedy(gains, rng)
        else:
            k = _choose_nearest(cset, base_next[:2], self.centers, rng)
        info["choice"] = k
        if self.record:
            info["cset"], info["gains"] = cset, gains
        self.path.layers.append(info)
        return self.commit(base_index, base_next, cset.poses[k], cset.joints[k], held=False, stationary=sub > 0)


def _plan(scene, grid, arm, cam, base_path, config, choose, dwell=None, record=False):
    name = {"greedy": "greedy", "nearest": "see_nearest"}[choose]
    if not config.joint_filter:
        name += "_nofilter"
    if dwell is not None:
        name += "_stops"
    run = _Run(scene, grid, arm, cam, base_path, config, name, record)
    k_stops = math.ceil(dwell / base_path.T_step) if dwell else 0

    def stops(i):
        for j in range(1, k_stops + 1):
            run.layer(i, dwell / k_stops, i, j, choose)

    stops(0)
    for i in range(1, base_path.N):
        run.layer(i, base_path.T_step, i, 0, choose)
        stops(i)
    path = run.path
    path.observed = run.observed
    path.survey_time = base_path.N * base_path.T_step + (base_path.N * dwell if dwell else 0.0)
    assert path.total_ig == len(run.observed)
    return path


def plan_greedy(scene, grid, arm, cam, base_path, config, record=False):
    """Greedy view path: at each base sample commit the max-marginal-gain survivor.

    Ties are broken by a generator seeded from ``config.seed`` and the layer
    index. When no candidate survives the filters the arm holds its joint
    configuration and the view from the new base location is scored.
    """
    return _plan(scene, grid, arm, cam, base_path, config, "greedy", record=record)


def plan_see_nearest(scene, grid, arm, cam, base_path, config, record=False):
    """Baseline that aims the camera at the object closest to the base.

    Draws from the same filtered candidates as :func:`plan_greedy` and picks
    the one whose optical axis points most directly at the center of the
    nearest object of interest.
    """
    return _plan(scene, grid, arm, cam, base_path, config, "nearest", record=record)


def plan_with_stops(scene, grid, arm, cam, base_path, config, dwell, record=False):
    """Greedy planning where the base halts ``dwell`` seconds at every sample.

    Each halt adds ``ceil(dwell / T_step)`` stationary layers at that base
    pose, each lasting ``dwell / k``. The regular layers draw from the same
    random streams as :func:`plan_greedy`, so ``dwell=0`` reproduces it.
    """
    if not dwell >= 0:
        raise ValueError("dwell must be >= 0")
    return _plan(scene, grid, arm, cam, base_path, config, "greedy", dwell=dwell, record=record)


def replay_observed(path, grid, cam):
    """Recompute the observed set of a view path from scratch."""
    obs = ObservedSet(grid)
    for i, s in enumerate(path.steps):
        obs.add(visible_surface_voxels(grid, s.pose, cam), i)
    return obs


# --------------------------------------------------------------------------
# view graphs and the exhaustive oracle


@dataclass
class GraphNode:
    pose: Pose6
    q: np.ndarray
    vis: np.ndarray
    base_pose: np.ndarray
    base_index: int


@dataclass
class ViewGraph:
    """Layered candidate graph; an edge joins consecutive-layer nodes the arm can move between."""

    layers: list
    durations: list
    bounds: list
    fully_connected: bool = False

    def successors(self, layer, i):
        if layer + 1 >= len(self.layers):
            return []
        nxt = self.layers[layer + 1]
        if self.fully_connected:
            return list(range(len(nxt)))
        q = self.layers[layer][i].q
        b = self.bounds[layer]
        return [j for j, node in enumerate(nxt) if np.all(np.abs(node.q - q) <= b)]

    def relaxed(self):
        return ViewGraph(self.layers, self.durations, self.bounds, True)

    @property
    def n_paths_bound(self):
        return int(np.prod([len(layer) for layer in self.layers]))


def build_view_graph(scene, grid, arm, cam, base_path, config, max_per_layer=4, seed=0):
    """Sample a small layered view graph along ``base_path``.

    Each layer's candidates are drawn around a randomly chosen node of the
    previous layer and filtered relative to it, then thinned to at most
    ``max_per_layer`` nodes.
    """
    rng = np.random.default_rng(seed)
    targets = interest_boxes(scene)
    q0, pose0 = initial_state(scene, grid, arm, base_path, config)
    root = GraphNode(pose0, q0, visible_surface_voxels(grid, pose0, cam), base_path.poses[0], 0)
    layers = [[root]]
    for i in range(1, base_path.N):
        parent = layers[-1][rng.integers(len(layers[-1]))]
        center = sampling_center(arm, parent.q, parent.pose, base_path.poses[i], config.sample_frame)
        cands = sample_candidates(center, config.v_eef, base_path.T_step, targets, config.M, rng,
                                  config.look_at_fraction)
        cset = filter_candidates(cands, parent.q, grid, arm, base_path.poses[i], base_path.T_step, i,
                                 clearance=config.clearance)
        nodes = []
        if len(cset) == 0:
            pose = forward_kinematics(arm, parent.q, base_path.poses[i])
            nodes.append(GraphNode(pose, parent.q.copy(), visible_surface_voxels(grid, pose, cam),
                                   base_path.poses[i], i))
        else:
            pick = rng.choice(len(cset), size=min(max_per_layer, len(cset)), replace=False)
            for k in sorted(pick):
                pose = cset.poses[int(k)]
                nodes.append(GraphNode(pose, cset.joints[k], visible_surface_voxels(grid, pose, cam),
                                       base_path.poses[i], i))
        layers.append(nodes)
    bound = joint_step_bound(arm, base_path.T_step)
    return ViewGraph(layers, [base_path.T_step] * (base_path.N - 1), [bound] * (base_path.N - 1))


def _graph_viewpath(graph, route, planner):
    vp = ViewPath(planner=planner, N=len(graph.layers))
    seen = set()
    t = 0.0
    for layer, i in enumerate(route):
        node = graph.layers[layer][i]
        new = set(int(v) for v in node.vis) - seen
        seen |= new
        if layer:
            t += graph.durations[layer - 1]
        vp.steps.append(ViewStep(node.base_index, t, node.base_pose, node.pose, node.q, len(new)))
    return vp


def greedy_on_graph(graph, seed=0):
    """Greedy walk through a fixed view graph, stopping at a dead end."""
    rng = np.random.default_rng(seed)
    route = [0]
    seen = set(int(v) for v in graph.layers[0][0].vis)
    for layer in range(len(graph.layers) - 1):
        succ = graph.successors(layer, route[-1])
        if not succ:
            break
        gains = np.array([len(set(int(v) for v in graph.layers[layer + 1][j].vis) - seen) for j in succ])
        j = succ[_choose_greedy(gains, rng)]
        route.append(j)
        seen |= set(int(v) for v in graph.layers[layer + 1][j].vis)
    return _graph_viewpath(graph, route, "greedy_graph")


def brute_force_optimal(graph, scene=None, cam=None, budget=10**6):
    """Exhaustively search every root-to-leaf path for the largest coverage.

    Raises:
        BudgetExceeded: the product of layer sizes is above ``budget``.
    """
    if graph.n_paths_bound > budget:
        raise BudgetExceeded(f"{graph.n_paths_bound} paths exceed the oracle budget of {budget}")
    sets = [[frozenset(int(v) for v in node.vis) for node in layer] for layer in graph.layers]
    best_val, best_route = -1, None
    stack = [([0], sets[0][0])]
    while stack:
        route, cov = stack.pop()
        layer = len(route) - 1
        succ = graph.successors(layer, route[-1])
        if not succ:
            if len(cov) > best_val or (len(cov) == best_val and route < best_route):
                best_val, best_route = len(cov), route
            continue
        for j in reversed(succ):
            stack.append((route + [j], cov | sets[layer + 1][j]))
    return _graph_viewpath(graph, best_route, "optimal")


def coverage_value(sets):
    out = set()
    for s in sets:
        out |= set(int(v) for v in s)
    return len(out)


def greedy_cardinality(sets, k):
    """Classic greedy for max coverage with at most ``k`` sets (first index wins ties)."""
    chosen, seen = [], set()
    pool = [set(int(v) for v in s) for s in sets]
    for _ in range(k):
        gains = [len(s - seen) for s in pool]
        j = int(np.argmax(gains))
        chosen.append(j)
        seen |= pool[j]
    return chosen, len(seen)


def optimal_cardinality(sets, k, budget=10**6):
    """Best coverage with at most ``k`` of the given sets, by enumeration."""
    n = len(sets)
    k = min(k, n)
    if math.comb(n, k) > budget:
        raise BudgetExceeded(f"C({n},{k}) subsets exceed the oracle budget")
    pool = [frozenset(int(v) for v in s) for s in sets]
    best, best_idx = -1, None
    for combo in itertools.combinations(range(n), k):
        val = len(frozenset().union(*(pool[j] for j in combo)))
        if val > best:
            best, best_idx = val, combo
    return list(best_idx), best


def graph_sets(graph):
    return [node.vis for layer in graph.layers for node in layer]


__all__ = [
    "BasePath", "ViewPath", "ViewStep", "ViewGraph", "GraphNode", "PlanningError", "BudgetExceeded",
    "plan_greedy", "plan_see_nearest", "plan_with_stops", "build_view_graph", "greedy_on_graph",
    "brute_force_optimal", "greedy_cardinality", "optimal_cardinality", "replay_observed",
]
