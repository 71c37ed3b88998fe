"""Small seeded planning instances for checking the greedy planner against exhaustive search."""

import math
from dataclasses import dataclass

import numpy as np

from .config import PlannerConfig
from .planner import (BasePath, GraphNode, ViewGraph, brute_force_optimal, graph_sets, greedy_cardinality,
                      greedy_on_graph, optimal_cardinality, plan_greedy)
from .scene import SceneDescription, SceneObject, voxelize
from .kinematics import joint_step_bound
from .visibility import visible_surface_voxels

GREEDY_FLOOR = 1.0 - 1.0 / math.e


def small_scene(rng, voxel_size=0.1):
    """One to three boxes of interest scattered near the origin."""
    objs = []
    for k in range(int(rng.integers(1, 4))):
        size = rng.uniform(0.3, 0.8, 3)
        xy = rng.uniform(-1.0, 1.0, 2)
        for _ in range(20):
            if all(np.linalg.norm(xy - o.position[:2]) > 0.9 for o in objs):
                break
            xy = rng.uniform(-1.0, 1.0, 2)
        else:
            continue
        objs.append(SceneObject(f"box_{k}", "box", {"size": size}, [xy[0], xy[1], size[2] / 2.0],
                                [float(rng.uniform(-45, 45)), 0.0, 0.0]))
    return SceneDescription(objs, [-3.5, -3.5, 0.0], [3.5, 3.5, 2.5], voxel_size, name="small").validate()


@dataclass
class OracleCase:
    seed: int
    N: int
    greedy: int
    optimal: int
    relaxed_greedy: int
    relaxed_optimal: int
    pooled_greedy: int
    pooled_optimal: int

    @staticmethod
    def _ratio(a, b):
        return 1.0 if b == 0 else a / b

    @property
    def ratio(self):
        return self._ratio(self.greedy, self.optimal)

    @property
    def relaxed_ratio(self):
        return self._ratio(self.relaxed_greedy, self.relaxed_optimal)

    @property
    def pooled_ratio(self):
        return self._ratio(self.pooled_greedy, self.pooled_optimal)


def graph_from_plan(path, grid, cam, arm, max_per_layer=4, rng=None):
    """View graph whose layers hold the committed node plus other survivors of that layer.

    ``path`` must come from a planner run with ``record=True``. The committed
    route is always a path through the graph, so the exhaustive optimum on
    this graph bounds the planner's result from above.
    """
    rng = np.random.default_rng(rng)
    steps = path.steps
    layers = [[GraphNode(steps[0].pose, steps[0].q, visible_surface_voxels(grid, steps[0].pose, cam),
                         steps[0].base_pose, 0)]]
    for step, info in zip(steps[1:], path.layers):
        nodes = [GraphNode(step.pose, step.q, visible_surface_voxels(grid, step.pose, cam), step.base_pose,
                           step.base_index)]
        cset = info.get("cset")
        if cset is not None and len(cset) > 1:
            others = [k for k in range(len(cset)) if k != info["choice"]]
            pick = rng.choice(others, size=min(max_per_layer - 1, len(others)), replace=False)
            for k in sorted(int(x) for x in pick):
                pose = cset.poses[k]
                nodes.append(GraphNode(pose, cset.joints[k], visible_surface_voxels(grid, pose, cam),
                                       step.base_pose, step.base_index))
        layers.append(nodes)
    durations = [b.t - a.t for a, b in zip(steps[:-1], steps[1:])]
    return ViewGraph(layers, durations, [joint_step_bound(arm, d) for d in durations])


def run_case(seed, max_per_layer=4, M=60):
    """Plan on a random small instance and solve the same graph exhaustively."""
    rng = np.random.default_rng(seed)
    scene = small_scene(rng)
    grid = voxelize(scene)
    N = int(rng.integers(2, 6))
    arm = PlannerConfig().arm()
    # start with the camera turned toward the objects on the base's left
    q0 = np.array(arm.ready, dtype=float)
    q0[0] = 1.2
    config = PlannerConfig(M=M, N=N, seed=seed, voxel_size=scene.voxel_size, initial_q=q0.tolist())
    cam = config.camera()
    y = -2.5 - rng.uniform(0.0, 0.3)
    x0 = rng.uniform(-1.5, -0.5)
    xs = x0 + np.arange(N) * config.spacing
    base = BasePath(np.column_stack([xs, np.full(N, y), np.zeros(N)]), config.v_base, config.T_step)
    path = plan_greedy(scene, grid, arm, cam, base, config, record=True)
    graph = graph_from_plan(path, grid, cam, arm, max_per_layer, rng)
    best = brute_force_optimal(graph)
    relaxed = graph.relaxed()
    rg = greedy_on_graph(relaxed, seed)
    ro = brute_force_optimal(relaxed)
    sets = graph_sets(graph)
    _, pg = greedy_cardinality(sets, N)
    _, po = optimal_cardinality(sets, N)
    return OracleCase(seed, N, path.total_ig, best.total_ig, rg.total_ig, ro.total_ig, pg, po)


def run_oracle_checks(count=100, start_seed=0):
    return [run_case(s) for s in range(start_seed, start_seed + count)]


def summarize(cases):
    r = np.array([c.ratio for c in cases])
    rr = np.array([c.relaxed_ratio for c in cases])
    pr = np.array([c.pooled_ratio for c in cases])
    return {
        "instances": len(cases),
        "dominance_failures": sum(c.optimal < c.greedy for c in cases),
        "constrained_ratio_min": float(r.min()),
        "constrained_ratio_median": float(np.median(r)),
        "relaxed_ratio_min": float(rr.min()),
        "relaxed_below_floor": int((rr < GREEDY_FLOOR - 1e-9).sum()),
        "pooled_ratio_min": float(pr.min()),
        "pooled_below_floor": int((pr < GREEDY_FLOOR - 1e-9).sum()),
    }
