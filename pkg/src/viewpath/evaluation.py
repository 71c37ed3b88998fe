"""Coverage metric, survey simulation and the planner comparison reports.

The reconstructed point cloud of a survey is the set of centers of the
observed surface voxels. A ground-truth surface point counts as captured
when an observed point of the same object lies within the registration
distance.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .kinematics import forward_kinematics, joint_step_bound
from .planner import ViewPath, ViewStep, plan_greedy, plan_see_nearest, plan_with_stops
from .scene import sample_ground_truth, voxelize
from .visibility import ObservedSet, visible_surface_voxels

MODES = ("viewpoint", "all-images")


class InexecutablePathError(ValueError):
    def __init__(self, transitions):
        self.transitions = list(transitions)
        super().__init__(f"view path violates the joint TVP bound at transition(s) {self.transitions}")


# --------------------------------------------------------------------------
# coverage


def captured_mask(observed_points, observed_labels, gt_points, gt_labels, registration_distance):
    """Per ground-truth point: is an observed point of the same object within range."""
    if not registration_distance > 0:
        raise ValueError("registration_distance must be > 0")
    observed_points = np.asarray(observed_points, dtype=float).reshape(-1, 3)
    observed_labels = np.asarray(observed_labels, dtype=object)
    gt_labels = np.asarray(gt_labels, dtype=object)
    out = np.zeros(len(gt_points), dtype=bool)
    for oid in np.unique(gt_labels):
        sel = gt_labels == oid
        obs = observed_points[observed_labels == oid]
        if len(obs) == 0:
            continue
        d, _ = cKDTree(obs).query(gt_points[sel], k=1)
        out[sel] = d <= registration_distance
    return out


def coverage(observed_points, observed_labels, ground_truth, registration_distance=0.05):
    """Fraction of each object's ground-truth points captured by the observed cloud.

    Returns a dict ``object_id -> fraction``; an object without ground-truth
    points maps to ``nan`` (undefined).
    """
    cap = captured_mask(observed_points, observed_labels, ground_truth.points, ground_truth.object_ids,
                        registration_distance)
    out = {}
    for oid in dict.fromkeys(ground_truth.object_ids.tolist()):
        sel = ground_truth.object_ids == oid
        out[oid] = float(cap[sel].mean()) if sel.any() else float("nan")
    return out


def observed_cloud(observed, grid):
    """Centers and object ids of the observed surface voxels."""
    sids = observed.ids
    pts = grid.centers_of(grid.surface_index[sids])
    labels = np.array([grid.object_ids[k - 1] for k in grid.surface_label[sids]], dtype=object)
    return pts, labels


def write_xyz(path, points, labels=None):
    """ASCII point cloud, one ``x y z`` (and label) per line."""
    with open(path, "w") as f:
        for i, p in enumerate(points):
            tail = f" {labels[i]}" if labels is not None else ""
            f.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}{tail}\n")


@dataclass
class CoverageReport:
    per_object: dict
    total_time: float
    mode: str = "viewpoint"
    violations: list = field(default_factory=list)
    planner: str = ""

    def __post_init__(self):
        vals = [v for v in self.per_object.values() if not math.isnan(v)]
        self.mean = float(np.mean(vals)) if vals else float("nan")
        self.max = float(np.max(vals)) if vals else float("nan")
        self.min = float(np.min(vals)) if vals else float("nan")

    @property
    def coverage_rate(self):
        """Mean coverage in percent per second of survey."""
        return 100.0 * self.mean / self.total_time

    @property
    def executable(self):
        return not self.violations

    def row(self):
        return {
            "planner": self.planner, "mode": self.mode, "mean": self.mean, "max": self.max, "min": self.min,
            "time_s": self.total_time, "rate_pct_s": self.coverage_rate,
            "executable": "pass" if self.executable else "fail", "violations": len(self.violations),
        }

    def to_csv(self):
        lines = ["object_id,coverage"]
        lines += [f"{k},{v:.6f}" for k, v in self.per_object.items()]
        r = self.row()
        lines.append(f"mean,{r['mean']:.6f}")
        lines.append(f"max,{r['max']:.6f}")
        lines.append(f"min,{r['min']:.6f}")
        lines.append(f"time_s,{r['time_s']:.3f}")
        lines.append(f"rate_pct_s,{r['rate_pct_s']:.6f}")
        lines.append(f"mode,{self.mode}")
        lines.append(f"executable,{r['executable']}")
        lines.append(f"violating_transitions,{' '.join(str(v) for v in self.violations)}")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# survey simulation


def _interp_base(a, b, s):
    dyaw = (b[2] - a[2] + math.pi) % (2.0 * math.pi) - math.pi
    return np.array([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * dyaw])


def intermediate_frames(step_a, step_b, arm, K):
    """``K`` camera poses between two steps (joint and base interpolated linearly)."""
    out = []
    for k in range(1, K + 1):
        s = k / (K + 1)
        q = step_a.q + s * (step_b.q - step_a.q)
        out.append(forward_kinematics(arm, q, _interp_base(step_a.base_pose, step_b.base_pose, s),
                                      check_limits=False))
    return out


def simulate_survey(view_path, grid, cam, arm, mode="viewpoint", frame_interval=0.2, K=None):
    """Replay a view path and collect what the camera observes.

    ``viewpoint`` scores only the committed poses; ``all-images`` also
    scores ``K = ceil(dt / frame_interval)`` interpolated frames inside
    every transition (``K`` may be forced). Returns the observed set and the
    observed point cloud ``(points, labels)``.

    Raises:
        InexecutablePathError: a transition exceeds the joint TVP bound.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    bad = view_path.violations(arm)
    if bad:
        raise InexecutablePathError(bad)
    obs = ObservedSet(grid)
    frame = 0
    for i, step in enumerate(view_path.steps):
        if i and mode == "all-images":
            prev = view_path.steps[i - 1]
            k = math.ceil((step.t - prev.t) / frame_interval - 1e-9) if K is None else K
            for pose in intermediate_frames(prev, step, arm, k):
                obs.add(visible_surface_voxels(grid, pose, cam), frame)
                frame += 1
        obs.add(visible_surface_voxels(grid, step.pose, cam), frame)
        frame += 1
    return obs, observed_cloud(obs, grid)


def clamp_execute(view_path, arm, grid, cam):
    """Execute a possibly infeasible path, holding wherever a transition is too far.

    The arm follows the plan while each move fits the TVP bound from the
    realized configuration; otherwise it keeps its joints for that step.
    Returns an executable :class:`ViewPath` and the number of held steps.
    """
    out = ViewPath(planner=view_path.planner + "_clamped", survey_time=view_path.survey_time, N=view_path.N)
    obs = ObservedSet(grid)
    q_real = None
    held = 0
    for i, step in enumerate(view_path.steps):
        if i == 0:
            q, pose, hold = step.q, step.pose, False
        else:
            dt = step.t - view_path.steps[i - 1].t
            hold = np.any(np.abs(step.q - q_real) > joint_step_bound(arm, dt))
            if hold:
                q, pose = q_real, forward_kinematics(arm, q_real, step.base_pose)
                held += 1
            else:
                q, pose = step.q, step.pose
        gain = obs.add(visible_surface_voxels(grid, pose, cam), i)
        out.steps.append(ViewStep(step.base_index, step.t, step.base_pose, pose, np.array(q, dtype=float),
                                  gain, bool(hold) or step.held, step.stationary))
        q_real = np.array(q, dtype=float)
    out.observed = obs
    return out, held


def evaluate_path(view_path, grid, cam, arm, ground_truth, config, mode="viewpoint"):
    """Coverage report of a path; inexecutable paths are scored by their clamped execution."""
    bad = view_path.violations(arm)
    path = clamp_execute(view_path, arm, grid, cam)[0] if bad else view_path
    _, (pts, labels) = simulate_survey(path, grid, cam, arm, mode, config.frame_interval)
    cov = coverage(pts, labels, ground_truth, config.registration_distance)
    return CoverageReport(cov, view_path.survey_time, mode, bad, view_path.planner)


# --------------------------------------------------------------------------
# scenario matrix


def _run_cell(args):
    spec, config, parts = args
    scene = spec.scene(config.voxel_size)
    grid = voxelize(scene, config.voxel_size)
    cam, arm = config.camera(), config.arm()
    gt = sample_ground_truth(scene, config.gt_density, config.seed)
    bp = spec.base_path(scene, config, grid)
    res = {"cell": spec.name, "layout": spec.name.split("/")[0], "path": spec.name.split("/")[1], "N": bp.N}
    mode = "all-images" if config.all_images else "viewpoint"
    greedy = plan_greedy(scene, grid, arm, cam, bp, config)
    res["greedy"] = evaluate_path(greedy, grid, cam, arm, gt, config, mode)
    if "nearest" in parts:
        res["nearest"] = evaluate_path(plan_see_nearest(scene, grid, arm, cam, bp, config), grid, cam, arm, gt,
                                       config, mode)
    if "ablation" in parts:
        raw = plan_greedy(scene, grid, arm, cam, bp, config.replace(joint_filter=False))
        rep = evaluate_path(raw, grid, cam, arm, gt, config, mode)
        res["nofilter"] = rep
        res["nofilter_transitions"] = len(raw.steps) - 1
    if "stops" in parts:
        stops = plan_with_stops(scene, grid, arm, cam, bp, config, config.dwell)
        res["stops"] = evaluate_path(stops, grid, cam, arm, gt, config, mode)
        res["nostops"] = res["greedy"]
    if "images" in parts:
        other = "viewpoint" if mode == "all-images" else "all-images"
        res["greedy_" + other] = evaluate_path(greedy, grid, cam, arm, gt, config, other)
        res["greedy_" + mode] = res["greedy"]
    return res


def run_matrix(specs, config, parts=("nearest", "ablation", "stops", "images"), jobs=1):
    """Run every scenario cell; a failing cell is reported and the rest continue."""
    args = [(s, config, tuple(parts)) for s in specs]
    results = []
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futures = [ex.submit(_run_cell, a) for a in args]
            for s, fut in zip(specs, futures):
                try:
                    results.append(fut.result())
                except Exception as e:  # noqa: BLE001 - reported per cell
                    results.append({"cell": s.name, "error": f"{type(e).__name__}: {e}"})
    else:
        for s, a in zip(specs, args):
            try:
                results.append(_run_cell(a))
            except Exception as e:  # noqa: BLE001
                results.append({"cell": s.name, "error": f"{type(e).__name__}: {e}"})
    return results


def _pct(x):
    return "nan" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{100.0 * x:.2f}"


def _table(header, rows):
    return {"header": header, "rows": rows}


def build_tables(results):
    """Comparison tables (header + rows of strings) from matrix results.

    ``coverage`` compares greedy with see-nearest, ``joint_filter`` the
    ablation without the joint filter, ``stops`` halting at every sample and
    ``images`` scoring every camera frame instead of the committed views.
    """
    t_cov, t_filter, t_stops, t_images, errors = [], [], [], [], []
    for r in results:
        if "error" in r:
            errors.append([r["cell"], r["error"]])
            continue
        g = r["greedy"]
        row = [r["layout"], r["path"], _pct(g.mean), f"({_pct(g.max)}, {_pct(g.min)})"]
        if "nearest" in r:
            n = r["nearest"]
            row += [_pct(n.mean), f"({_pct(n.max)}, {_pct(n.min)})"]
        else:
            row += ["", ""]
        row += [g.row()["executable"], r["nearest"].row()["executable"] if "nearest" in r else ""]
        t_cov.append(row)
        if "nofilter" in r:
            u = r["nofilter"]
            t_filter.append([r["layout"], r["path"], _pct(g.mean), _pct(u.mean), str(len(u.violations)),
                             str(r["nofilter_transitions"])])
        if "stops" in r:
            s, ns = r["stops"], r["nostops"]
            t_stops.append([r["layout"], r["path"],
                            _pct(s.mean), f"({s.coverage_rate:.3f}%/s, {s.total_time:.0f}s)",
                            _pct(ns.mean), f"({ns.coverage_rate:.3f}%/s, {ns.total_time:.0f}s)"])
        if "greedy_all-images" in r:
            t_images.append([r["layout"], r["path"], _pct(r["greedy_all-images"].mean),
                             _pct(r["greedy_viewpoint"].mean)])
    return {
        "coverage": _table(["layout", "path", "greedy_mean", "greedy_(max,min)", "nearest_mean",
                            "nearest_(max,min)", "greedy_exec", "nearest_exec"], t_cov),
        "joint_filter": _table(["layout", "path", "filtered_mean", "unfiltered_clamped_mean",
                                "unfiltered_violations", "transitions"], t_filter),
        "stops": _table(["layout", "path", "stops_mean", "stops_(rate,time)", "nostops_mean",
                         "nostops_(rate,time)"], t_stops),
        "images": _table(["layout", "path", "all_images_mean", "viewpoint_only_mean"], t_images),
        "errors": _table(["cell", "error"], errors),
    }


def table_csv(table):
    def q(v):
        return f'"{v}"' if "," in v else v

    lines = [",".join(table["header"])]
    lines += [",".join(q(v) for v in row) for row in table["rows"]]
    return "\n".join(lines) + "\n"


def table_text(table, title=""):
    cols = list(zip(table["header"], *table["rows"])) if table["rows"] else [(h,) for h in table["header"]]
    widths = [max(len(v) for v in c) for c in cols]
    fmt = lambda row: "  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()  # noqa: E731
    lines = [title] if title else []
    lines.append(fmt(table["header"]))
    lines.append("  ".join("-" * w for w in widths))
    lines += [fmt(r) for r in table["rows"]]
    return "\n".join(lines) + "\n"


def compare_planners(specs, config, parts=("nearest", "ablation", "stops", "images"), jobs=1):
    """Run the scenario matrix and return ``(tables, raw results)``."""
    if not specs:
        raise ValueError("scenario list is empty")
    results = run_matrix(specs, config, parts, jobs)
    return build_tables(results), results
