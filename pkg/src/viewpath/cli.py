"""Command-line interface.

Commands: plan, sweep, compare, gen-scenario, oracle-check. Every option
can also come from a YAML file (``--config``) or a ``VIEWPATH_<FIELD>``
environment variable; a command-line flag wins over the environment, which
wins over the file.

Exit codes:
    0  success
    1  internal error
    2  bad command line
    3  invalid configuration
    4  invalid scene, waypoint file or scenario (including path clearance)
    5  planning failed (e.g. infeasible start pose, oracle budget exceeded)
    6  partial failure: some sweep values or matrix cells failed

Errors are printed to stderr as one line: ``error category=<name> message=<text>``.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, scenarios
from .config import ENV_PREFIX, load_config
from .planner import PlanningError, plan_greedy, plan_see_nearest, plan_with_stops
from .scene import SceneError, sample_ground_truth, voxelize

log = logging.getLogger("viewpath")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CONFIG, EXIT_INPUT, EXIT_PLANNING, EXIT_PARTIAL = range(7)


class CliError(Exception):
    def __init__(self, category, message, code):
        super().__init__(message)
        self.category, self.code = category, code


# flag name -> PlannerConfig field
CONFIG_FLAGS = {
    "v_base": float, "v_eef": float, "t_step": float, "M": int, "N": int, "voxel_size": float,
    "registration_distance": float, "seed": int, "arm_file": str, "h_fov": float, "v_fov": float,
    "ray_downsample": int, "max_range": float, "dwell": float, "frame_interval": float, "gt_density": float,
    "jobs": int, "look_at_fraction": float, "sample_frame": str,
}


def _add_config_args(p):
    g = p.add_argument_group("planner configuration (override --config and environment)")
    g.add_argument("--config", help="YAML file with PlannerConfig fields; 'preset: simulation' selects "
                                    "v_base=0.5, T_step=2, v_eef=0.4")
    g.add_argument("--preset", choices=["default", "simulation"], help="parameter preset applied under overrides")
    g.add_argument("--v-base", dest="v_base", type=float, help="base speed, m/s (default 0.35)")
    g.add_argument("--v-eef", dest="v_eef", type=float, help="end-effector speed, m/s (default 0.65)")
    g.add_argument("--t-step", dest="t_step", type=float, help="time between base samples, s (default 1)")
    g.add_argument("--M", type=int, help="candidates per base pose (default 980)")
    g.add_argument("--N", type=int, help="base samples for planners driven by N (default 25); generated "
                                         "scenarios derive N from the path length unless --fix-n is given")
    g.add_argument("--voxel-size", dest="voxel_size", type=float, help="voxel edge, m (default 0.05)")
    g.add_argument("--registration-distance", dest="registration_distance", type=float,
                   help="coverage capture radius, m (default 0.05)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--arm-file", dest="arm_file", help="arm description YAML (default: bundled 6-joint arm)")
    g.add_argument("--h-fov", dest="h_fov", type=float, help="horizontal field of view, deg (default 70)")
    g.add_argument("--v-fov", dest="v_fov", type=float, help="vertical field of view, deg (default 55)")
    g.add_argument("--ray-downsample", dest="ray_downsample", type=int,
                   help="sensor pixels per cast ray along each axis (default 10)")
    g.add_argument("--max-range", dest="max_range", type=float, help="sensor range, m (default 5)")
    g.add_argument("--look-at-fraction", dest="look_at_fraction", type=float,
                   help="share of candidates aimed at objects (default 0.7)")
    g.add_argument("--sample-frame", dest="sample_frame", choices=["base", "world"],
                   help="frame the candidate ball moves with (default base)")
    g.add_argument("--dwell", type=float, help="stop duration per base pose for --with-stops, s (default 1)")
    g.add_argument("--frame-interval", dest="frame_interval", type=float,
                   help="time between interpolated frames in all-images mode, s (default 0.2)")
    g.add_argument("--gt-density", dest="gt_density", type=float,
                   help="ground-truth surface samples per m^2 (default 1600)")
    g.add_argument("--jobs", type=int, help="worker processes for independent cells (default 1)")
    g.add_argument("--no-joint-filter", dest="joint_filter", action="store_const", const=False,
                   help="skip the joint-distance filter (ablation; paths may be inexecutable)")
    g.add_argument("--all-images", dest="all_images", action="store_const", const=True,
                   help="score interpolated frames between viewpoints too")


def _add_scenario_args(p):
    g = p.add_argument_group("scenario")
    g.add_argument("--layout", choices=scenarios.LAYOUTS, default="triangle")
    g.add_argument("--path", choices=scenarios.PATH_KINDS, default="zigzag")
    g.add_argument("--scene", help="scene YAML file (replaces --layout)")
    g.add_argument("--waypoints", help="waypoint CSV (x,y per row; replaces --path)")
    g.add_argument("--standoff", type=float, default=1.0, help="path distance from object footprints, m")
    g.add_argument("--fix-n", action="store_true", help="stretch or trim generated paths to exactly N samples")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="viewpath",
        description="Greedy long-horizon camera view planning for a mobile eye-in-hand robot.",
        epilog=f"Environment variables {ENV_PREFIX}<FIELD> (e.g. {ENV_PREFIX}SEED=3) override the config file; "
               "command-line flags override both. Exit codes: 0 ok, 1 internal, 2 usage, 3 config, "
               "4 input, 5 planning, 6 partial failure.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="plan one view path and report its coverage")
    _add_scenario_args(p)
    _add_config_args(p)
    p.add_argument("--planner", choices=["greedy", "nearest"], default="greedy")
    p.add_argument("--with-stops", action="store_true", help="halt the base for --dwell seconds at every pose")
    p.add_argument("--out", default="plan_out", help="output directory")

    p = sub.add_parser("sweep", help="coverage as a function of one parameter")
    _add_scenario_args(p)
    _add_config_args(p)
    p.add_argument("--param", required=True, choices=["v_base", "v_eef", "t_step"])
    p.add_argument("--values", required=True, type=float, nargs="+")
    p.add_argument("--out", default="sweep.csv", help="output CSV")

    p = sub.add_parser("compare", help="greedy vs. see-nearest over a scenario matrix, plus ablations")
    _add_config_args(p)
    p.add_argument("--layouts", nargs="+", choices=scenarios.LAYOUTS, default=list(scenarios.LAYOUTS))
    p.add_argument("--paths", nargs="+", choices=scenarios.PATH_KINDS, default=list(scenarios.PATH_KINDS))
    p.add_argument("--parts", nargs="+", choices=["nearest", "ablation", "stops", "images"],
                   default=["nearest", "ablation", "stops", "images"], help="report sections to compute")
    p.add_argument("--out", default="compare_out", help="output directory")

    p = sub.add_parser("gen-scenario", help="write a scene file and a waypoint file")
    _add_scenario_args(p)
    _add_config_args(p)
    p.add_argument("--side", type=float, default=4.0, help="triangle side, m")
    p.add_argument("--pitch", type=float, default=3.0, help="linear layout spacing, m")
    p.add_argument("--out", default="scenario", help="output directory")

    p = sub.add_parser("oracle-check", help="greedy vs. exhaustive search on small random instances")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--start-seed", type=int, default=0)
    p.add_argument("--out", help="optional CSV of per-instance results")
    return parser


def _config(args):
    overrides = {}
    for flag in CONFIG_FLAGS:
        v = getattr(args, flag, None)
        if v is not None:
            overrides["T_step" if flag == "t_step" else flag] = v
    for flag in ("joint_filter", "all_images"):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[flag] = v
    try:
        cfg = load_config(getattr(args, "config", None), overrides=overrides, preset=getattr(args, "preset", None))
    except (ValueError, TypeError, OSError) as e:
        raise CliError("config", str(e), EXIT_CONFIG) from None
    return cfg


def _spec(args, config):
    return scenarios.ScenarioSpec(
        layout=args.layout, path=args.path, scene_file=args.scene, waypoint_file=args.waypoints,
        standoff=args.standoff, side=getattr(args, "side", 4.0), pitch=getattr(args, "pitch", 3.0),
        overrides={"N": config.N} if args.fix_n else {},
    )


def _load(spec, config):
    try:
        scene = spec.scene(config.voxel_size)
        grid = voxelize(scene, config.voxel_size)
        base = spec.base_path(scene, config, grid)
    except (SceneError, ValueError, OSError) as e:
        raise CliError("input", str(e), EXIT_INPUT) from None
    return scene, grid, base


def _run_planner(name, scene, grid, arm, cam, base, config, with_stops):
    try:
        if with_stops:
            return plan_with_stops(scene, grid, arm, cam, base, config, config.dwell)
        if name == "nearest":
            return plan_see_nearest(scene, grid, arm, cam, base, config)
        return plan_greedy(scene, grid, arm, cam, base, config)
    except PlanningError as e:
        raise CliError("planning", str(e), EXIT_PLANNING) from None


def cmd_plan(args):
    config = _config(args)
    spec = _spec(args, config)
    scene, grid, base = _load(spec, config)
    cam, arm = config.camera(), config.arm()
    path = _run_planner(args.planner, scene, grid, arm, cam, base, config, args.with_stops)
    gt = sample_ground_truth(scene, config.gt_density, config.seed)
    mode = "all-images" if config.all_images else "viewpoint"
    report = evaluation.evaluate_path(path, grid, cam, arm, gt, config, mode)
    executed = evaluation.clamp_execute(path, arm, grid, cam)[0] if report.violations else path
    _, (pts, labels) = evaluation.simulate_survey(executed, grid, cam, arm, mode, config.frame_interval)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "viewpath.txt").write_text(path.to_text())
    (out / "report.csv").write_text(report.to_csv())
    base.to_csv(out / "base_path.csv")
    evaluation.write_xyz(out / "observed.xyz", pts, labels)
    print(f"scenario {spec.name}  planner {path.planner}  N {base.N}  mode {mode}")
    print(report.to_csv(), end="")
    if report.violations:
        print(f"warning: {len(report.violations)} transition(s) exceed the joint TVP bound: "
              f"{report.violations}; coverage is for the clamped execution")
    return EXIT_OK


def cmd_sweep(args):
    if len(args.values) < 2:
        raise CliError("usage", "a sweep needs at least 2 values", EXIT_USAGE)
    config = _config(args)
    field = {"v_base": "v_base", "v_eef": "v_eef", "t_step": "T_step"}[args.param]
    rows = [f"{args.param},N,coverage_mean,coverage_max,coverage_min,time_s,rate_pct_s,status"]
    failed = 0
    mode = "all-images" if config.all_images else "viewpoint"
    for value in args.values:
        try:
            cfg = config.replace(**{field: value})
            cfg.validate()
            spec = _spec(args, cfg)
            scene, grid, base = _load(spec, cfg)
            cam, arm = cfg.camera(), cfg.arm()
            path = _run_planner("greedy", scene, grid, arm, cam, base, cfg, False)
            gt = sample_ground_truth(scene, cfg.gt_density, cfg.seed)
            r = evaluation.evaluate_path(path, grid, cam, arm, gt, cfg, mode)
            rows.append(f"{value:g},{base.N},{r.mean:.6f},{r.max:.6f},{r.min:.6f},{r.total_time:.3f},"
                        f"{r.coverage_rate:.6f},ok")
        except (CliError, ValueError) as e:
            failed += 1
            rows.append(f"{value:g},,,,,,,error: {str(e).replace(',', ';')}")
    text = "\n".join(rows) + "\n"
    Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_compare(args):
    config = _config(args)
    specs = [scenarios.ScenarioSpec(layout, path) for layout in args.layouts for path in args.paths]
    tables, results = evaluation.compare_planners(specs, config, tuple(args.parts), config.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = []
    for name, table in tables.items():
        if name == "errors" and not table["rows"]:
            continue
        (out / f"{name}.csv").write_text(evaluation.table_csv(table))
        text.append(evaluation.table_text(table, name))
    report = "\n".join(text)
    (out / "report.txt").write_text(report)
    print(report, end="")
    return EXIT_PARTIAL if tables["errors"]["rows"] else EXIT_OK


def cmd_gen_scenario(args):
    config = _config(args)
    spec = _spec(args, config)
    scene, grid, base = _load(spec, config)
    scene_file, wp_file = scenarios.write_scenario(args.out, scene, base)
    print(f"wrote {scene_file} ({len(scene.objects)} objects) and {wp_file} ({base.N} poses, "
          f"{base.length:.2f} m)")
    return EXIT_OK


def cmd_oracle_check(args):
    from .oracle import run_case, summarize

    try:
        cases = [run_case(s) for s in range(args.start_seed, args.start_seed + args.instances)]
    except PlanningError as e:
        raise CliError("planning", str(e), EXIT_PLANNING) from None
    if args.out:
        lines = ["seed,N,greedy,optimal,ratio,relaxed_greedy,relaxed_optimal,relaxed_ratio,pooled_greedy,"
                 "pooled_optimal,pooled_ratio"]
        for c in cases:
            lines.append(f"{c.seed},{c.N},{c.greedy},{c.optimal},{c.ratio:.6f},{c.relaxed_greedy},"
                         f"{c.relaxed_optimal},{c.relaxed_ratio:.6f},{c.pooled_greedy},{c.pooled_optimal},"
                         f"{c.pooled_ratio:.6f}")
        Path(args.out).write_text("\n".join(lines) + "\n")
    summary = summarize(cases)
    for k, v in summary.items():
        print(f"{k}: {v:.6f}" if isinstance(v, float) else f"{k}: {v}")
    bad = summary["dominance_failures"] or summary["pooled_below_floor"]
    return EXIT_PLANNING if bad else EXIT_OK


COMMANDS = {"plan": cmd_plan, "sweep": cmd_sweep, "compare": cmd_compare, "gen-scenario": cmd_gen_scenario,
            "oracle-check": cmd_oracle_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    np.set_printoptions(precision=6, suppress=True)
    try:
        return COMMANDS[args.command](args)
    except CliError as e:
        print(f"error category={e.category} message={e}", file=sys.stderr)
        return e.code
    except Exception as e:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"error category=internal message={type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
