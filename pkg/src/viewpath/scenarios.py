"""Reference layouts (triangle, linear) and base paths (straight, zig-zag, loop).

Object stand-ins are simple primitives sized like plant equipment. All
generators are deterministic; the optional ``seed`` only jitters object yaw
when ``yaw_jitter`` is nonzero.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .planner import BasePath
from .scene import SceneDescription, SceneObject, dump_scene, load_scene

LAYOUTS = ("triangle", "linear")
PATH_KINDS = ("zigzag", "straight", "loop")
PATH_CLEARANCE = 0.3
WORLD_MARGIN = 4.5
WORLD_HEIGHT = 3.0


def _pipes(n, pitch, radius, height):
    half = (n - 1) * pitch / 2
    return [{"xy": [i * pitch - half, j * pitch - half], "radius": radius, "height": height, "z": 0.0}
            for i in range(n) for j in range(n)]


# name -> (shape, params, height); height puts the object bottom on the floor
ASSETS = {
    "tank": ("cylinder", {"radius": 0.6, "height": 1.8}, 1.8),
    "pipe_rack": ("vertical-pipe-assembly", {"pipes": _pipes(2, 0.7, 0.12, 1.8)}, 1.8),
    "compressor": ("box", {"size": [1.2, 0.8, 1.2]}, 1.2),
    "column": ("cylinder", {"radius": 0.3, "height": 2.2}, 2.2),
    "valve_skid": ("box", {"size": [0.9, 0.9, 0.8]}, 0.8),
    "cube": ("box", {"size": [1.0, 1.0, 1.0]}, 1.0),
}
DEFAULT_ASSETS = ("tank", "pipe_rack", "compressor")


def make_object(asset, oid, xy, yaw=0.0, of_interest=True):
    if asset not in ASSETS:
        raise ValueError(f"unknown asset {asset!r}; choose from {sorted(ASSETS)}")
    shape, params, height = ASSETS[asset]
    params = {k: (list(v) if isinstance(v, list) else v) for k, v in params.items()}
    if shape == "vertical-pipe-assembly":
        params["pipes"] = [dict(p) for p in params["pipes"]]
    return SceneObject(oid, shape, params, [xy[0], xy[1], height / 2.0], [yaw, 0.0, 0.0], of_interest)


def layout_positions(kind, count=3, side=4.0, pitch=3.0):
    if kind == "triangle":
        if count != 3:
            raise ValueError("the triangle layout has exactly 3 objects")
        return np.array([[0.0, 0.0], [side, 0.0], [side / 2.0, side * math.sqrt(3.0) / 2.0]])
    if kind == "linear":
        return np.column_stack([np.arange(count) * pitch, np.zeros(count)])
    raise ValueError(f"layout must be one of {LAYOUTS}, got {kind!r}")


def generate_layout(kind, assets=DEFAULT_ASSETS, side=4.0, pitch=3.0, voxel_size=0.05, seed=0,
                    yaw_jitter=0.0, margin=WORLD_MARGIN, height=WORLD_HEIGHT):
    """Place one object of interest per asset at the layout's positions.

    ``triangle`` puts three objects at the vertices of an equilateral
    triangle of side ``side`` starting at the origin; ``linear`` puts them in
    a row along +x with spacing ``pitch``.
    """
    assets = list(assets)
    if not assets:
        raise ValueError("asset list is empty")
    if not (side > 0 and pitch > 0):
        raise ValueError("side and pitch must be positive")
    xy = layout_positions(kind, len(assets), side, pitch)
    rng = np.random.default_rng(seed)
    yaws = rng.uniform(-yaw_jitter, yaw_jitter, len(assets)) if yaw_jitter else np.zeros(len(assets))
    objects = [make_object(a, f"{a}_{i}", p, float(y)) for i, (a, p, y) in enumerate(zip(assets, xy, yaws))]
    lo = np.min([o.aabb()[0] for o in objects], axis=0)
    hi = np.max([o.aabb()[1] for o in objects], axis=0)
    wmin = np.array([lo[0] - margin, lo[1] - margin, 0.0])
    wmax = np.array([hi[0] + margin, hi[1] + margin, max(height, hi[2] + 0.5)])
    scene = SceneDescription(objects, np.round(wmin, 6), np.round(wmax, 6), voxel_size, name=kind)
    return scene.validate()


# --------------------------------------------------------------------------
# base paths


def _footprints(scene):
    """(center_xy, extent) per object: extent is the half-diagonal of its xy box."""
    out = []
    for o in scene.objects:
        lo, hi = o.aabb()
        out.append(((lo[:2] + hi[:2]) / 2.0, float(np.linalg.norm(hi[:2] - lo[:2]) / 2.0)))
    return out


def straight_waypoints(scene, standoff=1.0, lead=1.0):
    fp = _footprints(scene)
    y = min(c[1] - e for c, e in fp) - standoff
    x0 = min(c[0] - e for c, e in fp) - lead
    x1 = max(c[0] + e for c, e in fp) + lead
    return np.array([[x0, y], [x1, y]]), False


def zigzag_waypoints(scene, standoff=1.0, lead=1.0):
    """Serpentine that alternates below and above the object row.

    The path crosses from one side to the other through the gap midway
    between consecutive objects (sorted by x).
    """
    fp = sorted(_footprints(scene), key=lambda f: f[0][0])
    y_low = min(c[1] - e for c, e in fp) - standoff
    y_high = max(c[1] + e for c, e in fp) + standoff
    x0 = fp[0][0][0] - fp[0][1] - lead
    x1 = fp[-1][0][0] + fp[-1][1] + lead
    pts = [[x0, y_low]]
    side = y_low
    for a, b in zip(fp[:-1], fp[1:]):
        mid = ((a[0][0] + a[1]) + (b[0][0] - b[1])) / 2.0
        other = y_high if side == y_low else y_low
        pts += [[mid, side], [mid, other]]
        side = other
    pts.append([x1, side])
    return np.array(pts), False


def loop_waypoints(scene, standoff=1.0, samples=720):
    """Closed curve at ``standoff`` around the convex hull of all objects.

    Traces the boundary of the hull of the object centers grown by the
    largest object extent plus ``standoff`` (a stadium for a row of objects).
    """
    fp = _footprints(scene)
    centers = np.array([c for c, _ in fp])
    R = max(e for _, e in fp) + standoff
    th = np.linspace(0.0, 2.0 * math.pi, samples, endpoint=False) - math.pi / 2.0
    u = np.column_stack([np.cos(th), np.sin(th)])
    support = np.argmax(centers @ u.T + 1e-12 * np.arange(len(centers))[:, None], axis=0)
    pts = []
    for k in range(samples):
        pts.append(centers[support[k]] + R * u[k])
        nxt = support[(k + 1) % samples]
        if nxt != support[k]:
            # straight edge of the grown hull
            pts.append(centers[support[k]] + R * u[(k + 1) % samples])
    return np.array(pts), True


def _path_waypoints(kind, scene, standoff, lead):
    if kind == "straight":
        return straight_waypoints(scene, standoff, lead)
    if kind == "zigzag":
        return zigzag_waypoints(scene, standoff, lead)
    if kind == "loop":
        return loop_waypoints(scene, standoff)
    raise ValueError(f"path kind must be one of {PATH_KINDS}, got {kind!r}")


def _fit_open(pts, target):
    """Lengthen or shorten both ends of an open polyline equally to reach ``target`` length."""
    pts = np.array(pts, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    delta = (target - seg.sum()) / 2.0
    if delta < 0 and -delta >= min(seg[0], seg[-1]):
        return pts  # too short to trim symmetrically; the resampler cuts the tail
    u0 = (pts[0] - pts[1]) / seg[0]
    u1 = (pts[-1] - pts[-2]) / seg[-1]
    pts[0] += delta * u0
    pts[-1] += delta * u1
    return pts


class ClearanceError(ValueError):
    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


def check_path_clearance(path, grid, clearance=PATH_CLEARANCE, max_height=1.0):
    """Raise :class:`ClearanceError` if the base comes within ``clearance`` of an obstacle.

    Poses and the straight segments between them (sampled every quarter
    voxel) must keep every occupied voxel below ``max_height`` outside a
    disc of radius ``clearance``.
    """
    vs = grid.voxel_size
    kz = max(1, min(grid.dims[2], int(math.ceil(max_height / vs))))
    occ2d = (grid.labels[:, :, :kz] != 0).any(axis=2)
    w = int(math.ceil(clearance / vs)) + 1
    r = np.arange(-w, w + 1)
    offs = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    for seg in range(path.N - 1):
        a, b = path.poses[seg, :2], path.poses[seg + 1, :2]
        n = max(2, int(math.ceil(np.linalg.norm(b - a) / (vs / 4))) + 1)
        for s in np.linspace(0.0, 1.0, n):
            p = a + s * (b - a)
            idx = np.floor((p - grid.origin[:2]) / vs).astype(int)
            if np.any(idx < 0) or idx[0] >= grid.dims[0] or idx[1] >= grid.dims[1]:
                raise ClearanceError(f"base path segment {seg} ({a.round(3).tolist()} -> "
                                     f"{b.round(3).tolist()}) leaves the world bounds", seg)
            cells = idx + offs
            ok = np.all((cells >= 0) & (cells < np.asarray(grid.dims[:2])), axis=1)
            cells = cells[ok]
            lo = grid.origin[:2] + cells * vs
            near = np.clip(p, lo, lo + vs)
            touch = np.linalg.norm(near - p, axis=1) < clearance
            if np.any(touch & occ2d[cells[:, 0], cells[:, 1]]):
                raise ClearanceError(f"base path segment {seg} ({a.round(3).tolist()} -> "
                                     f"{b.round(3).tolist()}) passes within {clearance} m of an obstacle", seg)
    return True


def generate_base_path(kind, layout, v_base, T_step, N=None, standoff=1.0, lead=1.0, grid=None,
                       clearance=PATH_CLEARANCE):
    """Base path of the given kind around ``layout``, sampled every ``v_base * T_step`` meters.

    With ``N=None`` the path keeps every sample that fits on the curve. With
    an explicit ``N`` both ends of an open curve are extended or trimmed
    equally so it holds exactly ``N`` poses; a loop is scaled about its centroid so ``N`` samples close
    the circuit. When ``grid`` is given the clearance invariant is checked.
    """
    if N is not None and N < 2:
        raise ValueError("N must be >= 2")
    pts, closed = _path_waypoints(kind, layout, standoff, lead)
    spacing = v_base * T_step
    if not closed and N is not None:
        pts = _fit_open(pts, (N - 1) * spacing)
    if closed and N is not None:
        seg = np.diff(np.vstack([pts, pts[:1]]), axis=0)
        perim = float(np.linalg.norm(seg, axis=1).sum())
        c = pts.mean(axis=0)
        pts = c + (pts - c) * (N * spacing / perim)
    path = BasePath.from_polyline(pts, v_base, T_step, N=N, closed=closed, kind=kind)
    if grid is not None:
        check_path_clearance(path, grid, clearance)
    return path


def crossings(path, y=0.0):
    """Number of times the base path crosses the horizontal line ``y``."""
    s = np.sign(path.poses[:, 1] - y)
    s = s[s != 0]
    return int(np.count_nonzero(np.diff(s)))


# --------------------------------------------------------------------------
# scenario bundles


@dataclass
class ScenarioSpec:
    layout: str = "triangle"
    path: str = "zigzag"
    scene_file: str | None = None
    waypoint_file: str | None = None
    side: float = 4.0
    pitch: float = 3.0
    standoff: float = 1.0
    lead: float = 1.0
    assets: tuple = DEFAULT_ASSETS
    overrides: dict = field(default_factory=dict)

    @property
    def name(self):
        lay = Path(self.scene_file).stem if self.scene_file else self.layout
        pk = Path(self.waypoint_file).stem if self.waypoint_file else self.path
        return f"{lay}/{pk}"

    def scene(self, voxel_size=0.05):
        if self.scene_file:
            return load_scene(self.scene_file)
        return generate_layout(self.layout, self.assets, self.side, self.pitch, voxel_size)

    def base_path(self, scene, config, grid=None):
        if self.waypoint_file:
            path = BasePath.from_csv(self.waypoint_file, config.v_base, config.T_step)
            if grid is not None:
                check_path_clearance(path, grid)
            return path
        return generate_base_path(self.path, scene, config.v_base, config.T_step, N=self.N(config),
                                  standoff=self.standoff, lead=self.lead, grid=grid)

    def N(self, config):
        """Base samples: from the path geometry unless ``overrides['N']`` is set."""
        n = self.overrides.get("N")
        return None if n in (None, "natural") else int(n)


def write_scenario(out_dir, scene, path):
    """Write ``scene.yaml`` and ``waypoints.csv``; both load back unchanged."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_scene(scene, out / "scene.yaml")
    path.to_csv(out / "waypoints.csv")
    return out / "scene.yaml", out / "waypoints.csv"
