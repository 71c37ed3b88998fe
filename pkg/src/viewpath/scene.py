"""Scene description, voxelization and ground-truth surface sampling.

A scene is a list of objects built from parametric primitives (boxes,
cylinders, vertical pipe assemblies) or closed triangle meshes. Objects of
interest are scored for coverage; every other object is an obstacle that
blocks rays and camera positions.
"""

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage

from .geometry import ypr_matrix

SHAPES = ("box", "cylinder", "vertical-pipe-assembly", "mesh")
DEFAULT_CELL_BUDGET = 10**9

# free-space label; objects are labeled 1..n in scene order
FREE = 0


class SceneError(Exception):
    pass


class SceneParseError(SceneError):
    def __init__(self, message, line=None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class SceneValidationError(SceneError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class CapacityError(SceneError):
    pass


# --------------------------------------------------------------------------
# primitive parts


@dataclass
class BoxPart:
    center: np.ndarray
    R: np.ndarray
    size: np.ndarray

    @property
    def area(self):
        sx, sy, sz = self.size
        return 2.0 * (sx * sy + sy * sz + sx * sz)

    def corners(self):
        h = self.size / 2.0
        signs = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=float)
        return self.center + (signs * h) @ self.R.T

    def aabb(self):
        c = self.corners()
        return c.min(axis=0), c.max(axis=0)

    def inside(self, pts, strict=False):
        local = (pts - self.center) @ self.R
        h = self.size / 2.0
        if strict:
            return np.all(np.abs(local) < h - 1e-9, axis=1)
        return np.all(np.abs(local) <= h, axis=1)

    def faces(self):
        """Yield ``(area, mapper)`` per face; mapper takes (u, v) in [0,1]^2."""
        h = self.size / 2.0
        for axis in range(3):
            a, b = [i for i in range(3) if i != axis]
            for sign in (-1.0, 1.0):
                def mapper(u, v, axis=axis, a=a, b=b, sign=sign):
                    local = np.zeros((len(u), 3))
                    local[:, axis] = sign * h[axis]
                    local[:, a] = (u - 0.5) * self.size[a]
                    local[:, b] = (v - 0.5) * self.size[b]
                    return local
                yield self.size[a] * self.size[b], mapper

    def to_world(self, local):
        return self.center + local @ self.R.T


@dataclass
class CylinderPart:
    center: np.ndarray
    R: np.ndarray
    radius: float
    height: float

    @property
    def area(self):
        r, h = self.radius, self.height
        return 2.0 * np.pi * r * h + 2.0 * np.pi * r * r

    def aabb(self):
        axis = self.R[:, 2]
        half = np.abs(axis) * self.height / 2.0
        # disc extent along each world axis
        rad = self.radius * np.sqrt(np.clip(1.0 - axis**2, 0.0, None))
        ext = half + rad
        return self.center - ext, self.center + ext

    def inside(self, pts, strict=False):
        local = (pts - self.center) @ self.R
        r2 = local[:, 0] ** 2 + local[:, 1] ** 2
        if strict:
            return (r2 < (self.radius - 1e-9) ** 2) & (np.abs(local[:, 2]) < self.height / 2.0 - 1e-9)
        return (r2 <= self.radius**2) & (np.abs(local[:, 2]) <= self.height / 2.0)

    def faces(self):
        r, h = self.radius, self.height

        def side(u, v):
            th = 2.0 * np.pi * u
            return np.column_stack([r * np.cos(th), r * np.sin(th), (v - 0.5) * h])

        yield 2.0 * np.pi * r * h, side
        for sign in (-1.0, 1.0):
            def cap(u, v, sign=sign):
                rr = r * np.sqrt(u)
                th = 2.0 * np.pi * v
                return np.column_stack([rr * np.cos(th), rr * np.sin(th), np.full(len(u), sign * h / 2.0)])
            yield np.pi * r * r, cap

    def to_world(self, local):
        return self.center + local @ self.R.T


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    @property
    def triangles(self):
        return self.vertices[self.faces]

    @property
    def area(self):
        t = self.triangles
        return float(0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1).sum())

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def load_obj(path, scale=1.0):
    """Read vertices and triangulated faces from an ASCII Wavefront OBJ file."""
    verts, faces = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                if len(idx) < 3:
                    raise SceneParseError(f"{path}: face with fewer than 3 vertices", lineno)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise SceneParseError(f"{path}: mesh has no faces")
    return np.asarray(verts, dtype=float) * scale, np.asarray(faces, dtype=np.int64)


# --------------------------------------------------------------------------
# scene description


@dataclass
class SceneObject:
    id: str
    shape: str
    params: dict
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ypr: np.ndarray = field(default_factory=lambda: np.zeros(3))
    of_interest: bool = True
    line: int | None = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.ypr = np.asarray(self.ypr, dtype=float).reshape(3)

    @property
    def rotation(self):
        return ypr_matrix(*self.ypr)

    def parts(self):
        """Convex parts in world coordinates (empty for meshes)."""
        R = self.rotation
        p = self.params
        if self.shape == "box":
            return [BoxPart(self.position.copy(), R, np.asarray(p["size"], dtype=float))]
        if self.shape == "cylinder":
            return [CylinderPart(self.position.copy(), R, float(p["radius"]), float(p["height"]))]
        if self.shape == "vertical-pipe-assembly":
            out = []
            for pipe in p["pipes"]:
                x, y = pipe["xy"]
                local = np.array([x, y, pipe.get("z", 0.0)], dtype=float)
                out.append(CylinderPart(self.position + R @ local, R, float(pipe["radius"]), float(pipe["height"])))
            return out
        return []

    def mesh(self):
        if self.shape != "mesh":
            return None
        verts, faces = self.params["_mesh"]
        world = verts @ self.rotation.T + self.position
        return TriangleMesh(world, faces)

    def aabb(self):
        if self.shape == "mesh":
            return self.mesh().aabb()
        boxes = [part.aabb() for part in self.parts()]
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        return lo, hi

    def center(self):
        lo, hi = self.aabb()
        return (lo + hi) / 2.0

    def inside(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for part in self.parts():
            out |= part.inside(pts)
        return out

    def to_dict(self):
        d = {"id": self.id, "shape": self.shape}
        for k, v in self.params.items():
            if k.startswith("_"):
                continue
            d[k] = _plain(v)
        d["pose"] = {"xyz": _plain(self.position), "ypr": _plain(self.ypr)}
        d["of_interest"] = bool(self.of_interest)
        return d


def _plain(v):
    if isinstance(v, np.ndarray):
        return [float(x) for x in v]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (np.floating, float)):
        return float(v)
    return v


@dataclass
class SceneDescription:
    objects: list
    world_min: np.ndarray
    world_max: np.ndarray
    voxel_size: float = 0.05
    name: str = ""

    def __post_init__(self):
        self.world_min = np.asarray(self.world_min, dtype=float).reshape(3)
        self.world_max = np.asarray(self.world_max, dtype=float).reshape(3)

    @property
    def interest_objects(self):
        return [o for o in self.objects if o.of_interest]

    def object(self, object_id):
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def validate(self, require_interest=True):
        if np.any(self.world_max <= self.world_min):
            raise SceneValidationError("world_bounds must be a nondegenerate box", field="world_bounds")
        seen = {}
        for o in self.objects:
            if o.id in seen:
                raise SceneValidationError(f"duplicate object id {o.id!r} (object ids must be unique)", o.line, "id")
            seen[o.id] = o
            lo, hi = o.aabb()
            if np.any(lo < self.world_min - 1e-9) or np.any(hi > self.world_max + 1e-9):
                raise SceneValidationError(f"object {o.id!r} does not fit inside world_bounds", o.line, "pose")
        if require_interest and not self.interest_objects:
            raise SceneValidationError("scene needs at least one object with of_interest: true", field="objects")
        return self

    def to_dict(self):
        return {
            "name": self.name,
            "world_bounds": {"min": _plain(self.world_min), "max": _plain(self.world_max)},
            "voxel_size": float(self.voxel_size),
            "objects": [o.to_dict() for o in self.objects],
        }


# --------------------------------------------------------------------------
# scene files


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node, deep=False):
    mapping = yaml.SafeLoader.construct_mapping(loader, node, deep=deep)
    mapping["__line__"] = node.start_mark.line + 1
    return mapping


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _strip_lines(v):
    if isinstance(v, dict):
        return {k: _strip_lines(x) for k, x in v.items() if k != "__line__"}
    if isinstance(v, list):
        return [_strip_lines(x) for x in v]
    return v


def _vec(d, key, n, line, owner):
    if key not in d:
        raise SceneValidationError(f"{owner}: missing field {key!r}", line, key)
    v = d[key]
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise SceneValidationError(f"{owner}: field {key!r} must be a list of {n} numbers", line, key)
    try:
        return np.array([float(x) for x in v])
    except (TypeError, ValueError):
        raise SceneValidationError(f"{owner}: field {key!r} must be numeric", line, key) from None


def _positive(d, key, line, owner):
    if key not in d:
        raise SceneValidationError(f"{owner}: missing field {key!r}", line, key)
    try:
        val = float(d[key])
    except (TypeError, ValueError):
        raise SceneValidationError(f"{owner}: field {key!r} must be a number", line, key) from None
    if not val > 0:
        raise SceneValidationError(f"{owner}: field {key!r} must be > 0", line, key)
    return val


def _parse_object(d, base_dir):
    line = d.get("__line__")
    if "id" not in d:
        raise SceneValidationError("object without 'id'", line, "id")
    oid = str(d["id"])
    owner = f"object {oid!r}"
    shape = d.get("shape")
    if shape not in SHAPES:
        raise SceneValidationError(f"{owner}: shape must be one of {SHAPES}, got {shape!r}", line, "shape")
    pose = d.get("pose", {}) or {}
    pline = pose.get("__line__", line) if isinstance(pose, dict) else line
    position = _vec(pose, "xyz", 3, pline, owner) if "xyz" in pose else np.zeros(3)
    ypr = _vec(pose, "ypr", 3, pline, owner) if "ypr" in pose else np.zeros(3)
    params = {}
    if shape == "box":
        size = _vec(d, "size", 3, line, owner)
        if np.any(size <= 0):
            raise SceneValidationError(f"{owner}: box size must be positive", line, "size")
        params["size"] = size
    elif shape == "cylinder":
        params["radius"] = _positive(d, "radius", line, owner)
        params["height"] = _positive(d, "height", line, owner)
    elif shape == "vertical-pipe-assembly":
        pipes = d.get("pipes")
        if not isinstance(pipes, list) or not pipes:
            raise SceneValidationError(f"{owner}: 'pipes' must be a nonempty list", line, "pipes")
        out = []
        for p in pipes:
            pl = p.get("__line__", line)
            out.append({
                "xy": list(_vec(p, "xy", 2, pl, owner)),
                "radius": _positive(p, "radius", pl, owner),
                "height": _positive(p, "height", pl, owner),
                "z": float(p.get("z", 0.0)),
            })
        params["pipes"] = out
    else:
        if "file" not in d:
            raise SceneValidationError(f"{owner}: mesh needs 'file'", line, "file")
        path = Path(d["file"])
        if not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise SceneValidationError(f"{owner}: mesh file {str(path)!r} not found", line, "file")
        scale = float(d.get("scale", 1.0))
        params["file"] = str(d["file"])
        params["scale"] = scale
        params["_mesh"] = load_obj(path, scale)
    of_interest = d.get("of_interest", True)
    if not isinstance(of_interest, bool):
        raise SceneValidationError(f"{owner}: of_interest must be true or false", line, "of_interest")
    return SceneObject(oid, shape, params, position, ypr, of_interest, line)


def parse_scene(data, base_dir=".", check_overlap=True):
    if not isinstance(data, dict):
        raise SceneParseError("scene file must be a mapping at top level")
    wb = data.get("world_bounds")
    if not isinstance(wb, dict):
        raise SceneValidationError("missing 'world_bounds' mapping with 'min' and 'max'", data.get("__line__"), "world_bounds")
    wline = wb.get("__line__")
    wmin = _vec(wb, "min", 3, wline, "world_bounds")
    wmax = _vec(wb, "max", 3, wline, "world_bounds")
    voxel_size = float(data.get("voxel_size", 0.05))
    if not voxel_size > 0:
        raise SceneValidationError("voxel_size must be > 0", data.get("__line__"), "voxel_size")
    objs = data.get("objects")
    if not isinstance(objs, list):
        raise SceneValidationError("'objects' must be a list", data.get("__line__"), "objects")
    objects = [_parse_object(o, base_dir) for o in objs]
    scene = SceneDescription(objects, wmin, wmax, voxel_size, str(data.get("name", "")))
    scene.validate(require_interest=True)
    if check_overlap:
        check_interest_overlap(scene, voxel_size)
    return scene


def load_scene(path, check_overlap=True):
    """Read and validate a YAML scene file.

    Raises:
        SceneParseError: malformed YAML (carries the line number).
        SceneValidationError: schema or invariant violation (carries the
            line of the offending object and the field name).
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise SceneParseError(str(e.problem), line) from None
    return parse_scene(data, base_dir=path.parent, check_overlap=check_overlap)


def dump_scene(scene, path=None):
    text = yaml.safe_dump(scene.to_dict(), sort_keys=False, default_flow_style=None)
    if path is not None:
        Path(path).write_text(text)
    return text


def check_interest_overlap(scene, voxel_size):
    """Reject pairs of objects of interest that claim the same voxel."""
    spec = GridSpec.for_scene(scene, voxel_size)
    objs = scene.interest_objects
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            lo = np.maximum(a.aabb()[0], b.aabb()[0]) - voxel_size
            hi = np.minimum(a.aabb()[1], b.aabb()[1]) + voxel_size
            if np.any(lo >= hi):
                continue
            box = spec.index_box(lo, hi)
            if box is None:
                continue
            ma = _object_cells(a, spec, box)
            mb = _object_cells(b, spec, box)
            if np.any(ma & mb):
                raise SceneValidationError(
                    f"objects of interest {a.id!r} and {b.id!r} occupy the same voxel", b.line, "pose")


# --------------------------------------------------------------------------
# ground truth sampling


@dataclass
class GroundTruthSurface:
    """Labeled points on the analytic surfaces of the objects of interest.

    ``inward`` holds a unit vector per point pointing into its object; it
    breaks ties when a point sits exactly on a voxel boundary.
    """

    points: np.ndarray
    object_ids: np.ndarray
    inward: np.ndarray

    def __len__(self):
        return len(self.points)

    def for_object(self, object_id):
        return self.points[self.object_ids == object_id]


def _allocate(total, weights):
    """Split ``total`` integer counts proportionally (largest remainder)."""
    weights = np.asarray(weights, dtype=float)
    if total <= 0 or weights.sum() <= 0:
        return np.zeros(len(weights), dtype=int)
    raw = total * weights / weights.sum()
    base = np.floor(raw).astype(int)
    rest = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


def stratified_unit_square(n, rng, aspect=1.0):
    """``n`` jittered-grid samples in the unit square, one per chosen cell."""
    if n <= 0:
        return np.zeros(0), np.zeros(0)
    nx = max(1, int(np.ceil(np.sqrt(n * aspect))))
    ny = max(1, int(np.ceil(n / nx)))
    cells = rng.choice(nx * ny, size=n, replace=False)
    cells.sort()
    ix, iy = cells % nx, cells // nx
    u = (ix + rng.random(n)) / nx
    v = (iy + rng.random(n)) / ny
    return u, v


def _sample_part(part, total, rng):
    faces = list(part.faces())
    counts = _allocate(total, [a for a, _ in faces])
    pts, inward = [], []
    for (area, mapper), n in zip(faces, counts):
        if n == 0:
            continue
        u, v = stratified_unit_square(int(n), rng)
        local = mapper(u, v)
        world = part.to_world(local)
        d = part.center - world
        norm = np.linalg.norm(d, axis=1, keepdims=True)
        pts.append(world)
        inward.append(d / np.where(norm > 0, norm, 1.0))
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.vstack(pts), np.vstack(inward)


def _sample_mesh(mesh, total, rng):
    tris = mesh.triangles
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    cross = np.cross(e1, e2)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    counts = _allocate(total, areas)
    normals = cross / np.where(areas[:, None] > 0, 2 * areas[:, None], 1.0)
    pts, inward = [], []
    for t, n in enumerate(counts):
        if n == 0:
            continue
        u, v = stratified_unit_square(int(n), rng)
        flip = u + v > 1.0
        u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
        pts.append(tris[t, 0] + u[:, None] * e1[t] + v[:, None] * e2[t])
        inward.append(np.repeat(-normals[t][None], n, axis=0))
    if not pts:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.vstack(pts), np.vstack(inward)


def sample_object_surface(obj, density, rng):
    """Stratified samples on one object's boundary.

    The object's point budget is ``round(total part area * density)``. For
    unions of parts, samples falling strictly inside a sibling part are
    dropped since they are not on the outer boundary.
    """
    if obj.shape == "mesh":
        mesh = obj.mesh()
        return _sample_mesh(mesh, int(round(mesh.area * density)), rng)
    parts = obj.parts()
    total = int(round(sum(p.area for p in parts) * density))
    counts = _allocate(total, [p.area for p in parts])
    pts, inward = [], []
    for i, (part, n) in enumerate(zip(parts, counts)):
        p, w = _sample_part(part, int(n), rng)
        keep = np.ones(len(p), dtype=bool)
        for j, other in enumerate(parts):
            if j != i:
                keep &= ~other.inside(p, strict=True)
        pts.append(p[keep])
        inward.append(w[keep])
    return np.vstack(pts), np.vstack(inward)


def sample_ground_truth(scene, density=1600.0, seed=0):
    """Sample the surfaces of all objects of interest at ``density`` points/m^2."""
    if not density > 0:
        raise ValueError("density must be > 0")
    rng = np.random.default_rng(seed)
    pts, ids, inward = [], [], []
    for obj in scene.interest_objects:
        p, w = sample_object_surface(obj, density, rng)
        pts.append(p)
        inward.append(w)
        ids.append(np.full(len(p), obj.id, dtype=object))
    if not pts:
        return GroundTruthSurface(np.zeros((0, 3)), np.zeros(0, dtype=object), np.zeros((0, 3)))
    return GroundTruthSurface(np.vstack(pts), np.concatenate(ids), np.vstack(inward))


# --------------------------------------------------------------------------
# voxel grid


@dataclass(frozen=True)
class GridSpec:
    origin: np.ndarray
    voxel_size: float
    dims: tuple

    @classmethod
    def for_scene(cls, scene, voxel_size, cell_budget=DEFAULT_CELL_BUDGET):
        if not voxel_size > 0:
            raise ValueError("voxel_size must be > 0")
        extent = scene.world_max - scene.world_min
        if np.any(extent <= 0):
            raise SceneValidationError("world_bounds must be a nondegenerate box", field="world_bounds")
        dims = tuple(int(d) for d in np.maximum(1, np.ceil(extent / voxel_size - 1e-9)))
        cells = dims[0] * dims[1] * dims[2]
        if cells > cell_budget:
            raise CapacityError(f"grid of {dims} = {cells} cells exceeds the budget of {cell_budget}")
        return cls(scene.world_min.copy(), float(voxel_size), dims)

    def index_box(self, lo, hi):
        """Inclusive-exclusive voxel index range covering world box [lo, hi]."""
        a = np.floor((np.asarray(lo) - self.origin) / self.voxel_size).astype(int)
        b = np.floor((np.asarray(hi) - self.origin) / self.voxel_size).astype(int) + 1
        a = np.maximum(a, 0)
        b = np.minimum(b, self.dims)
        if np.any(b <= a):
            return None
        return a, b

    def centers(self, box):
        a, b = box
        axes = [self.origin[k] + (np.arange(a[k], b[k]) + 0.5) * self.voxel_size for k in range(3)]
        g = np.meshgrid(*axes, indexing="ij")
        return np.stack([x.ravel() for x in g], axis=1)

    def locate(self, pts):
        return np.floor((np.asarray(pts) - self.origin) / self.voxel_size).astype(np.int64)


def _tri_box_overlap(tri, centers, half):
    """Conservative separating-axis test of one triangle against many boxes."""
    v = tri[None, :, :] - centers[:, None, :]
    e = [tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]]
    ok = np.ones(len(centers), dtype=bool)
    # box face normals
    for k in range(3):
        ok &= ~((v[:, :, k].min(axis=1) > half) | (v[:, :, k].max(axis=1) < -half))
    # triangle normal
    n = np.cross(e[0], e[1])
    d = v[:, 0, :] @ n
    r = half * np.abs(n).sum()
    ok &= np.abs(d) <= r + 1e-12
    # 9 edge cross axes
    for edge in e:
        for k in range(3):
            axis = np.zeros(3)
            axis[k] = 1.0
            a = np.cross(axis, edge)
            if np.allclose(a, 0):
                continue
            p = v @ a
            r = half * np.abs(a).sum()
            ok &= ~((p.min(axis=1) > r + 1e-12) | (p.max(axis=1) < -r - 1e-12))
    return ok


def _object_cells(obj, spec, box, surface_density=None):
    """Boolean occupancy of ``obj`` over an index box of ``spec``."""
    a, b = box
    shape = tuple(b - a)
    vs = spec.voxel_size
    if obj.shape == "mesh":
        mask = np.zeros(shape, dtype=bool)
        mesh = obj.mesh()
        for tri in mesh.triangles:
            tb = spec.index_box(tri.min(axis=0) - vs, tri.max(axis=0) + vs)
            if tb is None:
                continue
            lo = np.maximum(tb[0], a)
            hi = np.minimum(tb[1], b)
            if np.any(hi <= lo):
                continue
            centers = spec.centers((lo, hi))
            hit = _tri_box_overlap(tri, centers, vs / 2.0).reshape(tuple(hi - lo))
            sl = tuple(slice(lo[k] - a[k], hi[k] - a[k]) for k in range(3))
            mask[sl] |= hit
        return ndimage.binary_fill_holes(mask)
    centers = spec.centers(box)
    mask = obj.inside(centers).reshape(shape)
    if surface_density is None:
        surface_density = (8.0 / vs) ** 2
    pts, inward = sample_object_surface(obj, surface_density, np.random.default_rng(0))
    idx = spec.locate(pts + inward * (1e-7 * vs)) - a
    keep = np.all((idx >= 0) & (idx < np.asarray(shape)), axis=1)
    idx = idx[keep]
    mask[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return mask


@dataclass
class VoxelGrid:
    """Dense labeled occupancy grid with per-object surface voxel sets.

    ``labels`` holds 0 for free space and ``k + 1`` for the k-th scene
    object. Surface voxels are occupied voxels with at least one free
    6-neighbor (cells outside the grid count as free); they are numbered
    0..S-1 in flat-index order and ``surface_id`` maps each cell to that
    number or -1.
    """

    spec: GridSpec
    labels: np.ndarray
    object_ids: list
    interest: np.ndarray
    surface_index: np.ndarray
    surface_label: np.ndarray
    surface_id: np.ndarray

    @property
    def origin(self):
        return self.spec.origin

    @cached_property
    def skip(self):
        """Flat chessboard distance (voxels, capped at 255) from free cells to occupancy."""
        free = self.labels == FREE
        if free.all():
            return np.full(self.labels.size, 255, dtype=np.uint8)
        dist = ndimage.distance_transform_cdt(free, metric="chessboard")
        return np.minimum(dist, 255).astype(np.uint8).ravel()

    @property
    def voxel_size(self):
        return self.spec.voxel_size

    @property
    def dims(self):
        return self.spec.dims

    @property
    def world_max(self):
        return self.origin + np.asarray(self.dims) * self.voxel_size

    @property
    def n_surface(self):
        return len(self.surface_index)

    @property
    def countable(self):
        """Per surface voxel: does it belong to an object of interest."""
        return self.interest[self.surface_label]

    def label_of(self, object_id):
        return self.object_ids.index(object_id) + 1

    def surface_set(self, object_id):
        """Flat voxel indices of the surface voxels of one object."""
        return self.surface_index[self.surface_label == self.label_of(object_id)]

    @property
    def surface_sets(self):
        return {oid: self.surface_set(oid) for oid in self.object_ids}

    def unravel(self, flat):
        return np.stack(np.unravel_index(np.asarray(flat), self.dims), axis=-1)

    def centers_of(self, flat):
        return self.origin + (self.unravel(flat) + 0.5) * self.voxel_size

    def in_bounds(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.origin) & (pts < self.world_max), axis=1)

    def locate(self, pts):
        return self.spec.locate(pts)

    def occupied_at(self, pts):
        """True where a point is out of bounds or inside an occupied voxel."""
        pts = np.atleast_2d(pts)
        out = np.ones(len(pts), dtype=bool)
        inb = self.in_bounds(pts)
        idx = self.locate(pts[inb])
        out[inb] = self.labels[idx[:, 0], idx[:, 1], idx[:, 2]] != FREE
        return out

    def surface_voxel_of(self, gt):
        """Flat index of the voxel holding each ground-truth point.

        Each point is nudged a hair along its inward vector so that points
        on shared voxel faces resolve to the voxel inside the object.
        """
        idx = self.locate(gt.points + gt.inward * (1e-7 * self.voxel_size))
        idx = np.clip(idx, 0, np.asarray(self.dims) - 1)
        return np.ravel_multi_index(idx.T, self.dims)


def voxelize(scene, voxel_size=None, cell_budget=DEFAULT_CELL_BUDGET):
    """Rasterize ``scene`` into a :class:`VoxelGrid`.

    A voxel belongs to an object when its center lies inside the solid or
    when it holds part of the object's surface. Objects are written in
    scene order, objects of interest first; an already-claimed voxel keeps
    its first label.
    """
    if voxel_size is None:
        voxel_size = scene.voxel_size
    spec = GridSpec.for_scene(scene, voxel_size, cell_budget)
    labels = np.zeros(spec.dims, dtype=np.int16)
    order = sorted(range(len(scene.objects)), key=lambda i: not scene.objects[i].of_interest)
    for i in order:
        obj = scene.objects[i]
        lo, hi = obj.aabb()
        box = spec.index_box(lo - voxel_size, hi + voxel_size)
        if box is None:
            continue
        mask = _object_cells(obj, spec, box)
        sl = tuple(slice(box[0][k], box[1][k]) for k in range(3))
        region = labels[sl]
        region[mask & (region == FREE)] = i + 1
    return _finish_grid(spec, labels, scene)


def grid_from_labels(labels, voxel_size=1.0, origin=(0.0, 0.0, 0.0), object_ids=None, interest=None):
    """Build a :class:`VoxelGrid` straight from a label array (tests, tools)."""
    labels = np.asarray(labels, dtype=np.int16)
    n = int(labels.max()) if labels.size else 0
    if object_ids is None:
        object_ids = [f"obj{k}" for k in range(1, n + 1)]
    if interest is None:
        interest = [True] * len(object_ids)
    spec = GridSpec(np.asarray(origin, dtype=float), float(voxel_size), tuple(labels.shape))
    return _build(spec, labels, list(object_ids), np.asarray(interest, dtype=bool))


def _finish_grid(spec, labels, scene):
    ids = [o.id for o in scene.objects]
    interest = np.array([o.of_interest for o in scene.objects], dtype=bool)
    return _build(spec, labels, ids, interest)


def _build(spec, labels, ids, interest):
    occ = labels != FREE
    padded = np.pad(occ, 1, constant_values=False)
    free_nb = np.zeros_like(occ)
    core = (slice(1, -1),) * 3
    for axis in range(3):
        for shift in (-1, 1):
            free_nb |= ~np.roll(padded, shift, axis=axis)[core]
    surface = occ & free_nb
    surface_index = np.flatnonzero(surface).astype(np.int64)
    surface_label = labels.ravel()[surface_index].astype(np.int64)
    surface_id = np.full(labels.size, -1, dtype=np.int32)
    surface_id[surface_index] = np.arange(len(surface_index), dtype=np.int32)
    # label 0 is free space and never countable
    interest_by_label = np.concatenate([[False], interest])
    labels.setflags(write=False)
    return VoxelGrid(spec, labels, ids, interest_by_label, surface_index, surface_label,
                     surface_id.reshape(labels.shape))
