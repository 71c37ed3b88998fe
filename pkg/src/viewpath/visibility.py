"""Frustum visibility over the voxel grid and the coverage information gain.

Ray traversal is the Amanatides-Woo incremental grid walk, compiled with
numba. The information gain of a view is the number of distinct
of-interest surface voxels that are the first hit of at least one ray.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .geometry import Pose6

MISS = -1


@dataclass(frozen=True)
class CameraModel:
    h_fov: float = 70.0
    v_fov: float = 55.0
    cols: int = 64
    rows: int = 48
    min_range: float = 0.1
    max_range: float = 5.0

    def __post_init__(self):
        if not (0 < self.h_fov < 180 and 0 < self.v_fov < 180):
            raise ValueError("fields of view must be in (0, 180) degrees")
        if self.cols < 2 or self.rows < 2:
            raise ValueError("ray grid needs at least 2x2 rays")
        if not (0 <= self.min_range < self.max_range):
            raise ValueError("need 0 <= min_range < max_range")

    @classmethod
    def from_sensor(cls, width=640, height=480, downsample=10, **kw):
        """Ray grid of a ``width x height`` sensor thinned by ``downsample`` per axis."""
        return cls(cols=max(2, width // downsample), rows=max(2, height // downsample), **kw)

    def ray_directions(self):
        """Unit ray directions in the camera frame, one per pixel center."""
        ty = np.tan(np.radians(self.h_fov) / 2.0)
        tz = np.tan(np.radians(self.v_fov) / 2.0)
        y = ty * (1.0 - 2.0 * (np.arange(self.cols) + 0.5) / self.cols)
        z = tz * (1.0 - 2.0 * (np.arange(self.rows) + 0.5) / self.rows)
        Y, Z = np.meshgrid(y, z, indexing="xy")
        d = np.stack([np.ones(Y.size), Y.ravel(), Z.ravel()], axis=1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def in_frustum(self, pose, pts):
        """Mask of world points inside the (unbounded-range) view pyramid."""
        local = (np.atleast_2d(pts) - pose.position) @ pose.rotation
        x = local[:, 0]
        ty = np.tan(np.radians(self.h_fov) / 2.0)
        tz = np.tan(np.radians(self.v_fov) / 2.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            return (x > 0) & (np.abs(local[:, 1]) <= ty * x) & (np.abs(local[:, 2]) <= tz * x)


# --------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _walk(labels, skip, gx, gy, gz, ox, oy, oz, dx, dy, dz, vs, max_range):
    """Return (flat index, entry distance) of the first occupied voxel, or (-1, inf).

    ``skip`` is the chessboard distance (in voxels) from each free voxel to
    the nearest occupied one. From a free voxel at distance ``d`` the ray
    can advance ``(d - 1)`` voxel lengths without touching an occupied
    voxel, after which the exact walk resumes.
    """
    nx, ny, nz = labels.shape
    inf = np.inf
    # clip the ray to the grid box
    t0 = 0.0
    t1 = max_range
    lo = (gx, gy, gz)
    hi = (gx + nx * vs, gy + ny * vs, gz + nz * vs)
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for k in range(3):
        if d[k] == 0.0:
            if o[k] < lo[k] or o[k] >= hi[k]:
                return -1, inf
        else:
            ta = (lo[k] - o[k]) / d[k]
            tb = (hi[k] - o[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return -1, inf
    flat = labels.ravel()
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    sz = 1 if dz > 0 else -1
    stx = sx * ny * nz
    sty = sy * nz
    stz = sz
    tdx = vs / abs(dx) if dx != 0.0 else inf
    tdy = vs / abs(dy) if dy != 0.0 else inf
    tdz = vs / abs(dz) if dz != 0.0 else inf
    t_start = t0
    first = True
    while True:
        ix = int(np.floor((ox + t_start * dx - gx) / vs))
        iy = int(np.floor((oy + t_start * dy - gy) / vs))
        iz = int(np.floor((oz + t_start * dz - gz) / vs))
        # entering through a face can land exactly on the far boundary
        ix = min(max(ix, 0), nx - 1)
        iy = min(max(iy, 0), ny - 1)
        iz = min(max(iz, 0), nz - 1)
        cur = (ix * ny + iy) * nz + iz
        if first and flat[cur] != 0:
            return cur, t0
        first = False
        rx = nx - 1 - ix if dx > 0 else ix
        ry = ny - 1 - iy if dy > 0 else iy
        rz = nz - 1 - iz if dz > 0 else iz
        tmx = (gx + (ix + (1 if dx > 0 else 0)) * vs - ox) / dx if dx != 0.0 else inf
        tmy = (gy + (iy + (1 if dy > 0 else 0)) * vs - oy) / dy if dy != 0.0 else inf
        tmz = (gz + (iz + (1 if dz > 0 else 0)) * vs - oz) / dz if dz != 0.0 else inf
        t = t_start
        jumped = False
        while True:
            s = skip[cur]
            if s >= 2:
                t_start = t + (s - 1) * vs * (1.0 - 1e-9)
                if t_start > t1:
                    return -1, inf
                jumped = True
                break
            if tmx <= tmy and tmx <= tmz:
                t = tmx
                if t > t1 or rx == 0:
                    return -1, inf
                rx -= 1
                cur += stx
                tmx += tdx
            elif tmy <= tmz:
                t = tmy
                if t > t1 or ry == 0:
                    return -1, inf
                ry -= 1
                cur += sty
                tmy += tdy
            else:
                t = tmz
                if t > t1 or rz == 0:
                    return -1, inf
                rz -= 1
                cur += stz
                tmz += tdz
            if flat[cur] != 0:
                return cur, t
        if not jumped:
            return -1, inf


@numba.njit(cache=True)
def _cast_many(labels, skip, g, vs, origins, dirs, max_range, out_idx, out_t):
    for i in range(len(dirs)):
        h, t = _walk(labels, skip, g[0], g[1], g[2], origins[i, 0], origins[i, 1], origins[i, 2],
                     dirs[i, 0], dirs[i, 1], dirs[i, 2], vs, max_range)
        out_idx[i] = h
        out_t[i] = t


@numba.njit(cache=True)
def _view_ids(labels, skip, surface_id, countable, g, vs, pos, R, dirs_local, min_r, max_r, out):
    """Write countable surface ids hit by one view into ``out``; return count."""
    n = 0
    flat_sid = surface_id.ravel()
    for r in range(len(dirs_local)):
        a = dirs_local[r, 0]
        b = dirs_local[r, 1]
        c = dirs_local[r, 2]
        dx = R[0, 0] * a + R[0, 1] * b + R[0, 2] * c
        dy = R[1, 0] * a + R[1, 1] * b + R[1, 2] * c
        dz = R[2, 0] * a + R[2, 1] * b + R[2, 2] * c
        h, t = _walk(labels, skip, g[0], g[1], g[2], pos[0], pos[1], pos[2], dx, dy, dz, vs, max_r)
        if h < 0 or t < min_r:
            continue
        sid = flat_sid[h]
        if sid >= 0 and countable[sid]:
            out[n] = sid
            n += 1
    return n


@numba.njit(cache=True)
def _batch_gain(labels, skip, surface_id, countable, g, vs, positions, rots, dirs_local, min_r, max_r,
                observed, valid, gains):
    stamp = np.zeros(len(countable), dtype=np.int32)
    buf = np.empty(len(dirs_local), dtype=np.int64)
    for b in range(len(positions)):
        if not valid[b]:
            gains[b] = 0
            continue
        n = _view_ids(labels, skip, surface_id, countable, g, vs, positions[b], rots[b], dirs_local,
                      min_r, max_r, buf)
        cnt = 0
        for k in range(n):
            sid = buf[k]
            if stamp[sid] != b + 1 and not observed[sid]:
                stamp[sid] = b + 1
                cnt += 1
        gains[b] = cnt


# --------------------------------------------------------------------------
# public API


def cast_ray(grid, origin, direction, max_range=np.inf):
    """First occupied voxel along a ray.

    Returns ``(flat_index, label, distance)`` or ``None`` on a miss. A ray
    starting inside an occupied voxel reports that voxel at distance 0.
    """
    idx, t = cast_rays(grid, np.atleast_2d(origin), np.atleast_2d(direction), max_range)
    if idx[0] < 0:
        return None
    return int(idx[0]), int(grid.labels.ravel()[idx[0]]), float(t[0])


def cast_rays(grid, origins, directions, max_range=np.inf):
    origins = np.ascontiguousarray(np.broadcast_to(origins, np.shape(directions)), dtype=float)
    directions = np.ascontiguousarray(directions, dtype=float)
    out_idx = np.empty(len(directions), dtype=np.int64)
    out_t = np.empty(len(directions), dtype=float)
    _cast_many(grid.labels, grid.skip, np.ascontiguousarray(grid.origin, dtype=float), grid.voxel_size,
               origins, directions, float(max_range), out_idx, out_t)
    return out_idx, out_t


def _pose_arrays(pose):
    return np.ascontiguousarray(pose.position, dtype=float), np.ascontiguousarray(pose.rotation, dtype=float)


def pose_in_bounds(grid, pose):
    return bool(grid.in_bounds(pose.position)[0])


def visible_surface_voxels(grid, pose, cam):
    """Sorted surface ids of the of-interest voxels seen from ``pose``.

    A voxel is seen when it is the first hit of some ray of the camera's ray
    grid at a range within ``[min_range, max_range]``. Poses outside the
    world bounds see nothing.
    """
    if not pose_in_bounds(grid, pose):
        return np.zeros(0, dtype=np.int64)
    pos, R = _pose_arrays(pose)
    dirs = np.ascontiguousarray(cam.ray_directions())
    buf = np.empty(len(dirs), dtype=np.int64)
    n = _view_ids(grid.labels, grid.skip, grid.surface_id, grid.countable, np.ascontiguousarray(grid.origin),
                  grid.voxel_size, pos, R, dirs, cam.min_range, cam.max_range, buf)
    return np.unique(buf[:n])


def visible_surface_voxels_exhaustive(grid, pose, cam):
    """Per-voxel visibility: one ray aimed at every of-interest surface voxel center.

    This is the ray grid taken to its dense limit. A voxel counts when its
    center is inside the view pyramid and the ray toward it first hits the
    voxel itself within range.
    """
    if not pose_in_bounds(grid, pose):
        return np.zeros(0, dtype=np.int64)
    sids = np.flatnonzero(grid.countable)
    if len(sids) == 0:
        return sids
    centers = grid.centers_of(grid.surface_index[sids])
    inside = cam.in_frustum(pose, centers)
    sids, centers = sids[inside], centers[inside]
    if len(sids) == 0:
        return sids
    d = centers - pose.position
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    idx, t = cast_rays(grid, pose.position, d, cam.max_range)
    ok = (idx == grid.surface_index[sids]) & (t >= cam.min_range)
    return sids[ok]


def surface_pairs(grid, sids):
    """``(object_id, flat voxel index)`` pairs for surface ids."""
    return {(grid.object_ids[grid.surface_label[s] - 1], int(grid.surface_index[s])) for s in sids}


class ObservedSet:
    """Accumulated observed surface voxels with first-observer provenance."""

    def __init__(self, grid):
        self.grid = grid
        self.mask = np.zeros(grid.n_surface, dtype=bool)
        self.first_view = np.full(grid.n_surface, -1, dtype=np.int64)
        self._order = []

    def copy(self):
        other = ObservedSet.__new__(ObservedSet)
        other.grid = self.grid
        other.mask = self.mask.copy()
        other.first_view = self.first_view.copy()
        other._order = list(self._order)
        return other

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, sid):
        return bool(self.mask[sid])

    def add(self, sids, view_index):
        """Mark ``sids`` observed; return how many were new."""
        sids = np.asarray(sids, dtype=np.int64)
        new = sids[~self.mask[sids]]
        new = np.unique(new)
        self.mask[new] = True
        self.first_view[new] = view_index
        self._order.extend(int(s) for s in new)
        return len(new)

    @property
    def ids(self):
        return np.flatnonzero(self.mask)

    def insertion_order(self):
        return list(self._order)

    def per_object(self):
        """Map object id -> flat voxel indices observed on that object."""
        out = {}
        for sid in self.ids:
            oid = self.grid.object_ids[self.grid.surface_label[sid] - 1]
            out.setdefault(oid, []).append(int(self.grid.surface_index[sid]))
        return out

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("voxel_index,object_id,first_view\n")
            for sid in self._order:
                oid = self.grid.object_ids[self.grid.surface_label[sid] - 1]
                f.write(f"{self.grid.surface_index[sid]},{oid},{self.first_view[sid]}\n")


def marginal_ig(candidate, observed, grid, cam):
    """Number of of-interest surface voxels ``candidate`` sees that are not yet observed."""
    vis = visible_surface_voxels(grid, candidate, cam)
    return int((~observed.mask[vis]).sum())


def batch_marginal_ig(poses, observed, grid, cam):
    """Vectorized :func:`marginal_ig` over a list of poses."""
    n = len(poses)
    gains = np.zeros(n, dtype=np.int64)
    if n == 0:
        return gains
    positions = np.ascontiguousarray([p.position for p in poses], dtype=float)
    rots = np.ascontiguousarray([p.rotation for p in poses], dtype=float)
    valid = grid.in_bounds(positions)
    _batch_gain(grid.labels, grid.skip, grid.surface_id, grid.countable, np.ascontiguousarray(grid.origin),
                grid.voxel_size, positions, rots, np.ascontiguousarray(cam.ray_directions()),
                cam.min_range, cam.max_range, observed.mask, valid, gains)
    return gains


def total_ig(view_sets):
    """Distinct voxels covered by a collection of visible sets."""
    if not view_sets:
        return 0
    return int(len(np.unique(np.concatenate([np.asarray(v, dtype=np.int64) for v in view_sets]))))


__all__ = [
    "CameraModel", "Pose6", "ObservedSet", "cast_ray", "cast_rays", "visible_surface_voxels",
    "visible_surface_voxels_exhaustive", "marginal_ig", "batch_marginal_ig", "total_ig", "surface_pairs",
]
