"""Slow, independent reference implementations used by the tests."""

import numpy as np


def tvp_reference(omega, alpha, t):
    """Displacement from rest under a trapezoidal profile, written as ``omega*t - omega^2/(2*alpha)``."""
    if t * alpha <= omega:
        return alpha * t * t / 2.0
    return omega * t - omega * omega / (2.0 * alpha)


def _slab(lo, hi, o, d):
    """Entry and exit ray parameters of axis-aligned boxes (rows of lo/hi)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
    tmax = np.where(np.isnan(t2), np.inf, np.maximum(t1, t2))
    # zero direction components: inside the slab or never
    par = d == 0
    if np.any(par):
        inside = (o >= lo) & (o < hi)
        tmin = np.where(par, np.where(inside, -np.inf, np.inf), tmin)
        tmax = np.where(par, np.where(inside, np.inf, -np.inf), tmax)
    return tmin.max(axis=-1), tmax.min(axis=-1)


def march_first_hit(labels, origin, vs, o, d, max_range=np.inf, step=1e-3):
    """First occupied voxel along a ray by fixed 1 mm steps.

    When two consecutive samples fall in voxels that differ along more than
    one axis, the voxels of the box between them are slab-tested so a
    clipped corner voxel is not skipped.
    """
    o = np.asarray(o, dtype=float)
    d = np.asarray(d, dtype=float) / np.linalg.norm(d)
    dims = np.array(labels.shape)
    origin = np.asarray(origin, dtype=float)
    t0, t1 = _slab(origin[None], (origin + dims * vs)[None], o, d)
    t0, t1 = max(float(t0[0]), 0.0), min(float(t1[0]), max_range)
    if t0 > t1:
        return -1

    ts = np.append(np.arange(t0, t1, step), t1)
    cells = np.clip(np.floor((o + ts[:, None] * d - origin) / vs).astype(int), 0, dims - 1)
    if labels[tuple(cells[0])]:
        return int(np.ravel_multi_index(cells[0], dims))
    change = np.flatnonzero(np.any(cells[1:] != cells[:-1], axis=1)) + 1
    for k in change:
        prev, cur, prev_t, t = cells[k - 1], cells[k], ts[k - 1], ts[k]
        if np.count_nonzero(cur != prev) > 1:
            lo = np.minimum(prev, cur)
            hi = np.maximum(prev, cur)
            box = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)], indexing="ij"),
                           -1).reshape(-1, 3)
            box = box[~np.all(box == prev, axis=1)]
            bl = origin + box * vs
            en, ex = _slab(bl, bl + vs, o, d)
            hit = (en <= ex) & (ex >= prev_t) & (en <= t)
            cand = box[hit][np.argsort(en[hit], kind="stable")]
        else:
            cand = cur[None]
        for c in cand:
            if labels[tuple(c)]:
                return int(np.ravel_multi_index(c, dims))
    return -1


def brute_visible(grid, pose, cam):
    """Of-interest surface voxels whose center is in view and unoccluded.

    Every occupied voxel is slab-tested against the segment from the camera
    to each candidate center; the candidate is seen when it is the nearest
    occupied voxel the segment enters, within the sensor range.
    """
    sids = np.flatnonzero(grid.countable)
    if len(sids) == 0 or not grid.in_bounds(pose.position)[0]:
        return np.zeros(0, dtype=np.int64)
    centers = grid.centers_of(grid.surface_index[sids])
    inside = cam.in_frustum(pose, centers)
    occ_flat = np.flatnonzero(grid.labels.ravel())
    lo = grid.origin + grid.unravel(occ_flat) * grid.voxel_size
    hi = lo + grid.voxel_size
    seen = []
    for sid, c, ok in zip(sids, centers, inside):
        if not ok:
            continue
        d = c - pose.position
        dist = np.linalg.norm(d)
        d /= dist
        en, ex = _slab(lo, hi, pose.position, d)
        hit = (en <= ex) & (ex >= 0) & (en <= dist)
        en = np.maximum(en, 0.0)
        first = np.flatnonzero(hit)[np.argmin(en[hit])]
        if occ_flat[first] == grid.surface_index[sid] and cam.min_range <= en[first] <= cam.max_range:
            seen.append(sid)
    return np.array(seen, dtype=np.int64)


def captured_quadratic(obs_pts, obs_labels, gt_pts, gt_labels, radius):
    """All-pairs nearest-neighbor capture test."""
    out = np.zeros(len(gt_pts), dtype=bool)
    for i, (p, lab) in enumerate(zip(gt_pts, gt_labels)):
        for q, ql in zip(obs_pts, obs_labels):
            if ql == lab and np.sqrt(((p - q) ** 2).sum()) <= radius:
                out[i] = True
                break
    return out
