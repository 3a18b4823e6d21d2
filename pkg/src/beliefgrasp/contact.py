"""Penetration-depth / clearance queries between convex link bounds and
a point-cloud object.

Per link with triangle bound B and nearest cloud points A (link frame):

    d_ti     = (1/|A|) sum_a (|v_i1| - n_i . a)      per triangle
    d_signed = min_i d_ti          (negative when the points lie outside)
    d_obs    = |d_signed| if d_signed < 0 else 0     (sensing distance)

A two-level test (cloud AABB vs link AABB, inflated by the sensing
range) skips the whole computation when the link is far away, returning
the +inf sentinel.
"""

from dataclasses import dataclass

import numpy as np

from . import se3

INF = float("inf")


@dataclass(frozen=True)
class ClearanceResult:
    d_signed: float          # min over triangles of the average depth
    d_obs: float             # |d_signed| for separated links, else 0
    nearest_indices: np.ndarray | None
    triangle_index: int
    skipped: bool = False    # AABB fast-reject fired


def _triangle_offsets(tri_vertices, tri_normals, exact_plane_offset):
    if exact_plane_offset:
        return np.einsum("ti,ti->t", tri_normals, tri_vertices[:, 0, :])
    return np.linalg.norm(tri_vertices[:, 0, :], axis=1)


def _mesh_aabb(tri_vertices):
    flat = tri_vertices.reshape(-1, 3)
    return flat.min(axis=0), flat.max(axis=0)


def _world_aabb(local_lo, local_hi, pose):
    corners = np.array(
        [[x, y, z] for x in (local_lo[0], local_hi[0])
         for y in (local_lo[1], local_hi[1])
         for z in (local_lo[2], local_hi[2])]
    )
    w = se3.transform_points(pose, corners)
    return w.min(axis=-2), w.max(axis=-2)


def _boxes_disjoint(lo_a, hi_a, lo_b, hi_b):
    return np.any(lo_a > hi_b, axis=-1) | np.any(lo_b > hi_a, axis=-1)


def link_clearance(tri_vertices, tri_normals, link_pose, cloud, n_nearest=8,
                   d_max=None, exact_plane_offset=False, fast_reject=True):
    """Clearance of one link bound against the cloud.

    `d_max` enables the AABB fast-reject: if the cloud's box inflated by
    d_max misses the link's box the query returns the sentinel result
    (d_obs = +inf) without touching the KD-tree.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    link_pose = np.asarray(link_pose, dtype=float)
    if fast_reject and d_max is not None:
        lo, hi = _mesh_aabb(tri_vertices)
        wlo, whi = _world_aabb(lo, hi, link_pose)
        if _boxes_disjoint(wlo, whi, cloud.aabb_min - d_max, cloud.aabb_max + d_max):
            return ClearanceResult(-INF, INF, None, -1, skipped=True)
    n = min(n_nearest, len(cloud))
    _, idx = cloud.tree.query(link_pose[:3], k=n)
    idx = np.atleast_1d(idx)
    local = se3.transform_points(se3.inverse(link_pose), cloud.points[idx])
    off = _triangle_offsets(tri_vertices, tri_normals, exact_plane_offset)
    depths = off - tri_normals @ local.mean(axis=0)
    t = int(np.argmin(depths))
    d_signed = float(depths[t])
    d_obs = -d_signed if d_signed < 0 else 0.0
    return ClearanceResult(d_signed, d_obs, idx, t)


def clearance_batch(robot, link_poses, cloud, link_ids=None, n_nearest=8,
                    d_max=None, exact_plane_offset=False, fast_reject=True):
    """Vectorized d_signed/d_obs for a batch of configurations.

    link_poses is (B, L, 7) from kinematics.fk; link_ids selects which
    links to test (default: every link with a bound). Returns
    (d_signed (B, K), d_obs (B, K)) with sentinel values where the
    fast-reject skipped. Results are identical with fast_reject off.
    """
    link_poses = np.asarray(link_poses, dtype=float)
    squeeze = link_poses.ndim == 2
    if squeeze:
        link_poses = link_poses[None]
    B = len(link_poses)
    if link_ids is None:
        link_ids = [i for i, l in enumerate(robot.links) if l.tri_vertices is not None]
    K = len(link_ids)
    d_signed = np.full((B, K), -INF)
    d_obs = np.full((B, K), INF)
    for k, li in enumerate(link_ids):
        link = robot.links[li]
        poses = link_poses[:, li]
        active = np.ones(B, dtype=bool)
        if fast_reject and d_max is not None:
            lo, hi = link._aabb_cache if hasattr(link, "_aabb_cache") else _mesh_aabb(link.tri_vertices)
            link._aabb_cache = (lo, hi)
            wlo, whi = _world_aabb(lo, hi, poses)
            active = ~_boxes_disjoint(wlo, whi, cloud.aabb_min - d_max, cloud.aabb_max + d_max)
        if not active.any():
            continue
        pa = poses[active]
        n = min(n_nearest, len(cloud))
        _, idx = cloud.tree.query(pa[:, :3], k=n)
        idx = idx.reshape(len(pa), n)
        pts = cloud.points[idx]  # (Ba, n, 3)
        inv = se3.inverse(pa)
        local_mean = se3.transform_points(inv, pts).mean(axis=1)
        off = _triangle_offsets(link.tri_vertices, link.tri_normals, exact_plane_offset)
        depths = off[None, :] - local_mean @ link.tri_normals.T
        ds = depths.min(axis=1)
        d_signed[active, k] = ds
        d_obs[active, k] = np.where(ds < 0, -ds, 0.0)
    if squeeze:
        return d_signed[0], d_obs[0]
    return d_signed, d_obs


def config_in_collision(robot, q, cloud, tol=0.002, fast_reject=True, link_ids=None,
                        object_pose=None):
    """True iff some link bound holds cloud points deeper than `tol`.

    A negative tol demands standoff: configurations closer than |tol|
    to the surface count as colliding.
    """
    q = np.asarray(getattr(q, "q", q), dtype=float)
    return bool(configs_in_collision(robot, q[None], cloud, tol=tol,
                                     fast_reject=fast_reject, link_ids=link_ids,
                                     object_pose=object_pose)[0])


def configs_in_collision(robot, Q, cloud, tol=0.002, fast_reject=True, link_ids=None,
                         object_pose=None):
    """Batch version over configurations Q (B, n); returns (B,) bools.

    With `object_pose` given, `cloud` is treated as the object model in
    its own frame placed at that pose: link poses are mapped into the
    model frame instead of transforming the cloud (clearances are
    rigid-invariant), so one KD-tree serves any object placement.
    """
    from . import kinematics

    poses = kinematics.fk(robot, np.atleast_2d(Q))
    if object_pose is not None:
        poses = se3.compose(se3.inverse(np.asarray(object_pose, dtype=float)), poses)
    margin = max(0.0, -tol) + 1e-9
    ds, _ = clearance_batch(robot, poses, cloud, link_ids=link_ids,
                            d_max=margin, fast_reject=fast_reject)
    ds = np.where(np.isfinite(ds), ds, -INF)
    return np.any(ds > tol, axis=1)
