"""Oriented point clouds: KD-tree index, bounding boxes, view masking, file I/O.

The object model is a bare cloud of points with outward unit normals
(no mesh). Clouds are immutable after construction; transforming one
returns a new cloud with a freshly built index.
"""

import io
import os

import numpy as np
from scipy.spatial import cKDTree


class PointCloudModel:
    """Points (N, 3) + unit normals (N, 3) with a KD-tree and an AABB.

    `frame` is the reference pose of the cloud in world coordinates
    (identity unless the cloud was produced by `transformed`).
    """

    def __init__(self, points, normals, frame=None):
        from . import se3

        points = np.ascontiguousarray(points, dtype=float)
        normals = np.ascontiguousarray(normals, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must be (N, 3)")
        if normals.shape != points.shape:
            raise ValueError("normals must match points")
        if len(points) == 0:
            raise ValueError("empty point cloud")
        norms = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            normals = normals / norms[:, None]
        self.points = points
        self.normals = normals
        self.frame = se3.identity() if frame is None else np.asarray(frame, dtype=float)
        self.aabb_min = points.min(axis=0)
        self.aabb_max = points.max(axis=0)
        self._tree = None
        self.points.setflags(write=False)
        self.normals.setflags(write=False)

    def __len__(self):
        return len(self.points)

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    @property
    def centroid(self):
        return self.points.mean(axis=0)

    def transformed(self, pose):
        """Return the cloud rigidly moved by `pose` (new KD-tree, new AABB)."""
        from . import se3

        pts = se3.transform_points(pose, self.points)
        nrm = se3.transform_directions(pose, self.normals)
        return PointCloudModel(pts, nrm, frame=se3.compose(pose, self.frame))


def nearest(cloud, q, n=1):
    """The n closest cloud points to q, ascending by Euclidean distance.

    Returns (indices, distances). Exact (KD-tree, no approximation).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    n = min(n, len(cloud))
    d, idx = cloud.tree.query(np.asarray(q, dtype=float), k=n)
    if n == 1:
        return np.atleast_1d(idx), np.atleast_1d(d)
    return idx, d


class ViewMask:
    """Azimuthal view sectors about the vertical axis through a center point.

    The full circle is split into `view_count` equal wedges; `selected`
    is the set of wedge indices kept, mimicking single-view depth scans
    merged from a turntable-style capture.
    """

    def __init__(self, selected, view_count=7):
        selected = sorted(set(int(s) for s in selected))
        if not selected:
            raise ValueError("view mask must select at least one sector")
        if any(s < 0 or s >= view_count for s in selected):
            raise ValueError("sector index out of range")
        self.view_count = int(view_count)
        self.selected = tuple(selected)

    @classmethod
    def random(cls, n_views, rng, view_count=7):
        picks = rng.choice(view_count, size=n_views, replace=False)
        return cls(picks, view_count)


def sector_of(points, center, view_count):
    """Sector index of each point's azimuth about the vertical axis at center."""
    rel = np.asarray(points)[:, :2] - np.asarray(center)[:2]
    az = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
    return np.minimum((az / (2.0 * np.pi) * view_count).astype(int), view_count - 1)


def apply_view_mask(cloud, mask, center=None):
    """Keep only the points whose azimuth falls in the selected sectors."""
    if center is None:
        center = 0.5 * (cloud.aabb_min + cloud.aabb_max)
    sec = sector_of(cloud.points, center, mask.view_count)
    keep = np.isin(sec, mask.selected)
    if not keep.any():
        raise ValueError("view mask removed every point")
    return PointCloudModel(cloud.points[keep], cloud.normals[keep], frame=cloud.frame)


def estimate_normals(points, k=12):
    """Per-point normals from a local plane fit over k nearest neighbors.

    Normals are oriented outward from the cloud centroid. A degenerate
    (collinear) neighborhood falls back to the global plane normal.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < k + 1:
        raise ValueError("need at least k+1 points")
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k + 1)
    nbrs = points[idx]  # (N, k+1, 3)
    centered = nbrs - nbrs.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]  # smallest eigenvalue -> plane normal

    centroid = points.mean(axis=0)
    global_cov = (points - centroid).T @ (points - centroid)
    global_normal = np.linalg.eigh(global_cov)[1][:, 0]
    # collinear neighborhood: two near-zero eigenvalues
    degenerate = w[:, 1] < 1e-12 * np.maximum(w[:, 2], 1e-300)
    normals[degenerate] = global_normal

    outward = points - centroid
    flip = np.einsum("ni,ni->n", normals, outward) < 0
    normals[flip] = -normals[flip]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloudModel(points, normals)


# ---------------------------------------------------------------------------
# File formats: ASCII PLY with x y z nx ny nz, CSV fallback.

PLY_PROPS = ("x", "y", "z", "nx", "ny", "nz")


def save_cloud(cloud, path):
    path = os.fspath(path)
    if path.endswith(".csv"):
        _save_csv(cloud, path)
    else:
        _save_ply(cloud, path)


def load_cloud(path):
    path = os.fspath(path)
    if path.endswith(".csv"):
        return _load_csv(path)
    return _load_ply(path)


def _save_ply(cloud, path):
    with open(path, "w") as f:
        f.write("ply\nformat ascii 1.0\n")
        f.write("element vertex %d\n" % len(cloud))
        for p in PLY_PROPS:
            f.write("property float %s\n" % p)
        f.write("end_header\n")
        data = np.hstack([cloud.points, cloud.normals])
        np.savetxt(f, data, fmt="%.17g")


def _load_ply(path):
    with open(path) as f:
        line = f.readline().strip()
        if line != "ply":
            raise ValueError("not a PLY file: %s" % path)
        n_vertex = None
        props = []
        while True:
            line = f.readline()
            if not line:
                raise ValueError("truncated PLY header")
            line = line.strip()
            if line.startswith("element vertex"):
                n_vertex = int(line.split()[-1])
            elif line.startswith("property"):
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        if n_vertex is None:
            raise ValueError("PLY header missing vertex count")
        data = np.loadtxt(io.StringIO("".join(f.readline() for _ in range(n_vertex))))
    data = np.atleast_2d(data)
    cols = {name: i for i, name in enumerate(props)}
    pts = data[:, [cols["x"], cols["y"], cols["z"]]]
    if all(n in cols for n in ("nx", "ny", "nz")):
        nrm = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
        return PointCloudModel(pts, nrm)
    return estimate_normals(pts)


def _save_csv(cloud, path):
    data = np.hstack([cloud.points, cloud.normals])
    np.savetxt(path, data, fmt="%.17g", delimiter=",")


def _load_csv(path):
    data = np.atleast_2d(np.loadtxt(path, delimiter=","))
    if data.shape[1] >= 6:
        return PointCloudModel(data[:, :3], data[:, 3:6])
    return estimate_normals(data[:, :3])
