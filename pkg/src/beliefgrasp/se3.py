"""Rigid-body pose algebra on SE(3).

A pose is a plain numpy array of 7 numbers ``[px py pz qw qx qy qz]``:
position in meters followed by a unit quaternion (scalar first). All
functions broadcast over leading dimensions, so an array of shape (N, 7)
is a batch of N poses.
"""

from dataclasses import dataclass, field

import numpy as np

QUAT_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_mul(a, b):
    """Hamilton product, scalar-first convention."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_rotate(q, v):
    """Rotate vectors v (..., 3) by quaternions q (..., 4)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., 0]
    qx, qy, qz = q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    # t = 2 (qvec x v); out = v + w t + qvec x t, with explicit components
    # (np.cross is surprisingly slow in hot loops)
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return np.stack(
        [
            vx + w * tx + qy * tz - qz * ty,
            vy + w * ty + qz * tx - qx * tz,
            vz + w * tz + qx * ty - qy * tx,
        ],
        axis=-1,
    )


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = np.asarray(angle, dtype=float)
    half = 0.5 * angle
    w = np.cos(half)
    xyz = axis * np.sin(half)[..., None]
    return np.concatenate([w[..., None], xyz], axis=-1)


def quat_to_matrix(q):
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def geodesic_angle(qa, qb):
    """Angle of the relative rotation between two quaternions, in [0, pi].

    Handles the double cover: q and -q give the same orientation. Uses
    atan2 of the relative quaternion for full precision near zero.
    """
    rel = quat_mul(quat_conj(np.asarray(qa, dtype=float)), qb)
    s = np.linalg.norm(rel[..., 1:], axis=-1)
    c = np.abs(rel[..., 0])
    return 2.0 * np.arctan2(s, c)


def identity():
    return np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])


def make_pose(position=(0.0, 0.0, 0.0), quaternion=(1.0, 0.0, 0.0, 0.0)):
    """Build a pose array, normalizing the quaternion."""
    position = np.asarray(position, dtype=float)
    q = quat_normalize(quaternion)
    return np.concatenate([np.broadcast_to(position, q.shape[:-1] + (3,)), q], axis=-1)


def pose_from_axis_angle(axis, angle, position=(0.0, 0.0, 0.0)):
    return make_pose(position, quat_from_axis_angle(axis, angle))


def compose(a, b):
    """Pose product a * b (apply b first, then a). Renormalizes the quaternion."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = quat_normalize(quat_mul(a[..., 3:], b[..., 3:]))
    p = a[..., :3] + quat_rotate(a[..., 3:], b[..., :3])
    return np.concatenate([p, q], axis=-1)


def inverse(a):
    a = np.asarray(a, dtype=float)
    qc = quat_conj(a[..., 3:])
    p = -quat_rotate(qc, a[..., :3])
    return np.concatenate([p, qc], axis=-1)


def transform_points(pose, pts):
    """Apply pose to points (..., 3)."""
    pose = np.asarray(pose, dtype=float)
    return quat_rotate(pose[..., None, 3:], pts) + pose[..., None, :3]


def transform_directions(pose, dirs):
    """Rotate direction vectors (normals) without translating."""
    pose = np.asarray(pose, dtype=float)
    return quat_rotate(pose[..., None, 3:], dirs)


def pose_to_matrix(pose):
    pose = np.asarray(pose, dtype=float)
    m = np.zeros(pose.shape[:-1] + (4, 4))
    m[..., :3, :3] = quat_to_matrix(pose[..., 3:])
    m[..., :3, 3] = pose[..., :3]
    m[..., 3, 3] = 1.0
    return m


def matrix_to_pose(m):
    m = np.asarray(m, dtype=float)
    r = m[..., :3, :3]
    # Shepperd's method, branch on the largest diagonal term
    w = np.sqrt(np.maximum(0.0, 1.0 + r[..., 0, 0] + r[..., 1, 1] + r[..., 2, 2])) / 2.0
    x = np.sqrt(np.maximum(0.0, 1.0 + r[..., 0, 0] - r[..., 1, 1] - r[..., 2, 2])) / 2.0
    y = np.sqrt(np.maximum(0.0, 1.0 - r[..., 0, 0] + r[..., 1, 1] - r[..., 2, 2])) / 2.0
    z = np.sqrt(np.maximum(0.0, 1.0 - r[..., 0, 0] - r[..., 1, 1] + r[..., 2, 2])) / 2.0
    x = np.copysign(x, r[..., 2, 1] - r[..., 1, 2])
    y = np.copysign(y, r[..., 0, 2] - r[..., 2, 0])
    z = np.copysign(z, r[..., 1, 0] - r[..., 0, 1])
    q = quat_normalize(np.stack([w, x, y, z], axis=-1))
    return np.concatenate([m[..., :3, 3], q], axis=-1)


def random_pose(rng, pos_scale=1.0):
    """Uniformly random orientation with Gaussian position, for tests."""
    p = rng.normal(scale=pos_scale, size=3)
    q = quat_normalize(rng.normal(size=4))
    return np.concatenate([p, q])


@dataclass(frozen=True)
class SE3Metric:
    """Weighted position + geodesic-angle distance on SE(3).

    w_pos has units 1/meter, w_rot 1/radian. Defaults chosen so 5 cm of
    translation weighs like ~14 degrees of rotation.
    """

    w_pos: float = 1.0
    w_rot: float = 0.2

    def __post_init__(self):
        if self.w_pos < 0 or self.w_rot < 0:
            raise ValueError("metric weights must be nonnegative")
        if self.w_pos == 0 and self.w_rot == 0:
            raise ValueError("metric weights cannot both be zero")


DEFAULT_METRIC = SE3Metric()


def se3_distance(a, b, metric=DEFAULT_METRIC):
    """metric.w_pos * |pa - pb| + metric.w_rot * geodesic_angle(qa, qb)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dp = np.linalg.norm(a[..., :3] - b[..., :3], axis=-1)
    da = geodesic_angle(a[..., 3:], b[..., 3:])
    return metric.w_pos * dp + metric.w_rot * da


@dataclass(frozen=True)
class SE3Kernel:
    """Separable Gaussian kernel on SE(3): per-axis in position, geodesic in angle."""

    sigma_pos: tuple = (0.01, 0.01, 0.01)
    sigma_rot: float = 0.15

    def __post_init__(self):
        sp = np.asarray(self.sigma_pos, dtype=float)
        if sp.shape != (3,):
            raise ValueError("sigma_pos must have 3 components")
        if np.any(sp <= 0) or self.sigma_rot <= 0:
            raise ValueError("kernel bandwidths must be positive")
        object.__setattr__(self, "sigma_pos", tuple(float(s) for s in sp))

    @property
    def normalizer(self):
        sp = np.asarray(self.sigma_pos)
        return float(1.0 / ((2.0 * np.pi) ** 2 * sp.prod() * self.sigma_rot))


def kernel_eval(y, center, kernel):
    """Kernel density contribution of `center` evaluated at pose `y`.

    Product of three 1D position Gaussians (world-frame per-axis error)
    and one 1D Gaussian in the geodesic angle. Peaks at y == center with
    value kernel.normalizer; strictly positive everywhere.
    """
    y = np.asarray(y, dtype=float)
    center = np.asarray(center, dtype=float)
    sp = np.asarray(kernel.sigma_pos)
    dp = (y[..., :3] - center[..., :3]) / sp
    da = geodesic_angle(y[..., 3:], center[..., 3:]) / kernel.sigma_rot
    expo = -0.5 * (np.sum(dp * dp, axis=-1) + da * da)
    return kernel.normalizer * np.exp(expo)
