"""Kinematic tree (arm chain + multi-finger hand): FK, DLS inverse
kinematics, and joint-space interpolation.

Robots are described by a JSON document listing links with parent,
revolute axis + limits, fixed offset pose, an optional box bound, and
an optional fingertip frame with an inward-facing normal. Two models
ship with the package: a 12-DoF desk robot (6-DoF arm, 3 x 2-joint
fingers) and a 21-DoF variant (6-DoF arm, 5 x 3-joint fingers).
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import se3


class KinematicsError(RuntimeError):
    pass


class UnreachableError(KinematicsError):
    pass


@dataclass
class Link:
    name: str
    parent: int                 # index into RobotModel.links, -1 for root
    joint_type: str             # "revolute" | "fixed"
    axis: np.ndarray            # unit axis in link frame (revolute only)
    limits: tuple               # (lo, hi) radians
    offset: np.ndarray          # fixed pose relative to parent, applied before the joint
    joint_index: int            # index into the configuration vector, -1 if fixed
    tri_vertices: np.ndarray | None = None  # (T, 3, 3) box bound in link frame
    tri_normals: np.ndarray | None = None   # (T, 3) outward normals
    box_half: np.ndarray | None = None
    box_offset: np.ndarray | None = None
    tip_offset: np.ndarray | None = None    # fingertip frame in link frame
    tip_normal: np.ndarray | None = None    # inward normal in link frame
    is_hand: bool = False


@dataclass
class JointConfig:
    """Configuration vector clamped to the robot's joint limits."""

    q: np.ndarray
    clamped: bool = False

    @classmethod
    def clamp(cls, robot, q):
        q = np.asarray(q, dtype=float)
        lo, hi = robot.limits_lo, robot.limits_hi
        qc = np.clip(q, lo, hi)
        return cls(qc, clamped=bool(np.any(qc != q)))


def _as_q(q):
    return np.asarray(getattr(q, "q", q), dtype=float)


class RobotModel:
    """Parsed kinematic tree with per-link box bounds."""

    def __init__(self, spec):
        self.name = spec.get("name", "robot")
        names = [l["name"] for l in spec["links"]]
        if len(set(names)) != len(names):
            raise ValueError("duplicate link names")
        index = {n: i for i, n in enumerate(names)}
        self.links = []
        joint_count = 0
        for i, raw in enumerate(spec["links"]):
            parent = raw.get("parent")
            pidx = -1 if parent is None else index[parent]
            if pidx >= i:
                raise ValueError("links must be listed parent-first (%s)" % raw["name"])
            joint = raw.get("joint", {"type": "fixed"})
            jtype = joint.get("type", "fixed")
            if jtype == "revolute":
                axis = np.asarray(joint["axis"], dtype=float)
                axis = axis / np.linalg.norm(axis)
                lo, hi = joint.get("limits", (-np.pi, np.pi))
                if not hi > lo:
                    raise ValueError("empty joint limit interval on %s" % raw["name"])
                jidx = joint_count
                joint_count += 1
            elif jtype == "fixed":
                axis = np.zeros(3)
                lo = hi = 0.0
                jidx = -1
            else:
                raise ValueError("unsupported joint type %r" % jtype)
            offset = np.asarray(raw.get("offset_pose", se3.identity()), dtype=float)
            link = Link(raw["name"], pidx, jtype, axis, (float(lo), float(hi)), offset, jidx)
            mesh = raw.get("mesh_box")
            if mesh:
                half = np.asarray(mesh["half_extents"], dtype=float)
                boff = np.asarray(mesh.get("offset_pose", se3.identity()), dtype=float)
                v, n = box_mesh(half, boff, subdiv=int(mesh.get("subdiv", 2)))
                link.tri_vertices, link.tri_normals = v, n
                link.box_half, link.box_offset = half, boff
            tip = raw.get("fingertip")
            if tip:
                link.tip_offset = np.asarray(tip["offset_pose"], dtype=float)
                nrm = np.asarray(tip["inward_normal"], dtype=float)
                link.tip_normal = nrm / np.linalg.norm(nrm)
            link.is_hand = bool(raw.get("hand", tip is not None))
            self.links.append(link)

        self.n_dof = joint_count
        self.arm_joints = [self._joint_of(n) for n in spec["arm_joints"]]
        self.fingers = [[self._joint_of(n) for n in f] for f in spec.get("fingers", [])]
        self.wrist_link = index[spec["wrist_link"]]
        self.fingertip_links = [i for i, l in enumerate(self.links) if l.tip_offset is not None]
        self.hand_links = [i for i, l in enumerate(self.links) if l.is_hand]
        self.limits_lo = np.full(self.n_dof, -np.pi)
        self.limits_hi = np.full(self.n_dof, np.pi)
        for l in self.links:
            if l.joint_index >= 0:
                self.limits_lo[l.joint_index], self.limits_hi[l.joint_index] = l.limits
        hand_mask = np.zeros(self.n_dof, dtype=bool)
        for f in self.fingers:
            hand_mask[f] = True
        self.hand_joint_mask = hand_mask
        self.arm_joint_mask = ~hand_mask
        self.max_reach = self._estimate_reach()

    def _joint_of(self, name):
        for l in self.links:
            if l.name == name:
                if l.joint_index < 0:
                    raise ValueError("%s is not an actuated link" % name)
                return l.joint_index
        raise ValueError("unknown link %s" % name)

    def _estimate_reach(self):
        poses = fk(self, np.zeros(self.n_dof))
        base = poses[0, :3]
        r = max(np.linalg.norm(p[:3] - base) for p in poses)
        extra = max(
            (np.linalg.norm(l.box_half) for l in self.links if l.box_half is not None),
            default=0.0,
        )
        return float(r + extra + 0.05)

    def clamp(self, q):
        return JointConfig.clamp(self, q)


def box_mesh(half_extents, offset_pose=None, subdiv=2):
    """Triangulated box bound with outward normals.

    Each face is split into subdiv x subdiv cells (two triangles per
    cell); every triangle's first vertex is its corner nearest the link
    origin, which keeps the first-vertex plane-offset approximation
    used by the clearance query tight.
    """
    hx, hy, hz = np.asarray(half_extents, dtype=float)
    verts, norms = [], []
    faces = [
        (np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), hx, hy, hz),
        (np.array([-1.0, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), hx, hy, hz),
        (np.array([0, 1.0, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), hy, hx, hz),
        (np.array([0, -1.0, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), hy, hx, hz),
        (np.array([0, 0, 1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), hz, hx, hy),
        (np.array([0, 0, -1.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), hz, hx, hy),
    ]
    edges = np.linspace(-1.0, 1.0, subdiv + 1)
    for n, u, v, hn, hu, hv in faces:
        for iu in range(subdiv):
            for iv in range(subdiv):
                corners = [
                    n * hn + u * hu * edges[iu] + v * hv * edges[iv],
                    n * hn + u * hu * edges[iu + 1] + v * hv * edges[iv],
                    n * hn + u * hu * edges[iu + 1] + v * hv * edges[iv + 1],
                    n * hn + u * hu * edges[iu] + v * hv * edges[iv + 1],
                ]
                for tri in ((0, 1, 2), (0, 2, 3)):
                    verts.append(np.array([corners[t] for t in tri]))
                    norms.append(n)
    verts = np.array(verts)
    norms = np.array(norms, dtype=float)
    if offset_pose is not None:
        flat = se3.transform_points(offset_pose, verts.reshape(-1, 3))
        verts = flat.reshape(verts.shape)
        norms = se3.transform_directions(offset_pose, norms)
    # the first vertex stands in for the triangle's plane offset; pick the
    # corner nearest the LINK origin (after the offset pose) so near-face
    # offsets stay tight
    for i in range(len(verts)):
        first = int(np.argmin(np.linalg.norm(verts[i], axis=1)))
        verts[i] = np.roll(verts[i], -first, axis=0)
    return verts, norms


def fk(robot, q):
    """World pose of every link. q may be (n,) or a batch (B, n);
    returns (L, 7) or (B, L, 7) matching the input."""
    q = _as_q(q)
    batched = q.ndim == 2
    Q = np.atleast_2d(q)
    if Q.shape[-1] != robot.n_dof:
        raise KinematicsError("configuration has %d joints, robot has %d" % (Q.shape[-1], robot.n_dof))
    B = len(Q)
    out = np.empty((B, len(robot.links), 7))
    for i, link in enumerate(robot.links):
        base = out[:, link.parent] if link.parent >= 0 else np.tile(se3.identity(), (B, 1))
        pose = se3.compose(base, link.offset)
        if link.joint_index >= 0:
            rot = se3.quat_from_axis_angle(link.axis, Q[:, link.joint_index])
            zero = np.zeros((B, 3))
            pose = se3.compose(pose, np.concatenate([zero, rot], axis=-1))
        out[:, i] = pose
    return out if batched else out[0]


def fingertip_frames(robot, link_poses):
    """Fingertip poses and world inward normals from FK link poses.

    Accepts (L, 7) or batched (B, L, 7) link poses.
    """
    tips, normals = [], []
    for i in robot.fingertip_links:
        link = robot.links[i]
        tips.append(se3.compose(link_poses[..., i, :], link.tip_offset))
        normals.append(se3.quat_rotate(link_poses[..., i, 3:], link.tip_normal))
    return np.stack(tips, axis=-2), np.stack(normals, axis=-2)


def arm_jacobian(robot, q, link_poses=None):
    """Geometric Jacobian of the wrist frame w.r.t. the arm joints (6 x n_arm)."""
    q = _as_q(q)
    if link_poses is None:
        link_poses = fk(robot, q)
    pw = link_poses[robot.wrist_link, :3]
    arm_set = set(robot.arm_joints)
    cols = {}
    for i, link in enumerate(robot.links):
        if link.joint_index in arm_set:
            z = se3.quat_rotate(link_poses[i, 3:], link.axis)
            p = link_poses[i, :3]
            cols[link.joint_index] = np.concatenate([np.cross(z, pw - p), z])
    return np.stack([cols[j] for j in robot.arm_joints], axis=1)


def _pose_error(target, current):
    dp = target[:3] - current[:3]
    q_err = se3.quat_mul(target[3:], se3.quat_conj(current[3:]))
    if q_err[0] < 0:
        q_err = -q_err
    s = np.linalg.norm(q_err[1:])
    angle = 2.0 * np.arctan2(s, q_err[0])
    axis = q_err[1:] / s if s > 1e-12 else np.zeros(3)
    return np.concatenate([dp, axis * angle]), np.linalg.norm(dp), angle


@dataclass
class IKResult:
    q: np.ndarray
    success: bool
    iterations: int
    pos_error: float
    rot_error: float


def ik_goal(robot, target_wrist, finger_shape=None, seed_config=None,
            pos_tol=0.005, rot_tol=np.deg2rad(2.0), max_iters=150, damping=1e-3,
            step_limit=0.3):
    """Damped-least-squares IK moving only the arm joints.

    Places the wrist link at `target_wrist` within pos_tol / rot_tol;
    finger joints are pinned to `finger_shape`. Raises UnreachableError
    on a workspace violation or 50 consecutive diverging iterations;
    returns a flagged best-effort result if the iteration budget runs
    out without convergence.
    """
    target_wrist = np.asarray(target_wrist, dtype=float)
    base = fk(robot, np.zeros(robot.n_dof))[0, :3]
    if np.linalg.norm(target_wrist[:3] - base) > 1.5 * robot.max_reach:
        raise UnreachableError("target %.2f m from base exceeds reach" % np.linalg.norm(target_wrist[:3] - base))
    q = np.zeros(robot.n_dof) if seed_config is None else _as_q(seed_config).copy()
    if finger_shape is not None:
        q[robot.hand_joint_mask] = _as_q(finger_shape)
    arm = robot.arm_joints
    best_q, best_err = q.copy(), np.inf
    diverging = 0
    last_err = np.inf
    for it in range(max_iters):
        poses = fk(robot, q)
        e, ep, ea = _pose_error(target_wrist, poses[robot.wrist_link])
        err = ep + 0.1 * ea
        if ep <= pos_tol and ea <= rot_tol:
            return IKResult(q, True, it, ep, ea)
        if err < best_err:
            best_err, best_q = err, q.copy()
        diverging = diverging + 1 if err > last_err else 0
        if diverging >= 50:
            raise UnreachableError("IK diverged for 50 consecutive iterations")
        last_err = err
        J = arm_jacobian(robot, q, poses)
        JJt = J @ J.T + damping**2 * np.eye(6)
        dq = J.T @ np.linalg.solve(JJt, e)
        step = np.linalg.norm(dq)
        if step > step_limit:
            dq *= step_limit / step
        q[arm] += dq
        q = np.clip(q, robot.limits_lo, robot.limits_hi)
    poses = fk(robot, best_q)
    _, ep, ea = _pose_error(target_wrist, poses[robot.wrist_link])
    return IKResult(best_q, False, max_iters, ep, ea)


def interpolate(q_a, q_b, s):
    """Linear per-joint interpolation; s=0 gives q_a, s=1 gives q_b."""
    q_a = _as_q(q_a)
    q_b = _as_q(q_b)
    if q_a.shape != q_b.shape:
        raise KinematicsError("configuration dimension mismatch")
    s = np.asarray(s, dtype=float)
    return q_a + s[..., None] * (q_b - q_a) if s.ndim else q_a + s * (q_b - q_a)


def load_robot(path):
    with open(path) as f:
        return RobotModel(json.load(f))


def packaged_robot(name="robot_12dof"):
    """Load one of the robot models shipped with the package."""
    text = resources.files("beliefgrasp.data").joinpath(name + ".json").read_text()
    return RobotModel(json.loads(text))


def default_robot():
    return packaged_robot("robot_12dof")
