"""Lazy-PRM + A* reach-to-grasp planning.

Three cost modes share one roadmap machinery:

  baseline  edge cost  alpha * d(x, x') + beta * d(x', goal)
  ir3ne     edge cost  alpha * J(x') * d(x, x') + beta * d_A(x', goal)

with d the joint-space distance over the arm, d_A the Mahalanobis
distance under the diagonal covariance of per-hypothesis goal
configurations, and J in (0, 1] the information reward that shrinks
edges whose expected tactile observations discriminate the pose
hypotheses from the MLE. The global roadmap plans arm joints only
(hand joints follow an interpolation schedule); a hierarchical
refinement stage re-plans all joints in a tube around the global path
and smooths with differential evolution.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import contact, kinematics, se3, tactile


class PlanningError(RuntimeError):
    pass


@dataclass(frozen=True)
class PlannerWeights:
    alpha: float = 0.5
    beta: float = 0.5
    n_nodes: int = 500
    neighbor_radius: float | None = None  # auto-tuned to ~target_degree
    target_degree: int = 10
    collision_tol: float = -0.008         # planning standoff vs the MLE cloud
    edge_step: float = 0.01               # workspace validation resolution, m
    goal_sigma: float = 0.25              # node sampling spread around goals, rad
    max_expansions: int = 20000

    def __post_init__(self):
        if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
            raise ValueError("alpha, beta must be in [0, 1]")
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be positive")


@dataclass
class GoalModel:
    """Goal configuration for the MLE plus per-hypothesis goals.

    arm_variances is the floored diagonal of the covariance A of the
    per-hypothesis goal arm configurations (planning happens in arm
    space; hand joints are pinned by the grasp, so A is arm-sized).
    """

    goal_config: np.ndarray
    hyp_configs: np.ndarray
    arm_variances: np.ndarray

    VAR_FLOOR = 1e-4

    @classmethod
    def from_configs(cls, robot, goal_config, hyp_configs):
        goal_config = np.asarray(goal_config, dtype=float)
        hyp_configs = np.atleast_2d(np.asarray(hyp_configs, dtype=float))
        arm = hyp_configs[:, robot.arm_joint_mask]
        var = arm.var(axis=0) if len(arm) > 1 else np.zeros(arm.shape[1])
        return cls(goal_config, hyp_configs, np.maximum(var, cls.VAR_FLOOR))


@dataclass
class Trajectory:
    """Waypoints over the full DoF; index approach_end is the pre-grasp."""

    waypoints: np.ndarray
    approach_end: int
    cost: float = 0.0

    @property
    def approach(self):
        return self.waypoints[: self.approach_end + 1]

    @property
    def closing(self):
        return self.waypoints[self.approach_end:]

    def phase_of(self, index):
        return "approach" if index <= self.approach_end else "closing"


def joint_levers(robot):
    """Conservative workspace lever per joint: distance swept per radian."""
    if not hasattr(robot, "_levers"):
        poses = kinematics.fk(robot, np.zeros(robot.n_dof))
        children = {i: [] for i in range(len(robot.links))}
        for i, l in enumerate(robot.links):
            if l.parent >= 0:
                children[l.parent].append(i)
        box_margin = max(
            (np.linalg.norm(l.box_half) for l in robot.links if l.box_half is not None),
            default=0.0,
        )
        levers = np.zeros(robot.n_dof)
        for i, l in enumerate(robot.links):
            if l.joint_index < 0:
                continue
            stack, reach = [i], 0.0
            while stack:
                k = stack.pop()
                reach = max(reach, np.linalg.norm(poses[k, :3] - poses[i, :3]))
                stack.extend(children[k])
            levers[l.joint_index] = reach + box_margin + 0.02
        robot._levers = levers
    return robot._levers


def workspace_bound(robot, q_a, q_b):
    """Upper bound on any hand-point motion between two configurations."""
    return float(np.abs(np.asarray(q_b) - np.asarray(q_a)) @ joint_levers(robot))


def densify(robot, q_a, q_b, step):
    """Interpolated configs from q_a to q_b at <= step workspace motion,
    excluding q_a itself."""
    n = max(1, int(np.ceil(workspace_bound(robot, q_a, q_b) / step)))
    s = np.arange(1, n + 1) / n
    return kinematics.interpolate(q_a, q_b, s)


def info_reward(robot, q_from, q_to, hyp_clouds, params=tactile.TactileParams()):
    """J(x, x') in (0, 1] from Eq-style expected-observation differences.

    hyp_clouds[0] is the MLE cloud; the expected observation along the
    edge is evaluated at the arrival state q_to.
    """
    if len(hyp_clouds) < 2:
        return 1.0
    link_poses = kinematics.fk(robot, q_to)
    g = np.array([
        tactile.expected_observation(robot, None, c, params, link_poses=link_poses)
        for c in hyp_clouds
    ])
    phi_terms = np.abs(g[1:] - g[0])
    return float(np.mean(np.exp(-phi_terms)))


class _CostModel:
    """Edge weights, heuristics and cached J values for one query."""

    def __init__(self, robot, mode, weights, goal_arm, goal_model, hyp_poses,
                 model_cloud, tparams, link_poses_of=None):
        self.robot = robot
        self.mode = mode
        self.w = weights
        self.goal_arm = goal_arm
        self.tparams = tparams
        self.link_poses_of = link_poses_of
        self.hyp_poses = hyp_poses
        self.model_cloud = model_cloud
        self._j_cache = {}
        if mode == "ir3ne":
            self.inv_std = 1.0 / np.sqrt(goal_model.arm_variances)
            n_f = len(robot.fingertip_links)
            g_max = tparams.eta ** n_f if tparams.aggregation == "product" else tparams.eta
            self.j_floor = float(np.exp(-g_max))
        else:
            self.inv_std = None
            self.j_floor = 1.0

    def j_value(self, node_idx, arm_q):
        if self.mode != "ir3ne" or len(self.hyp_poses) < 2:
            return 1.0
        j = self._j_cache.get(node_idx)
        if j is None:
            g = tactile.expected_observations_at_poses(
                self.robot, self.link_poses_of(node_idx), self.model_cloud,
                self.hyp_poses, self.tparams)
            j = float(np.mean(np.exp(-np.abs(g[1:] - g[0]))))
            self._j_cache[node_idx] = j
        return j

    def goal_term(self, arm_q):
        diff = arm_q - self.goal_arm
        if self.mode == "ir3ne":
            return float(np.linalg.norm(diff * self.inv_std))
        return float(np.linalg.norm(diff))

    def edge_cost(self, u_arm, v_arm, v_idx):
        d = float(np.linalg.norm(v_arm - u_arm))
        return self.w.alpha * self.j_value(v_idx, v_arm) * d + self.w.beta * self.goal_term(v_arm)

    def heuristic(self, arm_q):
        # alpha * J_floor * d(x, goal) lower-bounds every remaining path
        return self.w.alpha * self.j_floor * float(np.linalg.norm(arm_q - self.goal_arm))


def link_aabb_distances(robot, link_poses, lo, hi, link_ids=None):
    """Per-config lower bound on the distance from any link bound to the
    axis-aligned box [lo, hi] (0 where boxes overlap)."""
    link_poses = np.asarray(link_poses)
    if link_ids is None:
        link_ids = [i for i, l in enumerate(robot.links) if l.tri_vertices is not None]
    out = np.full(link_poses.shape[:-2], np.inf)
    for li in link_ids:
        link = robot.links[li]
        llo, lhi = link.tri_vertices.reshape(-1, 3).min(axis=0), link.tri_vertices.reshape(-1, 3).max(axis=0)
        corners = np.array([[x, y, z] for x in (llo[0], lhi[0])
                            for y in (llo[1], lhi[1]) for z in (llo[2], lhi[2])])
        w = se3.transform_points(link_poses[..., li, :], corners)
        wlo, whi = w.min(axis=-2), w.max(axis=-2)
        gap = np.maximum(0.0, np.maximum(lo - whi, wlo - hi))
        out = np.minimum(out, np.linalg.norm(gap, axis=-1))
    return out


def _astar(n_nodes, neighbors, node_arm, cost_model, edge_ok, root, goal, max_expansions):
    """A* with lazy edge validation; exact for the admissible heuristic used."""
    g_score = np.full(n_nodes, np.inf)
    parent = np.full(n_nodes, -1, dtype=int)
    g_score[root] = 0.0
    counter = 0
    frontier = [(cost_model.heuristic(node_arm[root]), counter, root)]
    closed = np.zeros(n_nodes, dtype=bool)
    expansions = 0
    while frontier:
        _, _, u = heapq.heappop(frontier)
        if closed[u]:
            continue
        closed[u] = True
        if u == goal:
            path = []
            k = u
            while k != -1:
                path.append(k)
                k = parent[k]
            return path[::-1], float(g_score[goal])
        expansions += 1
        if expansions > max_expansions:
            raise PlanningError("node budget exhausted before reaching the goal")
        for v in neighbors[u]:
            if closed[v] or not edge_ok(u, v):
                continue
            cand = g_score[u] + cost_model.edge_cost(node_arm[u], node_arm[v], v)
            if cand < g_score[v] - 1e-15:
                g_score[v] = cand
                parent[v] = u
                counter += 1
                heapq.heappush(frontier, (cand + cost_model.heuristic(node_arm[v]), counter, v))
    raise PlanningError("goal unreachable on the roadmap")


def _sample_nodes(robot, root_arm, goal_arm, hyp_goal_arms, n_nodes, sigma, rng):
    arm_mask = robot.arm_joint_mask
    lo, hi = robot.limits_lo[arm_mask], robot.limits_hi[arm_mask]
    n_bridge = int(0.4 * n_nodes)
    n_goal = int(0.25 * n_nodes)
    n_uni = n_nodes - n_bridge - n_goal
    parts = []
    u = rng.random(n_bridge)[:, None]
    parts.append(root_arm + u * (goal_arm - root_arm) + rng.normal(scale=sigma / 2, size=(n_bridge, len(lo))))
    anchors = np.vstack([goal_arm[None], hyp_goal_arms]) if len(hyp_goal_arms) else goal_arm[None]
    picks = rng.integers(0, len(anchors), size=n_goal)
    parts.append(anchors[picks] + rng.normal(scale=sigma, size=(n_goal, len(lo))))
    parts.append(rng.uniform(lo, hi, size=(n_uni, len(lo))))
    return np.clip(np.vstack(parts), lo, hi)


def plan(robot, q_root, goal, model_cloud, mle_pose, hyp_poses=None, weights=PlannerWeights(),
         tparams=tactile.TactileParams(), mode="baseline", rng_seed=0,
         closing_config=None, closing_steps=20):
    """Plan a reach-to-grasp trajectory on a lazy roadmap.

    q_root: full start configuration. goal: GoalModel. The object model
    cloud plus its MLE pose define the collision world; hyp_poses
    (index 0 = MLE) feed the information reward in ir3ne mode. Returns
    a Trajectory whose approach ends at the pre-grasp followed by the
    finger-closing segment.
    """
    rng = np.random.default_rng(rng_seed)
    q_root = np.asarray(getattr(q_root, "q", q_root), dtype=float)
    arm_mask = robot.arm_joint_mask
    hand_mask = robot.hand_joint_mask
    root_arm = q_root[arm_mask]
    goal_arm = goal.goal_config[arm_mask]
    hand_start = q_root[hand_mask]
    hand_goal = goal.goal_config[hand_mask]
    hyp_poses = np.atleast_2d(hyp_poses) if hyp_poses is not None else np.atleast_2d(mle_pose)

    span = np.linalg.norm(goal_arm - root_arm) + 1e-12

    def full_of_many(arm_qs):
        arm_qs = np.atleast_2d(arm_qs)
        s = np.clip(1.0 - np.linalg.norm(arm_qs - goal_arm, axis=1) / span, 0.0, 1.0)
        q = np.empty((len(arm_qs), robot.n_dof))
        q[:, arm_mask] = arm_qs
        q[:, hand_mask] = hand_start + s[:, None] * (hand_goal - hand_start)
        return q

    def full_of(arm_q):
        return full_of_many(arm_q[None])[0]

    inv_mle = se3.inverse(np.asarray(mle_pose, dtype=float))
    margin = max(0.0, -weights.collision_tol) + 1e-9

    def colliding_poses(link_poses):
        rel = se3.compose(inv_mle, link_poses)
        ds, _ = contact.clearance_batch(robot, rel, model_cloud, d_max=margin)
        ds = np.where(np.isfinite(ds), ds, -np.inf)
        return np.any(ds > weights.collision_tol, axis=1)

    def colliding(Q_full):
        return colliding_poses(kinematics.fk(robot, np.atleast_2d(Q_full)))

    if colliding(q_root[None])[0]:
        raise PlanningError("root configuration is in collision with the MLE cloud")
    if colliding(goal.goal_config[None])[0]:
        raise PlanningError("goal configuration is in collision with the MLE cloud")

    hyp_goal_arms = goal.hyp_configs[:, arm_mask] if len(goal.hyp_configs) else np.empty((0, root_arm.size))
    samples = _sample_nodes(robot, root_arm, goal_arm, hyp_goal_arms, weights.n_nodes, weights.goal_sigma, rng)
    sample_poses = kinematics.fk(robot, full_of_many(samples))
    keep = ~colliding_poses(sample_poses)
    node_arm = np.vstack([root_arm[None], goal_arm[None], samples[keep]])
    node_poses = np.concatenate([
        kinematics.fk(robot, np.stack([q_root, goal.goal_config])),
        sample_poses[keep],
    ])

    # distance lower bound from every node's links to the MLE cloud box:
    # lets most edges skip dense validation via the workspace lever bound
    cloud_corners = np.array([[x, y, z]
                              for x in (model_cloud.aabb_min[0], model_cloud.aabb_max[0])
                              for y in (model_cloud.aabb_min[1], model_cloud.aabb_max[1])
                              for z in (model_cloud.aabb_min[2], model_cloud.aabb_max[2])])
    wc = se3.transform_points(np.asarray(mle_pose, dtype=float), cloud_corners)
    clo, chi = wc.min(axis=0), wc.max(axis=0)
    node_clear = link_aabb_distances(robot, node_poses, clo, chi)

    radius = weights.neighbor_radius
    tree = cKDTree(node_arm)
    if radius is None:
        k = min(weights.target_degree + 1, len(node_arm))
        dists, _ = tree.query(node_arm, k=k)
        radius = float(np.median(dists[:, -1]))
    pairs = tree.query_pairs(radius, output_type="ndarray")
    neighbors = [[] for _ in range(len(node_arm))]
    for a, b in pairs:
        neighbors[a].append(int(b))
        neighbors[b].append(int(a))
    # keep root and goal connected even when the radius is tight
    for special in (0, 1):
        if len(neighbors[special]) < 3:
            _, near = tree.query(node_arm[special], k=min(weights.target_degree + 1, len(node_arm)))
            for v in np.atleast_1d(near):
                v = int(v)
                if v != special and v not in neighbors[special]:
                    neighbors[special].append(v)
                    neighbors[v].append(special)
    neighbors = [sorted(nb) for nb in neighbors]

    cost_model = _CostModel(robot, mode, weights, goal_arm, goal, hyp_poses,
                            model_cloud, tparams, link_poses_of=lambda i: node_poses[i])

    edge_cache = {}
    levers = joint_levers(robot)

    def edge_ok(u, v):
        key = (u, v) if u < v else (v, u)
        ok = edge_cache.get(key)
        if ok is None:
            qa, qb = full_of(node_arm[u]), full_of(node_arm[v])
            sweep = float(np.abs(qb - qa) @ levers)
            if min(node_clear[u], node_clear[v]) > sweep + margin:
                ok = True  # whole edge provably stays clear of the cloud box
            else:
                dense = densify(robot, qa, qb, weights.edge_step)
                ok = not bool(np.any(colliding(dense)))
            edge_cache[key] = ok
        return ok

    path_idx, cost = _astar(len(node_arm), neighbors, node_arm, cost_model, edge_ok,
                            root=0, goal=1, max_expansions=weights.max_expansions)
    waypoints = [full_of(node_arm[i]) for i in path_idx]
    approach_end = len(waypoints) - 1
    if closing_config is not None:
        closing_config = np.asarray(getattr(closing_config, "q", closing_config), dtype=float)
        pre = waypoints[-1]
        for s in np.arange(1, closing_steps + 1) / closing_steps:
            q = pre.copy()
            q[hand_mask] = pre[hand_mask] + s * (closing_config[hand_mask] - pre[hand_mask])
            waypoints.append(q)
    return Trajectory(np.vstack(waypoints), approach_end, cost)


def plan_baseline(robot, q_root, goal, model_cloud, mle_pose, weights=PlannerWeights(),
                  rng_seed=0, closing_config=None, closing_steps=20):
    """PRM/BSP cost: plain travel distance plus Euclidean goal distance."""
    return plan(robot, q_root, goal, model_cloud, mle_pose, None, weights,
                mode="baseline", rng_seed=rng_seed,
                closing_config=closing_config, closing_steps=closing_steps)


def plan_ir3ne(robot, q_root, goal, model_cloud, hyp_poses, weights=PlannerWeights(),
               tparams=tactile.TactileParams(), rng_seed=0, closing_config=None,
               closing_steps=20):
    """Information-reward cost: J-warped edges and Mahalanobis goal distance."""
    hyp_poses = np.atleast_2d(hyp_poses)
    return plan(robot, q_root, goal, model_cloud, hyp_poses[0], hyp_poses, weights,
                tparams, mode="ir3ne", rng_seed=rng_seed,
                closing_config=closing_config, closing_steps=closing_steps)


def path_objective(robot, waypoints, mode, weights, goal, model_cloud, mle_pose,
                   hyp_poses, tparams, smooth_weight=1.0):
    """Total mode cost of a waypoint path plus a curvature penalty."""
    arm = waypoints[:, robot.arm_joint_mask]
    goal_arm = goal.goal_config[robot.arm_joint_mask]
    cost = 0.0
    if mode == "ir3ne":
        inv_std = 1.0 / np.sqrt(goal.arm_variances)
    for i in range(1, len(waypoints)):
        d = float(np.linalg.norm(arm[i] - arm[i - 1]))
        if mode == "ir3ne":
            link_poses = kinematics.fk(robot, waypoints[i])
            g = tactile.expected_observations_at_poses(robot, link_poses, model_cloud, hyp_poses, tparams)
            j = float(np.mean(np.exp(-np.abs(g[1:] - g[0])))) if len(g) > 1 else 1.0
            cost += weights.alpha * j * d + weights.beta * float(np.linalg.norm((arm[i] - goal_arm) * inv_std))
        else:
            cost += weights.alpha * d + weights.beta * float(np.linalg.norm(arm[i] - goal_arm))
    if len(waypoints) > 2:
        second = waypoints[2:] - 2 * waypoints[1:-1] + waypoints[:-2]
        cost += smooth_weight * float(np.sum(second * second))
    return cost


def smoothness_penalty(waypoints):
    w = np.asarray(waypoints)
    if len(w) < 3:
        return 0.0
    second = w[2:] - 2 * w[1:-1] + w[:-2]
    return float(np.sum(second * second))


def refine_hierarchical(robot, traj, goal, model_cloud, mle_pose, hyp_poses=None,
                        weights=PlannerWeights(), tparams=tactile.TactileParams(),
                        mode="baseline", rng_seed=0, tube_radius=0.2, n_local=300,
                        de_pop=30, de_weight=0.7, de_crossover=0.9, de_generations=100,
                        smooth_weight=1.0):
    """Local full-DoF re-plan in a tube around the global path, then DE smoothing.

    The local roadmap samples every joint within tube_radius of each
    approach waypoint; the same cost mode re-searches it, and
    differential evolution polishes the survivor (hard-rejecting
    colliding candidates). Never returns a worse path than the input.
    """
    rng = np.random.default_rng(rng_seed)
    hyp_poses = np.atleast_2d(hyp_poses) if hyp_poses is not None else np.atleast_2d(mle_pose)
    approach = traj.approach.copy()
    closing = traj.waypoints[traj.approach_end + 1:]

    def objective(path):
        return path_objective(robot, path, mode, weights, goal, model_cloud, mle_pose,
                              hyp_poses, tparams, smooth_weight)

    def feasible(path):
        for i in range(1, len(path)):
            dense = densify(robot, path[i - 1], path[i], weights.edge_step)
            if np.any(contact.configs_in_collision(robot, dense, model_cloud,
                                                   tol=weights.collision_tol,
                                                   object_pose=mle_pose)):
                return False
        return True

    base_obj = objective(approach)
    best_path, best_obj = approach, base_obj

    if len(approach) >= 3:
        # ---- local tube roadmap over the full DoF
        layers = [np.array([approach[0]])]
        per_layer = max(4, n_local // max(1, len(approach) - 2))
        for wp in approach[1:-1]:
            noise = rng.uniform(-tube_radius, tube_radius, size=(per_layer, robot.n_dof))
            cands = np.clip(wp + noise, robot.limits_lo, robot.limits_hi)
            keep = ~contact.configs_in_collision(robot, cands, model_cloud,
                                                 tol=weights.collision_tol, object_pose=mle_pose)
            layers.append(np.vstack([wp[None], cands[keep]]))
        layers.append(np.array([approach[-1]]))

        nodes = np.vstack(layers)
        layer_of = np.concatenate([np.full(len(l), i) for i, l in enumerate(layers)])
        neighbors = [[] for _ in range(len(nodes))]
        for i in range(len(nodes)):
            nb = np.flatnonzero(layer_of == layer_of[i] + 1)
            neighbors[i] = [int(v) for v in nb]
            for v in nb:
                neighbors[v].append(i)
        neighbors = [sorted(set(nb)) for nb in neighbors]

        arm_nodes = nodes[:, robot.arm_joint_mask]
        full_map = {i: nodes[i] for i in range(len(nodes))}
        if mode == "ir3ne":
            n_f = len(robot.fingertip_links)
            g_max = tparams.eta ** n_f if tparams.aggregation == "product" else tparams.eta
            j_floor = float(np.exp(-g_max))
        else:
            j_floor = 1.0

        j_cache = {}

        def j_of(idx):
            if mode != "ir3ne" or len(hyp_poses) < 2:
                return 1.0
            j = j_cache.get(idx)
            if j is None:
                link_poses = kinematics.fk(robot, full_map[idx])
                g = tactile.expected_observations_at_poses(robot, link_poses, model_cloud,
                                                           hyp_poses, tparams)
                j = float(np.mean(np.exp(-np.abs(g[1:] - g[0])))) if len(g) > 1 else 1.0
                j_cache[idx] = j
            return j

        goal_arm = goal.goal_config[robot.arm_joint_mask]
        inv_std = 1.0 / np.sqrt(goal.arm_variances)

        class _LocalCost:
            @staticmethod
            def edge_cost(u_arm, v_arm, v_idx):
                d = float(np.linalg.norm(v_arm - u_arm))
                if mode == "ir3ne":
                    return weights.alpha * j_of(v_idx) * d + weights.beta * float(
                        np.linalg.norm((v_arm - goal_arm) * inv_std))
                return weights.alpha * d + weights.beta * float(np.linalg.norm(v_arm - goal_arm))

            @staticmethod
            def heuristic(arm_q):
                return weights.alpha * j_floor * float(np.linalg.norm(arm_q - goal_arm))

        edge_cache = {}

        def edge_ok(u, v):
            key = (u, v) if u < v else (v, u)
            ok = edge_cache.get(key)
            if ok is None:
                dense = densify(robot, nodes[u], nodes[v], weights.edge_step)
                ok = not bool(np.any(contact.configs_in_collision(
                    robot, dense, model_cloud, tol=weights.collision_tol, object_pose=mle_pose)))
                edge_cache[key] = ok
            return ok

        try:
            idx_path, _ = _astar(len(nodes), neighbors, arm_nodes, _LocalCost, edge_ok,
                                 root=0, goal=len(nodes) - 1,
                                 max_expansions=weights.max_expansions)
            local_path = nodes[idx_path]
            local_obj = objective(local_path)
            if local_obj < best_obj:
                best_path, best_obj = local_path, local_obj
        except PlanningError:
            pass

    # ---- differential evolution smoothing of the inner waypoints
    if len(best_path) >= 3 and de_generations > 0:
        fixed_first, fixed_last = best_path[0], best_path[-1]
        inner = best_path[1:-1]
        dim = inner.size

        def de_objective(flat):
            path = np.vstack([fixed_first[None], flat.reshape(inner.shape), fixed_last[None]])
            if not feasible(path):
                return np.inf
            return objective(path)

        pop = np.tile(inner.ravel(), (de_pop, 1))
        pop[1:] += rng.normal(scale=0.05, size=(de_pop - 1, dim))
        scores = np.array([de_objective(p) for p in pop])
        for _ in range(de_generations):
            for i in range(de_pop):
                a, b, c = rng.choice(de_pop, size=3, replace=False)
                mutant = pop[a] + de_weight * (pop[b] - pop[c])
                cross = rng.random(dim) < de_crossover
                cross[rng.integers(dim)] = True
                trial = np.where(cross, mutant, pop[i])
                s = de_objective(trial)
                if s < scores[i]:
                    pop[i], scores[i] = trial, s
        best_i = int(np.argmin(scores))
        if scores[best_i] < best_obj:
            best_path = np.vstack([fixed_first[None], pop[best_i].reshape(inner.shape), fixed_last[None]])
            best_obj = scores[best_i]

    if best_obj > base_obj:
        return traj
    waypoints = np.vstack([best_path, closing]) if len(closing) else best_path
    return Trajectory(waypoints, len(best_path) - 1, best_obj)
