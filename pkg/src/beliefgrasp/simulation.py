"""Closed-loop episode simulation against a hidden ground-truth pose.

Executes planned trajectories, triggers simulated contacts from the
true object cloud, feeds them through the tactile likelihood into the
belief, re-derives the target grasp from the new MLE and re-plans,
until the grasp is achieved or the iteration budget runs out.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import belief as belief_mod
from . import contact, kinematics, planner, se3, tactile

STRATEGIES = ("PRM", "BSP", "IR3NE")


@dataclass
class GroundTruth:
    """Hidden true object pose; only the contact oracle may read it."""

    true_pose: np.ndarray
    model_cloud: object          # PointCloudModel in the model frame
    contact_eps: float = 0.003


@dataclass
class ContactEvent:
    step: int
    link_id: int
    link_name: str
    config: np.ndarray
    phase: str                  # "approach" | "closing"


@dataclass
class GraspSpec:
    """A supplied grasp: wrist pose relative to the object model frame
    plus pre-grasp and closed finger shapes."""

    wrist_pose: np.ndarray
    pregrasp_fingers: np.ndarray
    closed_fingers: np.ndarray
    required_fingers: tuple

    def goal_config_for(self, robot, object_pose, seed_config=None):
        """IK the wrist to the grasp pose rigidly transferred to object_pose."""
        target = se3.compose(object_pose, self.wrist_pose)
        res = kinematics.ik_goal(robot, target, finger_shape=self.pregrasp_fingers,
                                 seed_config=seed_config)
        return res


@dataclass
class EpisodeLimits:
    max_iterations: int = 10
    tracking_particles: int = 100
    hypotheses: int = 5


@dataclass
class TrialRecord:
    seed: int
    strategy: str
    iterations: int = 0
    success: bool = False
    first_attempt_success: bool = False
    kl_per_contact: list = field(default_factory=list)
    n_approach_contacts: int = 0
    n_closing_observations: int = 0
    degenerate_updates: int = 0
    planning_failures: int = 0
    final_error_pos: float = float("nan")
    final_error_yaw: float = float("nan")

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "strategy": self.strategy,
            "iterations": int(self.iterations),
            "success": bool(self.success),
            "first_attempt_success": bool(self.first_attempt_success),
            "kl_per_contact": [round(float(k), 12) for k in self.kl_per_contact],
            "n_approach_contacts": int(self.n_approach_contacts),
            "n_closing_observations": int(self.n_closing_observations),
            "degenerate_updates": int(self.degenerate_updates),
            "planning_failures": int(self.planning_failures),
            "final_error_pos": round(float(self.final_error_pos), 12),
            "final_error_yaw": round(float(self.final_error_yaw), 12),
        }


@dataclass
class ExecutionResult:
    status: str                     # "contact" | "completed"
    contact: ContactEvent | None
    executed: np.ndarray            # configs actually traversed (approach)
    achieved_fingers: tuple         # required fingers that latched in closing
    final_config: np.ndarray | None


def _finger_of_link(robot):
    """Map link index -> finger index (None for palm-like hand links)."""
    owner = {}
    for f, joints in enumerate(robot.fingers):
        jset = set(joints)
        for i, l in enumerate(robot.links):
            if l.joint_index in jset:
                owner[i] = f
    return owner


def _hand_clearances(robot, configs, gt):
    """Min d_obs over hand links against the true cloud, per config."""
    poses = kinematics.fk(robot, np.atleast_2d(configs))
    rel = se3.compose(se3.inverse(gt.true_pose), poses)
    _, d_obs = contact.clearance_batch(robot, rel, gt.model_cloud,
                                       link_ids=robot.hand_links,
                                       d_max=gt.contact_eps * 4)
    return d_obs


def step_execute(robot, traj, gt, edge_step=0.01):
    """Advance through the trajectory, stopping at the first unexpected
    approach contact; during closing, required fingers latch where they
    first touch the true cloud (compliant closing, no physics)."""
    approach = traj.approach
    dense = [approach[0][None]]
    for i in range(1, len(approach)):
        dense.append(planner.densify(robot, approach[i - 1], approach[i], edge_step))
    dense = np.vstack(dense)
    d_obs = _hand_clearances(robot, dense, gt)
    hits = np.flatnonzero(d_obs.min(axis=1) <= gt.contact_eps)
    # the very first pose is where the robot already stands; a contact
    # there would have been detected on the previous segment
    hits = hits[hits > 0]
    if len(hits):
        s = int(hits[0])
        link_local = int(np.argmin(d_obs[s]))
        link_id = robot.hand_links[link_local]
        ev = ContactEvent(s, link_id, robot.links[link_id].name, dense[s].copy(), "approach")
        return ExecutionResult("contact", ev, dense[: s + 1], (), None)

    closing = traj.waypoints[traj.approach_end:]
    achieved = {}
    q = closing[0].copy()
    finger_joint_lists = [robot.fingers[f] for f in range(len(robot.fingers))]
    for step in range(1, len(closing)):
        target = closing[step]
        q_next = q.copy()
        for f, joints in enumerate(finger_joint_lists):
            if f in achieved:
                continue  # latched fingers stay put
            q_next[joints] = target[joints]
        poses = kinematics.fk(robot, q_next)
        rel = se3.compose(se3.inverse(gt.true_pose), poses)
        _, d_obs = contact.clearance_batch(
            robot, rel[None], gt.model_cloud,
            link_ids=[robot.fingertip_links[f] for f in range(len(robot.fingers))],
            d_max=gt.contact_eps * 4)
        for f in range(len(robot.fingers)):
            if f not in achieved and d_obs[0, f] <= gt.contact_eps:
                achieved[f] = step
        q = q_next
    got = tuple(sorted(achieved))
    return ExecutionResult("completed", None, dense, got, q)


def make_goal_model(robot, grasp, hyp_poses, seed_config=None):
    """IK goals for every hypothesis (index 0 = MLE) -> GoalModel.

    Raises PlanningError when the MLE goal is unreachable; hypotheses
    whose IK fails are simply left out of the covariance.
    """
    res0 = grasp.goal_config_for(robot, hyp_poses[0], seed_config)
    if not res0.success:
        raise planner.PlanningError("IK failed for the MLE grasp pose")
    goals = [res0.q]
    for pose in hyp_poses[1:]:
        try:
            r = grasp.goal_config_for(robot, pose, seed_config=res0.q)
        except kinematics.UnreachableError:
            continue
        if r.success:
            goals.append(r.q)
    return planner.GoalModel.from_configs(robot, goals[0], np.stack(goals))


def _plan_for_strategy(robot, strategy, q_root, goal, model_cloud, hyp_poses,
                       weights, tparams, rng_seed, closing_config):
    if strategy == "IR3NE":
        return planner.plan_ir3ne(robot, q_root, goal, model_cloud, hyp_poses,
                                  weights, tparams, rng_seed=rng_seed,
                                  closing_config=closing_config)
    return planner.plan_baseline(robot, q_root, goal, model_cloud, hyp_poses[0],
                                 weights, rng_seed=rng_seed,
                                 closing_config=closing_config)


def _retreat(robot, history, model_cloud, mle_pose, tol):
    """Walk the executed history backwards to a config clear of the MLE."""
    for i in range(len(history) - 1, -1, -1):
        if not contact.configs_in_collision(robot, history[i][None], model_cloud,
                                            tol=tol, object_pose=mle_pose)[0]:
            return history[i].copy(), history[: i + 1]
    return history[0].copy(), history[:1]


def run_episode(robot, initial_belief, grasp, gt, strategy, limits=EpisodeLimits(),
                rng_seed=0, q_start=None, weights=planner.PlannerWeights(),
                tparams=tactile.TactileParams(), jitter_pos=belief_mod.DEFAULT_JITTER_POS,
                jitter_rot=belief_mod.DEFAULT_JITTER_ROT):
    """One closed-loop reach-to-grasp episode; returns a TrialRecord.

    PRM stops after its first attempt (open loop); BSP and IR3NE update
    the belief on every unexpected contact (and on missing contacts at
    the end of closing) and re-plan up to limits.max_iterations.
    """
    if strategy not in STRATEGIES:
        raise ValueError("unknown strategy %r" % strategy)
    record = TrialRecord(seed=rng_seed, strategy=strategy)
    seeds = np.random.SeedSequence(rng_seed).spawn(limits.max_iterations)
    q_current = np.zeros(robot.n_dof) if q_start is None else np.asarray(q_start, dtype=float).copy()
    bel = initial_belief
    history = [q_current.copy()]
    finger_owner = _finger_of_link(robot)

    for it in range(1, limits.max_iterations + 1):
        record.iterations = it
        it_seeds = seeds[it - 1].spawn(4)
        mle_pose = belief_mod.mle(bel)
        k = min(limits.hypotheses, max(2, len(bel))) if len(bel) > 1 else limits.hypotheses
        hyps = belief_mod.subsample_hypotheses(bel, k, np.random.default_rng(it_seeds[0]))
        hyps[0] = mle_pose

        # make sure the start of this attempt is clear of the current MLE cloud
        q_current, history = _retreat(robot, history, gt.model_cloud, mle_pose,
                                      tol=weights.collision_tol)

        try:
            goal = make_goal_model(robot, grasp, hyps, seed_config=q_current)
            closing_full = goal.goal_config.copy()
            closing_full[robot.hand_joint_mask] = grasp.closed_fingers
            traj = _plan_for_strategy(robot, strategy, q_current, goal, gt.model_cloud,
                                      hyps, weights, tparams,
                                      np.random.default_rng(it_seeds[1]), closing_full)
        except (planner.PlanningError, kinematics.UnreachableError):
            record.planning_failures += 1
            if strategy == "PRM":
                break
            continue

        result = step_execute(robot, traj, gt, edge_step=weights.edge_step)
        history.extend(list(result.executed[1:]))
        if result.status == "contact":
            q_current = result.executed[-1].copy()
            record.n_approach_contacts += 1
            f = finger_owner.get(result.contact.link_id)
            lik = tactile.contact_likelihoods_at_poses(
                robot, result.contact.config, gt.model_cloud, bel.poses,
                contacted_fingers=() if f is None else (f,),
                params=tparams, hand_level=f is None)
            post = belief_mod.update(bel, lik, limits.tracking_particles,
                                     np.random.default_rng(it_seeds[2]),
                                     sigma_pos=jitter_pos, sigma_rot=jitter_rot)
            record.kl_per_contact.append(belief_mod.kl_divergence(post, bel, hyps))
            record.degenerate_updates += int(post.degenerate)
            bel = post
            if strategy == "PRM":
                break
            continue

        # approach completed; closing happened inside step_execute
        q_current = result.final_config.copy()
        history.append(q_current.copy())
        required = set(grasp.required_fingers)
        achieved = required.intersection(result.achieved_fingers)
        if achieved == required:
            record.success = True
            record.first_attempt_success = it == 1
            err = se3.se3_distance(mle_pose, gt.true_pose, se3.SE3Metric(1.0, 0.0))
            record.final_error_pos = float(err)
            record.final_error_yaw = float(se3.geodesic_angle(mle_pose[3:], gt.true_pose[3:]))
            break

        # insufficient contacts at the end of closing: feed the absence
        # of the expected contacts to the belief as an observation
        record.n_closing_observations += 1
        lik = tactile.contact_likelihoods_at_poses(
            robot, result.final_config, gt.model_cloud, bel.poses,
            contacted_fingers=tuple(sorted(achieved)), params=tparams)
        post = belief_mod.update(bel, lik, limits.tracking_particles,
                                 np.random.default_rng(it_seeds[3]),
                                 sigma_pos=jitter_pos, sigma_rot=jitter_rot)
        record.kl_per_contact.append(belief_mod.kl_divergence(post, bel, hyps))
        record.degenerate_updates += int(post.degenerate)
        bel = post
        if strategy == "PRM":
            break

    if not record.success:
        mle_pose = belief_mod.mle(bel)
        record.final_error_pos = float(se3.se3_distance(mle_pose, gt.true_pose, se3.SE3Metric(1.0, 0.0)))
        record.final_error_yaw = float(se3.geodesic_angle(mle_pose[3:], gt.true_pose[3:]))
    return record


def trajectory_to_csv(traj, path):
    """Rows `step, q_0..q_{n-1}, phase`."""
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        n = traj.waypoints.shape[1]
        writer.writerow(["step"] + ["q_%d" % i for i in range(n)] + ["phase"])
        for i, q in enumerate(traj.waypoints):
            writer.writerow([i] + [repr(float(v)) for v in q] + [traj.phase_of(i)])
