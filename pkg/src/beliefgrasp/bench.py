"""Benchmark harness: scenario files, seeded trial matrices, aggregation.

A scenario JSON describes objects, the true-pose offset distribution,
view-coverage conditions, belief/tactile/planner parameters and the
trial matrix. Every trial's RNG stream is a pure function of
(master seed, object, strategy, views, trial index), so reruns are
byte-identical and trials can run in parallel in any order.
"""

import json
import multiprocessing
import os
import time
import zlib
from dataclasses import dataclass

import numpy as np

from . import belief as belief_mod
from . import cloud as cloud_mod
from . import kinematics, objects, planner, registration, se3, simulation, tactile


class ScenarioError(ValueError):
    pass


_DEFAULTS = {
    "version": 1,
    "objects": [{"kind": "jug", "params": {}}],
    "nominal_position": [0.55, 0.0, 0.0],
    "offset": {"pos_range": 0.04, "yaw_range_deg": 30.0, "flip_prob": 0.0},
    "views": [1],
    "view_count": 7,
    "n_fits": 5,
    "n_features": 1000,
    "tracking_particles": 100,
    "hypotheses": 5,
    "kernel": {"sigma_pos": 0.01, "sigma_rot_deg": 10.0},
    "jitter": {"sigma_pos": 0.005, "sigma_rot_deg": 2.0},
    "strategies": ["PRM", "BSP", "IR3NE"],
    "trials": 50,
    "master_seed": 0,
    "robot": "default",
    "q_start": None,
    "grasp": "default",
    "tactile": {},
    "planner": {},
    "limits": {"max_iterations": 10},
    "contact_eps": 0.003,
    "upright_prior": True,
}

_KNOWN_KEYS = set(_DEFAULTS) | {"object", "name"}


def load_scenario(path_or_dict):
    """Parse + validate a scenario; returns the normalized dict."""
    if isinstance(path_or_dict, (str, os.PathLike)):
        with open(path_or_dict) as f:
            raw = json.load(f)
    else:
        raw = dict(path_or_dict)
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ScenarioError("unknown scenario fields: %s" % ", ".join(sorted(unknown)))
    sc = json.loads(json.dumps(_DEFAULTS))  # deep copy
    for k, v in raw.items():
        if isinstance(v, dict) and isinstance(sc.get(k), dict):
            sc[k].update(v)
        else:
            sc[k] = v
    if "object" in raw:  # single-object shorthand
        sc["objects"] = [raw["object"]]
    if sc.get("version") != 1:
        raise ScenarioError("unsupported scenario version %r" % sc.get("version"))
    if not isinstance(sc["trials"], int) or sc["trials"] < 1:
        raise ScenarioError("trials must be a positive integer")
    vc = sc["view_count"]
    if not all(isinstance(v, int) and 1 <= v <= vc for v in sc["views"]):
        raise ScenarioError("views must be integers in [1, view_count]")
    for s in sc["strategies"]:
        if s not in simulation.STRATEGIES:
            raise ScenarioError("unknown strategy %r" % s)
    for ob in sc["objects"]:
        if "ply" not in ob and ob.get("kind") not in objects.KINDS:
            raise ScenarioError("object needs a valid 'kind' or a 'ply' path")
    if sc["n_fits"] < 1 or sc["n_features"] < 1:
        raise ScenarioError("n_fits and n_features must be >= 1")
    if sc["hypotheses"] < 2:
        raise ScenarioError("need at least 2 hypotheses for planning")
    try:
        planner.PlannerWeights(**sc["planner"])
        tactile.TactileParams(**sc["tactile"])
    except (TypeError, ValueError) as e:
        raise ScenarioError("bad planner/tactile parameters: %s" % e)
    return sc


def object_name(ob):
    return ob.get("name") or ob.get("kind") or os.path.basename(ob["ply"])


def build_object(ob):
    if "ply" in ob:
        return cloud_mod.load_cloud(ob["ply"])
    return objects.make_object(ob["kind"], ob.get("params"))


def default_start_config(robot):
    """Arm folded beside the workspace, hand open."""
    q = np.zeros(robot.n_dof)
    arm = robot.arm_joints
    q[arm[0]] = -0.9   # yawed away from the object
    q[arm[1]] = 0.5
    q[arm[2]] = 0.9
    q[arm[4]] = 0.6
    return q


def default_grasp(robot, obj_cloud, yaw=None):
    """Top-down caging grasp sized from the object's bounding box.

    Wrist x-axis points straight down over the object's vertical axis;
    pre-grasp fingers spread wide, closed fingers sweep inward until
    they latch on the surface. With yaw=None the cage is spun so the
    object's most protruding radial feature (handle, trigger, far
    corner) falls mid-gap between fingers.
    """
    n_hand = int(np.sum(robot.hand_joint_mask))
    n_joints_per_finger = [len(f) for f in robot.fingers]
    pregrasp = np.concatenate([[-0.2] + [-0.1] * (n - 1) for n in n_joints_per_finger])
    closed = np.concatenate([[0.55] + [0.6] * (n - 1) for n in n_joints_per_finger])
    if len(pregrasp) != n_hand:
        raise ValueError("finger joint layout mismatch")
    # fingertip ring relative to the wrist frame at pre-grasp
    q = np.zeros(robot.n_dof)
    q[robot.hand_joint_mask] = pregrasp
    poses = kinematics.fk(robot, q)
    tips, _ = kinematics.fingertip_frames(robot, poses)
    wrist = poses[robot.wrist_link]
    tips_in_wrist = se3.transform_points(se3.inverse(wrist), tips[:, :3])
    drop = float(np.mean(tips_in_wrist[:, 0]))  # along the wrist x-axis
    z_top = obj_cloud.aabb_max[2]
    height = z_top - obj_cloud.aabb_min[2]
    grasp_depth = min(0.06, 0.45 * height)
    # center the cage on the top slab, not the full AABB (handles and
    # trigger heads skew the box)
    slab = obj_cloud.points[:, 2] > z_top - max(0.02, 0.15 * height)
    center_xy = obj_cloud.points[slab, :2].mean(axis=0)
    wrist_z = (z_top - grasp_depth) + drop

    if yaw is None:
        rel = obj_cloud.points[:, :2] - center_xy
        far = int(np.argmax(np.linalg.norm(rel, axis=1)))
        feature_az = float(np.arctan2(rel[far, 1], rel[far, 0]))
        # tip azimuths in the wrist yz-plane (cage plane when pointing down)
        tip_az0 = np.arctan2(tips_in_wrist[:, 1], tips_in_wrist[:, 2])
        best, best_gap = 0.0, -1.0
        cands = np.linspace(-np.pi, np.pi, 73)[:-1]
        for cand in sorted(cands, key=abs):  # prefer small yaws (cage symmetry)
            gaps = np.abs(np.angle(np.exp(1j * (tip_az0 + cand - feature_az))))
            g = float(gaps.min())
            if g > best_gap + 1e-9:
                best_gap, best = g, float(cand)
        yaw = best
    orient = se3.quat_mul(se3.quat_from_axis_angle([0, 0, 1], yaw),
                          se3.quat_from_axis_angle([0, 1, 0], np.pi / 2))
    wrist_pose = se3.make_pose((center_xy[0], center_xy[1], wrist_z), orient)
    required = tuple(range(len(robot.fingers)))
    return simulation.GraspSpec(wrist_pose, pregrasp, closed, required)


def build_grasp(robot, obj_cloud, spec):
    if spec == "default" or spec is None:
        return default_grasp(robot, obj_cloud)
    return simulation.GraspSpec(
        wrist_pose=np.asarray(spec["wrist_pose"], dtype=float),
        pregrasp_fingers=np.asarray(spec["pregrasp_fingers"], dtype=float),
        closed_fingers=np.asarray(spec["closed_fingers"], dtype=float),
        required_fingers=tuple(spec["required_fingers"]),
    )


def build_robot(spec):
    if spec in (None, "default"):
        return kinematics.default_robot()
    if isinstance(spec, str) and not os.path.exists(spec):
        return kinematics.packaged_robot(spec)
    return kinematics.load_robot(spec)


def trial_seed(master_seed, obj_name, strategy, views, trial):
    """Pure function of the cell coordinates; feeds every RNG in the trial."""
    key = (zlib.crc32(obj_name.encode()), zlib.crc32(strategy.encode()), views, trial)
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])


def sample_true_pose(scenario, rng):
    off = scenario["offset"]
    nominal = np.asarray(scenario["nominal_position"], dtype=float)
    dxy = rng.uniform(-off["pos_range"], off["pos_range"], size=2)
    yaw = rng.uniform(-1, 1) * np.deg2rad(off["yaw_range_deg"])
    if off.get("flip_prob", 0.0) > 0 and rng.random() < off["flip_prob"]:
        yaw += np.pi
    pos = nominal + np.array([dxy[0], dxy[1], 0.0])
    return se3.make_pose(pos, se3.quat_from_axis_angle([0, 0, 1], yaw))


def initial_belief_for(scenario, model, query, rng, kernel):
    """Registration-based initial belief, uniform-box prior fallback.

    With upright_prior (tabletop assumption) fits that put the object's
    up-axis more than ~60 degrees from vertical are discarded: the
    object is known to rest on the table, so those registration modes
    are physically impossible here.
    """
    n_fits = scenario["n_fits"]
    try:
        fits = registration.build_initial_belief(model, query, n_fits,
                                                 scenario["n_features"], rng)
        if scenario.get("upright_prior", True):
            up = se3.quat_rotate(np.stack([f.pose for f in fits])[:, 3:], np.array([0.0, 0.0, 1.0]))
            fits = [f for f, u in zip(fits, up) if u[2] > 0.5]
        if fits:
            return belief_mod.BeliefState.from_scored_poses(fits, kernel), False
    except registration.RegistrationError:
        pass
    poses = np.stack([sample_true_pose(scenario, rng) for _ in range(max(n_fits, 5))])
    b = belief_mod.BeliefState(poses, np.ones(len(poses)), kernel)
    return b, True


def run_trial(scenario, obj_spec, model, robot, grasp, strategy, views, trial):
    """One seeded trial; returns the JSONL record dict."""
    name = object_name(obj_spec)
    seed = trial_seed(scenario["master_seed"], name, strategy, views, trial)
    streams = np.random.SeedSequence(seed).spawn(4)
    rng_pose = np.random.default_rng(streams[0])
    rng_mask = np.random.default_rng(streams[1])
    rng_fit = np.random.default_rng(streams[2])

    true_pose = sample_true_pose(scenario, rng_pose)
    true_cloud = model.transformed(true_pose)
    mask = cloud_mod.ViewMask.random(views, rng_mask, scenario["view_count"])
    query = cloud_mod.apply_view_mask(true_cloud, mask, center=true_pose[:3])
    coverage = len(query) / len(model)

    kernel = se3.SE3Kernel(
        sigma_pos=(scenario["kernel"]["sigma_pos"],) * 3,
        sigma_rot=np.deg2rad(scenario["kernel"]["sigma_rot_deg"]),
    )
    b0, prior_fallback = initial_belief_for(scenario, model, query, rng_fit, kernel)
    jp = scenario["jitter"]["sigma_pos"]
    jr = np.deg2rad(scenario["jitter"]["sigma_rot_deg"])
    b0 = belief_mod.resample(b0, scenario["tracking_particles"],
                             np.random.default_rng(streams[3]),
                             sigma_pos=jp, sigma_rot=jr)

    gt = simulation.GroundTruth(true_pose, model, scenario["contact_eps"])
    limits = simulation.EpisodeLimits(
        max_iterations=scenario["limits"]["max_iterations"],
        tracking_particles=scenario["tracking_particles"],
        hypotheses=scenario["hypotheses"],
    )
    weights = planner.PlannerWeights(**scenario["planner"])
    tparams = tactile.TactileParams(**scenario["tactile"])
    q_start = scenario["q_start"]
    q_start = default_start_config(robot) if q_start is None else np.asarray(q_start, dtype=float)

    record = simulation.run_episode(
        robot, b0, grasp, gt, strategy, limits, rng_seed=seed, q_start=q_start,
        weights=weights, tparams=tparams, jitter_pos=jp, jitter_rot=jr)
    d = record.to_dict()
    d.update({
        "object": name,
        "views": int(views),
        "coverage_pct": round(100.0 * coverage, 6),
        "prior_fallback": bool(prior_fallback),
        "trial": int(trial),
    })
    return d


# ---------------------------------------------------------------------------
# parallel execution

_WORKER_STATE = {}


def _worker_init(scenario):
    _WORKER_STATE["scenario"] = scenario
    _WORKER_STATE["robot"] = build_robot(scenario["robot"])
    _WORKER_STATE["objects"] = {}


def _worker_run(task):
    obj_idx, strategy, views, trial = task
    scenario = _WORKER_STATE["scenario"]
    robot = _WORKER_STATE["robot"]
    obj_spec = scenario["objects"][obj_idx]
    key = obj_idx
    if key not in _WORKER_STATE["objects"]:
        model = build_object(obj_spec)
        grasp = build_grasp(robot, model, scenario["grasp"])
        _WORKER_STATE["objects"][key] = (model, grasp)
    model, grasp = _WORKER_STATE["objects"][key]
    return run_trial(scenario, obj_spec, model, robot, grasp, strategy, views, trial)


def run_bench(scenario, out_dir, workers=1, progress=None):
    """Run the full (object x strategy x views x trial) matrix.

    Writes trials.jsonl (one canonical-order record per trial), the four
    report CSVs, and run_meta.json with timing. Returns the summary rows.
    """
    scenario = load_scenario(scenario)
    os.makedirs(out_dir, exist_ok=True)
    tasks = [
        (oi, strategy, views, trial)
        for oi in range(len(scenario["objects"]))
        for strategy in scenario["strategies"]
        for views in scenario["views"]
        for trial in range(scenario["trials"])
    ]
    t0 = time.time()
    if workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(workers, initializer=_worker_init, initargs=(scenario,)) as pool:
            records = []
            for i, rec in enumerate(pool.imap_unordered(_worker_run, tasks, chunksize=1)):
                records.append(rec)
                if progress:
                    progress(i + 1, len(tasks))
    else:
        _worker_init(scenario)
        records = []
        for i, task in enumerate(tasks):
            records.append(_worker_run(task))
            if progress:
                progress(i + 1, len(tasks))
    elapsed = time.time() - t0

    records.sort(key=lambda r: (r["object"], r["strategy"], r["views"], r["trial"]))
    log_path = os.path.join(out_dir, "trials.jsonl")
    with open(log_path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")
    summary = aggregate(records)
    write_report(summary, out_dir)
    with open(os.path.join(out_dir, "run_meta.json"), "w") as f:
        json.dump({"wall_time_s": elapsed, "n_trials": len(records),
                   "workers": workers}, f, indent=1)
    return summary


# ---------------------------------------------------------------------------
# aggregation / report

METRICS = ("iterations", "kl", "success", "first_attempt")


def aggregate(records):
    """Per (object, strategy, views) cell -> mean/std/n for each metric."""
    cells = {}
    for r in records:
        cells.setdefault((r["object"], r["strategy"], r["views"]), []).append(r)
    rows = {m: [] for m in METRICS}
    for (obj, strat, views), recs in sorted(cells.items()):
        coverage = float(np.mean([r["coverage_pct"] for r in recs]))
        series = {
            "iterations": np.array([r["iterations"] for r in recs], dtype=float),
            "success": np.array([r["success"] for r in recs], dtype=float),
            "first_attempt": np.array([r["first_attempt_success"] for r in recs], dtype=float),
            "kl": np.array([k for r in recs for k in r["kl_per_contact"]], dtype=float),
        }
        for m in METRICS:
            v = series[m]
            rows[m].append({
                "object": obj, "strategy": strat, "views": views,
                "coverage_pct": round(coverage, 3),
                "mean": float(v.mean()) if len(v) else float("nan"),
                "std": float(v.std()) if len(v) else float("nan"),
                "n": int(len(v)),
            })
    return rows


def write_report(summary, out_dir):
    import csv

    for metric, rows in summary.items():
        path = os.path.join(out_dir, "%s.csv" % metric)
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["object", "strategy", "coverage_pct", "mean", "std", "n"])
            for r in rows:
                w.writerow([r["object"], r["strategy"], r["coverage_pct"],
                            "%.6f" % r["mean"], "%.6f" % r["std"], r["n"]])


def report(jsonl_path, out_dir):
    """Rebuild the CSV tables from an existing trials.jsonl."""
    records = []
    with open(jsonl_path) as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise ValueError("empty trial log: %s" % jsonl_path)
    os.makedirs(out_dir, exist_ok=True)
    summary = aggregate(records)
    write_report(summary, out_dir)
    return summary
