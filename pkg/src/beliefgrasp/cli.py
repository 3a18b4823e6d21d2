"""Command-line harness.

Subcommands: make-object, estimate (pose fitting only), plan (one plan
to CSV), run (one episode), bench (full trial matrix), report (rebuild
CSV tables from a JSONL log). Exit code 0 on success, 2 on scenario
validation errors.
"""

import argparse
import json
import sys

import numpy as np

from . import belief as belief_mod
from . import bench, cloud as cloud_mod, objects, planner, registration, se3, simulation, tactile


def _add_override_flags(p):
    g = p.add_argument_group("parameter overrides")
    g.add_argument("--eta", type=float, help="tactile normalizer")
    g.add_argument("--lam", type=float, help="tactile decay rate (1/m)")
    g.add_argument("--d-max", type=float, help="tactile sensing range (m)")
    g.add_argument("--aggregation", choices=["product", "sum", "max"])
    g.add_argument("--alpha", type=float, help="edge-cost weight")
    g.add_argument("--beta", type=float, help="goal-cost weight")
    g.add_argument("--n-nodes", type=int, help="roadmap node budget")
    g.add_argument("--neighbor-radius", type=float, help="roadmap radius (rad)")
    g.add_argument("--collision-tol", type=float, help="planning collision tolerance (m)")


def _apply_overrides(scenario, args):
    tmap = {"eta": "eta", "lam": "lam", "d_max": "d_max", "aggregation": "aggregation"}
    pmap = {"alpha": "alpha", "beta": "beta", "n_nodes": "n_nodes",
            "neighbor_radius": "neighbor_radius", "collision_tol": "collision_tol"}
    for attr, key in tmap.items():
        v = getattr(args, attr, None)
        if v is not None:
            scenario.setdefault("tactile", {})[key] = v
    for attr, key in pmap.items():
        v = getattr(args, attr, None)
        if v is not None:
            scenario.setdefault("planner", {})[key] = v
    if getattr(args, "seed", None) is not None:
        scenario["master_seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        scenario["trials"] = args.trials
    if getattr(args, "views", None):
        scenario["views"] = args.views
    if getattr(args, "strategy", None):
        scenario["strategies"] = args.strategy
    return scenario


def _load_scenario_arg(args):
    raw = json.load(open(args.scenario)) if args.scenario else {}
    _apply_overrides(raw, args)
    return bench.load_scenario(raw)


def cmd_make_object(args):
    params = json.loads(args.params) if args.params else {}
    c = objects.make_object(args.kind, params)
    cloud_mod.save_cloud(c, args.out)
    print("wrote %d points to %s" % (len(c), args.out))
    return 0


def cmd_estimate(args):
    model = cloud_mod.load_cloud(args.model) if args.model.endswith((".ply", ".csv")) \
        else objects.make_object(args.model)
    query = cloud_mod.load_cloud(args.query)
    fits = registration.build_initial_belief(model, query, args.n_fits,
                                             args.n_features, args.seed)
    for i, f in enumerate(fits):
        pose = " ".join("%.6f" % v for v in f.pose)
        print("fit %d score %.4f pose %s" % (i, f.score, pose))
    return 0


def _trial_setup(scenario, args):
    """Shared setup for `plan` and `run`: object, robot, grasp, belief, gt."""
    views = scenario["views"][0]
    obj_spec = scenario["objects"][0]
    robot = bench.build_robot(scenario["robot"])
    model = bench.build_object(obj_spec)
    grasp = bench.build_grasp(robot, model, scenario["grasp"])
    strategy = args.strategy[0] if args.strategy else "IR3NE"
    trial = getattr(args, "trial", 0) or 0
    return obj_spec, robot, model, grasp, strategy, views, trial


def cmd_plan(args):
    scenario = _load_scenario_arg(args)
    obj_spec, robot, model, grasp, strategy, views, trial = _trial_setup(scenario, args)
    seed = bench.trial_seed(scenario["master_seed"], bench.object_name(obj_spec),
                            strategy, views, trial)
    streams = np.random.SeedSequence(seed).spawn(4)
    true_pose = bench.sample_true_pose(scenario, np.random.default_rng(streams[0]))
    mask = cloud_mod.ViewMask.random(views, np.random.default_rng(streams[1]),
                                     scenario["view_count"])
    query = cloud_mod.apply_view_mask(model.transformed(true_pose), mask, center=true_pose[:3])
    kernel = se3.SE3Kernel((scenario["kernel"]["sigma_pos"],) * 3,
                           np.deg2rad(scenario["kernel"]["sigma_rot_deg"]))
    b0, _ = bench.initial_belief_for(scenario, model, query,
                                     np.random.default_rng(streams[2]), kernel)
    b0 = belief_mod.resample(b0, scenario["tracking_particles"], np.random.default_rng(streams[3]))
    hyps = belief_mod.subsample_hypotheses(b0, scenario["hypotheses"], seed)
    q_start = scenario["q_start"]
    q_start = bench.default_start_config(robot) if q_start is None else np.asarray(q_start, float)
    goal = simulation.make_goal_model(robot, grasp, hyps, seed_config=q_start)
    closing = goal.goal_config.copy()
    closing[robot.hand_joint_mask] = grasp.closed_fingers
    weights = planner.PlannerWeights(**scenario["planner"])
    tparams = tactile.TactileParams(**scenario["tactile"])
    mle_pose = hyps[0]
    if strategy == "IR3NE":
        traj = planner.plan_ir3ne(robot, q_start, goal, model, hyps, weights, tparams,
                                  rng_seed=seed, closing_config=closing)
    else:
        traj = planner.plan_baseline(robot, q_start, goal, model, mle_pose, weights,
                                     rng_seed=seed, closing_config=closing)
    simulation.trajectory_to_csv(traj, args.out)
    print("wrote %d waypoints (approach ends at %d) to %s"
          % (len(traj.waypoints), traj.approach_end, args.out))
    return 0


def cmd_run(args):
    scenario = _load_scenario_arg(args)
    obj_spec, robot, model, grasp, strategy, views, trial = _trial_setup(scenario, args)
    rec = bench.run_trial(scenario, obj_spec, model, robot, grasp, strategy, views, trial)
    print(json.dumps(rec, sort_keys=True, indent=1))
    return 0


def cmd_bench(args):
    scenario = _load_scenario_arg(args)

    def progress(done, total):
        if args.progress:
            print("\r%d/%d trials" % (done, total), end="", file=sys.stderr)
            if done == total:
                print(file=sys.stderr)

    bench.run_bench(scenario, args.out_dir, workers=args.workers, progress=progress)
    print("bench complete; outputs in %s" % args.out_dir)
    return 0


def cmd_report(args):
    bench.report(args.log, args.out_dir)
    print("report tables written to %s" % args.out_dir)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="beliefgrasp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-object", help="generate a synthetic object cloud")
    p.add_argument("--kind", required=True, choices=objects.KINDS)
    p.add_argument("--params", help="generator parameters as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_object)

    p = sub.add_parser("estimate", help="registration fits only")
    p.add_argument("--model", required=True, help="PLY/CSV path or object kind")
    p.add_argument("--query", required=True, help="PLY/CSV path")
    p.add_argument("--n-fits", type=int, default=5)
    p.add_argument("--n-features", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_estimate)

    for name, fn, extra in (("plan", cmd_plan, True), ("run", cmd_run, True),
                            ("bench", cmd_bench, False)):
        p = sub.add_parser(name)
        p.add_argument("--scenario", help="scenario JSON path")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--strategy", action="append", choices=simulation.STRATEGIES)
        p.add_argument("--views", action="append", type=int)
        p.add_argument("--trials", type=int)
        _add_override_flags(p)
        if extra:
            p.add_argument("--trial", type=int, default=0, help="trial index within the cell")
        if name == "plan":
            p.add_argument("--out", required=True, help="trajectory CSV path")
        if name == "bench":
            p.add_argument("--out-dir", required=True)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--progress", action="store_true")
        p.set_defaults(func=fn)

    p = sub.add_parser("report", help="rebuild CSV tables from a JSONL log")
    p.add_argument("--log", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except bench.ScenarioError as e:
        print("scenario error: %s" % e, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
