"""Sample-based surflet-pair registration.

Aligns a model cloud onto a query cloud by matching 4-tuple point-pair
features (distance + three angles), deriving one rigid transform per
matched pair, clustering the candidates, and scoring the best cluster
by inlier fraction. Repeated runs with different seeds build the
initial particle set over the object pose.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import se3


class RegistrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitParams:
    dist_tol: float = 0.005        # feature match: pair distance, meters
    angle_tol: float = np.deg2rad(10.0)
    cluster_pos: float = 0.02      # candidate clustering, meters
    cluster_rot: float = np.deg2rad(10.0)
    inlier_radius: float = 0.01    # scoring, meters
    max_clusters: int = 5
    score_points: int = 1000       # model subsample used for scoring


@dataclass(frozen=True)
class ScoredPose:
    pose: np.ndarray   # transform taking model points onto the query
    score: float       # inlier fraction in [0, 1]
    valid: bool = True


def extract_features(cloud, n_pairs, rng):
    """Surflet features of uniformly sampled distinct point pairs.

    Returns (features (n, 4), pair index array (n, 2)). Feature is
    (d, alpha, beta, gamma): pair distance, angle(n1, u), angle(n2, u),
    angle(n1, n2) with u the normalized p2 - p1.
    """
    npts = len(cloud)
    if npts < 2:
        raise RegistrationError("need at least 2 points to sample pairs")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    i = rng.integers(0, npts, size=n_pairs)
    j = rng.integers(0, npts - 1, size=n_pairs)
    j = np.where(j >= i, j + 1, j)  # distinct indices, uniform over pairs
    pairs = np.column_stack([i, j])
    feats = pair_features(cloud.points[i], cloud.normals[i], cloud.points[j], cloud.normals[j])
    # coincident positions make u undefined; resample those few lazily
    bad = feats[:, 0] < 1e-12
    while bad.any():
        k = int(bad.sum())
        i2 = rng.integers(0, npts, size=k)
        j2 = rng.integers(0, npts - 1, size=k)
        j2 = np.where(j2 >= i2, j2 + 1, j2)
        pairs[bad, 0], pairs[bad, 1] = i2, j2
        feats[bad] = pair_features(cloud.points[i2], cloud.normals[i2], cloud.points[j2], cloud.normals[j2])
        bad = feats[:, 0] < 1e-12
    return feats, pairs


def pair_features(p1, n1, p2, n2):
    v = np.asarray(p2) - np.asarray(p1)
    d = np.linalg.norm(v, axis=-1)
    safe = np.maximum(d, 1e-300)
    u = v / safe[..., None]
    dot = lambda a, b: np.clip(np.einsum("...i,...i->...", a, b), -1.0, 1.0)
    alpha = np.arccos(dot(n1, u))
    beta = np.arccos(dot(n2, u))
    gamma = np.arccos(dot(n1, n2))
    return np.stack([d, alpha, beta, gamma], axis=-1)


def _pair_frames(p1, n1, u):
    """Right-handed frames built from the pair direction and first normal.

    Returns (origins, rotation matrices (n, 3, 3)) and a validity mask
    (False where n1 is parallel to u and the frame is degenerate).
    """
    f1 = u
    proj = n1 - np.einsum("ni,ni->n", n1, u)[:, None] * u
    norm = np.linalg.norm(proj, axis=1)
    ok = norm > 1e-6
    f2 = np.zeros_like(proj)
    f2[ok] = proj[ok] / norm[ok, None]
    f3 = np.cross(f1, f2)
    rot = np.stack([f1, f2, f3], axis=-1)
    return p1, rot, ok


def _candidate_transforms(model, query, m_pairs, q_pairs):
    """One rigid transform per matched feature pair (query pair <- model pair)."""
    pm1 = model.points[m_pairs[:, 0]]
    nm1 = model.normals[m_pairs[:, 0]]
    pm2 = model.points[m_pairs[:, 1]]
    pq1 = query.points[q_pairs[:, 0]]
    nq1 = query.normals[q_pairs[:, 0]]
    pq2 = query.points[q_pairs[:, 1]]
    um = pm2 - pm1
    um /= np.linalg.norm(um, axis=1, keepdims=True)
    uq = pq2 - pq1
    uq /= np.linalg.norm(uq, axis=1, keepdims=True)
    _, rot_m, ok_m = _pair_frames(pm1, nm1, um)
    _, rot_q, ok_q = _pair_frames(pq1, nq1, uq)
    ok = ok_m & ok_q
    r = np.einsum("nij,nkj->nik", rot_q[ok], rot_m[ok])  # Rq @ Rm^T
    t = pq1[ok] - np.einsum("nij,nj->ni", r, pm1[ok])
    mat = np.zeros((len(t), 4, 4))
    mat[:, :3, :3] = r
    mat[:, :3, 3] = t
    mat[:, 3, 3] = 1.0
    return se3.matrix_to_pose(mat)


def _cluster_poses(poses, params):
    """Greedy clustering by SE(3) proximity; returns clusters as index arrays."""
    n = len(poses)
    dp = np.linalg.norm(poses[:, None, :3] - poses[None, :, :3], axis=-1)
    qd = np.abs(np.einsum("ni,mi->nm", poses[:, 3:], poses[:, 3:]))
    ang = 2.0 * np.arccos(np.clip(qd, -1.0, 1.0))
    near = (dp <= params.cluster_pos) & (ang <= params.cluster_rot)
    alive = np.ones(n, dtype=bool)
    clusters = []
    for _ in range(params.max_clusters):
        counts = (near & alive[None, :]).sum(axis=1)
        counts[~alive] = 0
        seed = int(np.argmax(counts))
        if counts[seed] == 0:
            break
        members = np.flatnonzero(near[seed] & alive)
        clusters.append(members)
        alive[members] = False
    return clusters


def _average_pose(poses):
    p = poses[:, :3].mean(axis=0)
    q = poses[:, 3:].copy()
    flip = q @ q[0] < 0
    q[flip] = -q[flip]
    return se3.make_pose(p, q.mean(axis=0))


def _inlier_score(model, query, pose, params):
    pts = model.points
    if len(pts) > params.score_points:
        step = len(pts) // params.score_points
        pts = pts[::step][: params.score_points]
    moved = se3.transform_points(pose, pts)
    d, _ = query.tree.query(moved, k=1, distance_upper_bound=params.inlier_radius)
    return float(np.isfinite(d).mean())


def fit_pose(model, query, n_features=1000, rng_seed=0, params=FitParams()):
    """Estimate the rigid transform aligning the model cloud onto the query.

    Samples surflet features from both clouds, matches query features to
    the nearest model feature in (d, alpha, beta, gamma) space, converts
    each match into a candidate transform, clusters candidates and
    returns the best cluster's averaged pose with its inlier score.
    """
    rng = np.random.default_rng(rng_seed)
    m_feats, m_pairs = extract_features(model, n_features, rng)
    q_feats, q_pairs = extract_features(query, n_features, rng)
    scale = np.array([params.dist_tol, params.angle_tol, params.angle_tol, params.angle_tol])
    tree = cKDTree(m_feats / scale)
    dist, idx = tree.query(q_feats / scale, k=1, distance_upper_bound=2.0)
    matched = np.isfinite(dist)
    # enforce the per-component tolerance box, not just the 4D ball
    if matched.any():
        diff = np.abs(m_feats[idx[matched] % len(m_feats)] - q_feats[matched])
        matched[np.flatnonzero(matched)[np.any(diff > scale, axis=1)]] = False
    if not matched.any():
        return ScoredPose(se3.identity(), 0.0, valid=False)
    cands = _candidate_transforms(model, query, m_pairs[idx[matched]], q_pairs[matched])
    if len(cands) == 0:
        return ScoredPose(se3.identity(), 0.0, valid=False)
    clusters = _cluster_poses(cands, params)
    best, best_score = None, -1.0
    for members in clusters:
        pose = _average_pose(cands[members])
        score = _inlier_score(model, query, pose, params)
        if score > best_score:
            best, best_score = pose, score
    return ScoredPose(best, best_score, valid=True)


def build_initial_belief(model, query, n_fits=5, n_features=1000, rng_seed=0, params=FitParams()):
    """N independent fits with distinct sub-seeds, as scored world poses.

    Each returned pose is fit.pose composed with the model's reference
    frame; scores act as unnormalized particle weights. Raises
    RegistrationError when every run comes back invalid.
    """
    if n_fits < 1:
        raise ValueError("n_fits must be >= 1")
    if isinstance(rng_seed, np.random.Generator):
        seeds = rng_seed.spawn(n_fits)
    else:
        seeds = np.random.SeedSequence(rng_seed).spawn(n_fits)
    out = []
    for s in seeds:
        fit = fit_pose(model, query, n_features, np.random.default_rng(s), params)
        if fit.valid:
            out.append(ScoredPose(se3.compose(fit.pose, model.frame), fit.score, True))
    if not out:
        raise RegistrationError("all registration runs failed to find feature matches")
    return out
