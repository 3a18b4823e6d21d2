"""Non-parametric belief over object pose: weighted particles + SE(3) KDE.

Supports density queries, MLE extraction, hypothesis subsampling for
planning, Bayesian contact updates with low-variance resampling, and
the KL-divergence diagnostic between pre- and post-contact beliefs.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import se3
from .se3 import SE3Kernel

DEFAULT_JITTER_POS = 0.005           # meters, per axis
DEFAULT_JITTER_ROT = np.deg2rad(2.0)  # geodesic radians
KL_EPS = 1e-12


@dataclass(frozen=True)
class BeliefState:
    """Immutable weighted particle set with a KDE kernel."""

    poses: np.ndarray     # (K, 7)
    weights: np.ndarray   # (K,), nonnegative, sum to 1
    kernel: SE3Kernel = field(default_factory=SE3Kernel)
    degenerate: bool = False

    def __post_init__(self):
        poses = np.atleast_2d(np.asarray(self.poses, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if len(poses) < 1 or len(w) != len(poses):
            raise ValueError("need K >= 1 particles with matching weights")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise ValueError("weights sum to zero")
        w = w / total
        poses = poses.copy()
        poses.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.poses)

    @classmethod
    def from_scored_poses(cls, scored, kernel=SE3Kernel()):
        poses = np.stack([s.pose for s in scored])
        w = np.array([s.score for s in scored], dtype=float)
        if w.sum() <= 0:
            w = np.ones(len(scored))
        return cls(poses, w, kernel)


def density(b, y):
    """KDE value of the belief at pose(s) y: sum_j w_j K(y | y_j, sigma)."""
    y = np.asarray(y, dtype=float)
    vals = se3.kernel_eval(y[..., None, :], b.poses, b.kernel)
    return vals @ b.weights


def mle(b):
    """Particle location maximizing the KDE (argmax over particle support).

    Ties break toward the lowest particle index; invariant to uniform
    weight rescaling.
    """
    vals = density(b, b.poses)
    return b.poses[int(np.argmax(vals))].copy()


def subsample_hypotheses(b, k, rng_seed=0):
    """Hypothesis poses for planning: index 0 is the MLE, the rest are
    weighted draws (with replacement) from the particle set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(b) and len(b) > 1:
        raise ValueError("cannot subsample %d hypotheses from %d particles" % (k, len(b)))
    rng = np.random.default_rng(rng_seed)
    out = np.empty((k, 7))
    out[0] = mle(b)
    if k > 1:
        idx = rng.choice(len(b), size=k - 1, p=b.weights)
        out[1:] = b.poses[idx]
    return out


def _systematic_resample(weights, n_out, rng):
    positions = (rng.random() + np.arange(n_out)) / n_out
    return np.searchsorted(np.cumsum(weights), positions).clip(0, len(weights) - 1)


def _jitter(poses, rng, sigma_pos, sigma_rot):
    n = len(poses)
    out = poses.copy()
    out[:, :3] += rng.normal(scale=sigma_pos, size=(n, 3))
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    angles = rng.normal(scale=sigma_rot, size=n)
    dq = se3.quat_from_axis_angle(axes, angles)
    out[:, 3:] = se3.quat_normalize(se3.quat_mul(dq, poses[:, 3:]))
    return out


def resample(b, n_out, rng_seed=0, sigma_pos=DEFAULT_JITTER_POS, sigma_rot=DEFAULT_JITTER_ROT,
             degenerate=False):
    """Low-variance resample to n_out uniformly weighted, jittered particles."""
    rng = np.random.default_rng(rng_seed)
    idx = _systematic_resample(b.weights, n_out, rng)
    poses = _jitter(b.poses[idx], rng, sigma_pos, sigma_rot)
    return BeliefState(poses, np.full(n_out, 1.0 / n_out), b.kernel, degenerate=degenerate)


def update(b, likelihoods, n_out=None, rng_seed=0, sigma_pos=DEFAULT_JITTER_POS,
           sigma_rot=DEFAULT_JITTER_ROT):
    """Bayes update w_j <- lik_j * w_j followed by resampling with jitter.

    All-zero likelihoods reset the weights to uniform over the prior
    particles and raise the `degenerate` flag on the result (none of
    the hypotheses explains the observation).
    """
    lik = np.asarray(likelihoods, dtype=float)
    if lik.shape != (len(b),):
        raise ValueError("need one likelihood per particle")
    if np.any(lik < 0) or not np.all(np.isfinite(lik)):
        raise ValueError("likelihoods must be finite and nonnegative")
    if n_out is None:
        n_out = len(b)
    w = lik * b.weights
    degenerate = w.sum() <= 0.0
    if degenerate:
        w = np.full(len(b), 1.0 / len(b))
    posterior = BeliefState(b.poses, w, b.kernel)
    return resample(posterior, n_out, rng_seed, sigma_pos, sigma_rot, degenerate=degenerate)


def kl_divergence(post, pre, hyps, detail=False):
    """KL(post || pre) over the hypothesis-restricted, normalized densities.

    Both beliefs are evaluated at the same k hypothesis poses and the k
    values normalized to sum to one within each belief. Pre-density
    zeros under positive posterior mass are clamped to 1e-12 (flagged
    through the `detail` return and a RuntimeWarning).
    """
    hyps = np.atleast_2d(np.asarray(hyps, dtype=float))
    p_post = density(post, hyps)
    p_pre = density(pre, hyps)
    s_post = p_post.sum()
    s_pre = p_pre.sum()
    if s_post <= 0 or s_pre <= 0:
        raise ValueError("belief density vanished on every hypothesis")
    p_post = p_post / s_post
    p_pre = p_pre / s_pre
    clamped = bool(np.any((p_pre < KL_EPS) & (p_post > 0)))
    if clamped:
        warnings.warn("pre-contact density underflow at a hypothesis; clamped", RuntimeWarning)
    p_pre = np.maximum(p_pre, KL_EPS)
    mask = p_post > 0
    kl = float(np.sum(p_post[mask] * np.log(p_post[mask] / p_pre[mask])))
    kl = max(kl, 0.0)  # guard tiny negative round-off
    return (kl, clamped) if detail else kl


def to_csv_rows(b, t=0):
    """Rows `t, j, px, py, pz, qw, qx, qy, qz, w` for offline plotting."""
    rows = []
    for j, (pose, w) in enumerate(zip(b.poses, b.weights)):
        rows.append([t, j] + [float(x) for x in pose] + [float(w)])
    return rows


def save_csv(beliefs, path):
    """Write one or more belief snapshots (indexed by time) to CSV."""
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "j", "px", "py", "pz", "qw", "qx", "qy", "qz", "w"])
        for t, b in enumerate(beliefs):
            writer.writerows(to_csv_rows(b, t))
