"""Expected tactile observations: per-finger contact probability as a
function of clearance and surface-normal opposition.

phi(finger, object) = eta * exp(-lambda * d)  when d <= d_max and the
fingertip's inward normal opposes the nearest surface normal, else 0.
The per-hypothesis expected observation aggregates phi over fingers
(product by default; sum and max are ablation alternatives).
"""

from dataclasses import dataclass

import numpy as np

from . import contact, kinematics, se3


@dataclass(frozen=True)
class TactileParams:
    eta: float = 1.0            # normalizer; 1 keeps phi a probability
    lam: float = 40.0           # decay rate, 1/m
    d_max: float = 0.05         # sensing range, m
    aggregation: str = "product"
    n_nearest: int = 8

    def __post_init__(self):
        if self.eta <= 0 or self.lam <= 0 or self.d_max <= 0:
            raise ValueError("eta, lambda, d_max must be positive")
        if self.aggregation not in ("product", "sum", "max"):
            raise ValueError("aggregation must be product, sum or max")


def finger_phis(robot, link_poses, cloud, params=TactileParams()):
    """phi for every finger; link_poses may be (L, 7) or batched (B, L, 7).

    d is the distal-link clearance (d_obs); the normal gate compares the
    fingertip's world inward normal against the normal of the cloud
    point nearest the fingertip.
    """
    link_poses = np.asarray(link_poses, dtype=float)
    squeeze = link_poses.ndim == 2
    poses = link_poses[None] if squeeze else link_poses
    _, d_obs = contact.clearance_batch(
        robot, poses, cloud, link_ids=robot.fingertip_links,
        n_nearest=params.n_nearest, d_max=params.d_max,
    )
    tips, tip_normals = kinematics.fingertip_frames(robot, poses)
    flat_tips = tips[..., :3].reshape(-1, 3)
    _, idx = cloud.tree.query(flat_tips, k=1)
    surf_normals = cloud.normals[np.atleast_1d(idx)].reshape(tip_normals.shape)
    opposed = np.einsum("...i,...i->...", tip_normals, surf_normals) < 0.0
    phis = np.where(
        (d_obs <= params.d_max) & opposed,
        params.eta * np.exp(-params.lam * np.minimum(d_obs, params.d_max)),
        0.0,
    )
    return phis[0] if squeeze else phis


def phi(robot, q, finger_index, hyp_cloud, params=TactileParams()):
    """Contact probability of one finger against the object at a hypothesis."""
    link_poses = kinematics.fk(robot, q)
    return float(finger_phis(robot, link_poses, hyp_cloud, params)[finger_index])


def aggregate(phis, params):
    if params.aggregation == "product":
        return np.prod(phis, axis=-1)
    if params.aggregation == "sum":
        return np.sum(phis, axis=-1) / phis.shape[-1]
    return np.max(phis, axis=-1)


def expected_observation(robot, q, hyp_cloud, params=TactileParams(), link_poses=None):
    """Aggregated expected contact signal g(x, p) for one hypothesis cloud."""
    if link_poses is None:
        link_poses = kinematics.fk(robot, q)
    return aggregate(finger_phis(robot, link_poses, hyp_cloud, params), params)


def expected_observations_at_poses(robot, link_poses, model_cloud, object_poses,
                                   params=TactileParams()):
    """g(x, p_i) for many object poses at once, against one base model cloud.

    Since clearance geometry is rigid-invariant, the hand is moved into
    each hypothesis' model frame instead of transforming the cloud:
    one KD-tree serves every hypothesis.
    """
    object_poses = np.atleast_2d(np.asarray(object_poses, dtype=float))
    inv = se3.inverse(object_poses)  # (H, 7)
    rel = se3.compose(inv[:, None, :], link_poses)  # (H, L, 7)
    phis = finger_phis(robot, rel, model_cloud, params)
    return aggregate(phis, params)


def contact_likelihood(robot, q, contacted_fingers, hyp_cloud, params=TactileParams(),
                       hand_level=False):
    """Likelihood of the recorded contact set under one hypothesis.

    prod_{j in contacted} phi_j * prod_{j not in contacted} (1 - phi_j).
    With hand_level=True (degraded attribution, or a contact on a
    non-finger hand link) the observation is just "something touched":
    1 - prod_j (1 - phi_j).
    """
    link_poses = kinematics.fk(robot, q)
    phis = finger_phis(robot, link_poses, hyp_cloud, params)
    return _likelihood_from_phis(phis, contacted_fingers, params, hand_level)


def contact_likelihoods_at_poses(robot, q, model_cloud, object_poses, contacted_fingers,
                                 params=TactileParams(), hand_level=False):
    """Per-particle contact likelihood, vectorized over object poses."""
    link_poses = kinematics.fk(robot, np.asarray(getattr(q, "q", q), dtype=float))
    object_poses = np.atleast_2d(np.asarray(object_poses, dtype=float))
    inv = se3.inverse(object_poses)
    rel = se3.compose(inv[:, None, :], link_poses)
    phis = finger_phis(robot, rel, model_cloud, params)
    return _likelihood_from_phis(phis, contacted_fingers, params, hand_level)


def _likelihood_from_phis(phis, contacted_fingers, params, hand_level):
    phis = np.clip(phis / params.eta, 0.0, 1.0)  # probabilities even if eta != 1
    if hand_level:
        return 1.0 - np.prod(1.0 - phis, axis=-1)
    n_f = phis.shape[-1]
    contacted = np.zeros(n_f, dtype=bool)
    for j in contacted_fingers:
        contacted[j] = True
    terms = np.where(contacted, phis, 1.0 - phis)
    return np.prod(terms, axis=-1)
