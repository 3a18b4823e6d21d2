"""Belief-space reach-to-grasp planning under 6D object-pose uncertainty.

A numpy/scipy library covering: SE(3) pose algebra and kernels, oriented
point-cloud models, surflet-pair registration, a particle/KDE belief
engine, robot kinematics, point-cloud penetration-depth queries, a
tactile observation model, lazy-PRM reach planners (baseline, belief
re-planning, information-reward), a contact-simulation loop, and a
seeded benchmark harness.
"""

__version__ = "0.1.0"
