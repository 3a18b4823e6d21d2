"""Synthetic benchmark objects sampled as oriented point clouds.

Every generator is deterministic for fixed parameters (internal seeded
RNG), uses meters, and places the model frame at the bottom center of
the object: xy centered on the vertical axis, z in [0, height].
"""

import numpy as np

from .cloud import PointCloudModel

KINDS = ("jug", "bottle", "stapler", "spray", "box", "lshape")


def make_object(kind, params=None):
    """Dispatch to a generator by name. Unknown kind raises ValueError."""
    params = dict(params or {})
    try:
        gen = _GENERATORS[kind]
    except KeyError:
        raise ValueError("unknown object kind %r (choose from %s)" % (kind, ", ".join(KINDS)))
    return gen(**params)


# ---------------------------------------------------------------------------
# surface patch samplers


def _sample_rect(rng, n, corner, u_vec, v_vec, normal):
    u = rng.random(n)[:, None]
    v = rng.random(n)[:, None]
    pts = np.asarray(corner) + u * np.asarray(u_vec) + v * np.asarray(v_vec)
    nrm = np.tile(np.asarray(normal, dtype=float), (n, 1))
    return pts, nrm


def _sample_disk(rng, n, center, z_sign, radius, r_inner=0.0):
    r = np.sqrt(rng.uniform(r_inner**2, radius**2, size=n))
    th = rng.uniform(0, 2 * np.pi, size=n)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th), np.zeros(n)]) + center
    nrm = np.tile([0.0, 0.0, float(z_sign)], (n, 1))
    return pts, nrm


def _sample_wall(rng, n, base_z, radius, height, sign=1.0):
    th = rng.uniform(0, 2 * np.pi, size=n)
    z = rng.uniform(base_z, base_z + height, size=n)
    c, s = np.cos(th), np.sin(th)
    pts = np.column_stack([radius * c, radius * s, z])
    nrm = np.column_stack([sign * c, sign * s, np.zeros(n)])
    return pts, nrm


def _sample_frustum(rng, n, base_z, r_bottom, r_top, height):
    # slanted wall of a cone frustum, outward normals
    t = rng.random(n)
    th = rng.uniform(0, 2 * np.pi, size=n)
    r = r_bottom + t * (r_top - r_bottom)
    z = base_z + t * height
    c, s = np.cos(th), np.sin(th)
    pts = np.column_stack([r * c, r * s, z])
    slope = (r_bottom - r_top) / height
    nrm = np.column_stack([c, s, np.full(n, slope)])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return pts, nrm


def _sample_torus_arc(rng, n, center, e1, e2, e3, ring_r, tube_r, phi0, phi1):
    """Arc of a torus: ring angle phi in the (e1, e2) plane, tube angle psi."""
    pts = np.empty((n, 3))
    nrm = np.empty((n, 3))
    filled = 0
    while filled < n:
        m = 2 * (n - filled) + 8
        phi = rng.uniform(phi0, phi1, size=m)
        psi = rng.uniform(0, 2 * np.pi, size=m)
        # area element weight ~ (R + r cos psi)
        keep = rng.random(m) < (ring_r + tube_r * np.cos(psi)) / (ring_r + tube_r)
        phi, psi = phi[keep][: n - filled], psi[keep][: n - filled]
        k = len(phi)
        ring_dir = np.outer(np.cos(phi), e1) + np.outer(np.sin(phi), e2)
        nrm_k = np.cos(psi)[:, None] * ring_dir + np.outer(np.sin(psi), e3)
        pts[filled : filled + k] = center + ring_r * ring_dir + tube_r * nrm_k
        nrm[filled : filled + k] = nrm_k
        filled += k
    return pts, nrm


def _box_faces(rng, half, pts_per_face, center=(0.0, 0.0, 0.0)):
    hx, hy, hz = half
    faces = [
        ((hx, -hy, -hz), (0, 2 * hy, 0), (0, 0, 2 * hz), (1, 0, 0)),
        ((-hx, -hy, -hz), (0, 2 * hy, 0), (0, 0, 2 * hz), (-1, 0, 0)),
        ((-hx, hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz), (0, 1, 0)),
        ((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 0, 2 * hz), (0, -1, 0)),
        ((-hx, -hy, hz), (2 * hx, 0, 0), (0, 2 * hy, 0), (0, 0, 1)),
        ((-hx, -hy, -hz), (2 * hx, 0, 0), (0, 2 * hy, 0), (0, 0, -1)),
    ]
    pts, nrm = [], []
    for corner, u, v, n in faces:
        p, m = _sample_rect(rng, pts_per_face, corner, u, v, n)
        pts.append(p)
        nrm.append(m)
    return np.vstack(pts) + center, np.vstack(nrm)


def _in_box(pts, center, half, margin=0.0):
    d = np.abs(pts - center) - (np.asarray(half) - margin)
    return np.all(d < 0, axis=1)


def _in_cylinder(pts, base_z, radius, height, margin=0.0):
    r = np.linalg.norm(pts[:, :2], axis=1)
    return (r < radius - margin) & (pts[:, 2] > base_z + margin) & (pts[:, 2] < base_z + height - margin)


# ---------------------------------------------------------------------------
# generators


def box(size=(0.10, 0.10, 0.10), pts_per_face=250, seed=0):
    """Axis-aligned box; exact pts_per_face on each of the 6 faces."""
    rng = np.random.default_rng(seed)
    half = np.asarray(size, dtype=float) / 2.0
    pts, nrm = _box_faces(rng, half, int(pts_per_face))
    pts[:, 2] += half[2]
    return PointCloudModel(pts, nrm)


def cylinder(radius=0.04, height=0.15, n_points=1200, seed=0):
    """Open tube (wall only), so every normal is exactly radial."""
    rng = np.random.default_rng(seed)
    pts, nrm = _sample_wall(rng, int(n_points), 0.0, radius, height)
    return PointCloudModel(pts, nrm)


def jug(body_radius=0.045, body_height=0.16, handle_ring=0.05, handle_tube=0.009,
        density=30000.0, seed=0):
    """Cylindrical body with a torus-arc handle in a vertical plane (non-convex)."""
    rng = np.random.default_rng(seed)
    wall_area = 2 * np.pi * body_radius * body_height
    disk_area = np.pi * body_radius**2
    parts = []
    parts.append(_sample_wall(rng, max(int(density * wall_area), 50), 0.0, body_radius, body_height))
    parts.append(_sample_disk(rng, max(int(density * disk_area), 30), (0, 0, 0), -1, body_radius))
    parts.append(_sample_disk(rng, max(int(density * disk_area), 30), (0, 0, body_height), 1, body_radius))
    # handle arcs outward in the +x half of the xz-plane
    handle_center = np.array([body_radius + 0.005, 0.0, 0.55 * body_height])
    arc = np.deg2rad(75.0)
    arc_area = 2 * arc * handle_ring * 2 * np.pi * handle_tube
    n_handle = max(int(density * arc_area), 120)
    hp, hn = _sample_torus_arc(
        rng, n_handle, handle_center,
        e1=np.array([1.0, 0, 0]), e2=np.array([0.0, 0, 1.0]), e3=np.array([0.0, -1.0, 0]),
        ring_r=handle_ring, tube_r=handle_tube, phi0=-arc, phi1=arc,
    )
    inside = _in_cylinder(hp, 0.0, body_radius, body_height)
    parts.append((hp[~inside], hn[~inside]))
    pts = np.vstack([p for p, _ in parts])
    nrm = np.vstack([n for _, n in parts])
    return PointCloudModel(pts, nrm)


def bottle(body_radius=0.032, body_height=0.13, neck_radius=0.014, neck_height=0.045,
           shoulder_height=0.045, density=30000.0, seed=0):
    """Body cylinder, cone shoulder, neck cylinder, capped top and bottom."""
    rng = np.random.default_rng(seed)
    parts = []
    area = 2 * np.pi * body_radius * body_height
    parts.append(_sample_wall(rng, max(int(density * area), 50), 0.0, body_radius, body_height))
    parts.append(_sample_disk(rng, max(int(density * np.pi * body_radius**2), 30), (0, 0, 0), -1, body_radius))
    slant = np.hypot(shoulder_height, body_radius - neck_radius)
    area = np.pi * (body_radius + neck_radius) * slant
    parts.append(_sample_frustum(rng, max(int(density * area), 40), body_height, body_radius, neck_radius, shoulder_height))
    area = 2 * np.pi * neck_radius * neck_height
    parts.append(_sample_wall(rng, max(int(density * area), 30), body_height + shoulder_height, neck_radius, neck_height))
    top = body_height + shoulder_height + neck_height
    parts.append(_sample_disk(rng, max(int(density * np.pi * neck_radius**2), 20), (0, 0, top), 1, neck_radius))
    pts = np.vstack([p for p, _ in parts])
    nrm = np.vstack([n for _, n in parts])
    return PointCloudModel(pts, nrm)


def stapler(base_size=(0.16, 0.045, 0.022), arm_size=(0.125, 0.04, 0.02),
            arm_back=0.03, density=30000.0, seed=0):
    """Two stacked boxes with a front step, like a closed stapler (non-convex)."""
    rng = np.random.default_rng(seed)
    base_half = np.asarray(base_size) / 2.0
    arm_half = np.asarray(arm_size) / 2.0
    base_center = np.array([0.0, 0.0, base_half[2]])
    arm_center = np.array([arm_back - base_half[0] + arm_half[0], 0.0, base_size[2] + arm_half[2]])
    ppf_base = max(int(density * 4 * base_half[0] * base_half[1]), 40)
    ppf_arm = max(int(density * 4 * arm_half[0] * arm_half[1]), 40)
    bp, bn = _box_faces(rng, base_half, ppf_base, base_center)
    ap, an = _box_faces(rng, arm_half, ppf_arm, arm_center)
    keep_b = ~_in_box(bp, arm_center, arm_half, margin=1e-9)
    keep_a = ~_in_box(ap, base_center, base_half, margin=1e-9)
    pts = np.vstack([bp[keep_b], ap[keep_a]])
    nrm = np.vstack([bn[keep_b], an[keep_a]])
    return PointCloudModel(pts, nrm)


def spray(body_radius=0.035, body_height=0.14, head_size=(0.075, 0.05, 0.05),
          head_forward=0.02, density=30000.0, seed=0):
    """Cylindrical body with a trigger-head box overhanging one side (non-convex)."""
    rng = np.random.default_rng(seed)
    parts = []
    area = 2 * np.pi * body_radius * body_height
    parts.append(_sample_wall(rng, max(int(density * area), 50), 0.0, body_radius, body_height))
    parts.append(_sample_disk(rng, max(int(density * np.pi * body_radius**2), 30), (0, 0, 0), -1, body_radius))
    parts.append(_sample_disk(rng, max(int(density * np.pi * body_radius**2), 30), (0, 0, body_height), 1, body_radius))
    head_half = np.asarray(head_size) / 2.0
    head_center = np.array([head_forward, 0.0, body_height + head_half[2]])
    ppf = max(int(density * 4 * head_half[0] * head_half[1]), 40)
    hp, hn = _box_faces(rng, head_half, ppf, head_center)
    keep = ~_in_cylinder(hp, 0.0, body_radius, body_height, margin=1e-9)
    parts.append((hp[keep], hn[keep]))
    pts = np.vstack([p for p, _ in parts])
    nrm = np.vstack([n for _, n in parts])
    # body points swallowed by the head box
    keep = ~_in_box(pts, head_center, head_half, margin=1e-9)
    return PointCloudModel(pts[keep], nrm[keep])


def lshape(size=0.12, arm_width=0.05, height=0.10, density=30000.0, seed=0):
    """L-cross-section prism, centered on the L's bounding square (non-convex)."""
    rng = np.random.default_rng(seed)
    s, w, h = float(size), float(arm_width), float(height)
    off = np.array([-s / 2.0, -s / 2.0, 0.0])
    # walls: corner, u (length), outward normal; all extruded along z
    walls = [
        ((0, 0, 0), (s, 0, 0), (0, -1, 0)),
        ((s, 0, 0), (0, w, 0), (1, 0, 0)),
        ((s, w, 0), (-(s - w), 0, 0), (0, 1, 0)),
        ((w, w, 0), (0, s - w, 0), (1, 0, 0)),
        ((w, s, 0), (-w, 0, 0), (0, 1, 0)),
        ((0, s, 0), (0, -s, 0), (-1, 0, 0)),
    ]
    pts, nrm = [], []
    for corner, u, n in walls:
        n_pts = max(int(density * np.linalg.norm(u) * h), 30)
        p, m = _sample_rect(rng, n_pts, np.asarray(corner, dtype=float) + off, u, (0, 0, h), n)
        pts.append(p)
        nrm.append(m)
    # top and bottom L faces by rejection inside the bounding square
    area = s * w + (s - w) * w
    n_face = max(int(density * area), 60)
    for z, sign in ((h, 1.0), (0.0, -1.0)):
        got = 0
        buf = []
        while got < n_face:
            cand = rng.uniform(0, s, size=(2 * n_face, 2))
            inside = (cand[:, 1] <= w) | (cand[:, 0] <= w)
            cand = cand[inside][: n_face - got]
            buf.append(cand)
            got += len(cand)
        xy = np.vstack(buf)
        p = np.column_stack([xy[:, 0], xy[:, 1], np.full(n_face, z)]) + off
        pts.append(p)
        nrm.append(np.tile([0.0, 0.0, sign], (n_face, 1)))
    return PointCloudModel(np.vstack(pts), np.vstack(nrm))


_GENERATORS = {
    "jug": jug,
    "bottle": bottle,
    "stapler": stapler,
    "spray": spray,
    "box": box,
    "lshape": lshape,
}
