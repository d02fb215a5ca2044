"""Toy skinned body and seeded corruptions standing in for a real mesh regressor.

The body is a capsule of vertex rings around every bone plus one vertex
placed exactly on each joint, so a selector projector recovers the pose
from a posed mesh. Posing uses linear blend skinning where each bone's
transform is the minimal rotation between rest and posed bone directions,
about the posed parent, with a scale along the bone axis when its length
changes (a pure rigid motion when it does not).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .camera import PoseProjector
from .geometry import perpendicular_axis, random_rotation, rodrigues, rotation_between
from .mesh import Mesh
from .skeleton import H36M17, Pose3D, Skeleton, require_same_skeleton, require_valid

BODY_MODEL = "synth-capsule"

# mm, y up, x to the body's left; integer coordinates keep rest-pose arithmetic exact
H36M_REST_MM = np.array(
    [
        [0, 1000, 0],
        [-130, 1000, 0], [-130, 560, 0], [-130, 120, 0],
        [130, 1000, 0], [130, 560, 0], [130, 120, 0],
        [0, 1230, 0], [0, 1480, 0], [0, 1580, 0], [0, 1720, 0],
        [170, 1460, 0], [450, 1460, 0], [700, 1460, 0],
        [-170, 1460, 0], [-450, 1460, 0], [-700, 1460, 0],
    ],
    dtype=float,
)  # fmt: skip


@dataclass(frozen=True, eq=False)
class SynthBody:
    rest_mesh: Mesh
    rest_pose: Pose3D
    skin_weights: np.ndarray = field(repr=False)  # (N, B), rows sum to 1
    joint_vertices: tuple[int, ...]  # vertex placed on each joint
    rotation_limits: np.ndarray = field(repr=False)  # (K,) radians, per-joint local rotation

    @property
    def skeleton(self) -> Skeleton:
        return self.rest_pose.skeleton

    @property
    def num_vertices(self) -> int:
        return self.rest_mesh.num_vertices

    def projector(self) -> PoseProjector:
        return PoseProjector.selector(self.joint_vertices, self.num_vertices)


def _allocate(total: int, lengths: np.ndarray) -> np.ndarray:
    """Split ``total`` vertices across bones: one each, the rest by length (largest remainder)."""
    counts = np.ones(len(lengths), dtype=int)
    extra = total - len(lengths)
    share = extra * lengths / lengths.sum()
    counts += np.floor(share).astype(int)
    rem = total - counts.sum()
    order = np.argsort(-(share - np.floor(share)), kind="stable")
    counts[order[:rem]] += 1
    return counts


def build_body(
    num_vertices: int = 600,
    skeleton: Skeleton = H36M17,
    rest_positions=None,
    *,
    ring_size: int = 8,
    radius_fraction: float = 0.2,
    radius_range: tuple[float, float] = (30.0, 80.0),
    blend_zone: float = 0.3,
    rotation_limit: float = 0.5,
    root_rotation_limit: float = 0.25,
) -> SynthBody:
    """Capsule body with ``num_vertices`` vertices over ``skeleton``.

    Ring vertices in the first ``blend_zone`` of a bone blend linearly with
    the parent bone, reaching an even split at the parent joint.
    """
    if rest_positions is None:
        if not skeleton.same_topology(H36M17):
            raise ValueError("rest_positions are required for skeletons other than h36m17")
        rest_positions = H36M_REST_MM
    rest = Pose3D(skeleton, rest_positions)
    require_valid(rest, "rest pose")
    k, b = skeleton.num_joints, skeleton.num_bones
    if num_vertices < k + b:
        raise ValueError(f"need at least {k + b} vertices for {k} joints and {b} bones")

    lengths = np.linalg.norm(rest.bone_vectors(), axis=1)
    counts = _allocate(num_vertices - k, lengths)
    verts = [rest.joints[j] for j in range(k)]
    weights = np.zeros((num_vertices, b))
    for j in range(k):
        bone = skeleton.bone_of_child.get(j)
        if bone is None:
            bone = skeleton.bone_of_child[skeleton.children[j][0]]
        weights[j, bone] = 1.0

    faces = []
    row = k
    for i, (p, c) in enumerate(skeleton.bones):
        start, end = rest.joints[p], rest.joints[c]
        axis = (end - start) / lengths[i]
        e1 = perpendicular_axis(axis)
        e2 = np.cross(axis, e1)
        radius = float(np.clip(radius_fraction * lengths[i], *radius_range))
        parent_bone = skeleton.bone_of_child.get(p)
        n_rings = -(-counts[i] // ring_size)
        for m in range(counts[i]):
            q, slot = divmod(m, ring_size)
            lam = (q + 0.5) / n_rings
            theta = 2 * np.pi * slot / ring_size + q * np.pi / ring_size
            verts.append(start + lam * (end - start) + radius * (np.cos(theta) * e1 + np.sin(theta) * e2))
            share = 0.0
            if parent_bone is not None and lam < blend_zone:
                share = 0.5 * (1.0 - lam / blend_zone)
            weights[row + m, i] = 1.0 - share
            if share:
                weights[row + m, parent_bone] = share
        full_rings = counts[i] // ring_size
        for q in range(full_rings - 1):
            for slot in range(ring_size):
                a = row + q * ring_size + slot
                a2 = row + q * ring_size + (slot + 1) % ring_size
                faces.append([a, a2, a2 + ring_size])
                faces.append([a, a2 + ring_size, a + ring_size])
        row += counts[i]

    limits = np.full(k, rotation_limit)
    limits[skeleton.root] = root_rotation_limit
    mesh = Mesh(np.array(verts), np.array(faces, dtype=np.int64), BODY_MODEL)
    return SynthBody(mesh, rest, weights, tuple(range(k)), limits)


def sample_pose(body: SynthBody, seed: int) -> Pose3D:
    """Random local rotation at every joint, within its limit, chained down the tree."""
    sk = body.skeleton
    rng = np.random.default_rng(seed)
    local = [random_rotation(rng, body.rotation_limits[j]) for j in range(sk.num_joints)]
    rest = body.rest_pose.joints
    pos = rest.copy()
    glob = [None] * sk.num_joints
    glob[sk.root] = local[sk.root]
    for j in sk.topological_order:
        for c in sk.children[j]:
            pos[c] = pos[j] + glob[j] @ (rest[c] - rest[j])
            glob[c] = glob[j] @ local[c]
    return Pose3D(sk, pos)


def bone_deformations(body: SynthBody, pose: Pose3D):
    """Per-bone rotation ``(B, 3, 3)``, length ratio ``(B,)`` and rest unit axis ``(B, 3)``."""
    rest_vec = body.rest_pose.bone_vectors()
    pose_vec = pose.bone_vectors()
    rot = np.stack([rodrigues(rotation_between(a, b)) for a, b in zip(rest_vec, pose_vec)])
    rest_len = np.linalg.norm(rest_vec, axis=1)
    ratio = np.linalg.norm(pose_vec, axis=1) / rest_len
    return rot, ratio, rest_vec / rest_len[:, None]


def pose_to_mesh(body: SynthBody, pose: Pose3D) -> Mesh:
    """Skin the rest mesh into ``pose``. The rest pose returns the rest mesh bit-exactly."""
    require_same_skeleton(body.skeleton, pose.skeleton)
    require_valid(pose)
    rot, ratio, axis = bone_deformations(body, pose)
    p_idx = np.array([p for p, _ in body.skeleton.bones])
    p_rest = body.rest_pose.joints[p_idx]
    shift = pose.joints[p_idx] - p_rest
    x = body.rest_mesh.vertices
    rel = x[:, None, :] - p_rest[None]  # (N, B, 3)
    rot_minus_i = rot - np.eye(3)
    along = np.einsum("nbk,bk->nb", rel, axis)[:, :, None] * axis[None]  # (N, B, 3)
    disp = (
        shift[None]
        + np.einsum("bkl,nbl->nbk", rot_minus_i, rel)
        + (ratio - 1.0)[None, :, None] * np.einsum("bkl,nbl->nbk", rot, along)
    )
    return body.rest_mesh.with_vertices(x + np.einsum("nb,nbk->nk", body.skin_weights, disp))


@dataclass(frozen=True)
class Perturbation:
    """Simulated regressor error: bone scaling, bone rotation noise, joint jitter."""

    joint_noise_sigma: float = 0.0
    bone_scale_range: tuple[float, float] = (1.0, 1.0)
    rotation_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.bone_scale_range
        object.__setattr__(self, "bone_scale_range", (float(lo), float(hi)))
        if self.joint_noise_sigma < 0 or self.rotation_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")
        if not 0 < lo <= hi:
            raise ValueError("bone_scale_range must satisfy 0 < lo <= hi")

    def with_seed(self, seed: int) -> "Perturbation":
        return Perturbation(self.joint_noise_sigma, self.bone_scale_range, self.rotation_noise_sigma, int(seed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bone_scale_range"] = list(self.bone_scale_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Perturbation":
        return cls(
            float(d.get("joint_noise_sigma", 0.0)),
            tuple(d.get("bone_scale_range", (1.0, 1.0))),
            float(d.get("rotation_noise_sigma", 0.0)),
            int(d.get("seed", 0)),
        )


def _streams(p: Perturbation):
    scale, rot, noise = np.random.SeedSequence(p.seed).spawn(3)
    return np.random.default_rng(scale), np.random.default_rng(rot), np.random.default_rng(noise)


def scale_factors(p: Perturbation, num_bones: int) -> np.ndarray:
    """The per-bone length factors :func:`corrupt` applies for ``p``."""
    lo, hi = p.bone_scale_range
    return _streams(p)[0].uniform(lo, hi, size=num_bones)


def corrupt(pose: Pose3D, p: Perturbation) -> Pose3D:
    """Rescale and re-aim every bone, then jitter every joint.

    Bone changes propagate to descendants; joint jitter does not.
    """
    sk = pose.skeleton
    _, rot_rng, noise_rng = _streams(p)
    factors = scale_factors(p, sk.num_bones)
    rots = [rodrigues(rot_rng.normal(0.0, p.rotation_noise_sigma, size=3)) for _ in range(sk.num_bones)]
    src = pose.joints
    out = src.copy()
    for j in sk.topological_order:
        for c in sk.children[j]:
            i = sk.bone_of_child[c]
            v = src[c] - src[j]
            out[c] = src[c] + (out[j] - src[j]) + (factors[i] * (rots[i] @ v) - v)
    out = out + noise_rng.normal(0.0, p.joint_noise_sigma, size=out.shape)
    return Pose3D(sk, out)


def corrupt_mesh(body: SynthBody, gt_pose: Pose3D, p: Perturbation) -> tuple[Mesh, Pose3D]:
    """Simulated regressor output: a corrupted pose and the body mesh skinned to it."""
    bad = corrupt(gt_pose, p)
    return pose_to_mesh(body, bad), bad


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(x) for x in parts]).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class SynthSample:
    sample_id: str
    pose_seed: int
    perturb_seed: int
    gt_pose: Pose3D
    gt_mesh: Mesh
    src_pose: Pose3D
    src_mesh: Mesh


def make_samples(body: SynthBody, count: int, seed: int, perturbation: Perturbation, start: int = 0):
    """``count`` samples with ids ``start .. start+count-1``, each seeded from ``(seed, index)``."""
    out = []
    for idx in range(start, start + count):
        pose_seed = derive_seed(seed, idx, 0)
        perturb_seed = derive_seed(seed, idx, 1)
        gt = sample_pose(body, pose_seed)
        src_mesh, src = corrupt_mesh(body, gt, perturbation.with_seed(perturb_seed))
        out.append(SynthSample(f"{idx:06d}", pose_seed, perturb_seed, gt, pose_to_mesh(body, gt), src, src_mesh))
    return out
