"""Kinematic topology, pose containers and their JSON formats.

Skeleton file::

    {"name": "h36m17", "joints": ["pelvis", ...], "parents": [-1, 0, ...]}

Pose file::

    {"skeleton": "<name or hash>", "positions": [[x, y, z], ...]}

2D poses use ``[[u, v], ...]`` positions. Floats are written with
``repr`` precision so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DegenerateBone, IndexOutOfRange, ParseError, SchemaError, SkeletonMismatch
from .geometry import EPS_LEN

ROOT = -1


@dataclass(frozen=True)
class Skeleton:
    """Joint tree. Bone ``i`` connects ``parent[child]`` to the i-th non-root joint."""

    joint_names: tuple[str, ...]
    parent: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "joint_names", tuple(str(n) for n in self.joint_names))
        object.__setattr__(self, "parent", tuple(int(p) for p in self.parent))
        problems = topology_problems(self.joint_names, self.parent)
        if problems:
            raise SchemaError("; ".join(problems))

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    @property
    def num_bones(self) -> int:
        return len(self.joint_names) - 1

    @cached_property
    def root(self) -> int:
        return self.parent.index(ROOT)

    @cached_property
    def bones(self) -> tuple[tuple[int, int], ...]:
        """``(parent_joint, child_joint)`` pairs in non-root joint order."""
        return tuple((p, j) for j, p in enumerate(self.parent) if p != ROOT)

    @cached_property
    def bone_of_child(self) -> dict[int, int]:
        return {c: i for i, (_, c) in enumerate(self.bones)}

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.parent]
        for j, p in enumerate(self.parent):
            if p != ROOT:
                kids[p].append(j)
        return tuple(tuple(k) for k in kids)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        """Joints ordered so every parent precedes its children (breadth first)."""
        order = [self.root]
        for j in order:
            order.extend(self.children[j])
        return tuple(order)

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise IndexOutOfRange(f"no joint named {name!r}") from None

    def bone_index(self, child_name: str) -> int:
        """Index of the bone ending at joint ``child_name``."""
        j = self.joint_index(child_name)
        if j not in self.bone_of_child:
            raise IndexOutOfRange(f"joint {child_name!r} is the root and has no bone")
        return self.bone_of_child[j]

    def bone_name(self, i: int) -> str:
        p, c = self.bones[i]
        return f"{self.joint_names[p]}->{self.joint_names[c]}"

    def to_dict(self) -> dict:
        return {"name": self.name, "joints": list(self.joint_names), "parents": list(self.parent)}

    @cached_property
    def hash(self) -> str:
        """Content hash of the topology (names and parents, not the label)."""
        blob = json.dumps({"joints": list(self.joint_names), "parents": list(self.parent)})
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def same_topology(self, other: "Skeleton") -> bool:
        return self.joint_names == other.joint_names and self.parent == other.parent


def topology_problems(names, parents) -> list[str]:
    problems = []
    n = len(parents)
    if len(names) != n:
        problems.append(f"{len(names)} joint names but {n} parent entries")
        return problems
    if len(set(names)) != n:
        problems.append("joint names are not unique")
    roots = [j for j, p in enumerate(parents) if p == ROOT]
    if len(roots) != 1:
        problems.append(f"expected exactly one root, found {len(roots)}")
    bad = [j for j, p in enumerate(parents) if p != ROOT and not 0 <= p < n]
    if bad:
        problems.append(f"parent index out of range for joints {bad}")
    if problems:
        return problems
    for j in range(n):
        seen = set()
        k = j
        while k != ROOT:
            if k in seen:
                problems.append(f"cycle in parent array through joint {j}")
                return problems
            seen.add(k)
            k = parents[k]
    return problems


# Human3.6M 17-joint convention, pelvis root.
H36M_JOINTS = (
    "pelvis",
    "right_hip", "right_knee", "right_ankle",
    "left_hip", "left_knee", "left_ankle",
    "spine", "thorax", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
)  # fmt: skip
H36M_PARENTS = (-1, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15)

SMPL_JOINTS = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)  # fmt: skip
SMPL_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

H36M17 = Skeleton(H36M_JOINTS, H36M_PARENTS, name="h36m17")
SMPL24 = Skeleton(SMPL_JOINTS, SMPL_PARENTS, name="smpl24")
BUILTIN_SKELETONS = {s.name: s for s in (H36M17, SMPL24)}


def get_skeleton(name_or_path: str | Path) -> Skeleton:
    """Built-in skeleton by name, otherwise a skeleton JSON file."""
    if str(name_or_path) in BUILTIN_SKELETONS:
        return BUILTIN_SKELETONS[str(name_or_path)]
    return load_skeleton(name_or_path)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose3D:
    skeleton: Skeleton
    joints: np.ndarray = field(repr=False)

    def __post_init__(self):
        joints = _frozen(self.joints)
        k = self.skeleton.num_joints
        if joints.shape != (k, 3):
            raise SchemaError(f"pose has shape {joints.shape}, skeleton expects ({k}, 3)")
        object.__setattr__(self, "joints", joints)

    def bone_vectors(self) -> np.ndarray:
        """``(B, 3)`` parent-minus-child vectors."""
        p, c = np.array(self.skeleton.bones).T
        return self.joints[p] - self.joints[c]

    def with_joints(self, joints) -> "Pose3D":
        return Pose3D(self.skeleton, joints)


@dataclass(frozen=True, eq=False)
class Pose2D:
    skeleton: Skeleton
    joints: np.ndarray = field(repr=False)

    def __post_init__(self):
        joints = _frozen(self.joints)
        k = self.skeleton.num_joints
        if joints.shape != (k, 2):
            raise SchemaError(f"2D pose has shape {joints.shape}, skeleton expects ({k}, 2)")
        object.__setattr__(self, "joints", joints)


def bone_vector(pose: Pose3D, bone_index: int) -> np.ndarray:
    """Parent joint position minus child joint position for one bone."""
    bones = pose.skeleton.bones
    if not 0 <= bone_index < len(bones):
        raise IndexOutOfRange(f"bone index {bone_index} not in [0, {len(bones)})")
    p, c = bones[bone_index]
    return pose.joints[p] - pose.joints[c]


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    joint: int | None = None
    bone: int | None = None


def validate(pose: Pose3D) -> list[Violation]:
    out = []
    finite = np.all(np.isfinite(pose.joints), axis=1)
    for j in np.flatnonzero(~finite):
        name = pose.skeleton.joint_names[j]
        out.append(Violation("finite", f"joint {j} ({name}) has a non-finite coordinate", joint=int(j)))
    for i, (p, c) in enumerate(pose.skeleton.bones):
        if not (finite[p] and finite[c]):
            continue
        length = np.linalg.norm(pose.joints[p] - pose.joints[c])
        if length <= EPS_LEN:
            out.append(
                Violation(
                    "bone_length",
                    f"bone {i} ({pose.skeleton.bone_name(i)}) has length {length:.3g} <= {EPS_LEN:g}",
                    bone=i,
                )
            )
    return out


def require_valid(pose: Pose3D, what: str = "pose") -> None:
    problems = validate(pose)
    if not problems:
        return
    msg = f"{what}: " + "; ".join(v.message for v in problems)
    if any(v.rule == "bone_length" for v in problems):
        raise DegenerateBone(msg)
    raise SchemaError(msg)


def require_same_skeleton(a: Skeleton, b: Skeleton) -> None:
    if a is not b and not a.same_topology(b):
        raise SkeletonMismatch(f"skeletons differ: {a.name or a.hash} vs {b.name or b.hash}")


# --- JSON I/O ----------------------------------------------------------------


def read_json(path: str | Path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8 ({e})") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _field(data, key: str, path, kind=None):
    if not isinstance(data, dict) or key not in data:
        raise ParseError(f"{path}: missing field {key!r}")
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"{path}: field {key!r} must be {kind.__name__}")
    return value


def skeleton_from_dict(data, source="<dict>") -> Skeleton:
    joints = _field(data, "joints", source, list)
    parents = _field(data, "parents", source, list)
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in parents):
        raise ParseError(f"{source}: field 'parents' must hold integers")
    try:
        return Skeleton(tuple(joints), tuple(parents), name=str(data.get("name", "")))
    except SchemaError as e:
        raise SchemaError(f"{source}: {e}") from None


def load_skeleton(path: str | Path) -> Skeleton:
    return skeleton_from_dict(read_json(path), path)


def save_skeleton(path: str | Path, skeleton: Skeleton) -> None:
    write_json(path, skeleton.to_dict())


def _positions(data, source, width: int) -> np.ndarray:
    rows = _field(data, "positions", source, list)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != width:
            raise ParseError(f"{source}: positions[{r}] must be a list of {width} numbers")
        for c, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ParseError(f"{source}: positions[{r}][{c}] is not a number")
    return np.array(rows, dtype=float).reshape(len(rows), width)


def _resolve_skeleton(tag, skeleton: Skeleton | None, source) -> Skeleton:
    if skeleton is None:
        if tag not in BUILTIN_SKELETONS:
            raise SchemaError(f"{source}: unknown skeleton {tag!r}; pass the skeleton explicitly")
        return BUILTIN_SKELETONS[tag]
    if tag not in (skeleton.name, skeleton.hash) and not (
        tag in BUILTIN_SKELETONS and BUILTIN_SKELETONS[tag].same_topology(skeleton)
    ):
        raise SkeletonMismatch(f"{source}: pose is tagged {tag!r}, expected {skeleton.name or skeleton.hash}")
    return skeleton


def pose_from_dict(data, skeleton: Skeleton | None = None, source="<dict>") -> Pose3D | Pose2D:
    tag = _field(data, "skeleton", source, str)
    skel = _resolve_skeleton(tag, skeleton, source)
    rows = _field(data, "positions", source, list)
    width = len(rows[0]) if rows and isinstance(rows[0], list) else 3
    if width not in (2, 3):
        raise ParseError(f"{source}: positions must be 2D or 3D, got width {width}")
    pos = _positions(data, source, width)
    if len(pos) != skel.num_joints:
        raise SchemaError(f"{source}: {len(pos)} positions for a {skel.num_joints}-joint skeleton")
    return Pose3D(skel, pos) if width == 3 else Pose2D(skel, pos)


def pose_to_dict(pose: Pose3D | Pose2D) -> dict:
    tag = pose.skeleton.name or pose.skeleton.hash
    return {"skeleton": tag, "positions": pose.joints.tolist()}


def load_pose(path: str | Path, skeleton: Skeleton | None = None) -> Pose3D | Pose2D:
    return pose_from_dict(read_json(path), skeleton, path)


def save_pose(path: str | Path, pose: Pose3D | Pose2D) -> None:
    write_json(path, pose_to_dict(pose))
