"""Per-bone non-rigid transforms between a source and a target pose.

For bone ``i`` with parent ``p`` and child ``c``::

    rotation    = rodrigues(rotation_between(src_p - src_c, tgt_p - tgt_c))
    translation = tgt_p - rotation @ src_p
    gap         = tgt_c - (rotation @ src_c + translation)

A point on the source bone maps to ``rotation @ x + translation + w * gap``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .geometry import rodrigues, rotation_between
from .skeleton import Pose3D, Skeleton, bone_vector, require_same_skeleton, require_valid


@dataclass(frozen=True, eq=False)
class BoneTransform:
    rotation: np.ndarray
    translation: np.ndarray
    gap: np.ndarray

    def apply(self, point, w: float) -> np.ndarray:
        return transform_point_on_bone(self, point, w)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "gap": self.gap.tolist(),
        }


@dataclass(frozen=True, eq=False)
class PoseTransform:
    skeleton: Skeleton
    bones: tuple[BoneTransform, ...]

    def __post_init__(self):
        if len(self.bones) != self.skeleton.num_bones:
            raise ValueError(f"{len(self.bones)} bone transforms for {self.skeleton.num_bones} bones")

    def __len__(self):
        return len(self.bones)

    def __getitem__(self, i) -> BoneTransform:
        return self.bones[i]

    @cached_property
    def rotations(self) -> np.ndarray:
        """``(B, 3, 3)``"""
        return np.stack([b.rotation for b in self.bones])

    @cached_property
    def translations(self) -> np.ndarray:
        """``(B, 3)``"""
        return np.stack([b.translation for b in self.bones])

    @cached_property
    def gaps(self) -> np.ndarray:
        """``(B, 3)``"""
        return np.stack([b.gap for b in self.bones])

    def to_dict(self) -> dict:
        sk = self.skeleton
        return {
            "skeleton": sk.name or sk.hash,
            "bones": [
                {
                    "index": i,
                    "name": sk.bone_name(i),
                    "parent": sk.bones[i][0],
                    "child": sk.bones[i][1],
                    **bt.to_dict(),
                }
                for i, bt in enumerate(self.bones)
            ],
        }


def _bone_transform(src: Pose3D, tgt: Pose3D, i: int) -> BoneTransform:
    p, c = src.skeleton.bones[i]
    rot = rodrigues(rotation_between(bone_vector(src, i), bone_vector(tgt, i)))
    trans = tgt.joints[p] - rot @ src.joints[p]
    gap = tgt.joints[c] - (rot @ src.joints[c] + trans)
    return BoneTransform(rot, trans, gap)


def _check_pair(src: Pose3D, tgt: Pose3D) -> None:
    require_same_skeleton(src.skeleton, tgt.skeleton)
    require_valid(src, "source pose")
    require_valid(tgt, "target pose")


def bone_transform(src: Pose3D, tgt: Pose3D, bone_index: int) -> BoneTransform:
    _check_pair(src, tgt)
    bone_vector(src, bone_index)  # range check
    return _bone_transform(src, tgt, bone_index)


def pose_transform(src: Pose3D, tgt: Pose3D) -> PoseTransform:
    _check_pair(src, tgt)
    return PoseTransform(
        src.skeleton,
        tuple(_bone_transform(src, tgt, i) for i in range(src.skeleton.num_bones)),
    )


def transform_point_on_bone(bt: BoneTransform, point, w: float) -> np.ndarray:
    return bt.rotation @ np.asarray(point, dtype=float) + bt.translation + w * bt.gap


def identity_transform(skeleton: Skeleton) -> PoseTransform:
    zero = np.zeros(3)
    return PoseTransform(skeleton, tuple(BoneTransform(np.eye(3), zero, zero) for _ in skeleton.bones))
