"""Linear mesh-to-joint regression and weak-perspective projection.

Projector file (sparse triplets)::

    {"K": 17, "N": 600, "entries": [[k, j, value], ...]}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParseError, SchemaError, ShapeMismatch
from .geometry import is_rotation
from .mesh import Mesh
from .skeleton import Pose2D, Pose3D, Skeleton, read_json, write_json


@dataclass(frozen=True, eq=False)
class PoseProjector:
    """``K x N`` sparse matrix regressing joints from mesh vertices."""

    U: sp.csr_matrix = field(repr=False)

    @classmethod
    def from_entries(cls, k: int, n: int, entries) -> "PoseProjector":
        entries = np.asarray(entries, dtype=float).reshape(-1, 3)
        rows, cols = entries[:, 0].astype(int), entries[:, 1].astype(int)
        if len(entries) and (rows.min() < 0 or rows.max() >= k or cols.min() < 0 or cols.max() >= n):
            raise SchemaError(f"projector entry index outside ({k}, {n})")
        return cls(sp.csr_matrix((entries[:, 2], (rows, cols)), shape=(k, n)))

    @classmethod
    def selector(cls, vertex_ids, n: int) -> "PoseProjector":
        """One unit entry per joint, picking ``vertex_ids[k]`` for joint ``k``."""
        ids = list(vertex_ids)
        return cls.from_entries(len(ids), n, [[k, j, 1.0] for k, j in enumerate(ids)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape

    def entries(self) -> list[list]:
        coo = self.U.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [[int(coo.row[i]), int(coo.col[i]), float(coo.data[i])] for i in order]

    def validate(self, tol: float = 1e-9) -> list[str]:
        out = []
        data = self.U.data
        if np.any(data < 0) or not np.all(np.isfinite(data)):
            out.append("projector has negative or non-finite entries")
        sums = np.asarray(self.U.sum(axis=1)).ravel()
        for k in np.flatnonzero(np.abs(sums - 1.0) > tol):
            out.append(f"row {k} sums to {sums[k]!r}, not 1")
        return out


def mesh_to_pose(proj: PoseProjector, mesh: Mesh, skeleton: Skeleton) -> Pose3D:
    k, n = proj.shape
    if n != mesh.num_vertices or k != skeleton.num_joints:
        raise ShapeMismatch(
            f"projector is ({k}, {n}); mesh has {mesh.num_vertices} vertices, skeleton {skeleton.num_joints} joints"
        )
    return Pose3D(skeleton, proj.U @ mesh.vertices)


def load_projector(path: str | Path) -> PoseProjector:
    data = read_json(path)
    try:
        k, n, entries = int(data["K"]), int(data["N"]), data["entries"]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: projector needs integer 'K', 'N' and an 'entries' list ({e})") from None
    if not all(isinstance(e, list) and len(e) == 3 for e in entries):
        raise ParseError(f"{path}: every projector entry must be [k, j, value]")
    return PoseProjector.from_entries(k, n, entries)


def save_projector(path: str | Path, proj: PoseProjector) -> None:
    k, n = proj.shape
    write_json(path, {"K": k, "N": n, "entries": proj.entries()})


@dataclass(frozen=True, eq=False)
class Camera:
    """Weak-perspective camera: ``s * (R @ X)[:2] + t``."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(2))
    s: float = 1.0

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        t = np.array(self.t, dtype=float)
        if not is_rotation(R):
            raise SchemaError("camera R is not a rotation matrix")
        if t.shape != (2,):
            raise SchemaError(f"camera t must have 2 components, got {t.shape}")
        if not (np.isfinite(self.s) and self.s > 0):
            raise SchemaError("camera scale must be > 0")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", float(self.s))

    def to_dict(self) -> dict:
        return {"R": self.R.tolist(), "t": self.t.tolist(), "s": self.s}

    @classmethod
    def from_dict(cls, data: dict) -> "Camera":
        return cls(data.get("R", np.eye(3)), data.get("t", [0.0, 0.0]), data.get("s", 1.0))

    def depths(self, pose: Pose3D) -> np.ndarray:
        """Per-joint depth along the camera axis, ``(R @ X)[2]``."""
        return (pose.joints @ self.R.T)[:, 2]

    def unproject(self, pose2d: Pose2D, depths) -> Pose3D:
        """Invert :func:`project_weak_perspective` given per-joint depths."""
        xy = (pose2d.joints - self.t) / self.s
        cam = np.column_stack([xy, np.broadcast_to(np.asarray(depths, dtype=float), len(xy))])
        return Pose3D(pose2d.skeleton, cam @ self.R)


def project_weak_perspective(cam: Camera, pose: Pose3D) -> Pose2D:
    rotated = pose.joints @ cam.R.T
    return Pose2D(pose.skeleton, cam.s * rotated[:, :2] + cam.t)


