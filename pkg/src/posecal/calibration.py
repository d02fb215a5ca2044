"""Weighted per-bone mesh calibration, its analytic gradients and weight fitting.

Each vertex ``V_j`` gets one prediction per bone ``i``::

    P[j, i] = R_i @ V_j + T_i + W[j, i] * gap_i

and the calibrated vertex is ``sum_i A[j, i] * P[j, i]`` where ``A`` is the
row softmax of ``A_logits`` (or the raw logits with ``normalization="none"``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import Divergence, SchemaError, ShapeMismatch
from .mesh import Mesh
from .skeleton import Pose3D, read_json, write_json
from .transform import PoseTransform, pose_transform

log = logging.getLogger(__name__)

NORMALIZATIONS = ("softmax", "none")
WEIGHTS_FORMAT = "posecal-weights/1"


def row_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class CalibrationWeights:
    W: np.ndarray = field(repr=False)
    A_logits: np.ndarray = field(repr=False)
    normalization: str = "softmax"
    skeleton_hash: str = ""
    body_model: str = ""

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        L = np.array(self.A_logits, dtype=float)
        if W.ndim != 2 or W.shape != L.shape:
            raise ShapeMismatch(f"W {W.shape} and A_logits {L.shape} must share an (N, B) shape")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        W.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "A_logits", L)

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    @property
    def A(self) -> np.ndarray:
        if self.normalization == "none":
            return self.A_logits
        return row_softmax(self.A_logits)

    def replace(self, **changes) -> "CalibrationWeights":
        return replace(self, **changes)


def _check_shapes(mesh: Mesh, pt: PoseTransform, weights: CalibrationWeights) -> None:
    n, b = weights.shape
    if mesh.num_vertices != n or len(pt) != b:
        raise ShapeMismatch(
            f"weights are ({n}, {b}) but mesh has {mesh.num_vertices} vertices "
            f"and the pose transform has {len(pt)} bones"
        )


def rigid_predictions(vertices: np.ndarray, pt: PoseTransform) -> np.ndarray:
    """``(N, B, 3)`` array of ``R_i @ V_j + T_i``."""
    return np.einsum("bkl,nl->nbk", pt.rotations, vertices) + pt.translations[None]


def vertex_predictions(mesh: Mesh, pt: PoseTransform, weights: CalibrationWeights, j: int) -> np.ndarray:
    """``(B, 3)`` per-bone predictions for vertex ``j``."""
    _check_shapes(mesh, pt, weights)
    if not 0 <= j < mesh.num_vertices:
        raise ShapeMismatch(f"vertex index {j} not in [0, {mesh.num_vertices})")
    v = mesh.vertices[j]
    rigid = np.einsum("bkl,l->bk", pt.rotations, v) + pt.translations
    return rigid + weights.W[j][:, None] * pt.gaps


def calibrate_with_transform(mesh: Mesh, pt: PoseTransform, weights: CalibrationWeights) -> Mesh:
    _check_shapes(mesh, pt, weights)
    pred = rigid_predictions(mesh.vertices, pt) + weights.W[:, :, None] * pt.gaps[None]
    return mesh.with_vertices(np.einsum("nb,nbk->nk", weights.A, pred))


def calibrate_mesh(mesh: Mesh, src_pose: Pose3D, tgt_pose: Pose3D, weights: CalibrationWeights) -> Mesh:
    """Deform ``mesh`` (posed as ``src_pose``) toward ``tgt_pose``. Faces are kept."""
    return calibrate_with_transform(mesh, pose_transform(src_pose, tgt_pose), weights)


def _forward(rigid_t, gaps, W, A):
    """Blend from rigid predictions stored as ``(N, 3, B)``; the gap term is added separately."""
    return np.matmul(rigid_t, A[:, :, None])[:, :, 0] + (A * W) @ gaps


def _weights_A(logits, normalization):
    return logits if normalization == "none" else row_softmax(logits)


def _logit_grad(A, dA, normalization):
    if normalization == "none":
        return dA
    return A * (dA - np.sum(A * dA, axis=1, keepdims=True))


def _loss(rigid_t, gaps, gt, W, A) -> float:
    resid = _forward(rigid_t, gaps, W, A) - gt
    return float(np.sum(resid * resid)) / len(gt)


def _loss_grads_A(rigid_t, gaps, gt, W, A):
    """Loss with gradients w.r.t. ``W`` and ``A`` itself (before the softmax chain)."""
    n = len(gt)
    resid = _forward(rigid_t, gaps, W, A) - gt
    loss = float(np.sum(resid * resid)) / n
    g_out = (2.0 / n) * resid
    g_gap = g_out @ gaps.T  # (N, B): dL/dout_j . gap_i
    dW = A * g_gap
    dA = np.matmul(g_out[:, None, :], rigid_t)[:, 0, :] + W * g_gap
    return loss, dW, dA


def _loss_grads(rigid_t, gaps, gt, W, logits, normalization):
    A = _weights_A(logits, normalization)
    loss, dW, dA = _loss_grads_A(rigid_t, gaps, gt, W, A)
    return loss, dW, _logit_grad(A, dA, normalization)


def loss_and_gradients(
    mesh: Mesh, src_pose: Pose3D, tgt_pose: Pose3D, weights: CalibrationWeights, gt_mesh: Mesh
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean squared vertex error and its exact gradients w.r.t. ``W`` and ``A_logits``."""
    pt = pose_transform(src_pose, tgt_pose)
    _check_shapes(mesh, pt, weights)
    if gt_mesh.num_vertices != mesh.num_vertices:
        raise ShapeMismatch(f"gt mesh has {gt_mesh.num_vertices} vertices, expected {mesh.num_vertices}")
    return _loss_grads(
        rigid_predictions(mesh.vertices, pt).transpose(0, 2, 1),
        pt.gaps,
        gt_mesh.vertices,
        weights.W,
        weights.A_logits,
        weights.normalization,
    )


# --- initialization ------------------------------------------------------------


def segment_affinity(vertices: np.ndarray, pose: Pose3D) -> tuple[np.ndarray, np.ndarray]:
    """Projected fraction along each bone (clamped to [0, 1]) and squared distance to it.

    Both are ``(N, B)``; the fraction runs from the parent (0) to the child (1).
    """
    p_idx, c_idx = np.array(pose.skeleton.bones).T
    p = pose.joints[p_idx]
    seg = pose.joints[c_idx] - p
    rel = vertices[:, None, :] - p[None]
    t = np.einsum("nbk,bk->nb", rel, seg) / np.sum(seg * seg, axis=1)
    t = np.clip(t, 0.0, 1.0)
    closest = p[None] + t[:, :, None] * seg[None]
    d2 = np.sum((vertices[:, None, :] - closest) ** 2, axis=2)
    return t, d2


def init_weights(
    rest_mesh: Mesh,
    rest_pose: Pose3D,
    *,
    normalization: str = "softmax",
    floor: float = 1e-6,
    rigid: bool = False,
) -> CalibrationWeights:
    """Skinning-like starting weights from the rest geometry.

    ``A`` starts at inverse-squared-distance-to-bone weights (row-normalized,
    floored at ``floor``); ``W`` starts at each vertex's projected fraction
    along the bone, or zero when ``rigid``.
    """
    t, d2 = segment_affinity(rest_mesh.vertices, rest_pose)
    scale = np.mean(np.linalg.norm(rest_pose.bone_vectors(), axis=1))
    inv = 1.0 / np.maximum(d2, (1e-9 * scale) ** 2)
    aff = inv / inv.sum(axis=1, keepdims=True)
    aff = np.maximum(aff, floor)
    aff /= aff.sum(axis=1, keepdims=True)
    logits = np.log(aff) if normalization == "softmax" else aff
    W = np.zeros_like(t) if rigid else t
    return CalibrationWeights(
        W, logits, normalization, skeleton_hash=rest_pose.skeleton.hash, body_model=rest_mesh.body_model
    )


# --- fitting -------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    learning_rate: float = 0.001
    epochs: int = 90
    batch_size: int = 1
    seed: int = 0
    rigid: bool = False  # hold W at zero ("without non-rigid term" ablation)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True, eq=False)
class FitSample:
    """One training example with its pose transform precomputed."""

    rigid_t: np.ndarray  # (N, 3, B) rigid per-bone predictions
    gaps: np.ndarray  # (B, 3)
    gt: np.ndarray  # (N, 3)

    @classmethod
    def build(cls, mesh: Mesh, src_pose: Pose3D, tgt_pose: Pose3D, gt_mesh: Mesh) -> "FitSample":
        pt = pose_transform(src_pose, tgt_pose)
        if gt_mesh.num_vertices != mesh.num_vertices:
            raise ShapeMismatch(f"gt mesh has {gt_mesh.num_vertices} vertices, expected {mesh.num_vertices}")
        rigid_t = np.ascontiguousarray(rigid_predictions(mesh.vertices, pt).transpose(0, 2, 1))
        return cls(rigid_t, pt.gaps, gt_mesh.vertices)


def _batch_loss_grads(samples: Sequence[FitSample], W, logits, normalization):
    A = _weights_A(logits, normalization)
    loss, dW, dA = _loss_grads_A(samples[0].rigid_t, samples[0].gaps, samples[0].gt, W, A)
    for s in samples[1:]:
        l, gw, ga = _loss_grads_A(s.rigid_t, s.gaps, s.gt, W, A)
        loss += l
        dW += gw
        dA += ga
    k = len(samples)
    return loss / k, dW / k, _logit_grad(A, dA / k, normalization)


def _mean_loss(samples, W, logits, normalization) -> float:
    A = _weights_A(logits, normalization)
    return sum(_loss(s.rigid_t, s.gaps, s.gt, W, A) for s in samples) / len(samples)


def dataset_loss(samples: Sequence[FitSample], weights: CalibrationWeights) -> float:
    return _mean_loss(samples, weights.W, weights.A_logits, weights.normalization)


def fit_weights(
    dataset: Iterable[tuple[Mesh, Pose3D, Pose3D, Mesh]] | Sequence[FitSample],
    init: CalibrationWeights,
    cfg: FitConfig = FitConfig(),
) -> tuple[CalibrationWeights, list[float]]:
    """Mini-batch gradient descent on the mean squared vertex error.

    ``dataset`` holds ``(mesh, src_pose, tgt_pose, gt_mesh)`` tuples (or
    prebuilt :class:`FitSample` objects). Weights are shared by all samples.
    The returned history has ``epochs + 1`` entries: the full-dataset mean
    loss before training and after every epoch.
    """
    samples = [s if isinstance(s, FitSample) else FitSample.build(*s) for s in dataset]
    if not samples:
        raise ValueError("fit_weights needs a non-empty dataset")
    n, b = init.shape
    for s in samples:
        if (len(s.gt), len(s.gaps)) != (n, b):
            raise ShapeMismatch(f"sample is {(len(s.gt), len(s.gaps))}, weights are {(n, b)}")

    W = np.zeros((n, b)) if cfg.rigid else init.W.copy()
    logits = init.A_logits.copy()
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate

    def check(value, epoch):
        if not np.isfinite(value) or not (np.all(np.isfinite(W)) and np.all(np.isfinite(logits))):
            raise Divergence(f"loss became non-finite at epoch {epoch} (learning_rate={lr:g})")

    with np.errstate(over="ignore", invalid="ignore"):
        history = [dataset_loss(samples, init.replace(W=W, A_logits=logits))]
        check(history[0], 0)
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(samples))
            for start in range(0, len(order), cfg.batch_size):
                batch = [samples[k] for k in order[start : start + cfg.batch_size]]
                loss, dW, dL = _batch_loss_grads(batch, W, logits, init.normalization)
                check(loss, epoch)
                if not cfg.rigid:
                    W -= lr * dW
                logits -= lr * dL
            history.append(_mean_loss(samples, W, logits, init.normalization))
            check(history[-1], epoch)
            log.debug("epoch %d loss %.6g", epoch, history[-1])
    return init.replace(W=W, A_logits=logits), history


# --- persistence ---------------------------------------------------------------


def save_weights(path: str | Path, weights: CalibrationWeights) -> None:
    n, b = weights.shape
    write_json(
        path,
        {
            "format": WEIGHTS_FORMAT,
            "shape": [n, b],
            "skeleton_hash": weights.skeleton_hash,
            "body_model": weights.body_model,
            "normalization": weights.normalization,
            "W": weights.W.tolist(),
            "A_logits": weights.A_logits.tolist(),
        },
    )


def load_weights(
    path: str | Path,
    *,
    shape: tuple[int, int] | None = None,
    skeleton_hash: str | None = None,
    body_model: str | None = None,
) -> CalibrationWeights:
    """Load a weights artifact, refusing it if it does not match the expectations given."""
    data = read_json(path)
    if not isinstance(data, dict) or data.get("format") != WEIGHTS_FORMAT:
        raise SchemaError(f"{path}: not a {WEIGHTS_FORMAT} file")
    n, b = data["shape"]
    weights = CalibrationWeights(
        np.array(data["W"], dtype=float).reshape(n, b),
        np.array(data["A_logits"], dtype=float).reshape(n, b),
        data.get("normalization", "softmax"),
        data.get("skeleton_hash", ""),
        data.get("body_model", ""),
    )
    if shape is not None and tuple(shape) != (n, b):
        raise ShapeMismatch(f"{path}: weights are ({n}, {b}), expected {tuple(shape)}")
    if skeleton_hash and weights.skeleton_hash and skeleton_hash != weights.skeleton_hash:
        raise ShapeMismatch(f"{path}: weights were fitted on skeleton {weights.skeleton_hash}, not {skeleton_hash}")
    if body_model and weights.body_model and body_model != weights.body_model:
        raise ShapeMismatch(f"{path}: weights belong to body model {weights.body_model!r}, not {body_model!r}")
    return weights
