"""MPJPE, PA-MPJPE, MPVE and the similarity Procrustes fit behind PA-MPJPE."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateConfiguration, ShapeMismatch
from .mesh import Mesh
from .skeleton import Pose3D, require_same_skeleton


def _pair(pred: Pose3D, gt: Pose3D) -> tuple[np.ndarray, np.ndarray]:
    require_same_skeleton(pred.skeleton, gt.skeleton)
    return pred.joints, gt.joints


def mean_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def mpjpe(pred: Pose3D, gt: Pose3D) -> float:
    return mean_distance(*_pair(pred, gt))


def procrustes_align(pred, gt, rank_tol: float = 1e-10) -> tuple[float, np.ndarray, np.ndarray]:
    """Similarity ``(s, R, t)`` minimizing ``sum |s R pred_k + t - gt_k|^2``.

    Closed form from the SVD of the centered cross-covariance, with the sign
    of the last singular direction flipped when needed to exclude reflections.
    """
    X = np.asarray(pred, dtype=float)
    Y = np.asarray(gt, dtype=float)
    if X.shape != Y.shape or X.ndim != 2 or X.shape[1] != 3:
        raise ShapeMismatch(f"point sets must share an (K, 3) shape, got {X.shape} and {Y.shape}")
    if len(X) < 3:
        raise DegenerateConfiguration(f"need at least 3 points, got {len(X)}")
    mx, my = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - mx, Y - my
    var_x = np.sum(Xc * Xc)
    scale_ref = max(var_x, np.sum(Yc * Yc), 1e-300)
    if var_x <= 1e-24 * max(1.0, np.sum(X * X)):
        raise DegenerateConfiguration("prediction points are all coincident")

    cov = Yc.T @ Xc
    U, d, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    # with the sign flip active, the two smallest singular values must be distinct
    small = d[1:] / max(d[0], 1e-300)
    if d[0] <= rank_tol * scale_ref or (S[2] < 0 and abs(d[1] - d[2]) <= rank_tol * d[0]) or small[0] <= rank_tol:
        raise DegenerateConfiguration("cross-covariance is rank deficient; rotation is ambiguous")
    R = U @ np.diag(S) @ Vt
    s = float(np.sum(d * S) / var_x)
    t = my - s * R @ mx
    return s, R, t


def apply_similarity(points, s: float, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    return s * np.asarray(points, dtype=float) @ R.T + t


def pa_mpjpe(pred: Pose3D, gt: Pose3D) -> float:
    X, Y = _pair(pred, gt)
    s, R, t = procrustes_align(X, Y)
    return mean_distance(apply_similarity(X, s, R, t), Y)


def mpve(pred: Mesh, gt: Mesh) -> float:
    if pred.num_vertices != gt.num_vertices:
        raise ShapeMismatch(f"meshes have {pred.num_vertices} and {gt.num_vertices} vertices")
    return mean_distance(pred.vertices, gt.vertices)


@dataclass(frozen=True)
class SampleMetrics:
    sample_id: str
    mpjpe: float
    pa_mpjpe: float
    mpve: float


def sample_metrics(sample_id: str, pred_pose: Pose3D, gt_pose: Pose3D, pred_mesh: Mesh, gt_mesh: Mesh) -> SampleMetrics:
    return SampleMetrics(sample_id, mpjpe(pred_pose, gt_pose), pa_mpjpe(pred_pose, gt_pose), mpve(pred_mesh, gt_mesh))


@dataclass(frozen=True)
class MetricReport:
    mpjpe: float
    pa_mpjpe: float
    mpve: float
    sample_count: int
    samples: tuple[SampleMetrics, ...] = field(default=(), repr=False)

    @classmethod
    def from_samples(cls, samples) -> "MetricReport":
        samples = tuple(samples)
        if not samples:
            raise ValueError("cannot build a metric report from zero samples")
        # sequential sums keep the mean independent of evaluation order
        k = len(samples)
        return cls(
            sum(s.mpjpe for s in samples) / k,
            sum(s.pa_mpjpe for s in samples) / k,
            sum(s.mpve for s in samples) / k,
            k,
            samples,
        )


CSV_COLUMNS = (
    "id",
    "baseline_mpjpe",
    "baseline_pa_mpjpe",
    "baseline_mpve",
    "mpjpe",
    "pa_mpjpe",
    "mpve",
    "units",
)


def report_csv(baseline: MetricReport, calibrated: MetricReport, units: str = "mm") -> str:
    """Per-sample rows (baseline next to calibrated) followed by a ``mean`` row."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for b, c in zip(baseline.samples, calibrated.samples):
        writer.writerow([c.sample_id, repr(b.mpjpe), repr(b.pa_mpjpe), repr(b.mpve),
                         repr(c.mpjpe), repr(c.pa_mpjpe), repr(c.mpve), units])  # fmt: skip
    writer.writerow(["mean", repr(baseline.mpjpe), repr(baseline.pa_mpjpe), repr(baseline.mpve),
                     repr(calibrated.mpjpe), repr(calibrated.pa_mpjpe), repr(calibrated.mpve), units])  # fmt: skip
    return buf.getvalue()
