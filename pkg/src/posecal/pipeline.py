"""Serial and parallel calibration dataflows over pluggable pose providers.

Serial:   mesh -> joints (projector) -> 2D (camera) -> 3D target (lifter) -> calibrated mesh
Parallel: mesh + its joints, 3D target from an independent source -> calibrated mesh

Config file (JSON; relative paths resolve against the config's directory)::

    {
      "mode": "parallel",                 # or "serial"
      "skeleton": "h36m17",               # built-in name or skeleton JSON path
      "camera": {"R": [[1,0,0],[0,1,0],[0,0,1]], "t": [0, 0], "s": 1.0},
      "projector": null,                  # default: the dataset's projector.json
      "weights": "weights.json",          # null: untrained skinning-style init
      "target": {"kind": "oracle"},       # oracle | noisy | file | constant_depth
      "units": "mm",
      "jobs": 1
    }

``noisy`` takes ``sigma`` and ``seed``; ``file`` takes ``path``;
``constant_depth`` (serial only) takes ``depth``.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol

import numpy as np

from .calibration import CalibrationWeights, calibrate_mesh, init_weights, load_weights
from .camera import Camera, PoseProjector, load_projector, mesh_to_pose, project_weak_perspective
from .dataset import Dataset, Sample, load_dataset
from .errors import ParseError, PosecalError, SchemaError, StageError
from .mesh import Mesh
from .metrics import MetricReport, report_csv, sample_metrics
from .skeleton import (
    Pose2D,
    Pose3D,
    Skeleton,
    get_skeleton,
    pose_from_dict,
    read_json,
    require_same_skeleton,
    require_valid,
)


class PoseSource(Protocol):
    def __call__(self, sample_id: str) -> Pose3D: ...


class PoseLifter(Protocol):
    def __call__(self, pose2d: Pose2D, sample_id: str | None = None) -> Pose3D: ...


def _sample_rng(seed: int, sample_id: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(sample_id.encode())])


class OracleSource:
    """Looks up the ground-truth pose of each sample."""

    def __init__(self, poses: Mapping[str, Pose3D]):
        self.poses = dict(poses)

    def __call__(self, sample_id: str) -> Pose3D:
        try:
            return self.poses[sample_id]
        except KeyError:
            raise SchemaError(f"no target pose for sample {sample_id!r}") from None


class NoisySource(OracleSource):
    """Ground truth plus isotropic Gaussian joint noise, seeded per sample."""

    def __init__(self, poses: Mapping[str, Pose3D], sigma: float, seed: int = 0):
        super().__init__(poses)
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = float(sigma)
        self.seed = int(seed)

    def __call__(self, sample_id: str) -> Pose3D:
        gt = super().__call__(sample_id)
        noise = _sample_rng(self.seed, sample_id).normal(0.0, self.sigma, size=gt.joints.shape)
        return gt.with_joints(gt.joints + noise)


class FileSource(OracleSource):
    """Poses exported by an external estimator.

    ``path`` is either a directory of ``<id>.json`` pose files or one JSON
    file ``{"skeleton": name, "poses": {id: [[x, y, z], ...]}}``.
    """

    def __init__(self, path: str | Path, skeleton: Skeleton):
        path = Path(path)
        self.path = path
        if path.is_dir():
            poses = {}
            for f in sorted(path.glob("*.json")):
                poses[f.stem] = pose_from_dict(read_json(f), skeleton, f)
        elif path.is_file():
            data = read_json(path)
            if not isinstance(data, dict) or not isinstance(data.get("poses"), dict):
                raise ParseError(f"{path}: expected an object with a 'poses' mapping")
            tag = data.get("skeleton", skeleton.name)
            poses = {
                str(k): pose_from_dict({"skeleton": tag, "positions": v}, skeleton, f"{path}:{k}")
                for k, v in data["poses"].items()
            }
        else:
            raise FileNotFoundError(f"{path}: pose file or directory not found")
        super().__init__(poses)


class SourceLifter:
    """Lifter that ignores the 2D input and asks a :class:`PoseSource` (oracle or noisy)."""

    def __init__(self, source: PoseSource):
        self.source = source

    def __call__(self, pose2d: Pose2D, sample_id: str | None = None) -> Pose3D:
        if sample_id is None:
            raise ValueError("this lifter needs the sample id")
        return self.source(sample_id)


class DepthLifter:
    """Inverts the weak-perspective camera given per-joint depths.

    ``depths`` is a scalar (constant depth), a ``(K,)`` array, or a mapping
    from sample id to either.
    """

    def __init__(self, camera: Camera, depths):
        self.camera = camera
        self.depths = depths

    def __call__(self, pose2d: Pose2D, sample_id: str | None = None) -> Pose3D:
        d = self.depths[sample_id] if isinstance(self.depths, Mapping) else self.depths
        return self.camera.unproject(pose2d, d)


@dataclass(frozen=True, eq=False)
class PipelineResult:
    mesh: Mesh
    src_pose: Pose3D
    target_pose: Pose3D
    pose2d: Pose2D | None = None


def _stage(name: str, fn: Callable, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except (PosecalError, ValueError, KeyError) as e:
        raise StageError(name, e) from e


def _valid_on(pose: Pose3D, skeleton: Skeleton) -> Pose3D:
    require_same_skeleton(skeleton, pose.skeleton)
    require_valid(pose)
    return pose


def run_serial(
    mesh: Mesh,
    projector: PoseProjector,
    camera: Camera,
    lifter: PoseLifter,
    weights: CalibrationWeights,
    skeleton: Skeleton,
    sample_id: str | None = None,
) -> PipelineResult:
    src = _stage("mesh_to_pose", mesh_to_pose, projector, mesh, skeleton)
    z = _stage("project", project_weak_perspective, camera, src)
    tgt = _stage("lift", lambda: _valid_on(lifter(z, sample_id), skeleton))
    out = _stage("calibrate", calibrate_mesh, mesh, src, tgt, weights)
    return PipelineResult(out, src, tgt, z)


def run_parallel(
    mesh: Mesh,
    src_pose: Pose3D,
    source: PoseSource,
    weights: CalibrationWeights,
    sample_id: str,
) -> PipelineResult:
    tgt = _stage("pose_source", lambda: _valid_on(source(sample_id), src_pose.skeleton))
    out = _stage("calibrate", calibrate_mesh, mesh, src_pose, tgt, weights)
    return PipelineResult(out, src_pose, tgt)


# --- configuration and evaluation ------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "parallel"
    skeleton: str = "h36m17"
    camera: Camera = field(default_factory=Camera)
    projector: Path | None = None
    weights: Path | None = None
    target: dict = field(default_factory=lambda: {"kind": "oracle"})
    units: str = "mm"
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in ("serial", "parallel"):
            raise SchemaError(f"mode must be 'serial' or 'parallel', not {self.mode!r}")
        kind = self.target.get("kind")
        if kind not in ("oracle", "noisy", "file", "constant_depth"):
            raise SchemaError(f"unknown target kind {kind!r}")
        if kind == "constant_depth" and self.mode != "serial":
            raise SchemaError("constant_depth targets need serial mode")
        if kind == "file" and "path" not in self.target:
            raise SchemaError("file targets need a 'path'")
        for p in (self.projector, self.weights, self.target.get("path")):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{p}: referenced by config but missing")

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "PipelineConfig":
        def path(v):
            return None if v is None else (base / v if not Path(v).is_absolute() else Path(v))

        skeleton = str(data.get("skeleton", "h36m17"))
        if skeleton.endswith(".json"):
            skeleton = str(path(skeleton))
        target = dict(data.get("target", {"kind": "oracle"}))
        if "path" in target:
            target["path"] = path(target["path"])
        return cls(
            mode=data.get("mode", "parallel"),
            skeleton=skeleton,
            camera=Camera.from_dict(data.get("camera", {})),
            projector=path(data.get("projector")),
            weights=path(data.get("weights")),
            target=target,
            units=str(data.get("units", "mm")),
            jobs=int(data.get("jobs", 1)),
        )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    data = read_json(path)
    if not isinstance(data, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    return PipelineConfig.from_dict(data, path.parent)


def build_target(cfg: PipelineConfig, dataset: Dataset):
    """The configured pose source (parallel) or lifter (serial)."""
    kind = cfg.target["kind"]
    gt = dataset.gt_poses()
    if kind == "oracle":
        source = OracleSource(gt)
    elif kind == "noisy":
        source = NoisySource(gt, float(cfg.target.get("sigma", 0.0)), int(cfg.target.get("seed", 0)))
    elif kind == "file":
        source = FileSource(cfg.target["path"], dataset.skeleton)
    else:
        return DepthLifter(cfg.camera, float(cfg.target.get("depth", 0.0)))
    return SourceLifter(source) if cfg.mode == "serial" else source


@dataclass(frozen=True, eq=False)
class EvalResult:
    baseline: MetricReport
    calibrated: MetricReport
    meshes: tuple[Mesh, ...]
    csv: str


def evaluate(cfg: PipelineConfig, dataset: Dataset | str | Path) -> EvalResult:
    """Run the configured pipeline on every sample; baseline metrics compare the input mesh."""
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    if not dataset.samples:
        raise SchemaError(f"{dataset.root}: dataset has no samples")
    skeleton = dataset.skeleton
    require_same_skeleton(get_skeleton(cfg.skeleton), skeleton)
    projector = load_projector(cfg.projector) if cfg.projector else dataset.projector
    n = dataset.rest_mesh.num_vertices
    if cfg.weights:
        weights = load_weights(cfg.weights, shape=(n, skeleton.num_bones), skeleton_hash=skeleton.hash)
    else:
        weights = init_weights(dataset.rest_mesh, dataset.rest_pose)
    target = build_target(cfg, dataset)

    def one(sample: Sample):
        try:
            if cfg.mode == "serial":
                res = run_serial(sample.src_mesh, projector, cfg.camera, target, weights, skeleton, sample.sample_id)
            else:
                src = _stage("mesh_to_pose", mesh_to_pose, projector, sample.src_mesh, skeleton)
                res = run_parallel(sample.src_mesh, src, target, weights, sample.sample_id)
            before = sample_metrics(sample.sample_id, res.src_pose, sample.gt_pose, sample.src_mesh, sample.gt_mesh)
            after_pose = mesh_to_pose(projector, res.mesh, skeleton)
            after = sample_metrics(sample.sample_id, after_pose, sample.gt_pose, res.mesh, sample.gt_mesh)
        except StageError as e:
            raise StageError(f"sample {sample.sample_id}/{e.stage}", e.cause) from e
        return before, after, res.mesh

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, dataset.samples))  # map keeps sample order
    else:
        results = [one(s) for s in dataset.samples]
    baseline = MetricReport.from_samples(r[0] for r in results)
    calibrated = MetricReport.from_samples(r[1] for r in results)
    return EvalResult(baseline, calibrated, tuple(r[2] for r in results), report_csv(baseline, calibrated, cfg.units))
