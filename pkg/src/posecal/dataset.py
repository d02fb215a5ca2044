"""On-disk synthetic datasets: OBJ meshes, JSON poses and a manifest.

Layout::

    DIR/manifest.json
    DIR/skeleton.json  rest_mesh.obj  rest_pose.json  projector.json
    DIR/samples/<id>_src.obj  <id>_src.json  <id>_gt.obj  <id>_gt.json
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .camera import PoseProjector, load_projector, save_projector
from .errors import ParseError, SchemaError
from .mesh import Mesh, load_obj, save_obj
from .skeleton import Pose3D, Skeleton, load_pose, load_skeleton, read_json, save_pose, save_skeleton, write_json
from .synth import Perturbation, SynthBody, SynthSample

MANIFEST = "manifest.json"
DATASET_FORMAT = "posecal-dataset/1"


@dataclass(frozen=True, eq=False)
class Sample:
    sample_id: str
    src_mesh: Mesh
    src_pose: Pose3D
    gt_mesh: Mesh
    gt_pose: Pose3D


@dataclass(frozen=True, eq=False)
class Dataset:
    root: Path
    skeleton: Skeleton
    rest_mesh: Mesh
    rest_pose: Pose3D
    projector: PoseProjector
    samples: tuple[Sample, ...]
    units: str = "mm"
    manifest: dict | None = None

    def gt_poses(self) -> dict[str, Pose3D]:
        return {s.sample_id: s.gt_pose for s in self.samples}


def write_dataset(
    root: str | Path,
    body: SynthBody,
    samples: list[SynthSample],
    *,
    seed: int,
    perturbation: Perturbation,
    body_config: dict | None = None,
    units: str = "mm",
) -> Path:
    root = Path(root)
    (root / "samples").mkdir(parents=True, exist_ok=True)
    save_skeleton(root / "skeleton.json", body.skeleton)
    save_obj(root / "rest_mesh.obj", body.rest_mesh)
    save_pose(root / "rest_pose.json", body.rest_pose)
    save_projector(root / "projector.json", body.projector())
    entries = []
    for s in samples:
        files = {
            "src_mesh": f"samples/{s.sample_id}_src.obj",
            "src_pose": f"samples/{s.sample_id}_src.json",
            "gt_mesh": f"samples/{s.sample_id}_gt.obj",
            "gt_pose": f"samples/{s.sample_id}_gt.json",
        }
        save_obj(root / files["src_mesh"], s.src_mesh)
        save_pose(root / files["src_pose"], s.src_pose)
        save_obj(root / files["gt_mesh"], s.gt_mesh)
        save_pose(root / files["gt_pose"], s.gt_pose)
        entries.append({"id": s.sample_id, "pose_seed": s.pose_seed, "perturb_seed": s.perturb_seed, **files})
    write_json(
        root / MANIFEST,
        {
            "format": DATASET_FORMAT,
            "units": units,
            "seed": seed,
            "body": body_config or {},
            "perturbation": perturbation.to_dict(),
            "skeleton": "skeleton.json",
            "rest_mesh": "rest_mesh.obj",
            "rest_pose": "rest_pose.json",
            "projector": "projector.json",
            "samples": entries,
        },
    )
    return root


def load_dataset(root: str | Path) -> Dataset:
    root = Path(root)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise FileNotFoundError(f"{manifest_path}: dataset manifest not found")
    m = read_json(manifest_path)
    if not isinstance(m, dict) or m.get("format") != DATASET_FORMAT:
        raise SchemaError(f"{manifest_path}: not a {DATASET_FORMAT} manifest")
    try:
        skeleton = load_skeleton(root / m["skeleton"])
        rest_mesh = load_obj(root / m["rest_mesh"])
        rest_pose = load_pose(root / m["rest_pose"], skeleton)
        projector = load_projector(root / m["projector"])
        entries = m["samples"]
    except KeyError as e:
        raise ParseError(f"{manifest_path}: missing field {e}") from None
    samples = []
    for k, e in enumerate(entries):
        try:
            samples.append(
                Sample(
                    str(e["id"]),
                    load_obj(root / e["src_mesh"]),
                    load_pose(root / e["src_pose"], skeleton),
                    load_obj(root / e["gt_mesh"]),
                    load_pose(root / e["gt_pose"], skeleton),
                )
            )
        except KeyError as err:
            raise ParseError(f"{manifest_path}: samples[{k}] missing field {err}") from None
        except (OSError, ParseError, SchemaError) as err:
            raise type(err)(f"sample {e.get('id', k)!r}: {err}") from err
    return Dataset(root, skeleton, rest_mesh, rest_pose, projector, tuple(samples), m.get("units", "mm"), m)
