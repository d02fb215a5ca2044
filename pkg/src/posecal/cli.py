"""Command line entry point: ``posecal {synth,fit,calibrate,eval,transform}``.

Exit codes: 0 success, 1 validation error, 2 IO/parse error, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .calibration import FitConfig, FitSample, calibrate_mesh, fit_weights, init_weights, load_weights, save_weights
from .dataset import load_dataset, write_dataset
from .errors import Divergence, ParseError, PosecalError, StageError
from .mesh import load_obj, save_obj
from .pipeline import NoisySource, evaluate, load_config
from .skeleton import get_skeleton, load_pose, require_same_skeleton, write_json
from .synth import Perturbation, build_body, make_samples
from .transform import pose_transform

log = logging.getLogger("posecal")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_DIVERGENCE = 0, 1, 2, 3


def cmd_synth(args) -> int:
    body_config = {"num_vertices": args.num_vertices, "ring_size": args.ring_size}
    body = build_body(args.num_vertices, ring_size=args.ring_size)
    pert = Perturbation(args.joint_noise, tuple(args.bone_scale), args.rotation_noise)
    samples = make_samples(body, args.num_samples, args.seed, pert, start=args.start)
    write_dataset(args.out, body, samples, seed=args.seed, perturbation=pert, body_config=body_config, units=args.units)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    data = load_dataset(args.data)
    if args.init:
        init = load_weights(args.init, shape=(data.rest_mesh.num_vertices, data.skeleton.num_bones),
                            skeleton_hash=data.skeleton.hash)  # fmt: skip
    else:
        init = init_weights(data.rest_mesh, data.rest_pose, normalization=args.normalization, rigid=args.rigid)
    targets = NoisySource(data.gt_poses(), args.target_noise, args.seed)
    train = [FitSample.build(s.src_mesh, s.src_pose, targets(s.sample_id), s.gt_mesh) for s in data.samples]
    cfg = FitConfig(args.lr, args.epochs, args.batch_size, args.seed, rigid=args.rigid)
    weights, history = fit_weights(train, init, cfg)
    save_weights(args.out, weights)
    if args.history:
        write_json(args.history, {"config": asdict(cfg), "loss": history})
    print(f"loss {history[0]:.6g} -> {history[-1]:.6g} over {cfg.epochs} epochs; weights written to {args.out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    skeleton = get_skeleton(args.skeleton) if args.skeleton else None
    mesh = load_obj(args.mesh)
    src = load_pose(args.src_pose, skeleton)
    tgt = load_pose(args.tgt_pose, skeleton or src.skeleton)
    require_same_skeleton(src.skeleton, tgt.skeleton)
    weights = load_weights(args.weights, shape=(mesh.num_vertices, src.skeleton.num_bones),
                           skeleton_hash=src.skeleton.hash, body_model=mesh.body_model)  # fmt: skip
    save_obj(args.out, calibrate_mesh(mesh, src, tgt, weights))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    result = evaluate(cfg, args.data)
    Path(args.report).write_text(result.csv, encoding="utf-8")
    b, c = result.baseline, result.calibrated
    print(f"{c.sample_count} samples ({cfg.mode}, units {cfg.units})")
    print(f"           {'MPJPE':>10} {'PA-MPJPE':>10} {'MPVE':>10}")
    print(f"baseline   {b.mpjpe:10.3f} {b.pa_mpjpe:10.3f} {b.mpve:10.3f}")
    print(f"calibrated {c.mpjpe:10.3f} {c.pa_mpjpe:10.3f} {c.mpve:10.3f}")
    return EXIT_OK


def cmd_transform(args) -> int:
    skeleton = get_skeleton(args.skeleton) if args.skeleton else None
    src = load_pose(args.src_pose, skeleton)
    tgt = load_pose(args.tgt_pose, skeleton or src.skeleton)
    text = json.dumps(pose_transform(src, tgt).to_dict(), indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posecal", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-samples", type=int, default=100)
    p.add_argument("--start", type=int, default=0, help="index of the first sample id")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-vertices", type=int, default=600)
    p.add_argument("--ring-size", type=int, default=8)
    p.add_argument("--bone-scale", type=float, nargs=2, default=(0.85, 1.15), metavar=("LO", "HI"))
    p.add_argument("--joint-noise", type=float, default=10.0, help="joint jitter sigma (length units)")
    p.add_argument("--rotation-noise", type=float, default=0.15, help="bone rotation noise sigma (radians)")
    p.add_argument("--units", default="mm", help="label for reports; the math is unit-free")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit calibration weights on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write the loss history as JSON")
    p.add_argument("--init", help="start from an existing weights file")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=90)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rigid", action="store_true", help="hold the non-rigid weights at zero")
    p.add_argument("--normalization", choices=("softmax", "none"), default="softmax")
    p.add_argument("--target-noise", type=float, default=0.0, help="Gaussian sigma added to target poses")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("calibrate", help="calibrate one mesh")
    p.add_argument("--mesh", required=True)
    p.add_argument("--src-pose", required=True)
    p.add_argument("--tgt-pose", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skeleton", help="built-in name or skeleton JSON (default: from the pose files)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="evaluate a pipeline config on a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="CSV output path")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transform", help="dump per-bone rotation/translation/gap as JSON")
    p.add_argument("--src-pose", required=True)
    p.add_argument("--tgt-pose", required=True)
    p.add_argument("--skeleton")
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)
    return parser


def exit_code(err: BaseException) -> int:
    if isinstance(err, StageError):
        return exit_code(err.cause)
    if isinstance(err, Divergence):
        return EXIT_DIVERGENCE
    if isinstance(err, (ParseError, OSError)):
        return EXIT_IO
    return EXIT_VALIDATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (PosecalError, OSError, ValueError) as e:
        print(f"posecal {args.command}: {e}", file=sys.stderr)
        return exit_code(e)


if __name__ == "__main__":
    sys.exit(main())
