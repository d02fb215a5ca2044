"""Acceptance gate: one test and one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""

import time

import numpy as np

from posecal.calibration import CalibrationWeights, calibrate_mesh, loss_and_gradients
from posecal.camera import Camera, mesh_to_pose
from posecal.dataset import load_dataset, write_dataset
from posecal.geometry import perpendicular_axis, rodrigues, rotation_between
from posecal.mesh import Mesh
from posecal.metrics import apply_similarity, mpjpe, pa_mpjpe
from posecal.pipeline import OracleSource, PipelineConfig, SourceLifter, evaluate, run_parallel, run_serial
from posecal.skeleton import H36M17, Pose3D, Skeleton
from posecal.synth import make_samples, sample_pose
from posecal.transform import pose_transform, transform_point_on_bone

from . import experiment, oracles
from .helpers import ACCEPTANCE_LINES, move, random_pose, rigid_motion

TOL = 1e-9


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def is_so3_error(R) -> float:
    return max(np.abs(R.T @ R - np.eye(3)).max(), abs(np.linalg.det(R) - 1.0))


def test_1_rotation_suite():
    rng = np.random.default_rng(1)
    pairs = rng.normal(size=(1000, 2, 3)) * rng.uniform(1e-3, 1e3, size=(1000, 2, 1))
    t0 = time.perf_counter()
    worst_map = worst_so3 = 0.0
    for a, b in pairs:
        R = rodrigues(rotation_between(a, b))
        a_hat, b_hat = a / np.linalg.norm(a), b / np.linalg.norm(b)
        worst_map = max(worst_map, np.abs(R @ a_hat - b_hat).max())
        worst_so3 = max(worst_so3, is_so3_error(R))
    degenerate_ok = True
    for a in rng.normal(size=(20, 3)):
        par = rotation_between(a, 2.5 * a)
        anti = rotation_between(a, -0.5 * a)
        axis = perpendicular_axis(a)
        degenerate_ok &= np.array_equal(par, np.zeros(3)) and np.array_equal(rodrigues(par), np.eye(3))
        degenerate_ok &= np.allclose(anti, np.pi * axis, atol=1e-12) and abs(axis @ a) < 1e-12
        degenerate_ok &= np.array_equal(anti, rotation_between(a, -0.5 * a))
        degenerate_ok &= np.allclose(rodrigues(anti) @ a, -a, atol=1e-12 * np.linalg.norm(a))
    for a in np.eye(3):
        degenerate_ok &= np.array_equal(rotation_between(a, -a), np.pi * perpendicular_axis(a))
    elapsed = time.perf_counter() - t0
    ok = worst_map < TOL and worst_so3 < TOL and bool(degenerate_ok) and elapsed < 1.0
    report(1, "rotation suite", ok,
           f"map err {worst_map:.1e}, SO(3) err {worst_so3:.1e}, degeneracies {'ok' if degenerate_ok else 'WRONG'}, "
           f"{elapsed:.3f} s")  # fmt: skip


def test_2_endpoint_exactness():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        src, tgt = random_pose(rng, spread=300.0), random_pose(rng, spread=300.0)
        pt = pose_transform(src, tgt)
        for i, (p, c) in enumerate(H36M17.bones):
            worst = max(worst,
                        np.abs(transform_point_on_bone(pt[i], src.joints[p], 0.0) - tgt.joints[p]).max(),
                        np.abs(transform_point_on_bone(pt[i], src.joints[c], 1.0) - tgt.joints[c]).max())  # fmt: skip
    report(2, "endpoint exactness", worst < TOL, f"worst endpoint error {worst:.1e} over 1000 pose pairs")


def test_3_rigid_nullity():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        src = random_pose(rng, spread=300.0)
        R, t = rigid_motion(rng)
        gaps = pose_transform(src, move(src, R, 100.0 * t)).gaps
        worst = max(worst, np.linalg.norm(gaps, axis=1).max())
    report(3, "rigid nullity", worst < TOL, f"max |gap| {worst:.1e} over 100 rigid motions")


def test_4_identity_preservation(body):
    rng = np.random.default_rng(4)
    n, b = body.rest_mesh.num_vertices, H36M17.num_bones
    worst = 0.0
    for k in range(100):
        pose = sample_pose(body, k)
        mesh = Mesh(body.rest_mesh.vertices + rng.normal(scale=20.0, size=(n, 3)), body.rest_mesh.faces)
        w = CalibrationWeights(rng.normal(scale=2.0, size=(n, b)), rng.normal(scale=3.0, size=(n, b)))
        worst = max(worst, np.abs(calibrate_mesh(mesh, pose, pose, w).vertices - mesh.vertices).max())
    report(4, "identity preservation", worst < TOL, f"max vertex change {worst:.1e} over 100 weight settings")


def random_tree(rng, num_bones: int) -> Skeleton:
    parents = (-1,) + tuple(int(rng.integers(0, k)) for k in range(1, num_bones + 1))
    return Skeleton(tuple(f"j{k}" for k in range(num_bones + 1)), parents, name=f"tree{num_bones}")


def test_5_gradient_check():
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(50):
        sk = random_tree(rng, int(rng.integers(1, 9)))
        n = int(rng.integers(1, 51))
        normalization = "none" if k % 5 == 4 else "softmax"
        mesh = Mesh(rng.normal(size=(n, 3)), np.zeros((0, 3), dtype=int))
        src, tgt = random_pose(rng, sk), random_pose(rng, sk)
        logits = rng.uniform(0, 1, (n, sk.num_bones)) if normalization == "none" else rng.normal(size=(n, sk.num_bones))
        w = CalibrationWeights(rng.normal(size=(n, sk.num_bones)), logits, normalization)
        gt = rng.normal(size=(n, 3))
        pt = pose_transform(src, tgt)
        _, dW, dL = loss_and_gradients(mesh, src, tgt, w, Mesh(gt, mesh.faces))

        def f_W(x):
            return oracles.mse_loss(mesh.vertices, pt, x, w.A_logits, gt, normalization)

        def f_L(x):
            return oracles.mse_loss(mesh.vertices, pt, w.W, x, gt, normalization)

        worst = max(worst,
                    oracles.relative_error(dW, oracles.central_differences(f_W, w.W)).max(),
                    oracles.relative_error(dL, oracles.central_differences(f_L, w.A_logits)).max())  # fmt: skip
    report(5, "gradient check", worst < 1e-6, f"worst relative error {worst:.1e} over 50 instances")


def test_6_synthetic_experiment():
    t0 = time.perf_counter()
    full = experiment.run.__wrapped__()
    rigid = experiment.run.__wrapped__(rigid=True)
    elapsed = time.perf_counter() - t0
    ok = full.mpve < 0.5 * full.baseline_mpve and full.mpve < rigid.mpve < full.baseline_mpve and elapsed < 120
    report(6, "synthetic calibration", ok,
           f"test MPVE baseline {full.baseline_mpve:.2f}, rigid {rigid.mpve:.2f}, full {full.mpve:.2f}; "
           f"{elapsed:.1f} s")  # fmt: skip


def test_7_noisy_targets():
    clean = experiment.run()
    small, medium = experiment.run(target_sigma=5.0), experiment.run(target_sigma=20.0)
    ok = clean.mpve < small.mpve < medium.mpve and small.mpve < clean.baseline_mpve
    report(7, "noisy-target degradation", ok,
           f"MPVE sigma 0: {clean.mpve:.2f}, 5: {small.mpve:.2f}, 20: {medium.mpve:.2f}; "
           f"baseline {clean.baseline_mpve:.2f}")  # fmt: skip


def test_8_metrics_suite():
    rng = np.random.default_rng(8)
    _, _, test = experiment.suite()
    worst = 0.0
    ordered = True
    for s in test:
        base = pa_mpjpe(s.src_pose, s.gt_pose)
        ordered &= base <= mpjpe(s.src_pose, s.gt_pose)
        R, t = rigid_motion(rng)
        moved = s.src_pose.with_joints(apply_similarity(s.src_pose.joints, rng.uniform(0.5, 2.0), R, 100.0 * t))
        worst = max(worst, abs(pa_mpjpe(moved, s.gt_pose) - base))
    gt = Pose3D(H36M17, np.zeros((17, 3)))
    off = np.zeros((17, 3))
    off[5] = (3.0, 4.0, 0.0)
    exact = mpjpe(gt.with_joints(off), gt) == 5.0 / 17.0
    ok = worst < TOL and bool(ordered) and exact
    report(8, "metrics suite", ok,
           f"PA change {worst:.1e} over 100 similarities, PA <= MPJPE {'ok' if ordered else 'VIOLATED'}, "
           f"3-4-5 {'exact' if exact else 'WRONG'}")  # fmt: skip


def test_9_serial_parallel_equivalence(body, tmp_path):
    samples = make_samples(body, 10, 9, experiment.PERTURBATION)
    write_dataset(tmp_path / "data", body, samples, seed=9, perturbation=experiment.PERTURBATION)
    data = load_dataset(tmp_path / "data")
    weights = experiment.run().weights
    gt = data.gt_poses()
    camera = Camera(rodrigues([0.2, 0.4, -0.1]), [5.0, 3.0], 1.3)
    worst = 0.0
    for s in data.samples:
        a = run_serial(s.src_mesh, data.projector, camera, SourceLifter(OracleSource(gt)), weights,
                       data.skeleton, s.sample_id)  # fmt: skip
        b = run_parallel(s.src_mesh, mesh_to_pose(data.projector, s.src_mesh, data.skeleton), OracleSource(gt),
                         weights, s.sample_id)  # fmt: skip
        worst = max(worst, np.abs(a.mesh.vertices - b.mesh.vertices).max())
    cfg = PipelineConfig(mode="parallel", target={"kind": "noisy", "sigma": 5.0, "seed": 11})
    runs = [evaluate(cfg, data).csv.encode(), evaluate(cfg, data).csv.encode(),
            evaluate(PipelineConfig(mode="parallel", target=cfg.target, jobs=4), data).csv.encode()]  # fmt: skip
    reproducible = runs[0] == runs[1] == runs[2]
    report(9, "serial/parallel equivalence", worst < TOL and reproducible,
           f"max mesh difference {worst:.1e}, eval CSV {'byte-identical' if reproducible else 'DIFFERS'}")
