import numpy as np
import pytest

from posecal.errors import DegenerateConfiguration, SkeletonMismatch
from posecal.geometry import random_rotation
from posecal.mesh import Mesh
from posecal.metrics import (
    MetricReport,
    apply_similarity,
    mpjpe,
    mpve,
    pa_mpjpe,
    procrustes_align,
    report_csv,
    sample_metrics,
)
from posecal.skeleton import SMPL24

from .helpers import random_pose

NOFACES = np.zeros((0, 3), dtype=int)


def test_mpjpe_examples(rng):
    gt = random_pose(rng)
    assert mpjpe(gt, gt) == 0.0
    j = gt.joints.copy()
    j[4] += [3.0, 4.0, 0.0]
    assert mpjpe(gt.with_joints(j), gt) == pytest.approx(5 / 17, abs=1e-15)


def test_mpjpe_matches_loop(rng):
    a, b = random_pose(rng), random_pose(rng)
    total = 0.0
    for k in range(17):
        total += sum((a.joints[k, d] - b.joints[k, d]) ** 2 for d in range(3)) ** 0.5
    assert mpjpe(a, b) == pytest.approx(total / 17, abs=1e-12)


def test_skeleton_mismatch(rng):
    with pytest.raises(SkeletonMismatch):
        mpjpe(random_pose(rng), random_pose(rng, SMPL24))


def test_procrustes_recovers_exact_similarity(rng):
    X = rng.normal(size=(17, 3))
    R0 = random_rotation(rng)
    t0 = rng.normal(size=3)
    Y = 2.0 * X @ R0.T + t0
    s, R, t = procrustes_align(X, Y)
    assert s == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_allclose(R, R0, atol=1e-9)
    np.testing.assert_allclose(t, t0, atol=1e-9)
    np.testing.assert_allclose(apply_similarity(X, s, R, t), Y, atol=1e-9)


def test_procrustes_identity(rng):
    X = rng.normal(size=(17, 3))
    s, R, t = procrustes_align(X, X)
    assert s == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(t, 0, atol=1e-9)


def test_procrustes_excludes_reflections(rng):
    X = rng.normal(size=(17, 3))
    Y = X * [1, 1, -1]
    _, R, _ = procrustes_align(X, Y)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


def test_procrustes_beats_random_search(rng):
    X = rng.normal(size=(17, 3))
    Y = 1.3 * X @ random_rotation(rng).T + rng.normal(size=3) + rng.normal(scale=0.2, size=(17, 3))

    def residual(s, R, t):
        return np.sum((apply_similarity(X, s, R, t) - Y) ** 2)

    best = residual(*procrustes_align(X, Y))
    s_opt, R_opt, t_opt = procrustes_align(X, Y)
    for _ in range(1000):
        # random similarity transforms, half drawn near the optimum to make the bound meaningful
        if rng.random() < 0.5:
            cand = (rng.uniform(0.2, 3.0), random_rotation(rng), rng.normal(scale=2.0, size=3))
        else:
            cand = (
                s_opt * (1 + rng.normal(scale=0.01)),
                random_rotation(rng, 0.02) @ R_opt,
                t_opt + rng.normal(scale=0.01, size=3),
            )
        assert best <= residual(*cand) + 1e-12


def test_procrustes_degenerate():
    with pytest.raises(DegenerateConfiguration):
        procrustes_align(np.ones((17, 3)), np.arange(51.0).reshape(17, 3))
    collinear = np.outer(np.arange(17.0), [1.0, 2.0, 0.5])
    with pytest.raises(DegenerateConfiguration):
        procrustes_align(collinear, collinear)
    with pytest.raises(DegenerateConfiguration):
        procrustes_align(np.eye(3)[:2], np.eye(3)[:2])


def test_pa_mpjpe_zero_for_similar(rng):
    gt = random_pose(rng)
    s, R, t = 0.7, random_rotation(rng), rng.normal(size=3)
    pred = gt.with_joints(apply_similarity(gt.joints, s, R, t))
    assert pa_mpjpe(pred, gt) < 1e-9
    assert mpjpe(pred, gt) > 0.1


def test_pa_mpjpe_invariant_and_bounded(rng):
    for _ in range(50):
        gt = random_pose(rng)
        pred = gt.with_joints(gt.joints + rng.normal(scale=0.3, size=(17, 3)))
        base = pa_mpjpe(pred, gt)
        assert base <= mpjpe(pred, gt) + 1e-9
        moved = pred.with_joints(apply_similarity(pred.joints, rng.uniform(0.5, 2), random_rotation(rng), rng.normal(size=3)))
        assert abs(pa_mpjpe(moved, gt) - base) < 1e-9


def test_mpve_symmetric_and_zero(rng):
    a = Mesh(rng.normal(size=(30, 3)), NOFACES)
    b = Mesh(rng.normal(size=(30, 3)), NOFACES)
    assert mpve(a, a) == 0.0
    assert mpve(a, b) == mpve(b, a)


def test_report_mean_and_csv(rng):
    rows = []
    for k in range(5):
        gt = random_pose(rng)
        pred = gt.with_joints(gt.joints + rng.normal(scale=0.1, size=(17, 3)))
        m1 = Mesh(rng.normal(size=(8, 3)), NOFACES)
        m2 = Mesh(rng.normal(size=(8, 3)), NOFACES)
        rows.append(sample_metrics(f"s{k}", pred, gt, m1, m2))
    report = MetricReport.from_samples(rows)
    assert report.sample_count == 5
    assert report.mpve == pytest.approx(np.mean([r.mpve for r in rows]), abs=1e-15)
    assert report.pa_mpjpe == pytest.approx(np.mean([r.pa_mpjpe for r in rows]), abs=1e-15)
    text = report_csv(report, report, "m")
    lines = text.splitlines()
    assert lines[0].startswith("id,baseline_mpjpe") and lines[-1].startswith("mean,")
    assert len(lines) == 7 and all(line.endswith(",m") for line in lines[1:])
    with pytest.raises(ValueError):
        MetricReport.from_samples([])
