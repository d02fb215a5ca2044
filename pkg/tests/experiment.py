"""The bundled synthetic calibration experiment shared by the fitting tests and acceptance."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from posecal.calibration import FitConfig, FitSample, calibrate_mesh, fit_weights, init_weights
from posecal.metrics import mpve
from posecal.pipeline import NoisySource
from posecal.synth import Perturbation, build_body, make_samples

SEED = 2024
N_TRAIN, N_TEST = 200, 100
PERTURBATION = Perturbation(joint_noise_sigma=10.0, bone_scale_range=(0.85, 1.15), rotation_noise_sigma=0.15)
FIT = FitConfig(learning_rate=0.001, epochs=90, batch_size=1, seed=0)


@lru_cache(maxsize=None)
def suite():
    body = build_body()
    train = make_samples(body, N_TRAIN, SEED, PERTURBATION)
    test = make_samples(body, N_TEST, SEED, PERTURBATION, start=N_TRAIN)
    return body, train, test


@dataclass
class Outcome:
    baseline_mpve: float
    untrained_mpve: float
    mpve: float
    history: list
    weights: object


def targets(samples, sigma: float, seed: int):
    gt = {s.sample_id: s.gt_pose for s in samples}
    if sigma == 0:
        return gt
    src = NoisySource(gt, sigma, seed)
    return {k: src(k) for k in gt}


@lru_cache(maxsize=None)
def run(rigid: bool = False, target_sigma: float = 0.0) -> Outcome:
    body, train, test = suite()
    train_tgt = targets(train, target_sigma, 1)
    test_tgt = targets(test, target_sigma, 2)
    init = init_weights(body.rest_mesh, body.rest_pose, rigid=rigid)
    data = [FitSample.build(s.src_mesh, s.src_pose, train_tgt[s.sample_id], s.gt_mesh) for s in train]
    cfg = FitConfig(FIT.learning_rate, FIT.epochs, FIT.batch_size, FIT.seed, rigid=rigid)
    weights, history = fit_weights(data, init, cfg)

    def test_mpve(w):
        return float(np.mean([mpve(calibrate_mesh(s.src_mesh, s.src_pose, test_tgt[s.sample_id], w), s.gt_mesh)
                              for s in test]))  # fmt: skip

    baseline = float(np.mean([mpve(s.src_mesh, s.gt_mesh) for s in test]))
    return Outcome(baseline, test_mpve(init), test_mpve(weights), history, weights)
