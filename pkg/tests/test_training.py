"""Training loops: determinism, divergence handling, data preparation."""

import numpy as np
import pytest

from motionedit.canon import canonicalize
from motionedit.diffusion import DiffusionSchedule
from motionedit.errors import TrainingError
from motionedit.motion import forward_kinematics
from motionedit.neural import FRAME_DIM, Denoiser, NetConfig, TrainConfig
from motionedit.training import (
    TrainResult,
    fit_scaling_from_stream,
    prepare_window,
    train_coordinator,
    train_denoiser,
)

TINY = NetConfig(hidden=16, blocks=1, heads=2, mlp_hidden=24, window=16)
SCHED = DiffusionSchedule.linear()


class TestPrepareWindow:
    def test_shapes_and_conditioning(self, skel, tiny_stream, tiny_scaling):
        trip = tiny_stream[0]
        pw = prepare_window(trip, skel, tiny_scaling, progress=0.5)
        assert pw.m0.shape == (16, FRAME_DIM)
        assert pw.cond.original.shape == (16, 28, 3)
        assert pw.cond.progress == 0.5
        np.testing.assert_array_equal(pw.cond.prev_frames.reshape(2, FRAME_DIM), pw.m0[:2])
        assert not pw.cond.instruction_is_null

    def test_values_roughly_normalized(self, skel, tiny_stream, tiny_scaling):
        for i in range(3):
            pw = prepare_window(tiny_stream[i], skel, tiny_scaling)
            assert np.abs(pw.m0).max() < 3.0

    def test_original_is_its_own_canonical_normalization(self, skel, tiny_stream, tiny_scaling):
        trip = tiny_stream[1]
        pw = prepare_window(trip, skel, tiny_scaling)
        kp = forward_kinematics(trip.original, skel)
        ori_canon, _ = canonicalize(kp, skel)
        np.testing.assert_allclose(pw.cond.original,
                                   tiny_scaling.normalize(ori_canon.positions), atol=1e-12)

    def test_degenerate_triplet_goes_unconditional(self, skel, tiny_stream, tiny_scaling):
        import dataclasses

        trip = dataclasses.replace(tiny_stream[0], degenerate=True)
        pw = prepare_window(trip, skel, tiny_scaling)
        assert pw.cond.instruction_is_null


class TestFitScaling:
    def test_band_covers_stream(self, skel, tiny_stream, tiny_scaling):
        # fresh windows from the same stream should mostly fall inside [-1, 1]
        vals = []
        for trip in tiny_stream.take(8, start=32):
            pw = prepare_window(trip, skel, tiny_scaling)
            vals.append(pw.m0)
        v = np.concatenate(vals)
        assert (np.abs(v) <= 1.5).mean() > 0.99

    def test_deterministic(self, skel, tiny_stream):
        a = fit_scaling_from_stream(tiny_stream, skel, count=8)
        b = fit_scaling_from_stream(tiny_stream, skel, count=8)
        np.testing.assert_array_equal(a.channel_min, b.channel_min)
        np.testing.assert_array_equal(a.channel_max, b.channel_max)


class TestTrainDenoiser:
    def test_bit_identical_across_runs(self, skel, tiny_stream, tiny_scaling):
        cfg = TrainConfig(learning_rate=1e-3, steps=3, batch_size=2, seed=0)
        d1, r1 = train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg)
        d2, r2 = train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg)
        assert sorted(d1.params) == sorted(d2.params)
        for k in d1.params:
            np.testing.assert_array_equal(d1.params[k], d2.params[k])
        assert r1.loss_curve == r2.loss_curve

    def test_zero_lr_freezes_parameters(self, skel, tiny_stream, tiny_scaling):
        cfg = TrainConfig(learning_rate=0.0, steps=2, batch_size=2, seed=0)
        trained, _ = train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg)
        init = Denoiser.initialize(TINY, 0)
        for k in init.params:
            np.testing.assert_array_equal(trained.params[k], init.params[k])

    def test_loss_decreases(self, skel, tiny_stream, tiny_scaling):
        cfg = TrainConfig(learning_rate=3e-3, steps=30, batch_size=4, seed=0)
        _, result = train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg)
        sm = result.smoothed
        assert sm[-1] < sm[0]

    def test_divergence_aborts(self, skel, tiny_stream, tiny_scaling):
        # an absurd learning rate must trip the 10x-initial-loss guard
        cfg = TrainConfig(learning_rate=1e3, steps=50, batch_size=2, seed=0)
        with pytest.raises(TrainingError, match="divergence|non-finite"):
            train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg)

    def test_progress_hook_used(self, skel, tiny_stream, tiny_scaling):
        seen = []

        def hook(trip):
            seen.append(trip.instruction)
            return 0.25

        cfg = TrainConfig(learning_rate=1e-3, steps=1, batch_size=2, seed=0)
        train_denoiser(tiny_stream, skel, tiny_scaling, SCHED, TINY, cfg, progress_for=hook)
        assert len(seen) == 2


def _coordinator_data(n=20, window=8, seed=0):
    """Natural: channel halves oscillate in phase.  Composed: in anti-phase."""
    r = np.random.default_rng(seed)
    t = np.arange(window)[:, None]
    half = FRAME_DIM // 2
    natural, composed = [], []
    for _ in range(n):
        a = r.uniform(0.3, 1.0, half) * np.sin(0.4 * t + r.uniform(0, 2 * np.pi, half))
        natural.append(np.concatenate([a, a], axis=1))
        b = r.uniform(0.3, 1.0, half) * np.sin(0.4 * t + r.uniform(0, 2 * np.pi, half))
        composed.append(np.concatenate([b, -b], axis=1))
    return natural, composed


class TestTrainCoordinator:
    def test_learns_phase_coherence(self):
        natural, composed = _coordinator_data(n=400, window=8)
        cfg = TrainConfig(learning_rate=1e-2, steps=400, batch_size=16, seed=0)
        net = NetConfig(hidden=32, blocks=1, heads=2, mlp_hidden=64, window=8)
        coord, acc, curve = train_coordinator(natural, composed, SCHED, net, cfg,
                                              noise_injection=False)
        assert acc >= 0.9
        assert curve[-1] < curve[0]

    def test_bit_identical_across_runs(self):
        natural, composed = _coordinator_data(n=12, window=6)
        cfg = TrainConfig(learning_rate=1e-3, steps=4, batch_size=4, seed=1)
        net = NetConfig(hidden=8, blocks=1, heads=2, mlp_hidden=12, window=6)
        c1, a1, _ = train_coordinator(natural, composed, SCHED, net, cfg)
        c2, a2, _ = train_coordinator(natural, composed, SCHED, net, cfg)
        assert a1 == a2
        for k in c1.params:
            np.testing.assert_array_equal(c1.params[k], c2.params[k])

    def test_too_few_windows_rejected(self):
        natural, composed = _coordinator_data(n=3, window=6)
        cfg = TrainConfig(steps=1)
        net = NetConfig(hidden=8, blocks=1, heads=2, mlp_hidden=12, window=6)
        with pytest.raises(TrainingError):
            train_coordinator(natural, composed, SCHED, net, cfg)

    def test_noise_injection_changes_training(self):
        natural, composed = _coordinator_data(n=12, window=6)
        cfg = TrainConfig(learning_rate=1e-3, steps=3, batch_size=4, seed=2)
        net = NetConfig(hidden=8, blocks=1, heads=2, mlp_hidden=12, window=6)
        c1, _, curve1 = train_coordinator(natural, composed, SCHED, net, cfg, noise_injection=True)
        c2, _, curve2 = train_coordinator(natural, composed, SCHED, net, cfg, noise_injection=False)
        assert curve1 != curve2


class TestTrainResult:
    def test_smoothed_shorter_than_curve(self):
        r = TrainResult(loss_curve=[5.0, 4.0, 3.0, 2.0], seconds=0.1)
        sm = r.smoothed
        assert len(sm) == 1  # span capped at curve length
        assert sm[0] == pytest.approx(3.5)
