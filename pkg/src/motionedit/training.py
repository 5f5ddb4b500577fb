"""Training loops for the denoiser and the coordinator.

Both loops are pure functions of (data, config, seed): batches are
indexed deterministically, the RNG is seeded once, and checkpoints are
therefore bit-reproducible across runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import canon
from .canon import ScalingFactors
from .cutmix import EditTriplet, TripletStream
from .diffusion import ConditionBundle, DiffusionSchedule, PreparedWindow, q_sample, training_loss
from .errors import TrainingError
from .motion import forward_kinematics
from .neural import FRAME_DIM, AdamW, Coordinator, Denoiser, NetConfig, TrainConfig
from .skeleton import Skeleton

DIVERGENCE_FACTOR = 10.0
SMOOTH_SPAN = 10  # moving-average span for the reported loss curve


def prepare_window(triplet: EditTriplet, skel: Skeleton, scaling: ScalingFactors,
                   progress: float = 0.0) -> PreparedWindow:
    """Turn an edit triplet into a normalized training window.

    Both motions go through forward kinematics; the edited keypoints are
    expressed in the ORIGINAL's canonical frame (the same frame the
    sampler decanonicalizes from), then normalized.  The first two edited
    frames double as the continuity conditioning (teacher forcing).
    """
    kp_ori = forward_kinematics(triplet.original, skel)
    kp_edit = forward_kinematics(triplet.edited, skel)
    ori_canon, xf = canon.canonicalize(kp_ori, skel)
    edit_canon = xf.invert(kp_edit.positions.reshape(-1, 3)).reshape(kp_edit.positions.shape)
    ori_norm = scaling.normalize(ori_canon.positions)
    m0 = scaling.normalize(edit_canon)
    W = m0.shape[0]
    cond = ConditionBundle.build(
        prev_frames=m0[:2].copy(),
        original=ori_norm,
        instruction=None if triplet.degenerate else triplet.instruction,
        progress=progress,
    )
    return PreparedWindow(m0=m0.reshape(W, FRAME_DIM), cond=cond)


def fit_scaling_from_stream(stream: TripletStream, skel: Skeleton, count: int = 64) -> ScalingFactors:
    """Percentile normalization fitted on canonical keypoints of a stream prefix."""
    clips = []
    for trip in stream.take(count):
        for pose in (trip.original, trip.edited):
            kp = forward_kinematics(pose, skel)
            clips.append(canon.canonicalize(kp, skel)[0])
    return canon.fit_scaling(clips)


def _smooth(curve: list[float], span: int = SMOOTH_SPAN) -> np.ndarray:
    c = np.asarray(curve)
    k = min(span, len(c))
    kernel = np.ones(k) / k
    return np.convolve(c, kernel, mode="valid")


@dataclass
class TrainResult:
    loss_curve: list[float]
    seconds: float

    @property
    def smoothed(self) -> np.ndarray:
        return _smooth(self.loss_curve)


def train_denoiser(stream: TripletStream, skel: Skeleton, scaling: ScalingFactors,
                   schedule: DiffusionSchedule, net_cfg: NetConfig, cfg: TrainConfig,
                   progress_for=None) -> tuple[Denoiser, TrainResult]:
    """Noise-prediction training over a deterministic triplet stream.

    Batch i consumes stream indices [i*B, (i+1)*B); progress_for(triplet)
    may supply the window-start progress indicator (default 0).  Aborts
    with a diagnostic when the loss exceeds 10x its initial value.
    """
    denoiser = Denoiser.initialize(net_cfg, cfg.seed)
    opt = AdamW(denoiser.params, cfg)
    rng = np.random.default_rng(cfg.seed)
    curve: list[float] = []
    t0 = time.monotonic()
    for step in range(cfg.steps):
        trips = stream.take(cfg.batch_size, start=step * cfg.batch_size)
        batch = [
            prepare_window(tr, skel, scaling,
                           progress=progress_for(tr) if progress_for else 0.0)
            for tr in trips
        ]
        loss, grads = training_loss(denoiser, batch, schedule, rng, p_drop=cfg.p_drop)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        curve.append(loss)
        if loss > DIVERGENCE_FACTOR * curve[0]:
            raise TrainingError(
                f"divergence at step {step}: loss {loss:.4f} exceeds 10x initial {curve[0]:.4f}"
            )
        opt.step(denoiser.params, grads)
    return denoiser, TrainResult(loss_curve=curve, seconds=time.monotonic() - t0)


def _noise_like_final_steps(window: np.ndarray, schedule: DiffusionSchedule,
                            rng: np.random.Generator, levels: int = 20) -> np.ndarray:
    """Forward-noise a window at a level drawn from the last `levels` reverse steps.

    The reverse loop runs T..1, so its last 20 steps see t in {1..20}:
    the low-noise regime where coordinator guidance is active.
    """
    t = int(rng.integers(1, min(levels, schedule.num_steps) + 1))
    return q_sample(window, t, schedule, rng.standard_normal(window.shape))


def train_coordinator(natural: list[np.ndarray], composed: list[np.ndarray],
                      schedule: DiffusionSchedule, net_cfg: NetConfig, cfg: TrainConfig,
                      holdout_fraction: float = 0.2,
                      noise_injection: bool = True) -> tuple[Coordinator, float, list[float]]:
    """Train the coherence discriminator on 50/50 natural/composed batches.

    natural and composed are normalized (W, 84) windows, labels 1 and 0.
    Inputs are noised at the levels of the final 20 schedule steps so the
    scorer stays accurate where its gradient steers sampling.  Returns
    (params, held-out accuracy, loss curve).
    """
    if len(natural) < 5 or len(composed) < 5:
        raise TrainingError("need at least 5 windows per class")
    rng = np.random.default_rng(cfg.seed)
    n_hold_n = max(1, int(len(natural) * holdout_fraction))
    n_hold_c = max(1, int(len(composed) * holdout_fraction))
    train_n, hold_n = natural[n_hold_n:], natural[:n_hold_n]
    train_c, hold_c = composed[n_hold_c:], composed[:n_hold_c]

    coord = Coordinator.initialize(net_cfg, cfg.seed + 1)
    opt = AdamW(coord.params, cfg)
    half = max(1, cfg.batch_size // 2)
    curve: list[float] = []
    for step in range(cfg.steps):
        idx_n = rng.integers(0, len(train_n), size=half)
        idx_c = rng.integers(0, len(train_c), size=half)
        windows = [train_n[i] for i in idx_n] + [train_c[i] for i in idx_c]
        labels = np.array([1.0] * half + [0.0] * half)
        if labels.sum() * 2 != len(labels):
            raise TrainingError("internal invariant: constructed batch is class-imbalanced")
        if noise_injection:
            windows = [_noise_like_final_steps(w, schedule, rng) for w in windows]
        loss, grads = coord.loss_and_grads(np.stack(windows), labels)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite coordinator loss at step {step}")
        curve.append(loss)
        if loss > DIVERGENCE_FACTOR * max(curve[0], 1e-8):
            raise TrainingError(
                f"divergence at step {step}: loss {loss:.4f} exceeds 10x initial {curve[0]:.4f}"
            )
        opt.step(coord.params, grads)

    hold = np.stack(hold_n + hold_c)
    hold_labels = np.array([1.0] * len(hold_n) + [0.0] * len(hold_c))
    pred = (coord.score(hold)[:, 0] > 0.5).astype(float)
    accuracy = float((pred == hold_labels).mean())
    return coord, accuracy, curve
