"""DDPM mathematics and the windowed conditional sampler.

The sampler works on canonicalized, [-1, 1]-normalized keypoint windows
flattened to (W, 84).  The first two frames of every window are held
fixed to the conditioning frames at every reverse step; classifier-free
guidance combines conditional and unconditional noise predictions, and
the coordinator's input gradient nudges the predicted clean window
during the final guided steps.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import canon
from .canon import ScalingFactors
from .errors import SamplingError, ScheduleError
from .motion import KeypointMotion
from .neural import (
    EMBED_DIM,
    FRAME_DIM,
    Coordinator,
    Denoiser,
    DenoiserInputs,
    build_denoiser_cache,
    denoiser_predict_cached,
    embed_instruction,
    sinusoidal_encoding,
)
from .skeleton import Skeleton

KEPT_FRAMES = 2  # continuity frames preserved at the head of each window


@dataclass(frozen=True)
class DiffusionSchedule:
    """Variance schedule: betas in (0,1) with derived cumulative alphas."""

    betas: np.ndarray
    alphas_cum: np.ndarray = field(init=False)

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        object.__setattr__(self, "betas", b)
        if b.ndim != 1 or len(b) < 1 or not ((b > 0) & (b < 1)).all():
            raise ScheduleError("betas must be a 1-D array with values in (0, 1)")
        ac = np.cumprod(1.0 - b)
        object.__setattr__(self, "alphas_cum", ac)
        if np.any(np.diff(ac) >= 0):
            raise ScheduleError("cumulative alphas must be strictly decreasing")

    @property
    def num_steps(self) -> int:
        return len(self.betas)

    def alpha_cum(self, t: int) -> float:
        """Cumulative alpha at 1-based step t."""
        self._check_step(t)
        return float(self.alphas_cum[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.num_steps:
            raise ScheduleError(f"step {t} out of range 1..{self.num_steps}")

    @staticmethod
    def linear(num_steps: int = 100, beta_start: float = 1e-4, beta_end: float = 2e-2,
               reference_steps: int = 1000) -> "DiffusionSchedule":
        """Linear schedule with endpoints quoted at reference_steps.

        The conventional (1e-4, 2e-2) endpoints assume a 1000-step chain;
        shorter chains scale the betas by reference_steps / num_steps so
        the terminal marginal still reaches (near) pure noise.
        """
        scale = reference_steps / num_steps
        sched = DiffusionSchedule(betas=np.linspace(beta_start * scale, beta_end * scale, num_steps))
        if sched.alphas_cum[-1] >= 0.05:
            raise ScheduleError(
                f"final cumulative alpha {sched.alphas_cum[-1]:.4f} >= 0.05; schedule does not reach noise"
            )
        return sched


@dataclass(frozen=True)
class GuidanceConfig:
    cfg_weight: float = 3.0  # classifier-free guidance weight w
    coordinator_strength: float = 1.0  # lambda
    coordinator_steps: int = 20  # guidance active during the final N steps

    def validate_against(self, schedule: DiffusionSchedule) -> None:
        if self.coordinator_steps > schedule.num_steps:
            raise ScheduleError(
                f"coordinator_steps {self.coordinator_steps} exceeds schedule length {schedule.num_steps}"
            )


@dataclass(frozen=True)
class SamplerConfig:
    window: int = 16
    fps: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.window < KEPT_FRAMES + 1:
            raise ScheduleError(f"window must be >= {KEPT_FRAMES + 1}, got {self.window}")


@dataclass(frozen=True)
class ConditionBundle:
    """Conditioning for one window, in normalized canonical keypoint space."""

    prev_frames: np.ndarray  # (2, 28, 3)
    original: np.ndarray  # (W, 28, 3)
    instruction_embedding: np.ndarray  # (EMBED_DIM,)
    instruction_is_null: bool
    progress: float  # in [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.progress <= 1.0:
            raise SamplingError(f"progress must be in [0, 1], got {self.progress}")
        if self.prev_frames.shape != (KEPT_FRAMES, 28, 3):
            raise SamplingError(f"prev_frames must be ({KEPT_FRAMES}, 28, 3), got {self.prev_frames.shape}")
        if self.original.ndim != 3 or self.original.shape[1:] != (28, 3):
            raise SamplingError(f"original must be (W, 28, 3), got {self.original.shape}")
        if self.instruction_embedding.shape != (EMBED_DIM,):
            raise SamplingError(f"instruction embedding must be ({EMBED_DIM},)")

    @property
    def window(self) -> int:
        return self.original.shape[0]

    @staticmethod
    def build(prev_frames: np.ndarray, original: np.ndarray, instruction: str | None, progress: float) -> "ConditionBundle":
        emb, is_null = embed_instruction(instruction)
        return ConditionBundle(
            prev_frames=prev_frames, original=original,
            instruction_embedding=emb, instruction_is_null=is_null, progress=progress,
        )


def progress_encoding(progress: float, dim: int) -> np.ndarray:
    """Sinusoidal encoding of the window-start progress indicator."""
    if not 0.0 <= progress <= 1.0:
        raise SamplingError(f"progress must be in [0, 1], got {progress}")
    return sinusoidal_encoding(progress, dim)


# --------------------------------------------------------------------------
# core DDPM pieces
# --------------------------------------------------------------------------

def q_sample(m0: np.ndarray, t: int, schedule: DiffusionSchedule, noise: np.ndarray) -> np.ndarray:
    """Closed-form forward marginal: sqrt(ac_t) m0 + sqrt(1 - ac_t) noise."""
    ac = schedule.alpha_cum(t)
    if noise.shape != m0.shape:
        raise ScheduleError(f"noise shape {noise.shape} does not match m0 {m0.shape}")
    return np.sqrt(ac) * m0 + np.sqrt(1.0 - ac) * noise


def cfg_combine(eps_cond: np.ndarray, eps_uncond: np.ndarray, w: float) -> np.ndarray:
    """Classifier-free extrapolation: (1 + w) cond - w uncond."""
    if eps_cond.shape != eps_uncond.shape:
        raise SamplingError(f"shape mismatch {eps_cond.shape} vs {eps_uncond.shape}")
    return (1.0 + w) * eps_cond - w * eps_uncond


def coordinator_guide(m0_hat: np.ndarray, coordinator: Coordinator, strength: float) -> np.ndarray:
    """Ascend the coordinator's coherence score: m0 + lambda * grad D(m0).

    m0_hat: (W, 84) normalized window.
    """
    if strength == 0.0:
        return m0_hat
    _, grad = coordinator.score_and_input_grad(m0_hat[None])
    if not np.isfinite(grad).all():
        raise SamplingError("coordinator produced a non-finite input gradient")
    return m0_hat + strength * grad[0]


# --------------------------------------------------------------------------
# training loss
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedWindow:
    """One training example: clean normalized window plus its conditioning."""

    m0: np.ndarray  # (W, 84)
    cond: ConditionBundle


def _inputs_from_conds(noisy: np.ndarray, step_frac: np.ndarray, conds: list[ConditionBundle],
                       drop_mask: np.ndarray | None = None) -> DenoiserInputs:
    B = len(conds)
    W = conds[0].window
    ori = np.stack([c.original.reshape(W, FRAME_DIM) for c in conds])
    prev = np.stack([c.prev_frames.reshape(-1) for c in conds])
    emb = np.stack([c.instruction_embedding for c in conds])
    flag = np.array([[1.0 if c.instruction_is_null else 0.0] for c in conds])
    prog = np.array([c.progress for c in conds])
    if drop_mask is not None:
        emb = np.where(drop_mask[:, None], 0.0, emb)
        flag = np.where(drop_mask[:, None], 1.0, flag)
    return DenoiserInputs(noisy=noisy, step_frac=step_frac, original=ori,
                          prev_frames=prev, instruction=emb, null_flag=flag, progress=prog)


def training_loss(denoiser: Denoiser, batch: list[PreparedWindow], schedule: DiffusionSchedule,
                  rng: np.random.Generator, p_drop: float = 0.1) -> tuple[float, dict[str, np.ndarray]]:
    """Noise-prediction loss over a batch, with exact parameter gradients.

    Per item: t ~ Uniform{1..T}; the instruction is dropped (null marker)
    with probability p_drop so the unconditional branch gets trained.
    The first two frames stay clean in the noisy input (they are the
    continuity conditioning) and are excluded from the loss, which is the
    squared noise error summed over generated frames, averaged per item.
    """
    if not batch:
        raise SamplingError("empty training batch")
    m0 = np.stack([b.m0 for b in batch])
    if np.abs(m0).max() > 3.0:
        warnings.warn(
            f"training windows look unnormalized (max |value| = {np.abs(m0).max():.2f})",
            RuntimeWarning, stacklevel=2,
        )
    B = len(batch)
    W = m0.shape[1]
    T = schedule.num_steps
    t = rng.integers(1, T + 1, size=B)
    eps = rng.standard_normal(m0.shape)
    ac = schedule.alphas_cum[t - 1][:, None, None]
    noisy = np.sqrt(ac) * m0 + np.sqrt(1.0 - ac) * eps
    noisy[:, :KEPT_FRAMES] = m0[:, :KEPT_FRAMES]
    mask = np.ones((W, 1))
    mask[:KEPT_FRAMES] = 0.0
    drop = rng.random(B) < p_drop
    inputs = _inputs_from_conds(noisy, t / T, [b.cond for b in batch], drop_mask=drop)
    return denoiser.loss_and_grads(inputs, eps, frame_mask=mask)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------

def _predict_eps(denoiser, x: np.ndarray, t: int, schedule: DiffusionSchedule,
                 cond: ConditionBundle, w: float) -> np.ndarray:
    """CFG-combined noise prediction for one window; x is (W, 84)."""
    T = schedule.num_steps
    step = np.array([t / T])
    if w == 0.0 or cond.instruction_is_null:
        inp = _inputs_from_conds(x[None], step, [cond])
        return denoiser.predict(inp)[0]
    both = _inputs_from_conds(
        np.stack([x, x]), np.array([t / T, t / T]), [cond, cond],
        drop_mask=np.array([False, True]),
    )
    eps = denoiser.predict(both)
    return cfg_combine(eps[0], eps[1], w)


def sample_window(denoiser, cond: ConditionBundle, schedule: DiffusionSchedule,
                  guidance: GuidanceConfig, rng: np.random.Generator,
                  coordinator: Coordinator | None = None,
                  call_log: list | None = None) -> np.ndarray:
    """Reverse DDPM loop over one window; returns (W, 28, 3) normalized.

    Frames 0-1 are clamped to cond.prev_frames at every step (they are
    never noised); coordinator guidance is applied to the predicted clean
    window during the final guidance.coordinator_steps steps.
    """
    guidance.validate_against(schedule)
    W = cond.window
    T = schedule.num_steps
    w = guidance.cfg_weight
    prev_flat = cond.prev_frames.reshape(KEPT_FRAMES, FRAME_DIM)
    x = rng.standard_normal((W, FRAME_DIM))
    x[:KEPT_FRAMES] = prev_flat

    # precompute the step-independent forward work once per window; stub
    # denoisers (alternate predict implementations) take the generic path
    use_cfg = w != 0.0 and not cond.instruction_is_null
    fast = isinstance(denoiser, Denoiser)
    if fast:
        B = 2 if use_cfg else 1
        conds = [cond, cond] if use_cfg else [cond]
        drop = np.array([False, True]) if use_cfg else None
        static = _inputs_from_conds(np.zeros((B, W, FRAME_DIM)), np.zeros(B), conds, drop_mask=drop)
        cache = build_denoiser_cache(denoiser.params, denoiser.cfg, static)

    for t in range(T, 0, -1):
        ac = schedule.alpha_cum(t)
        ac_prev = schedule.alpha_cum(t - 1) if t > 1 else 1.0
        beta = float(schedule.betas[t - 1])
        alpha = 1.0 - beta
        if fast:
            batch = np.broadcast_to(x, (B, W, FRAME_DIM))
            pred = denoiser_predict_cached(cache, batch, t / T)
            eps = cfg_combine(pred[0], pred[1], w) if use_cfg else pred[0]
        else:
            eps = _predict_eps(denoiser, x, t, schedule, cond, w)
        if eps.shape != x.shape:
            raise SamplingError(f"denoiser returned shape {eps.shape}, expected {x.shape}")

        guided = coordinator is not None and t <= guidance.coordinator_steps
        if call_log is not None:
            call_log.append({"t": t, "guided": guided})
        if guided:
            m0_hat = (x - np.sqrt(1.0 - ac) * eps) / np.sqrt(ac)
            m0_hat = coordinator_guide(m0_hat, coordinator, guidance.coordinator_strength)
            # posterior mean of q(x_{t-1} | x_t, m0)
            mean = (np.sqrt(ac_prev) * beta / (1.0 - ac)) * m0_hat \
                + (np.sqrt(alpha) * (1.0 - ac_prev) / (1.0 - ac)) * x
        else:
            mean = (x - beta / np.sqrt(1.0 - ac) * eps) / np.sqrt(alpha)
        if t > 1:
            x = mean + np.sqrt(beta) * rng.standard_normal(x.shape)
        else:
            x = mean
        x[:KEPT_FRAMES] = prev_flat
    if not np.isfinite(x).all():
        raise SamplingError("sampler produced non-finite values")
    return x.reshape(W, 28, 3)


# --------------------------------------------------------------------------
# auto-regressive editing
# --------------------------------------------------------------------------

@dataclass
class ModelBundle:
    """Everything needed to run an edit: networks, schedule, scaling, skeleton."""

    denoiser: Denoiser
    schedule: DiffusionSchedule
    guidance: GuidanceConfig
    scaling: ScalingFactors
    skeleton: Skeleton
    coordinator: Coordinator | None = None


def _window_starts(length: int, window: int) -> list[int]:
    starts = list(range(0, length - window + 1, window - KEPT_FRAMES))
    if starts[-1] != length - window:
        starts.append(length - window)
    return starts


def _instruction_for(instruction, start: int, length: int) -> tuple[str | None, int]:
    """Resolve a possibly time-variant instruction at a window start."""
    if instruction is None or isinstance(instruction, str):
        return instruction, 0
    spans = sorted(instruction, key=lambda e: e[0][0])
    covered = 0
    for (lo, hi), _text in spans:
        if lo > covered:
            raise SamplingError(f"instruction ranges do not cover [0, {length}): gap at frame {covered}")
        covered = max(covered, hi)
    if covered < length:
        raise SamplingError(f"instruction ranges do not cover [0, {length}): gap at frame {covered}")
    for i, ((lo, hi), text) in enumerate(spans):
        if lo <= start < hi:
            return text, i
    return spans[-1][1], len(spans) - 1


def autoregressive_edit(m_ori: KeypointMotion, instruction, bundle: ModelBundle,
                        cfg: SamplerConfig) -> tuple[KeypointMotion, list[dict]]:
    """Edit a full sequence window by window with 2-frame overlaps.

    instruction: a string (or None), or a list of ((start, end), text)
    frame-range entries for time-variant editing.  Returns the edited
    motion (same length and fps as the input) and the condition trace,
    one record per window.
    """
    W = cfg.window
    L = m_ori.num_frames
    if L < W:
        raise SamplingError(f"input has {L} frames; need at least the window size {W}")
    rng = np.random.default_rng(cfg.seed)
    scaling = bundle.scaling
    skel = bundle.skeleton

    out: KeypointMotion | None = None
    trace: list[dict] = []
    for wi, start in enumerate(_window_starts(L, W)):
        ori_slice = m_ori.crop(start, W)
        ori_canon, xf = canon.canonicalize(ori_slice, skel)
        ori_norm = scaling.normalize(ori_canon.positions)
        if out is None:
            prev_norm = ori_norm[:KEPT_FRAMES]
        else:
            prev_world = out.positions[start : start + KEPT_FRAMES]
            prev_norm = scaling.normalize(xf.invert(prev_world.reshape(-1, 3)).reshape(KEPT_FRAMES, 28, 3))
        text, instr_id = _instruction_for(instruction, start, L)
        progress = start / L
        cond = ConditionBundle.build(prev_frames=prev_norm, original=ori_norm,
                                     instruction=text, progress=progress)
        call_log: list = []
        window_norm = sample_window(bundle.denoiser, cond, bundle.schedule, bundle.guidance,
                                    rng, coordinator=bundle.coordinator, call_log=call_log)
        window_world = xf.apply(scaling.denormalize(window_norm).reshape(-1, 3)).reshape(W, 28, 3)
        segment = KeypointMotion(fps=m_ori.fps, positions=window_world)
        if out is None:
            out = segment
        elif start + W <= out.num_frames:
            # final clipped window: splice generated frames over the tail
            merged = out.positions.copy()
            merged[start + KEPT_FRAMES : start + W] = window_world[KEPT_FRAMES:]
            out = KeypointMotion(fps=m_ori.fps, positions=merged)
        else:
            head = KeypointMotion(fps=m_ori.fps, positions=out.positions[: start + KEPT_FRAMES])
            canon_seg, _ = canon.canonicalize(segment, skel)
            out = canon.stitch(head, canon_seg, skel)
        trace.append({
            "window": wi,
            "start": start,
            "progress": progress,
            "instruction": text,
            "instruction_id": instr_id,
            "guided_steps": sum(1 for c in call_log if c["guided"]),
        })
    assert out is not None and out.num_frames == L
    return out, trace


def trace_to_jsonl(trace: list[dict]) -> str:
    """Serialize a condition trace as line-delimited JSON."""
    return "\n".join(json.dumps(rec, sort_keys=True) for rec in trace) + "\n"
