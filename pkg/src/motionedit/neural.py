"""Desk-scale trainable networks: windowed denoiser and body-part coordinator.

Both networks are small pre-LN attention stacks over per-frame tokens,
built on the in-house reverse-mode tape (autodiff.py).  Inference uses a
plain-numpy forward path for speed; the taped path provides exact
gradients for training and for coordinator input-gradient guidance.
"""

from __future__ import annotations

import functools
import hashlib
import re
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatchError, TrainingError

FRAME_DIM = 84  # 28 keypoints x 3
PREV_DIM = 2 * FRAME_DIM
EMBED_DIM = 64
ENC_DIM = 16  # sinusoidal encoding width for progress and diffusion step


# --------------------------------------------------------------------------
# deterministic instruction embedding (hashed bag of tokens)
# --------------------------------------------------------------------------

def embed_instruction(text: str | None, dim: int = EMBED_DIM) -> tuple[np.ndarray, bool]:
    """Hash an instruction into a fixed-width vector.

    Returns (vector, is_null).  None or empty text maps to the all-zero
    vector with the null flag set; the flag travels as a dedicated input
    bit so the unconditional branch is unambiguous.
    """
    if text is None or not text.strip():
        return np.zeros(dim), True
    vec = np.zeros(dim)
    for token in re.findall(r"[a-z0-9]+", text.lower()):
        digest = hashlib.sha256(token.encode()).digest()
        idx = int.from_bytes(digest[:4], "big") % dim
        sign = 1.0 if digest[4] % 2 == 0 else -1.0
        vec[idx] += sign
    n = np.linalg.norm(vec)
    if n > 0:
        vec = vec / n
    return vec, False


def sinusoidal_encoding(value: float, dim: int) -> np.ndarray:
    """Interleaved sin/cos encoding of a scalar in [0, 1].

    Frequencies fall geometrically from 1000 (a 1/1000 grid resolves
    uniquely for dim >= 8); component 2i is max_freq-Lipschitz at most.
    """
    if dim % 2 != 0:
        raise DimensionMismatchError(f"encoding dim must be even, got {dim}")
    freqs = _encoding_freqs(dim)
    enc = np.empty(dim)
    enc[0::2] = np.sin(value * freqs)
    enc[1::2] = np.cos(value * freqs)
    return enc


@functools.lru_cache(maxsize=8)
def _encoding_freqs(dim: int) -> np.ndarray:
    return 1000.0 * (10000.0 ** (-np.arange(dim // 2) * 2.0 / dim))


MAX_ENCODING_FREQ = 1000.0


@functools.lru_cache(maxsize=8)
def _pos_table(seq: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal position table (seq, dim), makes frames order-aware."""
    pos = np.arange(seq)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    table.setflags(write=False)
    return table


# --------------------------------------------------------------------------
# parameter containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NetConfig:
    """Shared architecture knobs for the denoiser and coordinator."""

    hidden: int = 128
    blocks: int = 2
    heads: int = 2
    mlp_hidden: int = 256
    window: int = 16

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise DimensionMismatchError(f"hidden {self.hidden} not divisible by heads {self.heads}")

    @staticmethod
    def desk_scale() -> "NetConfig":
        """Profile sized so one CPU sampling pass stays interactive."""
        return NetConfig(hidden=64, blocks=1, heads=2, mlp_hidden=128, window=16)


Params = dict[str, np.ndarray]

COND_IN = EMBED_DIM + 1 + ENC_DIM + ENC_DIM + PREV_DIM  # E + flag + progress + step + prev frames


def _block_param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    H, M = cfg.hidden, cfg.mlp_hidden
    shapes: dict[str, tuple[int, ...]] = {}
    for k in range(cfg.blocks):
        shapes[f"blk{k}_ln1_g"] = (H,)
        shapes[f"blk{k}_ln1_b"] = (H,)
        for nm in ("wq", "wk", "wv", "wo"):
            shapes[f"blk{k}_{nm}"] = (H, H)
            shapes[f"blk{k}_{nm}b"] = (H,)
        shapes[f"blk{k}_ln2_g"] = (H,)
        shapes[f"blk{k}_ln2_b"] = (H,)
        shapes[f"blk{k}_w1"] = (H, M)
        shapes[f"blk{k}_b1"] = (M,)
        shapes[f"blk{k}_w2"] = (M, H)
        shapes[f"blk{k}_b2"] = (H,)
    return shapes


def denoiser_param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    H = cfg.hidden
    shapes = {
        "in_w": (FRAME_DIM, H),
        "in_b": (H,),
        "ori_w": (FRAME_DIM, H),
        "ori_b": (H,),
        "cond_w": (COND_IN, H),
        "cond_b": (H,),
        "film_w": (ENC_DIM, H),
        "film_b": (H,),
        "skip_w": (FRAME_DIM, FRAME_DIM),
        "skipg_w": (ENC_DIM, 1),
        "skipg_b": (1,),
        "out_w": (H, FRAME_DIM),
        "out_b": (FRAME_DIM,),
    }
    shapes.update(_block_param_shapes(cfg))
    return shapes


def coordinator_param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    H = cfg.hidden
    shapes = {
        "in_w": (FRAME_DIM, H),
        "in_b": (H,),
        "head_w1": (H, H),
        "head_b1": (H,),
        "head_w2": (H, 1),
        "head_b2": (1,),
    }
    shapes.update(_block_param_shapes(cfg))
    return shapes


def init_params(shapes: dict[str, tuple[int, ...]], seed: int) -> Params:
    """He-style init for weights, ones for LN gains, zeros for biases."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith(("_g",)):
            params[name] = np.ones(shape)
        elif name.endswith("b") and len(shape) == 1:
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[0]
            params[name] = rng.standard_normal(shape) * np.sqrt(1.0 / fan_in)
    return params


def zero_params(shapes: dict[str, tuple[int, ...]]) -> Params:
    return {name: np.zeros(shape) for name, shape in shapes.items()}


# --------------------------------------------------------------------------
# taped forward passes
# --------------------------------------------------------------------------

def _attention_t(p: dict[str, ad.Tensor], k: int, x: ad.Tensor, cfg: NetConfig) -> ad.Tensor:
    B, S, H = x.shape
    nh = cfg.heads
    dh = H // nh
    q = ad.add(ad.matmul(x, p[f"blk{k}_wq"]), p[f"blk{k}_wqb"])
    kk = ad.add(ad.matmul(x, p[f"blk{k}_wk"]), p[f"blk{k}_wkb"])
    v = ad.add(ad.matmul(x, p[f"blk{k}_wv"]), p[f"blk{k}_wvb"])
    q = ad.swapaxes(ad.reshape(q, (B, S, nh, dh)), 1, 2)
    kk = ad.swapaxes(ad.reshape(kk, (B, S, nh, dh)), 1, 2)
    v = ad.swapaxes(ad.reshape(v, (B, S, nh, dh)), 1, 2)
    att = ad.softmax(ad.mul(ad.matmul(q, ad.swapaxes(kk, -1, -2)), 1.0 / np.sqrt(dh)), axis=-1)
    out = ad.reshape(ad.swapaxes(ad.matmul(att, v), 1, 2), (B, S, H))
    return ad.add(ad.matmul(out, p[f"blk{k}_wo"]), p[f"blk{k}_wob"])


def _blocks_t(p: dict[str, ad.Tensor], x: ad.Tensor, cfg: NetConfig) -> ad.Tensor:
    for k in range(cfg.blocks):
        h = ad.layer_norm(x, p[f"blk{k}_ln1_g"], p[f"blk{k}_ln1_b"])
        x = ad.add(x, _attention_t(p, k, h, cfg))
        h = ad.layer_norm(x, p[f"blk{k}_ln2_g"], p[f"blk{k}_ln2_b"])
        h = ad.matmul(ad.relu(ad.add(ad.matmul(h, p[f"blk{k}_w1"]), p[f"blk{k}_b1"])), p[f"blk{k}_w2"])
        x = ad.add(x, ad.add(h, p[f"blk{k}_b2"]))
    return x


def _wrap(params: Params, requires_grad: bool) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


@dataclass(frozen=True)
class DenoiserInputs:
    """One batch of denoiser conditioning, already normalized and flattened."""

    noisy: np.ndarray  # (B, W, 84)
    step_frac: np.ndarray  # (B,) t / T
    original: np.ndarray  # (B, W, 84)
    prev_frames: np.ndarray  # (B, 168)
    instruction: np.ndarray  # (B, 64)
    null_flag: np.ndarray  # (B, 1), 1.0 where the instruction is dropped
    progress: np.ndarray  # (B,)


def _cond_token_input(inp: DenoiserInputs) -> np.ndarray:
    B = inp.noisy.shape[0]
    prog = np.stack([sinusoidal_encoding(float(v), ENC_DIM) for v in inp.progress])
    step = np.stack([sinusoidal_encoding(float(v), ENC_DIM) for v in inp.step_frac])
    return np.concatenate([inp.instruction, inp.null_flag, prog, step, inp.prev_frames], axis=1).reshape(B, 1, COND_IN)


def denoiser_forward_taped(params: Params, inp: DenoiserInputs, cfg: NetConfig,
                           noisy_tensor: ad.Tensor | None = None,
                           requires_grad: bool = True) -> tuple[ad.Tensor, dict[str, ad.Tensor]]:
    """Full taped forward; returns (eps_hat tensor, wrapped params)."""
    B, W, F = inp.noisy.shape
    if F != FRAME_DIM:
        raise DimensionMismatchError(f"expected frame dim {FRAME_DIM}, got {F}")
    p = _wrap(params, requires_grad)
    x = noisy_tensor if noisy_tensor is not None else ad.Tensor(inp.noisy)
    h = ad.add(ad.matmul(x, p["in_w"]), p["in_b"])
    ori = ad.add(ad.matmul(ad.Tensor(inp.original), p["ori_w"]), p["ori_b"])
    h = ad.add(h, ori)  # frame-wise addition of the reference encoding
    step = np.stack([sinusoidal_encoding(float(v), ENC_DIM) for v in inp.step_frac])
    s = ad.add(ad.matmul(ad.Tensor(step), p["film_w"]), p["film_b"])
    # per-token gate on the noise level: frame features need multiplicative
    # access to t, which attention alone cannot provide
    h = ad.add(h, ad.mul(h, ad.reshape(s, (B, 1, cfg.hidden))))
    cond = ad.add(ad.matmul(ad.Tensor(_cond_token_input(inp)), p["cond_w"]), p["cond_b"])
    tokens = ad.add(ad.concat([cond, h], axis=1), _pos_table(W + 1, cfg.hidden))
    tokens = _blocks_t(p, tokens, cfg)
    body = tokens[:, 1:, :]
    eps = ad.add(ad.matmul(body, p["out_w"]), p["out_b"])
    # full-rank noisy-to-output path: the 64-wide stream cannot carry an
    # 84-dim isotropic noise estimate; gate scales it with the noise level
    g = ad.add(ad.matmul(ad.Tensor(step), p["skipg_w"]), p["skipg_b"])
    skip = ad.mul(ad.matmul(x, p["skip_w"]), ad.add(ad.reshape(g, (B, 1, 1)), 1.0))
    return ad.add(eps, skip), p


def coordinator_forward_taped(params: Params, window: np.ndarray, cfg: NetConfig,
                              window_tensor: ad.Tensor | None = None,
                              requires_grad: bool = True) -> tuple[ad.Tensor, ad.Tensor, dict[str, ad.Tensor]]:
    """Returns (score in (0,1), logit, wrapped params).  window: (B, W, 84)."""
    p = _wrap(params, requires_grad)
    x = window_tensor if window_tensor is not None else ad.Tensor(window)
    h = ad.add(ad.matmul(x, p["in_w"]), p["in_b"])
    h = ad.add(h, _pos_table(window.shape[1], cfg.hidden))
    h = _blocks_t(p, h, cfg)
    pooled = ad.mean(h, axis=1)  # temporal mean pool
    hid = ad.relu(ad.add(ad.matmul(pooled, p["head_w1"]), p["head_b1"]))
    logit = ad.add(ad.matmul(hid, p["head_w2"]), p["head_b2"])
    return ad.sigmoid(logit), logit, p


# --------------------------------------------------------------------------
# fast (untaped) forward for sampling
# --------------------------------------------------------------------------

def _attention_np(params: Params, k: int, x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    B, S, H = x.shape
    nh = cfg.heads
    dh = H // nh
    q = (x @ params[f"blk{k}_wq"] + params[f"blk{k}_wqb"]).reshape(B, S, nh, dh).swapaxes(1, 2)
    kk = (x @ params[f"blk{k}_wk"] + params[f"blk{k}_wkb"]).reshape(B, S, nh, dh).swapaxes(1, 2)
    v = (x @ params[f"blk{k}_wv"] + params[f"blk{k}_wvb"]).reshape(B, S, nh, dh).swapaxes(1, 2)
    scores = q @ kk.swapaxes(-1, -2) / np.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    att = e / e.sum(axis=-1, keepdims=True)
    out = (att @ v).swapaxes(1, 2).reshape(B, S, H)
    return out @ params[f"blk{k}_wo"] + params[f"blk{k}_wob"]


def _layer_norm_np(x: np.ndarray, g: np.ndarray, b: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    c = x - mu
    var = (c * c).mean(axis=-1, keepdims=True)
    return c / np.sqrt(var + eps) * g + b


def _blocks_np(params: Params, x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    for k in range(cfg.blocks):
        h = _layer_norm_np(x, params[f"blk{k}_ln1_g"], params[f"blk{k}_ln1_b"])
        x = x + _attention_np(params, k, h, cfg)
        h = _layer_norm_np(x, params[f"blk{k}_ln2_g"], params[f"blk{k}_ln2_b"])
        h = np.maximum(h @ params[f"blk{k}_w1"] + params[f"blk{k}_b1"], 0.0) @ params[f"blk{k}_w2"]
        x = x + h + params[f"blk{k}_b2"]
    return x


def denoiser_forward_np(params: Params, inp: DenoiserInputs, cfg: NetConfig) -> np.ndarray:
    h = inp.noisy @ params["in_w"] + params["in_b"]
    h = h + inp.original @ params["ori_w"] + params["ori_b"]
    step = np.stack([sinusoidal_encoding(float(v), ENC_DIM) for v in inp.step_frac])
    s = step @ params["film_w"] + params["film_b"]
    h = h * (1.0 + s[:, None, :])
    cond = _cond_token_input(inp) @ params["cond_w"] + params["cond_b"]
    tokens = np.concatenate([cond, h], axis=1) + _pos_table(h.shape[1] + 1, cfg.hidden)
    tokens = _blocks_np(params, tokens, cfg)
    g = step @ params["skipg_w"] + params["skipg_b"]
    skip = (inp.noisy @ params["skip_w"]) * (1.0 + g[:, :, None])
    return tokens[:, 1:, :] @ params["out_w"] + params["out_b"] + skip


def _normalize_np(x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Layer norm without the affine part (folded into the next matmul)."""
    c = x - x.mean(axis=-1, keepdims=True)
    return c / np.sqrt((c * c).mean(axis=-1, keepdims=True) + eps)


def _blocks_np_fused(fused: dict, x: np.ndarray, cfg: NetConfig) -> np.ndarray:
    """Same math as _blocks_np with QKV fused and layer-norm affines,
    attention scale, and biases pre-folded into the weight matrices."""
    nh = cfg.heads
    B, S, H = x.shape
    dh = H // nh
    for k in range(cfg.blocks):
        h = _normalize_np(x).reshape(B * S, H)
        qkv = (h @ fused[f"blk{k}_wqkv_f"] + fused[f"blk{k}_bqkv_f"]).reshape(B, S, 3 * H)
        q, kk, v = (qkv[..., i * H : (i + 1) * H].reshape(B, S, nh, dh).swapaxes(1, 2)
                    for i in range(3))
        scores = q @ kk.swapaxes(-1, -2)
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        att = e / e.sum(axis=-1, keepdims=True)
        out = (att @ v).swapaxes(1, 2).reshape(B * S, H)
        x = x + (out @ fused[f"blk{k}_wo"] + fused[f"blk{k}_wob"]).reshape(B, S, H)
        h = _normalize_np(x).reshape(B * S, H)
        h = np.maximum(h @ fused[f"blk{k}_w1_f"] + fused[f"blk{k}_b1_f"], 0.0) @ fused[f"blk{k}_w2"]
        x = x + h.reshape(B, S, H) + fused[f"blk{k}_b2"]
    return x


def build_denoiser_cache(params: Params, cfg: NetConfig, inp_static: DenoiserInputs) -> dict:
    """Precompute everything in a sampling loop that does not depend on t.

    inp_static supplies original/prev/instruction/progress for the window
    (its noisy and step_frac fields are ignored).  Same math as the plain
    forward; only redundant recomputation is removed.
    """
    cache: dict = {"cfg": cfg}
    for name, arr in params.items():
        cache[name] = arr
    H = cfg.hidden
    scale = 1.0 / np.sqrt(H // cfg.heads)
    for k in range(cfg.blocks):
        wqkv = np.concatenate(
            [params[f"blk{k}_wq"] * scale, params[f"blk{k}_wk"], params[f"blk{k}_wv"]], axis=1)
        bqkv = np.concatenate(
            [params[f"blk{k}_wqb"] * scale, params[f"blk{k}_wkb"], params[f"blk{k}_wvb"]])
        # fold the layer-norm affine into the projection that follows it
        g1, b1 = params[f"blk{k}_ln1_g"], params[f"blk{k}_ln1_b"]
        cache[f"blk{k}_wqkv_f"] = g1[:, None] * wqkv
        cache[f"blk{k}_bqkv_f"] = b1 @ wqkv + bqkv
        g2, b2 = params[f"blk{k}_ln2_g"], params[f"blk{k}_ln2_b"]
        cache[f"blk{k}_w1_f"] = g2[:, None] * params[f"blk{k}_w1"]
        cache[f"blk{k}_b1_f"] = b2 @ params[f"blk{k}_w1"] + params[f"blk{k}_b1"]
    cache["in_skip_w"] = np.concatenate([params["in_w"], params["skip_w"]], axis=1)
    cache["ori_h"] = inp_static.original @ params["ori_w"] + params["ori_b"] + params["in_b"]

    B = inp_static.original.shape[0]
    prog = np.stack([sinusoidal_encoding(float(v), ENC_DIM) for v in inp_static.progress])
    zeros_step = np.zeros((B, ENC_DIM))
    static_tok = np.concatenate(
        [inp_static.instruction, inp_static.null_flag, prog, zeros_step, inp_static.prev_frames], axis=1)
    cache["cond_static"] = static_tok.reshape(B, 1, COND_IN) @ params["cond_w"] + params["cond_b"]
    step_rows = EMBED_DIM + 1 + ENC_DIM
    cache["cond_step_w"] = params["cond_w"][step_rows : step_rows + ENC_DIM]
    W = inp_static.original.shape[1]
    pos = _pos_table(W + 1, cfg.hidden)
    cache["pos_cond"] = pos[0]
    cache["pos_frames"] = pos[1:]
    return cache


def denoiser_predict_cached(cache: dict, noisy: np.ndarray, step_frac: float) -> np.ndarray:
    """Fast per-step prediction; noisy is (B, W, 84), one shared step."""
    cfg = cache["cfg"]
    B, W, _ = noisy.shape
    H = cfg.hidden
    both = np.ascontiguousarray(noisy).reshape(B * W, FRAME_DIM) @ cache["in_skip_w"]
    step_enc = sinusoidal_encoding(step_frac, ENC_DIM)
    film = 1.0 + step_enc @ cache["film_w"] + cache["film_b"]
    h = (both[:, :H].reshape(B, W, H) + cache["ori_h"]) * film + cache["pos_frames"]
    cond = cache["cond_static"] + (step_enc @ cache["cond_step_w"] + cache["pos_cond"])
    tokens = _blocks_np_fused(cache, np.concatenate([cond, h], axis=1), cfg)
    g = (step_enc @ cache["skipg_w"] + cache["skipg_b"]).item()
    out = tokens[:, 1:, :].reshape(B * W, H) @ cache["out_w"]
    return out.reshape(B, W, FRAME_DIM) + cache["out_b"] + both[:, H:].reshape(B, W, FRAME_DIM) * (1.0 + g)


def coordinator_forward_np(params: Params, window: np.ndarray, cfg: NetConfig) -> np.ndarray:
    h = window @ params["in_w"] + params["in_b"] + _pos_table(window.shape[1], cfg.hidden)
    h = _blocks_np(params, h, cfg)
    pooled = h.mean(axis=1)
    hid = np.maximum(pooled @ params["head_w1"] + params["head_b1"], 0.0)
    logit = hid @ params["head_w2"] + params["head_b2"]
    return 1.0 / (1.0 + np.exp(-logit))


# --------------------------------------------------------------------------
# model wrappers
# --------------------------------------------------------------------------

class Denoiser:
    """Noise-prediction network over W-frame keypoint windows."""

    def __init__(self, params: Params, cfg: NetConfig):
        self.params = params
        self.cfg = cfg

    @staticmethod
    def initialize(cfg: NetConfig, seed: int) -> "Denoiser":
        return Denoiser(init_params(denoiser_param_shapes(cfg), seed), cfg)

    def predict(self, inp: DenoiserInputs) -> np.ndarray:
        """Fast inference path (no gradients)."""
        return denoiser_forward_np(self.params, inp, self.cfg)

    def loss_and_grads(self, inp: DenoiserInputs, eps_true: np.ndarray,
                       frame_mask: np.ndarray | None = None) -> tuple[float, Params]:
        """Squared error between predicted and true noise, per batch item.

        frame_mask (W, 1), when given, restricts the loss to the frames it
        marks with 1 (the generated part of the window); loss is summed
        over window elements and averaged over the batch.
        """
        B = inp.noisy.shape[0]
        eps_hat, wrapped = denoiser_forward_taped(self.params, inp, self.cfg)
        diff = ad.add(eps_hat, ad.mul(ad.Tensor(eps_true), -1.0))
        sq = ad.mul(diff, diff)
        if frame_mask is not None:
            sq = ad.mul(sq, frame_mask)
        loss = ad.mul(ad.sum_(sq), 1.0 / B)
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in wrapped.items()}
        return float(loss.data), grads


class Coordinator:
    """Coherence discriminator: score near 1 for uncomposited windows."""

    def __init__(self, params: Params, cfg: NetConfig):
        self.params = params
        self.cfg = cfg

    @staticmethod
    def initialize(cfg: NetConfig, seed: int) -> "Coordinator":
        return Coordinator(init_params(coordinator_param_shapes(cfg), seed), cfg)

    def score(self, window: np.ndarray) -> np.ndarray:
        """window: (B, W, 84) -> (B, 1) scores in (0, 1)."""
        return coordinator_forward_np(self.params, window, self.cfg)

    def score_and_input_grad(self, window: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of the score w.r.t. the input window (summed over batch)."""
        x = ad.Tensor(window, requires_grad=True)
        score, _, _ = coordinator_forward_taped(self.params, window, self.cfg,
                                                window_tensor=x, requires_grad=False)
        ad.sum_(score).backward()
        return score.data, x.grad

    def loss_and_grads(self, window: np.ndarray, labels: np.ndarray) -> tuple[float, Params]:
        """Binary cross-entropy on the coherence logit, labels in {0, 1}."""
        _, logit, wrapped = coordinator_forward_taped(self.params, window, self.cfg)
        y = labels.reshape(logit.shape)
        # numerically stable BCE-with-logits: max(z,0) - z*y + log(1+exp(-|z|))
        z = logit
        pos = ad.relu(z)
        absz = ad.add(ad.relu(z), ad.relu(ad.mul(z, -1.0)))
        softplus = ad.log(ad.add(ad.exp(ad.mul(absz, -1.0)), 1.0))
        loss = ad.mean(ad.add(ad.add(pos, ad.mul(z, -y)), softplus))
        loss.backward()
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in wrapped.items()}
        return float(loss.data), grads


# --------------------------------------------------------------------------
# optimizer and training loops
# --------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    steps: int = 500
    seed: int = 0
    p_drop: float = 0.1  # instruction dropout for classifier-free guidance
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        # lr = 0 is permitted: it freezes parameters, which tests rely on
        if self.learning_rate < 0:
            raise TrainingError(f"learning rate must be non-negative, got {self.learning_rate}")


class AdamW:
    """Adam with decoupled weight decay over a parameter dict."""

    def __init__(self, params: Params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Params, grads: Params) -> None:
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for k in params:
            g = grads[k]
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.eps)
            params[k] = params[k] - c.learning_rate * (update + c.weight_decay * params[k])
