"""Online synthesis of training triplets by compositing body parts.

Semantic edits: a source clip from a large unannotated base receives the
annotated body part of a target clip; the annotation text becomes the
instruction.  Style edits: the non-edited part of a known pair is
substituted with an external clip so the pair generalizes.  The stream
is a pure function of (seed, index) and safe to shard across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blending import BlendSpec, BodyMask, blend
from .errors import DatasetError, MotionValidationError
from .motion import PoseMotion


@dataclass(frozen=True)
class MaskAnnotation:
    mask: BodyMask
    instruction: str

    def __post_init__(self):
        if not self.instruction.strip():
            raise DatasetError("annotation instruction must be non-empty")


@dataclass(frozen=True)
class AnnotatedMotion:
    """A motion with one or more (mask, instruction) annotations.

    fixed_source, when present, is the designated partner used for
    non-composited (fixed-pair) triplets.
    """

    motion: PoseMotion
    masks: tuple[MaskAnnotation, ...]
    motion_id: str = ""
    fixed_source: PoseMotion | None = None

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        if not self.masks:
            raise DatasetError(f"annotated motion {self.motion_id!r} needs at least one mask annotation")


@dataclass(frozen=True)
class EditTriplet:
    original: PoseMotion
    edited: PoseMotion
    instruction: str
    provenance: dict = field(default_factory=dict)
    degenerate: bool = False

    def __post_init__(self):
        if self.original.num_frames != self.edited.num_frames or self.original.fps != self.edited.fps:
            raise MotionValidationError("triplet original/edited must share length and fps")


@dataclass(frozen=True)
class CutmixConfig:
    ratio: float = 1.0  # fraction of emitted triplets that are composited
    alpha_low: float = 0.0
    alpha_high: float = 1.0
    window_frames: int = 16
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise DatasetError(f"ratio must be in [0, 1], got {self.ratio}")
        if not 0.0 <= self.alpha_low <= self.alpha_high <= 1.0:
            raise DatasetError(f"alpha bounds must satisfy 0 <= low <= high <= 1, got ({self.alpha_low}, {self.alpha_high})")


def _crop_random(motion: PoseMotion, length: int, rng: np.random.Generator) -> tuple[PoseMotion, int]:
    if motion.num_frames < length:
        raise DatasetError(f"motion has {motion.num_frames} frames; need at least {length}")
    start = int(rng.integers(0, motion.num_frames - length + 1))
    return motion.crop(start, length), start


def compose_semantic(src: PoseMotion, tgt: AnnotatedMotion, mask_index: int, alpha: float,
                     rng: np.random.Generator, window_frames: int,
                     src_id: str = "", composited: bool = True) -> EditTriplet:
    """Semantic-edit triplet: original = src crop, edited = blend of crops."""
    if not 0 <= mask_index < len(tgt.masks):
        raise DatasetError(f"mask index {mask_index} out of range for {len(tgt.masks)} annotations")
    ann = tgt.masks[mask_index]
    src_crop, src_start = _crop_random(src, window_frames, rng)
    tgt_crop, tgt_start = _crop_random(tgt.motion, window_frames, rng)
    edited = blend(src_crop, tgt_crop, BlendSpec(mask=ann.mask, alpha=alpha))
    return EditTriplet(
        original=src_crop,
        edited=edited,
        instruction=ann.instruction,
        provenance={
            "kind": "semantic",
            "composited": composited,
            "src_id": src_id,
            "tgt_id": tgt.motion_id,
            "mask": ann.mask.to_dict(),
            "mask_index": mask_index,
            "alpha": alpha,
            "src_start": src_start,
            "tgt_start": tgt_start,
        },
        degenerate=ann.mask.is_empty(),
    )


def compose_style(src: PoseMotion, tgt: PoseMotion, instruction: str, edited_part_mask: BodyMask,
                  ext: PoseMotion, rng: np.random.Generator, window_frames: int,
                  pair_id: str = "", ext_id: str = "") -> EditTriplet:
    """Style-edit triplet: the non-edited part of both sides is replaced by ext.

    original = blend(ext, src, mask); edited = blend(ext, tgt, mask).
    Substitution uses the hard mask exactly (no interpolation).
    """
    if src.num_frames != tgt.num_frames or src.fps != tgt.fps:
        raise DatasetError("style pair motions must be aligned in length and fps")
    rng_crop = rng
    src_crop, pair_start = _crop_random(src, window_frames, rng_crop)
    tgt_crop = tgt.crop(pair_start, window_frames)
    ext_crop, ext_start = _crop_random(ext, window_frames, rng_crop)
    spec = BlendSpec(mask=edited_part_mask, alpha=1.0)
    original = blend(ext_crop, src_crop, spec)
    edited = blend(ext_crop, tgt_crop, spec)
    return EditTriplet(
        original=original,
        edited=edited,
        instruction=instruction,
        provenance={
            "kind": "style",
            "composited": True,
            "pair_id": pair_id,
            "ext_id": ext_id,
            "mask": edited_part_mask.to_dict(),
            "pair_start": pair_start,
            "ext_start": ext_start,
        },
        degenerate=edited_part_mask.is_empty(),
    )


class TripletStream:
    """Infinite, seedable triplet sequence; item i depends only on (seed, i).

    A `ratio` fraction of draws composite a random base clip with a random
    annotated clip; the remainder emit the annotated clip's fixed pair.
    """

    def __init__(self, annotated: list[AnnotatedMotion], base: list[tuple[str, PoseMotion]],
                 cfg: CutmixConfig):
        if not annotated:
            raise DatasetError("annotated dataset is empty")
        if not base and cfg.ratio > 0:
            raise DatasetError("base dataset is empty but ratio > 0 requires composited draws")
        if cfg.ratio < 1.0:
            missing = [a.motion_id for a in annotated if a.fixed_source is None]
            if missing:
                raise DatasetError(
                    f"ratio < 1 emits fixed pairs, but these annotated motions lack a fixed source: {missing}"
                )
        self.annotated = list(annotated)
        self.base = list(base)
        self.cfg = cfg

    def __getitem__(self, index: int) -> EditTriplet:
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, index])
        alpha = float(rng.uniform(cfg.alpha_low, cfg.alpha_high))
        composited = bool(rng.random() < cfg.ratio)
        tgt = self.annotated[int(rng.integers(0, len(self.annotated)))]
        mask_index = int(rng.integers(0, len(tgt.masks)))
        if composited:
            src_id, src = self.base[int(rng.integers(0, len(self.base)))]
        else:
            src_id, src = f"{tgt.motion_id}:fixed", tgt.fixed_source
        return compose_semantic(src, tgt, mask_index, alpha, rng, cfg.window_frames,
                                src_id=src_id, composited=composited)

    def take(self, count: int, start: int = 0) -> list[EditTriplet]:
        return [self[i] for i in range(start, start + count)]

    def __iter__(self):
        i = 0
        while True:
            yield self[i]
            i += 1
