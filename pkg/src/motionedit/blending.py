"""Spatial motion blending: compose body parts of a target onto a source.

Per joint j the blended rotation is: target's if j is in the hard mask,
SLERP(source, target, alpha) if j is in the soft mask, and the source's
otherwise.  The root channels (translation + global orientation) follow
the target iff the pelvis is in the hard mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotations as rot
from .errors import DimensionMismatchError, MaskError
from .motion import PoseMotion
from .skeleton import NUM_JOINTS, PELVIS, Skeleton


@dataclass(frozen=True)
class BodyMask:
    """Disjoint hard/soft joint-index sets over {0..21} (0 = pelvis)."""

    hard: frozenset[int]
    soft: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "hard", frozenset(self.hard))
        object.__setattr__(self, "soft", frozenset(self.soft))
        overlap = self.hard & self.soft
        if overlap:
            raise MaskError(f"hard and soft masks must be disjoint; both contain {sorted(overlap)}")
        bad = [i for i in self.hard | self.soft if not 0 <= i < NUM_JOINTS]
        if bad:
            raise MaskError(f"mask indices out of range 0..{NUM_JOINTS - 1}: {sorted(bad)}")

    @property
    def includes_pelvis_hard(self) -> bool:
        return PELVIS in self.hard

    def is_empty(self) -> bool:
        return not self.hard and not self.soft

    @staticmethod
    def from_part_groups(skel: Skeleton, hard: list[str] = (), soft: list[str] = ()) -> "BodyMask":
        """Resolve named part-group presets against a skeleton."""
        h: set[int] = set()
        for g in hard:
            h |= skel.part_group(g)
        s: set[int] = set()
        for g in soft:
            s |= skel.part_group(g)
        return BodyMask(hard=frozenset(h), soft=frozenset(s))

    def to_dict(self) -> dict:
        return {"hard": sorted(self.hard), "soft": sorted(self.soft)}

    @staticmethod
    def from_dict(d: dict) -> "BodyMask":
        return BodyMask(hard=frozenset(d.get("hard", [])), soft=frozenset(d.get("soft", [])))


@dataclass(frozen=True)
class BlendSpec:
    mask: BodyMask
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise MaskError(f"alpha must be in [0, 1], got {self.alpha}")


def blend(src: PoseMotion, tgt: PoseMotion, spec: BlendSpec) -> PoseMotion:
    """Blend target body parts onto the source under the spec's masks.

    Channels outside hard and soft are taken from src unchanged
    (bit-identical); lengths and fps must match.
    """
    if src.num_frames != tgt.num_frames:
        raise DimensionMismatchError(
            f"source has {src.num_frames} frames, target has {tgt.num_frames}; crop before blending"
        )
    if src.fps != tgt.fps:
        raise DimensionMismatchError(f"fps mismatch: source {src.fps}, target {tgt.fps}")

    mask = spec.mask
    if mask.includes_pelvis_hard:
        t = tgt.root_translation.copy()
        phi = tgt.global_orientation.copy()
    else:
        t = src.root_translation.copy()
        phi = src.global_orientation.copy()

    r = src.joint_rotations.copy()
    for j in mask.hard:
        if j == PELVIS:
            continue
        r[:, j - 1] = tgt.joint_rotations[:, j - 1]
    for j in mask.soft:
        if j == PELVIS:
            # Literal "otherwise" branch: soft pelvis keeps the src root and
            # soft-interpolates only the pelvis rotation (global orientation).
            phi = rot.slerp_many(src.global_orientation, tgt.global_orientation, spec.alpha)
            continue
        r[:, j - 1] = rot.slerp_many(src.joint_rotations[:, j - 1], tgt.joint_rotations[:, j - 1], spec.alpha)

    return PoseMotion(fps=src.fps, root_translation=t, global_orientation=phi, joint_rotations=r)


def resample(motion: PoseMotion, target_fps: float) -> PoseMotion:
    """Resample to a new frame rate: linear translations, SLERP rotations.

    Duration is preserved within one frame; an integer decimation factor
    passes original frames through untouched.
    """
    if target_fps <= 0:
        raise DimensionMismatchError(f"target_fps must be positive, got {target_fps}")
    L = motion.num_frames
    if target_fps == motion.fps:
        return motion
    ratio = target_fps / motion.fps
    new_len = int(np.floor((L - 1) * ratio)) + 1
    # position of each new frame on the old frame axis
    old_t = np.arange(new_len) / ratio
    i0 = np.floor(old_t).astype(int)
    i0 = np.minimum(i0, L - 1)
    i1 = np.minimum(i0 + 1, L - 1)
    w = old_t - i0

    t = (1.0 - w[:, None]) * motion.root_translation[i0] + w[:, None] * motion.root_translation[i1]
    phi = np.empty((new_len, 4))
    r = np.empty((new_len, motion.joint_rotations.shape[1], 4))
    for k in range(new_len):
        if w[k] == 0.0:
            phi[k] = motion.global_orientation[i0[k]]
            r[k] = motion.joint_rotations[i0[k]]
        else:
            phi[k] = rot.slerp_many(motion.global_orientation[i0[k]], motion.global_orientation[i1[k]], float(w[k]))
            r[k] = rot.slerp_many(motion.joint_rotations[i0[k]], motion.joint_rotations[i1[k]], float(w[k]))
    return PoseMotion(fps=target_fps, root_translation=t, global_orientation=phi, joint_rotations=r)
