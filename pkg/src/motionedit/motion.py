"""Motion value types, validation diagnostics, and forward kinematics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rotations as rot
from .errors import DimensionMismatchError, MotionValidationError
from .skeleton import NUM_BODY_JOINTS, NUM_KEYPOINTS, Skeleton

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class PoseMotion:
    """Pose-parameter motion: root translation, global orientation, joint rotations.

    Quaternions are (w, x, y, z).  joint_rotations[:, j] is the local
    rotation of skeleton joint j+1 (index 0 is the pelvis, whose rotation
    is the global orientation).
    """

    fps: float
    root_translation: np.ndarray  # (L, 3)
    global_orientation: np.ndarray  # (L, 4)
    joint_rotations: np.ndarray  # (L, NUM_BODY_JOINTS, 4)

    def __post_init__(self):
        t = np.asarray(self.root_translation, dtype=float)
        phi = np.asarray(self.global_orientation, dtype=float)
        r = np.asarray(self.joint_rotations, dtype=float)
        object.__setattr__(self, "root_translation", t)
        object.__setattr__(self, "global_orientation", phi)
        object.__setattr__(self, "joint_rotations", r)
        if self.fps <= 0:
            raise MotionValidationError(f"fps must be positive, got {self.fps}")
        L = t.shape[0]
        if L < 1:
            raise MotionValidationError("motion must have at least one frame")
        if t.shape != (L, 3) or phi.shape != (L, 4) or r.shape != (L, NUM_BODY_JOINTS, 4):
            raise MotionValidationError(
                f"inconsistent shapes: t={t.shape} phi={phi.shape} r={r.shape}"
            )
        for arr in (t, phi, r):
            arr.setflags(write=False)

    @property
    def num_frames(self) -> int:
        return self.root_translation.shape[0]

    def crop(self, start: int, length: int) -> "PoseMotion":
        if start < 0 or start + length > self.num_frames:
            raise MotionValidationError(
                f"crop [{start}, {start + length}) out of range for {self.num_frames} frames"
            )
        return PoseMotion(
            fps=self.fps,
            root_translation=self.root_translation[start : start + length].copy(),
            global_orientation=self.global_orientation[start : start + length].copy(),
            joint_rotations=self.joint_rotations[start : start + length].copy(),
        )


@dataclass(frozen=True)
class KeypointMotion:
    """Keypoint motion: (L, 28, 3) positions in meters."""

    fps: float
    positions: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", p)
        if self.fps <= 0:
            raise MotionValidationError(f"fps must be positive, got {self.fps}")
        if p.ndim != 3 or p.shape[1] != NUM_KEYPOINTS or p.shape[2] != 3 or p.shape[0] < 1:
            raise MotionValidationError(f"positions must be (L, {NUM_KEYPOINTS}, 3) with L >= 1, got {p.shape}")
        p.setflags(write=False)

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    def crop(self, start: int, length: int) -> "KeypointMotion":
        if start < 0 or start + length > self.num_frames:
            raise MotionValidationError(
                f"crop [{start}, {start + length}) out of range for {self.num_frames} frames"
            )
        return KeypointMotion(fps=self.fps, positions=self.positions[start : start + length].copy())


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation found by validate()."""

    kind: str
    message: str
    frame: int | None = None
    joint: int | None = None


def validate(motion) -> list[Diagnostic]:
    """Collect every invariant violation instead of failing on the first."""
    diags: list[Diagnostic] = []
    if isinstance(motion, KeypointMotion):
        bad = ~np.isfinite(motion.positions)
        if bad.any():
            frames, joints, _ = np.nonzero(bad)
            for f, j in sorted(set(zip(frames.tolist(), joints.tolist()))):
                diags.append(Diagnostic("non_finite", f"non-finite keypoint at frame {f}, keypoint {j}", f, j))
        return diags
    if isinstance(motion, PoseMotion):
        for name, arr in (
            ("root_translation", motion.root_translation),
            ("global_orientation", motion.global_orientation),
            ("joint_rotations", motion.joint_rotations),
        ):
            if not np.isfinite(arr).all():
                diags.append(Diagnostic("non_finite", f"non-finite values in {name}"))
        norms = np.linalg.norm(motion.global_orientation, axis=-1)
        for f in np.nonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)[0]:
            diags.append(
                Diagnostic("non_unit_quaternion",
                           f"global orientation at frame {f} has norm {norms[f]:.6f}; normalization needed", int(f))
            )
        jnorms = np.linalg.norm(motion.joint_rotations, axis=-1)
        frames, joints = np.nonzero(np.abs(jnorms - 1.0) > UNIT_NORM_TOL)
        for f, j in zip(frames.tolist(), joints.tolist()):
            diags.append(
                Diagnostic("non_unit_quaternion",
                           f"joint rotation at frame {f}, joint {j + 1} has norm {jnorms[f, j]:.6f}; normalization needed",
                           f, j + 1)
            )
        return diags
    raise TypeError(f"validate expects PoseMotion or KeypointMotion, got {type(motion).__name__}")


def forward_kinematics(pose: PoseMotion, skel: Skeleton) -> KeypointMotion:
    """Transform pose parameters to 28 world-space keypoints per frame.

    World rotation of joint j composes its ancestors' local rotations;
    the pelvis keypoint equals the root translation exactly.
    """
    if pose.joint_rotations.shape[1] != skel.num_joints - 1:
        raise DimensionMismatchError(
            f"pose has {pose.joint_rotations.shape[1]} body joints, skeleton expects {skel.num_joints - 1}"
        )
    L = pose.num_frames
    J = skel.num_joints
    world_rot = np.empty((L, J, 4))
    world_pos = np.empty((L, J, 3))
    world_rot[:, 0] = pose.global_orientation
    world_pos[:, 0] = pose.root_translation
    for j in range(1, J):
        p = skel.parents[j]
        world_rot[:, j] = rot.quat_mul(world_rot[:, p], pose.joint_rotations[:, j - 1])
        world_pos[:, j] = world_pos[:, p] + rot.quat_rotate(world_rot[:, p], skel.rest_offsets[j])

    kp = np.empty((L, NUM_KEYPOINTS, 3))
    for k, binding in enumerate(skel.keypoints):
        if np.any(binding.offset):
            kp[:, k] = world_pos[:, binding.joint] + rot.quat_rotate(world_rot[:, binding.joint], binding.offset)
        else:
            kp[:, k] = world_pos[:, binding.joint]
    return KeypointMotion(fps=pose.fps, positions=kp)


def zero_pose(num_frames: int, fps: float, translation: np.ndarray | None = None) -> PoseMotion:
    """Identity rotations everywhere; optional per-frame or constant translation."""
    t = np.zeros((num_frames, 3))
    if translation is not None:
        t[:] = translation
    phi = np.tile(rot.IDENTITY, (num_frames, 1))
    r = np.tile(rot.IDENTITY, (num_frames, NUM_BODY_JOINTS, 1))
    return PoseMotion(fps=fps, root_translation=t, global_orientation=phi, joint_rotations=r)
