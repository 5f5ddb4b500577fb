"""Keypoint-to-pose recovery by gradient descent through the kinematic chain.

Each frame is parameterized by a root translation plus rotation vectors
for the pelvis and the 21 body joints; Rodrigues' formula and the FK
chain are built on the reverse-mode tape, so gradients are exact.
Frames are independent and fitted as one batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import rotations as rot
from .blending import resample
from .errors import TrainingError
from .motion import KeypointMotion, PoseMotion
from .skeleton import NUM_KEYPOINTS, Skeleton

# generators of so(3), flattened row-major: skew(v) = v_x Gx + v_y Gy + v_z Gz
_GEN = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ]
)


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 120
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    keypoint_weights: np.ndarray | None = None  # (28,)
    twist_penalty: float = 1e-6  # regularizes rotation-vector magnitude
    smoothness_penalty: float = 0.0  # optional temporal coupling, off by default

    def __post_init__(self):
        if self.iterations < 1:
            raise TrainingError(f"iterations must be >= 1, got {self.iterations}")
        if self.learning_rate <= 0:
            raise TrainingError(f"learning rate must be positive, got {self.learning_rate}")


def _rodrigues(v: ad.Tensor) -> ad.Tensor:
    """Rotation matrices (F, J, 3, 3) from rotation vectors (F, J, 3)."""
    F, J, _ = v.shape
    theta2 = ad.sum_(ad.mul(v, v), axis=-1, keepdims=True)  # (F, J, 1)
    theta = ad.sqrt(ad.add(theta2, 1e-24))
    a = ad.mul(ad.sin(theta), ad.power(theta, -1.0))
    b = ad.mul(ad.add(1.0, ad.mul(ad.cos(theta), -1.0)), ad.power(ad.add(theta2, 1e-24), -1.0))
    K = ad.reshape(ad.matmul(v, ad.Tensor(_GEN)), (F, J, 3, 3))
    KK = ad.matmul(K, K)
    eye = np.broadcast_to(np.eye(3), (F, J, 3, 3))
    a4 = ad.reshape(a, (F, J, 1, 1))
    b4 = ad.reshape(b, (F, J, 1, 1))
    return ad.add(ad.add(ad.Tensor(eye), ad.mul(a4, K)), ad.mul(b4, KK))


def _fk_keypoints(rotvecs: ad.Tensor, trans: ad.Tensor, skel: Skeleton) -> ad.Tensor:
    """Differentiable FK producing (F, 28, 3) keypoints.

    rotvecs: (F, 22, 3) with index 0 the global orientation; trans: (F, 3).
    """
    F = rotvecs.shape[0]
    R = _rodrigues(rotvecs)  # (F, 22, 3, 3)
    world_rot: list[ad.Tensor] = [R[:, 0]]
    world_pos: list[ad.Tensor] = [trans]
    for j in range(1, skel.num_joints):
        p = skel.parents[j]
        world_rot.append(ad.matmul(world_rot[p], R[:, j]))
        off = ad.Tensor(skel.rest_offsets[j].reshape(3, 1))
        moved = ad.reshape(ad.matmul(world_rot[p], off), (F, 3))
        world_pos.append(ad.add(world_pos[p], moved))
    kps: list[ad.Tensor] = []
    for binding in skel.keypoints:
        if np.any(binding.offset):
            off = ad.Tensor(binding.offset.reshape(3, 1))
            moved = ad.reshape(ad.matmul(world_rot[binding.joint], off), (F, 3))
            kps.append(ad.add(world_pos[binding.joint], moved))
        else:
            kps.append(world_pos[binding.joint])
    return ad.stack(kps, axis=1)


def _matrix_to_rotvec(R: np.ndarray) -> np.ndarray:
    """Rotation vector from a single 3x3 rotation matrix."""
    q = np.empty(4)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q[:] = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0)) * 2
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return rot.quat_to_axis_angle(q / np.linalg.norm(q))


def _wahba(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least-squares rotation taking vectors a (K, 3) onto b (K, 3)."""
    if len(a) == 1:
        an = a[0] / (np.linalg.norm(a[0]) + 1e-12)
        bn = b[0] / (np.linalg.norm(b[0]) + 1e-12)
        axis = np.cross(an, bn)
        s = np.linalg.norm(axis)
        if s < 1e-12:
            return np.eye(3) if an @ bn > 0 else rot.quat_to_matrix(rot.axis_angle_to_quat(
                np.pi * _any_orthogonal(an)))
        angle = np.arctan2(s, an @ bn)
        return rot.quat_to_matrix(rot.axis_angle_to_quat(axis / s * angle))
    B = b.T @ a
    U, _, Vt = np.linalg.svd(B)
    d = np.sign(np.linalg.det(U @ Vt))
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def _any_orthogonal(v: np.ndarray) -> np.ndarray:
    w = np.array([1.0, 0.0, 0.0]) if abs(v[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    o = np.cross(v, w)
    return o / np.linalg.norm(o)


def estimate_pose(target: KeypointMotion, skel: Skeleton) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form per-joint pose estimate from keypoints.

    Aligns each joint's rest-frame bone fan (child offsets plus rigid
    keypoint offsets) onto the observed directions; twist left free by a
    single bone stays at the minimal-rotation solution.  Returns
    (rotvecs (F, 22, 3), trans (F, 3)) for use as a refinement init.
    """
    F = target.num_frames
    J = skel.num_joints
    joint_pos = np.full((F, J, 3), np.nan)
    extra: dict[int, list[tuple[np.ndarray, int]]] = {}
    for ki, binding in enumerate(skel.keypoints):
        if np.any(binding.offset):
            extra.setdefault(binding.joint, []).append((binding.offset, ki))
        else:
            joint_pos[:, binding.joint] = target.positions[:, ki]
    children: dict[int, list[int]] = {}
    for j in range(1, J):
        children.setdefault(skel.parents[j], []).append(j)

    rotvecs = np.zeros((F, J, 3))
    world = np.broadcast_to(np.eye(3), (F, J, 3, 3)).copy()
    for j in range(J):
        rest, obs = [], []
        for c in children.get(j, []):
            rest.append(np.broadcast_to(skel.rest_offsets[c], (F, 3)))
            obs.append(joint_pos[:, c] - joint_pos[:, j])
        for off, ki in extra.get(j, []):
            rest.append(np.broadcast_to(off, (F, 3)))
            obs.append(target.positions[:, ki] - joint_pos[:, j])
        p = skel.parents[j]
        for f in range(F):
            if rest:
                a = np.stack([r[f] for r in rest])
                b = np.stack([o[f] for o in obs])
                world[f, j] = _wahba(a, b)
            else:
                world[f, j] = world[f, p]
            local = world[f, j] if p < 0 else world[f, p].T @ world[f, j]
            rotvecs[f, j] = _matrix_to_rotvec(local)
    trans = joint_pos[:, 0].copy()
    return rotvecs, trans


def fit_objective(rotvecs: np.ndarray, trans: np.ndarray, target: np.ndarray, skel: Skeleton,
                  cfg: FitConfig) -> tuple[float, float, np.ndarray, np.ndarray]:
    """One taped evaluation: returns (objective, mse, grad_rotvecs, grad_trans)."""
    rv = ad.Tensor(rotvecs, requires_grad=True)
    tr = ad.Tensor(trans, requires_grad=True)
    kp = _fk_keypoints(rv, tr, skel)
    diff = ad.add(kp, ad.Tensor(-target))
    sq = ad.mul(diff, diff)
    if cfg.keypoint_weights is not None:
        sq = ad.mul(sq, cfg.keypoint_weights.reshape(1, NUM_KEYPOINTS, 1))
    mse = ad.mean(sq)
    obj = ad.add(mse, ad.mul(ad.mean(ad.sum_(ad.mul(rv, rv), axis=-1)), cfg.twist_penalty))
    if cfg.smoothness_penalty > 0.0 and rotvecs.shape[0] > 1:
        vel = ad.add(rv[1:], ad.mul(rv[:-1], -1.0))
        obj = ad.add(obj, ad.mul(ad.mean(ad.mul(vel, vel)), cfg.smoothness_penalty))
    obj.backward()
    return float(obj.data), float(mse.data), rv.grad, tr.grad


def fit_pose(target: KeypointMotion, skel: Skeleton, init: PoseMotion | None = None,
             cfg: FitConfig = FitConfig()) -> tuple[PoseMotion, np.ndarray]:
    """Recover pose parameters whose FK matches the target keypoints.

    Returns (pose, residual_curve) where residual_curve[i] is the keypoint
    MSE (m^2) before Adam step i.  Defaults to zero-pose init with the
    pelvis translation taken from the target.
    """
    F = target.num_frames
    if init is None:
        # two-stage scheme: closed-form estimate, then gradient refinement
        rotvecs, trans = estimate_pose(target, skel)
    else:
        rotvecs = np.concatenate(
            [rot.quat_to_axis_angle(init.global_orientation)[:, None, :],
             rot.quat_to_axis_angle(init.joint_rotations)],
            axis=1,
        )
        trans = init.root_translation.copy()

    m_rv = np.zeros_like(rotvecs)
    v_rv = np.zeros_like(rotvecs)
    m_tr = np.zeros_like(trans)
    v_tr = np.zeros_like(trans)
    curve = np.empty(cfg.iterations)
    best = None  # (objective, rotvecs, trans); guarantees no regression vs init
    for it in range(cfg.iterations):
        obj, mse, g_rv, g_tr = fit_objective(rotvecs, trans, target.positions, skel, cfg)
        if not np.isfinite(obj):
            raise TrainingError(f"pose fitting diverged (non-finite objective) at iteration {it}")
        curve[it] = mse
        if best is None or obj < best[0]:
            best = (obj, rotvecs.copy(), trans.copy())
        step = it + 1
        bc1 = 1.0 - cfg.beta1**step
        bc2 = 1.0 - cfg.beta2**step
        # cosine decay: a constant step keeps Adam oscillating at lr scale
        lr = cfg.learning_rate * 0.5 * (1.0 + np.cos(np.pi * it / cfg.iterations))
        for param, g, m, v in ((rotvecs, g_rv, m_rv, v_rv), (trans, g_tr, m_tr, v_tr)):
            m *= cfg.beta1
            m += (1 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1 - cfg.beta2) * g * g
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)

    final_obj, _, _, _ = fit_objective(rotvecs, trans, target.positions, skel, cfg)
    if best is not None and final_obj > best[0]:
        rotvecs, trans = best[1], best[2]

    pose = PoseMotion(
        fps=target.fps,
        root_translation=trans,
        global_orientation=rot.axis_angle_to_quat(rotvecs[:, 0]),
        joint_rotations=rot.axis_angle_to_quat(rotvecs[:, 1:]),
    )
    return pose, curve


def upsample_for_export(motion: PoseMotion, factor: int) -> PoseMotion:
    """Integer-factor upsampling for export (shared resampling rules)."""
    if factor < 1 or int(factor) != factor:
        raise TrainingError(f"factor must be a positive integer, got {factor}")
    return resample(motion, motion.fps * factor)
