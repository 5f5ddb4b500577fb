import numpy as np
import pytest

import motionedit.rotations as rot
from motionedit import PoseMotion, default_skeleton
from motionedit.blending import BodyMask
from motionedit.cutmix import AnnotatedMotion, CutmixConfig, MaskAnnotation, TripletStream


@pytest.fixture(scope="session")
def skel():
    return default_skeleton()


def make_pose(num_frames, seed=0, scale=0.3, fps=10.0, drift=0.0):
    """Random but valid pose motion; drift > 0 translates the root over time."""
    r = np.random.default_rng(seed)
    jr = rot.axis_angle_to_quat(r.standard_normal((num_frames, 21, 3)) * scale)
    go = rot.axis_angle_to_quat(r.standard_normal((num_frames, 3)) * 0.2)
    t = r.standard_normal((num_frames, 3)) * 0.05 + np.array([0.0, 0.95, 0.0])
    if drift:
        t = t + np.linspace(0, drift, num_frames)[:, None] * np.array([0.0, 0.0, 1.0])
    return PoseMotion(fps=fps, root_translation=t, global_orientation=go, joint_rotations=jr)


@pytest.fixture()
def pose_factory():
    return make_pose


@pytest.fixture(scope="session")
def arm_mask(skel):
    return BodyMask.from_part_groups(skel, hard=["right arm"])


@pytest.fixture(scope="session")
def tiny_stream(skel, request):
    annotated = [
        AnnotatedMotion(
            motion=make_pose(40, seed=10 + i),
            masks=(MaskAnnotation(BodyMask.from_part_groups(skel, hard=["right arm"]),
                                  "raise the right arm"),),
            motion_id=f"ann{i}",
            fixed_source=make_pose(40, seed=90 + i),
        )
        for i in range(3)
    ]
    base = [(f"base{i}", make_pose(40, seed=50 + i)) for i in range(3)]
    return TripletStream(annotated, base, CutmixConfig(seed=0))


@pytest.fixture(scope="session")
def tiny_scaling(tiny_stream, skel):
    from motionedit.training import fit_scaling_from_stream

    return fit_scaling_from_stream(tiny_stream, skel, count=16)


def finite_difference(f, x, eps=1e-6):
    """Central finite-difference gradient of scalar f at x (any shape)."""
    g = np.zeros_like(x, dtype=float)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom
