"""Build the integration-test workspace: library motions, a tiny trained
checkpoint, and the expected outputs produced by the CLI (the oracle the
studio flows must match byte for byte)."""

import json
import os
import sys

import numpy as np
from click.testing import CliRunner

from motionedit.blending import BodyMask
from motionedit.cli import main as cli_main
from motionedit.cutmix import AnnotatedMotion, MaskAnnotation
from motionedit.motion import PoseMotion, forward_kinematics
from motionedit.rotations import axis_angle_to_quat
from motionedit.skeleton import default_skeleton
from motionedit.storage import load_motion, save_manifest, save_motion


def make_clip(skel, rng, frames=24, raise_arm=False):
    rsho = skel.joint_index("right_shoulder") - 1
    rotvec = rng.normal(0.0, 0.04, (1, 21, 3)) + rng.normal(0.0, 0.01, (frames, 21, 3))
    if raise_arm:
        rotvec[:, rsho] += np.array([0.0, 0.0, -rng.uniform(0.8, 1.2) * np.pi / 2])
    jr = axis_angle_to_quat(rotvec.reshape(-1, 3)).reshape(frames, 21, 4)
    go = axis_angle_to_quat(rng.normal(0.0, 0.02, 3))[None].repeat(frames, axis=0)
    rt = rng.normal(0.0, 0.02, (1, 3)) + rng.normal(0.0, 0.002, (frames, 3))
    rt[:, 1] += 0.9
    return PoseMotion(fps=20, root_translation=rt, global_orientation=go, joint_rotations=jr)


def run_cli(args):
    result = CliRunner().invoke(cli_main, args)
    if result.exit_code != 0:
        raise SystemExit(f"cli {args} failed: {result.output}")


def main(out_dir):
    skel = default_skeleton()
    rng = np.random.default_rng(42)
    motions_dir = os.path.join(out_dir, "motions")
    work_dir = os.path.join(out_dir, "work")
    os.makedirs(motions_dir, exist_ok=True)
    os.makedirs(work_dir, exist_ok=True)

    walk = make_clip(skel, rng)
    wave = make_clip(skel, rng, raise_arm=True)
    save_motion(walk, os.path.join(motions_dir, "walk.json"), skel)
    save_motion(wave, os.path.join(motions_dir, "wave.json"), skel)

    mask = BodyMask.from_part_groups(skel, hard=["right arm"])
    annotated = [AnnotatedMotion(motion=make_clip(skel, rng, raise_arm=True),
                                 masks=(MaskAnnotation(mask, "raise the right arm"),),
                                 motion_id=f"ann{i}") for i in range(2)]
    base = [(f"base{i}", make_clip(skel, rng)) for i in range(2)]
    manifest = os.path.join(work_dir, "manifest.json")
    save_manifest(manifest, annotated, base, skel, os.path.join(work_dir, "dataset"))

    ckpt = os.path.join(out_dir, "ckpt.json")
    run_cli(["train", "--manifest", manifest, "--out", ckpt, "--steps", "5",
             "--batch-size", "2", "--hidden", "8", "--window", "8"])

    # two-step CLI edit chain, seeds 1 then 2: the studio parity oracle
    e1 = os.path.join(work_dir, "edit1.json")
    e2 = os.path.join(work_dir, "edit2.json")
    run_cli(["edit", os.path.join(motions_dir, "walk.json"), e1, "--checkpoint", ckpt,
             "--instruction", "raise the right arm", "--seed", "1"])
    run_cli(["edit", e1, e2, "--checkpoint", ckpt,
             "--instruction", "lean to the left", "--seed", "2"])

    # blend-preview oracle: hard right arm of wave into walk
    b1 = os.path.join(work_dir, "blend.json")
    run_cli(["blend", os.path.join(motions_dir, "walk.json"),
             os.path.join(motions_dir, "wave.json"), b1, "--hard", "right arm"])

    # soft blend at alpha 0: interpolation path with zero weight
    b0 = os.path.join(work_dir, "blend0.json")
    run_cli(["blend", os.path.join(motions_dir, "walk.json"),
             os.path.join(motions_dir, "wave.json"), b0,
             "--soft", "right arm", "--alpha", "0"])

    expected = {
        "walk_frames": forward_kinematics(walk, skel).positions.tolist(),
        "edit1_frames": load_motion(e1, skel).positions.tolist(),
        "edit2_frames": load_motion(e2, skel).positions.tolist(),
        "blend_arm_frames": forward_kinematics(load_motion(b1, skel), skel).positions.tolist(),
        "blend_soft0_frames": forward_kinematics(load_motion(b0, skel), skel).positions.tolist(),
    }
    with open(os.path.join(out_dir, "expected.json"), "w") as fh:
        json.dump(expected, fh)
    print(out_dir)


if __name__ == "__main__":
    main(sys.argv[1])
