"""File formats: exact round trips, corruption handling, determinism."""

import json
import os

import numpy as np
import pytest

from motionedit.blending import BodyMask
from motionedit.canon import ScalingFactors
from motionedit.cutmix import AnnotatedMotion, CutmixConfig, MaskAnnotation, TripletStream
from motionedit.diffusion import DiffusionSchedule, GuidanceConfig
from motionedit.errors import FileFormatError
from motionedit.motion import KeypointMotion, forward_kinematics
from motionedit.neural import Coordinator, Denoiser, NetConfig
from motionedit.skeleton import default_skeleton, skeleton_from_config
from motionedit.storage import (
    CHECKPOINT_MAGIC,
    embedding_vocab_hash,
    load_checkpoint,
    load_manifest,
    load_model_bundle,
    load_motion,
    load_triplets,
    save_checkpoint,
    save_coordinator_checkpoint,
    save_denoiser_checkpoint,
    save_manifest,
    save_motion,
    save_triplets,
    scaling_hash,
)

TINY = NetConfig(hidden=8, blocks=1, heads=2, mlp_hidden=12, window=4)


class TestMotionFiles:
    def test_pose_round_trip_bit_exact(self, skel, pose_factory, tmp_path):
        m = pose_factory(num_frames=7, seed=0)
        p = str(tmp_path / "m.json")
        save_motion(m, p, skel)
        back = load_motion(p, skel)
        np.testing.assert_array_equal(back.root_translation, m.root_translation)
        np.testing.assert_array_equal(back.global_orientation, m.global_orientation)
        np.testing.assert_array_equal(back.joint_rotations, m.joint_rotations)
        assert back.fps == m.fps

    def test_keypoint_round_trip_bit_exact(self, skel, pose_factory, tmp_path):
        kp = forward_kinematics(pose_factory(num_frames=5, seed=1), skel)
        p = str(tmp_path / "k.json")
        save_motion(kp, p, skel)
        back = load_motion(p, skel)
        assert isinstance(back, KeypointMotion)
        np.testing.assert_array_equal(back.positions, kp.positions)

    def test_version_mismatch(self, skel, pose_factory, tmp_path):
        p = str(tmp_path / "m.json")
        save_motion(pose_factory(num_frames=2, seed=0), p, skel)
        doc = json.load(open(p))
        doc["version"] = 99
        json.dump(doc, open(p, "w"))
        with pytest.raises(FileFormatError) as e:
            load_motion(p, skel)
        assert e.value.code == "version_mismatch"

    def test_foreign_skeleton_hash_names_both(self, skel, pose_factory, tmp_path):
        p = str(tmp_path / "m.json")
        save_motion(pose_factory(num_frames=2, seed=0), p, skel)
        cfg = skel.to_config()
        cfg["joints"][5]["offset"][1] += 0.1
        other = skeleton_from_config(cfg)
        with pytest.raises(FileFormatError) as e:
            load_motion(p, other)
        assert e.value.code == "hash_mismatch"
        assert skel.content_hash() in str(e.value)
        assert other.content_hash() in str(e.value)

    def test_not_json(self, skel, tmp_path):
        p = tmp_path / "junk.json"
        p.write_text("{not json")
        with pytest.raises(FileFormatError) as e:
            load_motion(str(p), skel)
        assert e.value.code == "file_malformed"

    def test_truncated_payload(self, skel, pose_factory, tmp_path):
        p = str(tmp_path / "m.json")
        save_motion(pose_factory(num_frames=2, seed=0), p, skel)
        doc = json.load(open(p))
        del doc["payload"]["joint_rotations"]
        json.dump(doc, open(p, "w"))
        with pytest.raises(FileFormatError) as e:
            load_motion(p, skel)
        assert e.value.code == "file_malformed"


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        den = Denoiser.initialize(TINY, 0)
        p = str(tmp_path / "c.ckpt")
        save_checkpoint(p, "denoiser", den.params, TINY, "shash", meta={"note": 1})
        kind, params, cfg, header = load_checkpoint(p)
        assert kind == "denoiser"
        assert cfg == TINY
        assert header["meta"]["note"] == 1
        assert header["vocab_hash"] == embedding_vocab_hash()
        assert sorted(params) == sorted(den.params)
        for k in params:
            np.testing.assert_array_equal(params[k], den.params[k])

    def test_bytes_deterministic(self, tmp_path):
        den = Denoiser.initialize(TINY, 3)
        a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
        save_checkpoint(a, "denoiser", den.params, TINY, "h")
        save_checkpoint(b, "denoiser", dict(reversed(list(den.params.items()))), TINY, "h")
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "bad.ckpt"
        p.write_bytes(b"NOTACKPT" + b"\x00" * 32)
        with pytest.raises(FileFormatError):
            load_checkpoint(str(p))

    def test_truncated_body(self, tmp_path):
        den = Denoiser.initialize(TINY, 0)
        p = str(tmp_path / "c.ckpt")
        save_checkpoint(p, "denoiser", den.params, TINY, "h")
        data = open(p, "rb").read()
        open(p, "wb").write(data[:-16])
        with pytest.raises(FileFormatError) as e:
            load_checkpoint(p)
        assert e.value.code == "file_malformed"

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "c.ckpt"
        p.write_bytes(CHECKPOINT_MAGIC + b"\x01")
        with pytest.raises(FileFormatError):
            load_checkpoint(str(p))


class TestManifests:
    def _dataset(self, skel, pose_factory):
        mask = BodyMask.from_part_groups(skel, hard=["right arm"], soft=["torso"])
        annotated = [AnnotatedMotion(
            motion=pose_factory(num_frames=20, seed=1),
            masks=(MaskAnnotation(mask, "raise the right arm"),),
            motion_id="a0",
            fixed_source=pose_factory(num_frames=20, seed=2),
        )]
        base = [("b0", pose_factory(num_frames=24, seed=3))]
        return annotated, base

    def test_round_trip(self, skel, pose_factory, tmp_path):
        annotated, base = self._dataset(skel, pose_factory)
        path = str(tmp_path / "manifest.json")
        save_manifest(path, annotated, base, skel, str(tmp_path))
        ann2, base2 = load_manifest(path, skel)
        assert len(ann2) == 1 and len(base2) == 1
        a0 = ann2[0]
        assert a0.motion_id == "a0"
        assert a0.masks[0].instruction == "raise the right arm"
        assert a0.masks[0].mask == annotated[0].masks[0].mask
        np.testing.assert_array_equal(a0.motion.joint_rotations, annotated[0].motion.joint_rotations)
        np.testing.assert_array_equal(a0.fixed_source.joint_rotations,
                                      annotated[0].fixed_source.joint_rotations)
        assert base2[0][0] == "b0"
        np.testing.assert_array_equal(base2[0][1].root_translation, base[0][1].root_translation)

    def test_loaded_manifest_feeds_stream(self, skel, pose_factory, tmp_path):
        annotated, base = self._dataset(skel, pose_factory)
        path = str(tmp_path / "manifest.json")
        save_manifest(path, annotated, base, skel, str(tmp_path))
        ann2, base2 = load_manifest(path, skel)
        cfg = CutmixConfig(seed=4, window_frames=16)
        a = TripletStream(annotated, base, cfg)[0]
        b = TripletStream(ann2, base2, cfg)[0]
        np.testing.assert_array_equal(a.edited.joint_rotations, b.edited.joint_rotations)

    def test_version_check(self, skel, pose_factory, tmp_path):
        annotated, base = self._dataset(skel, pose_factory)
        path = str(tmp_path / "manifest.json")
        save_manifest(path, annotated, base, skel, str(tmp_path))
        doc = json.load(open(path))
        doc["version"] = 2
        json.dump(doc, open(path, "w"))
        with pytest.raises(FileFormatError):
            load_manifest(path, skel)


class TestTripletArchive:
    def test_round_trip(self, skel, tiny_stream, tmp_path):
        trips = tiny_stream.take(3)
        d = str(tmp_path / "trips")
        save_triplets(d, trips, skel)
        back = load_triplets(d, skel)
        assert len(back) == 3
        for orig, loaded in zip(trips, back):
            np.testing.assert_array_equal(loaded.original.joint_rotations,
                                          orig.original.joint_rotations)
            np.testing.assert_array_equal(loaded.edited.joint_rotations,
                                          orig.edited.joint_rotations)
            assert loaded.instruction == orig.instruction
            assert loaded.provenance == orig.provenance
            assert loaded.degenerate == orig.degenerate

    def test_files_named_by_index(self, skel, tiny_stream, tmp_path):
        d = tmp_path / "trips"
        save_triplets(str(d), tiny_stream.take(2), skel)
        assert (d / "000000_original.json").exists()
        assert (d / "000001_edited.json").exists()
        assert (d / "triplets.json").exists()


class TestModelBundle:
    def test_denoiser_checkpoint_and_bundle(self, skel, tiny_scaling, tmp_path):
        den = Denoiser.initialize(TINY, 0)
        p = str(tmp_path / "den.ckpt")
        save_denoiser_checkpoint(p, den, tiny_scaling,
                                 schedule_cfg={"steps": 100, "beta_start": 1e-4, "beta_end": 2e-2})
        bundle = load_model_bundle(p, skel)
        assert bundle.schedule.num_steps == 100
        assert bundle.coordinator is None
        assert bundle.guidance == GuidanceConfig()
        for k in den.params:
            np.testing.assert_array_equal(bundle.denoiser.params[k], den.params[k])
        np.testing.assert_array_equal(bundle.scaling.channel_min, tiny_scaling.channel_min)

    def test_bundle_with_coordinator_and_guidance(self, skel, tiny_scaling, tmp_path):
        den = Denoiser.initialize(TINY, 0)
        coord = Coordinator.initialize(TINY, 1)
        dp, cp = str(tmp_path / "d.ckpt"), str(tmp_path / "c.ckpt")
        save_denoiser_checkpoint(dp, den, tiny_scaling)
        save_coordinator_checkpoint(cp, coord, tiny_scaling)
        g = GuidanceConfig(cfg_weight=2.0, coordinator_strength=0.5, coordinator_steps=10)
        bundle = load_model_bundle(dp, skel, coordinator_path=cp, guidance=g)
        assert bundle.guidance == g
        for k in coord.params:
            np.testing.assert_array_equal(bundle.coordinator.params[k], coord.params[k])

    def test_kind_mismatch_rejected(self, skel, tiny_scaling, tmp_path):
        coord = Coordinator.initialize(TINY, 1)
        cp = str(tmp_path / "c.ckpt")
        save_coordinator_checkpoint(cp, coord, tiny_scaling)
        with pytest.raises(FileFormatError):
            load_model_bundle(cp, skel)
        den = Denoiser.initialize(TINY, 0)
        dp = str(tmp_path / "d.ckpt")
        save_denoiser_checkpoint(dp, den, tiny_scaling)
        with pytest.raises(FileFormatError):
            load_model_bundle(dp, skel, coordinator_path=dp)

    def test_tampered_scaling_rejected(self, skel, tiny_scaling, tmp_path):
        den = Denoiser.initialize(TINY, 0)
        p = str(tmp_path / "d.ckpt")
        save_checkpoint(p, "denoiser", den.params, TINY, "wrong-hash",
                        meta={"scaling": tiny_scaling.to_dict(),
                              "schedule": {"steps": 100, "beta_start": 1e-4, "beta_end": 2e-2}})
        with pytest.raises(FileFormatError) as e:
            load_model_bundle(p, skel)
        assert e.value.code == "hash_mismatch"

    def test_scaling_hash_stable(self, tiny_scaling):
        assert scaling_hash(tiny_scaling) == scaling_hash(
            ScalingFactors.from_dict(tiny_scaling.to_dict()))
