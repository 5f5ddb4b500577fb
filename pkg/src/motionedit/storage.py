"""File formats: motion files, checkpoints, manifests, triplet archives.

Motion files are JSON; floats round-trip exactly because json uses
repr-based float formatting.  Checkpoints are a custom binary container
written with sorted keys and no timestamps, so identical params produce
identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from .blending import BodyMask
from .canon import ScalingFactors
from .cutmix import AnnotatedMotion, EditTriplet, MaskAnnotation
from .errors import FileFormatError
from .motion import KeypointMotion, PoseMotion
from .neural import EMBED_DIM, NetConfig
from .skeleton import Skeleton

MOTION_FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"MEDC\x00\x01"
EMBED_VOCAB_SPEC = f"hashed-bow-sha256-v1:dim={EMBED_DIM}"


def embedding_vocab_hash() -> str:
    """Identity of the instruction embedding scheme baked into checkpoints."""
    return hashlib.sha256(EMBED_VOCAB_SPEC.encode()).hexdigest()


# --------------------------------------------------------------------------
# motion files
# --------------------------------------------------------------------------

def motion_to_dict(motion, skel: Skeleton) -> dict:
    if isinstance(motion, PoseMotion):
        payload = {
            "root_translation": motion.root_translation.tolist(),
            "global_orientation": motion.global_orientation.tolist(),
            "joint_rotations": motion.joint_rotations.tolist(),
        }
        tag = "pose"
    elif isinstance(motion, KeypointMotion):
        payload = {"positions": motion.positions.tolist()}
        tag = "keypoint"
    else:
        raise FileFormatError(f"unsupported motion type {type(motion).__name__}")
    return {
        "version": MOTION_FORMAT_VERSION,
        "fps": motion.fps,
        "skeleton_hash": skel.content_hash(),
        "representation": tag,
        "payload": payload,
    }


def motion_from_dict(doc: dict, skel: Skeleton):
    try:
        version = doc["version"]
        if version != MOTION_FORMAT_VERSION:
            raise FileFormatError(
                f"unsupported motion file version {version} (supported: {MOTION_FORMAT_VERSION})",
                code="version_mismatch",
            )
        file_hash = doc["skeleton_hash"]
        if file_hash != skel.content_hash():
            raise FileFormatError(
                f"skeleton hash mismatch: file has {file_hash}, loaded skeleton is {skel.content_hash()}",
                code="hash_mismatch",
            )
        tag = doc["representation"]
        payload = doc["payload"]
        if tag == "pose":
            return PoseMotion(
                fps=doc["fps"],
                root_translation=np.array(payload["root_translation"], dtype=float),
                global_orientation=np.array(payload["global_orientation"], dtype=float),
                joint_rotations=np.array(payload["joint_rotations"], dtype=float),
            )
        if tag == "keypoint":
            return KeypointMotion(fps=doc["fps"], positions=np.array(payload["positions"], dtype=float))
        raise FileFormatError(f"unknown representation tag {tag!r}", code="file_malformed")
    except FileFormatError:
        raise
    except Exception as exc:
        raise FileFormatError(f"malformed motion payload: {exc}", code="file_malformed") from exc


def save_motion(motion, path: str, skel: Skeleton) -> None:
    with open(path, "w") as fh:
        json.dump(motion_to_dict(motion, skel), fh, sort_keys=True)
        fh.write("\n")


def load_motion(path: str, skel: Skeleton):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"not valid JSON: {path}: {exc}", code="file_malformed") from exc
    if not isinstance(doc, dict):
        raise FileFormatError(f"motion file root must be an object: {path}", code="file_malformed")
    return motion_from_dict(doc, skel)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(path: str, kind: str, params: dict[str, np.ndarray], net_cfg: NetConfig,
                    scaling_hash: str, meta: dict | None = None) -> None:
    """Binary container: magic, length-prefixed JSON header, raw float64 data.

    Parameter arrays are written in sorted name order; the header carries
    shapes and offsets plus hashes identifying the normalization and the
    embedding vocabulary the weights were trained against.
    """
    names = sorted(params)
    entries = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(params[name], dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = {
        "kind": kind,
        "net_config": {
            "hidden": net_cfg.hidden, "blocks": net_cfg.blocks, "heads": net_cfg.heads,
            "mlp_hidden": net_cfg.mlp_hidden, "window": net_cfg.window,
        },
        "scaling_hash": scaling_hash,
        "vocab_hash": embedding_vocab_hash(),
        "params": entries,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str) -> tuple[str, dict[str, np.ndarray], NetConfig, dict]:
    """Returns (kind, params, net config, header dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise FileFormatError(f"not a checkpoint file: {path}", code="file_malformed")
    pos = len(CHECKPOINT_MAGIC)
    if len(data) < pos + 8:
        raise FileFormatError(f"truncated checkpoint header: {path}", code="file_malformed")
    (head_len,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) < pos + head_len:
        raise FileFormatError(f"truncated checkpoint header: {path}", code="file_malformed")
    try:
        header = json.loads(data[pos : pos + head_len])
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"malformed checkpoint header: {exc}", code="file_malformed") from exc
    body = data[pos + head_len :]
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(body):
            raise FileFormatError(
                f"truncated checkpoint payload for {entry['name']!r}", code="file_malformed"
            )
        params[entry["name"]] = np.frombuffer(body[start:end], dtype=np.float64).reshape(shape).copy()
    nc = header["net_config"]
    net_cfg = NetConfig(hidden=nc["hidden"], blocks=nc["blocks"], heads=nc["heads"],
                        mlp_hidden=nc["mlp_hidden"], window=nc["window"])
    return header["kind"], params, net_cfg, header


# --------------------------------------------------------------------------
# dataset manifests
# --------------------------------------------------------------------------

def save_manifest(path: str, annotated: list[AnnotatedMotion], base: list[tuple[str, PoseMotion]],
                  skel: Skeleton, motion_dir: str) -> None:
    """Manifest + one motion file per clip under motion_dir."""
    os.makedirs(motion_dir, exist_ok=True)
    doc = {"version": 1, "skeleton_hash": skel.content_hash(), "annotated": [], "base": []}
    manifest_root = os.path.dirname(os.path.abspath(path))

    def _write(motion, motion_id: str) -> str:
        full = os.path.join(motion_dir, f"{motion_id}.json")
        save_motion(motion, full, skel)
        # stored relative to the manifest so the pair relocates together
        return os.path.relpath(os.path.abspath(full), manifest_root)

    for am in annotated:
        entry = {
            "id": am.motion_id,
            "file": _write(am.motion, am.motion_id),
            "annotations": [{"mask": a.mask.to_dict(), "instruction": a.instruction} for a in am.masks],
        }
        if am.fixed_source is not None:
            entry["fixed_source_file"] = _write(am.fixed_source, f"{am.motion_id}__fixed")
        doc["annotated"].append(entry)
    for motion_id, motion in base:
        doc["base"].append({"id": motion_id, "file": _write(motion, motion_id)})
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_manifest(path: str, skel: Skeleton) -> tuple[list[AnnotatedMotion], list[tuple[str, PoseMotion]]]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise FileFormatError(f"unsupported manifest version {doc.get('version')}", code="version_mismatch")
    root = os.path.dirname(os.path.abspath(path))
    annotated = []
    for entry in doc["annotated"]:
        masks = tuple(
            MaskAnnotation(mask=BodyMask.from_dict(a["mask"]), instruction=a["instruction"])
            for a in entry["annotations"]
        )
        fixed = None
        if "fixed_source_file" in entry:
            fixed = load_motion(os.path.join(root, entry["fixed_source_file"]), skel)
        annotated.append(AnnotatedMotion(
            motion=load_motion(os.path.join(root, entry["file"]), skel),
            masks=masks, motion_id=entry["id"], fixed_source=fixed,
        ))
    base = [
        (entry["id"], load_motion(os.path.join(root, entry["file"]), skel))
        for entry in doc["base"]
    ]
    return annotated, base


# --------------------------------------------------------------------------
# triplet archives
# --------------------------------------------------------------------------

def save_triplets(directory: str, triplets: list[EditTriplet], skel: Skeleton) -> None:
    """Directory of motion files plus a manifest; streamable by index."""
    os.makedirs(directory, exist_ok=True)
    manifest = []
    for i, trip in enumerate(triplets):
        ori = f"{i:06d}_original.json"
        edi = f"{i:06d}_edited.json"
        save_motion(trip.original, os.path.join(directory, ori), skel)
        save_motion(trip.edited, os.path.join(directory, edi), skel)
        manifest.append({
            "index": i, "original": ori, "edited": edi,
            "instruction": trip.instruction, "provenance": trip.provenance,
            "degenerate": trip.degenerate,
        })
    with open(os.path.join(directory, "triplets.json"), "w") as fh:
        json.dump({"version": 1, "skeleton_hash": skel.content_hash(), "triplets": manifest},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_triplets(directory: str, skel: Skeleton) -> list[EditTriplet]:
    with open(os.path.join(directory, "triplets.json")) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise FileFormatError(f"unsupported triplet archive version {doc.get('version')}",
                              code="version_mismatch")
    out = []
    for entry in doc["triplets"]:
        out.append(EditTriplet(
            original=load_motion(os.path.join(directory, entry["original"]), skel),
            edited=load_motion(os.path.join(directory, entry["edited"]), skel),
            instruction=entry["instruction"],
            provenance=entry["provenance"],
            degenerate=entry["degenerate"],
        ))
    return out


def scaling_hash(scaling: ScalingFactors) -> str:
    return hashlib.sha256(json.dumps(scaling.to_dict(), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# model bundles (checkpoint + everything needed to run an edit)
# --------------------------------------------------------------------------

def save_denoiser_checkpoint(path: str, denoiser, scaling: ScalingFactors,
                             schedule_cfg: dict | None = None, extra: dict | None = None) -> None:
    meta = {
        "scaling": scaling.to_dict(),
        "schedule": schedule_cfg or {"steps": 100, "beta_start": 1e-4, "beta_end": 2e-2},
    }
    meta.update(extra or {})
    save_checkpoint(path, "denoiser", denoiser.params, denoiser.cfg,
                    scaling_hash(scaling), meta=meta)


def save_coordinator_checkpoint(path: str, coordinator, scaling: ScalingFactors,
                                extra: dict | None = None) -> None:
    save_checkpoint(path, "coordinator", coordinator.params, coordinator.cfg,
                    scaling_hash(scaling), meta={"scaling": scaling.to_dict(), **(extra or {})})


def load_model_bundle(denoiser_path: str, skel: Skeleton, coordinator_path: str | None = None,
                      guidance=None):
    """Reconstruct a runnable ModelBundle from checkpoint files."""
    from .diffusion import DiffusionSchedule, GuidanceConfig, ModelBundle
    from .neural import Coordinator, Denoiser

    kind, params, net_cfg, header = load_checkpoint(denoiser_path)
    if kind != "denoiser":
        raise FileFormatError(f"{denoiser_path} holds a {kind!r} checkpoint, expected denoiser",
                              code="file_malformed")
    meta = header["meta"]
    scaling = ScalingFactors.from_dict(meta["scaling"])
    if header["scaling_hash"] != scaling_hash(scaling):
        raise FileFormatError("checkpoint scaling hash does not match its embedded factors",
                              code="hash_mismatch")
    sc = meta["schedule"]
    schedule = DiffusionSchedule.linear(sc["steps"], sc["beta_start"], sc["beta_end"])
    coordinator = None
    if coordinator_path is not None:
        ckind, cparams, ccfg, _ = load_checkpoint(coordinator_path)
        if ckind != "coordinator":
            raise FileFormatError(f"{coordinator_path} holds a {ckind!r} checkpoint, expected coordinator",
                                  code="file_malformed")
        coordinator = Coordinator(cparams, ccfg)
    return ModelBundle(
        denoiser=Denoiser(params, net_cfg),
        schedule=schedule,
        guidance=guidance if guidance is not None else GuidanceConfig(),
        scaling=scaling,
        skeleton=skel,
        coordinator=coordinator,
    )
