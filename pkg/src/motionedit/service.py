"""JSON-over-HTTP service consumed by the studio UI.

Session state is append-only: stored motions are never mutated, every
blend or edit mints a new id.  Mutations serialize through one lock;
reads are lock-free snapshots of immutable motions.
"""

from __future__ import annotations

import itertools
import os
import threading
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from . import __version__, storage
from .blending import BlendSpec, BodyMask, blend
from .diffusion import GuidanceConfig, SamplerConfig, autoregressive_edit
from .errors import MaskError, MotionEditError
from .motion import KeypointMotion, PoseMotion, forward_kinematics
from .skeleton import Skeleton


@dataclass
class MotionEntry:
    pose: PoseMotion | None
    keypoints: KeypointMotion
    source: str  # "library" | "blend" | "edit"


@dataclass
class SessionState:
    skeleton: Skeleton
    motions: dict[str, MotionEntry] = field(default_factory=dict)
    annotations: list[dict] = field(default_factory=list)
    edit_chain: list[dict] = field(default_factory=list)
    jobs: dict[str, dict] = field(default_factory=dict)
    reports: dict[str, str] = field(default_factory=dict)
    _counter: itertools.count = field(default_factory=itertools.count)
    lock: threading.Lock = field(default_factory=threading.Lock)
    seen_requests: dict[str, dict] = field(default_factory=dict)

    def new_id(self, prefix: str) -> str:
        return f"{prefix}-{next(self._counter):05d}"

    def add(self, prefix: str, pose: PoseMotion | None, keypoints: KeypointMotion, source: str) -> str:
        motion_id = self.new_id(prefix)
        self.motions[motion_id] = MotionEntry(pose=pose, keypoints=keypoints, source=source)
        return motion_id

    def get(self, motion_id: str) -> MotionEntry:
        entry = self.motions.get(motion_id)
        if entry is None:
            raise HTTPException(status_code=404, detail=f"unknown motion id {motion_id!r}")
        return entry


class BlendRequest(BaseModel):
    src_id: str
    tgt_id: str
    mask: dict
    alpha: float = 1.0
    request_id: str | None = None


class EditRequest(BaseModel):
    motion_id: str
    instruction: str
    frame_range: tuple[int, int] | None = None
    seed: int = 0
    request_id: str | None = None


class AnnotationRequest(BaseModel):
    motion_id: str
    mask: dict
    instruction: str
    request_id: str | None = None


def _envelope(payload: dict) -> dict:
    return {"engine_version": __version__, **payload}


def _mask_from_payload(raw: dict, skel: Skeleton) -> BodyMask:
    try:
        return BodyMask.from_dict(raw)
    except MaskError as exc:
        raise HTTPException(status_code=422, detail={"field": "mask", "message": str(exc)})


def build_app(skel: Skeleton, checkpoint_path: str | None = None,
              coordinator_path: str | None = None, motions_dir: str | None = None,
              bundle=None) -> FastAPI:
    app = FastAPI(title="motionedit studio service", version=__version__)
    state = SessionState(skeleton=skel)
    app.state.session = state

    if bundle is None and checkpoint_path:
        bundle = storage.load_model_bundle(checkpoint_path, skel, coordinator_path)
    app.state.bundle = bundle

    if motions_dir:
        for name in sorted(os.listdir(motions_dir)):
            if not name.endswith(".json"):
                continue
            m = storage.load_motion(os.path.join(motions_dir, name), skel)
            pose = m if isinstance(m, PoseMotion) else None
            kp = forward_kinematics(m, skel) if pose is not None else m
            state.motions[name[:-5]] = MotionEntry(pose=pose, keypoints=kp, source="library")

    def _replay(request_id: str | None) -> dict | None:
        if request_id is not None and request_id in state.seen_requests:
            return state.seen_requests[request_id]
        return None

    def _remember(request_id: str | None, response: dict) -> dict:
        if request_id is not None:
            state.seen_requests[request_id] = response
        return response

    @app.get("/skeleton")
    def get_skeleton():
        return _envelope({"skeleton": skel.to_config(), "hash": skel.content_hash()})

    @app.get("/motions")
    def list_motions():
        return _envelope({"motions": [
            {"id": mid, "frames": e.keypoints.num_frames, "fps": e.keypoints.fps,
             "source": e.source, "has_pose": e.pose is not None}
            for mid, e in state.motions.items()
        ]})

    @app.get("/motions/{motion_id}")
    def get_motion(motion_id: str, from_: int = Query(default=0, alias="from"),
                   to: int | None = Query(default=None)):
        entry = state.get(motion_id)
        L = entry.keypoints.num_frames
        end = L if to is None else to
        if not 0 <= from_ < end <= L:
            raise HTTPException(status_code=422,
                                detail={"field": "from/to", "message": f"range [{from_}, {end}) invalid for {L} frames"})
        return _envelope({
            "id": motion_id, "fps": entry.keypoints.fps, "from": from_, "to": end,
            "total_frames": L,
            "frames": entry.keypoints.positions[from_:end].tolist(),
        })

    @app.get("/parts")
    def get_parts():
        return _envelope({"parts": {name: sorted(idx) for name, idx in skel.part_groups.items()}})

    @app.post("/blend")
    def post_blend(req: BlendRequest):
        with state.lock:
            cached = _replay(req.request_id)
            if cached:
                return cached
            src = state.get(req.src_id)
            tgt = state.get(req.tgt_id)
            if src.pose is None or tgt.pose is None:
                raise HTTPException(status_code=422,
                                    detail={"field": "src_id", "message": "blending requires pose motions"})
            mask = _mask_from_payload(req.mask, skel)
            try:
                result = blend(src.pose, tgt.pose, BlendSpec(mask=mask, alpha=req.alpha))
            except MotionEditError as exc:
                raise HTTPException(status_code=422, detail={"field": "mask", "message": str(exc)})
            motion_id = state.add("blend", result, forward_kinematics(result, skel), "blend")
            return _remember(req.request_id, _envelope({"motion_id": motion_id}))

    @app.post("/edit")
    def post_edit(req: EditRequest):
        if app.state.bundle is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded; start with --checkpoint")
        with state.lock:
            cached = _replay(req.request_id)
            if cached:
                return cached
            entry = state.get(req.motion_id)
            kp = entry.keypoints
            instruction: Any = req.instruction
            if req.frame_range is not None:
                lo, hi = req.frame_range
                if not 0 <= lo < hi <= kp.num_frames:
                    raise HTTPException(status_code=422,
                                        detail={"field": "frame_range",
                                                "message": f"range [{lo}, {hi}) invalid for {kp.num_frames} frames"})
                spans = [((lo, hi), req.instruction)]
                if lo > 0:
                    spans.insert(0, ((0, lo), None))
                if hi < kp.num_frames:
                    spans.append(((hi, kp.num_frames), None))
                instruction = spans
            b = app.state.bundle
            cfg = SamplerConfig(window=b.denoiser.cfg.window, fps=kp.fps, seed=req.seed)
            job_id = state.new_id("job")
            state.jobs[job_id] = {"status": "running", "motion_id": None}
            try:
                edited, trace = autoregressive_edit(kp, instruction, b, cfg)
            except MotionEditError as exc:
                state.jobs[job_id] = {"status": "failed", "error": str(exc)}
                raise HTTPException(status_code=422, detail={"field": "motion_id", "message": str(exc)})
            motion_id = state.add("edit", None, edited, "edit")
            state.jobs[job_id] = {"status": "done", "motion_id": motion_id}
            state.edit_chain.append({
                "job_id": job_id, "input_id": req.motion_id, "motion_id": motion_id,
                "instruction": req.instruction, "frame_range": req.frame_range, "seed": req.seed,
            })
            return _remember(req.request_id, _envelope({
                "motion_id": motion_id, "job_id": job_id, "trace": trace,
            }))

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"unknown job id {job_id!r}")
        return _envelope({"job_id": job_id, **job})

    @app.get("/edits")
    def get_edits():
        return _envelope({"chain": state.edit_chain})

    @app.post("/annotations")
    def post_annotation(req: AnnotationRequest):
        with state.lock:
            cached = _replay(req.request_id)
            if cached:
                return cached
            state.get(req.motion_id)
            _mask_from_payload(req.mask, skel)
            if not req.instruction.strip():
                raise HTTPException(status_code=422,
                                    detail={"field": "instruction", "message": "instruction must be non-empty"})
            record = {"id": state.new_id("ann"), "motion_id": req.motion_id,
                      "mask": req.mask, "instruction": req.instruction}
            state.annotations.append(record)
            return _remember(req.request_id, _envelope({"annotation": record}))

    @app.get("/annotations")
    def get_annotations():
        return _envelope({"annotations": state.annotations})

    @app.get("/metrics/{report}")
    def get_metrics(report: str):
        text = state.reports.get(report)
        if text is None:
            raise HTTPException(status_code=404, detail=f"unknown report {report!r}")
        return _envelope({"report": report, "content": text})

    return app
