"""Command-line entry point.

Every pipeline is a pure function of its inputs and --seed, so reruns
produce byte-identical outputs.  Errors print a machine-readable JSON
line on stderr and exit nonzero; usage errors exit 2.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import __version__, storage
from .blending import BlendSpec, BodyMask, blend
from .canon import ScalingFactors
from .cutmix import CutmixConfig, TripletStream
from .diffusion import DiffusionSchedule, GuidanceConfig, SamplerConfig, autoregressive_edit, trace_to_jsonl
from .errors import MotionEditError
from .metrics import diversity as metric_diversity
from .metrics import embed_motions, fid, foot_score, report_to_text, retrieval
from .motion import KeypointMotion, PoseMotion, forward_kinematics
from .neural import NetConfig, TrainConfig
from .posefit import FitConfig, fit_pose
from .skeleton import default_skeleton, load_skeleton
from .training import fit_scaling_from_stream, prepare_window, train_coordinator, train_denoiser

SKELETON_ENV = "MOTIONEDIT_SKELETON"


def _skeleton(path: str | None):
    path = path or os.environ.get(SKELETON_ENV)
    return load_skeleton(path) if path else default_skeleton()


def _fail(exc: MotionEditError) -> None:
    click.echo(json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True)
    sys.exit(1)


def _parse_parts(value: str | None) -> list[str]:
    return [p.strip() for p in value.split(",") if p.strip()] if value else []


@click.group()
@click.version_option(__version__)
@click.option("--skeleton", "skeleton_path", type=click.Path(exists=True), default=None,
              help=f"Skeleton config (default: built-in, or ${SKELETON_ENV}).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON file whose keys override subcommand defaults.")
@click.pass_context
def main(ctx, skeleton_path, config_path):
    """Motion editing engine: blending, triplet synthesis, training, editing."""
    ctx.ensure_object(dict)
    ctx.obj["skeleton_path"] = skeleton_path
    overrides = {}
    if config_path:
        with open(config_path) as fh:
            overrides = json.load(fh)
    ctx.obj["overrides"] = overrides
    if overrides:
        ctx.default_map = {cmd: overrides.get(cmd, {}) for cmd in main.commands}


@main.command("blend")
@click.argument("src", type=click.Path(exists=True))
@click.argument("tgt", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@click.option("--hard", default="", help="Comma-separated part groups replaced outright.")
@click.option("--soft", default="", help="Comma-separated part groups interpolated by alpha.")
@click.option("--alpha", default=1.0, type=click.FloatRange(0.0, 1.0))
@click.pass_context
def cmd_blend(ctx, src, tgt, out, hard, soft, alpha):
    """Blend TGT's masked body parts into SRC."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        m_src = storage.load_motion(src, skel)
        m_tgt = storage.load_motion(tgt, skel)
        mask = BodyMask.from_part_groups(skel, hard=_parse_parts(hard), soft=_parse_parts(soft))
        result = blend(m_src, m_tgt, BlendSpec(mask=mask, alpha=alpha))
        storage.save_motion(result, out, skel)
        click.echo(out)
    except MotionEditError as exc:
        _fail(exc)


@main.command("cutmix")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", default=10, type=click.IntRange(min=1))
@click.option("--ratio", default=1.0, type=click.FloatRange(0.0, 1.0))
@click.option("--window", default=16, type=click.IntRange(min=3))
@click.option("--seed", default=0, type=int)
@click.pass_context
def cmd_cutmix(ctx, manifest, out_dir, count, ratio, window, seed):
    """Synthesize an archive of edit triplets from a dataset manifest."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        annotated, base = storage.load_manifest(manifest, skel)
        stream = TripletStream(annotated, base,
                               CutmixConfig(ratio=ratio, window_frames=window, seed=seed))
        storage.save_triplets(out_dir, stream.take(count), skel)
        click.echo(out_dir)
    except MotionEditError as exc:
        _fail(exc)


@main.command("train")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", default=200, type=click.IntRange(min=1))
@click.option("--batch-size", default=16, type=click.IntRange(min=1))
@click.option("--lr", default=1e-4, type=float)
@click.option("--ratio", default=1.0, type=click.FloatRange(0.0, 1.0))
@click.option("--window", default=16, type=click.IntRange(min=3))
@click.option("--hidden", default=64, type=int)
@click.option("--blocks", default=1, type=int)
@click.option("--seed", default=0, type=int)
@click.pass_context
def cmd_train(ctx, manifest, out_path, steps, batch_size, lr, ratio, window, hidden, blocks, seed):
    """Train the windowed denoiser on synthesized triplets."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        annotated, base = storage.load_manifest(manifest, skel)
        stream = TripletStream(annotated, base,
                               CutmixConfig(ratio=ratio, window_frames=window, seed=seed))
        scaling = fit_scaling_from_stream(stream, skel)
        net_cfg = NetConfig(hidden=hidden, blocks=blocks, heads=2, mlp_hidden=2 * hidden, window=window)
        schedule = DiffusionSchedule.linear()
        cfg = TrainConfig(learning_rate=lr, batch_size=batch_size, steps=steps, seed=seed)
        denoiser, result = train_denoiser(stream, skel, scaling, schedule, net_cfg, cfg)
        storage.save_denoiser_checkpoint(
            out_path, denoiser, scaling,
            extra={"final_loss": result.loss_curve[-1], "steps": steps, "seed": seed},
        )
        click.echo(f"{out_path} loss {result.loss_curve[0]:.4f} -> {result.loss_curve[-1]:.4f}")
    except MotionEditError as exc:
        _fail(exc)


@main.command("train-coordinator")
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--steps", default=200, type=click.IntRange(min=1))
@click.option("--batch-size", default=16, type=click.IntRange(min=1))
@click.option("--lr", default=1e-4, type=float)
@click.option("--windows", default=128, type=click.IntRange(min=10),
              help="Windows per class drawn from the stream.")
@click.option("--window", default=16, type=click.IntRange(min=3))
@click.option("--hidden", default=64, type=int)
@click.option("--blocks", default=1, type=int)
@click.option("--seed", default=0, type=int)
@click.pass_context
def cmd_train_coordinator(ctx, manifest, out_path, steps, batch_size, lr, windows, window,
                          hidden, blocks, seed):
    """Train the coherence scorer: natural originals vs composited edits."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        annotated, base = storage.load_manifest(manifest, skel)
        stream = TripletStream(annotated, base,
                               CutmixConfig(ratio=1.0, window_frames=window, seed=seed))
        scaling = fit_scaling_from_stream(stream, skel)
        natural, composed = [], []
        for trip in stream.take(windows):
            pw = prepare_window(trip, skel, scaling)
            natural.append(pw.cond.original.reshape(window, -1))
            composed.append(pw.m0)
        schedule = DiffusionSchedule.linear()
        net_cfg = NetConfig(hidden=hidden, blocks=blocks, heads=2, mlp_hidden=2 * hidden, window=window)
        cfg = TrainConfig(learning_rate=lr, batch_size=batch_size, steps=steps, seed=seed)
        coord, accuracy, _ = train_coordinator(natural, composed, schedule, net_cfg, cfg)
        storage.save_coordinator_checkpoint(out_path, coord, scaling,
                                            extra={"holdout_accuracy": accuracy, "seed": seed})
        click.echo(f"{out_path} holdout accuracy {accuracy:.3f}")
    except MotionEditError as exc:
        _fail(exc)


def _parse_instructions(entries: tuple[str, ...]):
    """Each entry is 'text' or 'lo:hi:text' for time-variant editing."""
    if len(entries) == 1 and ":" not in entries[0]:
        return entries[0]
    spans = []
    for e in entries:
        parts = e.split(":", 2)
        if len(parts) != 3:
            raise click.UsageError(f"ranged instruction must be lo:hi:text, got {e!r}")
        spans.append(((int(parts[0]), int(parts[1])), parts[2]))
    return spans


@main.command("edit")
@click.argument("motion", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--coordinator", "coordinator_path", type=click.Path(exists=True), default=None)
@click.option("--instruction", "instructions", multiple=True, required=True,
              help="Edit text; repeat with lo:hi:text prefixes for frame ranges.")
@click.option("--cfg-weight", default=3.0, type=float)
@click.option("--guidance-strength", default=1.0, type=float)
@click.option("--guidance-steps", default=20, type=int)
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@click.option("--seed", default=0, type=int)
@click.pass_context
def cmd_edit(ctx, motion, out, checkpoint, coordinator_path, instructions, cfg_weight,
             guidance_strength, guidance_steps, trace_path, seed):
    """Apply a text-guided edit to a keypoint motion, window by window."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        guidance = GuidanceConfig(cfg_weight=cfg_weight, coordinator_strength=guidance_strength,
                                  coordinator_steps=guidance_steps)
        bundle = storage.load_model_bundle(checkpoint, skel, coordinator_path, guidance=guidance)
        m_in = storage.load_motion(motion, skel)
        if isinstance(m_in, PoseMotion):
            m_in = forward_kinematics(m_in, skel)
        cfg = SamplerConfig(window=bundle.denoiser.cfg.window, fps=m_in.fps, seed=seed)
        edited, trace = autoregressive_edit(m_in, _parse_instructions(instructions), bundle, cfg)
        storage.save_motion(edited, out, skel)
        if trace_path:
            with open(trace_path, "w") as fh:
                fh.write(trace_to_jsonl(trace))
        click.echo(out)
    except MotionEditError as exc:
        _fail(exc)


@main.command("fit-pose")
@click.argument("keypoints", type=click.Path(exists=True))
@click.argument("out", type=click.Path())
@click.option("--iterations", default=120, type=click.IntRange(min=1))
@click.option("--lr", default=0.01, type=float)
@click.pass_context
def cmd_fit_pose(ctx, keypoints, out, iterations, lr):
    """Recover pose parameters from a keypoint motion file."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        target = storage.load_motion(keypoints, skel)
        if not isinstance(target, KeypointMotion):
            raise MotionEditError("fit-pose expects a keypoint motion file")
        pose, curve = fit_pose(target, skel, cfg=FitConfig(iterations=iterations, learning_rate=lr))
        storage.save_motion(pose, out, skel)
        click.echo(f"{out} residual {curve[0]:.6f} -> {curve[-1]:.6f}")
    except MotionEditError as exc:
        _fail(exc)


def _load_dir(directory: str, skel) -> list[KeypointMotion]:
    motions = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        m = storage.load_motion(os.path.join(directory, name), skel)
        if isinstance(m, PoseMotion):
            m = forward_kinematics(m, skel)
        motions.append(m)
    return motions


@main.command("metrics")
@click.option("--edited", "edited_dir", required=True, type=click.Path(exists=True))
@click.option("--source", "source_dir", type=click.Path(exists=True), default=None)
@click.option("--target", "target_dir", type=click.Path(exists=True), default=None)
@click.option("--gallery-size", default=32, type=click.IntRange(min=2))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.pass_context
def cmd_metrics(ctx, edited_dir, source_dir, target_dir, gallery_size, out_path, seed):
    """Evaluate directories of motion files; writes a structured report."""
    try:
        skel = _skeleton(ctx.obj["skeleton_path"])
        edited = _load_dir(edited_dir, skel)
        feats_e = embed_motions(edited, skel)
        rng = np.random.default_rng(seed)
        values: dict = {
            "diversity": metric_diversity(feats_e, pairs=min(1000, 10 * feats_e.count), rng=rng),
            "foot_score_mean": float(np.mean([foot_score(m, skel) for m in edited])),
            "count": feats_e.count,
        }
        if target_dir:
            feats_t = embed_motions(_load_dir(target_dir, skel), skel)
            values["fid_edited_vs_target"] = fid(feats_e, feats_t)
            if source_dir:
                feats_s = embed_motions(_load_dir(source_dir, skel), skel)
                e2s, e2t = retrieval(feats_e, feats_s, feats_t,
                                     gallery_size=min(gallery_size, feats_e.count), rng=rng)
                values["e2s"] = e2s.to_dict()
                values["e2t"] = e2t.to_dict()
        report = report_to_text(values, {"seed": seed, "gallery_size": gallery_size,
                                         "engine_version": __version__})
        with open(out_path, "w") as fh:
            fh.write(report + "\n")
        click.echo(out_path)
    except MotionEditError as exc:
        _fail(exc)


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8787, type=int)
@click.option("--checkpoint", type=click.Path(exists=True), default=None)
@click.option("--coordinator", "coordinator_path", type=click.Path(exists=True), default=None)
@click.option("--motions", "motions_dir", type=click.Path(exists=True), default=None)
@click.pass_context
def cmd_serve(ctx, host, port, checkpoint, coordinator_path, motions_dir):
    """Run the JSON-over-HTTP studio service."""
    import uvicorn

    from .service import build_app

    skel = _skeleton(ctx.obj["skeleton_path"])
    app = build_app(skel, checkpoint_path=checkpoint, coordinator_path=coordinator_path,
                    motions_dir=motions_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
