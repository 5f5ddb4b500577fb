import { StudioClient } from "./api";
import { EditChainState, headId, pushEdit, startChain, undo, validateFrameRange } from "./chain";
import { draftToPayload, emptyDraft, MaskDraft, setSelection, validateDraft } from "./mask";
import { DrawSurface, renderSkeleton } from "./render";
import { Frame, ServiceError, SkeletonConfig } from "./types";
import { initialViewerState, tick, ViewerAction, viewerReducer, ViewerState } from "./viewer";

/** CanvasRenderingContext2D adapter for the renderer's draw surface. */
export function canvasSurface(ctx: CanvasRenderingContext2D): DrawSurface {
  return {
    width: ctx.canvas.width,
    height: ctx.canvas.height,
    clear: () => {
      ctx.fillStyle = "#141414";
      ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
    },
    line: (x1, y1, x2, y2, color, width) => {
      ctx.strokeStyle = color;
      ctx.lineWidth = width;
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
    },
    circle: (x, y, radius, color) => {
      ctx.fillStyle = color;
      ctx.beginPath();
      ctx.arc(x, y, radius, 0, 2 * Math.PI);
      ctx.fill();
    },
  };
}

interface StudioElements {
  canvas: HTMLCanvasElement;
  motionList: HTMLSelectElement;
  scrubber: HTMLInputElement;
  instruction: HTMLInputElement;
  frameFrom: HTMLInputElement;
  frameTo: HTMLInputElement;
  editButton: HTMLButtonElement;
  undoButton: HTMLButtonElement;
  annotateButton: HTMLButtonElement;
  partList: HTMLElement;
  errorBanner: HTMLElement;
  annotationLog: HTMLElement;
}

/** Wires the studio widgets to the service; returns a dispose function. */
export async function mountStudio(root: StudioElements, client: StudioClient): Promise<() => void> {
  const surface = canvasSurface(root.canvas.getContext("2d")!);
  let viewer: ViewerState = initialViewerState();
  let frames: Frame[] = [];
  let fps = 20;
  let skeleton: SkeletonConfig | null = null;
  let parts: Record<string, number[]> = {};
  let draft: MaskDraft = emptyDraft();
  let chain: EditChainState | null = null;
  let disposed = false;

  const showError = (msg: string | null) => {
    root.errorBanner.textContent = msg ?? "";
    root.errorBanner.style.display = msg === null ? "none" : "block";
  };

  const draw = () => {
    if (skeleton !== null) renderSkeleton(frames, viewer, surface, skeleton, { window: 16 });
  };

  const dispatch = (action: ViewerAction) => {
    viewer = viewerReducer(viewer, action);
    root.scrubber.value = String(viewer.playhead);
    draw();
  };

  const loadMotion = async (motionId: string) => {
    try {
      const slice = await client.getFrames(motionId);
      frames = slice.frames;
      fps = slice.fps;
      root.scrubber.max = String(slice.total_frames - 1);
      dispatch({ type: "load", motionId, frameCount: slice.total_frames });
      chain = startChain(motionId);
      showError(null);
    } catch (err) {
      // fetch failure: banner only, prior state preserved
      showError(err instanceof Error ? err.message : String(err));
    }
  };

  skeleton = (await client.getSkeleton()).skeleton;
  parts = (await client.getParts()).parts;
  for (const name of Object.keys(parts)) {
    const row = document.createElement("label");
    const select = document.createElement("select");
    for (const mode of ["off", "hard", "soft"]) {
      const opt = document.createElement("option");
      opt.value = mode;
      opt.textContent = mode;
      select.appendChild(opt);
    }
    select.addEventListener("change", () => {
      draft = setSelection(draft, name, select.value === "off" ? null : (select.value as "hard" | "soft"));
    });
    row.append(select, ` ${name}`);
    root.partList.appendChild(row);
  }

  const motions = (await client.listMotions()).motions;
  for (const m of motions) {
    const opt = document.createElement("option");
    opt.value = m.id;
    opt.textContent = `${m.id} (${m.frames}f @ ${m.fps}fps)`;
    root.motionList.appendChild(opt);
  }
  root.motionList.addEventListener("change", () => void loadMotion(root.motionList.value));

  root.scrubber.addEventListener("input", () => dispatch({ type: "scrub", frame: Number(root.scrubber.value) }));

  root.editButton.addEventListener("click", async () => {
    if (chain === null) return;
    const instruction = root.instruction.value;
    if (instruction.trim().length === 0) {
      showError("instruction: instruction must be non-empty");
      return;
    }
    let frameRange: [number, number] | undefined;
    if (root.frameFrom.value !== "" || root.frameTo.value !== "") {
      frameRange = [Number(root.frameFrom.value), Number(root.frameTo.value)];
      const rangeError = validateFrameRange(frameRange, viewer.frameCount);
      if (rangeError !== null) {
        showError(`frame_range: ${rangeError}`);
        return;
      }
    }
    try {
      const res = await client.edit(headId(chain), instruction, { frameRange });
      chain = pushEdit(chain, {
        motionId: res.motion_id,
        instruction,
        frameRange: frameRange ?? null,
        seed: 0,
        jobId: res.job_id,
      });
      await loadMotion(res.motion_id);
    } catch (err) {
      // chain unchanged; the button remains usable as the retry affordance
      showError(err instanceof ServiceError ? err.message : String(err));
    }
  });

  root.undoButton.addEventListener("click", () => {
    if (chain === null) return;
    chain = undo(chain);
    void loadMotion(headId(chain));
  });

  root.annotateButton.addEventListener("click", async () => {
    if (viewer.motionId === null) return;
    draft = { ...draft, instruction: root.instruction.value };
    const errors = validateDraft(draft, parts);
    if (errors.length > 0) {
      showError(errors.map((e) => `${e.field}: ${e.message}`).join("; "));
      return;
    }
    try {
      await client.saveAnnotation(viewer.motionId, draftToPayload(draft, parts), draft.instruction);
      draft = emptyDraft();
      const all = await client.listAnnotations();
      root.annotationLog.textContent = all.annotations
        .map((a) => `${a.id}: ${a.motion_id} "${a.instruction}"`)
        .join("\n");
      showError(null);
    } catch (err) {
      showError(err instanceof ServiceError ? err.message : String(err));
    }
  });

  let last = performance.now();
  const loop = (now: number) => {
    if (disposed) return;
    viewer = tick(viewer, (now - last) / 1000, fps);
    last = now;
    if (viewer.playing) draw();
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);

  if (motions.length > 0) await loadMotion(motions[0]!.id);
  return () => {
    disposed = true;
  };
}
