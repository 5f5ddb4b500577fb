import { Frame, SkeletonConfig, Vec3 } from "./types";
import { CameraPose, ViewerState } from "./viewer";

/**
 * Minimal draw surface so the renderer is testable without a DOM canvas;
 * app code adapts CanvasRenderingContext2D to this interface.
 */
export interface DrawSurface {
  readonly width: number;
  readonly height: number;
  clear(): void;
  line(x1: number, y1: number, x2: number, y2: number, color: string, width: number): void;
  circle(x: number, y: number, radius: number, color: string): void;
}

/** Bone list as keypoint index pairs, derived from the skeleton topology. */
export function boneIndexPairs(config: SkeletonConfig): Array<[number, number]> {
  const primary = new Map<string, number>();
  config.keypoints.forEach((kp, i) => {
    const isOrigin = kp.offset[0] === 0 && kp.offset[1] === 0 && kp.offset[2] === 0;
    if (isOrigin && !primary.has(kp.joint)) primary.set(kp.joint, i);
  });
  const parentOf = new Map<string, string | null>(config.joints.map((j) => [j.name, j.parent]));
  const bones: Array<[number, number]> = [];
  for (const [joint, idx] of primary) {
    const parent = parentOf.get(joint);
    if (parent != null) {
      const pIdx = primary.get(parent);
      if (pIdx !== undefined) bones.push([pIdx, idx]);
    }
  }
  config.keypoints.forEach((kp, i) => {
    if (primary.get(kp.joint) !== i) {
      const anchor = primary.get(kp.joint);
      if (anchor !== undefined) bones.push([anchor, i]);
    }
  });
  return bones;
}

/** Orbit-camera perspective projection onto the surface. */
export function project(p: Vec3, camera: CameraPose, width: number, height: number): [number, number] {
  const [tx, ty, tz] = camera.target;
  const x = p[0] - tx;
  const y = p[1] - ty;
  const z = p[2] - tz;
  const cy = Math.cos(camera.yaw);
  const sy = Math.sin(camera.yaw);
  const x1 = cy * x - sy * z;
  const z1 = sy * x + cy * z;
  const cp = Math.cos(camera.pitch);
  const sp = Math.sin(camera.pitch);
  const y2 = cp * y - sp * z1;
  const z2 = sp * y + cp * z1 + camera.distance;
  const depth = Math.max(z2, 0.1);
  const focal = 0.8 * Math.min(width, height);
  return [width / 2 + (focal * x1) / depth, height / 2 - (focal * y2) / depth];
}

/** Orange (start) to blue (end), matching the trajectory gradient. */
export function gradientColor(t: number): string {
  const clamped = Math.min(1, Math.max(0, t));
  const r = Math.round(255 + (64 - 255) * clamped);
  const g = Math.round(140 + (110 - 140) * clamped);
  const b = Math.round(0 + (255 - 0) * clamped);
  return `rgb(${r},${g},${b})`;
}

export const PELVIS_INDEX = 0;
export const BONE_COLOR = "#cccccc";
export const MARKER_COLOR = "#ff4444";
export const SEAM_COLOR = "#888888";
export const TIMELINE_HEIGHT = 14;

export interface RenderOptions {
  /** Sampler window length; seam markers sit at multiples of window - 2. */
  window?: number;
}

/**
 * Draw one frame of the stick figure plus overlays.
 *
 * The frame drawn is exactly frames[state.playhead]; the trajectory
 * gradient traces the pelvis across all frames; seam markers tick the
 * timeline strip at multiples of (window - 2).
 */
export function renderSkeleton(
  frames: Frame[],
  state: ViewerState,
  surface: DrawSurface,
  config: SkeletonConfig,
  opts: RenderOptions = {},
): void {
  surface.clear();
  if (frames.length === 0) return;
  const frame = frames[Math.min(state.playhead, frames.length - 1)]!;
  const cam = state.camera;

  if (state.showTrajectory) {
    for (let i = 1; i < frames.length; i++) {
      const a = project(frames[i - 1]![PELVIS_INDEX]!, cam, surface.width, surface.height);
      const b = project(frames[i]![PELVIS_INDEX]!, cam, surface.width, surface.height);
      surface.line(a[0], a[1], b[0], b[1], gradientColor(i / Math.max(frames.length - 1, 1)), 2);
    }
    if (frames.length === 1) {
      const p = project(frames[0]![PELVIS_INDEX]!, cam, surface.width, surface.height);
      surface.circle(p[0], p[1], 2, gradientColor(0));
    }
  }

  for (const [a, b] of boneIndexPairs(config)) {
    const pa = project(frame[a]!, cam, surface.width, surface.height);
    const pb = project(frame[b]!, cam, surface.width, surface.height);
    surface.line(pa[0], pa[1], pb[0], pb[1], BONE_COLOR, 2);
  }
  for (const p of frame) {
    const q = project(p, cam, surface.width, surface.height);
    surface.circle(q[0], q[1], 3, BONE_COLOR);
  }
  const pelvis = project(frame[PELVIS_INDEX]!, cam, surface.width, surface.height);
  surface.circle(pelvis[0], pelvis[1], 5, MARKER_COLOR);

  if (state.showSeams && opts.window !== undefined && opts.window > 2) {
    const stride = opts.window - 2;
    for (let f = stride; f < frames.length; f += stride) {
      const x = (f / frames.length) * surface.width;
      surface.line(x, surface.height - TIMELINE_HEIGHT, x, surface.height, SEAM_COLOR, 1);
    }
  }
  // playhead tick on the timeline strip
  const px = ((state.playhead + 0.5) / frames.length) * surface.width;
  surface.line(px, surface.height - TIMELINE_HEIGHT, px, surface.height, MARKER_COLOR, 2);
}
