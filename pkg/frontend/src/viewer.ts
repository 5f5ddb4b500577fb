/** Viewer state: playhead, playback rate, camera, overlay toggles. */

export interface CameraPose {
  yaw: number;
  pitch: number;
  distance: number;
  target: [number, number, number];
}

export interface ViewerState {
  motionId: string | null;
  /** Total frames of the loaded motion; 0 when nothing is loaded. */
  frameCount: number;
  /** Always an integer in [0, frameCount) while a motion is loaded. */
  playhead: number;
  /** Strictly positive playback rate multiplier. */
  rate: number;
  playing: boolean;
  camera: CameraPose;
  showTrajectory: boolean;
  showSeams: boolean;
}

export type ViewerAction =
  | { type: "load"; motionId: string; frameCount: number }
  | { type: "scrub"; frame: number }
  | { type: "step"; delta: number }
  | { type: "setRate"; rate: number }
  | { type: "play" }
  | { type: "pause" }
  | { type: "orbit"; yaw: number; pitch: number }
  | { type: "zoom"; distance: number }
  | { type: "toggleTrajectory" }
  | { type: "toggleSeams" };

export function initialViewerState(): ViewerState {
  return {
    motionId: null,
    frameCount: 0,
    playhead: 0,
    rate: 1.0,
    playing: false,
    camera: { yaw: 0.6, pitch: 0.25, distance: 4.0, target: [0, 0.9, 0] },
    showTrajectory: true,
    showSeams: false,
  };
}

function clampFrame(frame: number, frameCount: number): number {
  if (frameCount <= 0) return 0;
  return Math.min(frameCount - 1, Math.max(0, Math.floor(frame)));
}

export function viewerReducer(state: ViewerState, action: ViewerAction): ViewerState {
  switch (action.type) {
    case "load":
      if (action.frameCount < 1) throw new RangeError("a motion must have at least one frame");
      return { ...state, motionId: action.motionId, frameCount: action.frameCount, playhead: 0, playing: false };
    case "scrub":
      return { ...state, playhead: clampFrame(action.frame, state.frameCount) };
    case "step":
      return { ...state, playhead: clampFrame(state.playhead + action.delta, state.frameCount) };
    case "setRate":
      if (!(action.rate > 0) || !Number.isFinite(action.rate)) {
        throw new RangeError(`playback rate must be positive and finite, got ${action.rate}`);
      }
      return { ...state, rate: action.rate };
    case "play":
      return state.motionId === null ? state : { ...state, playing: true };
    case "pause":
      return { ...state, playing: false };
    case "orbit":
      return { ...state, camera: { ...state.camera, yaw: action.yaw, pitch: action.pitch } };
    case "zoom":
      if (!(action.distance > 0)) throw new RangeError("camera distance must be positive");
      return { ...state, camera: { ...state.camera, distance: action.distance } };
    case "toggleTrajectory":
      return { ...state, showTrajectory: !state.showTrajectory };
    case "toggleSeams":
      return { ...state, showSeams: !state.showSeams };
  }
}

/** Advance the playhead by elapsed wall time; wraps at the end. */
export function tick(state: ViewerState, elapsedSeconds: number, fps: number): ViewerState {
  if (!state.playing || state.frameCount === 0) return state;
  const advanced = state.playhead + elapsedSeconds * fps * state.rate;
  return { ...state, playhead: Math.floor(advanced) % state.frameCount };
}
