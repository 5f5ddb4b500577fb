import { describe, expect, it } from "vitest";

import { initialViewerState, tick, viewerReducer } from "../src/viewer";

describe("viewer state", () => {
  it("clamps the playhead to [0, frameCount)", () => {
    let s = viewerReducer(initialViewerState(), { type: "load", motionId: "m", frameCount: 20 });
    s = viewerReducer(s, { type: "scrub", frame: 35 });
    expect(s.playhead).toBe(19);
    s = viewerReducer(s, { type: "scrub", frame: -4 });
    expect(s.playhead).toBe(0);
    s = viewerReducer(s, { type: "scrub", frame: 7.9 });
    expect(s.playhead).toBe(7);
  });

  it("stepping saturates at the ends", () => {
    let s = viewerReducer(initialViewerState(), { type: "load", motionId: "m", frameCount: 3 });
    s = viewerReducer(s, { type: "step", delta: 10 });
    expect(s.playhead).toBe(2);
    s = viewerReducer(s, { type: "step", delta: -10 });
    expect(s.playhead).toBe(0);
  });

  it("rejects non-positive playback rates", () => {
    const s = initialViewerState();
    expect(() => viewerReducer(s, { type: "setRate", rate: 0 })).toThrow(RangeError);
    expect(() => viewerReducer(s, { type: "setRate", rate: -1 })).toThrow(RangeError);
    expect(() => viewerReducer(s, { type: "setRate", rate: Infinity })).toThrow(RangeError);
    expect(viewerReducer(s, { type: "setRate", rate: 0.5 }).rate).toBe(0.5);
  });

  it("rejects empty motions and zoom through the target", () => {
    expect(() => viewerReducer(initialViewerState(), { type: "load", motionId: "m", frameCount: 0 })).toThrow();
    expect(() => viewerReducer(initialViewerState(), { type: "zoom", distance: 0 })).toThrow(RangeError);
  });

  it("does not play without a motion", () => {
    const s = viewerReducer(initialViewerState(), { type: "play" });
    expect(s.playing).toBe(false);
  });

  it("tick advances by rate * fps and wraps", () => {
    let s = viewerReducer(initialViewerState(), { type: "load", motionId: "m", frameCount: 10 });
    s = viewerReducer(s, { type: "play" });
    s = viewerReducer(s, { type: "setRate", rate: 2 });
    s = tick(s, 0.25, 20); // 0.25s * 20fps * 2 = 10 frames -> wraps to 0
    expect(s.playhead).toBe(0);
    s = tick(s, 0.1, 20); // 4 frames
    expect(s.playhead).toBe(4);
  });

  it("overlay toggles flip independently", () => {
    let s = initialViewerState();
    const t0 = s.showTrajectory;
    s = viewerReducer(s, { type: "toggleTrajectory" });
    expect(s.showTrajectory).toBe(!t0);
    const s2 = viewerReducer(s, { type: "toggleSeams" });
    expect(s2.showSeams).toBe(!s.showSeams);
    expect(s2.showTrajectory).toBe(s.showTrajectory);
  });
});
