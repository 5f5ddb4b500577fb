import { describe, expect, it } from "vitest";

import { draftToPayload, emptyDraft, setSelection, validateDraft } from "../src/mask";

const PARTS: Record<string, number[]> = {
  "right arm": [14, 17, 19, 21],
  "left arm": [13, 16, 18, 20],
  "upper body": [9, 13, 14, 16, 17, 18, 19, 20, 21],
  head: [12, 15],
};

describe("mask draft", () => {
  it("flags hard/soft overlap before any network call", () => {
    let d = emptyDraft();
    d = setSelection(d, "right arm", "hard");
    d = setSelection(d, "upper body", "soft");
    d = { ...d, instruction: "wave" };
    const errors = validateDraft(d, PARTS);
    expect(errors).toHaveLength(1);
    expect(errors[0]!.field).toBe("selections");
    expect(errors[0]!.message).toContain("14");
  });

  it("rejects unknown part groups and empty instructions", () => {
    let d = emptyDraft();
    d = setSelection(d, "tail", "hard");
    const errors = validateDraft(d, PARTS);
    expect(errors.map((e) => e.field).sort()).toEqual(["instruction", "selections"]);
  });

  it("builds a sorted disjoint payload", () => {
    let d = emptyDraft();
    d = setSelection(d, "right arm", "hard");
    d = setSelection(d, "head", "soft");
    d = { ...d, instruction: "raise the right arm" };
    expect(draftToPayload(d, PARTS)).toEqual({ hard: [14, 17, 19, 21], soft: [12, 15] });
  });

  it("deselecting a group removes it", () => {
    let d = setSelection(emptyDraft(), "head", "hard");
    d = setSelection(d, "head", null);
    d = { ...d, instruction: "x" };
    expect(draftToPayload(d, PARTS)).toEqual({ hard: [], soft: [] });
  });

  it("draftToPayload throws on invalid drafts", () => {
    const d = setSelection(emptyDraft(), "right arm", "hard");
    expect(() => draftToPayload(d, PARTS)).toThrow(/instruction/);
  });
});
