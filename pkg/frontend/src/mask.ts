import { FieldError, MaskPayload } from "./types";

/** Draft of a body-part mask annotation, validated before any network call. */
export interface MaskDraft {
  /** part-group name -> designation */
  selections: Record<string, "hard" | "soft">;
  instruction: string;
}

export function emptyDraft(): MaskDraft {
  return { selections: {}, instruction: "" };
}

export function setSelection(draft: MaskDraft, group: string, mode: "hard" | "soft" | null): MaskDraft {
  const selections = { ...draft.selections };
  if (mode === null) {
    delete selections[group];
  } else {
    selections[group] = mode;
  }
  return { ...draft, selections };
}

/**
 * Local validation mirroring the engine's mask rules: selected groups must
 * exist, the hard and soft joint sets must be disjoint, and an annotation
 * needs a non-empty instruction.
 */
export function validateDraft(draft: MaskDraft, parts: Record<string, number[]>): FieldError[] {
  const errors: FieldError[] = [];
  const hard = new Set<number>();
  const soft = new Set<number>();
  for (const [group, mode] of Object.entries(draft.selections)) {
    const joints = parts[group];
    if (joints === undefined) {
      errors.push({ field: "selections", message: `unknown part group "${group}"` });
      continue;
    }
    const target = mode === "hard" ? hard : soft;
    for (const j of joints) target.add(j);
  }
  const overlap = [...hard].filter((j) => soft.has(j)).sort((a, b) => a - b);
  if (overlap.length > 0) {
    errors.push({ field: "selections", message: `joints in both hard and soft sets: ${overlap.join(", ")}` });
  }
  if (draft.instruction.trim().length === 0) {
    errors.push({ field: "instruction", message: "instruction must be non-empty" });
  }
  return errors;
}

/** Resolve a validated draft into the service's mask payload. */
export function draftToPayload(draft: MaskDraft, parts: Record<string, number[]>): MaskPayload {
  const errors = validateDraft(draft, parts);
  if (errors.length > 0) {
    throw new Error(errors.map((e) => `${e.field}: ${e.message}`).join("; "));
  }
  const hard = new Set<number>();
  const soft = new Set<number>();
  for (const [group, mode] of Object.entries(draft.selections)) {
    for (const j of parts[group]!) (mode === "hard" ? hard : soft).add(j);
  }
  return { hard: [...hard].sort((a, b) => a - b), soft: [...soft].sort((a, b) => a - b) };
}
