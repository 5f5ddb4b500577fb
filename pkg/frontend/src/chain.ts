/**
 * Client-side edit chain: each successful edit becomes the new head so the
 * next instruction builds on it; undo pops the head locally while the
 * server keeps the full history.
 */

export interface ChainNode {
  motionId: string;
  instruction: string;
  frameRange: [number, number] | null;
  seed: number;
  jobId: string;
}

export interface EditChainState {
  /** Motion the chain started from. */
  rootId: string;
  /** Applied edits, oldest first; the last entry is the current head. */
  nodes: ChainNode[];
  /** Nodes removed by undo, most recent first (server keeps them too). */
  undone: ChainNode[];
}

export function startChain(rootId: string): EditChainState {
  return { rootId, nodes: [], undone: [] };
}

/** Motion id the next edit should take as input. */
export function headId(chain: EditChainState): string {
  const last = chain.nodes[chain.nodes.length - 1];
  return last === undefined ? chain.rootId : last.motionId;
}

/** A new edit invalidates the redo trail, like any editor history. */
export function pushEdit(chain: EditChainState, node: ChainNode): EditChainState {
  return { ...chain, nodes: [...chain.nodes, node], undone: [] };
}

export function undo(chain: EditChainState): EditChainState {
  const last = chain.nodes[chain.nodes.length - 1];
  if (last === undefined) return chain;
  return { ...chain, nodes: chain.nodes.slice(0, -1), undone: [last, ...chain.undone] };
}

export function redo(chain: EditChainState): EditChainState {
  const [next, ...rest] = chain.undone;
  if (next === undefined) return chain;
  return { ...chain, nodes: [...chain.nodes, next], undone: rest };
}

export function validateFrameRange(range: [number, number], frameCount: number): string | null {
  const [lo, hi] = range;
  if (!Number.isInteger(lo) || !Number.isInteger(hi)) return "frame range must be integers";
  if (lo < 0 || hi > frameCount || lo >= hi) {
    return `range [${lo}, ${hi}) invalid for ${frameCount} frames`;
  }
  return null;
}
