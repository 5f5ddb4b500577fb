import {
  AnnotationRecord,
  ChainEntry,
  EditResponse,
  FrameSlice,
  MaskPayload,
  MotionSummary,
  ServiceError,
  SkeletonConfig,
} from "./types";

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Typed client for the studio service.
 *
 * Every mutation carries a client-generated request id so a retry after a
 * dropped response replays the original result instead of repeating the
 * action.  Mutations are serialized client-side; reads run concurrently.
 */
export class StudioClient {
  private requestCounter = 0;
  private readonly sessionTag: string;
  private mutationQueue: Promise<unknown> = Promise.resolve();

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
    sessionTag?: string,
  ) {
    this.sessionTag = sessionTag ?? Math.random().toString(36).slice(2, 10);
  }

  nextRequestId(): string {
    return `${this.sessionTag}-${this.requestCounter++}`;
  }

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`);
    return this.unwrap<T>(res);
  }

  private post<T>(path: string, body: Record<string, unknown>): Promise<T> {
    const payload = { ...body, request_id: body.request_id ?? this.nextRequestId() };
    const run = async (): Promise<T> => {
      const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
      });
      return this.unwrap<T>(res);
    };
    // serialize mutations; a failure must not wedge the queue
    const next = this.mutationQueue.then(run, run);
    this.mutationQueue = next.catch(() => undefined);
    return next;
  }

  private async unwrap<T>(res: Response): Promise<T> {
    const body = (await res.json()) as Record<string, unknown>;
    if (!res.ok) {
      throw new ServiceError(res.status, (body.detail ?? "request failed") as never);
    }
    return body as T;
  }

  getSkeleton(): Promise<{ skeleton: SkeletonConfig; hash: string }> {
    return this.get("/skeleton");
  }

  listMotions(): Promise<{ motions: MotionSummary[] }> {
    return this.get("/motions");
  }

  getFrames(motionId: string, from?: number, to?: number): Promise<FrameSlice> {
    const params = new URLSearchParams();
    if (from !== undefined) params.set("from", String(from));
    if (to !== undefined) params.set("to", String(to));
    const qs = params.size > 0 ? `?${params.toString()}` : "";
    return this.get(`/motions/${encodeURIComponent(motionId)}${qs}`);
  }

  getParts(): Promise<{ parts: Record<string, number[]> }> {
    return this.get("/parts");
  }

  blend(srcId: string, tgtId: string, mask: MaskPayload, alpha = 1.0): Promise<{ motion_id: string }> {
    return this.post("/blend", { src_id: srcId, tgt_id: tgtId, mask, alpha });
  }

  edit(
    motionId: string,
    instruction: string,
    opts: { frameRange?: [number, number]; seed?: number; requestId?: string } = {},
  ): Promise<EditResponse> {
    return this.post("/edit", {
      motion_id: motionId,
      instruction,
      frame_range: opts.frameRange ?? null,
      seed: opts.seed ?? 0,
      request_id: opts.requestId,
    });
  }

  saveAnnotation(motionId: string, mask: MaskPayload, instruction: string): Promise<{ annotation: AnnotationRecord }> {
    return this.post("/annotations", { motion_id: motionId, mask, instruction });
  }

  listAnnotations(): Promise<{ annotations: AnnotationRecord[] }> {
    return this.get("/annotations");
  }

  listEdits(): Promise<{ chain: ChainEntry[] }> {
    return this.get("/edits");
  }

  getJob(jobId: string): Promise<{ job_id: string; status: string; motion_id: string | null }> {
    return this.get(`/jobs/${encodeURIComponent(jobId)}`);
  }
}
