/** JSON shapes exchanged with the motionedit service. */

export type Vec3 = [number, number, number];

/** One frame: 28 keypoints, xyz each. */
export type Frame = Vec3[];

export interface SkeletonJoint {
  name: string;
  parent: string | null;
  offset: Vec3;
}

export interface SkeletonKeypoint {
  name: string;
  joint: string;
  offset: Vec3;
}

export interface SkeletonConfig {
  format_version: number;
  name: string;
  up_axis: string;
  joints: SkeletonJoint[];
  keypoints: SkeletonKeypoint[];
  part_groups: Record<string, number[]>;
}

export interface MotionSummary {
  id: string;
  frames: number;
  fps: number;
  source: "library" | "blend" | "edit";
  has_pose: boolean;
}

export interface FrameSlice {
  id: string;
  fps: number;
  from: number;
  to: number;
  total_frames: number;
  frames: Frame[];
}

/** Hard/soft joint-id sets, matching the engine's body mask payload. */
export interface MaskPayload {
  hard: number[];
  soft: number[];
}

export interface AnnotationRecord {
  id: string;
  motion_id: string;
  mask: MaskPayload;
  instruction: string;
}

export interface EditResponse {
  motion_id: string;
  job_id: string;
  trace: unknown[];
}

export interface ChainEntry {
  job_id: string;
  input_id: string;
  motion_id: string;
  instruction: string;
  frame_range: [number, number] | null;
  seed: number;
}

/** Field-level validation detail the service returns with a 422. */
export interface FieldError {
  field: string;
  message: string;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: FieldError | string,
  ) {
    super(typeof detail === "string" ? detail : `${detail.field}: ${detail.message}`);
    this.name = "ServiceError";
  }
}
