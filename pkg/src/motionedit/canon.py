"""Segment canonicalization, channel normalization, Kabsch alignment, stitching.

Canonical frame: y-up, first-frame pelvis at the horizontal origin
(height preserved), initial forward direction facing +z.  Forward is the
horizontal component of cross(left_hip - right_hip, up).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DatasetError, FileFormatError
from .motion import KeypointMotion
from .skeleton import Skeleton

UP = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class RigidTransform2D5:
    """Yaw about the up axis plus a translation (canonical -> world map)."""

    yaw: float  # radians, in (-pi, pi]
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float)
        object.__setattr__(self, "translation", t)
        if not np.isfinite(self.yaw) or not np.isfinite(t).all():
            raise DegenerateGeometryError("non-finite rigid transform")
        if not -np.pi < self.yaw <= np.pi + 1e-12:
            raise DegenerateGeometryError(f"yaw {self.yaw} outside (-pi, pi]")

    def matrix(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map canonical-frame points to world: R_y(yaw) @ p + t."""
        return points @ self.matrix().T + self.translation

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (points - self.translation) @ self.matrix()

    @staticmethod
    def identity() -> "RigidTransform2D5":
        return RigidTransform2D5(yaw=0.0, translation=np.zeros(3))


def _forward_direction(frame: np.ndarray, skel: Skeleton, frame_index: int) -> np.ndarray:
    lh = frame[skel.keypoint_index("left_hip")]
    rh = frame[skel.keypoint_index("right_hip")]
    fwd = np.cross(lh - rh, UP)
    fwd[1] = 0.0
    n = np.linalg.norm(fwd)
    if n < 1e-9:
        raise DegenerateGeometryError(
            f"degenerate forward direction at frame {frame_index}: hip keypoints coincident or vertical"
        )
    return fwd / n


def canonicalize(segment: KeypointMotion, skel: Skeleton) -> tuple[KeypointMotion, RigidTransform2D5]:
    """Map a segment to the canonical frame; the returned transform inverts it.

    Postconditions: first-frame pelvis has x = z = 0 (y preserved) and the
    first-frame forward direction is +z.
    """
    pos = segment.positions
    pelvis0 = pos[0, skel.keypoint_index("pelvis")]
    fwd = _forward_direction(pos[0], skel, 0)
    # world yaw of the segment: angle of fwd from +z about +y
    yaw = float(np.arctan2(fwd[0], fwd[2]))
    translation = np.array([pelvis0[0], 0.0, pelvis0[2]])
    xf = RigidTransform2D5(yaw=yaw, translation=translation)
    canonical = xf.invert(pos.reshape(-1, 3)).reshape(pos.shape)
    return KeypointMotion(fps=segment.fps, positions=canonical), xf


def decanonicalize(segment: KeypointMotion, xf: RigidTransform2D5) -> KeypointMotion:
    pos = segment.positions
    return KeypointMotion(fps=segment.fps, positions=xf.apply(pos.reshape(-1, 3)).reshape(pos.shape))


def kabsch(P: np.ndarray, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rigid alignment: returns (R, t) minimizing sum |R p + t - q|^2.

    det(R) = +1 always; degenerate (collinear) inputs raise.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[0] < 3 or P.shape[1] != 3:
        raise DegenerateGeometryError(f"kabsch needs matching (N>=3, 3) point sets, got {P.shape} / {Q.shape}")
    pc = P.mean(axis=0)
    qc = Q.mean(axis=0)
    H = (P - pc).T @ (Q - qc)
    U, S, Vt = np.linalg.svd(H)
    if S[1] < 1e-12:
        raise DegenerateGeometryError("kabsch input points are collinear or coincident")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    t = qc - R @ pc
    return R, t


def kabsch_yaw_planar(P: np.ndarray, Q: np.ndarray) -> RigidTransform2D5:
    """Restricted alignment: yaw about +y plus planar (x, z) translation.

    Minimizes sum |R_y(yaw) p + t - q|^2 over the horizontal plane; the
    vertical channel is left untouched (t_y = 0).
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape or P.shape[0] < 2:
        raise DegenerateGeometryError(f"need matching point sets of >= 2 points, got {P.shape} / {Q.shape}")
    p = P[:, [0, 2]]
    q = Q[:, [0, 2]]
    pc = p.mean(axis=0)
    qc = q.mean(axis=0)
    dp = p - pc
    dq = q - qc
    if np.linalg.norm(dp) < 1e-12:
        raise DegenerateGeometryError("planar alignment points are coincident")
    # 2D Kabsch: yaw from the cross/dot sums of centered correspondences.
    # x-z plane with yaw about +y: (x, z) rotates by [[c, s], [-s, c]].
    num = np.sum(dp[:, 1] * dq[:, 0] - dp[:, 0] * dq[:, 1])
    den = np.sum(dp[:, 0] * dq[:, 0] + dp[:, 1] * dq[:, 1])
    yaw = float(np.arctan2(num, den))
    c, s = np.cos(yaw), np.sin(yaw)
    rot2 = np.array([[c, s], [-s, c]])
    txz = qc - rot2 @ pc
    return RigidTransform2D5(yaw=yaw, translation=np.array([txz[0], 0.0, txz[1]]))


def _seam_triangle(frame: np.ndarray, skel: Skeleton) -> np.ndarray:
    idx = [skel.keypoint_index("pelvis"), skel.keypoint_index("left_hip"), skel.keypoint_index("right_hip")]
    return frame[idx]


def stitch(prev: KeypointMotion, next_canonical: KeypointMotion, skel: Skeleton) -> KeypointMotion:
    """Append a canonical continuation segment onto prev.

    The next segment is rigidly moved (yaw + planar translation) so its
    first frame's pelvis/hips triangle aligns with prev's second-to-last
    frame's triangle; the 2 overlapping frames are taken from prev.
    """
    if prev.num_frames < 2:
        raise DegenerateGeometryError("stitching requires at least 2 frames in the previous segment")
    if prev.fps != next_canonical.fps:
        raise DegenerateGeometryError(f"fps mismatch: {prev.fps} vs {next_canonical.fps}")
    anchor = _seam_triangle(prev.positions[-2], skel)
    head = _seam_triangle(next_canonical.positions[0], skel)
    xf = kabsch_yaw_planar(head, anchor)
    moved = decanonicalize(next_canonical, xf)
    out = np.concatenate([prev.positions, moved.positions[2:]], axis=0)
    return KeypointMotion(fps=prev.fps, positions=out)


@dataclass(frozen=True)
class ScalingFactors:
    """Per-channel [-1, 1] normalization fitted to the central 95% band."""

    channel_min: np.ndarray  # (28, 3)
    channel_max: np.ndarray  # (28, 3)
    format_version: int = 1

    def __post_init__(self):
        lo = np.asarray(self.channel_min, dtype=float)
        hi = np.asarray(self.channel_max, dtype=float)
        object.__setattr__(self, "channel_min", lo)
        object.__setattr__(self, "channel_max", hi)
        if not (hi > lo).all():
            bad = np.argwhere(hi <= lo)
            raise DatasetError(f"constant channels (max <= min) at keypoint/axis indices {bad.tolist()}")

    def normalize(self, positions: np.ndarray) -> np.ndarray:
        """Map data to [-1, 1]; out-of-band values pass through linearly."""
        return 2.0 * (positions - self.channel_min) / (self.channel_max - self.channel_min) - 1.0

    def denormalize(self, normed: np.ndarray) -> np.ndarray:
        return (normed + 1.0) / 2.0 * (self.channel_max - self.channel_min) + self.channel_min

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "channel_min": [[repr(float(v)) for v in row] for row in self.channel_min],
            "channel_max": [[repr(float(v)) for v in row] for row in self.channel_max],
        }

    @staticmethod
    def from_dict(d: dict) -> "ScalingFactors":
        if d.get("format_version") != 1:
            raise FileFormatError(f"unsupported scaling factors version {d.get('format_version')!r}", "version_mismatch")
        lo = np.array([[float(v) for v in row] for row in d["channel_min"]])
        hi = np.array([[float(v) for v in row] for row in d["channel_max"]])
        return ScalingFactors(channel_min=lo, channel_max=hi)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @staticmethod
    def load(path: str) -> "ScalingFactors":
        with open(path, "r", encoding="utf-8") as fh:
            return ScalingFactors.from_dict(json.load(fh))


def fit_scaling(dataset: list[KeypointMotion]) -> ScalingFactors:
    """Fit per-channel bounds as the 2.5th / 97.5th percentiles over all frames."""
    if not dataset:
        raise DatasetError("cannot fit scaling factors on an empty dataset")
    frames = np.concatenate([m.positions for m in dataset], axis=0)  # (N, 28, 3)
    lo = np.percentile(frames, 2.5, axis=0)
    hi = np.percentile(frames, 97.5, axis=0)
    return ScalingFactors(channel_min=lo, channel_max=hi)
