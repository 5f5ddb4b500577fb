"""Evaluation suite: FID, diversity, foot score, and edit retrieval.

Features come from a pluggable embedder; the default is a handcrafted
descriptor (per-keypoint position/speed statistics in the canonical
frame) so every metric is reproducible without a pretrained network.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import canon
from .errors import DatasetError, DimensionMismatchError
from .motion import KeypointMotion
from .skeleton import Skeleton

FEATURE_DIM = 28 * 3 * 4  # mean/std of positions and of absolute velocities


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray  # (N, D)
    embedder_id: str = "handcrafted-v1"

    def __post_init__(self):
        f = np.asarray(self.features, dtype=float)
        object.__setattr__(self, "features", f)
        if f.ndim != 2:
            raise DatasetError(f"features must be 2-D, got shape {f.shape}")
        if not np.isfinite(f).all():
            raise DatasetError("features contain non-finite values")

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class RetrievalReport:
    r_at_1: float  # percent
    r_at_2: float
    r_at_3: float
    avg_rank: float
    gallery_size: int

    def __post_init__(self):
        if not self.r_at_1 <= self.r_at_2 + 1e-9 or not self.r_at_2 <= self.r_at_3 + 1e-9:
            raise DatasetError("retrieval recalls must be monotone: R@1 <= R@2 <= R@3")
        if not 1.0 - 1e-9 <= self.avg_rank <= self.gallery_size + 1e-9:
            raise DatasetError(f"AvgR {self.avg_rank} outside [1, {self.gallery_size}]")

    def to_dict(self) -> dict:
        return {
            "R@1": self.r_at_1, "R@2": self.r_at_2, "R@3": self.r_at_3,
            "AvgR": self.avg_rank, "gallery_size": self.gallery_size,
        }


def _sym_sqrt(mat: np.ndarray, clamp: float = -1e-8) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below `clamp` raise; values in [clamp, 0) are clamped to 0.
    """
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() < clamp * max(1.0, abs(vals.max())):
        raise DatasetError(f"matrix is not PSD within tolerance (min eigenvalue {vals.min():.3e})")
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the cross
    term computed as the symmetric form sqrt(S_a)^T S_b sqrt(S_a).
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"feature dims differ: {a.dim} vs {b.dim}")
    if a.count < 2 or b.count < 2:
        raise DatasetError("FID needs at least 2 feature vectors per set")
    if a.count < a.dim or b.count < b.dim:
        warnings.warn(
            f"fewer samples ({min(a.count, b.count)}) than feature dims ({a.dim}); covariance is rank-deficient",
            RuntimeWarning, stacklevel=2,
        )
    mu_a = a.features.mean(axis=0)
    mu_b = b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False)
    cov_b = np.cov(b.features, rowvar=False)
    if not (np.isfinite(cov_a).all() and np.isfinite(cov_b).all()):
        raise DatasetError("non-finite covariance")
    sa = _sym_sqrt(cov_a)
    cross = _sym_sqrt(sa @ cov_b @ sa)
    mean_term = float(np.sum((mu_a - mu_b) ** 2))
    trace_term = float(np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross))
    return mean_term + trace_term


def diversity(f: FeatureSet, pairs: int, rng: np.random.Generator) -> float:
    """Mean Euclidean distance over random disjoint index pairs."""
    if f.count < 2:
        raise DatasetError("diversity needs at least 2 feature vectors")
    i = rng.integers(0, f.count, size=pairs)
    j = rng.integers(0, f.count - 1, size=pairs)
    j = np.where(j >= i, j + 1, j)  # disjoint indices per pair
    return float(np.linalg.norm(f.features[i] - f.features[j], axis=1).mean())


def foot_score(m: KeypointMotion, skel: Skeleton, height_thresh: float = 0.05,
               speed_thresh: float = 0.025) -> float:
    """Anti-footskate score in [0, 1].

    Over frames where a foot keypoint is below height_thresh (meters),
    the fraction whose horizontal travel to the next frame stays under
    speed_thresh (meters per frame, quoted at 20 FPS and rescaled to the
    motion's frame rate).  1.0 when no frames are grounded.
    """
    feet = [skel.keypoint_index("left_foot"), skel.keypoint_index("right_foot")]
    pos = m.positions[:, feet]  # (L, 2, 3)
    if m.num_frames < 2:
        return 1.0
    thresh = speed_thresh * 20.0 / m.fps
    grounded = pos[:-1, :, 1] < height_thresh  # (L-1, 2)
    delta = pos[1:] - pos[:-1]
    travel = np.sqrt(delta[:, :, 0] ** 2 + delta[:, :, 2] ** 2)
    n_grounded = int(grounded.sum())
    if n_grounded == 0:
        return 1.0
    return float((travel[grounded] < thresh).sum() / n_grounded)


def _rank_of_true(query: np.ndarray, gallery: np.ndarray) -> int:
    """1-based rank of gallery row 0 under Euclidean distance.

    The true counterpart occupies row 0; ties resolve by stable gallery
    order, so an exact duplicate later in the gallery cannot displace it.
    """
    d = np.linalg.norm(gallery - query, axis=1)
    order = np.argsort(d, kind="stable")
    return int(np.nonzero(order == 0)[0][0]) + 1


def retrieval(edited: FeatureSet, gallery_source: FeatureSet, gallery_target: FeatureSet,
              gallery_size: int = 32, repeats: int = 1,
              rng: np.random.Generator | None = None) -> tuple[RetrievalReport, RetrievalReport]:
    """Edited-to-source and edited-to-target retrieval over random galleries.

    Index i across the three sets refers to the same editing instance.
    Per query, the true counterpart plus (gallery_size - 1) seeded random
    distractors are ranked by Euclidean distance.
    """
    n = edited.count
    if gallery_source.count != n or gallery_target.count != n:
        raise DatasetError("edited/source/target feature sets must be index-aligned")
    if gallery_size > n:
        raise DatasetError(f"gallery size {gallery_size} exceeds population {n}")
    if rng is None:
        rng = np.random.default_rng(0)

    reports = []
    for pool in (gallery_source, gallery_target):
        ranks = []
        for _ in range(repeats):
            for i in range(n):
                others = np.delete(np.arange(n), i)
                distract = rng.choice(others, size=gallery_size - 1, replace=False)
                gallery = np.concatenate([pool.features[i : i + 1], pool.features[distract]])
                ranks.append(_rank_of_true(edited.features[i], gallery))
        ranks = np.array(ranks)
        reports.append(RetrievalReport(
            r_at_1=float((ranks <= 1).mean() * 100.0),
            r_at_2=float((ranks <= 2).mean() * 100.0),
            r_at_3=float((ranks <= 3).mean() * 100.0),
            avg_rank=float(ranks.mean()),
            gallery_size=gallery_size,
        ))
    return reports[0], reports[1]


def embed_motion(m: KeypointMotion, skel: Skeleton) -> np.ndarray:
    """Handcrafted motion descriptor, dimension 336.

    Canonicalizes the motion, then concatenates per keypoint channel:
    mean and std of positions (meters) and of absolute per-second
    velocities.  Absolute velocities make the descriptor invariant to
    time reversal, matching its use as a content summary.
    """
    canonical, _ = canon.canonicalize(m, skel)
    pos = canonical.positions  # (L, 28, 3)
    if m.num_frames > 1:
        vel = np.abs(np.diff(pos, axis=0)) * m.fps
    else:
        vel = np.zeros((1, 28, 3))
    return np.concatenate([
        pos.mean(axis=0).reshape(-1),
        pos.std(axis=0).reshape(-1),
        vel.mean(axis=0).reshape(-1),
        vel.std(axis=0).reshape(-1),
    ])


def embed_motions(motions: list[KeypointMotion], skel: Skeleton) -> FeatureSet:
    return FeatureSet(np.stack([embed_motion(m, skel) for m in motions]))


def report_to_text(values: dict, config: dict) -> str:
    """Structured metrics report consumed by CI and the studio UI."""
    return json.dumps({"metrics": values, "config": config}, indent=2, sort_keys=True)
