"""Skeleton definition: joint hierarchy, rest offsets, keypoint mapping, part groups.

The skeleton is a fixed stick figure; 22 joints (pelvis at index 0) drive
28 output keypoints.  The 6 extra keypoints (eyes, fingertips) are rigid
child offsets of the head and wrists and carry no degrees of freedom.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import SkeletonError

NUM_BODY_JOINTS = 21  # rotations stored per frame, excluding the pelvis
NUM_JOINTS = NUM_BODY_JOINTS + 1  # including the pelvis
NUM_KEYPOINTS = 28

PELVIS = 0


@dataclass(frozen=True)
class KeypointBinding:
    """One output keypoint: a joint index plus a rigid local offset."""

    name: str
    joint: int
    offset: np.ndarray  # (3,)


@dataclass(frozen=True)
class Skeleton:
    """Immutable joint hierarchy with keypoint spec and named part groups.

    Invariants (checked at construction): joints are topologically sorted
    (parent index < child index), exactly one root, exactly 28 keypoints,
    part-group indices within 0..21.
    """

    joint_names: tuple[str, ...]
    parents: tuple[int, ...]  # -1 for the root
    rest_offsets: np.ndarray  # (NUM_JOINTS, 3), meters
    keypoints: tuple[KeypointBinding, ...]
    part_groups: dict[str, frozenset[int]] = field(default_factory=dict)
    name: str = "unnamed"
    format_version: int = 1

    def __post_init__(self):
        n = len(self.joint_names)
        if n != NUM_JOINTS:
            raise SkeletonError(f"expected {NUM_JOINTS} joints, got {n}")
        roots = [i for i, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise SkeletonError(f"expected exactly one root at index 0, found roots {roots}")
        for i, p in enumerate(self.parents):
            if i > 0 and not (0 <= p < i):
                raise SkeletonError(f"joint {i} ({self.joint_names[i]}) has parent {p}; joints must be topologically sorted")
        if self.rest_offsets.shape != (NUM_JOINTS, 3):
            raise SkeletonError(f"rest_offsets must be ({NUM_JOINTS}, 3), got {self.rest_offsets.shape}")
        if len(self.keypoints) != NUM_KEYPOINTS:
            raise SkeletonError(f"keypoint spec must cover exactly {NUM_KEYPOINTS} entries, got {len(self.keypoints)}")
        for kp in self.keypoints:
            if not 0 <= kp.joint < NUM_JOINTS:
                raise SkeletonError(f"keypoint {kp.name} bound to invalid joint {kp.joint}")
        for gname, idxs in self.part_groups.items():
            bad = [i for i in idxs if not 0 <= i < NUM_JOINTS]
            if bad:
                raise SkeletonError(f"part group {gname!r} has out-of-range joint indices {bad}")
        self.rest_offsets.setflags(write=False)

    @property
    def num_joints(self) -> int:
        return NUM_JOINTS

    def joint_index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise SkeletonError(f"unknown joint {name!r}") from None

    def keypoint_index(self, name: str) -> int:
        for i, kp in enumerate(self.keypoints):
            if kp.name == name:
                return i
        raise SkeletonError(f"unknown keypoint {name!r}")

    def part_group(self, name: str) -> frozenset[int]:
        try:
            return self.part_groups[name]
        except KeyError:
            raise SkeletonError(f"unknown part group {name!r}; available: {sorted(self.part_groups)}") from None

    def content_hash(self) -> str:
        """Stable hash of the geometric content, used to tag motion files."""
        payload = {
            "joints": list(self.joint_names),
            "parents": list(self.parents),
            "offsets": [[repr(float(v)) for v in row] for row in self.rest_offsets],
            "keypoints": [
                {"name": k.name, "joint": k.joint, "offset": [repr(float(v)) for v in k.offset]}
                for k in self.keypoints
            ],
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_config(self) -> dict:
        """Serializable config matching the documented schema."""
        return {
            "format_version": self.format_version,
            "name": self.name,
            "up_axis": "y",
            "joints": [
                {
                    "name": n,
                    "parent": None if p < 0 else self.joint_names[p],
                    "offset": [float(v) for v in self.rest_offsets[i]],
                }
                for i, (n, p) in enumerate(zip(self.joint_names, self.parents))
            ],
            "keypoints": [
                {"name": k.name, "joint": self.joint_names[k.joint], "offset": [float(v) for v in k.offset]}
                for k in self.keypoints
            ],
            "part_groups": {g: sorted(self.joint_names[i] for i in idxs) for g, idxs in self.part_groups.items()},
        }


def skeleton_from_config(cfg: dict) -> Skeleton:
    """Build a Skeleton from the documented JSON config schema."""
    version = cfg.get("format_version")
    if version != 1:
        raise SkeletonError(f"unsupported skeleton config version {version!r}")
    joints = cfg["joints"]
    names = [j["name"] for j in joints]
    name_to_idx = {n: i for i, n in enumerate(names)}
    if len(name_to_idx) != len(names):
        raise SkeletonError("duplicate joint names in skeleton config")
    parents = []
    for j in joints:
        p = j.get("parent")
        if p is None:
            parents.append(-1)
        elif p not in name_to_idx:
            raise SkeletonError(f"joint {j['name']!r} references unknown parent {p!r}")
        else:
            parents.append(name_to_idx[p])
    offsets = np.array([j["offset"] for j in joints], dtype=float)
    kps = tuple(
        KeypointBinding(name=k["name"], joint=name_to_idx[k["joint"]], offset=np.array(k["offset"], dtype=float))
        for k in cfg["keypoints"]
    )
    groups = {
        g: frozenset(name_to_idx[n] for n in members)
        for g, members in cfg.get("part_groups", {}).items()
    }
    return Skeleton(
        joint_names=tuple(names),
        parents=tuple(parents),
        rest_offsets=offsets,
        keypoints=kps,
        part_groups=groups,
        name=cfg.get("name", "unnamed"),
        format_version=version,
    )


def load_skeleton(path: str) -> Skeleton:
    with open(path, "r", encoding="utf-8") as fh:
        return skeleton_from_config(json.load(fh))


def save_skeleton(skel: Skeleton, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(skel.to_config(), fh, indent=2)


def default_skeleton() -> Skeleton:
    """The shipped 1.7 m stick-figure skeleton."""
    text = resources.files("motionedit.data").joinpath("skeleton_default.json").read_text()
    return skeleton_from_config(json.loads(text))
