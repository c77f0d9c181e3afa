"""Joint-tree forward kinematics and the weak-perspective camera."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DataError, InvalidInputError
from .quat import _as_array


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree in topological order.

    Joint 0 is the unique root (parent -1); every other joint's parent index is
    smaller than its own. ``offsets[j]`` is the rest-pose vector from the
    parent to joint ``j`` in the parent's frame (meters); ``offsets[0]`` is the
    root position.
    """

    names: tuple
    parents: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int64)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        K = parents.shape[0]
        if K < 1 or offsets.shape != (K, 3) or len(self.names) != K:
            raise InvalidInputError("names, parents and offsets must describe the same joints")
        if parents[0] != -1 or np.any(parents[1:] < 0):
            raise InvalidInputError("joint 0 must be the only root")
        if np.any(parents[1:] >= np.arange(1, K)):
            raise InvalidInputError("parents must precede their children")
        if not np.all(np.isfinite(offsets)):
            raise InvalidInputError("offsets must be finite")
        parents.setflags(write=False)
        offsets.setflags(write=False)
        object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)

    @property
    def n_joints(self):
        return self.parents.shape[0]

    @property
    def articulated(self):
        """Names of the joints that carry a pose rotation (all but the root)."""
        return self.names[1:]

    def to_dict(self):
        return {
            "joints": [
                {"name": n, "parent": int(p), "offset": [float(v) for v in off]}
                for n, p, off in zip(self.names, self.parents, self.offsets)
            ]
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            joints = doc["joints"]
            return cls(
                names=tuple(j["name"] for j in joints),
                parents=np.array([j["parent"] for j in joints]),
                offsets=np.array([j["offset"] for j in joints], dtype=np.float64),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed skeleton definition: {exc}") from exc

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(str(exc), path=path) from exc
        return cls.from_dict(doc)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def default(cls):
        """24-node tree with SMPL's topology (root + 23 articulated joints)."""
        text = resources.files("kinedict").joinpath("data/smpl24.json").read_text()
        return cls.from_dict(json.loads(text))


def _check_pose(skel, pose):
    pose = _as_array(pose, name="pose")
    if pose.shape != (skel.n_joints - 1, 4):
        raise InvalidInputError(f"pose must have shape ({skel.n_joints - 1}, 4), got {pose.shape}")
    return np.ascontiguousarray(pose)


def forward_kinematics(skel: Skeleton, pose, root_rotation=None, return_world=False):
    """Joint positions (K, 3) for per-joint relative rotations.

    ``pose[j - 1]`` is the rotation of joint ``j`` relative to its parent. A
    joint's position is its parent's position plus the parent's accumulated
    world rotation applied to the rest offset; world rotations compose
    parent-first. ``root_rotation`` (3x3, default identity) is the root's world
    rotation.
    """
    pose = _check_pose(skel, pose)
    R0 = np.eye(3) if root_rotation is None else np.ascontiguousarray(root_rotation, dtype=np.float64)
    pos, world = _kernels.fk(skel.parents, skel.offsets, pose, R0)
    return (pos, world) if return_world else pos


def r6_to_rotation(r6):
    """Rotation matrix from its first two columns via Gram-Schmidt.

    ``r6[:3]`` and ``r6[3:]`` are the (unnormalized) first and second columns.
    """
    r6 = np.asarray(r6, dtype=np.float64).reshape(-1)
    if r6.shape != (6,) or not np.all(np.isfinite(r6)):
        raise InvalidInputError("r6 must be six finite numbers")
    a1, a2 = r6[:3], r6[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-12:
        raise InvalidInputError("first column of r6 is zero")
    c1 = a1 / n1
    v = a2 - (c1 @ a2) * c1
    nv = np.linalg.norm(v)
    if nv < 1e-12 * max(1.0, np.linalg.norm(a2)):
        raise InvalidInputError("r6 columns are parallel")
    c2 = v / nv
    return np.stack([c1, c2, np.cross(c1, c2)], axis=1)


def rotation_to_r6(R):
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[:, 0], R[:, 1]])


@dataclass
class Camera:
    """Weak-perspective camera: ``x = s * (R X)[:2] + t``.

    ``r6`` holds the first two columns of the global rotation ``R``.
    """

    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r6: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0, 1.0, 0]))

    def __post_init__(self):
        self.scale = float(self.scale)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(2)
        self.r6 = np.asarray(self.r6, dtype=np.float64).reshape(6)
        if not (np.isfinite(self.scale) and np.all(np.isfinite(self.translation))):
            raise InvalidInputError("camera parameters must be finite")
        r6_to_rotation(self.r6)

    @property
    def rotation(self):
        return r6_to_rotation(self.r6)

    @classmethod
    def from_rotation(cls, R, scale=1.0, translation=(0.0, 0.0)):
        return cls(scale, np.asarray(translation, dtype=np.float64), rotation_to_r6(R))

    def to_dict(self):
        return {"scale": self.scale, "translation": self.translation.tolist(), "r6": self.r6.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["scale"], doc["translation"], doc["r6"])


def project(X3, cam: Camera):
    """Weak-perspective projection of (K, 3) points to (K, 2)."""
    X3 = _as_array(X3, last=3, name="points")
    return cam.scale * (X3 @ cam.rotation.T)[..., :2] + cam.translation
