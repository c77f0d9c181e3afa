"""Builders shared by several test modules."""

import numpy as np

from kinedict import quat
from kinedict.kinematics import Skeleton
from kinedict.obdl import Dictionary


def joint_dictionaries(rng, skeleton, n_atoms=16, center_sd=0.3, spread_sd=0.35):
    """Per-joint quaternion dictionaries scattered around a random center."""
    out = []
    for name in skeleton.articulated:
        center = quat.from_rotvec(rng.normal(0.0, center_sd, 3))
        atoms = quat.perturb(np.repeat(center[None], n_atoms, axis=0), rng.normal(0.0, spread_sd, (n_atoms, 3)))
        out.append(Dictionary(atoms.T, mode="quaternion", joint_label=name))
    return out


def chain_skeleton(n=3, length=1.0):
    """Straight chain along +x with unit-ish bones; root at the origin."""
    offsets = np.zeros((n, 3))
    offsets[1:, 0] = length
    return Skeleton(tuple(f"j{i}" for i in range(n)), np.arange(n) - 1, offsets)
