"""Unit quaternions in (w, x, y, z) order.

Arrays of quaternions have a trailing axis of length 4. ``q`` and ``-q``
encode the same rotation; the canonical representative has ``w >= 0`` and,
when ``w == 0``, a positive first nonzero entry among ``(x, y, z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCombinationError, InvalidInputError

UNIT_TOL = 1e-9
UNIT_SNAP = 1e-15
SLERP_EPS = 1e-7
DEGENERATE_NORM = 1e-6

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def _as_array(q, last=4, name="quaternion"):
    arr = np.asarray(q, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != last:
        raise InvalidInputError(f"{name} must have a trailing axis of length {last}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def canonicalize(q):
    """Map each quaternion to its canonical sign representative."""
    q = _as_array(q)
    flat = q.reshape(-1, 4).copy()
    lead = flat[:, 0].copy()
    for c in (1, 2, 3):
        zero = lead == 0.0
        if not zero.any():
            break
        lead[zero] = flat[zero, c]
    flat[lead < 0.0] *= -1.0
    # folds -0.0 into +0.0 so the result is a fixed point bit for bit
    flat += 0.0
    return flat.reshape(q.shape)


def normalize(q):
    """Scale to unit norm. Rows already unit to within a few ulp are returned
    unchanged, so normalizing is bitwise idempotent."""
    q = _as_array(q)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        raise InvalidInputError("cannot normalize a zero quaternion")
    return q / np.where(np.abs(n - 1.0) <= UNIT_SNAP, 1.0, n)


def as_unit(q):
    """Normalize and canonicalize."""
    return canonicalize(normalize(q))


def is_unit(q, tol=UNIT_TOL):
    q = np.asarray(q, dtype=np.float64)
    return bool(np.all(np.abs(np.linalg.norm(q, axis=-1) - 1.0) <= tol))


def is_canonical(q):
    q = np.asarray(q, dtype=np.float64)
    return bool(np.array_equal(canonicalize(q), q))


def multiply(p, q):
    """Hamilton product ``p * q`` (apply ``q`` first, then ``p``)."""
    p = _as_array(p)
    q = _as_array(q)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def conjugate(q):
    q = _as_array(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def to_matrix(q):
    """Rotation matrices (..., 3, 3) for unit quaternions."""
    q = _as_array(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def from_matrix(R):
    """Canonical quaternion of a single 3x3 rotation matrix (Shepperd's method)."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidInputError("expected a finite 3x3 matrix")
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax(np.r_[tr, diag]))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return as_unit(np.array(q))


def rotate(q, v):
    """Rotate 3-vectors ``v`` by unit quaternions ``q`` (broadcasting)."""
    q = _as_array(q)
    v = _as_array(v, last=3, name="vector")
    u = q[..., 1:]
    w = q[..., :1]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


@dataclass(frozen=True)
class AxisAngle:
    """Rotation by ``angle`` radians about the unit ``axis``."""

    axis: tuple
    angle: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)) or not np.isfinite(self.angle):
            raise InvalidInputError("axis must be a finite 3-vector and angle finite")
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
            raise InvalidInputError("axis must have unit length")
        object.__setattr__(self, "axis", tuple(float(a) for a in axis))
        object.__setattr__(self, "angle", float(self.angle))

    def canonical(self) -> "AxisAngle":
        """Equivalent rotation with angle in [0, pi]."""
        return to_axis_angle(from_axis_angle(self))


def from_axis_angle(a, angle=None):
    """Canonical quaternion for an :class:`AxisAngle` or an ``(axis, angle)`` pair."""
    if angle is None:
        if not isinstance(a, AxisAngle):
            raise InvalidInputError("pass an AxisAngle or (axis, angle)")
        axis, angle = np.asarray(a.axis), a.angle
    else:
        axis = np.asarray(a, dtype=np.float64)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)) or not np.isfinite(angle):
            raise InvalidInputError("non-finite axis-angle input")
        n = np.linalg.norm(axis)
        if abs(n - 1.0) > UNIT_TOL:
            raise InvalidInputError("axis must have unit length")
    half = 0.5 * float(angle)
    return canonicalize(np.r_[np.cos(half), np.sin(half) * axis])


def to_axis_angle(q) -> AxisAngle:
    """Axis and angle in [0, pi] of a single quaternion; identity maps to the z axis."""
    q = canonicalize(normalize(q))
    if q.shape != (4,):
        raise InvalidInputError("to_axis_angle takes a single quaternion")
    s = np.linalg.norm(q[1:])
    angle = 2.0 * np.arctan2(s, q[0])
    if s < 1e-300:
        return AxisAngle((0.0, 0.0, 1.0), 0.0)
    return AxisAngle(tuple(q[1:] / s), angle)


def from_rotvec(v):
    """Canonical quaternions from rotation vectors (axis times angle)."""
    v = _as_array(v, last=3, name="rotation vector")
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * theta
    # sin(theta/2)/theta, with its series near zero
    small = theta < 1e-8
    k = np.where(small, 0.5 - theta**2 / 48.0, np.sin(half) / np.where(small, 1.0, theta))
    return canonicalize(np.concatenate([np.cos(half), k * v], axis=-1))


def to_rotvec(q):
    """Rotation vectors (angle in [0, pi]) of quaternions."""
    q = canonicalize(normalize(q))
    s = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, q[..., :1])
    scale = np.where(s < 1e-12, 2.0, angle / np.where(s < 1e-12, 1.0, s))
    return scale * q[..., 1:]


def geodesic_distance(p, q):
    """Rotation angle in radians between ``p`` and ``q``, in [0, pi].

    Uses ``4*atan2(|p - q|, |p + q|)`` after sign alignment, which keeps full
    precision for nearly equal rotations where ``arccos`` does not.
    """
    p = _as_array(p)
    q = _as_array(q)
    dot = np.sum(p * q, axis=-1, keepdims=True)
    q = np.where(dot < 0.0, -q, q)
    a = np.linalg.norm(p - q, axis=-1)
    b = np.linalg.norm(p + q, axis=-1)
    return 4.0 * np.arctan2(a, b)


def slerp(x1, q1, q2):
    """Spherical interpolation where ``x1`` is the weight of ``q1``.

    ``x1 = 1`` returns ``q1``, ``x1 = 0`` returns ``q2``. ``q2`` is sign-aligned
    to ``q1`` first; arcs shorter than 1e-7 rad fall back to normalized lerp.
    """
    x1 = float(x1)
    if not np.isfinite(x1) or x1 < 0.0 or x1 > 1.0:
        raise InvalidInputError("x1 must lie in [0, 1]")
    q1 = _as_array(q1)
    q2 = _as_array(q2)
    if np.dot(q1, q2) < 0.0:
        q2 = -q2
    if x1 == 1.0:
        return canonicalize(q1)
    if x1 == 0.0:
        return canonicalize(q2)
    x2 = 1.0 - x1
    delta = 2.0 * np.arctan2(np.linalg.norm(q1 - q2), np.linalg.norm(q1 + q2))
    if delta < SLERP_EPS:
        return as_unit(x1 * q1 + x2 * q2)
    sd = np.sin(delta)
    return as_unit(np.sin(x1 * delta) / sd * q1 + np.sin(x2 * delta) / sd * q2)


def align_signs(atoms, weights):
    """Flip atoms into the hemisphere of the atom with the largest weight.

    ``weights`` may be (N,) or (M, N); returns sign arrays of the same shape.
    """
    atoms = np.asarray(atoms, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    dom = np.argmax(w, axis=-1)
    ref = atoms[dom]
    dots = ref @ atoms.T
    return np.where(dots < 0.0, -1.0, 1.0)


def nlerp(weights, atoms):
    """Normalized convex combination of quaternion atoms.

    Parameters
    ----------
    weights : array_like, shape (N,) or (M, N)
        Points on the probability simplex.
    atoms : array_like, shape (N, 4)
        Unit quaternions.

    Returns
    -------
    ndarray, shape (4,) or (M, 4)
        Canonical unit quaternions. Active atoms are first sign-aligned to the
        atom carrying the largest weight.

    Raises
    ------
    DegenerateCombinationError
        If the combination has norm below 1e-6.
    """
    atoms = _as_array(atoms)
    w = np.asarray(weights, dtype=np.float64)
    if atoms.ndim != 2 or w.shape[-1] != atoms.shape[0]:
        raise InvalidInputError("weights and atoms disagree on the atom count")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise InvalidInputError("weights must be finite and nonnegative")
    sums = w.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-8):
        raise InvalidInputError("weights must sum to 1")
    single = w.ndim == 1
    w2 = np.atleast_2d(w)
    signs = align_signs(atoms, w2)
    comb = (w2 * signs) @ atoms
    n = np.linalg.norm(comb, axis=-1, keepdims=True)
    if np.any(n < DEGENERATE_NORM):
        raise DegenerateCombinationError("convex combination of atoms is nearly zero")
    out = comb / n
    # one-hot rows reproduce their atom without a rounding pass
    nnz = np.count_nonzero(w2, axis=-1)
    for i in np.flatnonzero(nnz == 1):
        out[i] = atoms[np.argmax(w2[i])]
    out = canonicalize(out)
    return out[0] if single else out


def random_uniform(rng, size=None):
    """Uniformly distributed canonical rotations (Shoemake's subgroup method)."""
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    u1, u2, u3 = rng.random((3,) + shape)
    a = np.sqrt(1.0 - u1)
    b = np.sqrt(u1)
    q = np.stack(
        [b * np.cos(2 * np.pi * u3), a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2), b * np.sin(2 * np.pi * u3)],
        axis=-1,
    )
    return canonicalize(q)


def perturb(q, tangent):
    """Right-multiply ``q`` by ``exp(tangent)`` where ``tangent`` is a rotation vector."""
    return canonicalize(multiply(q, from_rotvec(tangent)))
