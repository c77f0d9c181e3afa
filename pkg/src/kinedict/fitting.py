"""Dictionary-constrained pose recovery from 2D and 3D keypoints.

Each articulated joint's rotation is ``nlerp(gamma_j, D_j)`` with ``gamma_j``
on the probability simplex, so every fitted rotation lies in the hull of its
joint's atoms. The loss is

    L = lam2 * sum_vis |s (R X)[:2] + t - x2|^2
      + lam3 * sum_vis |(X - X_root) - (x3 - x3_root)|^2

with ``X`` the forward-kinematics keypoints in the body frame.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from . import _kernels, quat
from ._jit import thread_cap
from .errors import InvalidInputError, UnderConstrainedError
from .kinematics import Camera, Skeleton, forward_kinematics, r6_to_rotation, rotation_to_r6
from .obdl import Dictionary, reconstruct

MIN_VISIBLE_2D = 4


def _octahedral_rotations():
    """The 24 proper rotations of the cube (signed permutation matrices)."""
    out = []
    for perm in ([0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]):
        for signs in np.ndindex(2, 2, 2):
            R = np.zeros((3, 3))
            R[np.arange(3), perm] = np.where(np.array(signs) == 1, -1.0, 1.0)
            if np.linalg.det(R) > 0:
                out.append(R)
    return out


ROTATION_GRID = _octahedral_rotations()


@dataclass
class FitProblem:
    """Observations of one skeleton plus the per-joint dictionaries.

    ``dictionaries[j - 1]`` constrains joint ``j``. ``visible_2d`` and
    ``visible_3d`` are per-joint 0/1 masks; ``observed_3d`` may be ``None``.
    """

    skeleton: Skeleton
    dictionaries: list
    observed_2d: np.ndarray
    visible_2d: np.ndarray = None
    observed_3d: np.ndarray = None
    visible_3d: np.ndarray = None
    lambda_2d: float = 1.0
    lambda_3d: float = 1.0

    def __post_init__(self):
        K = self.skeleton.n_joints
        if len(self.dictionaries) != K - 1:
            raise InvalidInputError(f"need {K - 1} dictionaries, got {len(self.dictionaries)}")
        for D in self.dictionaries:
            if not isinstance(D, Dictionary) or D.mode != "quaternion":
                raise InvalidInputError("fitting needs quaternion-mode dictionaries")
        self.observed_2d = np.asarray(self.observed_2d, dtype=np.float64).reshape(K, 2)
        self.visible_2d = _mask(self.visible_2d, K)
        if self.observed_3d is None:
            self.observed_3d = np.zeros((K, 3))
            self.visible_3d = np.zeros(K)
        else:
            self.observed_3d = np.asarray(self.observed_3d, dtype=np.float64).reshape(K, 3)
            self.visible_3d = _mask(self.visible_3d, K)
        self.lambda_2d = float(self.lambda_2d)
        self.lambda_3d = float(self.lambda_3d)
        if self.lambda_2d < 0 or self.lambda_3d < 0:
            raise InvalidInputError("loss weights must be nonnegative")
        for a in (self.observed_2d, self.observed_3d):
            if not np.all(np.isfinite(a)):
                raise InvalidInputError("observations must be finite")
        full_3d = bool(np.all(self.visible_3d > 0))
        if np.count_nonzero(self.visible_2d) < MIN_VISIBLE_2D and not full_3d:
            raise UnderConstrainedError(
                f"need at least {MIN_VISIBLE_2D} visible 2D joints or full 3D observations"
            )

    @property
    def has_3d(self):
        return bool(np.any(self.visible_3d > 0))

    def packed_atoms(self):
        J = len(self.dictionaries)
        n = np.array([D.n_atoms for D in self.dictionaries], dtype=np.int64)
        atoms = np.zeros((J, int(n.max()), 4))
        for j, D in enumerate(self.dictionaries):
            atoms[j, : n[j]] = D.atoms.T
        return atoms, n

    def to_dict(self):
        return {
            "keypoints_2d": self.observed_2d.tolist(),
            "visibility_2d": self.visible_2d.tolist(),
            "keypoints_3d": self.observed_3d.tolist() if self.has_3d else None,
            "visibility_3d": self.visible_3d.tolist() if self.has_3d else None,
            "lambda_2d": self.lambda_2d,
            "lambda_3d": self.lambda_3d,
        }


def _mask(v, K):
    if v is None:
        return np.ones(K)
    v = np.asarray(v, dtype=np.float64).reshape(K)
    if np.any((v != 0.0) & (v != 1.0)):
        raise InvalidInputError("visibility masks must be 0/1")
    return v


@dataclass
class FitConfig:
    restarts: int = 8
    max_iters: int = 400
    seed: int = 0
    tol: float = 1e-15
    stage1_iters: int = 400


@dataclass
class FitResult:
    """Winning restart of :func:`fit`.

    ``codes[j]`` are the logits of joint ``j + 1`` (they lie on the simplex,
    so ``sparsemax`` leaves them unchanged) and ``pose[j]`` equals
    ``reconstruct(dictionaries[j], codes[j])``.
    """

    codes: list
    pose: np.ndarray
    camera: Camera
    losses: dict
    iterations: int
    restart: int
    restart_losses: list = field(default_factory=list)

    def to_dict(self):
        return {
            "codes": [c.tolist() for c in self.codes],
            "pose": self.pose.tolist(),
            "camera": self.camera.to_dict(),
            "losses": dict(self.losses),
            "iterations": self.iterations,
            "restart": self.restart,
            "restart_losses": list(self.restart_losses),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            codes=[np.asarray(c, dtype=np.float64) for c in doc["codes"]],
            pose=np.asarray(doc["pose"], dtype=np.float64),
            camera=Camera.from_dict(doc["camera"]),
            losses=dict(doc["losses"]),
            iterations=int(doc["iterations"]),
            restart=int(doc["restart"]),
            restart_losses=list(doc.get("restart_losses", [])),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _pack_codes(problem, codes):
    atoms, n = problem.packed_atoms()
    Z = np.full((len(n), atoms.shape[1]), -np.inf)
    if len(codes) != len(n):
        raise InvalidInputError("one code vector per articulated joint is required")
    for j, c in enumerate(codes):
        c = np.asarray(c, dtype=np.float64).reshape(-1)
        if c.shape[0] != n[j]:
            raise InvalidInputError(f"joint {j + 1}: code length {c.shape[0]} != atom count {n[j]}")
        Z[j, : n[j]] = c
    return atoms, n, Z


def _evaluate(problem, atoms, n, Z, scale, trans, r6, lam2, lam3, want_grad, align=True, solve_st=False):
    sk = problem.skeleton
    return _kernels.pose_loss_grad(
        sk.parents, sk.offsets, atoms, n, Z, float(scale), np.asarray(trans, dtype=np.float64),
        np.asarray(r6, dtype=np.float64), problem.observed_2d, problem.visible_2d,
        problem.observed_3d, problem.visible_3d, lam2, lam3, want_grad, align, solve_st,
    )


def loss(problem: FitProblem, codes, camera: Camera):
    """Losses ``{"L", "L2D", "L3D"}`` for per-joint logits and a camera."""
    atoms, n, Z = _pack_codes(problem, codes)
    out = _evaluate(problem, atoms, n, Z, camera.scale, camera.translation, camera.r6,
                    problem.lambda_2d, problem.lambda_3d, False)
    return {"L": float(out[0]), "L2D": float(out[1]), "L3D": float(out[2])}


def loss_and_grad(problem: FitProblem, codes, camera: Camera):
    """Losses plus gradients w.r.t. the logits, scale, translation and ``r6``.

    Gradients pass through the fixed-support sparsemax Jacobian, the
    normalization of the atom combination, forward kinematics and the
    Gram-Schmidt map from ``r6`` to the camera rotation.
    """
    atoms, n, Z = _pack_codes(problem, codes)
    out = _evaluate(problem, atoms, n, Z, camera.scale, camera.translation, camera.r6,
                    problem.lambda_2d, problem.lambda_3d, True)
    losses = {"L": float(out[0]), "L2D": float(out[1]), "L3D": float(out[2])}
    grads = {
        "codes": [out[6][j, : n[j]].copy() for j in range(len(n))],
        "scale": float(out[8]),
        "translation": out[9].copy(),
        "r6": out[10].copy(),
    }
    return losses, grads


def _r6_ok(r6):
    n1 = np.linalg.norm(r6[:3])
    if not np.all(np.isfinite(r6)) or n1 < 1e-12:
        return False
    v = r6[3:] - (r6[:3] @ r6[3:]) / n1**2 * r6[:3]
    return bool(np.linalg.norm(v) >= 1e-12 * max(1.0, np.linalg.norm(r6[3:])))


class _Restart:
    """Optimizer state for one restart.

    Codes are held as nonnegative weights ``x`` with ``gamma_j = x_j / sum(x_j)``,
    so every iterate lies exactly on the simplex and L-BFGS-B only sees box
    constraints. A small penalty ``(sum(x_j) - 1)^2`` pins the free scale of
    each ``x_j``. Scale and translation are re-solved in closed form at every
    evaluation, so the gradient in ``x`` and ``r6`` is that of the reduced
    objective.
    """

    def __init__(self, problem, atoms, n, G, r6):
        self.p = problem
        self.canonical = atoms
        self.n = n
        self.G = G
        self.r6 = r6
        self.evals = 0
        self.mask = None
        self.realign()

    def realign(self):
        """Restrict each joint to a sign-consistent set of atoms.

        Atoms are signed to agree with the dominant atom, then the active set
        is grown greedily (current support first, then by closeness to the
        dominant atom) keeping every pairwise dot product nonnegative. Inside
        such a set the align-to-dominant rule of ``nlerp`` never flips a
        sign, whichever atom dominates, so the objective is smooth and equals
        the loss of the reconstructed pose. Support atoms that do not fit are
        dropped and the weights renormalized. Returns True if any joint's
        active set changed.
        """
        J, Nmax = self.G.shape
        atoms = np.zeros_like(self.canonical)
        mask = np.zeros((J, Nmax), dtype=bool)
        G = self.G.copy()
        for j in range(J):
            nj = self.n[j]
            A = self.canonical[j, :nj]
            g = G[j, :nj]
            dom = int(np.argmax(g))
            sg = np.where(A @ A[dom] < 0.0, -1.0, 1.0)
            Ad = A * sg[:, None]
            dots = Ad @ Ad.T
            chosen = [dom]
            order = sorted(np.flatnonzero(g > 0.0), key=lambda i: -g[i])
            order += [int(i) for i in np.argsort(-dots[dom], kind="stable") if g[i] <= 0.0]
            for i in order:
                if i != dom and np.all(dots[i, chosen] >= 0.0):
                    chosen.append(int(i))
            mask[j, chosen] = True
            atoms[j, :nj] = Ad
        dropped = np.any((G > 0.0) & ~mask, axis=1)
        G = np.where(mask, G, 0.0)
        G[dropped] /= G[dropped].sum(axis=1, keepdims=True)
        changed = self.mask is None or not np.array_equal(mask, self.mask)
        self.atoms, self.mask, self.G = atoms, mask, G
        return changed

    def camera_for(self, G, r6, pos=None):
        if pos is None:
            pos = _evaluate(self.p, self.atoms, self.n, G, 1.0, np.zeros(2), r6, 0.0, 0.0, False, False)[5]
        Y = (pos @ r6_to_rotation(r6).T)[:, :2]
        s, t = _kernels._solve_st_np(Y, self.p.observed_2d, self.p.visible_2d)
        return float(s), t

    def _codes_of(self, xs):
        X = np.zeros(self.mask.shape)
        X[self.mask] = xs
        S = X.sum(axis=1, keepdims=True)
        return X, S

    def descend(self, max_iters, lam2, lam3, move_camera, tol):
        """Run L-BFGS-B for at most ``max_iters`` iterations; returns the count."""
        m = int(self.mask.sum())
        r6_fixed = self.r6.copy()

        def fg(v):
            self.evals += 1
            X, S = self._codes_of(v[:m])
            if np.any(S <= 0.0):
                return np.inf, np.zeros_like(v)
            G = X / S
            r6 = v[m:] if move_camera else r6_fixed
            if not _r6_ok(r6):
                return np.inf, np.zeros_like(v)
            out = _evaluate(self.p, self.atoms, self.n, G, 1.0, np.zeros(2), r6, lam2, lam3, True, False, lam2 > 0)
            g = np.where(self.mask, out[7], 0.0)
            gx = (g - np.sum(G * g, axis=1, keepdims=True)) / S + 2.0 * (S - 1.0)
            f = out[0] + float(np.sum((S - 1.0) ** 2))
            grad = gx[self.mask]
            if move_camera:
                grad = np.concatenate([grad, out[10]])
            return f, grad

        v0 = self.G[self.mask]
        bounds = [(0.0, None)] * m
        if move_camera:
            v0 = np.concatenate([v0, self.r6])
            bounds += [(None, None)] * 6
        v, f, used = v0, fg(v0)[0], 0
        while used < max_iters:
            res = minimize(fg, v, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": max_iters - used, "ftol": tol, "gtol": 0.0, "maxcor": 20})
            used += max(int(res.nit), 1)
            improved = np.isfinite(res.fun) and res.fun < f
            if improved:
                v, f = res.x, res.fun
            # a failed line search (kink or rounding) gets a fresh start with
            # the memory cleared, as long as it still made progress
            if res.status != 2 or not improved or res.nit == 0:
                break
        X, S = self._codes_of(v[:m])
        self.G = _kernels.sparsemax_rows(np.where(self.mask, X / S, -np.inf))
        if move_camera:
            self.r6 = rotation_to_r6(r6_to_rotation(v[m:]))
        return used


def _affine_rotation(pos, obs, vis):
    """Rotation from the best affine camera ``x ~ M X + t`` (empty list if degenerate).

    ``M`` is snapped to the nearest scaled pair of orthonormal rows via its
    SVD; the third row completes a right-handed frame.
    """
    idx = vis > 0
    if np.count_nonzero(idx) < 4:
        return []
    X = pos[idx] - pos[idx].mean(axis=0)
    Y = obs[idx] - obs[idx].mean(axis=0)
    M, _, rank, _ = np.linalg.lstsq(X, Y, rcond=None)
    if rank < 3:
        return []
    U, _, Vt = np.linalg.svd(M.T, full_matrices=False)
    rows = U @ Vt
    return [np.stack([rows[0], rows[1], np.cross(rows[0], rows[1])])]


def _init_camera(state: _Restart):
    """Pick the grid rotation whose least-squares ``s, t`` fit the 2D best."""
    pos = _evaluate(state.p, state.atoms, state.n, state.G, 1.0, np.zeros(2),
                    rotation_to_r6(np.eye(3)), 0.0, 0.0, False, False)[5]
    best = None
    for R in ROTATION_GRID + _affine_rotation(pos, state.p.observed_2d, state.p.visible_2d):
        r6 = rotation_to_r6(R)
        s, t = state.camera_for(state.G, r6, pos)
        Y = s * (pos @ R.T)[:, :2] + t
        e = np.sum(state.p.visible_2d[:, None] * (Y - state.p.observed_2d) ** 2)
        if best is None or e < best[0]:
            best = (e, r6)
    state.r6 = best[1]


def _finish_camera(state: _Restart):
    s, t = state.camera_for(state.G, state.r6)
    R = r6_to_rotation(state.r6)
    if s < 0:
        # s (R X)[:2] with s < 0 equals |s| (Rz(pi) R X)[:2]
        s = -s
        R = np.diag([-1.0, -1.0, 1.0]) @ R
    return Camera(s, t, rotation_to_r6(R))


def _descend_aligned(state, max_iters, lam2, lam3, move_camera, tol, rounds=6):
    """Optimize, then re-align signs to the new dominant atoms until stable."""
    used = 0
    for _ in range(rounds):
        used += state.descend(max(max_iters - used, 1), lam2, lam3, move_camera, tol)
        if not state.realign() or used >= max_iters:
            break
    return used


def _run_restart(problem, atoms, n, config, seed_seq, index):
    rng = np.random.default_rng(seed_seq)
    mask = np.arange(atoms.shape[1])[None, :] < n[:, None]
    Z0 = np.where(mask, rng.standard_normal(mask.shape), -np.inf)
    state = _Restart(problem, atoms, n, _kernels.sparsemax_rows(Z0), rotation_to_r6(np.eye(3)))
    iters = 0
    if config.max_iters > 0 and problem.has_3d and problem.lambda_3d > 0:
        iters += _descend_aligned(state, min(config.stage1_iters, config.max_iters), 0.0, problem.lambda_3d,
                                  False, config.tol)
    _init_camera(state)
    if config.max_iters > 0:
        iters += _descend_aligned(state, config.max_iters, problem.lambda_2d, problem.lambda_3d,
                                  problem.lambda_2d > 0, config.tol)
    camera = _finish_camera(state)
    codes = [state.G[j, : n[j]].copy() for j in range(len(n))]
    return codes, camera, iters, index


def fit(problem: FitProblem, config: FitConfig = FitConfig(), max_workers=None) -> FitResult:
    """Fit per-joint simplex codes and a camera to the observations.

    Each restart draws Gaussian logits and projects them onto the simplex.
    When 3D observations exist, the codes are first fitted to them alone.
    The camera rotation is then chosen from the 24 rotations of the cube
    plus the rotation of the best affine camera, with least-squares scale
    and translation. Finally codes and rotation descend the full loss with
    L-BFGS-B, scale and translation staying at their closed-form optimum.
    Restart ``r`` always uses the ``r``-th child of ``SeedSequence(seed)``,
    so adding restarts never worsens the best loss. The lowest-loss restart
    wins; its losses are recomputed with :func:`loss`.

    Raises
    ------
    InvalidInputError
        For ``restarts < 1`` or ``max_iters < 0``.
    """
    if config.restarts < 1 or config.max_iters < 0:
        raise InvalidInputError("restarts must be >= 1 and max_iters >= 0")
    atoms, n = problem.packed_atoms()
    children = np.random.SeedSequence(config.seed).spawn(config.restarts)
    workers = max_workers or thread_cap()

    def run(r):
        return _run_restart(problem, atoms, n, config, children[r], r)

    if workers <= 1:
        runs = [run(r) for r in range(config.restarts)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(run, range(config.restarts)))
    scored = [(loss(problem, c, cam), c, cam, it, r) for c, cam, it, r in runs]
    best = min(scored, key=lambda x: (x[0]["L"], x[4]))
    losses, codes, camera, iters, r = best
    pose = np.array([reconstruct(D, c) for D, c in zip(problem.dictionaries, codes)])
    return FitResult(codes, pose, camera, losses, iters, r, [s[0]["L"] for s in scored])


def procrustes_aligned(pred, target):
    """Similarity transform (rotation, scale, translation) of ``pred`` onto ``target``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mp, mt = pred.mean(axis=0), target.mean(axis=0)
    P, T = pred - mp, target - mt
    U, S, Vt = np.linalg.svd(T.T @ P)
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    E = np.diag([1.0, 1.0, d])
    R = U @ E @ Vt
    s = np.trace(np.diag(S) @ E) / np.sum(P * P)
    return s * P @ R.T + mt


def mpjpe(pred, target, align=True):
    """Mean per-joint position error, optionally after Procrustes alignment."""
    pred = procrustes_aligned(pred, target) if align else np.asarray(pred)
    return float(np.mean(np.linalg.norm(pred - np.asarray(target), axis=1)))


def synthesize_problem(skeleton, dictionaries, rng, support=3, camera=None, noise_2d=0.0,
                       with_3d=True, visible=None):
    """Observations generated by an in-hull pose; returns ``(problem, truth)``.

    Each joint's code has a random support of at most ``support`` atoms with
    Dirichlet weights. The default camera sits in a 224-unit image frame
    with a random rotation.
    """
    J = skeleton.n_joints - 1
    gam = []
    for D in dictionaries:
        k = min(support, D.n_atoms)
        idx = rng.choice(D.n_atoms, size=rng.integers(1, k + 1), replace=False)
        g = np.zeros(D.n_atoms)
        g[idx] = rng.dirichlet(np.ones(idx.size))
        gam.append(g)
    pose = np.array([reconstruct(D, g) for D, g in zip(dictionaries, gam)])
    if camera is None:
        R = quat.to_matrix(quat.random_uniform(rng))
        camera = Camera.from_rotation(R, scale=100.0, translation=(112.0, 112.0))
    X3 = forward_kinematics(skeleton, pose)
    X2 = camera.scale * (X3 @ camera.rotation.T)[:, :2] + camera.translation
    X2 = X2 + noise_2d * rng.standard_normal(X2.shape)
    problem = FitProblem(skeleton, list(dictionaries), X2, visible, X3 if with_3d else None)
    truth = {"codes": gam, "pose": pose, "camera": camera, "keypoints_3d": X3}
    assert len(gam) == J
    return problem, truth
