"""Online batch dictionary learning with simplex-constrained codes.

Minimizes ``0.5 * ||X - D sparsemax(W)||_F^2`` over unit-norm atoms ``D``
(d x N) and code logits ``W`` (N x b), alternating a code solve per batch with
one block-coordinate sweep over the atoms driven by the exponentially
weighted history matrices ``A`` (N x N) and ``B`` (d x N).

Math-level functions (``batch_objective``, ``update_codes``,
``accumulate_history``) take column-major data, one sample per column, as in
the formulas. ``learn`` and ``reconstruct`` take ordinary sample rows.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels, quat
from ._jit import thread_cap
from ._version import __version__
from .errors import DataError, InvalidInputError
from .simplex import sparsemax, sparsemax_vjp

MODES = ("quaternion", "euclidean")


@dataclass
class Dictionary:
    """N unit-norm atoms stored as the columns of a (d, N) array.

    In quaternion mode ``d == 4`` and every column is a canonical unit
    quaternion (columns are canonicalized on construction).
    """

    atoms: np.ndarray
    mode: str = "quaternion"
    joint_label: str = ""
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=np.float64)
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        if atoms.ndim != 2 or atoms.shape[1] < 1:
            raise InvalidInputError("atoms must be a (d, N) array with N >= 1")
        if not np.all(np.isfinite(atoms)):
            raise InvalidInputError("atoms must be finite")
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidInputError("atoms must have unit L2 norm")
        if self.mode == "quaternion":
            if atoms.shape[0] != 4:
                raise InvalidInputError("quaternion dictionaries have d == 4")
            atoms = quat.canonicalize(atoms.T).T.copy()
        self.atoms = atoms

    @property
    def d(self):
        return self.atoms.shape[0]

    @property
    def n_atoms(self):
        return self.atoms.shape[1]

    def to_dict(self):
        return {
            "mode": self.mode,
            "joint_label": self.joint_label,
            "d": self.d,
            "N": self.n_atoms,
            "atoms": [float(v) for v in self.atoms.ravel(order="C")],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            d, n = int(doc["d"]), int(doc["N"])
            atoms = np.array(doc["atoms"], dtype=np.float64)
            if atoms.size != d * n:
                raise ValueError(f"expected {d * n} atom entries, found {atoms.size}")
            return cls(atoms.reshape(d, n), doc["mode"], doc.get("joint_label", ""), doc.get("provenance", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed dictionary: {exc}") from exc

    def save(self, path):
        # json writes floats with repr(), the shortest string that round-trips exactly
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(str(exc), path=path) from exc
        return cls.from_dict(doc)


@dataclass(frozen=True)
class InnerConfig:
    """Code solve settings: step cap, relative-decrease stop, backtracking depth."""

    max_steps: int = 200
    tol: float = 1e-7
    max_backtracks: int = 30


@dataclass(frozen=True)
class LearnConfig:
    n_atoms: int = 128
    batch_size: int = 512
    steps: int = 200
    momentum: float = 0.9
    seed: int = 0
    mode: str = "quaternion"
    inner: InnerConfig = field(default_factory=InnerConfig)
    dead_threshold: float = 1e-8

    def __post_init__(self):
        if self.n_atoms < 1 or self.batch_size < 1 or self.steps < 0:
            raise InvalidInputError("n_atoms and batch_size must be positive, steps nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError("momentum must lie in [0, 1)")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")


@dataclass
class LearnerState:
    atoms: np.ndarray
    A: np.ndarray
    B: np.ndarray
    momentum: float = 0.9
    t: int = 0
    mode: str = "quaternion"

    @classmethod
    def initial(cls, atoms, momentum=0.9, mode="quaternion"):
        """Reset history: ``A = I``, ``B = D``."""
        atoms = np.array(atoms, dtype=np.float64)
        return cls(atoms, np.eye(atoms.shape[1]), atoms.copy(), momentum, 0, mode)

    def surrogate(self):
        """``0.5 tr(D^T D A) - tr(D^T B)``, the quantity a dictionary sweep decreases."""
        D = self.atoms
        return 0.5 * np.trace(D.T @ D @ self.A) - np.trace(D.T @ self.B)


@dataclass
class CodeBatch:
    W: np.ndarray
    codes: np.ndarray


def _atoms_of(D):
    return D.atoms if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)


def _check_dims(D, data, N=None):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] != D.shape[0]:
        raise InvalidInputError(f"data must be ({D.shape[0]}, b), got {data.shape}")
    if N is not None and N != D.shape[1]:
        raise InvalidInputError("code rows must match the atom count")
    return data


def batch_objective(D, W, data):
    """``0.5 * ||data - D sparsemax(W)||_F^2`` with codes along columns of ``W``."""
    D = _atoms_of(D)
    W = np.asarray(W, dtype=np.float64)
    data = _check_dims(D, data, W.shape[0])
    if W.ndim != 2 or W.shape[1] != data.shape[1]:
        raise InvalidInputError("W must be (N, b)")
    R = D @ sparsemax(W, axis=0) - data
    return 0.5 * float(np.sum(R * R))


def code_gradient(D, W, data):
    """Gradient of :func:`batch_objective` with respect to ``W``."""
    D = _atoms_of(D)
    W = np.asarray(W, dtype=np.float64)
    data = _check_dims(D, data, W.shape[0])
    G = sparsemax(W, axis=0)
    return sparsemax_vjp(G, D.T @ (D @ G - data), axis=0)


def update_codes(D, data, config=InnerConfig(), rng=None, W0=None):
    """Solve for simplex codes of each data column with ``D`` held fixed.

    ``W`` starts from a standard Gaussian draw (or ``W0``). Each iteration takes
    a gradient step on the codes and maps it back through sparsemax, i.e.
    ``W <- sparsemax(W) - alpha * D^T (D sparsemax(W) - X)``. Stepping the
    logits through the sparsemax Jacobian alone can only shrink the support,
    so atoms absent from the initial draw would be unreachable; the projected
    step keeps every atom reachable while ``sparsemax(W)`` still follows the
    descent direction on its support. Step sizes are per column, start at
    ``1/||D||_2^2``, grow after accepted steps and backtrack on failure of the
    sufficient-decrease test, so every column's objective is non-increasing.

    Each column stops after ``config.max_steps`` iterations or once its
    objective decreases by less than ``config.tol`` relative.
    """
    D = _atoms_of(D)
    data = _check_dims(D, data)
    N, b = D.shape[1], data.shape[1]
    if W0 is None:
        rng = np.random.default_rng(rng)
        W = rng.standard_normal((N, b))
    else:
        W = np.array(W0, dtype=np.float64)
        if W.shape != (N, b):
            raise InvalidInputError("W0 must be (N, b)")
    base = 1.0 / max(np.linalg.norm(D, 2) ** 2, 1e-12)
    W, G, _ = _kernels.code_solve(
        np.ascontiguousarray(D), np.ascontiguousarray(data), np.ascontiguousarray(W),
        base, int(config.max_steps), float(config.tol), int(config.max_backtracks),
    )
    return CodeBatch(W=W, codes=G)


def accumulate_history(state: LearnerState, codes, data) -> LearnerState:
    """Fold a batch into the history: ``A <- eta A + (1-eta) G G^T``, ``B <- eta B + (1-eta) X G^T``."""
    G = codes.codes if isinstance(codes, CodeBatch) else np.asarray(codes, dtype=np.float64)
    data = _check_dims(state.atoms, data, G.shape[0])
    if G.shape[1] != data.shape[1]:
        raise InvalidInputError("codes and data disagree on the batch size")
    eta = state.momentum
    A = eta * state.A + (1.0 - eta) * (G @ G.T)
    B = eta * state.B + (1.0 - eta) * (data @ G.T)
    return replace(state, A=A, B=B, t=state.t + 1)


def update_dictionary(state: LearnerState, rng=None, reseed_pool=None, dead_threshold=1e-8) -> LearnerState:
    """One block-coordinate sweep over the atoms, warm-started from ``state.atoms``.

    For each column ``u_j = (b_j - D a_j) / A[j, j] + d_j`` followed by
    ``d_j = u_j / ||u_j||``; quaternion columns are canonicalized. Columns
    with ``A[j, j] < dead_threshold`` or ``||u_j|| < 1e-9`` are replaced by a
    random column of ``reseed_pool`` (left as they are when no pool is given).
    """
    D = state.atoms.copy()
    A, B = state.A, state.B
    rng = np.random.default_rng(rng)
    quaternion = state.mode == "quaternion"
    for j in range(D.shape[1]):
        ajj = A[j, j]
        u = None
        if ajj >= dead_threshold:
            u = (B[:, j] - D @ A[:, j]) / ajj + D[:, j]
            n = np.linalg.norm(u)
            u = u / n if n >= 1e-9 else None
        if u is None:
            if reseed_pool is None or reseed_pool.shape[1] == 0:
                continue
            u = reseed_pool[:, rng.integers(reseed_pool.shape[1])].copy()
            u = u / np.linalg.norm(u)
        if quaternion:
            u = quat.canonicalize(u)
        D[:, j] = u
    return replace(state, atoms=D)


def init_atoms(d, n_atoms, rng, mode="quaternion"):
    """Gaussian draw with unit-normalized (and canonical, for quaternions) columns."""
    D = rng.standard_normal((d, n_atoms))
    D /= np.linalg.norm(D, axis=0)
    if mode == "quaternion":
        D = quat.canonicalize(D.T).T.copy()
    return D


def _prepare(data, mode):
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("data must be a nonempty (n_samples, d) array")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("data must be finite")
    if mode == "quaternion":
        if X.shape[1] != 4:
            raise InvalidInputError("quaternion data must have 4 columns")
        X = quat.as_unit(X)
    elif np.any(np.linalg.norm(X, axis=1) == 0) and X.shape[0] == 1:
        raise InvalidInputError("cannot learn from a single zero sample")
    return np.ascontiguousarray(X.T)


def learn(data, config=LearnConfig(), joint_label="", callback=None) -> Dictionary:
    """Learn a dictionary from samples.

    Parameters
    ----------
    data : array_like, shape (n_samples, d)
        Training samples (unit quaternions in quaternion mode; they are
        normalized and canonicalized on ingestion).
    config : LearnConfig
    joint_label : str
    callback : callable, optional
        Called as ``callback(t, state)`` after every iteration.

    Returns
    -------
    Dictionary
        Deterministic for a fixed ``config.seed`` and data order.
    """
    X = _prepare(data, config.mode)
    d, n = X.shape
    rng = np.random.default_rng(config.seed)
    state = LearnerState.initial(init_atoms(d, config.n_atoms, rng, config.mode), config.momentum, config.mode)
    b = min(config.batch_size, n)
    for _ in range(config.steps):
        idx = rng.permutation(n) if n <= config.batch_size else rng.choice(n, size=b, replace=False)
        batch = X[:, idx]
        cb = update_codes(state.atoms, batch, config.inner, rng=rng)
        state = accumulate_history(state, cb, batch)
        state = update_dictionary(state, rng=rng, reseed_pool=batch, dead_threshold=config.dead_threshold)
        if callback is not None:
            callback(state.t, state)
    prov = {
        "method": "obdl",
        "seed": config.seed,
        "batch_size": config.batch_size,
        "steps": config.steps,
        "momentum": config.momentum,
        "inner": asdict(config.inner),
        "n_samples": n,
        "version": __version__,
    }
    return Dictionary(state.atoms, config.mode, joint_label, prov)


def learn_many(datasets, config=LearnConfig(), max_workers=None):
    """Learn one dictionary per label; labels get independent seeds.

    ``datasets`` maps label -> (n_samples, d) array. Joint ``i`` (in mapping
    order) uses seed ``config.seed + i``. Work is spread over at most
    ``KINEDICT_THREADS`` threads.
    """
    labels = list(datasets)
    workers = max_workers or thread_cap()

    def run(i):
        return learn(datasets[labels[i]], replace(config, seed=config.seed + i), joint_label=labels[i])

    if workers <= 1:
        results = [run(i) for i in range(len(labels))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, range(len(labels))))
    return dict(zip(labels, results))


def reconstruct(D: Dictionary, z):
    """Map logits (or a simplex point) through sparsemax onto the dictionary.

    Quaternion mode returns the normalized combination (see
    :func:`kinedict.quat.nlerp`); Euclidean mode returns ``D @ sparsemax(z)``
    with no normalization. ``z`` may be (N,) or (M, N).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != D.n_atoms:
        raise InvalidInputError("code length must equal the atom count")
    w = sparsemax(z, axis=-1)
    if D.mode == "quaternion":
        return quat.nlerp(w, D.atoms.T)
    return w @ D.atoms.T
