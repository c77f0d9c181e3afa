"""Pose dataset ingestion/export and deterministic JSON output.

Supported formats:

``csv-quat``
    ``frame_id, w, x, y, z, w, x, y, z, ...`` (4 reals per joint).
``csv-axisangle``
    ``frame_id, rx, ry, rz, ...``: rotation vectors, the axis scaled by the
    angle in radians (3 reals per joint).
``jsonl``
    One object per line: ``{"frame": id, "quat": {joint: [w, x, y, z]}}`` or
    ``{"frame": id, "rotvec": {joint: [rx, ry, rz]}}``.
``csv-vector``
    ``frame_id, v1, ..., vd`` for Euclidean (shape-style) data.

CSV files may start with a header row; joint names are taken from column
names of the form ``<joint>_<component>``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import quat
from .errors import DataError

FORMATS = ("csv-quat", "csv-axisangle", "jsonl", "csv-vector")
_WIDTH = {"csv-quat": 4, "csv-axisangle": 3}
_SUFFIX = {"csv-quat": ("w", "x", "y", "z"), "csv-axisangle": ("rx", "ry", "rz")}


@dataclass
class PoseDataset:
    """Frames of per-joint rotations (or vectors, for ``csv-vector``).

    ``frames`` has shape (n_frames, n_joints, 4) with canonical unit
    quaternions, or (n_frames, d) in vector form.
    """

    frames: np.ndarray
    joint_names: list
    frame_ids: list
    format: str

    @property
    def n_frames(self):
        return self.frames.shape[0]

    def joint(self, name_or_index):
        """All frames of one joint as (n_frames, 4) rows."""
        j = name_or_index if isinstance(name_or_index, int) else self.joint_names.index(name_or_index)
        return self.frames[:, j, :]


def _parse_float(text, path, line, col):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"cannot parse {text!r} as a number", path, line, col) from None
    if not np.isfinite(v):
        raise DataError("non-finite value", path, line, col)
    return v


def _is_header(row):
    try:
        [float(c) for c in row[1:]]
    except ValueError:
        return True
    return False


def _names_from_header(row, width, path):
    cols = row[1:]
    if width is None:
        return [c.strip() for c in cols]
    if len(cols) % width:
        raise DataError(f"header has {len(cols)} value columns, not a multiple of {width}", path, 1)
    names = []
    for k in range(0, len(cols), width):
        base = cols[k].strip()
        names.append(base.rsplit("_", 1)[0] if "_" in base else base)
    return names


def _ingest_csv(path, fmt):
    width = _WIDTH.get(fmt)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError("empty file", path)
    names = None
    start = 0
    if _is_header(rows[0]):
        names = _names_from_header(rows[0], width, path)
        start = 1
    values, ids = [], []
    ncols = None
    for i in range(start, len(rows)):
        row = rows[i]
        line = i + 1
        if not row or all(not c.strip() for c in row):
            continue
        if ncols is None:
            ncols = len(row)
            if ncols < 2 or (width and (ncols - 1) % width):
                raise DataError(f"expected frame id plus a multiple of {width or 1} values, got {ncols} columns",
                                path, line)
        elif len(row) != ncols:
            raise DataError(f"expected {ncols} columns, got {len(row)}", path, line, min(len(row), ncols) + 1)
        ids.append(row[0].strip())
        values.append([_parse_float(c, path, line, k + 2) for k, c in enumerate(row[1:])])
    if not values:
        raise DataError("no data rows", path)
    V = np.array(values)
    if fmt == "csv-vector":
        if names is not None and len(names) != V.shape[1]:
            raise DataError("header and data disagree on the column count", path, 1)
        return PoseDataset(V, names or [f"v{k}" for k in range(V.shape[1])], ids, fmt)
    n, J = V.shape[0], V.shape[1] // width
    if names is not None and len(names) != J:
        raise DataError("header and data disagree on the joint count", path, 1)
    V = V.reshape(n, J, width)
    if fmt == "csv-axisangle":
        Q = quat.from_rotvec(V)
    else:
        bad = np.argwhere(np.linalg.norm(V, axis=-1) < 1e-12)
        if bad.size:
            r, j = bad[0]
            raise DataError("zero quaternion", path, start + 1 + int(r), 2 + 4 * int(j))
        Q = quat.as_unit(V)
    return PoseDataset(Q, names or [f"joint_{k}" for k in range(J)], ids, fmt)


def _ingest_jsonl(path):
    frames, ids, names = [], [], None
    with open(path) as fh:
        lines = fh.readlines()
    for i, text in enumerate(lines):
        line = i + 1
        if not text.strip():
            continue
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(exc.msg, path, line, exc.colno) from None
        if not isinstance(rec, dict) or ("quat" in rec) == ("rotvec" in rec):
            raise DataError('each record needs exactly one of "quat" or "rotvec"', path, line)
        key = "quat" if "quat" in rec else "rotvec"
        joints = rec[key]
        if not isinstance(joints, dict) or not joints:
            raise DataError(f'"{key}" must map joint names to arrays', path, line)
        if names is None:
            names = list(joints)
        elif list(joints) != names:
            raise DataError("joint names differ from the first record", path, line)
        try:
            V = np.array([joints[n] for n in names], dtype=np.float64)
        except (TypeError, ValueError):
            raise DataError("joint values must be numeric arrays", path, line) from None
        width = 4 if key == "quat" else 3
        if V.shape != (len(names), width) or not np.all(np.isfinite(V)):
            raise DataError(f"each joint needs {width} finite numbers", path, line)
        if key == "rotvec":
            Q = quat.from_rotvec(V)
        else:
            if np.any(np.linalg.norm(V, axis=1) < 1e-12):
                raise DataError("zero quaternion", path, line)
            Q = quat.as_unit(V)
        frames.append(Q)
        ids.append(str(rec.get("frame", len(ids))))
    if not frames:
        raise DataError("empty file", path)
    return PoseDataset(np.array(frames), names, ids, "jsonl")


def ingest(path, format="csv-quat") -> PoseDataset:
    """Read a pose dataset; every rotation comes back canonicalized.

    Raises
    ------
    DataError
        For a missing or empty file or a malformed row (with line and, where
        known, column numbers).
    """
    path = Path(path)
    if format not in FORMATS:
        raise DataError(f"unknown format {format!r}; expected one of {FORMATS}", path)
    if not path.is_file():
        raise DataError("no such file", path)
    if format == "jsonl":
        return _ingest_jsonl(path)
    return _ingest_csv(path, format)


def export(ds: PoseDataset, path, format=None):
    """Write ``ds``; floats use shortest round-trip repr, so csv-quat, jsonl and
    csv-vector exports re-ingest bit-identically."""
    fmt = format or ds.format
    path = Path(path)
    ids = ds.frame_ids or [str(i) for i in range(ds.n_frames)]
    if fmt == "jsonl":
        with open(path, "w") as fh:
            for fid, Q in zip(ids, ds.frames):
                rec = {"frame": fid, "quat": {n: [float(v) for v in q] for n, q in zip(ds.joint_names, Q)}}
                fh.write(json.dumps(rec) + "\n")
        return
    if fmt == "csv-vector":
        header = ["frame"] + list(ds.joint_names)
        rows = [[fid] + [repr(float(v)) for v in row] for fid, row in zip(ids, ds.frames)]
    elif fmt in _WIDTH:
        V = ds.frames if fmt == "csv-quat" else quat.to_rotvec(ds.frames)
        header = ["frame"] + [f"{n}_{c}" for n in ds.joint_names for c in _SUFFIX[fmt]]
        rows = [[fid] + [repr(float(v)) for v in row.reshape(-1)] for fid, row in zip(ids, V)]
    else:
        raise DataError(f"unknown format {fmt!r}", path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def dump_json(obj, path):
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def load_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError("no such file", path) from None
    except json.JSONDecodeError as exc:
        raise DataError(exc.msg, path, exc.lineno, exc.colno) from None
