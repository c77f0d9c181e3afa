"""2D views of a quaternion dictionary's hull as SVG plus raw CSV."""

from __future__ import annotations

import csv
import io as _io
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import quat
from .errors import InvalidInputError
from .obdl import Dictionary, reconstruct
from .simplex import sparsemax

SIZE = 480
MARGIN = 30


@dataclass
class HullPlot:
    """Projected coordinates and the rendered outputs.

    ``points`` stacks atoms, samples and the reconstruction (last row), in
    that order; ``components`` (2, 4) and ``center`` (4,) define the PCA map
    ``y = (x - center) @ components.T`` applied to sign-aligned quaternions.
    """

    points: np.ndarray
    kinds: list
    active: np.ndarray
    hull: list
    components: np.ndarray
    center: np.ndarray
    aligned: np.ndarray
    svg: str | None
    csv: str


def pca_project(X, n_components=2):
    """Project rows of ``X`` onto their top principal directions (SVD)."""
    center = X.mean(axis=0)
    _, _, Vt = np.linalg.svd(X - center, full_matrices=False)
    comps = Vt[:n_components]
    if comps.shape[0] < n_components:
        comps = np.vstack([comps, np.zeros((n_components - comps.shape[0], X.shape[1]))])
    return (X - center) @ comps.T, comps, center


def _svg(points, kinds, active, hull):
    lo = points.min(axis=0)
    span = max(float(np.max(points.max(axis=0) - lo)), 1e-12)
    k = (SIZE - 2 * MARGIN) / span

    def xy(p):
        # flip y so the first component points right and the second up
        return f"{MARGIN + k * (p[0] - lo[0]):.3f}", f"{SIZE - MARGIN - k * (p[1] - lo[1]):.3f}"

    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(SIZE), height=str(SIZE),
                      viewBox=f"0 0 {SIZE} {SIZE}")
    ET.SubElement(root, "rect", width=str(SIZE), height=str(SIZE), fill="white")
    if hull:
        pts = " ".join(",".join(xy(points[i])) for i in hull)
        ET.SubElement(root, "polygon", {"class": "hull", "points": pts, "fill": "none",
                                        "stroke": "#888888", "stroke-width": "1.5"})
    atom_idx = 0
    for p, kind in zip(points, kinds):
        x, y = xy(p)
        if kind == "sample":
            ET.SubElement(root, "circle", {"class": "sample", "cx": x, "cy": y, "r": "2", "fill": "#4477aa",
                                           "fill-opacity": "0.5"})
        elif kind == "atom":
            on = bool(active[atom_idx])
            ET.SubElement(root, "circle", {"class": "atom active" if on else "atom", "data-index": str(atom_idx),
                                           "cx": x, "cy": y, "r": "5",
                                           "fill": "#cc3311" if on else "#222222"})
            atom_idx += 1
        else:
            ET.SubElement(root, "rect", {"class": "reconstruction", "x": f"{float(x) - 5:.3f}",
                                         "y": f"{float(y) - 5:.3f}", "width": "10", "height": "10",
                                         "fill": "none", "stroke": "#228833", "stroke-width": "2"})
    return ET.tostring(root, encoding="unicode")


def emit_hull_plot(D: Dictionary, samples, codes, svg_path=None, csv_path=None) -> HullPlot:
    """Project atoms, samples and the reconstruction of ``codes`` to 2D.

    Quaternions are sign-aligned to the first atom before PCA so antipodal
    copies of one rotation land together. The CSV is always written; the SVG
    only with at least 3 atoms (otherwise ``svg`` is ``None``), and its hull
    polygon is dropped if the atoms project to a degenerate set. Atoms in
    the support of ``sparsemax(codes)`` are marked active.
    """
    if D.mode != "quaternion":
        raise InvalidInputError("hull plots need a quaternion dictionary")
    A = D.atoms.T
    S = quat.as_unit(np.atleast_2d(np.asarray(samples, dtype=np.float64)))
    codes = np.asarray(codes, dtype=np.float64)
    active = sparsemax(codes) > 0.0
    r = reconstruct(D, codes)[None, :]
    X = np.vstack([A, S, r])
    X = np.where((X @ A[0])[:, None] < 0.0, -X, X)
    Y, comps, center = pca_project(X)
    N, M = A.shape[0], S.shape[0]
    kinds = ["atom"] * N + ["sample"] * M + ["reconstruction"]
    hull = []
    if N >= 3:
        try:
            hull = [int(i) for i in ConvexHull(Y[:N]).vertices]
        except QhullError:
            hull = []
    svg = _svg(Y, kinds, active, hull) if N >= 3 else None

    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "index", "pc1", "pc2", "active", "w", "x", "y", "z"])
    counters = {"atom": 0, "sample": 0, "reconstruction": 0}
    for kind, y, x in zip(kinds, Y, X):
        i = counters[kind]
        counters[kind] += 1
        flag = int(active[i]) if kind == "atom" else ""
        w.writerow([kind, i, repr(float(y[0])), repr(float(y[1])), flag] + [repr(float(v)) for v in x])
    text = buf.getvalue()
    if svg_path is not None and svg is not None:
        Path(svg_path).write_text(svg + "\n")
    if csv_path is not None:
        Path(csv_path).write_text(text)
    return HullPlot(Y, kinds, active, hull, comps, center, X, svg, text)
