"""Command-line interface: ``kinedict <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command accepts ``--config FILE`` (a JSON object keyed by option
name); options given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, quat, synth
from .cluster import coverage, kmeans_quat
from .errors import DataError, DegenerateCombinationError, InvalidInputError, NumericError, UnderConstrainedError
from .fitting import FitConfig, FitProblem, fit, mpjpe
from .io import FORMATS, PoseDataset, dump_json, export, ingest, load_json
from .kinematics import Camera, Skeleton, forward_kinematics
from .obdl import Dictionary, InnerConfig, LearnConfig, learn_many, update_codes
from .plot import emit_hull_plot

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

INSPECT_HELP = """\
Summarize a dataset, dictionary, manifest or fit result.

Axis-angle CSV input (--format csv-axisangle) uses rotation-vector encoding:
each joint is three numbers (rx, ry, rz) equal to the unit rotation axis
multiplied by the rotation angle in radians, as in most motion-capture
exports. Rows start with a frame id. Quaternion CSV (csv-quat) stores
(w, x, y, z) per joint; rotations are canonicalized to w >= 0 on ingestion.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# name -> (default, type, help)
OPTIONS = {
    "synth": {
        "n": (2000, int, "number of samples"),
        "k": (8, int, "clusters: number of centers"),
        "spread": (2.0, float, "clusters: tangent-space std per axis (degrees)"),
        "n_arcs": (6, int, "arcs: number of arcs"),
        "length_min": (20.0, float, "arcs: shortest arc (degrees)"),
        "length_max": (60.0, float, "arcs: longest arc (degrees)"),
        "width": (0.0, float, "arcs: jitter across the arc (degrees)"),
        "d": (10, int, "planted-euclidean: dimension"),
        "n_atoms": (12, int, "planted-euclidean: planted atom count"),
        "support": (3, int, "planted-euclidean: maximum support size"),
        "noise": (0.01, float, "planted-euclidean: noise std"),
        "holdout": (0, int, "poses: frames held out as fit problems"),
        "seed": (0, int, "random seed"),
    },
    "learn": {
        "format": ("csv-quat", str, f"input format, one of {FORMATS}"),
        "mode": ("quaternion", str, "quaternion or euclidean"),
        "n_atoms": (128, int, "atoms per dictionary"),
        "batch_size": (512, int, "batch size b"),
        "steps": (200, int, "iterations T"),
        "momentum": (0.9, float, "history momentum in [0, 1)"),
        "inner_steps": (200, int, "code solver step cap"),
        "inner_tol": (1e-7, float, "code solver relative-decrease tolerance"),
        "joints": ("", str, "comma-separated joint names (default: all)"),
        "seed": (0, int, "random seed; joint i uses seed + i"),
    },
    "kmeans": {
        "format": ("csv-quat", str, f"input format, one of {FORMATS}"),
        "n_atoms": (128, int, "centroids per joint"),
        "max_iters": (100, int, "Lloyd iteration cap"),
        "n_init": (10, int, "k-means++ initializations"),
        "joints": ("", str, "comma-separated joint names (default: all)"),
        "seed": (0, int, "random seed; joint i uses seed + i"),
    },
    "coverage": {
        "format": ("csv-quat", str, f"input format, one of {FORMATS}"),
        "threshold": (5.0, float, "error threshold (degrees)"),
        "restarts": (4, int, "code-solve restarts per sample"),
        "seed": (0, int, "random seed"),
        "errors_csv": ("", str, "also write per-sample errors to this CSV"),
    },
    "fit": {
        "skeleton": ("", str, "skeleton JSON (default: bundled 24-joint tree)"),
        "restarts": (8, int, "random restarts"),
        "max_iters": (400, int, "optimizer iteration cap per stage"),
        "seed": (0, int, "random seed"),
    },
    "plot-hull": {
        "format": ("csv-quat", str, f"input format, one of {FORMATS}"),
        "joint": ("", str, "joint to plot (default: the dictionary's joint label, else the first)"),
        "samples": (200, int, "maximum samples drawn"),
        "codes": ("", str, "comma-separated logits (default: fitted to the first sample)"),
        "seed": (0, int, "random seed"),
    },
    "inspect": {
        "format": ("", str, "dataset format when FILE is a dataset"),
    },
}


def _add_options(p, name):
    for key, (default, typ, help_) in OPTIONS[name].items():
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=typ, default=None,
                       help=f"{help_} (default: {default!r})")
    p.add_argument("--config", default=None, help="JSON file of option values; flags override it")


def build_parser():
    ap = _Parser(prog="kinedict", description="Kinematic dictionaries: learn, evaluate and fit.")
    ap.add_argument("--version", action="version", version=f"kinedict {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="generate synthetic data with ground truth")
    p.add_argument("generator", choices=synth.GENERATORS + ("poses",))
    p.add_argument("--out", required=True, help="output directory")
    _add_options(p, "synth")

    p = sub.add_parser("learn", help="learn dictionaries with OBDL")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory (one JSON per joint + manifest.json)")
    _add_options(p, "learn")

    p = sub.add_parser("kmeans", help="spherical k-means baseline dictionaries")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_options(p, "kmeans")

    p = sub.add_parser("coverage", help="ratio of held-out rotations reconstructed within a threshold")
    p.add_argument("--dictionaries", required=True, help="manifest.json or a single dictionary JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    _add_options(p, "coverage")

    p = sub.add_parser("fit", help="fit a pose to 2D/3D keypoints")
    p.add_argument("--problem", required=True)
    p.add_argument("--dictionaries", default=None, help="manifest.json (overrides the problem file's reference)")
    p.add_argument("--out", required=True, help="result JSON")
    _add_options(p, "fit")

    p = sub.add_parser("plot-hull", help="SVG + CSV view of a dictionary hull")
    p.add_argument("--dictionaries", required=True, help="manifest.json or a single dictionary JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out-svg", required=True)
    p.add_argument("--out-csv", required=True)
    _add_options(p, "plot-hull")

    p = sub.add_parser("inspect", help="summarize a file", description=INSPECT_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("file")
    _add_options(p, "inspect")
    return ap


def _resolve(args):
    """Merge defaults < config file < command-line flags."""
    spec = OPTIONS[args.command]
    cfg = {}
    if args.config:
        cfg = load_json(args.config)
        if not isinstance(cfg, dict):
            raise DataError("config must be a JSON object", args.config)
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        unknown = sorted(set(cfg) - set(spec))
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    opts = {}
    for key, (default, typ, _) in spec.items():
        v = getattr(args, key)
        if v is None:
            v = cfg.get(key, default)
        try:
            opts[key] = typ(v)
        except (TypeError, ValueError):
            raise UsageError(f"option {key}: cannot convert {v!r}") from None
    return opts


def _provenance(argv, opts):
    return {"command": ["kinedict"] + list(argv), "seed": opts.get("seed"), "version": __version__}


def _joints(ds, selection):
    if not selection:
        return list(ds.joint_names)
    names = [s.strip() for s in selection.split(",") if s.strip()]
    missing = [n for n in names if n not in ds.joint_names]
    if missing:
        raise DataError(f"unknown joints: {', '.join(missing)}")
    return names


def _write_manifest(out, dicts, prov):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, (label, D) in enumerate(dicts.items()):
        fname = f"{i:02d}_{label}.json"
        D.save(out / fname)
        files[label] = fname
    dump_json({"dictionaries": files, "order": list(dicts), "provenance": prov}, out / "manifest.json")


def load_dictionaries(path):
    """Ordered ``{label: Dictionary}`` from a manifest or a single dictionary file."""
    path = Path(path)
    doc = load_json(path)
    if "dictionaries" in doc:
        order = doc.get("order") or list(doc["dictionaries"])
        return {label: Dictionary.load(path.parent / doc["dictionaries"][label]) for label in order}
    D = Dictionary.from_dict(doc)
    return {D.joint_label or "joint_0": D}


def cmd_synth(args, opts, argv):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = _provenance(argv, opts)
    seed, g = opts["seed"], args.generator
    if g == "poses":
        return _synth_poses(out, opts, prov)
    if g == "clusters":
        X, truth = synth.clusters(k=opts["k"], n=opts["n"], spread=opts["spread"], seed=seed)
    elif g == "arcs":
        X, truth = synth.arcs(n_arcs=opts["n_arcs"], n=opts["n"], length=(opts["length_min"], opts["length_max"]),
                              width=opts["width"], seed=seed)
    else:
        X, truth = synth.planted_euclidean(d=opts["d"], n_atoms=opts["n_atoms"], n=opts["n"],
                                           support=opts["support"], noise=opts["noise"], seed=seed)
    ids = [str(i) for i in range(X.shape[0])]
    if g == "planted-euclidean":
        export(PoseDataset(X, [f"v{k}" for k in range(X.shape[1])], ids, "csv-vector"), out / "data.csv")
    else:
        export(PoseDataset(X[:, None, :], [g], ids, "csv-quat"), out / "data.csv")
    truth["provenance"] = prov
    dump_json(truth, out / "truth.json")
    return EXIT_OK


def _synth_poses(out, opts, prov):
    """Arc data for every articulated joint of the default skeleton, plus
    held-out frames rendered into fit problems."""
    sk = Skeleton.default()
    seed, n, hold = opts["seed"], opts["n"], opts["holdout"]
    cols = []
    for j, name in enumerate(sk.articulated):
        X, _ = synth.arcs(n_arcs=opts["n_arcs"], n=n + hold, length=(opts["length_min"], opts["length_max"]),
                          width=opts["width"], seed=seed * 1000 + j, max_angle=45.0)
        cols.append(X)
    frames = np.stack(cols, axis=1)
    names = list(sk.articulated)
    export(PoseDataset(frames[:n], names, [str(i) for i in range(n)], "csv-quat"), out / "data.csv")
    if hold:
        export(PoseDataset(frames[n:], names, [str(i) for i in range(n, n + hold)], "csv-quat"), out / "heldout.csv")
    rng = np.random.default_rng(seed)
    for h in range(hold):
        pose = frames[n + h]
        cam = Camera.from_rotation(quat.to_matrix(quat.random_uniform(rng)), 100.0, (112.0, 112.0))
        X3 = forward_kinematics(sk, pose)
        X2 = cam.scale * (X3 @ cam.rotation.T)[:, :2] + cam.translation
        dump_json({
            "dictionaries": None,
            "keypoints_2d": X2.tolist(),
            "visibility_2d": [1.0] * sk.n_joints,
            "keypoints_3d": X3.tolist(),
            "visibility_3d": [1.0] * sk.n_joints,
            "lambda_2d": 1.0,
            "lambda_3d": 1.0,
            "truth": {"pose": pose.tolist(), "camera": cam.to_dict()},
            "provenance": prov,
        }, out / f"problem_{h:03d}.json")
    dump_json({"generator": "poses", "joint_names": names, "n": n, "holdout": hold, "provenance": prov},
              out / "truth.json")
    return EXIT_OK


def cmd_learn(args, opts, argv):
    if opts["mode"] == "euclidean":
        ds = ingest(args.data, "csv-vector" if opts["format"] == "csv-quat" else opts["format"])
        if ds.frames.ndim != 2:
            raise DataError("euclidean mode needs csv-vector data", args.data)
        datasets = {"shape": ds.frames}
    else:
        ds = ingest(args.data, opts["format"])
        if ds.frames.ndim != 3:
            raise DataError("quaternion mode needs rotation data", args.data)
        datasets = {name: ds.joint(name) for name in _joints(ds, opts["joints"])}
    cfg = LearnConfig(n_atoms=opts["n_atoms"], batch_size=opts["batch_size"], steps=opts["steps"],
                      momentum=opts["momentum"], seed=opts["seed"], mode=opts["mode"],
                      inner=InnerConfig(max_steps=opts["inner_steps"], tol=opts["inner_tol"]))
    dicts = learn_many(datasets, cfg)
    prov = _provenance(argv, opts)
    for D in dicts.values():
        D.provenance["cli"] = prov
    _write_manifest(args.out, dicts, prov)
    return EXIT_OK


def cmd_kmeans(args, opts, argv):
    ds = ingest(args.data, opts["format"])
    if ds.frames.ndim != 3:
        raise DataError("kmeans needs rotation data", args.data)
    prov = _provenance(argv, opts)
    dicts = {}
    for i, name in enumerate(_joints(ds, opts["joints"])):
        D = kmeans_quat(ds.joint(name), opts["n_atoms"], seed=opts["seed"] + i, max_iters=opts["max_iters"],
                        n_init=opts["n_init"], joint_label=name)
        D.provenance["cli"] = prov
        dicts[name] = D
    _write_manifest(args.out, dicts, prov)
    return EXIT_OK


def cmd_coverage(args, opts, argv):
    dicts = load_dictionaries(args.dictionaries)
    ds = ingest(args.data, opts["format"])
    reports = {}
    for i, (label, D) in enumerate(dicts.items()):
        if label in ds.joint_names:
            data = ds.joint(label)
        elif len(dicts) == 1 and len(ds.joint_names) == 1:
            data = ds.joint(0)
        else:
            raise DataError(f"no data column for joint {label!r}", args.data)
        reports[label] = coverage(D, data, opts["threshold"], opts["restarts"], opts["seed"] + i)
    errs = np.concatenate([r.per_sample_errors for r in reports.values()])
    doc = {
        "reports": {k: r.to_dict() for k, r in reports.items()},
        "overall_ratio": float(np.count_nonzero(errs <= opts["threshold"])) / errs.size,
        "threshold": opts["threshold"],
        "provenance": _provenance(argv, opts),
    }
    dump_json(doc, args.out)
    if opts["errors_csv"]:
        lines = ["joint,sample,error_deg"]
        for k, r in reports.items():
            lines += [f"{k},{i},{e!r}" for i, e in enumerate(r.per_sample_errors)]
        Path(opts["errors_csv"]).write_text("\n".join(lines) + "\n")
    return EXIT_OK


def _opt_array(doc, key):
    v = doc.get(key)
    return None if v is None else np.asarray(v, dtype=np.float64)


def cmd_fit(args, opts, argv):
    ppath = Path(args.problem)
    doc = load_json(ppath)
    ref = args.dictionaries or doc.get("dictionaries")
    if not ref:
        raise UsageError("no dictionaries given (use --dictionaries or a 'dictionaries' entry in the problem)")
    dpath = Path(ref) if args.dictionaries else ppath.parent / ref
    sk = Skeleton.load(opts["skeleton"]) if opts["skeleton"] else Skeleton.default()
    dicts = load_dictionaries(dpath)
    try:
        ordered = [dicts[name] for name in sk.articulated]
    except KeyError as exc:
        raise DataError(f"dictionary manifest lacks joint {exc.args[0]!r}", dpath) from None
    try:
        problem = FitProblem(sk, ordered, _opt_array(doc, "keypoints_2d"), _opt_array(doc, "visibility_2d"),
                             _opt_array(doc, "keypoints_3d"), _opt_array(doc, "visibility_3d"),
                             doc.get("lambda_2d", 1.0), doc.get("lambda_3d", 1.0))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, UnderConstrainedError):
            raise
        raise DataError(f"malformed problem: {exc}", ppath) from None
    res = fit(problem, FitConfig(restarts=opts["restarts"], max_iters=opts["max_iters"], seed=opts["seed"]))
    out = res.to_dict()
    out["joint_names"] = list(sk.articulated)
    if "truth" in doc and doc["truth"].get("pose") is not None:
        X_true = forward_kinematics(sk, np.asarray(doc["truth"]["pose"]))
        out["mpjpe_procrustes"] = mpjpe(forward_kinematics(sk, res.pose), X_true)
    out["provenance"] = _provenance(argv, opts)
    dump_json(out, args.out)
    return EXIT_OK


def cmd_plot_hull(args, opts, argv):
    dicts = load_dictionaries(args.dictionaries)
    label = opts["joint"] or next(iter(dicts))
    if label not in dicts:
        raise DataError(f"no dictionary for joint {label!r}", args.dictionaries)
    D = dicts[label]
    ds = ingest(args.data, opts["format"])
    data = ds.joint(label) if label in ds.joint_names else ds.joint(0)
    rng = np.random.default_rng(opts["seed"])
    take = rng.choice(data.shape[0], size=min(opts["samples"], data.shape[0]), replace=False)
    samples = data[np.sort(take)]
    if opts["codes"]:
        try:
            codes = np.array([float(c) for c in opts["codes"].split(",")])
        except ValueError:
            raise UsageError("--codes must be comma-separated numbers") from None
        if codes.size != D.n_atoms:
            raise UsageError(f"--codes needs {D.n_atoms} values")
    else:
        codes = update_codes(D.atoms, samples[:1].T, rng=rng).codes[:, 0]
    emit_hull_plot(D, samples, codes, args.out_svg, args.out_csv)
    return EXIT_OK


def cmd_inspect(args, opts, argv):
    path = Path(args.file)
    if opts["format"]:
        ds = ingest(path, opts["format"])
        info = {"kind": "dataset", "format": ds.format, "frames": ds.n_frames, "joints": list(ds.joint_names)}
    else:
        doc = load_json(path)
        if "atoms" in doc:
            D = Dictionary.from_dict(doc)
            info = {"kind": "dictionary", "mode": D.mode, "joint_label": D.joint_label, "d": D.d,
                    "N": D.n_atoms, "provenance": D.provenance}
        elif "dictionaries" in doc and isinstance(doc["dictionaries"], dict):
            info = {"kind": "manifest", "joints": doc.get("order") or list(doc["dictionaries"])}
        elif "codes" in doc:
            info = {"kind": "fit-result", "losses": doc["losses"], "restart": doc["restart"],
                    "iterations": doc["iterations"]}
        else:
            info = {"kind": "json", "keys": sorted(doc)}
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "learn": cmd_learn,
    "kmeans": cmd_kmeans,
    "coverage": cmd_coverage,
    "fit": cmd_fit,
    "plot-hull": cmd_plot_hull,
    "inspect": cmd_inspect,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        opts = _resolve(args)
        return COMMANDS[args.command](args, opts, argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, UnderConstrainedError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DegenerateCombinationError, NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InvalidInputError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
