"""Command-line interface.

Every run writes a manifest next to its outputs with the parameters, the
SHA-256 of every input and output, and the package version. Commands that
fill a directory (``gen``, ``split``) write ``manifest.<command>.json``;
commands with a single ``--out`` file write ``<out>.manifest.json``. Set
``SOURCE_DATE_EPOCH`` to pin the manifest timestamp; with it set, reruns
produce byte-identical directories.

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .annd import METHODS, distance_matrix, path_from_voyage, read_matrix_csv, write_matrix_csv
from .cluster import ClusteringError, cut_dendrogram, gmm_cluster, hierarchical_cluster, kmeans, linkage
from .cluster.hierarchical import LINKAGES
from .geo import GeoError, projection_for
from .ingest import (IngestError, attach_labels, class_statistics, parse_voyages, read_labels,
                     write_labels, write_statistics, write_voyages)
from .metrics import EvaluationError, align_labels, dumps_report, evaluate, format_confusion, format_table, report_json
from .segments import SegmentError, SegmentModel, stratified_split, train_segment_model
from .synth import CLASS_ORDER, GeneratorConfig, default_config, generate, generate_novel

log = logging.getLogger("vesselpath")

MANIFEST_SCHEMA = "vesselpath.manifest/1"


class UsageError(Exception):
    """Bad input or arguments; reported with exit code 2."""


# ---------------------------------------------------------------- manifest

def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    if raw:
        try:
            t = int(raw)
        except ValueError:
            raise UsageError(f"SOURCE_DATE_EPOCH must be an integer, got {raw!r}") from None
    else:
        t = int(time.time())
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def manifest_name(command: str, primary=None) -> str:
    return f"{Path(primary).name}.manifest.json" if primary is not None else f"manifest.{command}.json"


def write_manifest(out_dir, command: str, params: dict, inputs: dict, outputs: list, seed=None,
                   primary=None) -> Path:
    """Record how the files in ``outputs`` were made. Paths are stored by name."""
    out_dir = Path(out_dir)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "parameters": params,
        "seed": seed,
        "inputs": {role: {"name": Path(p).name, "sha256": _sha256(p)} for role, p in inputs.items()},
        "outputs": [{"name": Path(p).name, "sha256": _sha256(p)} for p in outputs],
        "version": __version__,
        "created": _timestamp(),
    }
    path = out_dir / manifest_name(command, primary)
    path.write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return path


def _out_dir(path) -> Path:
    d = Path(path)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {d}: {exc.strerror or exc}") from None
    if not os.access(d, os.W_OK):
        raise UsageError(f"output directory {d} is not writable")
    return d


def _parent_dir(path) -> Path:
    return _out_dir(Path(path).resolve().parent)


# ---------------------------------------------------------------- helpers

def _load_config(path) -> GeneratorConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return GeneratorConfig.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: invalid generator config: {exc}") from None


def _read_voyages(path, lenient=False):
    try:
        res = parse_voyages(path, lenient=lenient)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    if not res.voyages:
        raise UsageError(f"{path}: no usable voyages")
    return res.voyages


def _read_labels(path):
    try:
        return read_labels(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _read_matrix(path):
    try:
        return read_matrix_csv(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _write_assignment(asg, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voyage_id", "cluster"])
        for vid, lab in zip(asg.ids, asg.labels):
            w.writerow([vid, int(lab)])


def _read_predictions(path):
    """(kind, {id: value}) where kind is 'cluster' or 'class_label'."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "voyage_id" not in cols:
            raise UsageError(f"{path}: missing voyage_id column")
        kind = "class_label" if "class_label" in cols else "cluster" if "cluster" in cols else None
        if kind is None:
            raise UsageError(f"{path}: needs a class_label or cluster column")
        out = {}
        for row in reader:
            vid = row["voyage_id"].strip()
            if vid in out:
                raise UsageError(f"{path}: duplicate voyage_id {vid!r} on line {reader.line_num}")
            out[vid] = row[kind].strip()
    return kind, out


def _class_order(arg, truth):
    if arg:
        return [c.strip() for c in arg.split(",") if c.strip()]
    present = set(truth.values())
    known = [c for c in CLASS_ORDER if c in present]
    return known + sorted(present - set(known))


# ---------------------------------------------------------------- commands

def cmd_gen(args) -> int:
    out = _out_dir(args.out)
    cfg = _load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    labeled = generate(cfg)
    vpath, lpath = out / "voyages.csv", out / "labels.csv"
    write_voyages([lv.voyage for lv in labeled], vpath)
    write_labels({lv.voyage.id: lv.class_label for lv in labeled}, lpath)
    outputs = [vpath, lpath]
    if args.novel:
        npath = out / "novel.csv"
        write_voyages(generate_novel(cfg, args.novel), npath)
        outputs.append(npath)
    if args.write_config:
        cpath = out / "config.json"
        cpath.write_text(cfg.dumps() + "\n", encoding="utf-8")
        outputs.append(cpath)
    inputs = {"config": args.config} if args.config else {}
    write_manifest(out, "gen", {"novel": args.novel, "default_config": not args.config}, inputs, outputs, cfg.seed)
    print(f"wrote {len(labeled)} voyages to {vpath}")
    return 0


def cmd_dist(args) -> int:
    voyages = _read_voyages(args.voyages, args.lenient)
    if len(voyages) < 2:
        raise UsageError("need at least 2 voyages for a distance matrix")
    proj = projection_for(np.concatenate([v.lat for v in voyages]), np.concatenate([v.lon for v in voyages]))
    paths = [path_from_voyage(v, proj) for v in voyages]
    t0 = time.perf_counter()
    dm = distance_matrix(paths, method=args.method, backend=args.backend, threads=args.threads)
    log.info("distance matrix %dx%d in %.2f s", len(dm), len(dm), time.perf_counter() - t0)
    out = Path(args.out)
    _parent_dir(out)
    write_matrix_csv(dm, out)
    outputs = [out]
    if args.directed_out:
        write_matrix_csv(dm, args.directed_out, directed=True)
        outputs.append(Path(args.directed_out))
    write_manifest(out.resolve().parent, "dist", {"method": args.method, "origin": proj.to_dict()},
                   {"voyages": args.voyages}, outputs, primary=out)
    print(f"wrote {len(dm)}x{len(dm)} matrix to {out}")
    return 0


def cmd_cluster(args) -> int:
    dm = _read_matrix(args.matrix)
    out = Path(args.out)
    _parent_dir(out)
    outputs = [out]
    params = {"method": args.method}
    if args.method == "hier":
        if args.k is not None:
            dend = linkage(dm, args.linkage)
            asg = cut_dendrogram(dend, args.k)
            params.update(linkage=args.linkage, k=args.k)
        else:
            dend, asg = hierarchical_cluster(dm, args.linkage, args.cutoff)
            params.update(linkage=args.linkage, cutoff=args.cutoff)
        if args.dendrogram:
            data = dend.to_json()
            data["manifest"] = manifest_name("cluster", out)
            Path(args.dendrogram).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
            outputs.append(Path(args.dendrogram))
    else:
        if args.k is None:
            raise UsageError(f"--k is required for {args.method}")
        if args.method == "kmeans":
            asg = kmeans(dm, args.k, seed=args.seed, n_init=args.n_init or 10)
        else:
            asg = gmm_cluster(dm, args.k, seed=args.seed, n_init=args.n_init or 5)
        params.update(k=args.k, n_init=args.n_init)
    _write_assignment(asg, out)
    seed = None if args.method == "hier" else args.seed
    write_manifest(out.resolve().parent, "cluster", params, {"matrix": args.matrix}, outputs, seed, primary=out)
    print(f"{asg.k} clusters over {len(asg.ids)} voyages -> {out}")
    return 0


def cmd_split(args) -> int:
    voyages = _read_voyages(args.voyages, args.lenient)
    labels = _read_labels(args.labels)
    labeled = attach_labels(voyages, labels)
    train, test = stratified_split(labeled, args.fraction, args.seed)
    out = _out_dir(args.out)
    files = []
    for name, part in (("train", train), ("test", test)):
        vp, lp = out / f"{name}_voyages.csv", out / f"{name}_labels.csv"
        write_voyages([lv.voyage for lv in part], vp)
        write_labels({lv.voyage.id: lv.class_label for lv in part}, lp)
        files += [vp, lp]
    write_manifest(out, "split", {"fraction": args.fraction}, {"voyages": args.voyages, "labels": args.labels},
                   files, args.seed)
    print(f"train {len(train)} / test {len(test)} -> {out}")
    return 0


def cmd_segment(args) -> int:
    voyages = _read_voyages(args.voyages, args.lenient)
    labels = _read_labels(args.labels)
    # voyages without a label are not training data
    labeled = attach_labels([v for v in voyages if v.id in labels], labels)
    if not labeled:
        raise UsageError("no voyage in the input has a label")
    lat = np.concatenate([lv.voyage.lat for lv in labeled])
    lon = np.concatenate([lv.voyage.lon for lv in labeled])
    model = train_segment_model(labeled, S=args.segments, components=args.components, seed=args.seed,
                                proj=projection_for(lat, lon), threads=args.threads or 1,
                                class_order=_class_order(args.class_order, labels))
    out = Path(args.out)
    _parent_dir(out)
    data = model.to_dict()
    data["manifest"] = manifest_name("segment", out)
    out.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    write_manifest(out.resolve().parent, "segment", {"segments": args.segments, "components": args.components},
                   {"voyages": args.voyages, "labels": args.labels}, [out], args.seed, primary=out)
    smap = model.signature_map
    print(f"{args.segments} segments, {len(smap.table)} signatures, discriminative segments {list(smap.discriminative)}")
    return 0


def cmd_classify(args) -> int:
    try:
        data = json.loads(Path(args.model).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read {args.model}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.model}: malformed JSON at line {exc.lineno}, column {exc.colno}") from None
    model = SegmentModel.from_dict(data)
    voyages = _read_voyages(args.voyages, args.lenient)
    out = Path(args.out)
    _parent_dir(out)
    n_novel = 0
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["voyage_id", "class_label", "novel", "exact", "confidence", "low_segments", "signature"])
        for v in voyages:
            c = model.classify(v)
            n_novel += c.novel
            sig = ";".join("-" if a is None else str(a) for a in c.signature.assignments)
            w.writerow([v.id, c.label, int(c.novel), int(c.exact), f"{c.confidence:.6f}",
                        ";".join(str(s) for s in c.low_segments), sig])
    write_manifest(out.resolve().parent, "classify", {}, {"model": args.model, "voyages": args.voyages}, [out],
                   primary=out)
    print(f"classified {len(voyages)} voyages ({n_novel} flagged novel) -> {out}")
    return 0


def cmd_eval(args) -> int:
    kind, pred = _read_predictions(args.predicted)
    truth = _read_labels(args.truth)
    if set(pred) != set(truth):
        only_p = sorted(set(pred) - set(truth))[:5]
        only_t = sorted(set(truth) - set(pred))[:5]
        raise UsageError(f"voyage ids differ: only predicted {only_p}, only truth {only_t}")
    order = _class_order(args.class_order, truth)
    alignment = None
    if kind == "cluster":
        al = align_labels({k: int(v) for k, v in pred.items()}, truth, order)
        pred = al.predicted
        alignment = al.mapping
    cm, per_class = evaluate(truth, pred, order)
    print(format_table(per_class))
    print()
    print(format_confusion(cm))
    if args.json:
        out = Path(args.json)
        _parent_dir(out)
        rep = report_json(cm, per_class, alignment)
        rep["manifest"] = manifest_name("eval", out)
        out.write_text(dumps_report(rep) + "\n", encoding="utf-8")
        write_manifest(out.resolve().parent, "eval", {"class_order": order, "prediction_kind": kind},
                       {"predicted": args.predicted, "truth": args.truth}, [out], primary=out)
    return 0


def cmd_stats(args) -> int:
    voyages = _read_voyages(args.voyages, args.lenient)
    labels = _read_labels(args.labels)
    stats = class_statistics(attach_labels(voyages, labels))
    out = Path(args.out)
    _parent_dir(out)
    write_statistics(stats, out)
    write_manifest(out.resolve().parent, "stats", {}, {"voyages": args.voyages, "labels": args.labels}, [out],
                   primary=out)
    with open(out, encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_pipeline(args) -> int:
    """gen -> dist -> cluster -> eval, or gen -> split -> segment -> classify -> eval."""
    out = _out_dir(args.out)
    common = ["--threads", str(args.threads)] if args.threads else []
    gen = ["gen", "--out", str(out)] + (["--config", args.config] if args.config else [])
    if args.seed is not None:
        gen += ["--seed", str(args.seed)]
    steps = [gen]
    if args.method == "segment":
        seed = str(args.seed or 0)
        steps += [
            ["split", str(out / "voyages.csv"), str(out / "labels.csv"), "--fraction", str(args.fraction),
             "--seed", seed, "--out", str(out)],
            ["segment", str(out / "train_voyages.csv"), str(out / "train_labels.csv"), "--segments",
             str(args.segments), "--components", str(args.components), "--seed", seed,
             "--out", str(out / "model.json")] + common,
            ["classify", str(out / "model.json"), str(out / "test_voyages.csv"), "--out", str(out / "predicted.csv")],
            ["eval", str(out / "predicted.csv"), str(out / "test_labels.csv"), "--json", str(out / "metrics.json")],
        ]
    else:
        clus = ["cluster", str(out / "matrix.csv"), "--method", args.method, "--out", str(out / "clusters.csv")]
        if args.method == "hier":
            clus += ["--linkage", args.linkage] + (["--k", str(args.k)] if args.k else ["--cutoff", str(args.cutoff)])
            clus += ["--dendrogram", str(out / "dendrogram.json")]
        else:
            clus += ["--k", str(args.k or 5), "--seed", str(args.seed or 0)]
        steps += [
            ["dist", str(out / "voyages.csv"), "--out", str(out / "matrix.csv")] + common,
            clus,
            ["eval", str(out / "clusters.csv"), str(out / "labels.csv"), "--json", str(out / "metrics.json")],
        ]
    parser = build_parser()
    for argv in steps:
        sub = parser.parse_args(argv)
        rc = sub.func(sub)
        if rc:
            return rc
    return 0


# ---------------------------------------------------------------- parser

def _positive_int(raw):
    n = int(raw)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return n


def _positive_float(raw):
    x = float(raw)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {raw}")
    return x


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vesselpath", description="Vessel path classification from voyage tracks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def lenient(sp):
        sp.add_argument("--lenient", action="store_true", help="skip malformed rows instead of failing")

    def threads(sp):
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker threads (default: ${_accel.THREADS_ENV} or all cores)")

    sp = sub.add_parser("gen", help="generate the synthetic voyage set")
    sp.add_argument("--config", help="generator config JSON (default: built-in)")
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.add_argument("--novel", type=int, default=0, help="also write N off-corridor voyages to novel.csv")
    sp.add_argument("--write-config", action="store_true", help="save the effective config as config.json")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("dist", help="symmetric ANND distance matrix")
    sp.add_argument("voyages")
    sp.add_argument("--out", required=True, help="matrix CSV")
    sp.add_argument("--method", choices=METHODS, default="auto")
    sp.add_argument("--backend", choices=_accel.BACKENDS, default="auto")
    sp.add_argument("--directed-out", help="also write the directed matrix (row i holds i -> j)")
    threads(sp)
    lenient(sp)
    sp.set_defaults(func=cmd_dist)

    sp = sub.add_parser("cluster", help="cluster a distance matrix")
    sp.add_argument("matrix")
    sp.add_argument("--method", choices=("hier", "kmeans", "gmm"), default="hier")
    sp.add_argument("--cutoff", type=_positive_float, default=100.0, help="dendrogram cut height in meters")
    sp.add_argument("--k", type=_positive_int, default=None, help="number of clusters")
    sp.add_argument("--linkage", choices=LINKAGES, default="average")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n-init", type=_positive_int, default=None, help="restarts (kmeans 10, gmm 5)")
    sp.add_argument("--dendrogram", help="write the merge tree as JSON (hier only)")
    sp.add_argument("--out", required=True, help="assignment CSV")
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("split", help="stratified train/test split")
    sp.add_argument("voyages")
    sp.add_argument("labels")
    sp.add_argument("--fraction", type=float, default=0.7, help="training share per class")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="output directory")
    lenient(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("segment", help="fit per-segment mixtures and the signature map")
    sp.add_argument("voyages")
    sp.add_argument("labels")
    sp.add_argument("--segments", type=_positive_int, default=8)
    sp.add_argument("--components", type=_positive_int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--class-order", help="comma-separated label order for tie-breaking")
    sp.add_argument("--out", required=True, help="model JSON")
    threads(sp)
    lenient(sp)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("classify", help="label voyages with a fitted segment model")
    sp.add_argument("model")
    sp.add_argument("voyages")
    sp.add_argument("--out", required=True, help="predictions CSV")
    lenient(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("eval", help="precision, recall and F1 against ground truth")
    sp.add_argument("predicted", help="CSV with voyage_id and class_label or cluster")
    sp.add_argument("truth", help="labels CSV")
    sp.add_argument("--class-order", help="comma-separated class order")
    sp.add_argument("--json", help="write the metrics report here")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("stats", help="per-class fuel, duration, distance and speed")
    sp.add_argument("voyages")
    sp.add_argument("labels")
    sp.add_argument("--out", required=True, help="statistics CSV")
    lenient(sp)
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("pipeline", help="end-to-end run on synthetic data")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--method", choices=("hier", "kmeans", "gmm", "segment"), default="hier")
    sp.add_argument("--cutoff", type=_positive_float, default=100.0)
    sp.add_argument("--k", type=_positive_int, default=None)
    sp.add_argument("--linkage", choices=LINKAGES, default="average")
    sp.add_argument("--fraction", type=float, default=0.7)
    sp.add_argument("--segments", type=_positive_int, default=8)
    sp.add_argument("--components", type=_positive_int, default=3)
    threads(sp)
    sp.set_defaults(func=cmd_pipeline)
    return p


INPUT_ERRORS = (UsageError, IngestError, GeoError, EvaluationError, ClusteringError, SegmentError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"vesselpath {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"vesselpath {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort exit code contract
        log.debug("internal error", exc_info=True)
        print(f"vesselpath {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
