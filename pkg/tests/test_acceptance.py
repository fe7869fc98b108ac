"""Acceptance checks, one test per criterion.

Each test records a single PASS/FAIL line with the measured value, the
tolerance and the wall time; the lines are repeated in the terminal summary.
"""
import filecmp
import json
import time
from pathlib import Path

import numpy as np
import pytest

from vesselpath import synth
from vesselpath.annd import DistanceMatrix, directed_annd, path_from_voyage, read_matrix_csv, symmetric_annd
from vesselpath.cli import main
from vesselpath.cluster import gmm_fit, hierarchical_cluster, kmeans, kmeans_fit, linkage
from vesselpath.ingest import parse_voyages, read_labels
from vesselpath.metrics import ConfusionMatrix, align_labels, class_metrics, evaluate, one_vs_all
from vesselpath.segments import SegmentModel

ORDER = synth.CLASS_ORDER
RESULTS = []


def report(n, ok, detail, seconds=None):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    if seconds is not None:
        line += f" ({seconds:.2f} s)"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture(autouse=True)
def pinned_epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


def per_class_f1(metrics_path):
    rep = json.loads(Path(metrics_path).read_text())
    return {c["label"]: (c["precision"], c["recall"], c["f1"]) for c in rep["classes"]}


@pytest.fixture(scope="module")
def hier_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("hier")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("SOURCE_DATE_EPOCH", "1700000000")
        t0 = time.perf_counter()
        rc = main(["pipeline", "--out", str(out)])
        elapsed = time.perf_counter() - t0
    return out, rc, elapsed


@pytest.fixture(scope="module")
def segment_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("segment")
    with pytest.MonkeyPatch.context() as mp:
        mp.setenv("SOURCE_DATE_EPOCH", "1700000000")
        t0 = time.perf_counter()
        rc = main(["pipeline", "--out", str(out), "--method", "segment", "--segments", "8",
                   "--components", "3", "--fraction", "0.7"])
        elapsed = time.perf_counter() - t0
    return out, rc, elapsed


def test_criterion_1_reference_metrics():
    t0 = time.perf_counter()
    counts = np.array([[14, 0, 0, 0, 0], [6, 34, 0, 0, 0], [0, 0, 16, 0, 0], [0, 0, 0, 52, 0], [0, 0, 0, 0, 2]])
    expect = {"NE": (0.7, 1.0, 0.824), "NM": (1.0, 0.85, 0.919), "NW": (1.0, 1.0, 1.0), "S": (1.0, 1.0, 1.0),
              "SW": (1.0, 1.0, 1.0)}
    cm = ConfusionMatrix(ORDER, counts)
    got = {}
    for lab in ORDER:
        m = class_metrics(one_vs_all(cm, lab), lab)
        got[lab] = tuple(round(x, 3) for x in (m.precision, m.recall, m.f1))
    elapsed = time.perf_counter() - t0
    worst = max(abs(a - b) for lab in ORDER for a, b in zip(got[lab], expect[lab]))
    ok = worst <= 5e-4 and elapsed < 1.0
    assert report(1, ok, f"NE {got['NE']} NM {got['NM']}, max deviation {worst:.4f} <= 0.0005, "
                         f"runtime < 1 s", elapsed)


def test_criterion_2_hierarchical_pipeline(hier_run):
    out, rc, elapsed = hier_run
    scores = per_class_f1(out / "metrics.json") if rc == 0 else {}
    perfect = set(scores) == set(ORDER) and all(v == (1.0, 1.0, 1.0) for v in scores.values())
    ok = rc == 0 and perfect and elapsed < 10.0
    assert report(2, ok, f"pipeline hier exit {rc}, all five classes P=R=F1=1.0: {perfect}, runtime < 10 s",
                  elapsed)


def test_criterion_3_segmented_method(segment_run):
    out, rc, elapsed = segment_run
    scores = per_class_f1(out / "metrics.json") if rc == 0 else {}
    n_test = len(read_labels(out / "test_labels.csv")) if rc == 0 else 0
    f1 = {k: v[2] for k, v in scores.items()}
    ok = rc == 0 and set(f1) == set(ORDER) and all(v == 1.0 for v in f1.values()) and elapsed < 20.0
    assert report(3, ok, f"S=8 C=3, {n_test} held-out voyages, per-class F1 {f1}, runtime < 20 s", elapsed)


def test_criterion_4_hard_pair(hier_run):
    out, _, _ = hier_run
    t0 = time.perf_counter()
    dm = read_matrix_csv(out / "matrix.csv")
    truth = read_labels(out / "labels.csv")
    lab = np.array([truth[v] for v in dm.ids])
    pair_annd = {}
    for a in ORDER:
        for b in ORDER:
            if a < b:
                pair_annd[a, b] = float(dm.values[np.ix_(lab == a, lab == b)].mean())
    far = [p for p, d in pair_annd.items() if d > 120.0]

    ne_nm_seeds = []
    far_confusions = 0
    for seed in range(10):
        al = align_labels(kmeans(dm, 5, seed=seed), truth, ORDER)
        cm, _ = evaluate(truth, al.predicted, ORDER)
        c = cm.counts
        i, j = ORDER.index("NE"), ORDER.index("NM")
        if c[i, j] + c[j, i] > 0:
            ne_nm_seeds.append(seed)
        for a, b in far:
            ia, ib = cm.index(a), cm.index(b)
            far_confusions += int(c[ia, ib] + c[ib, ia])
    _, asg = hierarchical_cluster(dm, "average", 100.0)
    cm, _ = evaluate(truth, align_labels(asg, truth, ORDER).predicted, ORDER)
    hier_off_diag = int(cm.counts.sum() - np.trace(cm.counts))
    elapsed = time.perf_counter() - t0
    ok = len(ne_nm_seeds) >= 1 and far_confusions == 0 and hier_off_diag == 0
    assert report(4, ok, f"NE/NM ANND {pair_annd['NE', 'NM']:.1f} m; k-means confuses NE/NM in seeds "
                         f"{ne_nm_seeds} (need >= 1); confusions among {len(far)} pairs with ANND > 120 m: "
                         f"{far_confusions}; hierarchical off-diagonal: {hier_off_diag}", elapsed)


def scan_annd(a, b):
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return d.min(axis=1).mean()


def test_criterion_5_oracle_equivalence(labeled, proj):
    paths = [path_from_voyage(lv.voyage, proj).points for lv in labeled]
    rng = np.random.default_rng(20240701)
    pairs = [tuple(rng.choice(len(paths), 2, replace=False)) for _ in range(200)]
    directed_annd(paths[0][:10], paths[1][:10])      # compile outside the clock
    t0 = time.perf_counter()
    fast = [directed_annd(paths[a], paths[b]) for a, b in pairs]
    elapsed = time.perf_counter() - t0
    slow = [scan_annd(paths[a], paths[b]) for a, b in pairs]
    rel = max(abs(f - s) / s for f, s in zip(fast, slow))
    ok = rel <= 1e-9 and elapsed < 5.0
    assert report(5, ok, f"200 pairs, max relative difference {rel:.2e} <= 1e-9, runtime < 5 s", elapsed)


def test_criterion_6_property_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    failures = []

    em_worst, resp_worst = 0.0, 0.0
    for fit in range(50):
        k = int(rng.integers(1, 5))
        centers = rng.uniform(-30, 30, (4, 2))
        X = centers[rng.integers(0, 4, 200)] + rng.normal(size=(200, 2)) * rng.uniform(0.3, 4)
        g = gmm_fit(X, k, seed=fit, n_init=1)
        em_worst = max(em_worst, -float(np.diff(g.history).min(initial=0.0)))
        resp_worst = max(resp_worst, float(np.abs(g.responsibilities(X).sum(axis=1) - 1).max()))
    if em_worst > 1e-9:
        failures.append(f"EM decrease {em_worst:.2e}")
    if resp_worst > 1e-12:
        failures.append(f"responsibility sum error {resp_worst:.2e}")

    wcss_bad = 0
    for fit in range(50):
        X = rng.normal(size=(60, 4)) * rng.uniform(0.1, 5, 4)
        for r in range(3):
            h = np.array(kmeans_fit(X, int(rng.integers(1, 7)), seed=[fit, r], n_init=1).history)
            wcss_bad += int(np.any(np.diff(h) > 1e-9 * h[0]))
    if wcss_bad:
        failures.append(f"{wcss_bad} k-means restarts with rising WCSS")

    link_bad = 0
    for _ in range(50):
        m = int(rng.integers(2, 30))
        d = np.triu(rng.integers(1, 8, (m, m)).astype(float), 1)
        h = linkage(DistanceMatrix(tuple(map(str, range(m))), d + d.T), "average").heights
        link_bad += int(np.any(np.diff(h) < 0))
    if link_bad:
        failures.append(f"{link_bad} non-monotone dendrograms")

    annd_bad = 0
    for _ in range(500):
        a = rng.uniform(-5000, 5000, (int(rng.integers(1, 60)), 2))
        b = rng.uniform(-5000, 5000, (int(rng.integers(1, 60)), 2))
        shift = rng.uniform(-1e4, 1e4, 2)
        s = float(rng.uniform(0.1, 10))
        base = symmetric_annd(a, b)
        good = (directed_annd(a, a) == 0.0
                and symmetric_annd(a, b) == symmetric_annd(b, a)
                and abs(symmetric_annd(a + shift, b + shift) - base) <= 1e-9 * base + 1e-9
                and abs(symmetric_annd(a * s, b * s) - s * base) <= 1e-9 * s * base)
        annd_bad += int(not good)
    if annd_bad:
        failures.append(f"{annd_bad}/500 ANND property violations")
    elapsed = time.perf_counter() - t0
    ok = not failures
    assert report(6, ok, "50 EM fits (worst decrease {:.1e}), responsibility error {:.1e}, 150 k-means "
                         "restarts, 50 dendrograms, 500 ANND cases{}".format(
                             em_worst, resp_worst, "" if ok else ": " + "; ".join(failures)), elapsed)


def cli_session(root: Path, threads=None):
    """Run every command once inside ``root``; return the exit codes."""
    def run(*argv):
        return main([str(x) for x in argv])

    th = ["--threads", str(threads)] if threads else []
    g, w = root / "gen", root / "work"
    w.mkdir(parents=True, exist_ok=True)
    codes = [
        run("gen", "--out", g, "--novel", 4, "--write-config"),
        run("dist", g / "voyages.csv", "--out", w / "matrix.csv", "--directed-out", w / "directed.csv", *th),
        run("cluster", w / "matrix.csv", "--out", w / "hier.csv", "--dendrogram", w / "tree.json"),
        run("cluster", w / "matrix.csv", "--method", "kmeans", "--k", 5, "--seed", 1, "--out", w / "km.csv"),
        run("cluster", w / "matrix.csv", "--method", "gmm", "--k", 5, "--seed", 1, "--out", w / "gmm.csv"),
        run("split", g / "voyages.csv", g / "labels.csv", "--out", root / "split"),
        run("segment", root / "split" / "train_voyages.csv", root / "split" / "train_labels.csv",
            "--out", w / "model.json", *th),
        run("classify", w / "model.json", root / "split" / "test_voyages.csv", "--out", w / "pred.csv"),
        run("classify", w / "model.json", g / "novel.csv", "--out", w / "novel_pred.csv"),
        run("eval", w / "km.csv", g / "labels.csv", "--json", w / "km_metrics.json"),
        run("eval", w / "pred.csv", root / "split" / "test_labels.csv", "--json", w / "seg_metrics.json"),
        run("stats", g / "voyages.csv", g / "labels.csv", "--out", w / "stats.csv"),
        run("pipeline", "--out", root / "pipe", "--method", "kmeans", "--seed", 3, *th),
    ]
    return codes


def test_criterion_7_determinism(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    runs = {}
    for name, threads, env in (("a", None, None), ("b", None, None), ("c", 2, "2")):
        if env:
            monkeypatch.setenv("VESSELPATH_THREADS", env)
        else:
            monkeypatch.delenv("VESSELPATH_THREADS", raising=False)
        runs[name] = cli_session(tmp_path / name, threads)
    elapsed = time.perf_counter() - t0

    def files(root):
        return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())

    ref = files(tmp_path / "a")
    differing = []
    for other in ("b", "c"):
        if files(tmp_path / other) != ref:
            differing.append(f"{other}: file sets differ")
            continue
        for rel in ref:
            if not filecmp.cmp(tmp_path / "a" / rel, tmp_path / other / rel, shallow=False):
                differing.append(f"{other}/{rel}")
    codes_ok = all(c == 0 for codes in runs.values() for c in codes)
    ok = codes_ok and not differing
    assert report(7, ok, f"13 commands x 3 runs (third with --threads 2 and VESSELPATH_THREADS=2), "
                         f"{len(ref)} files, all exit 0: {codes_ok}, differing files: {differing or 'none'}",
                  elapsed)


def test_criterion_8_novelty(segment_run):
    out, rc, _ = segment_run
    t0 = time.perf_counter()
    model = SegmentModel.from_dict(json.loads((out / "model.json").read_text()))
    novel = synth.generate_novel(synth.default_config(0), 20)
    flagged = sum(model.classify(v).novel for v in novel)
    test = parse_voyages(out / "test_voyages.csv").voyages
    false_flags = [v.id for v in test if model.classify(v).novel]
    elapsed = time.perf_counter() - t0
    ok = rc == 0 and flagged == len(novel) and not false_flags
    assert report(8, ok, f"novel flagged {flagged}/{len(novel)}, false flags on {len(test)} held-out voyages: "
                         f"{len(false_flags)}", elapsed)
