"""Time the ANND kernels: numba k-d tree against the pure-numpy scan.

    python benchmarks/bench_annd.py --paths 40 --repeat 3

The numpy route is what runs when VESSELPATH_DISABLE_NUMBA=1 is set.
"""
import argparse
import time

import numpy as np

from vesselpath import synth
from vesselpath.annd import directed_matrix, path_from_voyage


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=40, help="number of synthetic voyages (max 124)")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    labeled = synth.generate(synth.default_config(0))[: args.paths]
    proj = synth.default_projection()
    paths = [path_from_voyage(lv.voyage, proj) for lv in labeled]
    n_pts = sum(len(p) for p in paths)
    print(f"{len(paths)} paths, {n_pts} points, {len(paths) * (len(paths) - 1)} directed pairs")

    directed_matrix(paths[:2], backend="numba")     # JIT compile, or load from cache
    rows = []
    for label, kw in (("numba tree", {"backend": "numba", "method": "tree", "threads": args.threads}),
                      ("numba scan", {"backend": "numba", "method": "exhaustive"}),
                      ("numpy scan", {"backend": "numpy"})):
        t, m = best_of(lambda: directed_matrix(paths, **kw), args.repeat)
        rows.append((label, t, m))

    ref = rows[-1][2]
    print(f"{'backend':<12} {'seconds':>9} {'speedup':>8} {'max rel diff':>13}")
    for label, t, m in rows:
        off = ~np.eye(len(paths), dtype=bool)
        rel = np.max(np.abs(m[off] - ref[off]) / ref[off])
        print(f"{label:<12} {t:>9.3f} {rows[-1][1] / t:>7.1f}x {rel:>13.2e}")


if __name__ == "__main__":
    main()
