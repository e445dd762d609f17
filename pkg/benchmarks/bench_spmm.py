"""Compare the compiled CSR kernels against the numpy fallback.

    python3 benchmarks/bench_spmm.py [--repeat 20]

Times spmm and its adjoint on random row-normalized matrices, then one
search epoch on the academic synthetic dataset (the epoch is run in a
subprocess per backend, since the backend is fixed at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mgsearch import linalg
from mgsearch.linalg import SparseMatrix, row_normalize, spmm, spmm_adjoint

EPOCH_SNIPPET = """
import time, numpy as np
from mgsearch.search import SearchConfig, SearchState, search_epoch
from mgsearch.synth import synth_planted
from mgsearch.model import TrainConfig
g, f, task, _ = synth_planted("academic", 0)
cfg = SearchConfig(K=4, n_restarts=1, train=TrainConfig(hidden_dim=64))
state = SearchState(g, f, task, cfg, np.random.default_rng(0))
search_epoch(state, 0.5)
t = time.perf_counter()
for _ in range(10):
    search_epoch(state, 0.5)
print((time.perf_counter() - t) / 10)
"""


def random_csr(rng, n, m, degree):
    rows = np.repeat(np.arange(n), degree)
    cols = rng.integers(0, m, size=n * degree)
    return row_normalize(SparseMatrix.from_coo(rows, cols, np.ones(len(rows)), (n, m)))


def epoch_seconds(pure):
    env = dict(os.environ)
    env.pop("MGSEARCH_PURE_PYTHON", None)
    if pure:
        env["MGSEARCH_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-epoch", action="store_true", help="skip the end-to-end epoch timing")
    args = ap.parse_args()
    if linalg.BACKEND != "compiled":
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    rng = np.random.default_rng(0)
    print(f"{'n':>7} {'deg':>4} {'d':>4} {'kernel':>8} {'python ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for n, deg, d in ((300, 3, 64), (5_000, 5, 64), (50_000, 10, 64), (50_000, 10, 8)):
        a = random_csr(rng, n, n, deg)
        x = rng.normal(size=(n, d))
        for name, fn in (("spmm", spmm), ("adjoint", spmm_adjoint)):
            times = {}
            for backend in ("python", "compiled"):
                t = timeit.repeat(lambda: fn(a, x, backend), number=1, repeat=args.repeat)
                times[backend] = min(t) * 1e3
            print(f"{n:>7} {deg:>4} {d:>4} {name:>8} {times['python']:>10.3f} {times['compiled']:>12.3f} "
                  f"{times['python'] / times['compiled']:>7.2f}x")

    if not args.no_epoch:
        py, c = epoch_seconds(True), epoch_seconds(False)
        print(f"\nsearch epoch (academic, K=4, d=64): python {py * 1e3:.1f} ms, compiled {c * 1e3:.1f} ms, "
              f"speedup {py / c:.2f}x")


if __name__ == "__main__":
    main()
