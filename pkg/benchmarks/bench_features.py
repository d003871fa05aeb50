"""Compare the compiled and pure-Python statistics kernels.

Feeds the same synthetic trace through both backends, checks the rows
are bit-identical, and reports packets/second for each.

    python3 benchmarks/bench_features.py --packets 50000
"""

import argparse
import time

import numpy as np

from nids_xray.features import FeatureError, extract_features, make_kernel
from nids_xray.synthetic import synth_trace


def run(backend: str, records) -> tuple[float, np.ndarray]:
    t0 = time.perf_counter()
    fm = extract_features(records, backend=backend)
    return time.perf_counter() - t0, fm.X


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--packets", type=int, default=50000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    # enough benign seconds to reach the requested packet count
    seconds = max(10.0, args.packets / 55.0)
    records = synth_trace(
        seed=args.seed,
        benign_seconds=seconds,
        benign_pps=50.0,
        flood_start=seconds * 0.75,
        flood_seconds=2.0,
        flood_pps=250.0,
    )[: args.packets]
    print("trace: %d packets" % len(records))

    backends = ["python"]
    try:
        make_kernel("compiled")
        backends.append("compiled")
    except FeatureError:
        print("compiled kernel unavailable; timing the python backend only")

    rows = {}
    for backend in backends:
        best = float("inf")
        for _ in range(args.repeat):
            elapsed, X = run(backend, records)
            best = min(best, elapsed)
        rows[backend] = X
        print("%-9s %8.3fs  %10.0f pkt/s" % (backend, best, len(records) / best))
        if backend == "compiled":
            if np.array_equal(rows["python"], X):
                print("outputs bit-identical across backends")
            else:
                print("WARNING: backend outputs differ")
                return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
