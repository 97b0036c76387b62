"""Compare the compiled kernels against the numpy fallback on identical work.

Runs the same update streams through both backends and reports per-event
median times, plus a microbenchmark of the small-core SVD that dominates the
per-update cost. Usage:

    python3 benchmarks/bench_backends.py [--events 2000] [--seed 0]
"""

import argparse
import statistics
import time

import numpy as np

from svdstream import backend
from svdstream.engine import SvdEngine


def time_rank_one_stream(name: str, k: int, events: int, seed: int) -> float:
    """Median seconds per rank-1 update at maintained rank k."""
    backend.set_backend(name)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((200, 160))
    engine = SvdEngine(a, k=k)
    ii = rng.integers(0, 200, size=events)
    jj = rng.integers(0, 160, size=events)
    dd = rng.normal(0.0, 0.05, size=events)
    times = []
    for i, j, d in zip(ii, jj, dd):
        start = time.perf_counter()
        engine.rank_one_update(int(i), int(j), float(d))
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def time_row_appends(name: str, k: int, events: int, seed: int) -> float:
    """Median seconds per row append at maintained rank k."""
    backend.set_backend(name)
    rng = np.random.default_rng(seed)
    engine = SvdEngine(rng.standard_normal((100, 160)), k=k)
    rows = rng.standard_normal((events, 160))
    times = []
    for x in rows:
        start = time.perf_counter()
        engine.row_append(x)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def time_core_svd(name: str, size: int, repeats: int, seed: int) -> float:
    """Median seconds per SVD of a random size x size core."""
    backend.set_backend(name)
    rng = np.random.default_rng(seed)
    cores = rng.standard_normal((repeats, size, size))
    times = []
    for core in cores:
        start = time.perf_counter()
        backend.core_svd(core)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


def report(title: str, column: str, rows: list[tuple[int, float, float]]) -> None:
    print(f"\n{title}")
    print(f"{column:>8}  {'python':>12}  {'compiled':>12}  {'speedup':>8}")
    for key, py, comp in rows:
        print(f"{key:>8}  {py * 1e6:>10.1f}us  {comp * 1e6:>10.1f}us  {py / comp:>7.2f}x")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--events", type=int, default=2000, help="events per cell")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ranks", default="5,8,12,16,24",
                        help="comma-separated maintained ranks")
    args = parser.parse_args()

    if len(backend.available_backends()) < 2:
        print("compiled kernels are not built; nothing to compare")
        return 1
    ranks = [int(tok) for tok in args.ranks.split(",")]
    previous = backend.active_backend()

    try:
        rows = []
        for k in ranks:
            py = time_rank_one_stream("python", k, args.events, args.seed)
            comp = time_rank_one_stream("compiled", k, args.events, args.seed)
            rows.append((k, py, comp))
        report("rank-1 updates on a 200x160 stream (median per event)", "k", rows)

        rows = []
        for k in ranks:
            py = time_row_appends("python", k, args.events // 4, args.seed)
            comp = time_row_appends("compiled", k, args.events // 4, args.seed)
            rows.append((k, py, comp))
        report("row appends starting from 100x160 (median per event)", "k", rows)

        rows = []
        for size in (8, 16, 32, 64):
            py = time_core_svd("python", size, max(50, args.events // 4), args.seed)
            comp = time_core_svd("compiled", size, max(50, args.events // 4), args.seed)
            rows.append((size, py, comp))
        report("small-core SVD (median per call)", "size", rows)
    finally:
        backend.set_backend(previous)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
