"""Compare the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py --size 32 --repeats 20
"""

import argparse
import json

from weedseg import _backend
from weedseg.bench import compare_backends, forward_latency


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=32, help="kernel input side (labelling uses 2x)")
    p.add_argument("--repeats", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", help="also write the rows here")
    args = p.parse_args(argv)

    rows = compare_backends(args.size, args.repeats, args.seed)
    by = {(r["backend"], r["kernel"]): r["median_ms"] for r in rows}
    names = sorted({r["backend"] for r in rows})
    print(f"selected backend: {_backend.NAME}")
    print(f"{'kernel':<18}" + "".join(f"{n + ' ms':>14}" for n in names) + f"{'speedup':>10}")
    for kernel in dict.fromkeys(r["kernel"] for r in rows):
        line = f"{kernel:<18}" + "".join(f"{by[(n, kernel)]:>14.3f}" for n in names)
        if ("python", kernel) in by and ("cython", kernel) in by:
            line += f"{by[('python', kernel)] / by[('cython', kernel)]:>10.2f}"
        print(line)
    fwd = [forward_latency(c, 64, max(3, args.repeats // 4), args.seed) for c in (1, 2, 3)]
    for r in fwd:
        print(f"forward 64x64 in_channels={r['in_channels']} median_ms={r['median_ms']:.2f}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"kernels": rows, "forward": fwd}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
