"""Time the compiled box kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 100 1000 4000] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend and the
speedup of the compiled core, after checking both produce the same output.
"""
import argparse
import timeit

import numpy as np

from visafe.kernels import backends


def random_boxes(n, rng, size=640.0):
    xy = rng.uniform(0, size, size=(n, 2))
    wh = rng.uniform(8, 120, size=(n, 2))
    return np.concatenate([xy, xy + wh], axis=1)


def cases(n, rng):
    boxes = random_boxes(n, rng)
    scores = rng.random(n)
    order = np.argsort(-scores, kind="stable")
    gt = random_boxes(max(1, n // 10), rng)
    return {
        "iou_matrix": lambda m: m.iou_matrix(boxes, gt),
        "nms": lambda m: m.nms(boxes, scores, 0.45),
        "match_greedy": lambda m: m.match_greedy(boxes[order], gt, 0.5),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 4000])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    impls = backends()
    if "compiled" not in impls:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'n':>6}" + "".join(f"{name + ' ms':>14}" for name in impls) + f"{'speedup':>10}")
    for n in args.sizes:
        for kernel, fn in cases(n, rng).items():
            outs = {name: fn(mod) for name, mod in impls.items()}
            ref = outs["python"]
            for name, o in outs.items():
                np.testing.assert_allclose(np.asarray(o, dtype=float), np.asarray(ref, dtype=float), atol=1e-9,
                                           err_msg=f"{kernel}/{name}")
            times = {}
            for name, mod in impls.items():
                number = 3 if n >= 4000 and name == "python" else 10
                t = timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)
                times[name] = min(t) / number * 1e3
            speed = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{kernel:<14}{n:>6}" + "".join(f"{times[k]:>14.3f}" for k in impls) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
