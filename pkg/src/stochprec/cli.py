"""Command-line entry points.

Subcommands: train, bench-gemm, quantize-demo, allocate-sim, mnist-check,
make-data. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import os
import sys

import numpy as np


def _cmd_train(args):
    from . import network
    from .config import parse_config

    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    _, history, alloc = network.train(cfg)
    final_err = history[-1][2]
    print(f"{cfg.name}: final val error {100 * final_err:.2f}%, "
          f"allocation {' '.join(str(int(round(b))) for b in alloc)}")
    print(f"metrics: {os.path.join(cfg.output_dir, f'metrics_seed{cfg.seed}.csv')}")
    return 0


def _cmd_bench_gemm(args):
    from .bitgemm import bench_gemm, write_bench_csv

    sizes = [int(s) for s in args.sizes.split(",")]
    pairs = []
    for tok in args.bits.split(","):
        m, _, k = tok.partition("x")
        pairs.append((int(m), int(k)))
    rows = bench_gemm(sizes, pairs, repeats=args.repeats)
    write_bench_csv(rows, args.output)
    for r in rows:
        print(f"size={r['size']} M={r['m_bits']} K={r['k_bits']} "
              f"median={r['median_ns'] / 1e6:.2f}ms speedup={r['speedup']:.2f}x")
    print(f"wrote {args.output}")
    return 0


def _cmd_quantize_demo(args):
    from .quantize import levels

    for v in levels(args.k):
        print(f"{v:.4f}")
    return 0


def _cmd_allocate_sim(args):
    from .allocator import GumbelAllocator

    logits = np.array([float(x) for x in args.logits.split(",")])
    alloc = GumbelAllocator(len(logits), args.budget, temperature=args.tau,
                            seed=args.seed)
    alloc.logits.data[...] = logits
    sample = alloc.sample_allocation()
    print("fractional:", " ".join(f"{b:.3f}" for b in sample.bits.data))
    hard = alloc.hard_assign(args.trials)
    print("hard:", " ".join(str(b) for b in hard.as_ints()))
    return 0


def _cmd_mnist_check(args):
    from .mnist import check_dir

    n_train, n_test = check_dir(args.dir)
    print(f"ok: {n_train} training and {n_test} test examples")
    return 0


def _cmd_make_data(args):
    from .mnist import ensure_dataset

    ensure_dataset(args.dir, n_train=args.n_train, n_test=args.n_test, seed=args.seed)
    print(f"dataset ready in {args.dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochprec",
        description="Learned precision allocation for low-bit CNNs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment arm from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("bench-gemm", help="benchmark bit_gemm against the fp32 kernel")
    p.add_argument("--sizes", default="1024,2048", help="comma-separated matrix sizes")
    p.add_argument("--bits", default="1x1,2x2,4x4,8x8", help="MxK pairs, comma-separated")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--output", default="bench_gemm.csv")
    p.set_defaults(func=_cmd_bench_gemm)

    p = sub.add_parser("quantize-demo", help="print the quantizer level set for k")
    p.add_argument("--k", type=float, required=True)
    p.set_defaults(func=_cmd_quantize_demo)

    p = sub.add_parser("allocate-sim", help="simulate fractional and hard allocations")
    p.add_argument("--logits", required=True, help="comma-separated logits")
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_allocate_sim)

    p = sub.add_parser("mnist-check", help="validate IDX dataset files in a directory")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=_cmd_mnist_check)

    p = sub.add_parser("make-data", help="generate the rendered-digit stand-in dataset")
    p.add_argument("--dir", required=True)
    p.add_argument("--n-train", type=int, default=20000)
    p.add_argument("--n-test", type=int, default=5000)
    p.add_argument("--seed", type=int, default=12345)
    p.set_defaults(func=_cmd_make_data)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
