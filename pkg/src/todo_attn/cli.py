"""Command-line interface: ``todo-attn {bench,attn,analyze,compare,mem}``.

Data goes to stdout (or ``--out``), diagnostics to stderr. Exit codes: 0 ok,
1 runtime error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import re
import sys

from . import bench, metrics, tgrd
from .attention import AttentionConfig, dense_attention, todo_attention
from .errors import NonFiniteError, RangeError, ShapeError, TgrdFormatError
from .grid import ratio_to_spec
from .tome import merge_count, tome_attention

_SHAPE = re.compile(r"^(\d+)x(\d+)$")


def _shape(text: str) -> tuple[int, int]:
    m = _SHAPE.match(text)
    if not m or int(m.group(1)) < 1 or int(m.group(2)) < 1:
        raise argparse.ArgumentTypeError(f"expected HxW with positive integers, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="todo-attn",
        description="Token-downsampled attention, ToMe baseline, fidelity and redundancy tools.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="time attention methods, CSV output")
    p.add_argument("--preset", choices=["paper"], help="run the full preset suite")
    p.add_argument("--shrink", type=_positive, default=1, help="divide preset grid sides by N")
    p.add_argument("--method", choices=bench.METHODS, default="todo")
    p.add_argument("--tokens", type=_shape, default=(64, 64), metavar="HxW")
    p.add_argument("--dim", type=_positive, default=64)
    p.add_argument("--heads", type=_positive, default=None)
    p.add_argument("--ratio", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=_positive, default=20)
    p.add_argument("--warmup", type=_nonnegative, default=3)
    p.add_argument("--threads", type=_positive, default=1)
    p.add_argument("--out")

    p = sub.add_parser("attn", help="run attention on TGRD inputs")
    p.add_argument("--q", required=True)
    p.add_argument("--k", help="defaults to --q")
    p.add_argument("--v", help="defaults to --k")
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=bench.METHODS, default="dense")
    p.add_argument("--ratio", type=float, default=0.0)
    p.add_argument("--heads", type=_positive, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive, default=1)

    p = sub.add_parser("analyze", help="neighbourhood similarity stats of TGRD grids")
    p.add_argument("files", nargs="+")
    p.add_argument("--k", type=int, choices=[3, 5], action="append", dest="ks")
    p.add_argument("--out")

    p = sub.add_parser("compare", help="MSE and HPF magnitudes of two TGRD grids")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--out")

    p = sub.add_parser("mem", help="attention-map memory estimate")
    p.add_argument("--batch", type=_positive, default=1)
    p.add_argument("--heads", type=_positive, default=8)
    p.add_argument("--nq", type=_positive, required=True)
    p.add_argument("--nkv", type=_positive, required=True)
    p.add_argument("--bytes", type=_positive, default=2)

    for subparser in sub.choices.values():
        subparser.set_defaults(_parser=subparser)
    return parser


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", newline="\n") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _check_ratio(parser, args) -> None:
    if not (0.0 <= args.ratio < 1.0):
        parser.error(f"ratio must be in [0,1), got {args.ratio}")


def cmd_bench(args, parser) -> int:
    _check_ratio(parser, args)
    if args.preset:
        records = bench.paper_preset_suite(
            repeats=args.repeats, warmup=args.warmup, seed=args.seed,
            shrink=args.shrink, threads=args.threads,
        )
    else:
        h, w = args.tokens
        heads = args.heads or 1
        if args.dim % heads:
            parser.error(f"--dim {args.dim} is not divisible by --heads {heads}")
        cfg = AttentionConfig.for_dim(args.dim, heads)
        records = [
            bench.run_bench(
                args.method, h, w, args.dim, cfg, args.ratio, args.repeats, args.warmup,
                args.seed, threads=args.threads,
            )
        ]
    _emit(bench.records_to_csv(records), args.out)
    return 0


def cmd_attn(args, parser) -> int:
    _check_ratio(parser, args)
    q = tgrd.read(args.q)
    k = tgrd.read(args.k) if args.k else q
    v = tgrd.read(args.v) if args.v else k
    if q.dim % args.heads:
        raise ShapeError(f"token dim {q.dim} is not divisible by --heads {args.heads}")
    cfg = AttentionConfig.for_dim(q.dim, args.heads)
    if args.method == "dense":
        if args.ratio != 0.0:
            parser.error("--ratio applies to todo and tome only")
        result = dense_attention(q, k, v, cfg, threads=args.threads)
    elif args.method == "todo":
        spec = ratio_to_spec(args.ratio, k.height, k.width)
        result = todo_attention(q, k, v, spec, cfg, threads=args.threads)
    else:
        if args.k or args.v:
            parser.error("tome is self-attention; pass --q only")
        r = merge_count(args.ratio, q.height, q.width)
        result = tome_attention(q, r, args.seed, cfg, threads=args.threads)
    tgrd.write(args.out, result.out)
    return 0


def cmd_analyze(args, parser) -> int:
    ks = sorted(set(args.ks or [3, 5]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["file", "k", "min_sim", "mean_sim", "max_sim", "top3_fraction"])
    for path in args.files:
        grid = tgrd.read(path)
        for k in ks:
            s = metrics.neighborhood_stats(grid, k)
            writer.writerow(
                [path, k, f"{s.min_sim:.6f}", f"{s.mean_sim:.6f}", f"{s.max_sim:.6f}",
                 f"{s.top3_fraction:.6f}"]
            )
    _emit(buf.getvalue(), args.out)
    return 0


def _hpf(grid) -> float:
    planes = metrics.grid_planes(grid)
    return sum(metrics.hpf_magnitude(p) for p in planes) / len(planes)


def cmd_compare(args, parser) -> int:
    a, b = tgrd.read(args.a), tgrd.read(args.b)
    err = metrics.mse(a, b)
    hpf_a, hpf_b = _hpf(a), _hpf(b)
    text = f"mse,hpf_a,hpf_b,hpf_delta\n{err:.9g},{hpf_a:.9g},{hpf_b:.9g},{hpf_b - hpf_a:.9g}\n"
    _emit(text, args.out)
    return 0


def cmd_mem(args, parser) -> int:
    est = bench.estimate_attention_memory(args.batch, args.heads, args.nq, args.nkv, args.bytes)
    sys.stdout.write(est.render() + "\n")
    return 0


COMMANDS = {
    "bench": cmd_bench,
    "attn": cmd_attn,
    "analyze": cmd_analyze,
    "compare": cmd_compare,
    "mem": cmd_mem,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, args._parser)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (TgrdFormatError, ShapeError, RangeError, NonFiniteError, OSError, OverflowError) as exc:
        print(f"todo-attn {args.command}: error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
