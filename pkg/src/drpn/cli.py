"""Command-line entry point: ``drpn {verify,bench,train-toy,probe,stats}``."""

from __future__ import annotations

import argparse
import csv
import sys


from drpn import bench, toy
from drpn.annotations import AnnotationError, annotation_stats, write_ratio_csv
from drpn.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from drpn.layer import init_layer
from drpn.verify import run_checks

# Toy task used by train-toy, probe and the acceptance suite.
TOY_HW = 32
TOY_SIZE_RANGE = (4, 31)
TOY_EDGES = (4, 8, 16, 32)
TOY_NOISE = 0.05
SWEEP_RANGE = (3, 28)


def _common(parser):
    parser.add_argument("--seed", type=int, default=42, help="random seed (default 42)")
    parser.add_argument("--tol", type=float, default=1e-9, help="fold tolerance (default 1e-9)")
    parser.add_argument("--quiet", action="store_true", help="print only the summary")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _common(common)
    parser = argparse.ArgumentParser(prog="drpn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("verify", parents=[common], help="run the self-check suites")

    p = sub.add_parser("bench", parents=[common], help="convolution/MAC counts and timings")
    p.add_argument("--cin", type=int, default=32)
    p.add_argument("--cout", type=int, default=32)
    p.add_argument("--hw", type=int, default=128)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", help="optional CSV report")

    p = sub.add_parser("train-toy", parents=[common], help="train the toy size classifier")
    p.add_argument("--epochs", type=int, default=24)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--zero-attention", action="store_true", help="zero-initialise f1/f2")
    p.add_argument("--out", required=True, help="checkpoint path")

    p = sub.add_parser("probe", parents=[common], help="branch weights over a size sweep")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--frames", type=int, default=26)
    p.add_argument("--layer", default="drpn2", choices=toy.ToyNet.LAYERS)
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("stats", parents=[common], help="box-to-image size ratios")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    return parser


def cmd_verify(args, say) -> int:
    results = run_checks(seed=args.seed, tol=args.tol)
    for name, ok, detail in results:
        say(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_bench(args, say) -> int:
    layer = init_layer(args.cin, args.cout, args.seed)
    shape = (args.batch, args.cin, args.hw, args.hw)
    reports = bench.time_modes(layer, shape, reps=args.reps, seed=args.seed)
    print(bench.format_reports(reports))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["mode", "conv_calls", "macs", "wall_ns", "input_shape"])
            writer.writerows(r.as_row() for r in reports)
    return 0


def cmd_train_toy(args, say) -> int:
    net = toy.init_toynet(
        n_classes=len(TOY_EDGES) - 1, seed=args.seed, zero_attention=args.zero_attention
    )
    if args.epochs > 0:
        data = toy.generate_dataset(
            args.samples, TOY_HW, TOY_HW, TOY_SIZE_RANGE, TOY_EDGES, args.seed, TOY_NOISE
        )
        cfg = toy.TrainConfig(
            batch_size=args.batch_size, lr=args.lr, epochs=args.epochs, seed=args.seed
        )
        net, result = toy.train(net, data, cfg, log=say)
        print(f"final loss {result.losses[-1]:.4f}, training accuracy {result.accuracy:.4f}")
    write_checkpoint(args.out, net.tensors())
    say(f"wrote {args.out}")
    return 0


def cmd_probe(args, say) -> int:
    net = toy.ToyNet.from_tensors(read_checkpoint(args.ckpt))
    frames = toy.size_sweep(args.frames, SWEEP_RANGE, TOY_HW, TOY_HW, TOY_NOISE, args.seed)
    rows = toy.probe_branch_weights(net, frames, layer=args.layer)
    toy.write_probe_csv(rows, args.out)
    trend = toy.scale_trend(rows) if len(rows) > 2 else {}
    for key, value in trend.items():
        say(f"spearman {key}: {value:+.3f}")
    say(f"wrote {len(rows)} frames to {args.out}")
    return 0


def cmd_stats(args, say) -> int:
    report = annotation_stats(args.annotations)
    for line in report.lines():
        print(line)
    write_ratio_csv(report, args.out)
    return 0


COMMANDS = {
    "verify": cmd_verify,
    "bench": cmd_bench,
    "train-toy": cmd_train_toy,
    "probe": cmd_probe,
    "stats": cmd_stats,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = (lambda *a: None) if args.quiet else print
    try:
        return COMMANDS[args.command](args, say)
    except (AnnotationError, CheckpointError, ValueError, OSError) as exc:
        print(f"drpn {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
