"""Command-line entry point: ``ccsmlp {verify,params,bench,train,export}``.

Exit codes: 0 success, 1 verification or training failure, 2 usage error,
3 I/O error.
"""

import argparse
import csv
import json
import math
import sys

from . import bench, kernels, verify
from . import model as M
from . import training as T
from . import weights as W
from .numerics import ConfigurationError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
METRICS_VERSION = 1


def _int_list(text):
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not out:
        raise argparse.ArgumentTypeError("list must not be empty")
    return out


def _str_list(choices):
    def parse(text):
        out = [v.strip() for v in text.split(",") if v.strip()]
        bad = [v for v in out if v not in choices]
        if bad or not out:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}; got {text!r}")
        return out

    return parse


def _seed(text):
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# ---------------------------------------------------------------- verify


def cmd_verify(args):
    results = verify.run_suite(seed=args.seed, fault=args.inject_fault, training=not args.skip_training)
    failures = verify.report(results, sys.stdout)
    return EXIT_FAIL if failures else EXIT_OK


# ---------------------------------------------------------------- params


def _config_from_flags(args, parser):
    if args.preset:
        cfg = M.PRESETS[args.preset]
        overrides = {
            k: getattr(args, k) for k in ("groups", "num_classes") if getattr(args, k) is not None
        }
        return cfg.with_(**overrides)
    needed = ["tokens", "depth", "hidden", "ratio", "patch", "groups", "num_classes", "mixer", "norm"]
    missing = ["--" + k.replace("num_classes", "classes") for k in needed if getattr(args, k) is None]
    if missing:
        parser.error(f"without --preset these flags are required: {' '.join(missing)}")
    side = math.isqrt(args.tokens)
    if args.image is not None:
        height, width = args.image
    elif side * side == args.tokens:
        height = width = side * args.patch
    else:
        height, width = args.patch, args.tokens * args.patch
    return M.MixerConfig(
        tokens=args.tokens, depth=args.depth, hidden=args.hidden, ratio=args.ratio,
        patch=args.patch, groups=args.groups, height=height, width=width,
        token_mixer=args.mixer, token_mlp_dim=args.token_mlp_dim or 0,
        norm=args.norm, num_classes=args.num_classes,
    )


def format_params_table(cfg, name=None):
    total = M.count_params(cfg)
    lines = [f"model: {name or 'custom'}"]
    lines.append(
        f"config: N={cfg.tokens} L={cfg.depth} C={cfg.hidden} r={cfg.ratio} p={cfg.patch} "
        f"G={cfg.groups} mixer={cfg.token_mixer} norm={cfg.norm} classes={cfg.num_classes}"
    )
    lines.append(f"{'layer type':<16}{'parameters':>14}")
    for kind, n in M.param_breakdown(cfg).items():
        lines.append(f"{kind:<16}{n:>14,}")
    lines.append(f"{'token mixing/layer':<16}{M.token_mixing_param_count(cfg):>12,}")
    lines.append(f"{'total':<16}{total:>14,}  ({total / 1e6:.2f}M)")
    return "\n".join(lines)


def cmd_params(args, parser):
    try:
        cfg = _config_from_flags(args, parser)
    except ConfigurationError as e:
        parser.error(str(e))
    print(format_params_table(cfg, args.preset))
    return EXIT_OK


# ---------------------------------------------------------------- bench


def cmd_bench(args, parser):
    try:
        impl = kernels.get(args.kernels).NAME
    except RuntimeError as e:
        parser.error(str(e))
    records = bench.run_bench(
        args.n_list, args.channels, args.batch, args.backends, groups=args.groups,
        reps=args.reps, warmup=args.warmup, include_plan=not args.exclude_plan,
        impl=impl, seed=args.seed,
    )
    try:
        bench.write_csv(records, args.out, impl)
    except OSError as e:
        print(f"error: cannot write {args.out}: {e}", file=sys.stderr)
        return EXIT_IO
    for r in records:
        print(f"{r.backend:<17} N={r.N:<6} median={r.median_ns / 1e6:10.3f} ms  checksum={r.checksum}")
    names = {r.backend for r in records}
    if {"direct", "fft"} <= names and len(args.n_list) >= 2:
        print(json.dumps(bench.complexity_report(records)))
    return EXIT_OK


# ---------------------------------------------------------------- train


def write_metrics(path, losses, accs):
    with open(path, "w", newline="") as fh:
        fh.write(f"# ccsmlp train-metrics v{METRICS_VERSION}\n")
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "test_acc"])
        for epoch, (loss, acc) in enumerate(zip(losses, accs)):
            w.writerow([epoch, repr(loss), repr(acc)])


def cmd_train(args, parser):
    try:
        cfg = T.shift_task_config(
            args.mixer, tokens=args.tokens, hidden=args.hidden, depth=args.depth,
            groups=args.groups, classes=args.classes, norm=args.norm,
        )
        ds = T.make_shift_task(
            args.seed, args.tokens, cfg.patch_dim, args.classes, args.train_count,
            args.test_count, args.shift_policy, noise=args.noise,
        )
    except ConfigurationError as e:
        parser.error(str(e))

    def log(epoch, loss, acc):
        print(f"epoch {epoch:3d}  train_loss {loss:.5f}  test_acc {acc:.4f}", flush=True)

    try:
        result = T.train(
            cfg, ds, args.epochs, lr=args.lr, seed=args.seed, batch_size=args.batch_size,
            weight_decay=args.weight_decay, log=None if args.quiet else log,
        )
    except T.TrainingDiverged as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_FAIL
    try:
        if args.out:
            W.save_weights(result.params, args.out, args.width)
        if args.metrics:
            write_metrics(args.metrics, result.train_loss, result.test_acc)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"final test_acc {result.test_acc[-1]:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- export


def cmd_export(args, parser):
    try:
        if args.input:
            params = W.load_weights(args.input)
        else:
            cfg = _config_from_flags(args, parser)
            params = M.init_params(cfg, args.seed)
        W.save_weights(params, args.out, args.width)
    except (OSError, W.WeightFileError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ConfigurationError as e:
        parser.error(str(e))
    lossy = " (lossy, width 4)" if args.width == 4 else ""
    print(f"wrote {params.num_params():,} parameters to {args.out}{lossy}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_config_flags(p):
    p.add_argument("--preset", choices=sorted(M.PRESETS))
    p.add_argument("--tokens", type=int)
    p.add_argument("--depth", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--ratio", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--classes", dest="num_classes", type=int)
    p.add_argument("--mixer", choices=M.TOKEN_MIXERS)
    p.add_argument("--norm", choices=M.NORMS)
    p.add_argument("--token-mlp-dim", type=int)
    p.add_argument("--image", type=int, nargs=2, metavar=("H", "W"))


def build_parser():
    parser = argparse.ArgumentParser(prog="ccsmlp", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=_seed, default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--seed", type=_seed, default=argparse.SUPPRESS)
    p.add_argument("--skip-training", action="store_true", help="skip the training witness")
    p.add_argument("--inject-fault", choices=["fft-sign"], help=argparse.SUPPRESS)

    p = sub.add_parser("params", help="parameter counts for a preset or explicit config")
    _add_config_flags(p)

    p = sub.add_parser("bench", help="time direct / FFT / dense token mixing")
    p.add_argument("--seed", type=_seed, default=argparse.SUPPRESS)
    p.add_argument("--n-list", type=_int_list, default=[196, 392, 784, 1568])
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--groups", type=int)
    p.add_argument("--backends", type=_str_list(bench.BENCH_BACKENDS), default=list(bench.BENCH_BACKENDS))
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--warmup", type=int, default=2)
    p.add_argument("--exclude-plan", action="store_true", help="build FFT chirp tables outside the timed region")
    p.add_argument("--kernels", choices=["compiled", "python"])
    p.add_argument("--out", default="bench.csv")

    p = sub.add_parser("train", help="train on the synthetic circular-shift task")
    p.add_argument("--seed", type=_seed, default=argparse.SUPPRESS)
    p.add_argument("--mixer", choices=M.TOKEN_MIXERS, default="ccs")
    p.add_argument("--norm", choices=M.NORMS, default="layernorm")
    p.add_argument("--tokens", type=int, default=16)
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--train-count", type=int, default=512)
    p.add_argument("--test-count", type=int, default=512)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--shift-policy", choices=T.SHIFT_POLICIES, default="none")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--width", type=int, choices=[4, 8], default=8)
    p.add_argument("--out", help="weight file to write")
    p.add_argument("--metrics", help="per-epoch metrics CSV to write")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("export", help="write a weight file (fresh init or converted)")
    p.add_argument("--seed", type=_seed, default=argparse.SUPPRESS)
    p.add_argument("--in", dest="input", help="existing weight file to convert")
    _add_config_flags(p)
    p.add_argument("--width", type=int, choices=[4, 8], default=8)
    p.add_argument("--out", required=True)
    return parser, sub


def main(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    sub_parser = sub.choices[args.command]
    if args.command == "verify":
        return cmd_verify(args)
    handler = {"params": cmd_params, "bench": cmd_bench, "train": cmd_train, "export": cmd_export}
    return handler[args.command](args, sub_parser)


if __name__ == "__main__":
    sys.exit(main())
