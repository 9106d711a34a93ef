"""Command-line entry point: ``gkn <command> --flag value ...``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import experiments, io
from .baselines import run_pca_nn, run_pointwise_nn, run_rbm
from .data import generate_darcy
from .graph import SamplingPlan
from .model import DESK_CONFIG, ModelConfig
from .nystrom import mc_rate_experiment
from .training import TrainConfig, TrainResult, default_test_indices, evaluate, train

log = logging.getLogger("gkn")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _widths(text: str) -> tuple[int, ...]:
    return tuple(_ints(text))


# ---------------------------------------------------------------------------
# shared flag groups

def _model_flags(p):
    p.add_argument("--n", type=int, default=DESK_CONFIG.n, help="node state width")
    p.add_argument("--T", type=int, default=DESK_CONFIG.T, help="message-passing iterations")
    p.add_argument("--kappa-hidden", type=_widths, default=DESK_CONFIG.kappa_hidden,
                   help="hidden widths of the kernel network, comma-separated")


def _train_flags(p):
    p.add_argument("--data", required=True)
    p.add_argument("--train-res", type=int, default=16)
    p.add_argument("--r", type=float, default=0.10, help="neighbourhood radius")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--sample-m", type=int, default=None,
                   help="train on l random subgraphs of m nodes instead of full grids")
    p.add_argument("--sample-l", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    _model_flags(p)


def _configs(args) -> tuple[TrainConfig, ModelConfig]:
    plan = None
    if args.sample_m is not None:
        plan = SamplingPlan(m=args.sample_m, l=args.sample_l, m_test=args.sample_m, l_test=1,
                            r=args.r, r_test=args.r, seed=args.seed)
    cfg = TrainConfig(n_train=args.n_train, n_test=args.n_test, s=args.train_res,
                      s_test=args.train_res, r=args.r, epochs=args.epochs, lr=args.lr,
                      seed=args.seed, plan=plan)
    return cfg, ModelConfig(n=args.n, T=args.T, kappa_hidden=args.kappa_hidden)


def _check_split(ds, cfg: TrainConfig):
    if cfg.n_train + cfg.n_test > ds.N:
        raise CliError(f"dataset has {ds.N} pairs; {cfg.n_train} train + {cfg.n_test} test requested")


# ---------------------------------------------------------------------------
# commands

def cmd_generate(args):
    ds = generate_darcy(args.samples, args.resolution, args.seed, tol=args.tol)
    io.write_dataset(args.out, ds)
    log.info("wrote %d pairs at s=%d to %s", ds.N, ds.s, args.out)


def cmd_train(args):
    ds = io.read_dataset(args.data)
    cfg, mcfg = _configs(args)
    _check_split(ds, cfg)
    result = train(cfg, mcfg, ds)
    log.info("trained in %.1f s, final loss %.6g", result.seconds, result.history[-1])
    io.write_model(args.out, result.params, result.stats, cfg.r)
    if args.history:
        io.write_table(args.history, [{"epoch": i, "loss": v} for i, v in enumerate(result.history)])


def cmd_evaluate(args):
    params, stats, radius = io.read_model(args.model)
    ds = io.read_dataset(args.data)
    r = radius if args.r is None else args.r
    idx = default_test_indices(ds, args.n_test)
    err = evaluate(TrainResult(params, stats, []), ds, args.test_res, idx, r, seed=args.seed)
    print(format(err, ".17g"))


def cmd_transfer(args):
    ds = io.read_dataset(args.data)
    cfg, mcfg = _configs(args)
    _check_split(ds, cfg)
    result, rows = experiments.resolution_transfer_experiment(ds, cfg, mcfg, args.test_res)
    io.write_table(args.out, rows)
    if args.model_out:
        io.write_model(args.model_out, result.params, result.stats, cfg.r)
    for row in rows:
        print(f"s'={row['test_s']}: {row['relative_l2']:.17g}")


def _sweep_values(axis: str, text: str):
    cells = [c for c in text.split(";") if c.strip()]
    if axis in ("N", "l"):
        return [int(c) for c in cells]
    if axis == "m":
        return [tuple(int(v) for v in c.split(",")) for c in cells]
    if axis == "r":
        return [(float(c.split(",")[0]), int(c.split(",")[1])) for c in cells]
    return [_widths(c) for c in cells]


def cmd_sweep(args):
    ds = io.read_dataset(args.data)
    cfg, mcfg = _configs(args)
    try:
        values = _sweep_values(args.axis, args.values)
    except (ValueError, IndexError):
        raise CliError(f"cannot parse --values {args.values!r} for axis {args.axis}")
    epochs = _ints(args.epochs_per_cell) if args.epochs_per_cell else None
    rows = experiments.sweep_experiment(args.axis, values, ds, cfg, mcfg, epochs=epochs)
    io.write_table(args.out, rows)
    for row in rows:
        print(f"{args.axis}={row['value']}: {row['relative_l2']} ({row['status']})")


def cmd_green1d(args):
    res = experiments.green1d_experiment(N=args.samples, s=args.resolution,
                                         hidden=args.hidden, epochs=args.epochs, lr=args.lr,
                                         batch=args.batch, seed=args.seed)
    io.write_table(args.out, [{"samples": args.samples, "resolution": res.s,
                               "kernel_relative_l2": res.kernel_error,
                               "test_relative_l2": res.test_error,
                               "final_loss": res.history[-1]}])
    if args.kernel_out:
        x = np.linspace(0.0, 1.0, 64)
        K = experiments.learned_kernel(res.params, x, x)
        io.write_table(args.kernel_out, [{"x": x[i], "y": x[j], "learned": K[i, j],
                                          "truth": min(x[i], x[j]) - x[i] * x[j]}
                                         for i in range(64) for j in range(64)])
    print(f"kernel relative L2 {res.kernel_error:.17g}")


def cmd_green_disk_check(args):
    out = experiments.green_disk_check(args.pairs, args.seed)
    io.write_table(args.out, [out])
    print(f"boundary {out['boundary_max']:.17g} symmetry {out['symmetry_max']:.17g}")


def cmd_nystrom_rate(args):
    report = mc_rate_experiment(args.m, args.trials, sigma=args.sigma, seed=args.seed)
    io.write_table(args.out, report.rows())
    print(report.summary())


def cmd_baseline(args):
    ds = io.read_dataset(args.data)
    if args.n_train + args.n_test > ds.N:
        raise CliError(f"dataset has {ds.N} pairs; {args.n_train} train + {args.n_test} test requested")
    train_idx = np.arange(args.n_train)
    test_idx = default_test_indices(ds, args.n_test)
    rows = []
    for res in args.res:
        tr = ds.at_resolution(res, train_idx)
        te = ds.at_resolution(res, test_idx)
        if args.method == "nn":
            err = run_pointwise_nn(tr["a"], tr["u"], te["a"], te["u"], hidden=args.hidden,
                                   epochs=args.epochs, lr=args.lr, seed=args.seed)
        elif args.method == "pca":
            err = run_pca_nn(tr["a"], tr["u"], te["a"], te["u"], R_in=args.rank, R_out=args.rank,
                             hidden=args.hidden, epochs=args.epochs, lr=args.lr, seed=args.seed)
        else:
            err = run_rbm(tr["u"], te["a"], te["u"], args.rank)
        rows.append({"method": args.method, "resolution": res, "relative_l2": err})
        print(f"{args.method} s={res}: {err:.17g}")
    io.write_table(args.out, rows)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gkn", allow_abbrev=False,
                     description="Graph kernel networks for the Darcy problem.")
    parser.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", allow_abbrev=False, help="sample coefficients and solve")
    p.add_argument("--resolution", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", allow_abbrev=False, help="train a model on full grids or subgraphs")
    _train_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="optional CSV of per-epoch loss")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", allow_abbrev=False, help="relative L2 error on the test pairs")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--test-res", type=int, required=True)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--r", type=float, default=None, help="defaults to the training radius")
    p.add_argument("--seed", type=int, default=0, help="only used for graph partitions above s=61")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("transfer", allow_abbrev=False, help="train once, test at several resolutions")
    _train_flags(p)
    p.add_argument("--test-res", type=_ints, default=[16, 31, 61])
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", default=None)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("sweep", allow_abbrev=False, help="train/evaluate along one axis")
    _train_flags(p)
    p.add_argument("--axis", choices=experiments.SWEEP_AXES, required=True)
    p.add_argument("--values", required=True,
                   help="cells separated by ';' (N: 10;100, m: 100,100;200,200, r: 0.1,200, kappa: 64,128)")
    p.add_argument("--epochs-per-cell", default=None, help="comma-separated epochs, one per cell")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("green1d", allow_abbrev=False, help="learn the 1D Poisson Green's function")
    p.add_argument("--samples", type=int, default=2048)
    p.add_argument("--resolution", type=int, default=33)
    p.add_argument("--hidden", type=_widths, default=(64, 64))
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kernel-out", default=None, help="optional CSV of the learned kernel on 64x64 points")
    p.set_defaults(func=cmd_green1d)

    p = sub.add_parser("green-disk-check", allow_abbrev=False, help="identities of the disk Green's function")
    p.add_argument("--pairs", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_green_disk_check)

    p = sub.add_parser("nystrom-rate", allow_abbrev=False, help="Monte Carlo rate in Hilbert-Schmidt norm")
    p.add_argument("--m", type=_ints, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="nystrom_rate.csv")
    p.set_defaults(func=cmd_nystrom_rate)

    p = sub.add_parser("baseline", allow_abbrev=False, help="pointwise NN, PCA+NN or reduced basis")
    p.add_argument("--method", choices=("nn", "pca", "rbm"), required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--res", type=_ints, default=[16, 31, 61])
    p.add_argument("--rank", type=int, default=30)
    p.add_argument("--hidden", type=_widths, default=(64, 64))
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-test", type=int, default=40)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliError as exc:
        print(f"gkn: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"gkn: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        msg = " ".join(str(exc).split())
        print(f"gkn: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
