"""Command-line entry point.

Subcommands: gen-data, train, eval, grad-check, vpg-inspect. Angles are
accepted in degrees here and converted to radians at the boundary; all
library APIs speak radians. Exit codes: 2 bad arguments, 3 I/O failure,
4 training divergence, 5 gradient-check failure.

Only the standard library is imported at module load so that the
ALMN_THREADS cap can be applied to the numeric backends before they
initialize.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_GRADCHECK = 5


def _apply_thread_cap() -> None:
    """Honor ALMN_THREADS by capping the numeric backends' thread pools.

    Must run before numpy is first imported; default is all cores.
    """
    cap = os.environ.get("ALMN_THREADS")
    if not cap:
        return
    if not cap.isdigit() or int(cap) < 1:
        raise UsageError(f"ALMN_THREADS must be a positive integer, got {cap!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
        os.environ.setdefault(var, cap)


class UsageError(Exception):
    pass


def _parse_vector(text: str):
    import numpy as np

    try:
        return np.array([float(p) for p in text.split(",") if p.strip() != ""])
    except ValueError:
        raise UsageError(f"not a comma-separated vector: {text!r}") from None


def _parse_ks(text: str):
    try:
        ks = [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise UsageError(f"not a comma-separated integer list: {text!r}") from None
    if not ks or any(k < 1 for k in ks):
        raise UsageError("K values must be positive integers")
    return ks


def cmd_gen_data(args) -> int:
    from . import data

    if args.classes < 1 or args.subclusters < 1 or args.points < 1:
        raise UsageError("--classes, --subclusters and --points must be positive")
    if args.dim < 2:
        raise UsageError("--dim must be at least 2")
    ds = data.gen_multimodal(
        classes=args.classes,
        subclusters_per_class=args.subclusters,
        points_per_class=args.points,
        input_dim=args.dim,
        spread=args.spread,
        seed=args.seed,
    )
    data.save_csv(ds, args.out)
    print(f"wrote {ds.num_items} items / {len(ds.classes)} classes to {args.out}")
    return EXIT_OK


def _load_dataset(path):
    from . import data

    return data.load_csv(path)


def cmd_train(args) -> int:
    from . import config as config_mod
    from . import data, figures, trainer
    from .errors import DivergenceDetected

    cfg = config_mod.parse_run_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    ds = _load_dataset(cfg.data_path)
    if cfg.split == "class-half":
        ds, _ = data.split_by_class(ds)

    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "effective.cfg"), "w", encoding="utf-8") as f:
        f.write(cfg.echo())

    try:
        model, bank, curve = trainer.train(ds, cfg.train_cfg)
    except DivergenceDetected as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE

    curve_path = os.path.join(cfg.output_dir, "loss_curve.csv")
    with open(curve_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("iteration,loss\n")
        for i, v in enumerate(curve):
            f.write(f"{i},{v!r}\n")
    ckpt_path = os.path.join(cfg.output_dir, "checkpoint.npz")
    trainer.save_checkpoint(ckpt_path, model, bank, iteration=cfg.train_cfg.iterations)
    if cfg.figures:
        figures.save_loss_curve(curve, os.path.join(cfg.output_dir, "loss_curve.png"))
    print(f"trained {cfg.train_cfg.iterations} iterations; final loss {curve[-1]:.6f}")
    print(f"checkpoint: {ckpt_path}")
    print(f"loss curve: {curve_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import data, figures, metrics, trainer

    model, _, _ = trainer.load_checkpoint(args.checkpoint)
    ds = data.load_csv(args.data)
    if args.split == "class-half":
        _, ds = data.split_by_class(ds)
    ks = _parse_ks(args.ks)
    embeddings = trainer.forward(model, ds.features)
    report = metrics.evaluate(
        embeddings, ds.labels, ks, k_clusters=args.k_clusters, seed=args.seed
    )
    payload = report.to_json()
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write(payload)
    if args.figure:
        base, _ = os.path.splitext(args.out)
        figures.save_retrieval_figure(report, base + ".png")
    if args.neighbors_csv:
        rows = metrics.neighbor_table(embeddings, ds.labels, max(ks))
        with open(args.neighbors_csv, "w", encoding="utf-8", newline="\n") as f:
            f.write("query,neighbor,similarity,same_label\n")
            for q, nb, sim, same in rows:
                f.write(f"{q},{nb},{sim!r},{int(same)}\n")
    for k in sorted(report.recall_at):
        print(f"recall@{k:<4d} {report.recall_at[k]:.4f}")
    print(f"nmi        {report.nmi:.4f}")
    print(f"f1         {report.f1:.4f}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    from . import gradients

    report = gradients.run_grad_check(
        seed=args.seed,
        trials=args.trials,
        h=args.h,
        tol=args.tol,
        compare_simplified=args.compare_simplified,
    )
    payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            f.write(payload)
    print(payload, end="")
    return EXIT_OK if report["passed"] else EXIT_GRADCHECK


def _vpg_report_line(x_i, center, theta_nn_deg, beta):
    from . import geometry

    x_g, ctx = geometry.generate_virtual_point(
        x_i, center, math.radians(theta_nn_deg), beta
    )
    return (
        f"M = {ctx.M:.6f}\n"
        f"x_g = {','.join(f'{v:.6f}' for v in x_g)}\n"
        f"angle(x_g, c) = {math.degrees(geometry.angle_between(x_g, center)):.4f} deg\n"
        f"angle(x_i, c) = {math.degrees(ctx.theta_i):.4f} deg"
    )


def cmd_vpg_inspect(args) -> int:
    if args.batch_csv:
        if not args.dim:
            raise UsageError("--dim is required with --batch-csv")
        d = args.dim
        with open(args.batch_csv, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = _parse_vector(line)
                if parts.size != 2 * d + 2:
                    raise UsageError(
                        f"{args.batch_csv}: line {lineno}: expected "
                        f"{2 * d + 2} columns (x_i, center, theta_nn_deg, beta)"
                    )
                print(f"# row {lineno}")
                print(_vpg_report_line(parts[:d], parts[d:2 * d], parts[2 * d], parts[2 * d + 1]))
        return EXIT_OK
    if args.xi is None or args.center is None or args.theta_nn is None:
        raise UsageError("--xi, --center and --theta-nn are required without --batch-csv")
    x_i = _parse_vector(args.xi)
    center = _parse_vector(args.center)
    if x_i.size != center.size:
        raise UsageError("--xi and --center must have the same dimension")
    print(_vpg_report_line(x_i, center, args.theta_nn, args.beta))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="almn",
        description="Adaptive large-margin embedding learning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic multimodal dataset CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--subclusters", type=int, required=True)
    p.add_argument("--points", type=int, required=True, help="points per class")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--spread", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train an embedding model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", help="override [output] dir from the config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="embed a test split and report retrieval metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("none", "class-half"), default="none",
                   help="class-half evaluates the held-out class half of --data")
    p.add_argument("--ks", default="1,2,4,8")
    p.add_argument("--k-clusters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--neighbors-csv", help="also write top-K neighbor similarities")
    p.add_argument("--figure", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help="finite-difference agreement suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out", help="write the JSON report here as well")
    p.add_argument("--compare-simplified", action="store_true",
                   help="also measure the simplified closed-form gradient")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("vpg-inspect", help="print virtual-point geometry for a config")
    p.add_argument("--xi", help="comma-separated anchor vector")
    p.add_argument("--center", help="comma-separated class center")
    p.add_argument("--theta-nn", type=float, help="nearest-negative angle in degrees")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--batch-csv", help="rows of x_i, center, theta_nn_deg, beta")
    p.add_argument("--dim", type=int, help="vector dimension for --batch-csv rows")
    p.set_defaults(func=cmd_vpg_inspect)

    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_cap()
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser()
    args = parser.parse_args(argv)
    from .errors import (
        AlmnError,
        ConfigError,
        DivergenceDetected,
        LabelFeatureCountMismatch,
        MalformedFile,
    )

    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        print(f"run 'almn {args.command} --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MalformedFile, LabelFeatureCountMismatch, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except DivergenceDetected as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except AlmnError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
