"""Command-line entry point: ``qapm <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a runtime error.
Flags left unset fall back to ``--config FILE`` and then to the
:class:`ExperimentConfig` defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import landscape as ls
from .errors import QapmError
from .graphgen import InstanceConfig, generate_records, write_dataset
from .harness import (
    RECOVERY_COLUMNS,
    ExperimentConfig,
    evaluate,
    read_recovery_csv,
    report,
    train,
    write_recovery_csv,
)

USAGE_EXIT = 1
RUNTIME_EXIT = 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _instance_flags(p, with_pe=True):
    p.add_argument("--model", choices=["er", "regular"])
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--deg", type=int)
    if with_pe:
        p.add_argument("--pe", type=float, nargs="+", help="noise level(s) p_e")


def _gnn_flags(p):
    p.add_argument("--layers", type=int)
    p.add_argument("--feat", type=int)
    p.add_argument("--J", type=int)
    p.add_argument("--input-feature", choices=["degree", "two_hop_degree"])
    p.add_argument("--bn-mode", choices=["batch_stats", "running_stats", "none"])
    p.add_argument("--logit-scale", type=float)


def _common(p, seed_required):
    p.add_argument("--config", type=Path, help="serialized ExperimentConfig (JSON)")
    p.add_argument("--seed", type=int, required=seed_required)
    p.add_argument("--out-dir")


def build_parser() -> Parser:
    ap = Parser(prog="qapm", description="Graph matching experiments: GNN, spectral baselines, landscape sweeps.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=Parser)

    g = sub.add_parser("generate", help="write planted pairs as JSONL")
    _instance_flags(g)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", help="output path (default stdout)")

    t = sub.add_parser("train", help="train the GNN")
    _instance_flags(t)
    _gnn_flags(t)
    _common(t, True)
    t.add_argument("--train-pe", type=float, nargs=2, metavar=("LO", "HI"))
    t.add_argument("--train-size", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lr-decay", type=float, help="per-epoch multiplicative step-size decay")
    t.add_argument("--dataset", help="JSONL training corpus")
    t.add_argument("--fixed-corpus", action="store_true", default=None,
                   help="generate train_size pairs once and reuse them every epoch")

    e = sub.add_parser("eval", help="recovery of a checkpoint and the baselines")
    e.add_argument("--checkpoint", required=True)
    _instance_flags(e)
    _common(e, True)
    e.add_argument("--trials", type=int)
    e.add_argument("--baselines", nargs="*")
    e.add_argument("--decode", choices=["argmax", "lap"])
    e.add_argument("--out", help="recovery CSV path (default stdout)")

    b = sub.add_parser("baseline", help="recovery of the spectral baselines only")
    _instance_flags(b)
    _common(b, False)
    b.add_argument("--trials", type=int)
    b.add_argument("--baselines", nargs="+")
    b.add_argument("--out")

    lp = sub.add_parser("landscape", help="moment and concentration analyses")
    lsub = lp.add_subparsers(dest="lcmd", required=True, parser_class=Parser)
    sw = lsub.add_parser("sweep", help="concentration level across sizes")
    gg = lsub.add_parser("gradgap", help="sampled vs mean-field gradient distance")
    for q in (sw, gg):
        q.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400, 800])
        q.add_argument("--d", type=int, default=3)
        q.add_argument("--k", type=int, default=1)
        q.add_argument("--trials", type=int, default=50)
        q.add_argument("--noise-level", type=float, default=0.0)
        q.add_argument("--scale", type=float, default=0.5, help="Wigner exponent: A = n^-scale W")
        q.add_argument("--sigma2", type=float, default=1.0)
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--out", help="CSV path (default stdout)")
    gg.set_defaults(noise_level=0.1, sizes=[100, 400, 1600], trials=20)
    m = lsub.add_parser("moments", help="semicircle moment of order m")
    m.add_argument("--m", type=int, required=True)
    m.add_argument("--sigma2", type=float, default=1.0)

    r = sub.add_parser("report", help="merge recovery CSVs into one table")
    r.add_argument("csv", nargs="+")
    r.add_argument("--out")
    return ap


def _experiment(args) -> ExperimentConfig:
    base = {}
    if getattr(args, "config", None):
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    flat = {
        "model": args.model, "n": args.n, "p": args.p, "deg": args.deg,
        "seed": args.seed, "out_dir": getattr(args, "out_dir", None),
    }
    if getattr(args, "pe", None) is not None:
        flat["noise_grid"] = args.pe
    for key in ("train_pe", "train_size", "epochs", "batch", "lr", "lr_decay", "dataset", "trials", "baselines", "decode"):
        flat[key] = getattr(args, key, None)
    if getattr(args, "fixed_corpus", None):
        flat["stream"] = False
    base.update({k: v for k, v in flat.items() if v is not None})
    gnn = dict(base.get("gnn", {}))
    for key in ("layers", "feat", "J", "input_feature", "bn_mode", "logit_scale"):
        if getattr(args, key, None) is not None:
            gnn[key] = getattr(args, key)
    base["gnn"] = gnn
    return ExperimentConfig.from_dict(base)


def _emit_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _recovery_out(path, rows):
    if path:
        write_recovery_csv(path, rows)
    else:
        _emit_rows(None, RECOVERY_COLUMNS, [[r[c] for c in RECOVERY_COLUMNS] for r in rows])


def cmd_generate(args):
    pe = args.pe or [0.0]
    if len(pe) != 1:
        raise UsageError("generate takes a single --pe value")
    cfg = InstanceConfig(**{k: v for k, v in dict(model=args.model, n=args.n, p=args.p, deg=args.deg,
                                                     p_e=pe[0]).items() if v is not None})
    records = generate_records(cfg, args.count, args.seed)
    if args.out:
        write_dataset(args.out, records)
    else:
        for rec in records:
            sys.stdout.write(json.dumps(rec) + "\n")


def cmd_train(args):
    cfg = _experiment(args)
    if cfg.out_dir is None:
        cfg.out_dir = "runs/train"
    res = train(cfg)
    print(f"checkpoint: {res.checkpoint}")


def cmd_eval(args):
    cfg = _experiment(args)
    _recovery_out(args.out, evaluate(args.checkpoint, cfg))


def cmd_baseline(args):
    if args.seed is None and not args.config:
        raise UsageError("baseline needs --seed or --config")
    cfg = _experiment(args)
    _recovery_out(args.out, evaluate(None, cfg))


def cmd_landscape(args):
    if args.lcmd == "moments":
        print(ls.semicircle_moment(args.m, args.sigma2))
        return
    spec = ls.WignerSpec(n=min(args.sizes), scale=args.scale, noise_level=args.noise_level, sigma2=args.sigma2)
    if args.lcmd == "sweep":
        rows = ls.concentration_sweep(spec, args.d, args.k, args.sizes, args.trials, args.seed)
    else:
        beta = ls.random_unit_vectors(np.random.default_rng([args.seed, 7]), 1, args.d + 1)[0]
        gaps = [ls.gradient_gap(spec, beta, n, args.trials, args.seed, args.k) for n in args.sizes]
        rows = ls.gradient_gap_rows(gaps, args.d, args.k, args.seed)
    if args.out:
        ls.write_sweep_csv(args.out, rows)
    else:
        _emit_rows(None, ls.SWEEP_COLUMNS, [r.as_tuple() for r in rows])


def cmd_report(args):
    rows = [r for path in args.csv for r in read_recovery_csv(path)]
    header, table = report(rows)
    _emit_rows(args.out, header, table)


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline,
            "landscape": cmd_landscape, "report": cmd_report}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.cmd](args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"qapm: error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except (QapmError, ValueError, OSError, ArithmeticError, KeyError) as exc:
        print(f"qapm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME_EXIT
    return 0


if __name__ == "__main__":
    sys.exit(main())
