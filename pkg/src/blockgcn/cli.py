"""Command-line entry point: ``blockgcn <command> [options]``.

Every command prints machine-readable ``key = value`` lines or CSV-like
tables; lines starting with ``#`` echo the effective configuration.

Exit codes: 0 success, 1 a check failed, 2 usage or config error,
3 bad input file, 4 numerical or other runtime failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__
from .blockgc import ADJ_INITS
from .checkpoint import load_checkpoint
from .config import RunConfig, load_config
from .data import MODALITIES, Dataset, Split, generate_synthetic, load_dataset, make_synth_spec, modality, save_dataset
from .errors import BlockGCNError, ConfigError, FormatError, UnknownPresetError
from .graph import resolve_skeleton
from .model import BlockGCN
from .probes import (desk_dataset, mean_frame_dataset, mean_frame_experiment, model_gradcheck,
                     param_breakdown, probe_forgetting)
from .tensor import make_rng
from .training import ensemble, evaluate, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3, 4

log = logging.getLogger("blockgcn")


def _kv(out, key, value):
    if isinstance(value, float):
        value = f"{value:.6g}"
    print(f"{key} = {value}", file=out)


def _overrides(pairs) -> dict[str, str]:
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _run_config(args) -> RunConfig:
    return load_config(args.config, _overrides(args.set))


def _echo(cfg: RunConfig, out):
    for k, v in cfg.items():
        print(f"# {k} = {v}", file=out)


def _apply_modality(split: Split, name: str, skeleton) -> Split:
    if name == "joint":
        return split
    return Split(Dataset(modality(split.train.x, name, skeleton), split.train.y),
                 Dataset(modality(split.val.x, name, skeleton), split.val.y), split.num_classes, split.meta)


# -- commands ------------------------------------------------------------------

def cmd_gen_data(args, out) -> int:
    rng = make_rng(args.seed)
    skeleton = resolve_skeleton(args.skeleton)
    spec = make_synth_spec(skeleton, args.classes, rng, mean_separable=not args.mean_degenerate,
                           separation=args.separation, amplitude=args.amplitude, noise_sigma=args.noise)
    split = generate_synthetic(spec, args.per_class, args.frames, rng, args.val_fraction)
    split.meta.update(skeleton=args.skeleton, seed=args.seed)
    save_dataset(split, args.out)
    _kv(out, "train", len(split.train))
    _kv(out, "val", len(split.val))
    _kv(out, "num_classes", split.num_classes)
    _kv(out, "out", args.out)
    return EXIT_OK


def cmd_train(args, out) -> int:
    cfg = _run_config(args)
    split = load_dataset(args.data)
    split = _apply_modality(split, args.modality, resolve_skeleton(cfg.model.skeleton))
    if split.num_classes != cfg.model.num_classes:
        raise ConfigError(f"data has {split.num_classes} classes, config {cfg.model.num_classes}")
    _echo(cfg, out)
    print(f"# modality = {args.modality}", file=out)
    model = BlockGCN(cfg.model)
    hist = train(model, split, cfg.train, args.out)
    print(hist.table(), file=out)
    _kv(out, "initial_loss", hist.initial_loss)
    _kv(out, "best_val_acc", hist.best_val_acc)
    _kv(out, "best_epoch", hist.best_epoch)
    _kv(out, "checkpoint", args.out)
    return EXIT_OK


def write_scores(path, probs: np.ndarray, labels: np.ndarray, modality_name: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# modality = {modality_name}\n")
        fh.write("label, " + ", ".join(f"p{i}" for i in range(probs.shape[1])) + "\n")
        for y, p in zip(labels, probs):
            fh.write(f"{int(y)}, " + ", ".join(repr(float(v)) for v in p) + "\n")


def read_scores(path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or line.startswith("label") or not line.strip():
                continue
            rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise FormatError(f"{path} holds no scores")
    arr = np.array(rows)
    return arr[:, 0].astype(np.int64), arr[:, 1:]


def cmd_eval(args, out) -> int:
    model = load_checkpoint(args.checkpoint)
    split = load_dataset(args.data)
    split = _apply_modality(split, args.modality, model.skeleton)
    data = getattr(split, args.split)
    loss, acc, probs = evaluate(model, data)
    _kv(out, "split", args.split)
    _kv(out, "modality", args.modality)
    _kv(out, "samples", len(data))
    _kv(out, "loss", loss)
    _kv(out, "accuracy", acc)
    if args.scores:
        write_scores(args.scores, probs, data.y, args.modality)
        _kv(out, "scores", args.scores)
    return EXIT_OK


def cmd_ensemble_eval(args, out) -> int:
    labels, streams = None, []
    for path in args.scores:
        y, p = read_scores(path)
        if labels is not None and not np.array_equal(y, labels):
            raise FormatError(f"{path} lists different samples")
        labels = y
        streams.append(p)
    pred, _ = ensemble(streams, args.mode)
    for path, p in zip(args.scores, streams):
        _kv(out, f"accuracy[{path}]", float(np.mean(p.argmax(axis=1) == labels)))
    _kv(out, "streams", len(streams))
    _kv(out, "mode", args.mode)
    _kv(out, "ensemble_accuracy", float(np.mean(pred == labels)))
    return EXIT_OK


def cmd_gradcheck(args, out) -> int:
    cfg = _run_config(args)
    _echo(cfg, out)
    report = model_gradcheck(cfg.model, args.seed, args.batch, eps=args.eps, tol=args.tol)
    print(report, file=out)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_count_params(args, out) -> int:
    overrides = _overrides(args.set)
    if args.k is not None:
        overrides["groups"] = str(args.k)
    if args.variant is not None:
        overrides["variant"] = args.variant
    cfg = load_config(args.config, overrides)
    _echo(cfg, out)
    counts = param_breakdown(cfg.model)
    for k, v in counts.items():
        _kv(out, k, v)
    return EXIT_OK if counts["total"] == counts["formula"] else EXIT_FAIL


def _probe_split(args, builder, **kw) -> Split:
    if args.data:
        return load_dataset(args.data)
    return builder(n_per_class=args.per_class, seed=args.seed, **kw)


def cmd_probe_forgetting(args, out) -> int:
    split = _probe_split(args, desk_dataset)
    inits = [s.strip() for s in args.inits.split(",") if s.strip()]
    for i in inits:
        if i not in ADJ_INITS:
            raise ConfigError(f"unknown init {i!r}; choose from {ADJ_INITS}")
    print(f"# epochs = {args.epochs}\n# seed = {args.seed}\n# inits = {','.join(inits)}", file=out)
    report = probe_forgetting(split, inits, args.epochs, args.seed)
    print(report.table(), file=out)
    return EXIT_OK


def cmd_mean_frame(args, out) -> int:
    split = _probe_split(args, mean_frame_dataset, mean_separable=not args.mean_degenerate)
    print(f"# epochs = {args.epochs}\n# seed = {args.seed}\n"
          f"# mean_separable = {str(not args.mean_degenerate).lower()}", file=out)
    report = mean_frame_experiment(split, args.epochs, args.seed)
    print(report.table(), file=out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_config(p, default="desk"):
    p.add_argument("--config", default=default, help="preset (tiny, desk, paper) or key=value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockgcn", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--skeleton", default="ntu25")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--frames", type=int, default=16)
    p.add_argument("--separation", type=float, default=0.1)
    p.add_argument("--amplitude", type=float, default=0.3)
    p.add_argument("--noise", type=float, default=0.02)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--mean-degenerate", action="store_true", help="identical class means")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and save the best checkpoint")
    _add_config(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--modality", choices=MODALITIES, default="joint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--modality", choices=MODALITIES, default="joint")
    p.add_argument("--scores", help="write per-sample probabilities here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ensemble-eval", help="fuse score files written by eval")
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--mode", choices=("prob", "logit"), default="prob")
    p.set_defaults(func=cmd_ensemble_eval)

    p = sub.add_parser("gradcheck", help="central-difference check of all model gradients")
    _add_config(p, "tiny")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=3)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("count-params", help="parameter audit against the closed form")
    _add_config(p)
    p.add_argument("--k", type=int, help="number of groups")
    p.add_argument("--variant", choices=("block", "vanilla", "decoupling"))
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("probe-forgetting", help="train vanilla GC under each adjacency init")
    p.add_argument("--data", help="dataset directory; default generates desk data")
    p.add_argument("--inits", default=",".join(ADJ_INITS))
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe_forgetting)

    p = sub.add_parser("mean-frame-experiment", help="single-frame classifiers on mean vs random frames")
    p.add_argument("--data", help="dataset directory; default generates desk data")
    p.add_argument("--mean-degenerate", action="store_true")
    p.add_argument("--epochs", type=int, default=15)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mean_frame)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out)
    except (ConfigError, UnknownPresetError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FileNotFoundError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (BlockGCNError, ValueError, ArithmeticError) as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
