"""Command-line pipeline: ingest -> train -> reconstruct/predict -> embed/analyze.

Commands: ingest, synth, train, resume, reconstruct, predict, experiment,
embed, analyze. Global flags: --config, --seed, --threads, --out-dir.

Configuration is a flat key=value text file (``#`` starts a comment);
command-line flags override file values. Every command is deterministic
given its inputs, config and seed. Exit codes: 0 success, 1 usage or input
error, 2 empty-result condition, 3 numerical abort.

Heavy imports happen after argument parsing so that --threads can pin the
BLAS thread pools before numpy first loads (set it on the first numpy
import in the process; the default of 1 keeps runs reproducible).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields


class EmptyResultError(RuntimeError):
    """A command legitimately produced nothing (exit code 2)."""


class UsageError(ValueError):
    """Bad invocation or unusable input (exit code 1)."""


@dataclass
class RunConfig:
    """Fully resolved run settings: defaults <- config file <- flags."""

    input_dim: int = 1
    hidden_dim: int = 128
    output_dim: int = 1
    epochs: int = 100_000
    lr: float = 0.001
    lr_decay: float = 1.0
    batch_size: int | None = None
    grad_clip: float | None = None
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 1
    window: int = 5
    short_len: int | None = None
    long_len: int | None = None
    horizon: int | None = None
    dataset: str | None = None
    out_dir: str = "."


_CONFIG_PARSERS = {
    "input_dim": int, "hidden_dim": int, "output_dim": int,
    "epochs": int, "lr": float, "lr_decay": float,
    "batch_size": int, "grad_clip": float,
    "seed": int, "checkpoint_every": int, "log_every": int,
    "window": int, "short_len": int, "long_len": int, "horizon": int,
    "dataset": str, "out_dir": str,
}


def parse_config_file(path: str) -> dict:
    """Flat key=value file; unknown keys are rejected."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}: line {lineno}: expected key = value")
                key, _, value = (part.strip() for part in line.partition("="))
                if key not in _CONFIG_PARSERS:
                    raise UsageError(f"{path}: line {lineno}: unknown config key {key!r}")
                try:
                    values[key] = _CONFIG_PARSERS[key](value)
                except ValueError:
                    raise UsageError(
                        f"{path}: line {lineno}: bad value {value!r} for {key}"
                    ) from None
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in parse_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    return cfg


class _Parser(argparse.ArgumentParser):
    # spec'd exit codes reserve 2 for empty results; argparse uses 2 for usage
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="seqstate", description=__doc__.split("\n", 1)[0])
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--threads", type=int, default=1,
                   help="BLAS thread cap, default 1 for reproducible runs")
    p.add_argument("--out-dir", dest="out_dir", help="directory for output files")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="preprocess a raw price CSV into a dataset")
    sp.add_argument("raw_csv")
    sp.add_argument("out")
    sp.add_argument("--window", type=int, help="moving-average window (default 5)")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="generate a labeled synthetic dataset")
    sp.add_argument("out")
    sp.add_argument("--clusters", type=int, default=4)
    sp.add_argument("--per-cluster", type=int, default=5, dest="per_cluster")
    sp.add_argument("--length", type=int, default=60)
    sp.add_argument("--noise", type=float, default=0.01)
    sp.add_argument("--kind", choices=("wave", "trend"), default="wave")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train on a dataset, write checkpoint and log")
    sp.add_argument("dataset_arg", metavar="dataset")
    for name, typ in (
        ("--epochs", int), ("--lr", float), ("--lr-decay", float),
        ("--batch-size", int), ("--grad-clip", float),
        ("--hidden-dim", int), ("--input-dim", int), ("--output-dim", int),
        ("--checkpoint-every", int), ("--log-every", int),
    ):
        sp.add_argument(name, type=typ, dest=name.lstrip("-").replace("-", "_"))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("resume", help="continue training from a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--dataset", dest="dataset")
    sp.add_argument("--epochs", type=int, dest="epochs")
    sp.set_defaults(func=cmd_resume)

    sp = sub.add_parser("reconstruct", help="write actual vs generated series for one id")
    sp.add_argument("checkpoint")
    sp.add_argument("--id", required=True, dest="seq_id")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--dataset", dest="dataset")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("predict", help="extrapolate every sequence past its window")
    sp.add_argument("checkpoint")
    sp.add_argument("--horizon", type=int, required=True)
    sp.add_argument("--dataset", dest="dataset")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("experiment", help="short vs long training-window comparison")
    sp.add_argument("dataset_arg", metavar="dataset")
    sp.add_argument("--short-len", type=int, dest="short_len")
    sp.add_argument("--long-len", type=int, dest="long_len")
    sp.add_argument("--horizon", type=int, dest="horizon")
    for name, typ in (
        ("--epochs", int), ("--lr", float), ("--hidden-dim", int),
    ):
        sp.add_argument(name, type=typ, dest=name.lstrip("-").replace("-", "_"))
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("embed", help="export the trained latent table as CSV")
    sp.add_argument("checkpoint")
    sp.add_argument("--dataset", dest="dataset")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("analyze", help="PCA plot data with optional correlation coloring")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset_arg", metavar="dataset")
    sp.add_argument("--target-id", dest="target_id")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_analyze)

    return p


def _load_dataset_for_checkpoint(ckpt, override_path):
    from .data import fingerprint, load_dataset

    path = override_path or ckpt.dataset_path
    if path is None:
        raise UsageError(
            "checkpoint does not record a dataset path; pass --dataset"
        )
    ds = load_dataset(path)
    if fingerprint(ds) != ckpt.dataset_fingerprint:
        raise UsageError(
            f"dataset {path} does not match the checkpoint's dataset fingerprint"
        )
    return ds


def cmd_ingest(args, cfg: RunConfig) -> int:
    from .data import ingest_records, load_csv, save_dataset

    records = load_csv(args.raw_csv)
    ds, excluded = ingest_records(records, window=cfg.window)
    if ds.num_sequences == 0:
        raise EmptyResultError("0 sequences survived exclusion")
    save_dataset(ds, args.out)
    print(f"ingested N={ds.num_sequences} T={ds.length} excluded={len(excluded)}")
    print(f"wrote {args.out}")
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    from .data import SyntheticSpec, make_synthetic, save_dataset

    spec = SyntheticSpec(
        clusters=args.clusters, per_cluster=args.per_cluster,
        length=args.length, noise=args.noise, kind=args.kind,
    )
    ds = make_synthetic(spec, seed=cfg.seed)
    save_dataset(ds, args.out)
    print(f"synthesized N={ds.num_sequences} T={ds.length} kind={args.kind}")
    print(f"wrote {args.out}")
    return 0


def _model_and_training_cfg(cfg: RunConfig, num_sequences: int):
    from .model import ModelConfig
    from .trainer import TrainingConfig

    model_cfg = ModelConfig(
        input_dim=cfg.input_dim, hidden_dim=cfg.hidden_dim,
        output_dim=cfg.output_dim, num_sequences=num_sequences,
    )
    train_cfg = TrainingConfig(
        epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size,
        grad_clip=cfg.grad_clip, seed=cfg.seed,
        checkpoint_every=cfg.checkpoint_every, log_every=cfg.log_every,
        lr_decay=cfg.lr_decay,
    )
    return model_cfg, train_cfg


def cmd_train(args, cfg: RunConfig) -> int:
    from .data import load_dataset
    from .trainer import save_checkpoint, train

    dataset_path = args.dataset_arg or cfg.dataset
    ds = load_dataset(dataset_path)
    model_cfg, train_cfg = _model_and_training_cfg(cfg, ds.num_sequences)
    os.makedirs(cfg.out_dir, exist_ok=True)
    result = train(
        ds, train_cfg, model_cfg,
        checkpoint_dir=cfg.out_dir,
        log_path=os.path.join(cfg.out_dir, "train_log.csv"),
        dataset_path=os.path.abspath(dataset_path),
    )
    final_path = os.path.join(cfg.out_dir, "checkpoint.json")
    save_checkpoint(result.checkpoint, final_path)
    print(f"trained {train_cfg.epochs} epochs, final mean loss {result.log[-1].mean_loss!r}")
    print(f"wrote {final_path}")
    return 0


def cmd_resume(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    from .data import load_dataset
    from .trainer import load_checkpoint, save_checkpoint, train

    ckpt = load_checkpoint(args.checkpoint)
    dataset_path = args.dataset or ckpt.dataset_path
    if dataset_path is None:
        raise UsageError("checkpoint does not record a dataset path; pass --dataset")
    ds = load_dataset(dataset_path)
    train_cfg = ckpt.training_config
    if args.epochs is not None:
        train_cfg = replace(train_cfg, epochs=args.epochs)
    explicit_out = args.out_dir is not None or cfg.out_dir != "."
    out_dir = cfg.out_dir if explicit_out else (os.path.dirname(args.checkpoint) or ".")
    os.makedirs(out_dir, exist_ok=True)
    result = train(
        ds, train_cfg, ckpt.model_config,
        checkpoint_dir=out_dir,
        log_path=os.path.join(out_dir, "train_log.csv"),
        resume=ckpt,
        dataset_path=os.path.abspath(dataset_path),
    )
    final_path = os.path.join(out_dir, "checkpoint.json")
    save_checkpoint(result.checkpoint, final_path)
    print(f"resumed epoch {ckpt.epoch + 1}..{train_cfg.epochs}, "
          f"final mean loss {result.log[-1].mean_loss!r}")
    print(f"wrote {final_path}")
    return 0


def cmd_reconstruct(args, cfg: RunConfig) -> int:
    import csv as _csv

    from .trainer import load_checkpoint, reconstruct

    ckpt = load_checkpoint(args.checkpoint)
    ds = _load_dataset_for_checkpoint(ckpt, args.dataset)
    k = ds.index_of(args.seq_id)
    steps = args.steps if args.steps is not None else ds.length
    outputs = reconstruct(ckpt.params, k, steps)[:, 0]
    actual = ds.targets[k]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["actual", "predicted"])
        for t in range(steps):
            a = repr(float(actual[t])) if t < len(actual) else ""
            w.writerow([a, repr(float(outputs[t]))])
    print(f"wrote {args.out}")
    return 0


def cmd_predict(args, cfg: RunConfig) -> int:
    import csv as _csv

    from .forecast import predict_all
    from .trainer import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    ds = _load_dataset_for_checkpoint(ckpt, args.dataset)
    preds = predict_all(ckpt.params, ds.length, args.horizon)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["id", "date_index", "predicted"])
        for i, sid in enumerate(ds.ids):
            for t in range(args.horizon):
                w.writerow([sid, t + 1, repr(float(preds[i, t]))])
    print(f"wrote {args.out}")
    return 0


def cmd_experiment(args, cfg: RunConfig) -> int:
    from .data import load_dataset
    from .forecast import (
        run_short_long_experiment,
        write_mae_csv,
        write_paired_csv,
        write_per_sequence_csv,
    )

    for name in ("short_len", "long_len", "horizon"):
        if getattr(cfg, name) is None:
            raise UsageError(f"{name.replace('_', '-')} is required (flag or config)")
    ds = load_dataset(args.dataset_arg or cfg.dataset)
    _, train_cfg = _model_and_training_cfg(cfg, ds.num_sequences)
    result = run_short_long_experiment(
        ds, cfg.short_len, cfg.long_len, cfg.horizon, train_cfg,
        hidden_dim=cfg.hidden_dim,
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    paired = os.path.join(cfg.out_dir, "experiment_paired.csv")
    write_paired_csv(result, paired)
    write_mae_csv(result.short, os.path.join(cfg.out_dir, "short_mae.csv"))
    write_mae_csv(result.long, os.path.join(cfg.out_dir, "long_mae.csv"))
    write_per_sequence_csv(result.short, os.path.join(cfg.out_dir, "short_per_sequence.csv"))
    write_per_sequence_csv(result.long, os.path.join(cfg.out_dir, "long_per_sequence.csv"))
    print(
        f"short mean MAE {result.short.per_date_mae.mean()!r}, "
        f"long mean MAE {result.long.per_date_mae.mean()!r}"
    )
    print(f"wrote {paired}")
    return 0


def cmd_embed(args, cfg: RunConfig) -> int:
    from .latent import embedding_from_params, write_embedding_csv
    from .trainer import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    n = ckpt.params.num_sequences
    if args.dataset or ckpt.dataset_path:
        ds = _load_dataset_for_checkpoint(ckpt, args.dataset)
        ids, labels = ds.ids, ds.labels()
    else:
        ids, labels = [str(i) for i in range(n)], None
    emb = embedding_from_params(ckpt.params, ids, labels)
    write_embedding_csv(emb, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_analyze(args, cfg: RunConfig) -> int:
    from .latent import embedding_from_params, write_plot_csv
    from .trainer import load_checkpoint

    ckpt = load_checkpoint(args.checkpoint)
    ds = _load_dataset_for_checkpoint(ckpt, args.dataset_arg)
    emb = embedding_from_params(ckpt.params, ds.ids, ds.labels())
    write_plot_csv(emb, args.out, dataset=ds, target_id=args.target_id)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads is not None and args.threads >= 1:
        for var in (
            "OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
            "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS",
        ):
            os.environ[var] = str(args.threads)

    from .trainer import CheckpointError, NumericalAbort

    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except EmptyResultError as e:
        print(str(e), file=sys.stderr)
        return 2
    except NumericalAbort as e:
        print(f"aborted: {e}", file=sys.stderr)
        return 3
    except (UsageError, CheckpointError, ValueError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else str(e)
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
