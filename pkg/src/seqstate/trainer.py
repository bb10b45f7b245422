"""Unsupervised reconstruction training loop with deterministic checkpoints.

Every epoch runs over all sequences in ascending index order: closed-loop
rollout over the full target length, backprop, batch-mean gradient, one
Adam step per batch. Full batch is the default, so a run is a pure function
of (dataset, configs, seed) and two identical runs produce byte-identical
checkpoints.

Checkpoints are single JSON documents. Numeric arrays are stored as decimal
strings with 17 significant digits, which round-trips float64 bit-exactly;
a resumed run is indistinguishable from an uninterrupted one.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .backprop import Gradients, backward_batch
from .data import Dataset, fingerprint
from .model import (
    PARAM_FIELDS,
    ModelConfig,
    ModelParams,
    forward_batch,
    init_params_from_rng,
    rollout_closed_loop,
)
from .optimizer import AdamState, adam_step, init_adam

CHECKPOINT_SCHEMA_VERSION = "1"

LOG_HEADER = "epoch,mean_loss,wall_ms"


class CheckpointError(ValueError):
    """Checkpoint document is unreadable or incompatible."""


class DatasetMismatchError(CheckpointError):
    """Checkpoint was trained on a different dataset than the one supplied."""


class NumericalAbort(RuntimeError):
    """Training hit a non-finite loss; carries the last good checkpoint path."""

    def __init__(self, epoch: int, last_checkpoint: str | None):
        self.epoch = epoch
        self.last_checkpoint = last_checkpoint
        where = last_checkpoint if last_checkpoint else "none written"
        super().__init__(
            f"non-finite loss at epoch {epoch}; last good checkpoint: {where}"
        )


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 100_000
    lr: float = 0.001
    batch_size: int | None = None    # None = full batch
    grad_clip: float | None = None   # max global gradient norm
    seed: int = 0
    checkpoint_every: int = 0        # 0 = only what the caller saves
    log_every: int = 1
    lr_decay: float = 1.0            # multiplicative per-epoch factor

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.grad_clip is not None and self.grad_clip <= 0.0:
            raise ValueError(f"grad_clip must be > 0, got {self.grad_clip}")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")


@dataclass
class LogRecord:
    epoch: int
    mean_loss: float
    wall_ms: float


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: ModelParams
    adam: AdamState
    epoch: int
    rng_state: dict
    dataset_fingerprint: str
    training_config: TrainingConfig
    dataset_path: str | None = None
    schema_version: str = CHECKPOINT_SCHEMA_VERSION


@dataclass
class TrainResult:
    params: ModelParams
    log: list[LogRecord]
    checkpoint: Checkpoint
    last_checkpoint_path: str | None = None


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _array_doc(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [_fmt(x) for x in a.ravel()]}


def _array_from_doc(doc: dict, what: str) -> np.ndarray:
    try:
        a = np.array([float(s) for s in doc["data"]], dtype=np.float64)
        return a.reshape(doc["shape"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"corrupt array for {what}: {e}") from None


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "schema_version": ckpt.schema_version,
        "model_config": asdict(ckpt.model_config),
        "params": {f: _array_doc(getattr(ckpt.params, f)) for f in PARAM_FIELDS},
        "adam": {
            "m": {f: _array_doc(ckpt.adam.m[f]) for f in PARAM_FIELDS},
            "v": {f: _array_doc(ckpt.adam.v[f]) for f in PARAM_FIELDS},
            "step_count": ckpt.adam.step_count,
            "lr": ckpt.adam.lr,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
        },
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "dataset_fingerprint": ckpt.dataset_fingerprint,
        "training_config": asdict(ckpt.training_config),
        "dataset_path": ckpt.dataset_path,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: corrupt checkpoint: {e}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"{path}: corrupt checkpoint: not an object")
    version = doc.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint schema {version!r} != supported {CHECKPOINT_SCHEMA_VERSION!r}"
        )
    try:
        model_config = ModelConfig(**doc["model_config"])
        params = ModelParams(
            **{f: _array_from_doc(doc["params"][f], f) for f in PARAM_FIELDS}
        )
        params.validate(model_config)
        adam_doc = doc["adam"]
        adam = AdamState(
            m={f: _array_from_doc(adam_doc["m"][f], f"adam.m.{f}") for f in PARAM_FIELDS},
            v={f: _array_from_doc(adam_doc["v"][f], f"adam.v.{f}") for f in PARAM_FIELDS},
            step_count=int(adam_doc["step_count"]),
            lr=float(adam_doc["lr"]),
            beta1=float(adam_doc["beta1"]),
            beta2=float(adam_doc["beta2"]),
            eps=float(adam_doc["eps"]),
        )
        cfg_doc = dict(doc["training_config"])
        training_config = TrainingConfig(**cfg_doc)
        return Checkpoint(
            model_config=model_config,
            params=params,
            adam=adam,
            epoch=int(doc["epoch"]),
            rng_state=doc["rng_state"],
            dataset_fingerprint=doc["dataset_fingerprint"],
            training_config=training_config,
            dataset_path=doc.get("dataset_path"),
            schema_version=version,
        )
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint: {e}") from None


def _batches(n: int, batch_size: int | None) -> list[np.ndarray]:
    b = n if batch_size is None else min(batch_size, n)
    return [np.arange(i, min(i + b, n), dtype=np.intp) for i in range(0, n, b)]


def _clip(g: Gradients, max_norm: float) -> Gradients:
    norm = g.global_norm()
    if norm <= max_norm or norm == 0.0:
        return g
    factor = max_norm / norm
    out = g.scaled(factor)
    out.loss = g.loss  # loss is a report, not a gradient
    return out


def train(
    dataset: Dataset,
    cfg: TrainingConfig,
    model_cfg: ModelConfig,
    *,
    checkpoint_dir: str | None = None,
    log_path: str | None = None,
    resume: Checkpoint | None = None,
    dataset_path: str | None = None,
) -> TrainResult:
    """Run the reconstruction training loop; returns final params and the log.

    With ``checkpoint_dir`` set and cfg.checkpoint_every > 0, periodic
    checkpoints land there; a non-finite loss aborts with a reference to the
    last one written. Passing ``resume`` continues an earlier run; the
    dataset fingerprint must match.
    """
    n, t_len = dataset.num_sequences, dataset.length
    if n < 1 or t_len < 1:
        raise ValueError(f"dataset is empty (N={n}, T={t_len})")
    if model_cfg.num_sequences != n:
        raise ValueError(
            f"model expects {model_cfg.num_sequences} sequences, dataset has {n}"
        )
    if model_cfg.output_dim != 1 or model_cfg.input_dim != 1:
        raise ValueError(
            "dataset training uses scalar series; input_dim and output_dim must be 1"
        )
    fp = fingerprint(dataset)

    if resume is not None:
        if resume.dataset_fingerprint != fp:
            raise DatasetMismatchError(
                f"checkpoint fingerprint {resume.dataset_fingerprint[:12]}... does not "
                f"match dataset {fp[:12]}..."
            )
        if resume.model_config != model_cfg:
            raise CheckpointError(
                f"checkpoint model config {resume.model_config} != requested {model_cfg}"
            )
        if resume.epoch >= cfg.epochs:
            raise CheckpointError(
                f"checkpoint is already at epoch {resume.epoch}, target is {cfg.epochs}"
            )
        params = resume.params.copy()
        adam = resume.adam.copy()
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        start_epoch = resume.epoch + 1
    else:
        rng = np.random.default_rng(cfg.seed)
        params = init_params_from_rng(model_cfg, rng)
        adam = init_adam(params, lr=cfg.lr)
        start_epoch = 1

    # (T, N, 1) view of the targets, sliced per batch below
    targets = np.ascontiguousarray(dataset.targets.T)[:, :, None]
    batches = _batches(n, cfg.batch_size)

    log: list[LogRecord] = []
    log_fh = None
    if log_path is not None:
        new_file = not os.path.exists(log_path) or os.path.getsize(log_path) == 0
        log_fh = open(log_path, "a", encoding="utf-8")
        if new_file:
            log_fh.write(LOG_HEADER + "\n")

    last_ckpt_path: str | None = None
    started = time.perf_counter()

    def _checkpoint(epoch: int) -> Checkpoint:
        return Checkpoint(
            model_config=model_cfg,
            params=params,
            adam=adam,
            epoch=epoch,
            rng_state=rng.bit_generator.state,
            dataset_fingerprint=fp,
            training_config=cfg,
            dataset_path=dataset_path,
        )

    try:
        for epoch in range(start_epoch, cfg.epochs + 1):
            if cfg.lr_decay != 1.0:
                adam.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
            epoch_loss = 0.0
            for ks in batches:
                trace = forward_batch(params, ks, t_len)
                grads = backward_batch(params, trace, targets[:, ks, :])
                if not np.isfinite(grads.loss):
                    raise NumericalAbort(epoch, last_ckpt_path)
                epoch_loss += grads.loss
                grads = grads.scaled(1.0 / ks.size)
                if cfg.grad_clip is not None:
                    grads = _clip(grads, cfg.grad_clip)
                params, adam = adam_step(params, grads, adam)
            mean_loss = epoch_loss / n
            if epoch == 1 or epoch == cfg.epochs or epoch % cfg.log_every == 0:
                wall_ms = (time.perf_counter() - started) * 1000.0
                rec = LogRecord(epoch=epoch, mean_loss=mean_loss, wall_ms=wall_ms)
                log.append(rec)
                if log_fh is not None:
                    log_fh.write(f"{rec.epoch},{rec.mean_loss!r},{rec.wall_ms:.3f}\n")
                    log_fh.flush()
            if (
                checkpoint_dir is not None
                and cfg.checkpoint_every > 0
                and epoch % cfg.checkpoint_every == 0
            ):
                path = os.path.join(checkpoint_dir, f"checkpoint_ep{epoch:06d}.json")
                save_checkpoint(_checkpoint(epoch), path)
                last_ckpt_path = path
    finally:
        if log_fh is not None:
            log_fh.close()

    final = _checkpoint(cfg.epochs)
    return TrainResult(
        params=params, log=log, checkpoint=final, last_checkpoint_path=last_ckpt_path
    )


def reconstruct(params: ModelParams, seq_index: int, steps: int) -> np.ndarray:
    """Outputs of the closed-loop rollout for one sequence, shape (steps, out)."""
    return rollout_closed_loop(params, seq_index, steps).outputs
