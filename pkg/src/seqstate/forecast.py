"""Closed-loop extrapolation beyond the training window and its evaluation.

Prediction is literally continued rollout: run the generator for
train_len + horizon steps and keep the suffix. No future data is consumed.
Accuracy is reported as mean absolute error, per horizon date (averaged
over sequences) and per sequence (averaged over dates).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .model import ModelConfig, ModelParams, forward_batch
from .numerics import ShapeError
from .trainer import TrainingConfig, train


@dataclass
class ForecastReport:
    ids: list[str]
    predictions: np.ndarray       # (N, horizon)
    per_date_mae: np.ndarray      # (horizon,)
    per_sequence_mae: np.ndarray  # (N,)
    best_id: str
    worst_id: str


def predict(
    params: ModelParams, seq_index: int, train_len: int, horizon: int
) -> np.ndarray:
    """Extrapolated outputs for steps train_len+1 .. train_len+horizon."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if train_len < 1:
        raise ValueError(f"train_len must be >= 1, got {train_len}")
    trace = forward_batch(params, np.array([seq_index]), train_len + horizon)
    return trace.outputs[train_len:, 0, :]


def predict_all(params: ModelParams, train_len: int, horizon: int) -> np.ndarray:
    """Horizon outputs for every sequence, shape (N, horizon); scalar outputs."""
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    ks = np.arange(params.num_sequences, dtype=np.intp)
    trace = forward_batch(params, ks, train_len + horizon)
    return trace.outputs[train_len:, :, 0].T


def evaluate_mae(
    predictions: np.ndarray, actuals: np.ndarray, ids: list[str] | None = None
) -> ForecastReport:
    """MAE breakdown of horizon predictions against actuals, both (N, horizon).

    Best/worst sequences are the argmin/argmax of per-sequence MAE, ties
    resolved to the lowest index.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    actuals = np.asarray(actuals, dtype=np.float64)
    if predictions.ndim != 2 or predictions.shape != actuals.shape:
        raise ShapeError(
            f"predictions {predictions.shape} and actuals {actuals.shape} must be "
            "equal 2-D (sequences x horizon) arrays"
        )
    n = predictions.shape[0]
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise ShapeError(f"{len(ids)} ids for {n} sequences")
    err = np.abs(predictions - actuals)
    per_date = err.mean(axis=0)
    per_seq = err.mean(axis=1)
    return ForecastReport(
        ids=list(ids),
        predictions=predictions,
        per_date_mae=per_date,
        per_sequence_mae=per_seq,
        best_id=ids[int(np.argmin(per_seq))],
        worst_id=ids[int(np.argmax(per_seq))],
    )


@dataclass
class ExperimentResult:
    short_len: int
    long_len: int
    horizon: int
    short: ForecastReport
    long: ForecastReport


def run_short_long_experiment(
    dataset: Dataset,
    short_len: int,
    long_len: int,
    horizon: int,
    train_cfg: TrainingConfig,
    hidden_dim: int = 128,
) -> ExperimentResult:
    """Train on a short and a long prefix window, evaluate each on what follows.

    The two cases are independently trained models with fresh seeded
    initializations; each is scored on the ``horizon`` dates after its own
    training window.
    """
    if not (1 <= short_len < long_len):
        raise ValueError(f"need 1 <= short_len < long_len, got {short_len}, {long_len}")
    needed = long_len + horizon
    if dataset.length < needed:
        raise ValueError(
            f"dataset length {dataset.length} is insufficient: "
            f"long case needs {needed} steps"
        )
    reports = {}
    for name, t0 in (("short", short_len), ("long", long_len)):
        window = Dataset(
            ids=dataset.ids,
            targets=dataset.targets[:, :t0],
            dates=dataset.dates[:t0],
            meta=dataset.meta,
        )
        model_cfg = ModelConfig(
            input_dim=1, hidden_dim=hidden_dim, output_dim=1,
            num_sequences=dataset.num_sequences,
        )
        result = train(window, train_cfg, model_cfg)
        preds = predict_all(result.params, t0, horizon)
        actuals = dataset.targets[:, t0:t0 + horizon]
        reports[name] = evaluate_mae(preds, actuals, ids=dataset.ids)
    return ExperimentResult(
        short_len=short_len, long_len=long_len, horizon=horizon,
        short=reports["short"], long=reports["long"],
    )


def write_mae_csv(report: ForecastReport, path) -> None:
    """Per-date MAE curve: columns date_index,mae (date_index starts at 1)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date_index", "mae"])
        for i, v in enumerate(report.per_date_mae, start=1):
            w.writerow([i, repr(float(v))])


def write_per_sequence_csv(report: ForecastReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "mae"])
        for sid, v in zip(report.ids, report.per_sequence_mae):
            w.writerow([sid, repr(float(v))])


def write_paired_csv(result: ExperimentResult, path) -> None:
    """Paired per-date curves: date_index,mae_short,mae_long."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date_index", "mae_short", "mae_long"])
        for i in range(result.horizon):
            w.writerow(
                [
                    i + 1,
                    repr(float(result.short.per_date_mae[i])),
                    repr(float(result.long.per_date_mae[i])),
                ]
            )
