"""Time-series modeling with per-sequence trainable LSTM initial states.

Train a single LSTM to reconstruct a whole collection of series, with one
learnable initial hidden state per series. The trained initial states form
a latent embedding for similarity analysis; continued closed-loop rollout
extrapolates any series past its training window.
"""

from .backprop import Gradients, accumulate, backward, sequence_loss
from .data import (
    Dataset,
    SeriesRecord,
    SyntheticSpec,
    exclude_incomplete,
    ingest_records,
    load_csv,
    load_dataset,
    make_synthetic,
    moving_average,
    save_dataset,
    to_targets,
)
from .forecast import (
    ForecastReport,
    evaluate_mae,
    predict,
    predict_all,
    run_short_long_experiment,
)
from .latent import (
    LatentEmbedding,
    PcaResult,
    correlation_map,
    distance_correlation_stat,
    embedding_from_params,
    neighbors,
    pca,
    pearson,
    spearman,
)
from .model import (
    CellState,
    ModelConfig,
    ModelParams,
    Rollout,
    init_params,
    lstm_step,
    rollout_closed_loop,
)
from .numerics import euclidean_distance, hadamard, matvec, sigmoid, tanh
from .optimizer import AdamState, adam_step, init_adam
from .trainer import (
    Checkpoint,
    TrainingConfig,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
