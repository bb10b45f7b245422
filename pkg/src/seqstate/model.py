"""LSTM network whose initial hidden state is a trainable per-sequence parameter.

The network holds one learnable H-vector per sequence in ``h0_table``. To
generate sequence ``k`` the table row is used as the hidden state at step 0,
the cell state and the first input are zero, and from the second step on the
model's own previous output is fed back as input (closed-loop generation).
A single affine layer maps the hidden state to the output at every step.

Packed gate layout: the input-to-hidden and hidden-to-hidden weights stack
the four gates row-wise in the fixed order (input, forget, cell, output),
i.e. rows [0:H) drive the input gate, [H:2H) the forget gate, [2H:3H) the
cell candidate and [3H:4H) the output gate. This order is part of the
checkpoint format and must not change.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .numerics import ShapeError, sigmoid, tanh


@dataclass(frozen=True)
class ModelConfig:
    """Static shape description of the network."""

    input_dim: int = 1
    hidden_dim: int = 128
    output_dim: int = 1
    num_sequences: int = 735

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim", "num_sequences"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


# Trainable parameter groups, in the fixed traversal order used by the
# optimizer, gradient accumulation and checkpoint serialization.
PARAM_FIELDS = ("w_ih", "w_hh", "b_ih", "b_hh", "w_out", "b_out", "h0_table")


@dataclass
class ModelParams:
    """All trainable parameters, including the per-sequence initial states.

    Shapes (H = hidden_dim, N = num_sequences):
      w_ih (4H, input_dim), w_hh (4H, H), b_ih (4H,), b_hh (4H,),
      w_out (output_dim, H), b_out (output_dim,), h0_table (N, H).
    """

    w_ih: np.ndarray
    w_hh: np.ndarray
    b_ih: np.ndarray
    b_hh: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    h0_table: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w_ih.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w_out.shape[0]

    @property
    def num_sequences(self) -> int:
        return self.h0_table.shape[0]

    def copy(self) -> "ModelParams":
        return ModelParams(**{f: getattr(self, f).copy() for f in PARAM_FIELDS})

    def validate(self, cfg: ModelConfig | None = None) -> None:
        h = self.hidden_dim
        expected = {
            "w_ih": (4 * h, self.input_dim),
            "w_hh": (4 * h, h),
            "b_ih": (4 * h,),
            "b_hh": (4 * h,),
            "w_out": (self.output_dim, h),
            "b_out": (self.output_dim,),
            "h0_table": (self.num_sequences, h),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        if cfg is not None:
            got = (self.input_dim, h, self.output_dim, self.num_sequences)
            want = (cfg.input_dim, cfg.hidden_dim, cfg.output_dim, cfg.num_sequences)
            if got != want:
                raise ShapeError(f"params dims {got} do not match config dims {want}")


@dataclass
class CellState:
    h: np.ndarray
    c: np.ndarray


class Gates(NamedTuple):
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray


@dataclass
class BatchTrace:
    """Full forward trace for a batch of sequences, retained for backprop.

    Arrays are indexed [t, b, ...] with t in 0..T-1 (t=0 is the first
    generated step). ``x`` holds the input actually consumed at each step:
    zeros at t=0, the previous output afterwards.
    """

    ks: np.ndarray        # (B,) int sequence indices
    h0: np.ndarray        # (B, H) initial hidden states used
    x: np.ndarray         # (T, B, input_dim)
    gate_i: np.ndarray    # (T, B, H)
    gate_f: np.ndarray    # (T, B, H)
    gate_g: np.ndarray    # (T, B, H)
    gate_o: np.ndarray    # (T, B, H)
    c: np.ndarray         # (T, B, H)
    h: np.ndarray         # (T, B, H)
    outputs: np.ndarray   # (T, B, output_dim)

    @property
    def steps(self) -> int:
        return self.outputs.shape[0]


@dataclass
class Rollout:
    """Single-sequence closed-loop generation trace.

    ``outputs``, the hidden/cell trace and the four gate traces all have
    exactly T rows.
    """

    seq_index: int
    h0: np.ndarray        # (H,)
    inputs: np.ndarray    # (T, input_dim)
    gate_i: np.ndarray    # (T, H)
    gate_f: np.ndarray    # (T, H)
    gate_g: np.ndarray    # (T, H)
    gate_o: np.ndarray    # (T, H)
    c: np.ndarray         # (T, H)
    h: np.ndarray         # (T, H)
    outputs: np.ndarray   # (T, output_dim)

    @property
    def steps(self) -> int:
        return self.outputs.shape[0]

    @property
    def hidden_trace(self) -> list[CellState]:
        return [CellState(h=self.h[t], c=self.c[t]) for t in range(self.steps)]

    @property
    def gate_trace(self) -> list[Gates]:
        return [
            Gates(self.gate_i[t], self.gate_f[t], self.gate_g[t], self.gate_o[t])
            for t in range(self.steps)
        ]


def init_params(cfg: ModelConfig, seed: int) -> ModelParams:
    """Seeded deterministic initialization.

    Weights are uniform in (-1/sqrt(H), +1/sqrt(H)); biases and the whole
    initial-state table start at zero so any structure in the latent table
    is learned, not injected.
    """
    rng = np.random.default_rng(seed)
    return init_params_from_rng(cfg, rng)


def init_params_from_rng(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    h = cfg.hidden_dim
    bound = 1.0 / np.sqrt(h)
    return ModelParams(
        w_ih=rng.uniform(-bound, bound, size=(4 * h, cfg.input_dim)),
        w_hh=rng.uniform(-bound, bound, size=(4 * h, h)),
        b_ih=np.zeros(4 * h),
        b_hh=np.zeros(4 * h),
        w_out=rng.uniform(-bound, bound, size=(cfg.output_dim, h)),
        b_out=np.zeros(cfg.output_dim),
        h0_table=np.zeros((cfg.num_sequences, h)),
    )


def lstm_step(params: ModelParams, x: np.ndarray, prev: CellState) -> tuple[CellState, Gates]:
    """One LSTM cell update.

    i = sig(W_i x + b_i + U_i h + u_i), f and o likewise, g = tanh(...);
    c' = f*c + i*g and h' = o*tanh(c'). Returns the new state and the four
    gate activations.
    """
    x = np.asarray(x, dtype=np.float64)
    hd = params.hidden_dim
    if x.shape != (params.input_dim,):
        raise ShapeError(f"input has shape {x.shape}, expected ({params.input_dim},)")
    if prev.h.shape != (hd,) or prev.c.shape != (hd,):
        raise ShapeError(
            f"state has shapes h={prev.h.shape} c={prev.c.shape}, expected ({hd},)"
        )
    z = params.w_ih @ x + params.b_ih + params.w_hh @ prev.h + params.b_hh
    i = sigmoid(z[:hd])
    f = sigmoid(z[hd:2 * hd])
    g = tanh(z[2 * hd:3 * hd])
    o = sigmoid(z[3 * hd:])
    c = f * prev.c + i * g
    h = o * tanh(c)
    return CellState(h=h, c=c), Gates(i, f, g, o)


def forward_batch(params: ModelParams, ks: np.ndarray, steps: int) -> BatchTrace:
    """Closed-loop generation for a batch of sequence indices at once.

    The batch dimension only selects which h0_table rows seed the runs;
    every sequence evolves independently under the shared weights.
    Requires input_dim == output_dim (the output is the next input).
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if params.input_dim != params.output_dim:
        raise ShapeError(
            "closed-loop generation requires input_dim == output_dim, "
            f"got {params.input_dim} != {params.output_dim}"
        )
    ks = np.asarray(ks, dtype=np.intp)
    n = params.num_sequences
    if ks.ndim != 1 or ks.size == 0:
        raise ValueError("ks must be a non-empty 1-D index array")
    if np.any(ks < 0) or np.any(ks >= n):
        bad = ks[(ks < 0) | (ks >= n)][0]
        raise IndexError(f"sequence index {bad} out of range [0, {n})")

    hd = params.hidden_dim
    b = ks.size
    t_total = steps
    x = np.zeros((b, params.input_dim))
    h = params.h0_table[ks].copy()
    c = np.zeros((b, hd))
    bias = params.b_ih + params.b_hh
    w_ih_t = params.w_ih.T
    w_hh_t = params.w_hh.T
    w_out_t = params.w_out.T

    xs = np.empty((t_total, b, params.input_dim))
    gi = np.empty((t_total, b, hd))
    gf = np.empty((t_total, b, hd))
    gg = np.empty((t_total, b, hd))
    go = np.empty((t_total, b, hd))
    cs = np.empty((t_total, b, hd))
    hs = np.empty((t_total, b, hd))
    ys = np.empty((t_total, b, params.output_dim))

    for t in range(t_total):
        z = x @ w_ih_t + h @ w_hh_t + bias
        i = sigmoid(z[:, :hd])
        f = sigmoid(z[:, hd:2 * hd])
        g = tanh(z[:, 2 * hd:3 * hd])
        o = sigmoid(z[:, 3 * hd:])
        c = f * c + i * g
        h = o * tanh(c)
        y = h @ w_out_t + params.b_out
        xs[t] = x
        gi[t], gf[t], gg[t], go[t] = i, f, g, o
        cs[t], hs[t], ys[t] = c, h, y
        x = y

    return BatchTrace(
        ks=ks, h0=params.h0_table[ks].copy(), x=xs,
        gate_i=gi, gate_f=gf, gate_g=gg, gate_o=go, c=cs, h=hs, outputs=ys,
    )


def rollout_closed_loop(params: ModelParams, seq_index: int, steps: int) -> Rollout:
    """Generate ``steps`` outputs for one sequence from its initial state.

    No external input is consumed: the first input and the cell state start
    at zero, the hidden state starts at h0_table[seq_index], and each output
    becomes the next input.
    """
    trace = forward_batch(params, np.array([seq_index]), steps)
    return Rollout(
        seq_index=int(seq_index),
        h0=trace.h0[0].copy(),
        inputs=trace.x[:, 0],
        gate_i=trace.gate_i[:, 0],
        gate_f=trace.gate_f[:, 0],
        gate_g=trace.gate_g[:, 0],
        gate_o=trace.gate_o[:, 0],
        c=trace.c[:, 0],
        h=trace.h[:, 0],
        outputs=trace.outputs[:, 0],
    )
