"""Reverse-mode gradients of the reconstruction loss through closed-loop rollout.

The loss for one sequence is the sum over steps of the Euclidean distance
between the generated output and the target. Backpropagation runs through
two coupled paths: the recurrent (h, c) chain and the feedback edge that
turns output t-1 into input t. Dropping the feedback edge gives measurably
wrong gradients for any run of three or more steps; ``detach_feedback``
exists so tests can demonstrate exactly that.

The distance term is non-differentiable where output equals target; the
zero subgradient is used there (it is the minimum).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PARAM_FIELDS, BatchTrace, ModelParams, Rollout
from .numerics import ShapeError


@dataclass
class Gradients:
    """Mirror of ModelParams, plus the loss value of the pass that made it."""

    w_ih: np.ndarray
    w_hh: np.ndarray
    b_ih: np.ndarray
    b_hh: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    h0_table: np.ndarray
    loss: float = 0.0

    def copy(self) -> "Gradients":
        return Gradients(
            **{f: getattr(self, f).copy() for f in PARAM_FIELDS}, loss=self.loss
        )

    def global_norm(self) -> float:
        total = 0.0
        for f in PARAM_FIELDS:
            a = getattr(self, f)
            total += float(np.sum(a * a))
        return float(np.sqrt(total))

    def scaled(self, factor: float) -> "Gradients":
        return Gradients(
            **{f: getattr(self, f) * factor for f in PARAM_FIELDS},
            loss=self.loss * factor,
        )


def zeros_like_params(params: ModelParams) -> Gradients:
    return Gradients(
        **{f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS}, loss=0.0
    )


def _as_target_array(target, steps: int, output_dim: int, what: str = "target") -> np.ndarray:
    t = np.asarray(target, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if t.shape != (steps, output_dim):
        raise ShapeError(
            f"{what} has shape {np.shape(target)}, expected ({steps}, {output_dim})"
        )
    return t


def sequence_loss(rollout: Rollout, target) -> float:
    """Sum over steps of the Euclidean distance between output and target."""
    y = rollout.outputs
    t = _as_target_array(target, y.shape[0], y.shape[1])
    r = y - t
    return float(np.sum(np.sqrt(np.sum(r * r, axis=1))))


def backward(
    params: ModelParams,
    rollout: Rollout,
    target,
    seq_index: int,
    detach_feedback: bool = False,
) -> Gradients:
    """Exact gradient of sequence_loss w.r.t. every parameter group.

    The rollout must come from rollout_closed_loop with the same params and
    seq_index so that all traces line up. The h0_table gradient is nonzero
    only in row seq_index.
    """
    if rollout.seq_index != seq_index:
        raise ShapeError(
            f"rollout was produced for sequence {rollout.seq_index}, not {seq_index}"
        )
    if not (0 <= seq_index < params.num_sequences):
        raise IndexError(f"sequence index {seq_index} out of range")
    hd = params.hidden_dim
    if rollout.h.shape[1] != hd or rollout.outputs.shape[1] != params.output_dim:
        raise ShapeError(
            f"rollout dims (H={rollout.h.shape[1]}, out={rollout.outputs.shape[1]}) "
            f"do not match params (H={hd}, out={params.output_dim})"
        )
    trace = BatchTrace(
        ks=np.array([seq_index], dtype=np.intp),
        h0=rollout.h0[None, :],
        x=rollout.inputs[:, None, :],
        gate_i=rollout.gate_i[:, None, :],
        gate_f=rollout.gate_f[:, None, :],
        gate_g=rollout.gate_g[:, None, :],
        gate_o=rollout.gate_o[:, None, :],
        c=rollout.c[:, None, :],
        h=rollout.h[:, None, :],
        outputs=rollout.outputs[:, None, :],
    )
    t = _as_target_array(target, rollout.steps, params.output_dim)
    return backward_batch(params, trace, t[:, None, :], detach_feedback=detach_feedback)


def backward_batch(
    params: ModelParams,
    trace: BatchTrace,
    targets: np.ndarray,
    detach_feedback: bool = False,
) -> Gradients:
    """Gradients summed over a batch trace; losses add over the batch.

    ``targets`` is (T, B, output_dim) aligned with ``trace.outputs``.
    """
    steps, b, out_dim = trace.outputs.shape
    if targets.shape != (steps, b, out_dim):
        raise ShapeError(
            f"targets have shape {targets.shape}, expected {(steps, b, out_dim)}"
        )
    hd = params.hidden_dim

    resid = trace.outputs - targets                      # (T, B, out)
    dist = np.sqrt(np.sum(resid * resid, axis=2))        # (T, B)
    loss = float(np.sum(dist))
    # d dist / d y = resid / dist, zero subgradient where dist == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(dist > 0.0, 1.0 / np.where(dist > 0.0, dist, 1.0), 0.0)
    dy_loss = resid * inv[:, :, None]                    # (T, B, out)

    g = zeros_like_params(params)
    g.loss = loss

    dh_next = np.zeros((b, hd))       # dL/dh_t arriving from step t+1
    dc_next = np.zeros((b, hd))       # dL/dc_t arriving from step t+1
    dx_next = np.zeros((b, out_dim))  # dL/dy_t via the feedback edge x_{t+1} = y_t

    for t in range(steps - 1, -1, -1):
        dy = dy_loss[t].copy()
        if not detach_feedback:
            dy += dx_next
        g.w_out += dy.T @ trace.h[t]
        g.b_out += dy.sum(axis=0)

        dh = dy @ params.w_out + dh_next
        tc = np.tanh(trace.c[t])
        do = dh * tc
        dc = dc_next + dh * trace.gate_o[t] * (1.0 - tc * tc)

        c_prev = trace.c[t - 1] if t > 0 else np.zeros((b, hd))
        i_t, f_t, g_t, o_t = (
            trace.gate_i[t], trace.gate_f[t], trace.gate_g[t], trace.gate_o[t]
        )
        df = dc * c_prev
        di = dc * g_t
        dg = dc * i_t
        dc_next = dc * f_t

        dz = np.concatenate(
            [
                di * i_t * (1.0 - i_t),
                df * f_t * (1.0 - f_t),
                dg * (1.0 - g_t * g_t),
                do * o_t * (1.0 - o_t),
            ],
            axis=1,
        )                                               # (B, 4H)

        g.w_ih += dz.T @ trace.x[t]
        h_prev = trace.h[t - 1] if t > 0 else trace.h0
        g.w_hh += dz.T @ h_prev
        dz_sum = dz.sum(axis=0)
        g.b_ih += dz_sum
        g.b_hh += dz_sum

        dh_next = dz @ params.w_hh
        # input at t=0 is the zero constant, not a previous output
        dx_next = dz @ params.w_ih if t > 0 else np.zeros((b, out_dim))

    # dh_next now holds dL/dh0 for each batch member; scatter into the table.
    # np.add.at handles repeated indices, though training never repeats them.
    np.add.at(g.h0_table, trace.ks, dh_next)
    return g


def accumulate(total: Gradients, delta: Gradients) -> Gradients:
    """Elementwise sum of two gradient sets; loss values add."""
    out = {}
    for f in PARAM_FIELDS:
        a, d = getattr(total, f), getattr(delta, f)
        if a.shape != d.shape:
            raise ShapeError(f"{f} shapes differ: {a.shape} vs {d.shape}")
        out[f] = a + d
    return Gradients(**out, loss=total.loss + delta.loss)
