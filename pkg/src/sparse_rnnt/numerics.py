"""Dense numeric kernels: matmul, masked softmax, layer norm, LSTM cell step.

Everything here is pure, float64, and deterministic; the rest of the
package builds on these four primitives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "RecurrentState",
    "LstmWeights",
    "matmul",
    "masked_softmax",
    "softmax",
    "layer_norm",
    "lstm_cell_step",
    "sigmoid",
]


@dataclass
class RecurrentState:
    """Hidden/cell vectors of a recurrent cell."""

    hidden: np.ndarray
    cell: np.ndarray

    def __post_init__(self):
        self.hidden = np.asarray(self.hidden, dtype=np.float64)
        self.cell = np.asarray(self.cell, dtype=np.float64)
        if self.hidden.shape != self.cell.shape:
            raise ShapeError(
                f"hidden {self.hidden.shape} and cell {self.cell.shape} differ"
            )

    @classmethod
    def zeros(cls, size: int) -> "RecurrentState":
        return cls(np.zeros(size), np.zeros(size))

    def copy(self) -> "RecurrentState":
        return RecurrentState(self.hidden.copy(), self.cell.copy())


@dataclass
class LstmWeights:
    """Packed LSTM parameters, gate order (i, f, g, o) along the last axis.

    w_x: (input_dim, 4*cell), w_h: (cell, 4*cell), bias: (4*cell,)
    """

    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray

    @property
    def cell_size(self) -> int:
        return self.w_h.shape[0]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax(x: np.ndarray) -> np.ndarray:
    """Stable softmax over a 1-D array or the last axis of a 2-D array."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(x - np.max(x, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def masked_softmax(scores: np.ndarray, mask) -> np.ndarray:
    """Softmax over the subset of ``scores`` selected by ``mask`` indices.

    Entries outside the mask are exactly 0; the masked entries sum to 1.
    Only the selected scores enter the computation, so values at unmasked
    positions have zero influence (bit-level).
    """
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.asarray(mask, dtype=np.intp).ravel()
    if idx.size == 0:
        raise ShapeError("masked_softmax requires a nonempty mask")
    if idx.min() < 0 or idx.max() >= scores.shape[0]:
        raise ShapeError(
            f"mask index out of range for score vector of length {scores.shape[0]}"
        )
    sub = scores[idx]
    z = np.exp(sub - sub.max())
    out = np.zeros_like(scores)
    out[idx] = z / z.sum()
    return out


def layer_norm(
    x: np.ndarray, gain: np.ndarray, bias: np.ndarray, epsilon: float = 1e-6
) -> np.ndarray:
    """Zero-mean unit-variance normalization over the last axis, then affine."""
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.shape[-1] != gain.shape[0] or gain.shape != bias.shape:
        raise ShapeError(
            f"layer_norm shapes disagree: x {x.shape}, gain {gain.shape}, "
            f"bias {bias.shape}"
        )
    if epsilon <= 0:
        raise ShapeError("epsilon must be positive")
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + epsilon) * gain + bias


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-safe for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def lstm_cell_step(
    x: np.ndarray, state: RecurrentState, weights: LstmWeights
) -> tuple[np.ndarray, RecurrentState]:
    """One LSTM step; returns (output, new state) with output = new hidden."""
    x = np.asarray(x, dtype=np.float64)
    n = weights.cell_size
    if weights.w_x.shape != (x.shape[0], 4 * n):
        raise ShapeError(
            f"w_x {weights.w_x.shape} incompatible with input {x.shape} "
            f"and cell size {n}"
        )
    if state.hidden.shape[0] != n:
        raise ShapeError(f"state size {state.hidden.shape[0]} != cell size {n}")
    gates = x @ weights.w_x + state.hidden @ weights.w_h + weights.bias
    i = sigmoid(gates[:n])
    f = sigmoid(gates[n : 2 * n])
    g = np.tanh(gates[2 * n : 3 * n])
    o = sigmoid(gates[3 * n :])
    c = f * state.cell + i * g
    h = o * np.tanh(c)
    return h, RecurrentState(h, c)
