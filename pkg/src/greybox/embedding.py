"""Delay embedding of the augmented observable z = [u, x_c].

The embedded vector stacks d blocks, one per delay j*tau (j = 0 first), and
each block keeps the frozen channel order [u_1..u_M, x_1..x_Nc].  Mid-step
lookups for the RK stages interpolate the recorded history linearly for the
delayed blocks while the current x block is supplied by the caller as a
stage-head estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ColdStartError, ContractError

_GRID_RTOL = 1e-9


@dataclass(frozen=True)
class EmbeddingSpec:
    """Delay time, embedding dimension, and channel layout."""

    delay: float          # tau, time units
    dimension: int        # d
    n_states: int         # N_c
    n_inputs: int         # M
    t_s: float            # sampling interval

    def __post_init__(self):
        if self.delay <= 0 or self.t_s <= 0:
            raise ContractError("delay and t_s must be positive")
        if self.dimension < 1:
            raise ContractError("embedding dimension must be >= 1")
        if self.n_states < 1 or self.n_inputs < 0:
            raise ContractError("need n_states >= 1 and n_inputs >= 0")
        m = self.delay / self.t_s
        if abs(m - round(m)) > _GRID_RTOL * max(1.0, m):
            raise ContractError(
                f"delay {self.delay} is not an integer multiple of t_s {self.t_s}")

    @property
    def delay_steps(self) -> int:
        """Samples per delay, m = tau / t_s."""
        return int(round(self.delay / self.t_s))

    @property
    def n_channels(self) -> int:
        return self.n_inputs + self.n_states

    @property
    def embedded_length(self) -> int:
        return self.dimension * self.n_channels

    @property
    def history_steps(self) -> int:
        """Samples of history needed before t: (d-1)*m."""
        return (self.dimension - 1) * self.delay_steps


class HistoryBuffer:
    """Growable record of z samples on a uniform time grid.

    Single-writer: one rollout owns and appends to a buffer; reads are free.
    """

    def __init__(self, t0: float, t_s: float, n_channels: int, capacity: int = 64):
        if t_s <= 0:
            raise ContractError("t_s must be positive")
        self.t0 = float(t0)
        self.t_s = float(t_s)
        self.n_channels = int(n_channels)
        self._data = np.zeros((max(capacity, 1), n_channels))
        self._len = 0

    @classmethod
    def from_array(cls, t0: float, t_s: float, data: np.ndarray) -> "HistoryBuffer":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ContractError("history data must be 2-D (samples, channels)")
        buf = cls(t0, t_s, data.shape[1], capacity=max(len(data), 1))
        buf._data[:len(data)] = data
        buf._len = len(data)
        return buf

    def __len__(self) -> int:
        return self._len

    @property
    def rows(self) -> np.ndarray:
        """(len, C) view of the recorded samples."""
        return self._data[:self._len]

    @property
    def t_last(self) -> float:
        if self._len == 0:
            raise ContractError("buffer is empty")
        return self.t0 + (self._len - 1) * self.t_s

    def append(self, row: np.ndarray) -> None:
        row = np.asarray(row, dtype=float)
        if row.shape != (self.n_channels,):
            raise ContractError(f"row shape {row.shape} != ({self.n_channels},)")
        if self._len == self._data.shape[0]:
            grown = np.zeros((2 * self._data.shape[0], self.n_channels))
            grown[:self._len] = self._data[:self._len]
            self._data = grown
        self._data[self._len] = row
        self._len += 1

    def copy(self) -> "HistoryBuffer":
        return HistoryBuffer.from_array(self.t0, self.t_s, self.rows)

    def index_of(self, t: float) -> int:
        """Grid index of time t; t must lie on the sampling grid."""
        i = round((t - self.t0) / self.t_s)
        if abs(self.t0 + i * self.t_s - t) > _GRID_RTOL * max(1.0, abs(t), self.t_s):
            raise ContractError(f"t={t} is not on the sampling grid "
                                f"(t0={self.t0}, t_s={self.t_s})")
        if i < 0 or i >= self._len:
            raise ContractError(f"no sample recorded at t={t}")
        return int(i)


def warm_index(buffer: HistoryBuffer, spec: EmbeddingSpec, t: float) -> int:
    """Grid index of t, verified warm (full embedding window available)."""
    if spec.n_channels != buffer.n_channels:
        raise ContractError(f"spec has {spec.n_channels} channels, "
                            f"buffer has {buffer.n_channels}")
    i = buffer.index_of(t)
    if i < spec.history_steps:
        earliest = buffer.t0 + spec.history_steps * buffer.t_s
        raise ColdStartError(
            f"history covers only {i} samples before t={t}; need "
            f"{spec.history_steps} (first feasible t is {earliest})",
            earliest_feasible_t=earliest)
    return i


def embed_at(buffer: HistoryBuffer, spec: EmbeddingSpec, t: float) -> np.ndarray:
    """z_e(t): blocks z(t), z(t - tau), ..., z(t - (d-1)tau), concatenated."""
    i = warm_index(buffer, spec, t)
    m = spec.delay_steps
    rows = buffer.rows
    return np.concatenate([rows[i - j * m] for j in range(spec.dimension)])


def embed_interpolated(buffer: HistoryBuffer, spec: EmbeddingSpec, t: float,
                       delta: float, x_head: np.ndarray) -> np.ndarray:
    """Estimated z_e(t + delta) for an RK stage, delta in (0, t_s].

    The j=0 block uses the recorded u(t) (inputs held constant over the
    step) and the caller's x_head estimate of x_c(t + delta); delayed blocks
    interpolate linearly between the bracketing recorded samples.
    """
    if not (delta > 0.0 and delta <= spec.t_s * (1.0 + _GRID_RTOL)):
        raise ContractError(f"delta={delta} outside (0, t_s={spec.t_s}]")
    x_head = np.asarray(x_head, dtype=float)
    if x_head.shape != (spec.n_states,):
        raise ContractError(f"x_head shape {x_head.shape} != ({spec.n_states},)")
    i = warm_index(buffer, spec, t)
    rows = buffer.rows
    m = spec.delay_steps
    w = delta / spec.t_s
    parts = [rows[i, :spec.n_inputs], x_head]
    for j in range(1, spec.dimension):
        base = i - j * m
        parts.append((1.0 - w) * rows[base] + w * rows[base + 1])
    return np.concatenate(parts)


def delayed_blocks(data: np.ndarray, indices: np.ndarray, spec: EmbeddingSpec,
                   delta: float) -> np.ndarray:
    """Batched delayed blocks (j >= 1) of the embedding at t_i + delta.

    ``data`` is the full (T, C) sample matrix and ``indices`` the base sample
    index of each batch row; delta = 0 reproduces the recorded samples,
    0 < delta <= t_s interpolates.  Returns (B, (d-1)*C).
    """
    indices = np.asarray(indices)
    d, m, c = spec.dimension, spec.delay_steps, spec.n_channels
    if d == 1:
        return np.zeros((len(indices), 0))
    j = np.arange(1, d)
    base = indices[:, None] - j[None, :] * m        # (B, d-1)
    if np.any(base < 0):
        raise ColdStartError("batch contains cold-start indices",
                             earliest_feasible_t=float(spec.history_steps))
    if delta == 0.0:
        rows = data[base]
    else:
        w = delta / spec.t_s
        rows = (1.0 - w) * data[base] + w * data[base + 1]
    return rows.reshape(len(indices), (d - 1) * c)
