"""Dense feedforward networks: softplus hidden layers, linear output."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, ShapeError
from ..rng import SplitMix64
from .tape import Tape, _sigmoid  # noqa: F401  (sigmoid reused in tests)

HIDDEN_ACTIVATIONS = ("softplus",)
OUTPUT_ACTIVATIONS = ("linear",)


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a dense network."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int
    hidden_activation: str = "softplus"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ContractError("input_dim and output_dim must be positive")
        if any(h < 1 for h in self.hidden_layers):
            raise ContractError("hidden layer widths must be positive")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ContractError(f"unsupported hidden activation "
                                f"{self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ContractError(f"unsupported output activation "
                                f"{self.output_activation!r}")

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_layers, self.output_dim)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_shapes())


@dataclass
class MlpParams:
    """Per-layer weights (fan_in, fan_out) and biases (fan_out,).

    The flat ordering is W1 (row-major), b1, W2, b2, ...; it is the contract
    shared by the optimizer, gradients, and checkpoints.
    """

    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    @staticmethod
    def unflatten(spec: MlpSpec, flat: np.ndarray) -> "MlpParams":
        flat = np.asarray(flat, dtype=float)
        if flat.size != spec.n_params:
            raise ShapeError(f"flat vector has {flat.size} entries, "
                             f"spec needs {spec.n_params}")
        weights, biases, k = [], [], 0
        for fi, fo in spec.layer_shapes():
            weights.append(flat[k:k + fi * fo].reshape(fi, fo).copy())
            k += fi * fo
            biases.append(flat[k:k + fo].copy())
            k += fo
        return MlpParams(weights, biases)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])


def check_params(spec: MlpSpec, params: MlpParams) -> None:
    shapes = spec.layer_shapes()
    if len(params.weights) != len(shapes) or len(params.biases) != len(shapes):
        raise ShapeError(f"expected {len(shapes)} layers, "
                         f"got {len(params.weights)} weight blocks")
    for i, (fi, fo) in enumerate(shapes):
        if params.weights[i].shape != (fi, fo):
            raise ShapeError(f"layer {i}: weight shape "
                             f"{params.weights[i].shape} != ({fi}, {fo})")
        if params.biases[i].shape != (fo,):
            raise ShapeError(f"layer {i}: bias shape "
                             f"{params.biases[i].shape} != ({fo},)")


def glorot_init(spec: MlpSpec, rng: SplitMix64) -> MlpParams:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases.

    Draw order is fixed (layer by layer, weights row-major) so a seed pins
    the initialization bit-for-bit.
    """
    weights, biases = [], []
    for fi, fo in spec.layer_shapes():
        limit = np.sqrt(6.0 / (fi + fo))
        w = np.array([rng.uniform(-limit, limit) for _ in range(fi * fo)])
        weights.append(w.reshape(fi, fo))
        biases.append(np.zeros(fo))
    return MlpParams(weights, biases)


def mlp_forward(spec: MlpSpec, params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Plain (non-recorded) forward pass; accepts (n,) or (batch, n)."""
    check_params(spec, params)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"input has {x.shape[1]} features, "
                         f"spec.input_dim is {spec.input_dim}")
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        x = x @ w + b
        if i < n_layers - 1:
            x = np.logaddexp(0.0, x)
    return x[0] if single else x


def register_mlp(tape: Tape, params: MlpParams) -> list[tuple[int, int]]:
    """Register weights/biases as trainable leaves; returns per-layer node ids."""
    ids = []
    for w, b in zip(params.weights, params.biases):
        wid = tape.parameter(w)
        bid = tape.parameter(b[None, :])
        ids.append((wid, bid))
    return ids


def mlp_on_tape(tape: Tape, spec: MlpSpec, layer_ids: list[tuple[int, int]],
                x_id: int) -> int:
    """Record the forward pass on the tape; returns the output node id."""
    if tape.values[x_id].shape[1] != spec.input_dim:
        raise ShapeError(f"input node has {tape.values[x_id].shape[1]} "
                         f"features, spec.input_dim is {spec.input_dim}")
    out = x_id
    last = len(layer_ids) - 1
    for i, (wid, bid) in enumerate(layer_ids):
        out = tape.apply("affine", out, wid, bid)
        if i < last:
            out = tape.apply("softplus", out)
    return out


# -- checkpoints --------------------------------------------------------
#
# Plain text: one header line "mlp <in> <h1> ... <out>", then one 64-bit
# float per line in flat order.  repr() round-trips doubles exactly.


def save_checkpoint(path, spec: MlpSpec, params: MlpParams) -> None:
    check_params(spec, params)
    dims = (spec.input_dim, *spec.hidden_layers, spec.output_dim)
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("mlp " + " ".join(str(d) for d in dims) + "\n")
        for v in params.flatten():
            fh.write(repr(float(v)) + "\n")


def load_checkpoint(path) -> tuple[MlpSpec, MlpParams]:
    with Path(path).open("r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if not header or header[0] != "mlp" or len(header) < 4:
            raise ContractError(f"{path}: not an MLP checkpoint")
        dims = [int(d) for d in header[1:]]
        spec = MlpSpec(dims[0], tuple(dims[1:-1]), dims[-1])
        flat = np.array([float(line) for line in fh if line.strip()])
    return spec, MlpParams.unflatten(spec, flat)
