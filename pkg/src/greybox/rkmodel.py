"""Grey-box and black-box one-step predictors and closed-loop rollout.

The grey-box step makes four passes through the constitutive-law network and
the physics layer, wired as a classical fourth-order Runge-Kutta update with
step size h = t_s.  Stage s evaluates the network on an estimated embedding
at t + delta (delayed blocks interpolated from history, current block
extrapolated with the previous stage slope k), feeds the prior-weighted
output through the normalized conservation law, and the four slopes combine
as x + (h/6)(k1 + 2 k2 + 2 k3 + k4).  Every step is recorded on a single
tape, so the training loss differentiates through all four stages, the
physics layer, and the trainable physics constants.

All model inputs and outputs here live in normalized (zero-mean/unit-
variance) coordinates; the physics bridge converts to physical units
internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .embedding import EmbeddingSpec, HistoryBuffer, delayed_blocks, warm_index
from .errors import ColdStartError, ContractError, DivergenceError, ShapeError
from .nncore import (MlpParams, MlpSpec, Tape, loss_gradient, mlp_on_tape,
                     register_mlp)
from .physics import (PHYSICS_KINDS, NormalizedPhysics, PhenomPriors,
                      PhysicsModel, UnitPrior)

DIVERGENCE_LIMIT = 1.0e6  # normalized units


@dataclass
class GBAnnModel:
    """Physics-constrained predictor: network-closed conservation law under
    an RK4 recurrence.

    ``phi_mean``/``phi_std`` rescale the raw network output into physical
    constitutive units (identity by default); ``constitutive_override``
    replaces the network with an arbitrary callable
    ``f(t_stage, x_phys, u_phys) -> phi`` for oracle checks.
    """

    mlp_spec: MlpSpec
    mlp_params: MlpParams
    physics: PhysicsModel
    embedding: EmbeddingSpec
    normalizer: object  # train.Normalizer (names/mean/std)
    phi_mean: np.ndarray = None
    phi_std: np.ndarray = None
    prior_combination: str = "multiplicative"
    constitutive_override: Callable | None = None
    kind: str = field(default="gb", init=False)

    def __post_init__(self):
        spec, phys = self.embedding, self.physics
        if spec.n_states != phys.n_states or spec.n_inputs != phys.n_inputs:
            raise ContractError("embedding channel layout does not match physics")
        if self.mlp_spec.input_dim != spec.embedded_length:
            raise ShapeError(
                f"mlp input_dim {self.mlp_spec.input_dim} != embedded length "
                f"{spec.embedded_length}")
        if self.mlp_spec.output_dim != phys.n_constitutive:
            raise ShapeError(
                f"mlp output_dim {self.mlp_spec.output_dim} != "
                f"n_constitutive {phys.n_constitutive}")
        if self.prior_combination not in ("multiplicative", "additive"):
            raise ContractError("prior_combination must be multiplicative or additive")
        n_phi = phys.n_constitutive
        self.phi_mean = (np.zeros(n_phi) if self.phi_mean is None
                         else np.asarray(self.phi_mean, dtype=float))
        self.phi_std = (np.ones(n_phi) if self.phi_std is None
                        else np.asarray(self.phi_std, dtype=float))
        if self.phi_mean.shape != (n_phi,) or self.phi_std.shape != (n_phi,):
            raise ShapeError("phi_mean/phi_std must have one entry per channel")
        m = spec.n_inputs
        mean, std = np.asarray(self.normalizer.mean), np.asarray(self.normalizer.std)
        self.bridge = NormalizedPhysics(phys, mean[m:], std[m:], mean[:m], std[:m])

    @property
    def h(self) -> float:
        """Prediction step; the architecture requires h == t_s."""
        return self.embedding.t_s

    def n_flat(self) -> int:
        return self.mlp_spec.n_params + len(self.physics.beta_names)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.mlp_params.flatten(), self.physics.beta_log])

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        n = self.mlp_spec.n_params
        self.mlp_params = MlpParams.unflatten(self.mlp_spec, flat[:n])
        if len(self.physics.beta_names):
            self.physics.set_beta_log(flat[n:])


@dataclass
class BBAnnModel:
    """Discrete-time baseline: the embedding is mapped straight to the next
    state by a dense network of the same shape family as the grey model."""

    mlp_spec: MlpSpec
    mlp_params: MlpParams
    embedding: EmbeddingSpec
    normalizer: object
    kind: str = field(default="bb", init=False)

    def __post_init__(self):
        if self.mlp_spec.input_dim != self.embedding.embedded_length:
            raise ShapeError(
                f"mlp input_dim {self.mlp_spec.input_dim} != embedded length "
                f"{self.embedding.embedded_length}")
        if self.mlp_spec.output_dim != self.embedding.n_states:
            raise ShapeError("mlp output_dim must equal n_states")

    @property
    def h(self) -> float:
        return self.embedding.t_s

    def n_flat(self) -> int:
        return self.mlp_spec.n_params

    def get_flat(self) -> np.ndarray:
        return self.mlp_params.flatten()

    def set_flat(self, flat: np.ndarray) -> None:
        self.mlp_params = MlpParams.unflatten(self.mlp_spec, flat)


def _check_stage(tape: Tape, node: int, stage: int) -> None:
    if not np.all(np.isfinite(tape.values[node])):
        raise DivergenceError(f"non-finite values in RK stage {stage}",
                              stage=stage)


def _forward_gb(tape: Tape, model: GBAnnModel, data: np.ndarray,
                idx: np.ndarray, times: np.ndarray) -> int:
    spec = model.embedding
    m_in = spec.n_inputs
    bridge = model.bridge
    h = model.h

    u_norm = data[idx, :m_in]
    u_phys = bridge.input_to_physical(u_norm)
    u_id = tape.constant(u_norm)
    x_t = tape.constant(data[idx, m_in:])
    delayed = {
        0.0: tape.constant(delayed_blocks(data, idx, spec, 0.0)),
        0.5 * h: tape.constant(delayed_blocks(data, idx, spec, 0.5 * h)),
        h: tape.constant(delayed_blocks(data, idx, spec, h)),
    }

    layer_ids = register_mlp(tape, model.mlp_params)
    beta_id = (tape.parameter(model.physics.beta_log[None, :])
               if len(model.physics.beta_names) else None)
    phi_m = tape.constant(model.phi_mean[None, :])
    phi_s = tape.constant(model.phi_std[None, :])
    prior = model.physics.prior

    def stage(head_id: int, delta: float) -> int:
        z = tape.apply("concat", u_id, head_id, delayed[delta])
        x_phys = bridge.state_to_physical_on_tape(tape, head_id)
        if model.constitutive_override is not None:
            phi_val = model.constitutive_override(times + delta,
                                                  tape.values[x_phys], u_phys)
            phi = tape.constant(np.asarray(phi_val, dtype=float))
        else:
            raw = mlp_on_tape(tape, model.mlp_spec, layer_ids, z)
            phi = tape.apply("add", tape.apply("mul", raw, phi_s), phi_m)
        if prior.is_unit:
            theta = phi
        else:
            p = prior.on_tape(tape, x_phys, u_phys)
            op = "mul" if model.prior_combination == "multiplicative" else "add"
            theta = tape.apply(op, p, phi)
        return bridge.rhs_norm_on_tape(tape, x_phys, u_phys, theta, beta_id)

    k1 = stage(x_t, 0.0)
    _check_stage(tape, k1, 1)
    k2 = stage(tape.apply("add", x_t, tape.apply("scale", k1, aux=0.5 * h)), 0.5 * h)
    _check_stage(tape, k2, 2)
    k3 = stage(tape.apply("add", x_t, tape.apply("scale", k2, aux=0.5 * h)), 0.5 * h)
    _check_stage(tape, k3, 3)
    k4 = stage(tape.apply("add", x_t, tape.apply("scale", k3, aux=h)), h)
    _check_stage(tape, k4, 4)

    incr = tape.apply("add",
                      tape.apply("add", k1, tape.apply("scale", k2, aux=2.0)),
                      tape.apply("add", tape.apply("scale", k3, aux=2.0), k4))
    return tape.apply("add", x_t, tape.apply("scale", incr, aux=h / 6.0))


def _forward_bb(tape: Tape, model: BBAnnModel, data: np.ndarray,
                idx: np.ndarray) -> int:
    spec = model.embedding
    z_val = np.concatenate([data[idx], delayed_blocks(data, idx, spec, 0.0)],
                           axis=1)
    layer_ids = register_mlp(tape, model.mlp_params)
    return mlp_on_tape(tape, model.mlp_spec, layer_ids, tape.constant(z_val))


def _forward(tape: Tape, model, data: np.ndarray, idx: np.ndarray,
             times: np.ndarray) -> int:
    if model.kind == "gb":
        return _forward_gb(tape, model, data, idx, times)
    return _forward_bb(tape, model, data, idx)


def predict_step(model, buffer: HistoryBuffer, t: float) -> np.ndarray:
    """One-step prediction x_hat(t + h) from recorded history at time t."""
    i = warm_index(buffer, model.embedding, t)
    tape = Tape()
    out = _forward(tape, model, buffer.rows, np.array([i]), np.array([t]))
    return tape.values[out][0].copy()


def batch_predictions(model, buffer: HistoryBuffer,
                      indices: np.ndarray) -> np.ndarray:
    """One-step predictions for many (warm) sample indices at once."""
    idx = np.asarray(indices, dtype=int)
    if np.any(idx < model.embedding.history_steps) or np.any(idx >= len(buffer)):
        raise ColdStartError(
            "batch contains indices without a full embedding window",
            earliest_feasible_t=buffer.t0
            + model.embedding.history_steps * buffer.t_s)
    times = buffer.t0 + idx * buffer.t_s
    tape = Tape()
    out = _forward(tape, model, buffer.rows, idx, times)
    return tape.values[out].copy()


def step_loss_and_grad(model, times, targets,
                       buffer: HistoryBuffer) -> tuple[float, np.ndarray]:
    """Mean-squared one-step error over a batch and its gradient.

    The gradient covers the network weights followed by the physics layer's
    trainable constants, matching the model's flat parameter layout.
    """
    times = np.asarray(times, dtype=float)
    idx = np.array([warm_index(buffer, model.embedding, t) for t in times])
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (len(times), model.embedding.n_states):
        raise ContractError(f"targets must be ({len(times)}, "
                            f"{model.embedding.n_states})")
    tape = Tape()
    out = _forward(tape, model, buffer.rows, idx, times)
    diff = tape.apply("sub", out, tape.constant(targets))
    loss = tape.apply("mean", tape.apply("mul", diff, diff))
    grad = loss_gradient(tape, loss)
    return float(tape.values[loss]), grad


def free_run(model, initial_history: HistoryBuffer, inputs,
             n_steps: int) -> np.ndarray:
    """Closed-loop rollout: predictions are fed back into the history.

    ``inputs[k]`` is u at the k-th predicted sample (normalized units).  The
    caller's buffer is never modified.  Aborts with the step index if the
    normalized state leaves [-1e6, 1e6] or turns non-finite.
    """
    spec = model.embedding
    if n_steps == 0:
        return np.zeros((0, spec.n_states))
    buffer = initial_history.copy()
    if len(buffer) < spec.history_steps + 1:
        raise ColdStartError(
            f"initial history has {len(buffer)} samples; warm-up needs "
            f"{spec.history_steps + 1}",
            earliest_feasible_t=buffer.t0 + spec.history_steps * buffer.t_s)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim == 1:
        inputs = inputs[:, None]
    if inputs.shape[0] < n_steps or inputs.shape[1] != spec.n_inputs:
        raise ContractError(f"inputs must supply {n_steps} rows of "
                            f"{spec.n_inputs} channels")

    preds = np.empty((n_steps, spec.n_states))
    t = buffer.t_last
    for k in range(n_steps):
        try:
            x = predict_step(model, buffer, t)
        except DivergenceError as exc:
            raise DivergenceError(f"rollout diverged at step {k}: {exc}",
                                  step_index=k, stage=exc.stage) from exc
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            raise DivergenceError(
                f"rollout diverged at step {k} (|x| > {DIVERGENCE_LIMIT:g})",
                step_index=k)
        preds[k] = x
        buffer.append(np.concatenate([inputs[k], x]))
        t += spec.t_s
    return preds


# -- model files ---------------------------------------------------------
#
# One self-describing plain-text file: embedding spec, normalizer, physics
# constants and trainable beta, prior, and the network checkpoint.


def _fmt(v: float) -> str:
    return repr(float(v))


def save_model(path, model) -> None:
    lines = ["greybox-model v1", f"kind {model.kind}"]
    spec = model.embedding
    lines.append(f"embedding {_fmt(spec.delay)} {spec.dimension} "
                 f"{spec.n_states} {spec.n_inputs} {_fmt(spec.t_s)}")
    norm = model.normalizer
    lines.append(f"normalizer {len(norm.names)}")
    for name, mu, sd in zip(norm.names, norm.mean, norm.std):
        lines.append(f"{name} {_fmt(mu)} {_fmt(sd)}")
    if model.kind == "gb":
        phys = model.physics
        alpha = " ".join(f"{k}={_fmt(v)}" for k, v in phys.alpha().items())
        lines.append(f"physics {phys.kind} {alpha}")
        lines.append(f"beta {len(phys.beta_names)}")
        for name, logv in zip(phys.beta_names, phys.beta_log):
            lines.append(f"{name} {_fmt(logv)}")
        prior = phys.prior
        const = " ".join(_fmt(c) for c in prior.constants())
        lines.append(f"prior {prior.kind}{(' ' + const) if const else ''}")
        lines.append(f"prior_combination {model.prior_combination}")
        lines.append("phi " + " ".join(_fmt(v) for v in model.phi_mean)
                     + " / " + " ".join(_fmt(v) for v in model.phi_std))
    dims = (model.mlp_spec.input_dim, *model.mlp_spec.hidden_layers,
            model.mlp_spec.output_dim)
    lines.append("mlp " + " ".join(str(d) for d in dims))
    lines.extend(_fmt(v) for v in model.mlp_params.flatten())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path):
    from .train import Normalizer  # deferred: train imports this module

    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0] != "greybox-model v1":
        raise ContractError(f"{path}: not a model file")
    it = iter(text[1:])

    def expect(key: str) -> list[str]:
        line = next(it).split()
        if line[0] != key:
            raise ContractError(f"{path}: expected '{key}', got '{line[0]}'")
        return line[1:]

    kind = expect("kind")[0]
    e = expect("embedding")
    spec = EmbeddingSpec(float(e[0]), int(e[1]), int(e[2]), int(e[3]),
                         float(e[4]))
    n_chan = int(expect("normalizer")[0])
    names, means, stds = [], [], []
    for _ in range(n_chan):
        name, mu, sd = next(it).split()
        names.append(name)
        means.append(float(mu))
        stds.append(float(sd))
    normalizer = Normalizer(tuple(names), np.array(means), np.array(stds))

    if kind == "gb":
        fields = expect("physics")
        phys_cls = PHYSICS_KINDS[fields[0]]
        alpha = dict(kv.split("=") for kv in fields[1:])
        physics = phys_cls(**{k: float(v) for k, v in alpha.items()})
        n_beta = int(expect("beta")[0])
        beta_log = []
        for _ in range(n_beta):
            _, logv = next(it).split()
            beta_log.append(float(logv))
        if n_beta:
            physics.set_beta_log(np.array(beta_log))
        prior_fields = expect("prior")
        if prior_fields[0] == "unit":
            physics.prior = UnitPrior(physics.n_constitutive)
        else:
            physics.prior = PhenomPriors(*(float(v) for v in prior_fields[1:]))
        combination = expect("prior_combination")[0]
        phi_fields = expect("phi")
        sep = phi_fields.index("/")
        phi_mean = np.array([float(v) for v in phi_fields[:sep]])
        phi_std = np.array([float(v) for v in phi_fields[sep + 1:]])

    dims = [int(d) for d in expect("mlp")]
    mlp_spec = MlpSpec(dims[0], tuple(dims[1:-1]), dims[-1])
    flat = np.array([float(line) for line in it if line.strip()])
    mlp_params = MlpParams.unflatten(mlp_spec, flat)

    if kind == "gb":
        return GBAnnModel(mlp_spec, mlp_params, physics, spec, normalizer,
                          phi_mean, phi_std, combination)
    return BBAnnModel(mlp_spec, mlp_params, spec, normalizer)
