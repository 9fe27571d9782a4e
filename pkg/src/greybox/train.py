"""Normalization, dataset assembly, training loops, and the sweep runner.

Series are normalized per channel to zero mean and unit variance using
statistics from the training split only.  Supervised pairs map sample i to
sample i+1; a pair is usable only when its whole embedding window lies
inside the same contiguous region, so no window ever crosses the
train/validation boundary.  ``run_experiment`` replicates the full
train/evaluate cycle over (variant x training size x replication) and writes
per-run rows, per-cell medians, and per-run loss histories as CSV.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbeddingSpec, HistoryBuffer
from .errors import ContractError, DivergenceError, TrainingFailure
from .nncore import AdamState, adam_step
from .rkmodel import batch_predictions, free_run, step_loss_and_grad
from .rng import SplitMix64, derive_seed
from .series import TimeSeries

RESULT_COLUMNS = ("system", "variant", "n_train", "replication", "seed",
                  "offline_mse", "online_mse", "diverged", "beta_names",
                  "beta_values", "wall_time_s")


@dataclass
class Normalizer:
    """Per-channel affine transform to zero mean, unit (population) variance."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, names) -> "Normalizer":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[0] < 2:
            raise ContractError("need a 2-D array with at least two samples")
        if data.shape[1] != len(names):
            raise ContractError("one name per channel required")
        mean = data.mean(axis=0)
        std = data.std(axis=0)  # population convention
        for j, s in enumerate(std):
            if s <= 1e-12 * max(1.0, abs(mean[j])):
                raise ContractError(
                    f"channel {names[j]!r} has zero variance; cannot normalize")
        return cls(tuple(names), mean, std)

    def normalize(self, arr: np.ndarray) -> np.ndarray:
        return (np.asarray(arr, dtype=float) - self.mean) / self.std

    def denormalize(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr, dtype=float) * self.std + self.mean


def fit_normalizer(train_split: np.ndarray, names) -> Normalizer:
    return Normalizer.fit(train_split, names)


@dataclass
class Dataset:
    """Normalized series plus the usable supervised pairs per region."""

    series: TimeSeries
    normalizer: Normalizer
    embedding: EmbeddingSpec
    split_index: int
    train_pairs: np.ndarray
    val_pairs: np.ndarray

    @classmethod
    def build(cls, raw: TimeSeries, embedding: EmbeddingSpec,
              train_fraction: float = 2.0 / 3.0) -> "Dataset":
        raw = raw.drop_hidden()
        if raw.n_inputs != embedding.n_inputs or raw.n_states != embedding.n_states:
            raise ContractError("series channel layout does not match embedding")
        if abs(raw.t_s - embedding.t_s) > 1e-9 * max(1.0, embedding.t_s):
            raise ContractError("series sampling interval does not match embedding")
        n = len(raw)
        split = int(n * train_fraction)
        warm = embedding.history_steps
        if split - warm < 2 or n - split - warm < 2:
            raise ContractError("series too short for the requested split")
        normalizer = Normalizer.fit(raw.data[:split], raw.names)
        norm_series = TimeSeries(raw.t0, raw.t_s, raw.names, raw.roles,
                                 normalizer.normalize(raw.data))
        train_pairs = np.arange(warm, split - 1)
        val_pairs = np.arange(split + warm, n - 1)
        return cls(norm_series, normalizer, embedding, split,
                   train_pairs, val_pairs)

    def pair_times(self, pairs: np.ndarray) -> np.ndarray:
        return self.series.t0 + np.asarray(pairs) * self.series.t_s

    def pair_targets(self, pairs: np.ndarray) -> np.ndarray:
        m = self.embedding.n_inputs
        return self.series.data[np.asarray(pairs) + 1, m:]

    def full_buffer(self) -> HistoryBuffer:
        return HistoryBuffer.from_array(self.series.t0, self.series.t_s,
                                        self.series.data)

    def train_buffer(self) -> HistoryBuffer:
        return HistoryBuffer.from_array(self.series.t0, self.series.t_s,
                                        self.series.data[:self.split_index])


def _resolve_pairs(dataset: Dataset, region) -> np.ndarray:
    if isinstance(region, str):
        if region == "train":
            return dataset.train_pairs
        if region == "val":
            return dataset.val_pairs
        raise ContractError(f"unknown region {region!r}")
    return np.asarray(region, dtype=int)


def evaluate_offline(model, dataset: Dataset, region="val") -> float:
    """One-step-ahead MSE (normalized units) over a region's pairs."""
    pairs = _resolve_pairs(dataset, region)
    if len(pairs) == 0:
        raise ContractError("region has no usable pairs")
    preds = batch_predictions(model, dataset.full_buffer(), pairs)
    err = preds - dataset.pair_targets(pairs)
    return float(np.mean(err * err))


def evaluate_online(model, dataset: Dataset, region="val") -> tuple[float, bool]:
    """Free-run MSE over a region; divergent rollouts score +inf.

    The first warm-up samples of the region seed the history; the rollout
    then sees only the recorded inputs.
    """
    data = dataset.series.data
    m = dataset.embedding.n_inputs
    warm = dataset.embedding.history_steps
    if region == "val":
        start, end = dataset.split_index, len(data)
    elif region == "train":
        start, end = 0, dataset.split_index
    else:
        raise ContractError(f"unknown region {region!r}")
    seg = data[start:end]
    if len(seg) < warm + 2:
        raise ContractError("region too short for a free run")
    t0 = dataset.series.t0 + start * dataset.series.t_s
    history = HistoryBuffer.from_array(t0, dataset.series.t_s, seg[:warm + 1])
    n_steps = len(seg) - warm - 1
    try:
        preds = free_run(model, history, seg[warm + 1:, :m], n_steps)
    except DivergenceError:
        return float("inf"), True
    err = preds - seg[warm + 1:, m:]
    return float(np.mean(err * err)), False


def train_model(system, variant: str, dataset: Dataset, n_train: int,
                epochs: int, seed: int, batch_size: int = 50,
                step_size: float = 1e-3):
    """Train one model variant on the first n_train training pairs.

    Mini-batches are reshuffled every epoch from a seed-derived stream (the
    last partial batch is kept).  The returned loss history holds the
    training-pair MSE recomputed after each epoch.
    """
    if n_train < 1 or n_train > len(dataset.train_pairs):
        raise ContractError(
            f"n_train={n_train} outside [1, {len(dataset.train_pairs)}]")
    model = system.build_model(variant, dataset, seed)
    if epochs == 0:
        return model, []

    pairs = dataset.train_pairs[:n_train].copy()
    buffer = dataset.train_buffer()
    rng = SplitMix64(derive_seed(seed, "shuffle"))
    flat = model.get_flat()
    state = AdamState.fresh(len(flat), step_size=step_size)
    history = []
    for epoch in range(epochs):
        order = pairs.copy()
        rng.shuffle(order)
        for k in range(0, len(order), batch_size):
            batch = order[k:k + batch_size]
            loss, grad = step_loss_and_grad(
                model, dataset.pair_times(batch), dataset.pair_targets(batch),
                buffer)
            if not np.isfinite(loss):
                raise TrainingFailure(
                    f"loss became non-finite in epoch {epoch}", epoch=epoch)
            flat, state = adam_step(flat, grad, state)
            model.set_flat(flat)
        history.append(evaluate_offline(model, dataset, pairs))
    return model, history


@dataclass(frozen=True)
class ExperimentConfig:
    """Full recipe for a replication sweep."""

    system: str
    variants: tuple[str, ...]
    train_sizes: tuple[int, ...]
    replications: int
    epochs: int
    seed: int
    batch_size: int = 50
    step_size: float = 1e-3
    duration: float | None = None   # dataset length; system default if None
    data_seed: int | None = None    # derived from seed if None
    record_wall_time: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "train_sizes", tuple(int(s) for s in self.train_sizes))
        if self.replications < 1:
            raise ContractError("replication count must be >= 1")
        if not self.train_sizes or not self.variants:
            raise ContractError("need at least one variant and training size")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows_csv(path, columns, rows) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def run_experiment(config: ExperimentConfig, outdir) -> tuple[list, list]:
    """Run the sweep; returns (per-run rows, per-cell medians) and writes
    results.csv, medians.csv, and loss_<runid>.csv under outdir.

    Replication r uses the same derived seed across variants and sizes, so
    variants share identical network initializations run-for-run.  Failed
    runs are recorded with infinite error and never abort the sweep.
    """
    from .systems import get_system  # deferred: systems builds on this module

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    system = get_system(config.system)
    data_seed = (derive_seed(config.seed, "data")
                 if config.data_seed is None else config.data_seed)
    dataset = system.make_dataset(data_seed, duration=config.duration)
    for size in config.train_sizes:
        if size > len(dataset.train_pairs):
            raise ContractError(
                f"training size {size} exceeds available pairs "
                f"{len(dataset.train_pairs)}")

    rows = []
    for size in config.train_sizes:
        for variant in config.variants:
            for rep in range(config.replications):
                run_seed = derive_seed(config.seed, "rep", rep)
                started = time.perf_counter()
                beta_names, beta_values = (), ()
                history = []
                try:
                    model, history = train_model(
                        system, variant, dataset, size, config.epochs,
                        run_seed, config.batch_size, config.step_size)
                    offline = evaluate_offline(model, dataset, "val")
                    online, diverged = evaluate_online(model, dataset, "val")
                    if model.kind == "gb" and model.physics.beta_names:
                        beta_names = model.physics.beta_names
                        beta_values = tuple(model.physics.beta)
                except (TrainingFailure, DivergenceError):
                    offline, online, diverged = float("inf"), float("inf"), True
                wall = (time.perf_counter() - started
                        if config.record_wall_time else 0.0)
                rows.append({
                    "system": config.system,
                    "variant": variant,
                    "n_train": size,
                    "replication": rep,
                    "seed": run_seed,
                    "offline_mse": offline,
                    "online_mse": online,
                    "diverged": diverged,
                    "beta_names": ";".join(beta_names),
                    "beta_values": ";".join(repr(v) for v in beta_values),
                    "wall_time_s": wall,
                })
                run_id = f"{config.system}_{variant}_n{size}_r{rep}"
                write_rows_csv(outdir / f"loss_{run_id}.csv",
                               ("epoch", "loss"),
                               [{"epoch": e, "loss": v}
                                for e, v in enumerate(history)])

    medians = []
    for size in config.train_sizes:
        for variant in config.variants:
            cell = [r for r in rows
                    if r["variant"] == variant and r["n_train"] == size]
            medians.append({
                "system": config.system,
                "variant": variant,
                "n_train": size,
                "median_offline_mse": float(np.median([r["offline_mse"]
                                                       for r in cell])),
                "median_online_mse": float(np.median([r["online_mse"]
                                                      for r in cell])),
                "n_diverged": sum(1 for r in cell if r["diverged"]),
            })

    write_rows_csv(outdir / "results.csv", RESULT_COLUMNS, rows)
    write_rows_csv(outdir / "medians.csv",
                   ("system", "variant", "n_train", "median_offline_mse",
                    "median_online_mse", "n_diverged"), medians)
    return rows, medians
