"""Command-line entry point: simulate, train, evaluate, experiment.

Every command is driven by a TOML config file (plus a few flags for the
simulate shortcut) and is a pure function of (config, seed): identical
invocations produce identical bytes on disk.  Unknown config keys are
rejected so typos cannot silently change an experiment.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError, GreyboxError
from .rkmodel import load_model, save_model
from .series import load_series
from .simulators import make_chirp_signal
from .systems import get_system
from .train import (Dataset, ExperimentConfig, evaluate_offline,
                    evaluate_online, run_experiment, train_model,
                    write_rows_csv)

_SCHEMA = {
    "simulate": {"system", "seed", "duration", "signal", "full_state",
                 "chirp_base", "chirp_amplitude", "chirp_f0", "chirp_f1"},
    "train": {"system", "variant", "dataset", "n_train", "epochs", "seed",
              "batch_size", "step_size"},
    "evaluate": {"model", "dataset", "region", "n_train"},
    "experiment": {"system", "variants", "train_sizes", "replications",
                   "epochs", "seed", "batch_size", "step_size", "duration",
                   "record_wall_time"},
}


def _load_config(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key in raw:
        if key not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{key}]")
    cfg = raw.get(section, {})
    unknown = set(cfg) - _SCHEMA[section]
    if unknown:
        raise ConfigError(f"{path}: unknown keys in [{section}]: "
                          f"{', '.join(sorted(unknown))}")
    return cfg


def _require(cfg: dict, key: str, section: str):
    if key not in cfg or cfg[key] is None:
        raise ConfigError(f"missing required key {key!r} in [{section}]")
    return cfg[key]


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, "simulate")
    if args.system:
        cfg["system"] = args.system
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.full_state:
        cfg["full_state"] = True
    system = get_system(_require(cfg, "system", "simulate"))
    seed = int(_require(cfg, "seed", "simulate"))
    duration = cfg.get("duration")
    signal = cfg.get("signal", "step")

    if signal == "step":
        series = system.simulate(seed, duration=duration)
    elif signal == "chirp":
        dur = duration if duration is not None else system.default_duration
        u = make_chirp_signal(cfg.get("chirp_base", 0.01),
                              cfg.get("chirp_amplitude", 0.008),
                              cfg.get("chirp_f0", 1.0 / 200.0),
                              cfg.get("chirp_f1", 1.0 / 20.0),
                              dur, system.embedding.t_s)
        series = system.simulate(seed, duration=dur, inputs=u)
    else:
        raise ConfigError(f"unknown signal kind {signal!r}")

    if not cfg.get("full_state", False):
        series = series.drop_hidden()
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{system.name}_data.csv"
    series.to_csv(csv_path)
    series.write_meta(csv_path, extra={
        "system": system.name,
        "seed": seed,
        "signal": signal,
        "duration": duration if duration is not None else system.default_duration,
        "truth_params": asdict(system.truth_params),
        "full_state": bool(cfg.get("full_state", False)),
    })
    _say(args, f"wrote {csv_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config, "train")
    if args.seed is not None:
        cfg["seed"] = args.seed
    system = get_system(_require(cfg, "system", "train"))
    variant = _require(cfg, "variant", "train")
    dataset_path = _require(cfg, "dataset", "train")
    seed = int(_require(cfg, "seed", "train"))
    epochs = int(cfg.get("epochs", system.default_epochs))

    series = load_series(dataset_path)
    dataset = Dataset.build(series, system.embedding)
    n_train = int(cfg.get("n_train", len(dataset.train_pairs)))
    model, history = train_model(system, variant, dataset, n_train, epochs,
                                 seed, batch_size=int(cfg.get("batch_size", 50)),
                                 step_size=float(cfg.get("step_size",
                                                          system.default_step_size)))

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    model_path = outdir / f"{system.name}_{variant}_model.txt"
    save_model(model_path, model)
    write_rows_csv(outdir / f"{system.name}_{variant}_loss.csv",
                   ("epoch", "loss"),
                   [{"epoch": e, "loss": v} for e, v in enumerate(history)])
    _say(args, f"wrote {model_path}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config, "evaluate")
    if args.model:
        cfg["model"] = args.model
    if args.dataset:
        cfg["dataset"] = args.dataset
    model_path = _require(cfg, "model", "evaluate")
    dataset_path = _require(cfg, "dataset", "evaluate")
    region = cfg.get("region", "val")

    model = load_model(model_path)
    series = load_series(dataset_path)
    dataset = Dataset.build(series, model.embedding)
    if region == "train" and "n_train" in cfg:
        pairs = dataset.train_pairs[:int(cfg["n_train"])]
        offline = evaluate_offline(model, dataset, pairs)
    else:
        offline = evaluate_offline(model, dataset, region)
    online, diverged = evaluate_online(
        model, dataset, region if region in ("train", "val") else "val")

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    metrics_path = outdir / "metrics.csv"
    write_rows_csv(metrics_path,
                   ("model", "dataset", "region", "offline_mse", "online_mse",
                    "diverged"),
                   [{"model": str(model_path), "dataset": str(dataset_path),
                     "region": region, "offline_mse": offline,
                     "online_mse": online, "diverged": diverged}])
    _say(args, f"wrote {metrics_path}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args.config, "experiment")
    if args.seed is not None:
        cfg["seed"] = args.seed
    system = get_system(_require(cfg, "system", "experiment"))
    config = ExperimentConfig(
        system=system.name,
        variants=tuple(cfg.get("variants", system.variants)),
        train_sizes=tuple(_require(cfg, "train_sizes", "experiment")),
        replications=int(cfg.get("replications", 1)),
        epochs=int(cfg.get("epochs", system.default_epochs)),
        seed=int(_require(cfg, "seed", "experiment")),
        batch_size=int(cfg.get("batch_size", 50)),
        step_size=float(cfg.get("step_size", system.default_step_size)),
        duration=cfg.get("duration"),
        record_wall_time=bool(cfg.get("record_wall_time", True)),
    )
    run_experiment(config, args.out)
    _say(args, f"wrote {Path(args.out) / 'results.csv'}")
    return 0


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, help="seed override")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="greybox",
        description="Grey-box system identification of partially observed "
                    "reactors: data generation, training, and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a ground-truth dataset CSV")
    _add_common(p)
    p.add_argument("--system", choices=("mm", "bioreactor"),
                   help="which reactor to simulate")
    p.add_argument("--full-state", action="store_true",
                   help="include hidden state channels in the CSV")

    p = sub.add_parser("train", help="train one model variant on a dataset")
    _add_common(p)

    p = sub.add_parser("evaluate", help="off-line/on-line metrics for a model")
    _add_common(p)
    p.add_argument("--model", help="model file (overrides config)")
    p.add_argument("--dataset", help="dataset CSV (overrides config)")

    p = sub.add_parser("experiment", help="replication sweep to results CSV")
    _add_common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"simulate": cmd_simulate, "train": cmd_train,
                "evaluate": cmd_evaluate, "experiment": cmd_experiment}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GreyboxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
