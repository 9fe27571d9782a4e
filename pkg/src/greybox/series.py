"""Uniformly sampled multichannel time series and their on-disk format.

A series holds input channels (role ``"u"``), conserved-state channels
(role ``"x"``), and optionally hidden simulator states (role ``"hidden"``),
always in that column order.  The CSV format is one header row
``t,<name>,...`` followed by one row per sample with full-precision decimal
floats.  Channel roles and provenance live in a JSON sidecar next to the CSV
(``<name>.meta.json``); hidden channels are dropped on load unless
explicitly requested, so they can never leak into training code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError

_ROLE_ORDER = {"u": 0, "x": 1, "hidden": 2}


@dataclass
class TimeSeries:
    t0: float
    t_s: float
    names: tuple[str, ...]
    roles: tuple[str, ...]
    data: np.ndarray  # (T, C) float64

    def __post_init__(self):
        self.names = tuple(self.names)
        self.roles = tuple(self.roles)
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 2 or self.data.shape[1] != len(self.names):
            raise ContractError("data must be (T, C) with one column per name")
        if len(self.roles) != len(self.names):
            raise ContractError("one role per channel required")
        for role in self.roles:
            if role not in _ROLE_ORDER:
                raise ContractError(f"unknown channel role {role!r}")
        order = [_ROLE_ORDER[r] for r in self.roles]
        if order != sorted(order):
            raise ContractError("channels must be ordered u, x, hidden")
        if self.t_s <= 0:
            raise ContractError("sampling interval must be positive")

    # -- basic views ----------------------------------------------------

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def n_inputs(self) -> int:
        return sum(1 for r in self.roles if r == "u")

    @property
    def n_states(self) -> int:
        return sum(1 for r in self.roles if r == "x")

    @property
    def n_hidden(self) -> int:
        return sum(1 for r in self.roles if r == "hidden")

    def times(self) -> np.ndarray:
        return self.t0 + self.t_s * np.arange(len(self))

    def columns(self, role: str) -> np.ndarray:
        idx = [i for i, r in enumerate(self.roles) if r == role]
        return self.data[:, idx]

    def drop_hidden(self) -> "TimeSeries":
        keep = [i for i, r in enumerate(self.roles) if r != "hidden"]
        return TimeSeries(self.t0, self.t_s,
                          tuple(self.names[i] for i in keep),
                          tuple(self.roles[i] for i in keep),
                          self.data[:, keep].copy())

    # -- persistence ----------------------------------------------------

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write("t," + ",".join(self.names) + "\n")
            times = self.times()
            for i in range(len(self)):
                row = ",".join(repr(float(v)) for v in self.data[i])
                fh.write(f"{repr(float(times[i]))},{row}\n")

    def write_meta(self, csv_path, extra: dict | None = None) -> Path:
        meta_path = Path(str(csv_path) + ".meta.json")
        meta = {
            "t0": self.t0,
            "t_s": self.t_s,
            "channels": {name: role for name, role in zip(self.names, self.roles)},
        }
        if extra:
            meta.update(extra)
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
        return meta_path


def load_series(csv_path, include_hidden: bool = False,
                roles: dict[str, str] | None = None) -> TimeSeries:
    """Load a series CSV; hidden channels are dropped unless requested.

    Roles come from the sidecar ``<csv>.meta.json`` unless given explicitly.
    """
    csv_path = Path(csv_path)
    if roles is None:
        meta_path = Path(str(csv_path) + ".meta.json")
        if not meta_path.exists():
            raise ConfigError(f"missing sidecar {meta_path}; channel roles unknown")
        roles = json.loads(meta_path.read_text(encoding="utf-8"))["channels"]

    with csv_path.open("r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t":
            raise ConfigError(f"{csv_path}: first column must be 't'")
        names = header[1:]
        raw = np.loadtxt(fh, delimiter=",", ndmin=2)
    if raw.shape[1] != len(names) + 1:
        raise ConfigError(f"{csv_path}: column count does not match header")

    try:
        role_list = [roles[n] for n in names]
    except KeyError as exc:
        raise ConfigError(f"{csv_path}: no role recorded for channel {exc}") from exc

    t = raw[:, 0]
    if len(t) < 2:
        raise ConfigError(f"{csv_path}: need at least two samples")
    t_s = float(t[1] - t[0])
    if not np.allclose(np.diff(t), t_s, rtol=0, atol=1e-9 * max(t_s, 1.0)):
        raise ConfigError(f"{csv_path}: sampling is not uniform")

    series = TimeSeries(float(t[0]), t_s, tuple(names), tuple(role_list), raw[:, 1:])
    return series if include_hidden else series.drop_hidden()
