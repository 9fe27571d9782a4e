"""Ground-truth data generation for the two case-study reactors.

Both systems integrate with fixed-step RK4 at ``substeps`` sub-intervals per
sampling interval (inputs held constant across each interval), which makes
dataset generation a pure, platform-independent function of (params, seed).
Hidden states (enzyme for the stirred tank; enzymes and mRNAs for the
bioreactor) are carried in the output series with role ``"hidden"`` so the
dataset loader can keep them away from training code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError, NumericError
from .rng import SplitMix64
from .series import TimeSeries

_NEGATIVE_TOL = -1e-9


@dataclass(frozen=True)
class MMTruthParams:
    """Stirred-tank constants: inlet substrate, residence time, and the
    enzyme-kinetics turnover/half-saturation pair."""

    inlet_substrate: float = 3.0e-2   # mol/L
    residence_time: float = 20.0      # s
    k_cat: float = 0.14               # 1/s
    k_m: float = 1.5e-2               # mol/L

    def __post_init__(self):
        if min(self.inlet_substrate, self.residence_time,
               self.k_cat, self.k_m) <= 0:
            raise ContractError("all stirred-tank constants must be positive")


@dataclass(frozen=True)
class BioTruthParams:
    """Mechanistic chemostat constants (macroscopic balances plus the
    intracellular enzyme/mRNA cascade driven by the light input)."""

    dilution: float = 0.05            # 1/h
    inlet_nutrient: float = 20.0      # g/L
    yield_x: float = 0.435
    yield_a: float = 0.607
    yield_b: float = 0.3
    mu_max: float = 0.22              # 1/h
    k_s: float = 1.03                 # g/L
    k_a: float = 7.12                 # g/L
    k_b: float = 0.712                # g/L
    k_eb: float = 0.5                 # 1/h
    enz_a_min: float = 0.0            # 1/h
    enz_a_max: float = 1.79           # 1/h
    k_sa: float = 1.68                # g/L
    k_aa: float = 14.0                # g/L
    enz_b_min: float = 0.0985         # 1/h
    enz_b_max: float = 0.448          # 1/h
    k_sb: float = 1.68                # g/L
    k_bb: float = 14.0                # g/L
    tau_enz_a: float = 5.0            # h
    tau_enz_b: float = 6.0            # h
    tau_mrna_a: float = 1.0           # h
    tau_mrna_b: float = 1.0           # h
    hill_a: float = 2.7
    hill_b: float = 2.3
    k_ha: float = 0.08
    k_hb: float = 0.30

    def __post_init__(self):
        if min(self.tau_enz_a, self.tau_enz_b,
               self.tau_mrna_a, self.tau_mrna_b) <= 0:
            raise ContractError("time constants must be positive")
        for y in (self.yield_x, self.yield_a, self.yield_b):
            if not 0 < y <= 1:
                raise ContractError("yields must lie in (0, 1]")


MM_STATE_NAMES = ("S", "E")
MM_OBSERVED = ("S",)
BIO_STATE_NAMES = ("X", "A", "B", "S", "E_A", "E_B", "R_A", "R_B")
BIO_OBSERVED = ("X", "A", "B", "S")


def mm_reaction_rate(s, e, p: MMTruthParams):
    """Enzymatic consumption rate k_cat*E*S/(K_M+S) (positive)."""
    return p.k_cat * e * s / (p.k_m + s)


def _mm_rhs(x, u, p: MMTruthParams):
    s, e = x
    rate = p.k_cat * e * s / (p.k_m + s)
    return ((p.inlet_substrate - s) / p.residence_time - rate,
            (u - e) / p.residence_time)


def bioreactor_rates(x, p: BioTruthParams):
    """Specific growth/production rates (mu, mu_A, mu_B); vectorized over
    leading axes of x (last axis indexes the 8 states)."""
    x = np.asarray(x, dtype=float)
    bio_a, bio_b = x[..., 1], x[..., 2]
    nutrient = x[..., 3]
    enz_a, enz_b = x[..., 4], x[..., 5]
    mu = (p.mu_max * nutrient
          * np.exp(-bio_a / p.k_a - bio_b / p.k_b - enz_b / p.k_eb)
          / (p.k_s + nutrient))
    mu_a = enz_a * nutrient * np.exp(-bio_a / p.k_aa) / (p.k_sa + nutrient)
    mu_b = enz_b * nutrient * np.exp(-bio_b / p.k_bb) / (p.k_sb + nutrient)
    return mu, mu_a, mu_b


def mrna_setpoints(u: float, p: BioTruthParams) -> tuple[float, float]:
    """Light-dependent mRNA production set-points (Hill response in u, 1-u)."""
    ua = u ** p.hill_a
    ub = (1.0 - u) ** p.hill_b
    r_a0 = p.enz_a_min + (p.enz_a_max - p.enz_a_min) * ua / (p.k_ha + ua)
    r_b0 = p.enz_b_min + (p.enz_b_max - p.enz_b_min) * ub / (p.k_hb + ub)
    return r_a0, r_b0


def _bio_rhs(x, u, p: BioTruthParams):
    biomass, bio_a, bio_b, nutrient, enz_a, enz_b, mrna_a, mrna_b = x
    mu = (p.mu_max * nutrient
          * math.exp(-bio_a / p.k_a - bio_b / p.k_b - enz_b / p.k_eb)
          / (p.k_s + nutrient))
    mu_a = enz_a * nutrient * math.exp(-bio_a / p.k_aa) / (p.k_sa + nutrient)
    mu_b = enz_b * nutrient * math.exp(-bio_b / p.k_bb) / (p.k_sb + nutrient)
    r_a0, r_b0 = mrna_setpoints(u, p)
    d = p.dilution
    return (
        (mu - d) * biomass,
        mu_a * biomass - d * bio_a,
        mu_b * biomass - d * bio_b,
        (p.inlet_nutrient - nutrient) * d
        - (mu / p.yield_x + mu_a / p.yield_a + mu_b / p.yield_b) * biomass,
        -(enz_a - mrna_a) / p.tau_enz_a,
        -(enz_b - mrna_b) / p.tau_enz_b,
        -(mrna_a - r_a0) / p.tau_mrna_a,
        -(mrna_b - r_b0) / p.tau_mrna_b,
    )


_SYSTEMS = {
    "mm": (_mm_rhs, MM_STATE_NAMES, MM_OBSERVED,
           lambda u: u >= 0.0),
    "bioreactor": (_bio_rhs, BIO_STATE_NAMES, BIO_OBSERVED,
                   lambda u: 0.0 <= u <= 1.0),
}


def _rk4_span(rhs, x, u, p, h, substeps):
    """Advance one sampling interval with `substeps` RK4 steps, u held."""
    hs = h / substeps
    for _ in range(substeps):
        k1 = rhs(x, u, p)
        x2 = tuple(xi + 0.5 * hs * ki for xi, ki in zip(x, k1))
        k2 = rhs(x2, u, p)
        x3 = tuple(xi + 0.5 * hs * ki for xi, ki in zip(x, k2))
        k3 = rhs(x3, u, p)
        x4 = tuple(xi + hs * ki for xi, ki in zip(x, k3))
        k4 = rhs(x4, u, p)
        x = tuple(xi + hs / 6.0 * (a + 2 * b + 2 * c + d)
                  for xi, a, b, c, d in zip(x, k1, k2, k3, k4))
        low = min(x)
        if low < 0.0:
            if low < _NEGATIVE_TOL:
                raise NumericError(
                    f"state went negative ({low:.3e}): model violation")
            x = tuple(max(xi, 0.0) for xi in x)
    return x


def integrate_truth(system: str, params, x0, inputs, t_span: float,
                    t_s: float, substeps: int = 100,
                    t0: float = 0.0) -> TimeSeries:
    """Simulate the ground-truth model and sample it on the t_s grid.

    Returns every state channel plus the input; observed states carry role
    "x" and the rest "hidden".  ``inputs`` provides u at each sample; it is
    held constant over each interval.
    """
    if system not in _SYSTEMS:
        raise ContractError(f"unknown system {system!r}")
    rhs, state_names, observed, u_ok = _SYSTEMS[system]
    n = round(t_span / t_s)
    if abs(n * t_s - t_span) > 1e-9 * max(1.0, t_span):
        raise ContractError("t_span must be a multiple of t_s")
    if n < 1:
        raise ContractError("t_span must cover at least one sample")
    inputs = np.asarray(inputs, dtype=float).reshape(-1)
    if len(inputs) < n:
        raise ContractError(f"need {n} input samples, got {len(inputs)}")
    x0 = tuple(float(v) for v in np.asarray(x0, dtype=float))
    if len(x0) != len(state_names):
        raise ContractError(f"x0 must have {len(state_names)} entries")
    if min(x0) < 0:
        raise ContractError("initial state must be non-negative")
    for u in inputs[:n]:
        if not u_ok(u):
            raise ContractError(f"input value {u} outside the physical range")

    hidden = [nm for nm in state_names if nm not in observed]
    # Observed states first so the series keeps the u, x, hidden layout.
    col_names = [*observed, *hidden]
    order = [state_names.index(nm) for nm in col_names]

    out = np.empty((n, 1 + len(state_names)))
    x = x0
    for i in range(n):
        out[i, 0] = inputs[i]
        out[i, 1:] = [x[j] for j in order]
        if i < n - 1:
            x = _rk4_span(rhs, x, float(inputs[i]), params, t_s, substeps)

    names = ("u", *col_names)
    roles = ("u", *("x" for _ in observed), *("hidden" for _ in hidden))
    return TimeSeries(t0, t_s, names, roles, out)


@lru_cache(maxsize=8)
def bioreactor_steady_state(params: BioTruthParams, u: float = 0.5,
                            t_relax: float = 3000.0,
                            substeps: int = 10) -> tuple[float, ...]:
    """Operating point under constant light, found by long pre-integration.

    3000 h is ~150 residence times, far past any transient.
    """
    x = (1.0, 1.0, 1.0, 10.0, 0.5, 0.2, 0.5, 0.2)
    steps = int(round(t_relax))
    for _ in range(steps):
        x = _rk4_span(_bio_rhs, x, u, params, 1.0, substeps)
    return x


# -- input signals -------------------------------------------------------


@dataclass(frozen=True)
class StepSignal:
    """Random piecewise-constant input: amplitude then hold duration are
    drawn per segment from the given ranges (amplitude first)."""

    seed: int
    hold_range: tuple[float, float]
    amplitude_range: tuple[float, float]
    duration: float
    t_s: float = 1.0

    def __post_init__(self):
        lo, hi = self.hold_range
        if lo > hi or lo < self.t_s:
            raise ContractError("hold durations must be >= one sampling interval")
        lo, hi = self.amplitude_range
        if lo > hi:
            raise ContractError("amplitude_range must be (lo, hi) with lo <= hi")
        if self.duration <= 0:
            raise ContractError("duration must be positive")


def make_step_signal(sig: StepSignal) -> np.ndarray:
    """Deterministic in `sig.seed`; hold lengths are rounded to the grid."""
    n = round(sig.duration / sig.t_s)
    rng = SplitMix64(sig.seed)
    out = np.empty(n)
    i = 0
    while i < n:
        amp = rng.uniform(*sig.amplitude_range)
        hold = rng.uniform(*sig.hold_range)
        steps = max(1, round(hold / sig.t_s))
        out[i:i + steps] = amp
        i += steps
    return out


def make_chirp_signal(base: float, amplitude: float, f0: float, f1: float,
                      duration: float, t_s: float = 1.0) -> np.ndarray:
    """Sinusoid with instantaneous frequency sweeping linearly f0 -> f1."""
    if base - abs(amplitude) < 0:
        raise ContractError("base - |amplitude| must be >= 0 (physical input)")
    n = round(duration / t_s)
    t = t_s * np.arange(n)
    phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * duration))
    return base + amplitude * np.sin(phase)
