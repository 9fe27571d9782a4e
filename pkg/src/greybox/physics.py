"""Conservation-law right-hand sides with learnable constitutive inputs.

A physics model computes xdot_c = g(x_c, u, theta | alpha, beta) in physical
units, where theta is the (prior-weighted) constitutive-law vector supplied
by the network, alpha are known constants, and beta are trainable positive
constants kept in log space so any unconstrained optimizer step preserves
positivity.  Two concrete models are provided: the stirred-tank substrate
balance (scalar state) and the four-species chemostat balance set.

Training operates on zero-mean/unit-variance data, so
:class:`NormalizedPhysics` rewrites any model for normalized coordinates via
the affine substitution x = sigma * x_norm + mu applied per channel, and
scales the returned rates by 1/sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError
from .nncore.tape import Tape


def _as_batch(arr, width: int, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(arr, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ContractError(f"{name} must have {width} channels, "
                            f"got shape {arr.shape}")
    return arr, single


class UnitPrior:
    """No phenomenological information: p = 1 for every constitutive channel."""

    kind = "unit"
    is_unit = True

    def __init__(self, n_outputs: int):
        self.n_outputs = n_outputs

    def evaluate(self, x_c, u) -> np.ndarray:
        x, single = _as_batch(x_c, np.asarray(x_c).shape[-1], "x_c")
        out = np.ones((x.shape[0], self.n_outputs))
        return out[0] if single else out

    def on_tape(self, tape: Tape, x_id: int, u_phys: np.ndarray) -> int:
        rows = tape.values[x_id].shape[0]
        return tape.constant(np.ones((rows, self.n_outputs)))

    def constants(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class PhenomPriors:
    """Approximate closed-form rate laws for the chemostat model.

    Deliberately crude: missing inhibition terms, shifted constants, and no
    intracellular dynamics; the network learns the multiplicative correction.
    """

    growth_gain: float = 0.18
    growth_inhib_a: float = 7.0
    growth_inhib_b: float = 7.0
    growth_denom_offset: float = 1.0
    prod_a_gain: float = 0.9
    prod_a_inhib: float = 10.0
    prod_a_half_sat: float = 1.5
    prod_b_gain: float = 0.25
    prod_b_inhib: float = 10.0
    prod_b_half_sat: float = 1.5

    kind = "phenom"
    is_unit = False
    n_outputs = 3

    def evaluate(self, x_c, u) -> np.ndarray:
        x, single = _as_batch(x_c, 4, "x_c")
        a, b, s = x[:, 1], x[:, 2], x[:, 3]
        p1 = (self.growth_gain
              * np.exp(-a / self.growth_inhib_a - b / self.growth_inhib_b)
              * s / (self.growth_denom_offset + b))
        p2 = (self.prod_a_gain * np.exp(-a / self.prod_a_inhib)
              * s / (self.prod_a_half_sat + s))
        p3 = (self.prod_b_gain * np.exp(-a / self.prod_b_inhib)
              * s / (self.prod_b_half_sat + s))
        out = np.stack([p1, p2, p3], axis=1)
        return out[0] if single else out

    def on_tape(self, tape: Tape, x_id: int, u_phys: np.ndarray) -> int:
        a = tape.apply("slice", x_id, aux=(1, 2))
        b = tape.apply("slice", x_id, aux=(2, 3))
        s = tape.apply("slice", x_id, aux=(3, 4))
        decay_ab = tape.apply("exp", tape.apply("neg", tape.apply(
            "add",
            tape.apply("scale", a, aux=1.0 / self.growth_inhib_a),
            tape.apply("scale", b, aux=1.0 / self.growth_inhib_b))))
        p1 = tape.apply("div",
                        tape.apply("scale",
                                   tape.apply("mul", decay_ab, s),
                                   aux=self.growth_gain),
                        tape.apply("addc", b, aux=self.growth_denom_offset))
        decay_a2 = tape.apply("exp", tape.apply(
            "scale", a, aux=-1.0 / self.prod_a_inhib))
        p2 = tape.apply("scale",
                        tape.apply("mul", decay_a2,
                                   tape.apply("hill", s,
                                              aux=(self.prod_a_half_sat, 1.0))),
                        aux=self.prod_a_gain)
        decay_a3 = tape.apply("exp", tape.apply(
            "scale", a, aux=-1.0 / self.prod_b_inhib))
        p3 = tape.apply("scale",
                        tape.apply("mul", decay_a3,
                                   tape.apply("hill", s,
                                              aux=(self.prod_b_half_sat, 1.0))),
                        aux=self.prod_b_gain)
        return tape.apply("concat", p1, p2, p3)

    def constants(self) -> tuple[float, ...]:
        return (self.growth_gain, self.growth_inhib_a, self.growth_inhib_b,
                self.growth_denom_offset, self.prod_a_gain, self.prod_a_inhib,
                self.prod_a_half_sat, self.prod_b_gain, self.prod_b_inhib,
                self.prod_b_half_sat)


class PhysicsModel:
    """Base class: fixed arities, named constants, trainable log-space beta."""

    kind: str = ""
    n_states: int = 0
    n_inputs: int = 0
    n_constitutive: int = 0
    beta_names: tuple[str, ...] = ()

    def __init__(self, prior=None):
        self.prior = prior if prior is not None else UnitPrior(self.n_constitutive)
        self.beta_log = np.zeros(len(self.beta_names))

    # -- trainable constants ---------------------------------------------

    @property
    def beta(self) -> np.ndarray:
        """Positivity-safe readback: beta = exp(beta_log)."""
        return np.exp(self.beta_log)

    def trainable_parameters(self) -> list[tuple[str, float]]:
        """Named log-space entries, in the stable optimizer order."""
        return [(name, float(v)) for name, v in zip(self.beta_names, self.beta_log)]

    def set_beta_log(self, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.beta_names),):
            raise ContractError(f"expected {len(self.beta_names)} beta entries")
        self.beta_log = values.copy()

    def alpha(self) -> dict[str, float]:
        raise NotImplementedError

    # -- evaluation --------------------------------------------------------

    def rhs(self, x_c, u, theta) -> np.ndarray:
        raise NotImplementedError

    def rhs_on_tape(self, tape: Tape, x_id: int, u_phys: np.ndarray,
                    theta_id: int, beta_id: int | None) -> int:
        raise NotImplementedError


class MMGrey(PhysicsModel):
    """Substrate balance of the stirred tank: inflow/outflow plus one
    unknown reaction-rate term entering additively."""

    kind = "mm"
    n_states = 1
    n_inputs = 1
    n_constitutive = 1
    beta_names = ()

    def __init__(self, residence_time: float = 20.0,
                 inlet_substrate: float = 3.0e-2, prior=None):
        if residence_time <= 0 or inlet_substrate <= 0:
            raise ContractError("residence_time and inlet_substrate must be > 0")
        super().__init__(prior)
        self.residence_time = residence_time
        self.inlet_substrate = inlet_substrate

    def alpha(self) -> dict[str, float]:
        return {"residence_time": self.residence_time,
                "inlet_substrate": self.inlet_substrate}

    def rhs(self, x_c, u, theta) -> np.ndarray:
        x, single = _as_batch(x_c, 1, "x_c")
        th, _ = _as_batch(theta, 1, "theta")
        out = (self.inlet_substrate - x) / self.residence_time + th
        return out[0] if single else out

    def rhs_on_tape(self, tape, x_id, u_phys, theta_id, beta_id=None):
        inflow = tape.apply(
            "scale",
            tape.apply("sub", tape.constant([[self.inlet_substrate]]), x_id),
            aux=1.0 / self.residence_time)
        return tape.apply("add", inflow, theta_id)


class BioGrey(PhysicsModel):
    """Four balance equations (biomass, two products, substrate) closed by
    three unknown specific rates; yield coefficients are trainable."""

    kind = "bioreactor"
    n_states = 4
    n_inputs = 1
    n_constitutive = 3
    beta_names = ("Y_X", "Y_A", "Y_B")

    def __init__(self, dilution: float = 0.05, inlet_nutrient: float = 20.0,
                 prior=None, beta_init: float = 0.5):
        if dilution <= 0 or inlet_nutrient <= 0:
            raise ContractError("dilution and inlet_nutrient must be > 0")
        super().__init__(prior)
        self.dilution = dilution
        self.inlet_nutrient = inlet_nutrient
        self.beta_log = np.log(np.full(3, beta_init))

    def alpha(self) -> dict[str, float]:
        return {"dilution": self.dilution, "inlet_nutrient": self.inlet_nutrient}

    def rhs(self, x_c, u, theta) -> np.ndarray:
        x, single = _as_batch(x_c, 4, "x_c")
        th, _ = _as_batch(theta, 3, "theta")
        biomass = x[:, :1]
        prod_a = x[:, 1:2]
        prod_b = x[:, 2:3]
        nutrient = x[:, 3:4]
        y = self.beta
        growth, rate_a, rate_b = th[:, :1], th[:, 1:2], th[:, 2:3]
        d = self.dilution
        r1 = (growth - d) * biomass
        r2 = rate_a * biomass - d * prod_a
        r3 = rate_b * biomass - d * prod_b
        r4 = ((self.inlet_nutrient - nutrient) * d
              - (growth / y[0] + rate_a / y[1] + rate_b / y[2]) * biomass)
        out = np.concatenate([r1, r2, r3, r4], axis=1)
        return out[0] if single else out

    def rhs_on_tape(self, tape, x_id, u_phys, theta_id, beta_id):
        biomass = tape.apply("slice", x_id, aux=(0, 1))
        prod_a = tape.apply("slice", x_id, aux=(1, 2))
        prod_b = tape.apply("slice", x_id, aux=(2, 3))
        nutrient = tape.apply("slice", x_id, aux=(3, 4))
        growth = tape.apply("slice", theta_id, aux=(0, 1))
        rate_a = tape.apply("slice", theta_id, aux=(1, 2))
        rate_b = tape.apply("slice", theta_id, aux=(2, 3))
        d = self.dilution

        yields = tape.apply("exp", beta_id)
        y1 = tape.apply("slice", yields, aux=(0, 1))
        y2 = tape.apply("slice", yields, aux=(1, 2))
        y3 = tape.apply("slice", yields, aux=(2, 3))

        r1 = tape.apply("mul", tape.apply("addc", growth, aux=-d), biomass)
        r2 = tape.apply("sub", tape.apply("mul", rate_a, biomass),
                        tape.apply("scale", prod_a, aux=d))
        r3 = tape.apply("sub", tape.apply("mul", rate_b, biomass),
                        tape.apply("scale", prod_b, aux=d))
        inflow = tape.apply(
            "scale",
            tape.apply("sub", tape.constant([[self.inlet_nutrient]]), nutrient),
            aux=d)
        consumption = tape.apply("add",
                                 tape.apply("add",
                                            tape.apply("div", growth, y1),
                                            tape.apply("div", rate_a, y2)),
                                 tape.apply("div", rate_b, y3))
        r4 = tape.apply("sub", inflow, tape.apply("mul", consumption, biomass))
        return tape.apply("concat", r1, r2, r3, r4)


PHYSICS_KINDS = {"mm": MMGrey, "bioreactor": BioGrey}
PRIOR_KINDS = {"unit": UnitPrior, "phenom": PhenomPriors}


def evaluate_g(model: PhysicsModel, x_c, u, theta) -> np.ndarray:
    """Conservation-law right-hand side in physical units.

    Checks arities and rejects non-finite inputs explicitly rather than
    letting NaN propagate silently.
    """
    x, single = _as_batch(x_c, model.n_states, "x_c")
    if model.n_inputs:
        uu, _ = _as_batch(u, model.n_inputs, "u")
    else:
        uu = u
    th, _ = _as_batch(theta, model.n_constitutive, "theta")
    for name, arr in (("x_c", x), ("theta", th)):
        if not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values in {name}")
    out = model.rhs(x, uu, th)
    return out[0] if single else out


def evaluate_prior(prior, x_c, u) -> np.ndarray:
    """Phenomenological prior p(x_c, u); the unit prior returns all ones."""
    return prior.evaluate(x_c, u)


def trainable_parameters(model: PhysicsModel) -> list[tuple[str, float]]:
    return model.trainable_parameters()


class NormalizedPhysics:
    """A physics model rewritten for zero-mean/unit-variance coordinates.

    Mechanically applies x = sigma_x * x_norm + mu_x before evaluating g and
    divides the result by sigma_x per channel, which is exactly the affine
    rescaling the normalized training data require.
    """

    def __init__(self, model: PhysicsModel, x_mean, x_std, u_mean, u_std):
        self.model = model
        self.x_mean = np.asarray(x_mean, dtype=float).reshape(1, -1)
        self.x_std = np.asarray(x_std, dtype=float).reshape(1, -1)
        self.u_mean = np.asarray(u_mean, dtype=float).reshape(1, -1)
        self.u_std = np.asarray(u_std, dtype=float).reshape(1, -1)
        if self.x_mean.shape[1] != model.n_states:
            raise ContractError("x_mean/x_std must match model.n_states")

    def state_to_physical(self, x_norm: np.ndarray) -> np.ndarray:
        return x_norm * self.x_std + self.x_mean

    def input_to_physical(self, u_norm: np.ndarray) -> np.ndarray:
        return u_norm * self.u_std + self.u_mean

    def rhs_norm(self, x_norm, u_phys, theta) -> np.ndarray:
        x, single = _as_batch(x_norm, self.model.n_states, "x_norm")
        out = self.model.rhs(self.state_to_physical(x), u_phys, theta) / self.x_std
        return out[0] if single else out

    def state_to_physical_on_tape(self, tape: Tape, x_norm_id: int) -> int:
        return tape.apply("add",
                          tape.apply("mul", x_norm_id, tape.constant(self.x_std)),
                          tape.constant(self.x_mean))

    def rhs_norm_on_tape(self, tape: Tape, x_phys_id: int, u_phys: np.ndarray,
                         theta_id: int, beta_id: int | None) -> int:
        g = self.model.rhs_on_tape(tape, x_phys_id, u_phys, theta_id, beta_id)
        return tape.apply("mul", g, tape.constant(1.0 / self.x_std))
