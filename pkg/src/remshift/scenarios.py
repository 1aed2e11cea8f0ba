"""The simulation scenario with global, node, dyadic and endogenous effects.

Intensity for ``s != r``::

    lambda0 * exp{t + b1 x_s + b2 |x_s - x_r| + b_rep rep_sr(t) + b0 wave(t)}

with ``x_s ~ Normal(node_mean, node_sd)`` and ``wave`` a periodic square
wave.  The wave is a configurable stand-in: period, levels and duty cycle
default to ``horizon_guess / 10``, ``(0, 1)`` and ``0.5``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .endostats import RepetitionIndicator
from .errors import ConfigurationError, check_keys
from .events import NO_SELF_LOOPS, CovariateCatalog, IntensitySpec
from .simulate import TauLeapConfig, default_tau, make_rng, simulate_tau_leap, spawn_seeds

SENDER = "sender.x"
DYADIC = "x_sr"
REPETITION = "rep"
WAVE = "wave"


class SquareWave:
    """Left-continuous periodic two-level step function.

    On ``(k P, k P + duty P]`` the value is ``levels[1]``; on the rest of each
    period it is ``levels[0]``.
    """

    def __init__(self, period, levels=(0.0, 1.0), duty=0.5):
        if not period > 0:
            raise ConfigurationError("wave period must be positive")
        self.period = float(period)
        self.low, self.high = (float(v) for v in levels)
        self.duty = float(duty)

    def __call__(self, t):
        u = np.asarray(t, dtype=float) / self.period
        frac = u - np.ceil(u) + 1.0
        return np.where(frac <= self.duty, self.high, self.low)

    def __repr__(self):
        return f"SquareWave(period={self.period:g}, levels=({self.low:g}, {self.high:g}), duty={self.duty:g})"


def identity_time(t):
    return np.asarray(t, dtype=float)


@dataclass(frozen=True)
class Scenario:
    p: int = 15
    n: int = 3000
    beta_sender: float = 0.5
    beta_dyadic: float = -1.0
    beta_rep: float = 1.5
    beta_global: float = -0.7
    lambda0: float = 1.0
    node_mean: float = 5.0
    node_sd: float = 1.0
    wave_period: float | None = None
    wave_levels: tuple = (0.0, 1.0)
    wave_duty: float = 0.5
    tau: float | None = None

    @classmethod
    def from_dict(cls, d):
        check_keys(cls, d, "scenario")
        d = dict(d)
        if "wave_levels" in d:
            d["wave_levels"] = tuple(d["wave_levels"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["wave_levels"] = list(self.wave_levels)
        return d

    def true_coefficients(self):
        return {SENDER: self.beta_sender, DYADIC: self.beta_dyadic,
                REPETITION: self.beta_rep, WAVE: self.beta_global}


@dataclass
class ScenarioInstance:
    scenario: Scenario
    spec: IntensitySpec
    catalog: CovariateCatalog
    tau_config: TauLeapConfig
    horizon_guess: float


def horizon_guess(sc, x):
    """Time by which ``n`` events are expected, treating repetition as switched on."""
    d = np.abs(x[:, None] - x[None, :])
    static = sc.beta_sender * x[:, None] + sc.beta_dyadic * d + sc.beta_rep
    np.fill_diagonal(static, -np.inf)
    lo, hi = sc.wave_levels
    wave = sc.wave_duty * math.exp(sc.beta_global * hi) + (1 - sc.wave_duty) * math.exp(sc.beta_global * lo)
    total = sc.lambda0 * np.exp(static).sum() * wave
    # integral of exp(t) over [0, T] equals n / total
    return math.log1p(sc.n / total)


def build_scenario(sc, seed=0):
    """Draw node attributes and assemble spec, catalog and leap settings."""
    rng = make_rng(seed)
    x = rng.normal(sc.node_mean, sc.node_sd, size=sc.p)
    t_guess = horizon_guess(sc, x)
    period = sc.wave_period or t_guess / 10.0
    catalog = CovariateCatalog(
        node_count=sc.p,
        global_series={WAVE: SquareWave(period, sc.wave_levels, sc.wave_duty)},
        node_attrs={"x": x},
        dyadic_attrs={DYADIC: np.abs(x[:, None] - x[None, :])},
        endogenous={REPETITION: RepetitionIndicator()},
    )
    spec = IntensitySpec(
        lambda0=sc.lambda0,
        linear_terms=((SENDER, sc.beta_sender), (DYADIC, sc.beta_dyadic),
                      (REPETITION, sc.beta_rep), (WAVE, sc.beta_global)),
        global_time_effect=identity_time,
        risk_policy=NO_SELF_LOOPS,
    )
    tau = sc.tau or default_tau(t_guess, sc.n)
    return ScenarioInstance(sc, spec, catalog, TauLeapConfig(tau=tau, target_events=sc.n), t_guess)


def simulate_scenario(sc, seed=0):
    """Build the scenario and simulate it; returns ``(EventSequence, ScenarioInstance)``.

    ``seed`` is split into independent streams for the node attributes and
    the event simulation.
    """
    cat_seed, sim_seed = spawn_seeds(seed, 2)
    inst = build_scenario(sc, cat_seed)
    seq = simulate_tau_leap(inst.spec, inst.catalog, inst.tau_config, seed=sim_seed)
    return seq, inst
