"""Synthetic multi-subgroup LDS panels with under-representation bias.

Random streams come from numpy's PCG64 bit generator. A root
``SeedSequence(seed)`` is spawned into one child per subgroup (in the
order of ``config.trajectories``) plus one final child for retention. Each
subgroup child spawns one covariance stream followed by one stream per
trajectory.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .lds import Panel

__all__ = ["GeneratorConfig", "Simulation", "simulate", "sample_panel", "annuity_premium"]

RNG_NAME = "numpy.PCG64/SeedSequence.spawn v1"


def _default_G():
    return [[0.99, 0.0], [1.0, 0.2]]


@dataclass
class GeneratorConfig:
    G: list = field(default_factory=_default_G)
    F: list = field(default_factory=lambda: [1.1, 0.8])
    V_range: tuple = (0.0, 1.0)
    W_range: tuple = (0.0, 0.1)
    m0: dict = field(default_factory=lambda: {"a": 5.0, "d": 7.0})
    T: int = 20
    trajectories: dict = field(default_factory=lambda: {"a": 2, "d": 2})
    beta_d: float = 0.5
    disadvantaged: str = "d"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        G = np.asarray(self.G, dtype=float)
        F = np.asarray(self.F, dtype=float).ravel()
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValueError("G must be a square matrix")
        if F.shape[0] != G.shape[0]:
            raise ValueError("F must have one entry per state dimension")
        for name, rng in (("V_range", self.V_range), ("W_range", self.W_range)):
            lo, hi = rng
            if not (0 <= lo < hi):
                raise ValueError(f"{name} must be a half-open interval [lo, hi) with 0 <= lo < hi")
        if not (0.0 <= float(self.beta_d) <= 1.0):
            raise ValueError(f"beta_d must lie in [0, 1], got {self.beta_d}")
        if int(self.T) != self.T or self.T < 1:
            raise ValueError("T must be a positive integer")
        if not self.trajectories:
            raise ValueError("at least one subgroup is required")
        for s, n in self.trajectories.items():
            if int(n) != n or n < 1:
                raise ValueError(f"trajectory count for {s!r} must be >= 1")
            if s not in self.m0:
                raise ValueError(f"no initial state for subgroup {s!r}")
        if self.disadvantaged not in self.trajectories:
            raise ValueError(f"disadvantaged subgroup {self.disadvantaged!r} is not generated")

    def initial_state(self, subgroup: str) -> np.ndarray:
        n = len(self.G)
        v = np.asarray(self.m0[subgroup], dtype=float).ravel()
        return np.full(n, v[0]) if v.size == 1 else v.copy()

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, payload: dict) -> "GeneratorConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown generator config keys {sorted(unknown)}")
        data = dict(payload)
        for key in ("V_range", "W_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class Simulation:
    """Full draw, kept for replay checks."""

    states: dict        # (s, i) -> (T+1, n) array, row 0 is m0
    process_noise: dict  # (s, i) -> (T, n)
    obs_noise: dict      # (s, i) -> (T,)
    observations: dict   # (s, i) -> (T,)
    covariances: dict    # s -> (V, W diagonal)
    retained: dict       # (s, i) -> (T,) bool


def simulate(config: GeneratorConfig) -> Simulation:
    config.validate()
    G = np.asarray(config.G, dtype=float)
    F = np.asarray(config.F, dtype=float).ravel()
    n, T = G.shape[0], int(config.T)
    subgroups = list(config.trajectories)
    root = np.random.SeedSequence(int(config.seed))
    children = root.spawn(len(subgroups) + 1)

    states, wn, vn, obs, cov = {}, {}, {}, {}, {}
    for s, child in zip(subgroups, children):
        count = int(config.trajectories[s])
        streams = child.spawn(count + 1)
        crng = np.random.Generator(np.random.PCG64(streams[0]))
        V = crng.uniform(*config.V_range)
        Wd = crng.uniform(*config.W_range, size=n)
        cov[s] = (V, Wd)
        for i in range(count):
            rng = np.random.Generator(np.random.PCG64(streams[i + 1]))
            w = rng.standard_normal((T, n)) * np.sqrt(Wd)
            v = rng.standard_normal(T) * np.sqrt(V)
            phi = np.empty((T + 1, n))
            phi[0] = config.initial_state(s)
            for t in range(1, T + 1):
                phi[t] = G @ phi[t - 1] + w[t - 1]
            key = (s, str(i))
            states[key], wn[key], vn[key] = phi, w, v
            obs[key] = phi[1:] @ F + v

    retained = {key: np.ones(T, dtype=bool) for key in obs}
    beta = float(config.beta_d)
    d_keys = [key for key in obs if key[0] == config.disadvantaged]
    if beta < 1.0:
        rrng = np.random.Generator(np.random.PCG64(children[-1]))
        for t in range(T):
            # redraw this period until the subgroup keeps at least one observation
            while True:
                keep = rrng.random(len(d_keys)) < beta
                if keep.any():
                    break
            for key, k in zip(d_keys, keep):
                retained[key][t] = k
    return Simulation(states, wn, vn, obs, cov, retained)


def sample_panel(config: GeneratorConfig) -> Panel:
    sim = simulate(config)
    records = []
    for (s, i), y in sim.observations.items():
        mask = sim.retained[(s, i)]
        records.extend((s, i, t + 1, float(y[t])) for t in range(len(y)) if mask[t])
    return Panel.from_records(records, subgroups=list(config.trajectories))


def annuity_premium(survivors, rate: float) -> float:
    """Pure premium of a 10-year annuity paying 1 at each year end to survivors."""
    p = np.asarray(survivors, dtype=float)
    if p.shape != (11,):
        raise ValueError("survivors must list p_0..p_10 (11 values)")
    if p[0] <= 0:
        raise ValueError("p_0 must be positive")
    if np.any(np.diff(p) > 0):
        raise ValueError("survivor counts must be nonincreasing")
    t = np.arange(1, 11)
    return float(np.sum(p[1:] * (1.0 + rate) ** (-t)) / p[0])
