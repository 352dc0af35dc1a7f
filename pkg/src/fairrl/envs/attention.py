"""Attention allocation over K locations with Poisson incidents.

Each step the agent splits N units across locations. Incidents at location k
are Poisson(rate_k); a unit discovers at most one incident. Rates rise by the
location's increase rate when it gets no attention and fall by
``decrease_rate * units`` otherwise, floored at zero.
"""

from dataclasses import dataclass

import numpy as np

from fairrl import fairness, kernels
from fairrl.envs.base import Environment
from fairrl.errors import ContractError


@dataclass
class AttentionConfig:
    n_locations: int = 5
    n_units: int = 6
    decrease_rate: float = 0.05
    increase_rates: tuple = None
    rates_seed: int = 0
    initial_rate: float = 1.0
    discover_weight: float = 1.0    # zeta_0
    miss_weight: float = 0.25       # zeta_1
    history: int = 8
    window: int = 100
    episode_length: int = 200

    def __post_init__(self):
        if self.n_locations < 2 or self.n_units < 1 or self.history < 1:
            raise ContractError("need K >= 2 locations, N >= 1 units and history >= 1")
        if self.increase_rates is None:
            # distinct values in [0.02, 0.1], fixed per rates_seed
            rng = np.random.default_rng(self.rates_seed)
            grid = np.linspace(0.02, 0.1, self.n_locations)
            self.increase_rates = tuple(float(x) for x in rng.permutation(grid))
        rates = np.asarray(self.increase_rates, dtype=np.float64)
        if rates.shape != (self.n_locations,) or np.any(rates <= 0):
            raise ContractError("increase rates must be positive, one per location")
        if self.decrease_rate <= 0 or self.initial_rate < 0:
            raise ContractError("decrease rate must be positive and initial rate non-negative")
        if self.window < 1 or self.episode_length < 1:
            raise ContractError("window and episode length must be positive")


def build_allocation(location_probs, n_units):
    """Assign units one at a time to the current argmax, discounting it by 1/N each time."""
    if n_units < 1:
        raise ContractError("need at least one unit")
    return kernels.build_allocation(location_probs, n_units)


def hadamard_ratio(found, incidents):
    """Elementwise found / incidents with 0/0 defined as 1."""
    found = np.asarray(found, dtype=np.float64)
    incidents = np.asarray(incidents, dtype=np.float64)
    out = np.ones_like(found)
    nz = incidents > 0
    out[nz] = found[nz] / incidents[nz]
    return out


def dp_gap(allocation_totals, n_units, n_steps):
    """Largest deviation of a location's unit share from 1/K."""
    if n_steps == 0:
        return 0.0
    shares = np.asarray(allocation_totals, dtype=np.float64) / (n_units * n_steps)
    return float(np.max(np.abs(shares - 1.0 / shares.shape[0])))


def rate_gap(values):
    """W1 between the normalized vector and the uniform distribution over locations."""
    v = np.asarray(values, dtype=np.float64)
    dist = fairness.normalize_counts(v)
    if dist is None:
        return 0.0
    k = v.shape[0]
    return fairness.wasserstein_1d(dist, np.full(k, 1.0 / k))


class AttentionEnv(Environment):
    name = "attention"
    default_schedule = fairness.ATTENTION_SCHEDULE
    default_reg_weight = 1.0
    default_delta = 0.05

    def __init__(self, config=None):
        self.config = config or AttentionConfig()
        c = self.config
        self.n_outputs = c.n_locations
        self.obs_dim = 4 * c.n_locations * c.history
        self.window = fairness.CohortWindow(c.window, 2 * c.n_locations)
        self._inc = np.asarray(c.increase_rates, dtype=np.float64)

    def reset(self, seed):
        c = self.config
        self.rng = np.random.default_rng(seed)
        self.rates = np.full(c.n_locations, c.initial_rate, dtype=np.float64)
        # rows: found, incidents, allocation, found/incidents
        self.hist = np.zeros((c.history, 4, c.n_locations))
        self.hist[:, 3, :] = 1.0
        self.max_count = 1.0
        self.window.clear()
        self.t = 0
        self._utility = 0.0
        return self.observe()

    def observe(self):
        c = self.config
        h = self.hist.copy()
        h[:, 0, :] /= self.max_count
        h[:, 1, :] /= self.max_count
        h[:, 2, :] /= c.n_units
        return h.ravel()

    # -- actions ---------------------------------------------------------
    def sample_action(self, probs, rng, greedy=False):
        if greedy:
            return build_allocation(probs, self.config.n_units)
        return rng.multinomial(self.config.n_units, probs).astype(np.int64)

    def action_counts(self, action):
        return np.asarray(action, dtype=np.float64)

    def _check_allocation(self, allocation):
        a = np.asarray(allocation)
        c = self.config
        if a.shape != (c.n_locations,) or np.any(a < 0) or int(a.sum()) != c.n_units:
            raise ContractError(f"allocation must be {c.n_locations} non-negative ints summing to {c.n_units}")
        return a.astype(np.int64)

    # -- fairness --------------------------------------------------------
    def _steps_after_push(self):
        return min(len(self.window) + 1, self.config.window)

    def short_term(self):
        k = self.config.n_locations
        return dp_gap(self.window.totals[:k], self.config.n_units, len(self.window))

    def short_term_if(self, allocation):
        k = self.config.n_locations
        rec = np.concatenate([allocation, np.zeros(k, dtype=np.int64)])
        totals = self.window.totals_with(rec)
        return dp_gap(totals[:k], self.config.n_units, self._steps_after_push())

    def long_term(self, mode="train"):
        if mode == "eval":
            return rate_gap(self.rates)
        k = self.config.n_locations
        return rate_gap(self.window.totals[k:])

    def massage(self, probs, allocation, threshold):
        """Move one unit between a location pair when that lowers the DP gap.

        A pair (k1, k2) qualifies if k1 holds a unit, ``|P(k1) - P(k2)| <
        threshold`` and the move strictly lowers the gap; the best qualifying
        pair wins (lowest indices on ties).
        """
        if threshold <= 0:
            return allocation, None
        allocation = self._check_allocation(allocation)
        best_bias = self.short_term_if(allocation)
        best = None
        k = self.config.n_locations
        for k1 in range(k):
            if allocation[k1] == 0:
                continue
            for k2 in range(k):
                if k2 == k1:
                    continue
                gap = abs(probs[k1] - probs[k2])
                if gap >= threshold:
                    continue
                cand = allocation.copy()
                cand[k1] -= 1
                cand[k2] += 1
                b = self.short_term_if(cand)
                if b < best_bias:
                    best_bias, best = b, (cand, float(gap))
        if best is None:
            return allocation, None
        return best

    # -- dynamics --------------------------------------------------------
    def step(self, allocation):
        c = self.config
        a = self._check_allocation(allocation)
        incidents = self.rng.poisson(self.rates).astype(np.int64)
        found = np.minimum(a, incidents)
        reward = c.discover_weight * found.sum() - c.miss_weight * (incidents - found).sum()
        rates_before = self.rates.copy()
        self.rates = np.where(a == 0, self.rates + self._inc, self.rates - c.decrease_rate * a)
        np.maximum(self.rates, 0.0, out=self.rates)
        self.hist[:-1] = self.hist[1:]
        self.hist[-1] = np.stack([found, incidents, a, hadamard_ratio(found, incidents)])
        self.max_count = max(self.max_count, float(incidents.max(initial=0)))
        self.window.push(np.concatenate([a, incidents]))
        self.t += 1
        self._utility += reward
        info = {
            "t": self.t - 1,
            "rates": rates_before,
            "incidents": incidents,
            "found": found,
            "allocation": a,
            "reward": float(reward),
        }
        return float(reward), info

    @property
    def done(self):
        return self.t >= self.config.episode_length
