"""Rule-based reference agents.

``greedy_attention`` stands in for a constrained-policy-optimization agent; it
is a plain heuristic and is labelled as such in every output.
"""

import numpy as np

from fairrl.envs.attention import AttentionEnv
from fairrl.envs.epidemic import S, EpidemicEnv
from fairrl.envs.lending import APPROVE, DENY, LendingEnv
from fairrl.errors import ContractError

KINDS = ("eo_threshold", "greedy_attention", "max_vaccinate", "uniform_random")

# harness agent ids -> baseline kinds
AGENT_KINDS = {
    "eo": "eo_threshold",
    "greedy": "greedy_attention",
    "max": "max_vaccinate",
    "random": "uniform_random",
}

LABELS = {
    "eo_threshold": "EO threshold agent",
    "greedy_attention": "greedy discover-most agent (CPO stand-in, not CPO)",
    "max_vaccinate": "Max agent",
    "uniform_random": "uniform random agent",
}

_COMPATIBLE = {
    "eo_threshold": (LendingEnv,),
    "greedy_attention": (AttentionEnv,),
    "max_vaccinate": (EpidemicEnv,),
    "uniform_random": (LendingEnv, AttentionEnv, EpidemicEnv),
}


def largest_remainder(weights, n_units):
    """Split ``n_units`` proportionally to ``weights``; leftovers by largest remainder, then lowest index."""
    w = np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        w = np.ones_like(w)
    quota = n_units * w / w.sum()
    alloc = np.floor(quota).astype(np.int64)
    rest = n_units - int(alloc.sum())
    if rest:
        order = np.lexsort((np.arange(w.size), -(quota - alloc)))
        alloc[order[:rest]] += 1
    return alloc


class Baseline:
    def __init__(self, kind, tolerance=0.02):
        if kind not in KINDS:
            raise ContractError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.label = LABELS[kind]
        self.tolerance = tolerance

    def reset(self, env):
        if not isinstance(env, _COMPATIBLE[self.kind]):
            raise ContractError(f"baseline {self.kind} cannot act in environment {env.name!r}")
        if self.kind == "eo_threshold":
            c = env.config
            expected = (1 - c.defaults()) * c.loan * c.interest - c.defaults() * c.loan
            profitable = np.flatnonzero(expected >= 0)
            self.profit_cutoff = int(profitable[0]) + 1 if profitable.size else c.x_max + 1
            self.cutoffs = [self.profit_cutoff, self.profit_cutoff]

    def act(self, env, rng):
        return getattr(self, "_" + self.kind)(env, rng)

    # -- kinds -----------------------------------------------------------
    def _eo_threshold(self, env, rng):
        self._adjust_cutoffs(env)
        return APPROVE if env.score >= self.cutoffs[env.group] else DENY

    def _adjust_cutoffs(self, env):
        wr_pos, ok_pos, wr_neg, ok_neg = (int(x) for x in env.window.totals[:4])
        if wr_pos == 0 or wr_neg == 0:
            return
        rates = (ok_pos / wr_pos, ok_neg / wr_neg)
        if abs(rates[0] - rates[1]) <= self.tolerance:
            return
        low = 0 if rates[0] < rates[1] else 1
        high = 1 - low
        # pull a group that went below the profit cutoff back up first
        if self.cutoffs[high] < self.profit_cutoff:
            self.cutoffs[high] += 1
        elif self.cutoffs[low] > 1:
            self.cutoffs[low] -= 1

    def _greedy_attention(self, env, rng):
        k = env.config.n_locations
        return largest_remainder(env.window.totals[k:], env.config.n_units)

    def _max_vaccinate(self, env, rng):
        susceptible = np.flatnonzero(env.health == S)
        if susceptible.size == 0:
            return env.noop
        counts = env.infected_neighbors()[susceptible]
        return int(susceptible[np.argmax(counts)])

    def _uniform_random(self, env, rng):
        if isinstance(env, AttentionEnv):
            return rng.multinomial(env.config.n_units, np.full(env.config.n_locations, 1.0 / env.config.n_locations))
        return int(rng.integers(env.n_outputs))


def act_baseline(kind, env, rng):
    """Stateless convenience wrapper: one action from a fresh baseline."""
    b = Baseline(kind)
    b.reset(env)
    return b.act(env, rng)
