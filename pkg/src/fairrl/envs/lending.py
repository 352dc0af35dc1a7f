"""Bank-loan simulator with credit-score feedback.

Applicants arrive one per step from two equally likely groups (index 0 is the
advantaged group, index 1 the disadvantaged one). Scores are buckets
``1..x_max`` drawn from live group mass functions. An approved loan that is
repaid moves ``shift`` mass one bucket up for the applicant's group; a default
moves it one bucket down. Reward is the change in bank cash.
"""

from dataclasses import dataclass
from math import comb

import numpy as np

from fairrl import fairness
from fairrl.envs.base import Environment, categorical_massage, one_hot
from fairrl.errors import ContractError

DENY, APPROVE = 0, 1


def binomial_profile(n_buckets, p):
    k = np.arange(n_buckets)
    m = n_buckets - 1
    return np.array([comb(m, int(i)) * p**i * (1 - p) ** (m - i) for i in k])


@dataclass
class LendingConfig:
    x_max: int = 7
    initial_pos: tuple = None
    initial_neg: tuple = None
    shift: float = 0.01
    loan: float = 1.0
    interest: float = 0.3
    default_high: float = 0.9   # default probability at bucket 1
    default_low: float = 0.1    # default probability at bucket x_max
    default_table: tuple = None
    window: int = 300
    episode_length: int = 1000

    def __post_init__(self):
        if self.x_max < 2:
            raise ContractError("need at least two score buckets")
        if self.initial_pos is None:
            self.initial_pos = tuple(binomial_profile(self.x_max, 0.6))
        if self.initial_neg is None:
            self.initial_neg = tuple(binomial_profile(self.x_max, 0.4))
        for name in ("initial_pos", "initial_neg"):
            m = np.asarray(getattr(self, name), dtype=np.float64)
            if m.shape != (self.x_max,) or np.any(m < 0) or abs(m.sum() - 1) > 1e-9:
                raise ContractError(f"{name} must be a mass function over {self.x_max} buckets")
        scores = np.arange(1, self.x_max + 1)
        if not np.dot(self.initial_neg, scores) < np.dot(self.initial_pos, scores):
            raise ContractError("disadvantaged group must have the lower mean score")
        if not 0 < self.shift < 1:
            raise ContractError("shift must lie in (0, 1)")
        if self.loan <= 0 or self.interest <= 0:
            raise ContractError("loan and interest must be positive")
        table = self.defaults()
        if np.any(table < 0) or np.any(table > 1) or np.any(np.diff(table) > 0):
            raise ContractError("default table must lie in [0, 1] and be non-increasing in score")
        if self.window < 1 or self.episode_length < 1:
            raise ContractError("window and episode length must be positive")

    def defaults(self):
        if self.default_table is not None:
            t = np.asarray(self.default_table, dtype=np.float64)
            if t.shape != (self.x_max,):
                raise ContractError("default table needs one entry per bucket")
            return t
        return np.linspace(self.default_high, self.default_low, self.x_max)


def default_probability(score, config):
    if not 1 <= score <= config.x_max:
        raise ContractError(f"score bucket {score} outside 1..{config.x_max}")
    return float(config.defaults()[score - 1])


def shift_mass(masses, bucket, direction, amount):
    """Move up to ``amount`` of mass from ``bucket`` (0-based) one step in ``direction``."""
    dest = bucket + direction
    if dest < 0 or dest >= masses.shape[0]:
        return masses
    moved = min(amount, masses[bucket])
    masses[bucket] -= moved
    masses[dest] += moved
    return masses


def eo_gap(totals):
    """Equal-opportunity gap from window totals; 0 when a group has no will-repay members."""
    wr_pos, ok_pos, wr_neg, ok_neg = (int(x) for x in totals[:4])
    if wr_pos == 0 or wr_neg == 0:
        return 0.0
    return abs(ok_pos / wr_pos - ok_neg / wr_neg)


class LendingEnv(Environment):
    name = "lending"
    default_schedule = fairness.LENDING_SCHEDULE
    default_reg_weight = 1.0
    default_delta = 0.05

    def __init__(self, config=None):
        self.config = config or LendingConfig()
        c = self.config
        self.obs_dim = 2 + c.x_max
        self.n_outputs = 2
        self._defaults = c.defaults()
        self.window = fairness.CohortWindow(c.window, 4 + 2 * c.x_max)
        self.support = np.arange(1, c.x_max + 1, dtype=np.float64)

    # -- episode control -------------------------------------------------
    def reset(self, seed):
        c = self.config
        self.rng = np.random.default_rng(seed)
        self.masses = np.array([c.initial_pos, c.initial_neg], dtype=np.float64)
        self.t = 0
        self.window.clear()
        self.n_repaid = 0
        self.n_defaulted = 0
        self._draw_applicant()
        return self.observe()

    def _draw_applicant(self):
        self.group = int(self.rng.integers(2))
        m = self.masses[self.group]
        self.score = int(self.rng.choice(self.config.x_max, p=m / m.sum())) + 1
        self.will_repay = bool(self.rng.random() >= self._defaults[self.score - 1])

    def observe(self):
        return np.concatenate([one_hot(self.group, 2), one_hot(self.score - 1, self.config.x_max)])

    # -- fairness --------------------------------------------------------
    def _record(self, action, will_repay=None):
        c = self.config
        rec = np.zeros(4 + 2 * c.x_max, dtype=np.int64)
        base = 0 if self.group == 0 else 2
        if self.will_repay if will_repay is None else will_repay:
            rec[base] = 1
            if action == APPROVE:
                rec[base + 1] = 1
        rec[4 + self.group * c.x_max + self.score - 1] = 1
        return rec

    def short_term(self):
        return eo_gap(self.window.totals)

    def short_term_if(self, action):
        """Expected EO gap after ``action``.

        The repay label is hidden at decision time, so both outcomes are
        weighted by the applicant's repay probability.
        """
        p = 1.0 - self._defaults[self.score - 1]
        repay = eo_gap(self.window.totals_with(self._record(action, True)))
        default = eo_gap(self.window.totals_with(self._record(action, False)))
        return p * repay + (1.0 - p) * default

    def long_term(self, mode="train"):
        """W1 between the groups' score histograms over the window.

        A group absent from the window falls back to its live mass function.
        """
        c = self.config
        counts = self.window.totals[4:].reshape(2, c.x_max)
        dists = []
        for g in range(2):
            d = fairness.normalize_counts(counts[g])
            dists.append(self.masses[g] / self.masses[g].sum() if d is None else d)
        return fairness.wasserstein_1d(dists[0], dists[1], self.support)

    def live_long_term(self):
        m = self.masses / self.masses.sum(axis=1, keepdims=True)
        return fairness.wasserstein_1d(m[0], m[1], self.support)

    def massage(self, probs, action, threshold):
        return categorical_massage(self, probs, action, threshold, self.short_term_if)

    # -- dynamics --------------------------------------------------------
    def step(self, action):
        if action not in (DENY, APPROVE):
            raise ContractError(f"lending action must be 0 or 1, got {action!r}")
        c = self.config
        group, score, will_repay = self.group, self.score, self.will_repay
        reward = 0.0
        repaid = None
        if action == APPROVE:
            repaid = will_repay
            if repaid:
                reward = c.loan * c.interest
                self.n_repaid += 1
            else:
                reward = -c.loan
                self.n_defaulted += 1
            shift_mass(self.masses[group], score - 1, 1 if repaid else -1, c.shift)
        self.window.push(self._record(action))
        self.t += 1
        info = {
            "t": self.t - 1,
            "group": group,
            "score": score,
            "will_repay": will_repay,
            "action": int(action),
            "repaid": repaid,
            "reward": reward,
            "cash": self.cash,
        }
        self._draw_applicant()
        return reward, info

    @property
    def cash(self):
        # derived from integer counts so bookkeeping is exact
        c = self.config
        return self.n_repaid * c.loan * c.interest - self.n_defaulted * c.loan

    @property
    def utility(self):
        return self.cash

    @property
    def done(self):
        return self.t >= self.config.episode_length
