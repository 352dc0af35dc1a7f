"""Fairness measures and the two fairness interventions.

Short-term fairness is measured over a sliding cohort window; long-term fairness
is a 1-Wasserstein (or, for unordered categories, total variation) gap between
group distributions. ``massage_action`` is the pre-processing intervention and
``regularizer`` the advantage-shaping term.
"""

from dataclasses import dataclass

import numpy as np

from fairrl import kernels
from fairrl.errors import ContractError

_NORM_TOL = 1e-9


class CohortWindow:
    """Sliding window over the last ``capacity`` steps.

    Every step contributes one fixed-width vector of integer counts (the layout
    is chosen by the environment, e.g. per-group repay/approve tallies).
    Column totals are kept incrementally and are exact.
    """

    def __init__(self, capacity, width):
        if capacity < 1 or width < 1:
            raise ContractError("window capacity and width must be positive")
        self.capacity = int(capacity)
        self.width = int(width)
        self._buf = np.zeros((self.capacity, self.width), dtype=np.int64)
        self._head = 0
        self._size = 0
        self.totals = np.zeros(self.width, dtype=np.int64)

    def __len__(self):
        return self._size

    def clear(self):
        self._buf[:] = 0
        self._head = 0
        self._size = 0
        self.totals[:] = 0

    def _coerce(self, record):
        rec = np.asarray(record, dtype=np.int64)
        if rec.shape != (self.width,):
            raise ContractError(f"record must have width {self.width}, got shape {rec.shape}")
        return rec

    def oldest(self):
        if self._size < self.capacity:
            return None
        return self._buf[self._head]

    def push(self, record):
        rec = self._coerce(record)
        if self._size == self.capacity:
            self.totals -= self._buf[self._head]
        else:
            self._size += 1
        self._buf[self._head] = rec
        self.totals += rec
        self._head = (self._head + 1) % self.capacity

    def totals_with(self, record):
        """Totals the window would have after pushing ``record`` (no mutation)."""
        rec = self._coerce(record)
        out = self.totals + rec
        old = self.oldest()
        if old is not None:
            out = out - old
        return out

    def records(self):
        """Records oldest first."""
        if self._size < self.capacity:
            return self._buf[: self._size].copy()
        return np.roll(self._buf, -self._head, axis=0)


def _check_distribution(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ContractError(f"{name} must be a non-empty vector")
    if np.any(p < -_NORM_TOL) or not np.all(np.isfinite(p)):
        raise ContractError(f"{name} has negative or non-finite mass")
    if abs(p.sum() - 1.0) > _NORM_TOL:
        raise ContractError(f"{name} sums to {p.sum()!r}, not 1")
    return p


def wasserstein_1d(p, q, support=None):
    """1-Wasserstein distance between two mass functions on one ordered support.

    ``support`` defaults to ``0, 1, ..., n-1`` (unit spacing).
    """
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ContractError("distributions are defined on different supports")
    if support is None:
        support = np.arange(p.size, dtype=np.float64)
    else:
        support = np.asarray(support, dtype=np.float64)
        if support.shape != p.shape:
            raise ContractError("support length differs from the distributions")
        if np.any(np.diff(support) <= 0):
            raise ContractError("support must be strictly increasing")
    return kernels.w1_ordered(p, q, support)


def total_variation(p, q):
    """W1 under the 0/1 ground metric, i.e. half the L1 distance."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ContractError("distributions are defined on different supports")
    return 0.5 * float(np.abs(p - q).sum())


def normalize_counts(counts):
    """Counts -> mass function; ``None`` when the counts are all zero."""
    counts = np.asarray(counts, dtype=np.float64)
    s = counts.sum()
    if s <= 0:
        return None
    return counts / s


def massage_action(action_probs, sampled_action, candidate_bias, threshold):
    """Swap the sampled action for a fairer one the policy is nearly as confident in.

    Feasible alternatives satisfy ``|P(sampled) - P(a)| < threshold``. The
    sampled action is kept unless some alternative has strictly smaller
    ``candidate_bias``; among equally fair alternatives the lowest id wins.
    """
    if threshold <= 0:
        return int(sampled_action)
    probs = np.asarray(action_probs, dtype=np.float64)
    p0 = probs[sampled_action]
    best = int(sampled_action)
    best_bias = None
    for a in np.flatnonzero(np.abs(probs - p0) < threshold):
        a = int(a)
        if a == sampled_action:
            continue
        if best_bias is None:
            best_bias = candidate_bias(sampled_action)
        b = candidate_bias(a)
        if b < best_bias:
            best, best_bias = a, b
    return best


def regularizer(short_term, long_term, long_term_next, delta):
    """Advantage shaping term.

    Penalizes a long-term gap that fails to shrink while the short-term bias is
    above ``delta``; rewards a shrinking gap while short-term bias is within
    ``delta``; zero when the two goals disagree.
    """
    change = long_term - long_term_next
    if short_term > delta:
        return min(0.0, change)
    return max(0.0, change)


@dataclass(frozen=True)
class ThresholdSchedule:
    kind: str = "static"        # static | lending_decay | epidemic_growth
    value: float = 0.0          # static threshold
    tau_s: float = 0.5
    tau_e: float = 1.0
    i_s: int = 0
    gamma: float = 1.0
    # iteration count the parameters were set for; shorter or longer runs are
    # mapped onto this clock (None keeps raw iteration indices)
    horizon: int = None

    def __post_init__(self):
        if self.kind not in ("static", "lending_decay", "epidemic_growth"):
            raise ContractError(f"unknown schedule kind {self.kind!r}")
        if self.horizon is not None and self.horizon < 1:
            raise ContractError("schedule horizon must be positive")


def schedule_threshold(schedule, iteration, total_iterations=None):
    """Threshold at ``iteration``.

    With a ``horizon`` and a known ``total_iterations`` the index is rescaled
    to ``iteration * horizon / total_iterations`` first, so a run of exactly
    ``horizon`` iterations sees the raw schedule.
    """
    if iteration < 0:
        raise ContractError("iteration must be non-negative")
    if schedule.horizon is not None and total_iterations:
        iteration = iteration * schedule.horizon / total_iterations
    if schedule.kind == "static":
        return float(schedule.value)
    if schedule.kind == "lending_decay":
        if iteration < schedule.i_s:
            tau = 0.5
        else:
            tau = schedule.tau_s * schedule.gamma ** (iteration - schedule.i_s)
        return 1.0 - 2.0 * tau
    if iteration < schedule.i_s:
        return 0.0
    return min(schedule.tau_e, schedule.tau_s * schedule.gamma ** (iteration - schedule.i_s))


LENDING_SCHEDULE = ThresholdSchedule("lending_decay", tau_s=0.5, i_s=17, gamma=0.985, horizon=350)
ATTENTION_SCHEDULE = ThresholdSchedule("static", value=0.08)
EPIDEMIC_SCHEDULE = ThresholdSchedule("epidemic_growth", tau_s=0.01, tau_e=0.35, i_s=50, gamma=1.2)


# --------------------------------------------------------------------------
# Disparity bounds through the Wasserstein gap
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseLinear:
    """Continuous piecewise-linear function through ``(knots_x, knots_y)``."""

    knots_x: tuple
    knots_y: tuple

    def __call__(self, x):
        return np.interp(x, self.knots_x, self.knots_y)

    @property
    def max_slope(self):
        xs = np.asarray(self.knots_x, dtype=np.float64)
        ys = np.asarray(self.knots_y, dtype=np.float64)
        if xs.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(ys) / np.diff(xs))))


def _check_model(model, slope_bound, name):
    if np.any(np.diff(model.knots_x) <= 0):
        raise ContractError(f"{name} knots must be strictly increasing")
    ys = np.asarray(model.knots_y)
    if np.any(ys < 0) or np.any(ys > 1):
        raise ContractError(f"{name} outputs must lie in [0, 1]")
    if model.max_slope > slope_bound * (1 + 1e-12) + 1e-15:
        raise ContractError(f"{name} slope {model.max_slope} exceeds bound {slope_bound}")


def dp_bound_check(p, q, support, model, slope_bound):
    """Demographic-parity gap of ``model`` and its Lipschitz-times-W1 bound.

    Returns ``(dp, bound, holds)``.
    """
    support = np.asarray(support, dtype=np.float64)
    _check_model(model, slope_bound, "model")
    h = model(support)
    dp = abs(float(np.dot(p, h)) - float(np.dot(q, h)))
    bound = slope_bound * wasserstein_1d(p, q, support)
    return dp, bound, dp <= bound + 1e-9


def eo_bound_check(p, q, support, model, label_model, slope_bound, label_slope_bound):
    """Equal-opportunity gap of ``model`` given a DP-satisfying label model.

    The positive rate ``P(y)`` is the shared mean of ``label_model``. Returns
    ``(eo, bound, holds)`` with ``bound = (l_h + l_g) / P(y) * W1``.
    """
    support = np.asarray(support, dtype=np.float64)
    _check_model(model, slope_bound, "model")
    _check_model(label_model, label_slope_bound, "label model")
    h = model(support)
    g = label_model(support)
    py_p, py_q = float(np.dot(p, g)), float(np.dot(q, g))
    if abs(py_p - py_q) > 1e-9:
        raise ContractError("label model does not satisfy demographic parity on these groups")
    if py_p <= 0:
        raise ContractError("label model never predicts the positive class")
    eo = abs(float(np.dot(p, h * g)) - float(np.dot(q, h * g))) / py_p
    bound = (slope_bound + label_slope_bound) / py_p * wasserstein_1d(p, q, support)
    return eo, bound, eo <= bound + 1e-9
