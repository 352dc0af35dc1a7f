import numpy as np

from fairrl import fairness


class Environment:
    """Surface the training harness relies on.

    Policy outputs are a probability vector over ``n_outputs`` entries. An
    action is represented to the learner by a count vector over those entries
    (one-hot for a single discrete choice, unit counts for an allocation), so
    ``log pi(action) = counts . log P``.
    """

    name = "base"
    obs_dim = 0
    n_outputs = 0
    default_schedule = fairness.ThresholdSchedule("static", value=0.0)
    default_reg_weight = 1.0
    default_delta = 0.05

    def reset(self, seed):
        raise NotImplementedError

    def observe(self):
        raise NotImplementedError

    def sample_action(self, probs, rng, greedy=False):
        if greedy:
            return int(np.argmax(probs))
        return int(rng.choice(probs.shape[0], p=probs))

    def action_counts(self, action):
        c = np.zeros(self.n_outputs)
        c[action] = 1.0
        return c

    def massage(self, probs, action, threshold):
        """Return ``(executed_action, confidence_gap)``; the gap is None when unchanged."""
        return action, None

    def step(self, action):
        raise NotImplementedError

    def short_term(self):
        raise NotImplementedError

    def long_term(self, mode="train"):
        raise NotImplementedError

    @property
    def utility(self):
        """Running utility reported alongside the fairness series."""
        return self._utility


def one_hot(index, size):
    v = np.zeros(size)
    v[index] = 1.0
    return v


def categorical_massage(env, probs, action, threshold, bias_if):
    executed = fairness.massage_action(probs, action, bias_if, threshold)
    if executed == action:
        return action, None
    return executed, float(abs(probs[action] - probs[executed]))
