"""Clipped-surrogate PPO on trajectories that may contain massaged actions.

Actions reach the learner as count vectors over the policy's outputs, so
``log pi(a|s) = counts . log_softmax(logits)``. Ratios are always taken for the
executed action; no importance weighting is applied for the massaging step.
"""

from dataclasses import dataclass, field

import numpy as np

from fairrl import kernels, nn
from fairrl.errors import ContractError, NumericError


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    policy_lr: float = 3e-3
    value_lr: float = 3e-3
    steps_per_iteration: int = 512
    reg_weight: float = 0.0
    delta: float = 0.05
    normalize_advantages: bool = True
    entropy_coef: float = 0.01
    hidden: tuple = (32, 32)
    activation: str = "tanh"

    def __post_init__(self):
        if not 0 <= self.gamma <= 1 or not 0 <= self.gae_lambda <= 1:
            raise ContractError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip <= 0:
            raise ContractError("clip must be positive")
        if self.epochs < 1 or self.minibatch_size < 1 or self.steps_per_iteration < 1:
            raise ContractError("epochs, minibatch size and steps per iteration must be positive")
        if self.policy_lr <= 0 or self.value_lr <= 0:
            raise ContractError("step sizes must be positive")
        if self.reg_weight < 0 or self.delta < 0:
            raise ContractError("regularizer weight and delta must be non-negative")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class Transition:
    state: np.ndarray
    sampled_action: object
    executed_action: object
    counts: np.ndarray            # executed action as a count vector
    action_confidence: float      # pi(sampled | s)
    executed_log_prob: float      # log pi(executed | s) at collection time
    reward: float
    short_term: float = 0.0       # bias after the executed action
    long_term: float = 0.0        # long-term gap before the step
    long_term_next: float = 0.0   # long-term gap after the step
    regularizer_value: float = 0.0
    done: bool = False
    confidence_gap: float = None  # set when massaging altered the action
    threshold: float = 0.0


@dataclass
class TrajectoryBatch:
    states: np.ndarray
    counts: np.ndarray
    old_log_probs: np.ndarray
    rewards: np.ndarray
    seg_end: np.ndarray
    bootstrap: np.ndarray
    regularizer: np.ndarray
    values: np.ndarray = None
    advantages: np.ndarray = None
    returns: np.ndarray = None
    transitions: list = field(default_factory=list)

    def __len__(self):
        return self.rewards.shape[0]

    @classmethod
    def from_transitions(cls, transitions, bootstrap):
        """``bootstrap`` maps the index of each segment-ending step to V(successor)."""
        if not transitions:
            raise ContractError("empty trajectory batch")
        n = len(transitions)
        seg_end = np.array([tr.done for tr in transitions], dtype=bool)
        seg_end[-1] = True
        boot = np.zeros(n)
        for i, v in bootstrap.items():
            boot[i] = v
        return cls(
            states=np.stack([tr.state for tr in transitions]),
            counts=np.stack([tr.counts for tr in transitions]),
            old_log_probs=np.array([tr.executed_log_prob for tr in transitions]),
            rewards=np.array([tr.reward for tr in transitions], dtype=np.float64),
            seg_end=seg_end,
            bootstrap=boot,
            regularizer=np.array([tr.regularizer_value for tr in transitions]),
            transitions=list(transitions),
        )


class Network:
    """A network spec, its current parameters and its optimizer state."""

    def __init__(self, spec, params, step_size):
        self.spec = spec
        self.params = params
        self.step_size = step_size
        self.opt = nn.AdamState.zeros(spec.n_params)

    @classmethod
    def create(cls, sizes, activation, head, step_size, rng):
        spec = nn.NetworkSpec(tuple(sizes), activation, head)
        return cls(spec, nn.init_params(spec, rng), step_size)

    def __call__(self, x):
        return nn.forward(self.spec, self.params, x)[0]

    def descend(self, gradient):
        self.params, self.opt = nn.adam_step(self.params, gradient, self.opt, self.step_size)


def compute_gae(batch, config):
    """Advantages and lambda-returns for every step of ``batch``."""
    if len(batch) == 0:
        raise ContractError("empty trajectory batch")
    if batch.values is None or batch.values.shape != batch.rewards.shape:
        raise ContractError("value estimates missing for some steps")
    adv = kernels.gae(batch.rewards, batch.values, batch.seg_end, batch.bootstrap,
                      config.gamma, config.gae_lambda)
    if not np.all(np.isfinite(adv)):
        raise NumericError("non-finite advantage estimate")
    return adv, adv + batch.values


def regularized_advantage(advantage, regularizer_value, weight):
    return advantage + weight * regularizer_value


def clipped_surrogate(ratio, advantage, clip_eps):
    ratio = np.asarray(ratio, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1 - clip_eps, 1 + clip_eps) * advantage)


def value_loss(predictions, returns):
    predictions = np.asarray(predictions, dtype=np.float64).ravel()
    returns = np.asarray(returns, dtype=np.float64).ravel()
    if predictions.shape != returns.shape or predictions.size == 0:
        raise ContractError("predictions and returns must be equal-length and non-empty")
    return float(np.mean((predictions - returns) ** 2))


def log_prob(logits, counts):
    return np.sum(counts * nn.log_softmax(logits), axis=-1)


def ppo_update(policy, value_net, batch, config, rng, iteration=None):
    """Run the configured epochs of minibatch PPO on ``batch`` in place.

    ``batch.advantages`` must already hold the (possibly regularized)
    advantages and ``batch.returns`` the value targets.
    """
    if batch.advantages is None or batch.returns is None:
        raise ContractError("advantages and returns must be computed before the update")
    try:
        return _update(policy, value_net, batch, config, rng, iteration)
    except NumericError as exc:
        if exc.iteration is None:
            exc.iteration = iteration
        raise


def _update(policy, value_net, batch, config, rng, iteration):
    n = len(batch)
    adv = batch.advantages.astype(np.float64)
    if config.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    eps = config.clip
    stats = {"ratio": [], "clipped": [], "policy_loss": [], "value_loss": [], "entropy": []}
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.minibatch_size):
            idx = order[lo:lo + config.minibatch_size]
            m = idx.size
            counts = batch.counts[idx]
            a = adv[idx]

            probs, tape = nn.forward(policy.spec, policy.params, batch.states[idx])
            logits = tape.head_out
            logp_all = nn.log_softmax(logits)
            logp = np.sum(counts * logp_all, axis=1)
            ratio = np.exp(logp - batch.old_log_probs[idx])
            surrogate = clipped_surrogate(ratio, a, eps)
            entropy = -np.sum(probs * logp_all, axis=1)
            # d surrogate / d logp: the unclipped branch is the active minimum
            active = np.where(a >= 0, ratio <= 1 + eps, ratio >= 1 - eps)
            d_logp = np.where(active, ratio * a, 0.0)
            n_units = counts.sum(axis=1, keepdims=True)
            d_logits = d_logp[:, None] * (counts - n_units * probs)
            if config.entropy_coef:
                d_ent = -probs * (logp_all + entropy[:, None])
                d_logits = d_logits + config.entropy_coef * d_ent
            pol_loss = -float(np.mean(surrogate)) - config.entropy_coef * float(np.mean(entropy))
            if not np.isfinite(pol_loss):
                raise NumericError("non-finite policy loss", iteration=iteration)
            policy.descend(nn.backward(tape, -d_logits / m))

            v, vtape = nn.forward(value_net.spec, value_net.params, batch.states[idx])
            v = v[:, 0]
            target = batch.returns[idx]
            vl = value_loss(v, target)
            if not np.isfinite(vl):
                raise NumericError("non-finite value loss", iteration=iteration)
            value_net.descend(nn.backward(vtape, (2.0 * (v - target) / m)[:, None]))

            stats["ratio"].append(float(ratio.mean()))
            stats["clipped"].append(float(np.mean(np.abs(ratio - 1) > eps)))
            stats["policy_loss"].append(pol_loss)
            stats["value_loss"].append(vl)
            stats["entropy"].append(float(entropy.mean()))
    return {
        "mean_ratio": float(np.mean(stats["ratio"])),
        "clip_fraction": float(np.mean(stats["clipped"])),
        "policy_loss": float(np.mean(stats["policy_loss"])),
        "value_loss": float(np.mean(stats["value_loss"])),
        "entropy": float(np.mean(stats["entropy"])),
    }
