"""Experiment runner: configuration, seeded training, separate evaluation, outputs."""

import csv
import dataclasses
import hashlib
import json
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import yaml

from fairrl import __version__, _accel, fairness, nn
from fairrl.baselines import AGENT_KINDS, Baseline
from fairrl.envs import ENVIRONMENTS, make_env
from fairrl.envs.attention import AttentionEnv
from fairrl.envs.lending import LendingEnv
from fairrl.errors import ContractError, NumericError
from fairrl.ppo import (
    Network, PpoConfig, Transition, TrajectoryBatch, compute_gae, ppo_update, regularized_advantage,
)

LEARNING_AGENTS = ("ppo", "f-ppo", "f-ppo-l", "a-ppo")
AGENTS = LEARNING_AGENTS + tuple(AGENT_KINDS)

# Plug-in point for advantage regularizers from other methods (e.g. A-PPO).
# A hook receives the list of collected transitions and returns one
# regularizer value per transition.
ADVANTAGE_HOOKS = {}


def register_advantage_hook(agent, fn):
    ADVANTAGE_HOOKS[agent] = fn


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    env: str = "lending"
    agent: str = "f-ppo"
    iterations: int = 50
    eval_episodes: int = 10
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs/out"
    ppo: PpoConfig = field(default_factory=PpoConfig)
    env_config: dict = field(default_factory=dict)
    schedule: dict = None          # overrides the environment's threshold schedule
    reg_weight: float = None       # overrides the environment's regularizer weight
    delta: float = None            # overrides the environment's short-term tolerance
    eval_greedy: bool = False

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ContractError(f"unknown environment {self.env!r}")
        if self.agent not in AGENTS:
            raise ContractError(f"unknown agent {self.agent!r}; choose from {', '.join(AGENTS)}")
        if isinstance(self.ppo, dict):
            try:
                self.ppo = PpoConfig(**self.ppo)
            except TypeError as exc:
                raise ContractError(f"bad ppo block: {exc}") from None
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ContractError("at least one seed is required")
        if self.iterations < 1 or self.eval_episodes < 1:
            raise ContractError("iterations and eval_episodes must be positive")
        if self.schedule is not None:
            try:
                fairness.ThresholdSchedule(**self.schedule)
            except TypeError as exc:
                raise ContractError(f"bad schedule block: {exc}") from None

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ContractError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["ppo"]["hidden"] = list(d["ppo"]["hidden"])
        return d

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def load_config(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ContractError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data)


def config_hash(cfg):
    payload = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class AgentSettings:
    massaging: bool
    regularize: bool
    schedule: fairness.ThresholdSchedule
    reg_weight: float
    delta: float


def agent_settings(cfg, env):
    schedule = fairness.ThresholdSchedule(**cfg.schedule) if cfg.schedule else env.default_schedule
    weight = env.default_reg_weight if cfg.reg_weight is None else float(cfg.reg_weight)
    delta = env.default_delta if cfg.delta is None else float(cfg.delta)
    massaging = cfg.agent == "f-ppo"
    regularize = cfg.agent in ("f-ppo", "f-ppo-l")
    if cfg.agent == "a-ppo" and "a-ppo" not in ADVANTAGE_HOOKS:
        raise ContractError("agent 'a-ppo' needs a hook registered via register_advantage_hook")
    return AgentSettings(massaging, regularize, schedule, weight if regularize else 0.0, delta)


def threshold_at(settings, iteration, total_iterations=None):
    if not settings.massaging:
        return 0.0
    return fairness.schedule_threshold(settings.schedule, iteration, total_iterations)


# --------------------------------------------------------------------------
# records
# --------------------------------------------------------------------------

SERIES = ("reward", "short_term", "long_term", "utility")


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    agent: str
    env: str
    t: np.ndarray
    reward: np.ndarray
    short_term: np.ndarray
    long_term: np.ndarray
    utility: np.ndarray
    steps: list = field(default_factory=list)      # per-step environment log rows
    altered: list = field(default_factory=list)    # (t, confidence_gap, threshold)
    threshold: float = 0.0


@dataclass
class TrainingRecord:
    seed: int
    config_hash: str
    agent: str
    rows: list = field(default_factory=list)       # one dict per iteration
    altered: list = field(default_factory=list)    # (iteration, confidence_gap, threshold)
    n_massaged_checks: int = 0

    def series(self, key):
        return np.array([r[key] for r in self.rows])


@dataclass
class TrainedPolicy:
    network: Network
    agent: str
    settings: AgentSettings
    final_threshold: float

    def probs(self, obs):
        out, tape = nn.forward(self.network.spec, self.network.params, obs)
        return out[0], nn.log_softmax(tape.head_out)[0]


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

def _streams(seed):
    init, act, update = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(act), np.random.default_rng(update)


def _build_networks(cfg, env, rng):
    sizes = (env.obs_dim, *cfg.ppo.hidden)
    policy = Network.create((*sizes, env.n_outputs), cfg.ppo.activation, "softmax_logits", cfg.ppo.policy_lr, rng)
    value = Network.create((*sizes, 1), cfg.ppo.activation, "scalar", cfg.ppo.value_lr, rng)
    return policy, value


def run_training(cfg, seed=None, env=None, progress=None):
    """Train one learning agent; returns ``(TrainedPolicy, TrainingRecord)``."""
    if cfg.agent not in LEARNING_AGENTS:
        raise ContractError(f"agent {cfg.agent!r} is not trained")
    seed = cfg.seeds[0] if seed is None else int(seed)
    chash = config_hash(cfg)
    env = env or make_env(cfg.env, cfg.env_config)
    settings = agent_settings(cfg, env)
    init_rng, act_rng, upd_rng = _streams(seed)
    policy, value = _build_networks(cfg, env, init_rng)
    record = TrainingRecord(seed, chash, cfg.agent)

    episode = 0
    env.reset([seed, 0, episode])
    for k in range(cfg.iterations):
        tau = threshold_at(settings, k, cfg.iterations)
        transitions, bootstrap_obs = [], {}
        for i in range(cfg.ppo.steps_per_iteration):
            obs = env.observe()
            out, tape = nn.forward(policy.spec, policy.params, obs)
            probs = out[0]
            logp = nn.log_softmax(tape.head_out)[0]
            sampled = env.sample_action(probs, act_rng)
            executed, gap = env.massage(probs, sampled, tau) if tau > 0 else (sampled, None)
            counts = env.action_counts(executed)
            lt_before = env.long_term("train")
            reward, _ = env.step(executed)
            tr = Transition(
                state=obs,
                sampled_action=sampled,
                executed_action=executed,
                counts=counts,
                action_confidence=float(np.exp(env.action_counts(sampled) @ logp)),
                executed_log_prob=float(counts @ logp),
                reward=float(reward),
                short_term=env.short_term(),
                long_term=lt_before,
                long_term_next=env.long_term("train"),
                done=env.done,
                confidence_gap=gap,
                threshold=tau,
            )
            if settings.regularize:
                tr.regularizer_value = fairness.regularizer(tr.short_term, tr.long_term, tr.long_term_next, settings.delta)
            if gap is not None:
                record.altered.append((k, gap, tau))
            transitions.append(tr)
            if tr.done:
                bootstrap_obs[i] = env.observe()
                episode += 1
                env.reset([seed, 0, episode])
        if not transitions[-1].done:
            bootstrap_obs[len(transitions) - 1] = env.observe()

        if cfg.agent == "a-ppo":
            hook_values = ADVANTAGE_HOOKS["a-ppo"](transitions)
            for tr, r in zip(transitions, hook_values):
                tr.regularizer_value = float(r)
        idx = sorted(bootstrap_obs)
        boot_values = value(np.stack([bootstrap_obs[i] for i in idx]))[:, 0]
        batch = TrajectoryBatch.from_transitions(transitions, dict(zip(idx, boot_values)))
        batch.values = value(batch.states)[:, 0]
        adv, returns = compute_gae(batch, cfg.ppo)
        weight = settings.reg_weight if cfg.agent != "a-ppo" else 1.0
        batch.advantages = regularized_advantage(adv, batch.regularizer, weight)
        batch.returns = returns
        try:
            diag = ppo_update(policy, value, batch, cfg.ppo, upd_rng, iteration=k)
        except NumericError as exc:
            raise NumericError(str(exc.args[0]), iteration=k, config_hash=chash) from exc

        st = np.array([tr.short_term for tr in transitions])
        row = {
            "iteration": k,
            "threshold": tau,
            "mean_reward": float(batch.rewards.mean()),
            "short_term_mean": float(st.mean()),
            "short_term_std": float(st.std()),
            "long_term_mean": float(np.mean([tr.long_term_next for tr in transitions])),
            "altered": int(sum(tr.confidence_gap is not None for tr in transitions)),
            **diag,
        }
        record.rows.append(row)
        if progress:
            progress(row)

    final = threshold_at(settings, cfg.iterations - 1, cfg.iterations)
    return TrainedPolicy(policy, cfg.agent, settings, final), record


def policy_from_file(cfg, path, env=None):
    env = env or make_env(cfg.env, cfg.env_config)
    spec, params = nn.load_params(path)
    if spec.layer_sizes[0] != env.obs_dim or spec.layer_sizes[-1] != env.n_outputs:
        raise ContractError(f"{path}: network shape {spec.layer_sizes} does not fit environment {cfg.env!r}")
    settings = agent_settings(cfg, env)
    net = Network(spec, params, cfg.ppo.policy_lr)
    return TrainedPolicy(net, cfg.agent, settings, threshold_at(settings, cfg.iterations - 1, cfg.iterations))


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

def eval_seeds(seed, episodes):
    return [10_000 + 1_000 * int(seed) + i for i in range(episodes)]


def _step_row(env, info, executed, sampled, short, long_):
    if isinstance(env, LendingEnv):
        return {
            "t": info["t"], "group": info["group"], "score": info["score"],
            "action": _fmt_action(sampled), "executed_action": _fmt_action(executed),
            "repay": "" if info["repaid"] is None else int(info["repaid"]),
            "reward": info["reward"], "short_term": short, "long_term": long_, "cash": env.cash,
        }
    if isinstance(env, AttentionEnv):
        return {
            "t": info["t"], "rates": " ".join(repr(float(x)) for x in info["rates"]),
            "incidents": _fmt_action(info["incidents"]), "found": _fmt_action(info["found"]),
            "allocation": _fmt_action(info["allocation"]),
            "reward": info["reward"], "short_term": short, "long_term": long_,
        }
    row = {"t": info["t"], **env.counts_by_community(),
           "action": _fmt_action(sampled), "executed_action": _fmt_action(executed),
           "reward": info["reward"], "short_term": short, "long_term": long_}
    return row


def _fmt_action(a):
    if np.ndim(a):
        return " ".join(str(int(x)) for x in a)
    return int(a)


def run_evaluation(agent, cfg, seed=None, episodes=None, env=None):
    """Evaluate a trained policy or a :class:`Baseline` on fresh episodes.

    Massaging stays on for F-PPO with its final training threshold.
    """
    seed = cfg.seeds[0] if seed is None else int(seed)
    episodes = cfg.eval_episodes if episodes is None else int(episodes)
    chash = config_hash(cfg)
    env = env or make_env(cfg.env, cfg.env_config)
    is_policy = isinstance(agent, TrainedPolicy)
    greedy = cfg.eval_greedy or isinstance(env, AttentionEnv)
    tau = agent.final_threshold if is_policy else 0.0
    label = agent.agent if is_policy else agent.label
    records = []
    for ep_seed in eval_seeds(seed, episodes):
        env.reset(ep_seed)
        act_rng = np.random.default_rng([ep_seed, 1])
        if not is_policy:
            agent.reset(env)
        cols = {k: [] for k in SERIES}
        steps, altered = [], []
        while not env.done:
            if is_policy:
                probs, _ = agent.probs(env.observe())
                sampled = env.sample_action(probs, act_rng, greedy=greedy)
                executed, gap = env.massage(probs, sampled, tau) if tau > 0 else (sampled, None)
            else:
                sampled = executed = agent.act(env, act_rng)
                gap = None
            reward, info = env.step(executed)
            short, long_ = env.short_term(), env.long_term("eval")
            if gap is not None:
                altered.append((info["t"], gap, tau))
            cols["reward"].append(reward)
            cols["short_term"].append(short)
            cols["long_term"].append(long_)
            cols["utility"].append(env.utility)
            steps.append(_step_row(env, info, executed, sampled, short, long_))
        records.append(RunRecord(
            seed=ep_seed, config_hash=chash, agent=label, env=env.name,
            t=np.arange(len(cols["reward"])),
            **{k: np.asarray(v, dtype=np.float64) for k, v in cols.items()},
            steps=steps, altered=altered, threshold=tau,
        ))
    return records


# --------------------------------------------------------------------------
# outputs
# --------------------------------------------------------------------------

def _num(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(v) for v in r])


def aggregate(records):
    """Per-step mean and std across records (all must share one length)."""
    lengths = {len(r.t) for r in records}
    if len(lengths) != 1:
        raise ContractError(f"records differ in length: {sorted(lengths)}")
    out = {"t": records[0].t}
    for k in SERIES:
        stack = np.stack([getattr(r, k) for r in records])
        out[k + "_mean"] = stack.mean(axis=0)
        out[k + "_std"] = stack.std(axis=0)
    return out


def _ensure_writable(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ContractError(f"cannot create output directory {out_dir}: {exc}") from None
    if not os.access(out_dir, os.W_OK | os.X_OK):
        raise ContractError(f"output directory {out_dir} is not writable")


def emit_outputs(records, out_dir, training=None, config=None, timestamp=True):
    """Write per-run CSVs, aggregates, plot data and a manifest (last)."""
    if not records:
        raise ContractError("no records to emit")
    _ensure_writable(out_dir)
    files = []

    def path(name):
        files.append(name)
        return os.path.join(out_dir, name)

    for r in records:
        _write_csv(path(f"run_{r.seed}.csv"), ["t", *SERIES],
                   zip(r.t, r.reward, r.short_term, r.long_term, r.utility))
        if r.steps:
            header = list(r.steps[0])
            _write_csv(path(f"steps_{r.seed}.csv"), header, ([row[h] for h in header] for row in r.steps))

    agg = aggregate(records)
    header = ["t"] + [f"{k}_{s}" for k in SERIES for s in ("mean", "std")]
    _write_csv(path("aggregate.csv"), header, zip(*(agg[h] for h in header)))
    for k in SERIES:
        _write_csv(path(f"plot_{k}.csv"), ["x", "y", "y_std"], zip(agg["t"], agg[k + "_mean"], agg[k + "_std"]))

    trainings = training if isinstance(training, list) else ([training] if training else [])
    for tr in trainings:
        suffix = "" if len(trainings) == 1 else f"_{tr.seed}"
        header = list(tr.rows[0])
        _write_csv(path(f"training{suffix}.csv"), header, ([row[h] for h in header] for row in tr.rows))
    if trainings:
        st_mean = np.mean([t.series("short_term_mean") for t in trainings], axis=0)
        st_std = np.mean([t.series("short_term_std") for t in trainings], axis=0)
        _write_csv(path("plot_training_short_term.csv"), ["x", "y", "y_std"],
                   zip(range(len(st_mean)), st_mean, st_std))

    manifest = {
        "config_hash": records[0].config_hash,
        "agent": records[0].agent,
        "env": records[0].env,
        "seeds": [r.seed for r in records],
        "training_seeds": [t.seed for t in trainings],
        "config": config.to_dict() if config is not None else None,
        "files": files,
        "versions": {
            "fairrl": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "kernel_backend": _accel.backend(),
        },
    }
    if timestamp:
        manifest["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return files + ["manifest.json"]


def make_agent(cfg):
    """A :class:`Baseline` for rule-based agent ids; None for learning agents."""
    if cfg.agent in AGENT_KINDS:
        return Baseline(AGENT_KINDS[cfg.agent])
    return None
