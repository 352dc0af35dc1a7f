from fairrl.envs.attention import AttentionConfig, AttentionEnv
from fairrl.envs.epidemic import EpidemicConfig, EpidemicEnv
from fairrl.envs.lending import LendingConfig, LendingEnv
from fairrl.errors import ContractError

ENVIRONMENTS = {
    "lending": (LendingEnv, LendingConfig),
    "attention": (AttentionEnv, AttentionConfig),
    "epidemic": (EpidemicEnv, EpidemicConfig),
}


def make_env(name, options=None):
    """Build an environment from its id and a plain dict of config overrides."""
    try:
        env_cls, cfg_cls = ENVIRONMENTS[name]
    except KeyError:
        raise ContractError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    options = dict(options or {})
    try:
        cfg = cfg_cls(**options)
    except TypeError as exc:
        raise ContractError(f"bad {name} config: {exc}") from None
    return env_cls(cfg)


__all__ = [
    "AttentionConfig", "AttentionEnv", "EpidemicConfig", "EpidemicEnv",
    "LendingConfig", "LendingEnv", "ENVIRONMENTS", "make_env",
]
