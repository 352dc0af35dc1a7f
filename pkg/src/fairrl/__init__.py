"""Fair sequential decision making with PPO, action massaging and Wasserstein regularization."""

__version__ = "0.1.0"

from fairrl.errors import ContractError, FairRLError, NumericError  # noqa: E402

__all__ = ["ContractError", "FairRLError", "NumericError", "__version__"]
