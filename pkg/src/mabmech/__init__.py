"""Single-call truthful mechanisms for pay-per-click bandit auctions."""

from .domain import AdInstance, AdSpec, validate_instance
from .rules import make_rule

__version__ = "0.1.0"

__all__ = ["AdInstance", "AdSpec", "validate_instance", "make_rule", "__version__"]
