"""Return Capping for CVaR policy-gradient optimisation, with baselines, environments and an exact oracle."""

__version__ = "0.1.0"
