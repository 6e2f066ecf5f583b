"""Turn static code repositories into grounded agent trajectories for pre-training."""

__version__ = "0.1.0"
