"""UAV-assisted cooperative edge inference: simulator, hierarchical learner and baselines."""

__version__ = "0.1.0"
