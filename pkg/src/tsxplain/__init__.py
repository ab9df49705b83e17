"""Attribution methods for time-series classifiers with perturbation-based verification."""

__version__ = "0.1.0"
