"""Goal-conditioned hierarchical RL with a learned dynamics ensemble."""

__version__ = "0.1.0"
