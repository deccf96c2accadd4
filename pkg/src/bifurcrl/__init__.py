"""Safe reinforcement learning with Gaussian-mixture bifurcated policies,
distributional critics, and numerical topology diagnostics."""

__version__ = "0.1.0"
