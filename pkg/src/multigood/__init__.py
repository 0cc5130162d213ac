"""Multi-good consumption duality: image utilities, finite-market oracles,
closed-form incomplete-market models and Monte Carlo verification."""

__version__ = "0.1.0"
