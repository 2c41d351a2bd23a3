"""Grid-encoded physics-informed PDE solver with local feature synthesis, built on numpy."""

__version__ = "0.1.0"
