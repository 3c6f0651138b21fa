"""Numerical laboratory for stable-like jump models: spectral analysis,
non-local PDE solving, thinned jump-SDE simulation, and drift-removing
transforms, wired to a verification harness."""

__version__ = "0.1.0"
