"""Computing-continuum simulator with active-inference orchestration agents."""

__version__ = "0.1.0"
