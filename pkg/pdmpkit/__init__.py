"""pdmp-kit: piecewise deterministic Markov processes for Monte Carlo."""

__version__ = "0.1.0"
