"""qzeno: stochastic-trajectory simulation of a continuously measured
nanomechanical resonator coupled to a two-level or oscillator probe."""

__version__ = "0.1.0"
