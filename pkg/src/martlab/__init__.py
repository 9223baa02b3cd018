"""Exact cadlag path arithmetic, stochastic exponentials, integral
criteria for exponential martingales, measure-change diagnostics and a
catalogue of boundary-case models."""

__version__ = "0.1.0"
