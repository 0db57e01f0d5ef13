"""Stochastic flow matching lab: training, SDE sampling, nested UQ and detection."""

__version__ = "0.1.0"
