"""Calibrate, validate and analyse predictive models of cooperation in
repeated Prisoner's Dilemma games."""

__version__ = "0.1.0"
