"""Simulation and verification of delayed alignment dynamics on digraphs.

First-order (opinion) and second-order (flocking) models with time-varying
delays and intermittent, persistently exciting link weights, together with
executable checks of their exponential convergence estimates.
"""

__version__ = "0.1.0"
