"""Semi-device-independent quantum money: simulation, attacks, bounds and optimizers."""

from .bounds import M, P_Q, beta, eta_max, forgery_bound, min_nontrivial_n

__all__ = ["M", "P_Q", "beta", "eta_max", "forgery_bound", "min_nontrivial_n"]
__version__ = "0.1.0"
