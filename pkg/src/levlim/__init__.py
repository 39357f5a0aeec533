"""Long-run portfolio choice with proportional transaction costs.

Optimal no-trade bands for the mean-variance objective, the leverage multiplier,
trading-cost-adjusted efficient frontiers, and a Monte Carlo oracle that checks
the closed-form long-run statistics.
"""

from .errors import ConvergenceError, DomainError, LevlimError, NumericalError
from .fbp import Band, SolveReport, kappa_root, multiplier, solve, solve_risk_averse, solve_risk_neutral
from .model import MarketParams, Preference, Regime

__version__ = "0.1.0"

__all__ = [
    "Band",
    "ConvergenceError",
    "DomainError",
    "LevlimError",
    "MarketParams",
    "NumericalError",
    "Preference",
    "Regime",
    "SolveReport",
    "__version__",
    "kappa_root",
    "multiplier",
    "solve",
    "solve_risk_averse",
    "solve_risk_neutral",
]
