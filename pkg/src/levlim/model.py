"""Market and preference types, the running reward h, the cost gradient G, and
coordinate maps between the risky weight pi and the risky/safe ratio zeta.

All rates are annualized decimals.  Types validate on construction; the scalar
functions below only guard their own poles.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class MarketParams:
    """One safe asset at rate ``r`` and one risky asset with excess drift ``mu``,
    volatility ``sigma`` and relative bid-ask spread ``epsilon``."""

    mu: float
    sigma: float
    r: float = 0.0
    epsilon: float = 0.01

    def __post_init__(self):
        for name in ("mu", "sigma", "r", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.mu < 0:
            raise DomainError(f"mu must be non-negative, got {self.mu}")
        if self.r < 0:
            raise DomainError(f"r must be non-negative, got {self.r}")

    @property
    def exponent(self) -> float:
        """2*mu/sigma**2, which equals 2*gamma*pi_star for every gamma > 0."""
        return 2.0 * self.mu / self.sigma**2

    @property
    def sharpe(self) -> float:
        return self.mu / self.sigma

    def require_strong_drift(self) -> None:
        """Raise unless mu > sigma**2 (needed by the small-gamma convergence results)."""
        if not self.mu > self.sigma**2:
            raise DomainError(
                f"this operation needs mu > sigma^2, got mu={self.mu}, sigma^2={self.sigma**2}"
            )

    def with_epsilon(self, epsilon: float) -> "MarketParams":
        return MarketParams(self.mu, self.sigma, self.r, epsilon)


@dataclass(frozen=True)
class Preference:
    """Risk-aversion proxy; ``gamma == 0`` selects the return-maximizing path."""

    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.gamma) or self.gamma < 0:
            raise DomainError(f"gamma must be finite and >= 0, got {self.gamma!r}")

    @property
    def risk_neutral(self) -> bool:
        return self.gamma == 0


class Regime(enum.Enum):
    LONG_ONLY = "LongOnly"
    LEVERAGED = "Leveraged"
    DEGENERATE = "Degenerate"


def _check_pole(zeta, pole, what):
    z = np.asarray(zeta, dtype=float)
    if np.any(z == pole):
        raise DomainError(f"{what} has a pole at zeta={pole}")


def pi_of_zeta(zeta):
    """Risky weight from the risky/safe ratio: pi = zeta / (1 + zeta)."""
    _check_pole(zeta, -1.0, "pi_of_zeta")
    z = np.asarray(zeta, dtype=float)
    out = z / (1.0 + z)
    return float(out) if out.ndim == 0 else out


def zeta_of_pi(pi):
    """Risky/safe ratio from the risky weight: zeta = pi / (1 - pi)."""
    p = np.asarray(pi, dtype=float)
    if np.any(p == 1.0):
        raise DomainError("zeta_of_pi has a pole at pi=1")
    out = p / (1.0 - p)
    return float(out) if out.ndim == 0 else out


def h(zeta, params: MarketParams, pref: Preference):
    """Running reward mu*pi - gamma*sigma^2*pi^2/2 written in zeta."""
    p = pi_of_zeta(zeta)
    return params.mu * p - 0.5 * pref.gamma * params.sigma**2 * p * p


def h_of_pi(pi, params: MarketParams, pref: Preference):
    p = np.asarray(pi, dtype=float)
    out = params.mu * p - 0.5 * pref.gamma * params.sigma**2 * p * p
    return float(out) if out.ndim == 0 else out


def h_prime(zeta, params: MarketParams, pref: Preference):
    """dh/dzeta = (mu - gamma*sigma^2*pi) / (1 + zeta)^2."""
    _check_pole(zeta, -1.0, "h'")
    z = np.asarray(zeta, dtype=float)
    p = z / (1.0 + z)
    out = (params.mu - pref.gamma * params.sigma**2 * p) / (1.0 + z) ** 2
    return float(out) if out.ndim == 0 else out


def h_diff(zeta, zeta_ref, params: MarketParams, pref: Preference):
    """h(zeta) - h(zeta_ref) without cancellation between nearby arguments."""
    z = np.asarray(zeta, dtype=float)
    p = z / (1.0 + z)
    p_ref = zeta_ref / (1.0 + zeta_ref)
    dp = (z - zeta_ref) / ((1.0 + z) * (1.0 + zeta_ref))
    out = dp * (params.mu - 0.5 * pref.gamma * params.sigma**2 * (p + p_ref))
    return float(out) if out.ndim == 0 else out


def G(zeta, params: MarketParams):
    """Marginal cost of selling: eps / ((1 + zeta) (1 + (1 - eps) zeta))."""
    eps = params.epsilon
    _check_pole(zeta, -1.0, "G")
    _check_pole(zeta, -1.0 / (1.0 - eps), "G")
    z = np.asarray(zeta, dtype=float)
    out = eps / ((1.0 + z) * (1.0 + (1.0 - eps) * z))
    return float(out) if out.ndim == 0 else out


def G_prime(zeta, params: MarketParams):
    """dG/dzeta = eps (eps - 2(1-eps) zeta - 2) / ((1+zeta)^2 (1+(1-eps) zeta)^2)."""
    eps = params.epsilon
    _check_pole(zeta, -1.0, "G'")
    _check_pole(zeta, -1.0 / (1.0 - eps), "G'")
    z = np.asarray(zeta, dtype=float)
    out = eps * (eps - 2.0 * (1.0 - eps) * z - 2.0) / (
        (1.0 + z) ** 2 * (1.0 + (1.0 - eps) * z) ** 2
    )
    return float(out) if out.ndim == 0 else out


def merton_fraction(params: MarketParams, pref: Preference) -> float:
    """Frictionless optimal weight mu / (gamma sigma^2)."""
    if pref.gamma <= 0:
        raise DomainError("the frictionless weight is undefined for gamma = 0")
    return params.mu / (pref.gamma * params.sigma**2)


def is_admissible(zeta, params: MarketParams) -> bool:
    """True when zeta sits on an admissible branch: zeta >= 0 or zeta < -1/(1-eps)."""
    return bool(zeta >= 0 or zeta < -1.0 / (1.0 - params.epsilon))


def degenerate_gamma(params: MarketParams) -> float:
    """Risk aversion at which the frictionless weight is exactly one."""
    return params.mu / params.sigma**2
