"""Small-spread expansions of the trading boundaries and long-run statistics.

Expressions are evaluated term by term as written, with real odd roots
(``cbrt(a) = sign(a) |a|**(1/3)``) and even powers taken on squares
(``a**(2/3) = (a**2)**(1/3)``).  They serve as solver initializers and as
order-of-accuracy cross checks, never as a substitute for the exact solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import MarketParams, Preference, merton_fraction


def _cbrt(a):
    return float(np.cbrt(a))


def _pow_2_3(a):
    return float(np.cbrt(a * a))


def _pow_4_3(a):
    c = np.cbrt(a * a)
    return float(c * c)


def _check(params: MarketParams, pref: Preference) -> float:
    if pref.gamma <= 0:
        raise DomainError("risk-averse expansions need gamma > 0")
    pi_star = merton_fraction(params, pref)
    if pi_star == 1.0:
        raise DomainError("expansions are singular at gamma = mu/sigma^2")
    return pi_star


def _second_order_factor(pi_star, gamma):
    """Recurring factor (gamma pi* (pi* - 1) / 6)^(1/3)."""
    return _cbrt(gamma * pi_star * (pi_star - 1.0) / 6.0)


@dataclass(frozen=True)
class AsymptoticStats:
    pi_minus: float
    pi_plus: float
    m_hat: float
    s_hat: float
    atc: float
    esr: float
    m_hat_printed: float = float("nan")
    order: str = "eps^(2/3)"


def boundaries_expansion(params: MarketParams, pref: Preference):
    """Buy/sell weights (pi_-, pi_+) through order eps^(2/3)."""
    pi_star = _check(params, pref)
    g = pref.gamma
    eps = params.epsilon
    half_width = _cbrt(3.0 / (4.0 * g) * pi_star**2 * (pi_star - 1.0) ** 2) * _cbrt(eps)
    shift = (1.0 - g) * pi_star / g * _second_order_factor(pi_star, g) * _pow_2_3(eps)
    return pi_star - half_width - shift, pi_star + half_width - shift


def zeta_expansion(params: MarketParams, pref: Preference):
    """Free boundaries (zeta_-, zeta_+) in risky/safe coordinates through eps^(2/3)."""
    pi_star = _check(params, pref)
    g = pref.gamma
    eps = params.epsilon
    centre = pi_star / (1.0 - pi_star)
    first = _cbrt(3.0 / (4.0 * g)) * _pow_2_3(pi_star / (pi_star - 1.0) ** 2) * _cbrt(eps)
    second = (
        (5.0 - 2.0 * g)
        * pi_star
        / (2.0 * g * (pi_star - 1.0) ** 2)
        * _second_order_factor(pi_star, g)
        * _pow_2_3(eps)
    )
    return centre - first - second, centre + first - second


def stats_expansion(params: MarketParams, pref: Preference) -> AsymptoticStats:
    """Mean, volatility, trading cost and equivalent safe rate through eps^(2/3)."""
    pi_star = _check(params, pref)
    g = pref.gamma
    mu, sigma, r, eps = params.mu, params.sigma, params.r, params.epsilon
    c = _second_order_factor(pi_star, g)
    e23 = _pow_2_3(eps)
    # the mean follows from m = ESR + gamma s^2 / 2; the commonly printed form carries an
    # extra 1/gamma and is only right at gamma = 1, so it is kept for comparison only
    m_term = sigma**2 / 2.0 * pi_star * (5.0 * pi_star - 3.0) * c * e23
    m_hat = r + mu**2 / (g * sigma**2) - m_term
    m_hat_printed = r + mu**2 / (g * sigma**2) - m_term / g
    s_hat = mu / (g * sigma) - sigma * (7.0 * pi_star - 3.0) / (4.0 * g) * c * e23
    atc = 3.0 * sigma**2 / g * _pow_4_3(g * pi_star * (pi_star - 1.0) / 6.0) * e23
    esr = (
        r
        + g * sigma**2 / 2.0 * pi_star**2
        - g * sigma**2 / 2.0 * _pow_2_3(3.0 / (4.0 * g) * pi_star**2 * (pi_star - 1.0) ** 2) * e23
    )
    pi_minus, pi_plus = boundaries_expansion(params, pref)
    return AsymptoticStats(pi_minus, pi_plus, m_hat, s_hat, atc, esr, m_hat_printed)


def risk_neutral_expansion(params: MarketParams, include_one: bool = True):
    """Return-maximizing boundaries (pi_-, pi_+) to leading order in eps^(-1/2).

    ``include_one`` adds the order-one term; dropping it gives the bare
    leading term (1-kappa) sqrt(kappa) sqrt(mu/sigma^2) / sqrt(eps).
    """
    from .fbp import kappa_root

    kappa = kappa_root()
    scale = np.sqrt(params.mu / params.sigma**2 / params.epsilon)
    shift = 1.0 if include_one else 0.0
    pi_plus = np.sqrt(kappa) * scale + shift
    pi_minus = (1.0 - kappa) * np.sqrt(kappa) * scale + shift
    return float(pi_minus), float(pi_plus)
