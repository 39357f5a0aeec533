"""Stationary law of the reflected risky/safe ratio and exact long-run statistics.

Under a band policy the ratio zeta is a geometric Brownian motion with drift mu
and volatility sigma reflected at the band edges; its stationary density is a
power law |zeta|^(a-2) with a = 2 mu / sigma^2.  Everything here is written in
|zeta|-power form so the leveraged (negative) branch never raises a negative base
to a real power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import model
from .errors import DomainError, NumericalError
from .fbp import Band
from .model import MarketParams, Preference

SINGULAR_TOL = 1e-8
QUAD_EPSREL = 1e-12


@dataclass(frozen=True)
class ErgodicStats:
    m_hat: float
    s_hat: float
    atc: float
    esr: float
    normalizer_c: float
    mean_pi: float = math.nan
    mean_pi_sq: float = math.nan


def _require_band(band: Band):
    if band.is_degenerate:
        raise DomainError("a degenerate band has no stationary density")
    if not band.zeta_minus < band.zeta_plus:
        raise DomainError("band is inverted")


def _log_ends(band: Band):
    """(log|zeta| nearest zero, log|zeta| farthest from zero)."""
    la, lb = math.log(abs(band.zeta_minus)), math.log(abs(band.zeta_plus))
    return (la, lb) if la < lb else (lb, la)


def log_normalizer(band: Band, params: MarketParams) -> float:
    """log of c = integral of |zeta|^(a-2) over the band."""
    _require_band(band)
    b = params.exponent - 1.0
    l_near, l_far = _log_ends(band)
    span = l_far - l_near
    if abs(b) < SINGULAR_TOL:
        return math.log(span)
    return b * l_near + math.log(math.expm1(b * span) / b)


def normalizer(band: Band, params: MarketParams) -> float:
    return math.exp(log_normalizer(band, params))


def stationary_density(band: Band, params: MarketParams):
    """Density nu of zeta on [zeta_-, zeta_+]; vectorized, zero outside the band."""
    _require_band(band)
    log_c = log_normalizer(band, params)
    a2 = params.exponent - 2.0
    lo, hi = band.zeta_minus, band.zeta_plus

    def nu(zeta):
        z = np.asarray(zeta, dtype=float)
        inside = (z >= lo) & (z <= hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = np.exp(a2 * np.log(np.abs(z)) - log_c)
        out = np.where(inside, dens, 0.0)
        return float(out) if out.ndim == 0 else out

    return nu


def _expect(func, band: Band, params: MarketParams, what: str) -> float:
    """Stationary expectation of func(zeta) by adaptive quadrature."""
    log_c = log_normalizer(band, params)
    a2 = params.exponent - 2.0

    def f(z):
        return func(z) * math.exp(a2 * math.log(abs(z)) - log_c)

    value, abserr, *rest = integrate.quad(
        f, band.zeta_minus, band.zeta_plus, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200, full_output=1
    )
    if len(rest) > 1 and abserr > 1e-9 * abs(value) + 1e-300:
        raise NumericalError(f"{what}: quadrature did not converge ({rest[1]})", achieved=abserr)
    return value


def occupancy_moments(band: Band, params: MarketParams):
    """Long-run averages of pi and pi^2 (the normalized I_mu / c and I_s2 / c)."""
    _require_band(band)
    mean_pi = _expect(lambda z: z / (1.0 + z), band, params, "E[pi]")
    mean_pi_sq = _expect(lambda z: (z / (1.0 + z)) ** 2, band, params, "E[pi^2]")
    return mean_pi, mean_pi_sq


def expected_reward(band: Band, params: MarketParams, pref: Preference) -> float:
    """Stationary mean of h, the frictionless part of the objective."""
    return _expect(lambda z: model.h(z, params, pref), band, params, "E[h]")


def atc_closed_form(band: Band, params: MarketParams) -> float:
    """Long-run rate of wealth lost to the spread, from the local time at zeta_+.

    Valid for any admissible band, optimal or not.
    """
    _require_band(band)
    zp = band.zeta_plus
    b = params.exponent - 1.0
    log_q = math.log(band.zeta_minus / zp)
    gz = model.G(zp, params) * zp
    if abs(b) < SINGULAR_TOL:
        factor = -1.0 / log_q
    else:
        factor = b / (-math.expm1(b * log_q))
    return 0.5 * params.sigma**2 * gz * factor


def _boundary_terms(band: Band, params: MarketParams, log_c: float) -> float:
    """(|zeta_+|^a / (1+zeta_+) - |zeta_-|^a / (1+zeta_-)) / c, overflow-safe."""
    a = params.exponent
    out = 0.0
    for z, sgn in ((band.zeta_plus, 1.0), (band.zeta_minus, -1.0)):
        out += sgn * math.exp(a * math.log(abs(z)) - log_c) / (1.0 + z)
    return out


def long_run_stats(band: Band, params: MarketParams, pref: Preference) -> ErgodicStats:
    """Closed-form m_hat, s_hat, ATC and ESR for the OPTIMAL band of ``pref``.

    Uses the identity E[h] = h(zeta_-) + ATC, which holds only when the band
    solves the matching conditions.  At gamma = 1 the variance cannot be
    extracted from that identity and is integrated directly.  For arbitrary
    bands use :func:`policy_stats`.
    """
    _require_band(band)
    log_c = log_normalizer(band, params)
    c = math.exp(log_c)
    atc = atc_closed_form(band, params)
    h_lo = model.h(band.zeta_minus, params, pref)
    g = pref.gamma
    if abs(1.0 - g) < SINGULAR_TOL:
        _, mean_pi_sq = occupancy_moments(band, params)
        s2 = params.sigma**2 * mean_pi_sq
    else:
        s2 = 2.0 / (1.0 - g) * (h_lo + atc) - params.sigma**2 / (1.0 - g) * _boundary_terms(band, params, log_c)
    m_hat = params.r + 0.5 * g * s2 + h_lo
    esr = m_hat - 0.5 * g * s2
    return ErgodicStats(m_hat, math.sqrt(max(s2, 0.0)), atc, esr, c)


def policy_stats(band: Band, params: MarketParams, pref: Preference) -> ErgodicStats:
    """Long-run statistics of ANY admissible band policy by direct quadrature.

    m_hat = r + mu E[pi] - ATC, s_hat^2 = sigma^2 E[pi^2], ESR = m_hat - gamma s_hat^2 / 2.
    """
    _require_band(band)
    mean_pi, mean_pi_sq = occupancy_moments(band, params)
    atc = atc_closed_form(band, params)
    m_hat = params.r + params.mu * mean_pi - atc
    s2 = params.sigma**2 * mean_pi_sq
    esr = m_hat - 0.5 * pref.gamma * s2
    return ErgodicStats(m_hat, math.sqrt(s2), atc, esr, normalizer(band, params), mean_pi, mean_pi_sq)


def integration_by_parts_gap(band: Band, params: MarketParams) -> float:
    """Difference of the two sides of I_mu = [|z|^a/(a(1+z))] + I_s2 / a, normalized by c."""
    a = params.exponent
    log_c = log_normalizer(band, params)
    mean_pi, mean_pi_sq = occupancy_moments(band, params)
    rhs = _boundary_terms(band, params, log_c) / a + mean_pi_sq / a
    return mean_pi - rhs
