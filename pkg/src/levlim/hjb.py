"""Grid check of the HJB variational inequality for a band policy.

With V' = 0 below the band, V' = W inside and V' = G above, the candidate must satisfy

    min(A V - h + lambda, G - V', V') = 0,   A V = sigma^2 zeta^2 V''/2 + mu zeta V',

everywhere on the admissible set.  The regions outside the band are parametrized by
the weight pi, in which the operator has no poles: below the band it reduces to
lambda - h(pi), above it to the rational function

    L(pi) = sigma^2 pi^2 / 2 ((1-eps)^2 / (1-eps pi)^2 - 1) + mu eps pi (1-pi) / (1-eps pi) - h(pi) + lambda.

Inside the band V'' comes from the ODE, so the interior operator residual is exact up to
quadrature; the matching of W and W' to 0 and G, G' at the two edges is checked as well,
since a misplaced boundary shows up there first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model
from .errors import DomainError, LevlimError
from .fbp import Band, SolveReport, WEvaluator
from .model import MarketParams, Preference

DEFAULT_TOL = 1e-7
DEFAULT_POINTS = 2000
LIQUIDATION_MARGIN = 1e-6


@dataclass
class HjbReport:
    grid: dict
    min_operator_residual: float
    min_gradient_slack_lower: float
    min_gradient_slack_upper: float
    inside_residual_max: float
    boundary_mismatch: dict
    worst_pi: float
    worst_region: str
    tol: float
    passed: bool
    reason: str = ""
    values: dict = field(default_factory=dict, repr=False)

    @property
    def pass_(self) -> bool:
        return self.passed


def _failed(reason: str, tol: float) -> HjbReport:
    nan = math.nan
    return HjbReport({}, nan, nan, nan, nan, {}, nan, "", tol, False, reason)


def operator_below(pi, lam, params: MarketParams, pref: Preference):
    """A V - h + lambda where V' = 0 (buy region)."""
    return lam - model.h_of_pi(pi, params, pref)


def operator_above(pi, lam, params: MarketParams, pref: Preference):
    """A V - h + lambda where V' = G (sell region), written in the weight pi."""
    pi = np.asarray(pi, dtype=float)
    eps = params.epsilon
    one_m = 1.0 - eps * pi
    curvature = 0.5 * params.sigma**2 * pi**2 * ((1.0 - eps) ** 2 / one_m**2 - 1.0)
    drift = params.mu * eps * pi * (1.0 - pi) / one_m
    return curvature + drift - model.h_of_pi(pi, params, pref) + lam


def _grids(band: Band, params: MarketParams, n: int):
    eps = params.epsilon
    top = (1.0 - LIQUIDATION_MARGIN) / eps
    # below: (0, pi_-], denser towards pi_-
    below = band.pi_minus - (band.pi_minus * np.geomspace(1.0, 1e-9, n))
    below = below[(below > 0) & (below <= band.pi_minus)]
    below = np.append(below, band.pi_minus)
    # above: [pi_+, top], geometric towards the liquidation bound
    above = top - (top - band.pi_plus) * np.geomspace(1.0, 1e-9, n)
    above = np.concatenate(([band.pi_plus], above[above > band.pi_plus], [top]))
    inside = np.linspace(band.zeta_minus, band.zeta_plus, n)
    return np.unique(below), np.unique(above), inside


def verify_band(band: Band, params: MarketParams, pref: Preference, tol: float = DEFAULT_TOL,
                n_points: int = DEFAULT_POINTS, lam=None) -> HjbReport:
    """Check the variational inequality for an arbitrary band with V' built from it.

    ``lam`` defaults to h(zeta_-), the only value compatible with V' = 0 below the band.
    Inadmissible or inverted bands fail with a reason instead of raising.
    """
    try:
        if band.is_degenerate:
            raise DomainError("degenerate band has no no-trade region")
        fixed = Band.from_zeta(band.zeta_minus, band.zeta_plus, params, band.pi_minus, band.pi_plus)
    except DomainError as exc:
        return _failed(f"band not admissible: {exc}", tol)
    band = fixed
    if lam is None:
        lam = model.h(band.zeta_minus, params, pref)
    below, above, inside = _grids(band, params, n_points)

    op_below = operator_below(below, lam, params, pref)
    op_above = operator_above(above, lam, params, pref)

    w_eval = WEvaluator(band.zeta_minus, band.zeta_plus, params, pref)
    try:
        w, dw = w_eval(inside)
    except LevlimError as exc:
        return _failed(f"W evaluation failed: {exc}", tol)
    h_in = model.h(inside, params, pref)
    op_inside = 0.5 * params.sigma**2 * inside**2 * dw + params.mu * inside * w - h_in + lam
    g_in = model.G(inside, params)
    slack_lower = w
    slack_upper = g_in - w

    zp = band.zeta_plus
    mismatch = {
        "value_lower": abs(w[0]),
        "slope_lower": abs(dw[0]),
        "value_upper": abs(w[-1] - model.G(zp, params)),
        "slope_upper": abs(dw[-1] - model.G_prime(zp, params)),
    }
    inside_max = max(float(np.max(np.abs(op_inside))), max(mismatch.values()))

    pi_inside = inside / (1.0 + inside)
    candidates = [
        ("below", float(np.min(op_below)), below[int(np.argmin(op_below))]),
        ("above", float(np.min(op_above)), above[int(np.argmin(op_above))]),
        ("inside:V'", float(np.min(slack_lower)), pi_inside[int(np.argmin(slack_lower))]),
        ("inside:G-V'", float(np.min(slack_upper)), pi_inside[int(np.argmin(slack_upper))]),
    ]
    worst_region, _, worst_pi = min(candidates, key=lambda c: c[1])
    if inside_max > tol and inside_max >= -min(c[1] for c in candidates):
        key = max(mismatch, key=mismatch.get)
        worst_region = f"boundary:{key}"
        worst_pi = band.pi_minus if key.endswith("lower") else band.pi_plus
    min_op = min(candidates[0][1], candidates[1][1])
    passed = (
        min_op >= -tol
        and candidates[2][1] >= -tol
        and candidates[3][1] >= -tol
        and inside_max <= tol
    )
    return HjbReport(
        grid={"below": below, "inside": inside, "above": above},
        min_operator_residual=min_op,
        min_gradient_slack_lower=candidates[2][1],
        min_gradient_slack_upper=candidates[3][1],
        inside_residual_max=inside_max,
        boundary_mismatch=mismatch,
        worst_pi=float(worst_pi),
        worst_region=worst_region,
        tol=tol,
        passed=bool(passed),
        values={"below": op_below, "above": op_above, "inside": op_inside, "W": w, "G": g_in},
    )


def verify_hjb(report: SolveReport, tol: float = DEFAULT_TOL, n_points: int = DEFAULT_POINTS) -> HjbReport:
    """Verify a solver result; the report must come from a converged solve."""
    if not report.converged:
        raise DomainError("verify_hjb needs a converged SolveReport")
    if report.band.is_degenerate:
        # full investment: no trading region and nothing to verify beyond lambda
        return HjbReport({}, 0.0, 0.0, 0.0, 0.0, {}, 1.0, "", tol, True, "degenerate band")
    return verify_band(report.band, report.params, report.pref, tol=tol, n_points=n_points, lam=report.lam)


def perturb_upper(band: Band, params: MarketParams, factor: float = 1.05) -> Band:
    """Band with zeta_+ scaled by ``factor``; may be inverted, which verify_band reports as failure."""
    zp = band.zeta_plus * factor
    pi_plus = model.pi_of_zeta(zp)
    return Band(band.zeta_minus, zp, band.pi_minus, pi_plus, band.regime)
