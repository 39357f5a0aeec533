"""Efficient frontier across risk aversion, the leverage multiplier table, and the gamma -> 0 limit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import ergodic, fbp, model
from .errors import DomainError, LevlimError
from .fbp import Band, SolveReport
from .model import MarketParams, Preference

# Published leverage multipliers at Sharpe ratio 0.5, keyed by (sigma, epsilon):
# (numerical solution, printed closed-form approximation).
REFERENCE_MULTIPLIERS = {
    (0.10, 1e-4): (71.85, 71.22),
    (0.10, 1e-3): (23.15, 22.58),
    (0.10, 1e-2): (7.72, 7.12),
    (0.20, 1e-4): (50.88, 50.36),
    (0.20, 1e-3): (16.45, 15.92),
    (0.20, 1e-2): (5.56, 5.04),
    (0.50, 1e-4): (32.30, 31.85),
    (0.50, 1e-3): (10.54, 10.07),
    (0.50, 1e-2): (3.66, 3.18),
}
TABLE_SIGMAS = (0.10, 0.20, 0.50)
TABLE_EPSILONS = (1e-4, 1e-3, 1e-2)
PRINTED_CONSTANT = 0.3815


@dataclass
class FrontierPoint:
    gamma: float
    band: Optional[Band]
    m_hat_excess: float
    s_hat: float
    esr: float
    atc: float
    m_multiple: float
    s_multiple: float
    residual_norm: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def pi_minus(self) -> float:
        return self.band.pi_minus if self.band is not None else math.nan

    @property
    def pi_plus(self) -> float:
        return self.band.pi_plus if self.band is not None else math.nan


def _failed_point(gamma, message) -> FrontierPoint:
    nan = math.nan
    return FrontierPoint(gamma, None, nan, nan, nan, nan, nan, nan, nan, message)


def point_from_report(report: SolveReport) -> FrontierPoint:
    params, pref = report.params, report.pref
    if report.band.is_degenerate:
        return FrontierPoint(pref.gamma, report.band, params.mu, params.sigma, report.esr, 0.0, 1.0, 1.0)
    st = ergodic.long_run_stats(report.band, params, pref)
    excess = st.m_hat - params.r
    return FrontierPoint(
        pref.gamma,
        report.band,
        excess,
        st.s_hat,
        st.esr,
        st.atc,
        excess / params.mu,
        st.s_hat / params.sigma,
        report.residual_norm,
    )


def default_gammas(params: MarketParams, n: int = 60, smallest: float = 1e-5) -> list:
    """Geometric grid from 10 mu/sigma^2 down to ``smallest``, plus mu/sigma^2 itself and 0."""
    g0 = model.degenerate_gamma(params)
    grid = set(np.geomspace(10.0 * g0, smallest, n).tolist())
    grid.add(g0)
    return sorted(grid, reverse=True) + [0.0]


def _solve_with_continuation(params, pref, previous: Optional[SolveReport], force):
    """Neighbouring solution first when it lies on the right branch, then the asymptotic start."""
    errors = []
    starts = [None]
    if previous is not None and not previous.band.is_degenerate:
        leveraged = model.merton_fraction(params, pref) > 1.0
        if (previous.band.zeta_minus < 0) == leveraged:
            starts.insert(0, (previous.band.zeta_minus, previous.band.zeta_plus))
    for start in starts:
        try:
            return fbp.solve_risk_averse(params, pref, initial=start, force=force)
        except LevlimError as exc:
            errors.append(str(exc))
    raise fbp.ConvergenceError("; ".join(errors))


def sweep(params: MarketParams, gammas: Optional[Sequence[float]] = None, force: bool = False,
          with_reports: bool = False):
    """One frontier point per gamma, in the order given (descending gammas, 0 last).

    Solves continue from the previous point when the asymptotic start fails, which
    matters at small gamma where the frictionless weight leaves the admissible range.
    Failed points are kept with their error message.
    """
    if gammas is None:
        gammas = default_gammas(params)
    gammas = [float(g) for g in gammas]
    if any(g < 0 for g in gammas):
        raise DomainError("negative gamma is outside the efficient frontier")
    g0 = model.degenerate_gamma(params)
    points, reports = [], []
    previous = None
    for g in gammas:
        pref = Preference(g)
        try:
            if g == 0.0:
                rep = fbp.solve_risk_neutral(params, force=force)
            elif abs(g - g0) <= fbp.DEGENERATE_RTOL * max(1.0, g0):
                rep = fbp.solve_risk_averse(params, Preference(g0), force=force)
                rep.pref = pref
            else:
                rep = _solve_with_continuation(params, pref, previous, force)
            points.append(point_from_report(rep))
            reports.append(rep)
            previous = rep
        except LevlimError as exc:
            points.append(_failed_point(g, str(exc)))
            reports.append(None)
    return (points, reports) if with_reports else points


def frictionless_frontier(params: MarketParams, s_multiples) -> np.ndarray:
    """Excess return multiple on the frictionless frontier: equal to the volatility multiple."""
    return np.asarray(s_multiples, dtype=float)


@dataclass(frozen=True)
class MultiplierCell:
    sigma: float
    epsilon: float
    exact: float
    approx: float
    leading: float
    error: Optional[str] = None


def multiplier_table(sharpe: float = 0.5, sigmas=TABLE_SIGMAS, epsilons=TABLE_EPSILONS,
                     force: bool = False) -> list:
    """Rows of MultiplierCell, one row per sigma, with mu = sharpe * sigma."""
    table = []
    for s in sigmas:
        row = []
        for e in epsilons:
            params = MarketParams(mu=sharpe * s, sigma=s, r=0.0, epsilon=e)
            try:
                m = fbp.multiplier(params, force=force)
                row.append(MultiplierCell(s, e, m.exact, m.approx, m.leading))
            except LevlimError as exc:
                nan = math.nan
                row.append(MultiplierCell(s, e, nan, nan, nan, str(exc)))
        table.append(row)
    return table


def multiplier_constant_audit(table=None, band: float = 0.02) -> dict:
    """Compare closed-form conventions with the published bracketed approximations.

    Three conventions are tried: the derived constant (1-kappa) sqrt(kappa) with and
    without the order-one term, and the printed constant 0.3815 without it.  For each
    the largest relative deviation over the nine cells is reported, with a flag for
    whether it stays within ``band``.
    """
    kappa = fbp.kappa_root()
    derived = (1.0 - kappa) * math.sqrt(kappa)
    conventions = {
        "derived_with_one": lambda s, e: derived * math.sqrt(0.5 / s / e) + 1.0,
        "derived_without_one": lambda s, e: derived * math.sqrt(0.5 / s / e),
        "printed_without_one": lambda s, e: PRINTED_CONSTANT * math.sqrt(0.5 / s / e),
    }
    cells = []
    worst = {k: 0.0 for k in conventions}
    for (s, e), (exact_pub, bracket) in sorted(REFERENCE_MULTIPLIERS.items()):
        row = {"sigma": s, "epsilon": e, "published_exact": exact_pub, "published_bracket": bracket}
        for name, f in conventions.items():
            val = f(s, e)
            rel = abs(val - bracket) / bracket
            row[name] = val
            row[name + "_rel_dev"] = rel
            worst[name] = max(worst[name], rel)
        cells.append(row)
    reproduces = {k: v <= band for k, v in worst.items()}
    matching = [k for k, ok in reproduces.items() if ok]
    return {
        "kappa": kappa,
        "derived_constant": derived,
        "printed_constant": PRINTED_CONSTANT,
        "max_rel_dev": worst,
        "within_band": reproduces,
        "band": band,
        "best_convention": min(worst, key=worst.get),
        "matching_conventions": matching,
        "cells": cells,
    }


@dataclass
class ConvergenceRow:
    gamma: float
    zeta_minus: float
    zeta_plus: float
    esr: float
    gap_minus: float
    gap_plus: float
    buy_hold_bound: float


@dataclass
class ConvergenceResult:
    limit: SolveReport
    rows: list
    extrapolated: tuple
    monotone_gaps: bool
    esr_monotone: bool
    esr_bounded: bool
    above_buy_hold: bool
    notes: list = field(default_factory=list)


def buy_hold_bound(params: MarketParams, gamma: float, delta: float) -> float:
    """Lower bound r + mu - gamma sigma^2/2 + (mu - gamma sigma^2) delta / 2 on the ESR of the band
    buying at 1 + delta and selling at (1 - delta)/eps."""
    return params.r + params.mu - 0.5 * gamma * params.sigma**2 + 0.5 * (params.mu - gamma * params.sigma**2) * delta


def buy_hold_band(params: MarketParams, delta: float) -> Band:
    return Band.from_pi(1.0 + delta, (1.0 - delta) / params.epsilon, params)


def convergence_check(params: MarketParams, gammas=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5), delta: float = 0.01,
                      force: bool = False) -> ConvergenceResult:
    """Boundaries and ESR along gamma -> 0 against the return-maximizing band.

    Solves gamma = 0 first and continues upward, so every solve starts next to its
    answer.  Gaps are relative to |zeta_pm(0)|.
    """
    params.require_strong_drift()
    gammas = sorted((float(g) for g in gammas), reverse=True)
    if any(g <= 0 for g in gammas):
        raise DomainError("convergence gammas must be positive")
    limit = fbp.solve_risk_neutral(params, force=force)
    zm0, zp0 = limit.band.zeta_minus, limit.band.zeta_plus
    reports = {}
    start = (zm0, zp0)
    for g in sorted(gammas):
        rep = fbp.solve_risk_averse(params, Preference(g), initial=start, force=force)
        reports[g] = rep
        start = (rep.band.zeta_minus, rep.band.zeta_plus)
    rows = []
    for g in gammas:
        b = reports[g].band
        rows.append(ConvergenceRow(
            g, b.zeta_minus, b.zeta_plus, reports[g].esr,
            abs(b.zeta_minus - zm0) / abs(zm0), abs(b.zeta_plus - zp0) / abs(zp0),
            buy_hold_bound(params, g, delta),
        ))
    # linear extrapolation to gamma = 0 from the two smallest gammas
    r1, r2 = rows[-1], rows[-2]
    w = r1.gamma / (r2.gamma - r1.gamma)
    extrap = (r1.zeta_minus - w * (r2.zeta_minus - r1.zeta_minus),
              r1.zeta_plus - w * (r2.zeta_plus - r1.zeta_plus))
    gaps_m = [r.gap_minus for r in rows]
    gaps_p = [r.gap_plus for r in rows]
    monotone = all(a > b for a, b in zip(gaps_m, gaps_m[1:])) and all(a > b for a, b in zip(gaps_p, gaps_p[1:]))
    esrs = [r.esr for r in rows]
    esr_monotone = all(a < b for a, b in zip(esrs, esrs[1:]))
    ceiling = params.r + params.mu * limit.band.pi_minus
    bounded = all(e <= ceiling + 1e-12 for e in esrs)
    above = all(r.esr >= r.buy_hold_bound for r in rows)
    return ConvergenceResult(limit, rows, extrap, monotone, esr_monotone, bounded, above)


def _efficient_branch(points):
    """(s_hat, m_hat_excess) along decreasing gamma up to the maximum expected return."""
    pts = [p for p in points if p.ok]
    pts = sorted(pts, key=lambda p: -p.gamma)
    s = np.array([p.s_hat for p in pts])
    m = np.array([p.m_hat_excess for p in pts])
    k = int(np.argmax(m))
    return s[: k + 1], m[: k + 1]


def dominates(upper_points, lower_points, n_grid: int = 200, tol: float = 1e-10) -> dict:
    """Whether the first frontier's m_hat(s_hat) is at least the second's on their common s_hat range.

    Both frontiers are linearly interpolated in s_hat along their efficient branch.
    """
    s1, m1 = _efficient_branch(upper_points)
    s2, m2 = _efficient_branch(lower_points)
    if np.any(np.diff(s1) <= 0) or np.any(np.diff(s2) <= 0):
        raise DomainError("frontier volatility is not increasing along the efficient branch")
    lo, hi = max(s1[0], s2[0]), min(s1[-1], s2[-1])
    if not lo < hi:
        return {"overlap": (lo, hi), "dominates": True, "min_gap": math.nan, "argmin_s": math.nan,
                "violation_range": None, "empty": True}
    grid = np.linspace(lo, hi, n_grid)
    gap = np.interp(grid, s1, m1) - np.interp(grid, s2, m2)
    bad = grid[gap < -tol]
    violated = (float(bad.min()), float(bad.max())) if bad.size else None
    return {"overlap": (float(lo), float(hi)), "dominates": bad.size == 0,
            "min_gap": float(np.min(gap)), "argmin_s": float(grid[int(np.argmin(gap))]),
            "violation_range": violated, "empty": False}


def fixed_sharpe_frontiers(sharpe: float, sigmas, epsilon: float, gammas_per: int = 60) -> dict:
    """Frontiers for assets sharing a Sharpe ratio, keyed by sigma."""
    out = {}
    for s in sigmas:
        params = MarketParams(mu=sharpe * s, sigma=s, r=0.0, epsilon=epsilon)
        out[s] = sweep(params, default_gammas(params, n=gammas_per))
    return out
