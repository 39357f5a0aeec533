"""Free-boundary solver for the no-trade band.

Inside the band the marginal value W solves the first-order ODE

    sigma^2 zeta^2 / 2 * W'(zeta) + mu zeta W(zeta) = h(zeta) - h(zeta_-),

with W(zeta_-) = 0, so W is a single integral of h.  Matching W and W' to the
selling-cost gradient G at zeta_+ gives two equations in (zeta_-, zeta_+), which
are solved by damped Newton.  The return-maximizing case (gamma = 0) pushes the
band towards zeta = -1 and is solved in the stretched coordinate
u = (-1 - zeta) / sqrt(eps).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from . import model
from .errors import ConvergenceError, DomainError, NumericalError
from .model import MarketParams, Preference, Regime
from .newton import damped_newton

QUAD_EPSREL = 1e-12
NEWTON_TOL = 1e-11
MAX_EPSILON = 0.1
DEGENERATE_RTOL = 1e-6
# Far out on the leveraged branch W and G both vanish, so tiny absolute residuals can
# come from a band that matches nothing; solutions must also match G relatively.
RELATIVE_MATCH_TOL = 1e-6


class Method(enum.Enum):
    RISK_AVERSE = "RiskAverse"
    RISK_NEUTRAL = "RiskNeutral"


@dataclass(frozen=True)
class Band:
    """No-trade interval in ratio and weight coordinates."""

    zeta_minus: float
    zeta_plus: float
    pi_minus: float
    pi_plus: float
    regime: Regime

    @classmethod
    def from_zeta(cls, zeta_minus, zeta_plus, params: MarketParams, pi_minus=None, pi_plus=None):
        if pi_minus is None:
            pi_minus = model.pi_of_zeta(zeta_minus)
        if pi_plus is None:
            pi_plus = model.pi_of_zeta(zeta_plus)
        band = cls(float(zeta_minus), float(zeta_plus), float(pi_minus), float(pi_plus), classify(zeta_minus, zeta_plus, params))
        return band

    @classmethod
    def from_pi(cls, pi_minus, pi_plus, params: MarketParams):
        return cls.from_zeta(model.zeta_of_pi(pi_minus), model.zeta_of_pi(pi_plus), params, pi_minus, pi_plus)

    @classmethod
    def degenerate(cls):
        return cls(math.inf, math.inf, 1.0, 1.0, Regime.DEGENERATE)

    @property
    def is_degenerate(self) -> bool:
        return self.regime is Regime.DEGENERATE

    @property
    def sign(self) -> float:
        return 1.0 if self.regime is Regime.LONG_ONLY else -1.0

    @property
    def log_width(self) -> float:
        """Width of the band in log|zeta|."""
        return abs(math.log(abs(self.zeta_plus)) - math.log(abs(self.zeta_minus)))


def classify(zeta_minus, zeta_plus, params: MarketParams) -> Regime:
    """Regime of a band, raising DomainError for inadmissible or inverted bands."""
    if not zeta_minus < zeta_plus:
        raise DomainError(f"band needs zeta_- < zeta_+, got ({zeta_minus}, {zeta_plus})")
    if zeta_minus > 0:
        return Regime.LONG_ONLY
    if zeta_plus < -1.0 / (1.0 - params.epsilon):
        pi_plus = zeta_plus / (1.0 + zeta_plus)
        if not pi_plus < 1.0 / params.epsilon:
            raise DomainError(f"pi_+ = {pi_plus} violates the liquidation bound 1/eps")
        return Regime.LEVERAGED
    raise DomainError(
        f"band ({zeta_minus}, {zeta_plus}) is not inside zeta > 0 or zeta < -1/(1-eps)"
    )


def _same_branch(zeta_minus, zeta):
    return (zeta_minus > 0 and zeta > 0) or (zeta_minus < -1 and zeta < -1)


def _quad(func, a, b, what):
    value, abserr, *rest = integrate.quad(func, a, b, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200, full_output=1)
    if abserr > 1e-9 * abs(value) + 1e-300 and len(rest) > 1:
        raise NumericalError(f"{what}: quadrature did not converge ({rest[1]})", achieved=abserr)
    return value


def _w_kernel_integral(lo, hi, zeta_minus, params, pref, ref):
    """Integral of (h(y) - h(zeta_-)) |y/ref|^(a-2) dy over [lo, hi]."""
    a2 = params.exponent - 2.0
    log_ref = math.log(abs(ref))

    def f(y):
        return model.h_diff(y, zeta_minus, params, pref) * math.exp(a2 * (math.log(abs(y)) - log_ref))

    return _quad(f, lo, hi, "W integral")


def _w_from_integral(k, zeta, zeta_minus, params, pref, ref):
    a = params.exponent
    sigma2 = params.sigma**2
    scale = math.exp((a - 2.0) * (math.log(abs(ref)) - math.log(abs(zeta))))
    w = 2.0 / (sigma2 * zeta * zeta) * k * scale
    dw = 2.0 * model.h_diff(zeta, zeta_minus, params, pref) / (sigma2 * zeta * zeta) - a * w / zeta
    return w, dw


def eval_W(zeta_minus: float, zeta: float, params: MarketParams, pref: Preference):
    """Marginal value W(zeta) and its derivative for a band starting at zeta_minus.

    W' comes from the first-order ODE, not from differencing the quadrature.
    """
    if not _same_branch(zeta_minus, zeta):
        raise DomainError(f"zeta_-={zeta_minus} and zeta={zeta} are not on the same branch")
    if zeta == zeta_minus:
        return 0.0, 0.0
    k = _w_kernel_integral(zeta_minus, zeta, zeta_minus, params, pref, zeta)
    return _w_from_integral(k, zeta, zeta_minus, params, pref, zeta)


class WEvaluator:
    """Callable W on [zeta_-, zeta_+]; arrays are integrated piecewise and accumulated."""

    def __init__(self, zeta_minus, zeta_plus, params, pref):
        self.zeta_minus = zeta_minus
        self.zeta_plus = zeta_plus
        self.params = params
        self.pref = pref

    def __call__(self, zeta):
        z = np.asarray(zeta, dtype=float)
        if z.ndim == 0:
            return eval_W(self.zeta_minus, float(z), self.params, self.pref)
        lo, hi = self.zeta_minus, self.zeta_plus
        if np.any(z < lo - 1e-12 * abs(lo)) or np.any(z > hi + 1e-12 * abs(hi)):
            raise DomainError("W evaluator called outside [zeta_-, zeta_+]")
        order = np.argsort(z)
        w = np.empty_like(z)
        dw = np.empty_like(z)
        ref = self.zeta_minus
        acc = 0.0
        prev = self.zeta_minus
        for idx in order:
            zi = float(z[idx])
            if zi != prev:
                acc += _w_kernel_integral(prev, zi, self.zeta_minus, self.params, self.pref, ref)
                prev = zi
            if zi == self.zeta_minus:
                w[idx], dw[idx] = 0.0, 0.0
            else:
                w[idx], dw[idx] = _w_from_integral(acc, zi, self.zeta_minus, self.params, self.pref, ref)
        return w, dw


@dataclass
class SolveReport:
    band: Band
    lam: float
    residual_norm: float
    w_eval: Optional[WEvaluator]
    iterations: int
    method: Method
    params: MarketParams
    pref: Preference
    converged: bool = True
    warnings: list = field(default_factory=list)
    stretched: Optional[tuple] = None

    @property
    def esr(self) -> float:
        """Equivalent safe rate r + lambda of the optimal policy."""
        return self.params.r + self.lam


def residual_risk_averse(zeta_minus, zeta_plus, params: MarketParams, pref: Preference):
    """Value-matching and smooth-pasting residuals (psi1, psi2) at zeta_+."""
    eps = params.epsilon
    w, _ = eval_W(zeta_minus, zeta_plus, params, pref)
    psi1 = w - eps / ((1.0 + zeta_plus) * (1.0 + (1.0 - eps) * zeta_plus))
    psi2 = (
        2.0 * model.h_diff(zeta_plus, zeta_minus, params, pref) / (params.sigma**2 * zeta_plus**2)
        - params.exponent / zeta_plus * w
        - (1.0 - eps) ** 2 / (1.0 + (1.0 - eps) * zeta_plus) ** 2
        + 1.0 / (1.0 + zeta_plus) ** 2
    )
    return psi1, psi2


def _admissible_pair(x, params):
    zm, zp = x
    if not zm < zp:
        return False
    if zm > 0:
        return True
    return zp < -1.0 / (1.0 - params.epsilon) and zp / (1.0 + zp) < 1.0 / params.epsilon


def _guard_epsilon(params, force):
    if params.epsilon > MAX_EPSILON and not force:
        raise DomainError(
            f"epsilon={params.epsilon} exceeds {MAX_EPSILON}; the small-spread solution may not exist "
            "(pass force=True, or --force on the command line, to try anyway)"
        )


def _shrink_initializer(zm, zp, centre, params, notes):
    """Pull an inadmissible initial band towards its centre until it fits its branch."""
    for _ in range(60):
        if _admissible_pair((zm, zp), params):
            return zm, zp
        zm = centre + 0.5 * (zm - centre)
        zp = centre + 0.5 * (zp - centre)
    raise DomainError(
        "asymptotic initializer is outside the admissible domain; try a smaller epsilon or another gamma"
    )


def solve_risk_averse(
    params: MarketParams,
    pref: Preference,
    initial=None,
    tol: float = NEWTON_TOL,
    max_iter: int = 100,
    force: bool = False,
) -> SolveReport:
    """Optimal band for gamma > 0.

    ``initial`` optionally overrides the asymptotic starting band (zeta_-, zeta_+),
    which is how frontier sweeps continue from a neighbouring gamma.
    """
    if pref.gamma <= 0:
        raise DomainError("solve_risk_averse needs gamma > 0; use solve_risk_neutral")
    _guard_epsilon(params, force)
    pi_star = model.merton_fraction(params, pref)
    if abs(pi_star - 1.0) <= DEGENERATE_RTOL:
        lam = params.mu - 0.5 * pref.gamma * params.sigma**2
        return SolveReport(Band.degenerate(), lam, 0.0, None, 0, Method.RISK_AVERSE, params, pref)

    notes = []
    if initial is None:
        starts = [_initial_band(params, pref, notes)] + _fallback_starts(params, pref)
    else:
        start = tuple(float(v) for v in initial)
        if not _admissible_pair(start, params):
            raise DomainError(f"initial band {start} is not admissible")
        starts = [start]

    def residual(x):
        return np.array(residual_risk_averse(x[0], x[1], params, pref))

    expected = Regime.LONG_ONLY if pi_star < 1 else Regime.LEVERAGED
    failure = None
    for k, start in enumerate(starts):
        try:
            res = damped_newton(residual, list(start), tol=tol, max_iter=max_iter,
                                admissible=lambda x: _admissible_pair(x, params))
            res = _polish(residual, res, params, max_iter)
            zm, zp = res.x
            _check_relative_match(zm, zp, params, pref, res)
            band = Band.from_zeta(zm, zp, params)
            if band.regime is not expected:
                raise ConvergenceError(f"converged to a {band.regime.value} band while pi*={pi_star}",
                                       last_iterate=res.x, residual_norm=res.residual_norm)
            break
        except ConvergenceError as exc:
            failure = exc
            if k + 1 < len(starts):
                notes.append(f"start {k} failed ({exc}); retrying from an alternative start")
    else:
        raise failure
    lam = model.h(zm, params, pref)
    return SolveReport(band, lam, res.residual_norm, WEvaluator(zm, zp, params, pref), res.iterations,
                       Method.RISK_AVERSE, params, pref, warnings=notes)


def _polish(residual, res, params, max_iter):
    """Tighten the absolute tolerance to the size of G at zeta_+ when G itself is tiny."""
    zp = res.x[1]
    scale = min(model.G(zp, params), abs(model.G_prime(zp, params)))
    target = 1e-3 * RELATIVE_MATCH_TOL * scale
    if res.residual_norm <= target:
        return res
    try:
        return damped_newton(residual, res.x, tol=target, max_iter=max_iter,
                             admissible=lambda x: _admissible_pair(x, params))
    except ConvergenceError:
        return res


def _check_relative_match(zm, zp, params, pref, res):
    psi1, psi2 = residual_risk_averse(zm, zp, params, pref)
    rel = max(abs(psi1) / model.G(zp, params), abs(psi2) / abs(model.G_prime(zp, params)))
    if not rel <= RELATIVE_MATCH_TOL:
        raise ConvergenceError(
            f"Newton reached a spurious band ({zm:.6g}, {zp:.6g}): residuals are small only because "
            f"G is small there (relative mismatch {rel:.3g}); start closer to the solution",
            last_iterate=res.x, residual_norm=res.residual_norm, iterations=res.iterations,
        )


def _fallback_starts(params, pref):
    """Alternative starts: the weight-space expansion mapped to ratios, then its first-order part."""
    from .asymptotics import boundaries_expansion

    pi_star = model.merton_fraction(params, pref)
    out = []
    pm, pp = boundaries_expansion(params, pref)
    half = 0.5 * (pp - pm)
    for lo, hi in ((pm, pp), (pi_star - half, pi_star + half)):
        if lo == 1.0 or hi == 1.0 or (lo - 1.0) * (hi - 1.0) <= 0:
            continue
        pair = (model.zeta_of_pi(lo), model.zeta_of_pi(hi))
        if _admissible_pair(pair, params):
            out.append(pair)
    return out


def _initial_band(params, pref, notes):
    from .asymptotics import zeta_expansion

    pi_star = model.merton_fraction(params, pref)
    zm, zp = zeta_expansion(params, pref)
    if _admissible_pair((zm, zp), params):
        return zm, zp
    centre = pi_star / (1.0 - pi_star)
    if not model.is_admissible(centre, params):
        raise DomainError(f"frictionless weight {pi_star} is beyond the liquidation bound 1/eps")
    # the second-order shift can push the band across a branch limit; drop it first
    mid = 0.5 * (zm + zp)
    half = 0.5 * abs(zp - zm)
    zm, zp = centre - half, centre + half
    msg = f"asymptotic initializer ({mid - half:.6g}, {mid + half:.6g}) inadmissible; shrinking towards zeta*={centre:.6g}"
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
    notes.append(msg)
    return _shrink_initializer(zm, zp, centre, params, notes)


def kappa_root() -> float:
    """Unique root in (1/3, 1) of 1.5 x + log(1 - x) = 0 (approximately 0.5828)."""

    def f(x):
        return 1.5 * x + math.log1p(-x)

    x = optimize.brentq(f, 1.0 / 3.0, 1.0 - 1e-12, xtol=1e-16, rtol=1e-15, maxiter=200)
    for _ in range(3):
        fx = f(x)
        if fx == 0.0:
            break
        x -= fx / (1.5 - 1.0 / (1.0 - x))
    return x


def leading_constants(params: MarketParams):
    """Zero-spread limits (A_-, A_+) of the stretched boundaries u_-, u_+."""
    kappa = kappa_root()
    root = math.sqrt(params.sigma**2 / params.mu)
    a_plus = root / math.sqrt(kappa)
    a_minus = a_plus / (1.0 - kappa)
    return a_minus, a_plus


def xi_integral(u_minus, u, delta, params: MarketParams):
    """W at zeta = -1 - u*delta for a band starting at -1 - u_minus*delta (gamma = 0)."""
    a2 = params.exponent - 2.0
    log_ref = math.log1p(u * delta)

    def f(xi):
        return (1.0 / u_minus - 1.0 / xi) * math.exp(a2 * (math.log1p(xi * delta) - log_ref))

    integral = _quad(f, u_minus, u, "stretched W integral")
    return 2.0 * params.mu / (params.sigma**2 * (1.0 + u * delta) ** 2) * integral


def residual_risk_neutral(u_minus, u_plus, delta, params: MarketParams):
    """Matching residuals (f1, f2) in stretched coordinates, 0 < u_+ < u_-."""
    if not 0 < u_plus < u_minus:
        raise DomainError(f"stretched boundaries need 0 < u_+ < u_-, got ({u_plus}, {u_minus})")
    xi = xi_integral(u_minus, u_plus, delta, params)
    d2 = delta * delta
    f1 = xi - 1.0 / (u_plus * ((1.0 - d2) * u_plus - delta))
    # delta * psi2 in stretched coordinates; the (1 + u_+ delta)^-2 factor matters at finite delta
    stretch = 1.0 + u_plus * delta
    f2 = params.exponent * ((1.0 / u_plus - 1.0 / u_minus) / stretch**2 + delta / stretch * xi) - (
        2.0 * (1.0 - d2) * u_plus - delta
    ) / (u_plus**2 * (delta + (d2 - 1.0) * u_plus) ** 2)
    return f1, f2


def solve_risk_neutral(
    params: MarketParams,
    tol: float = NEWTON_TOL,
    max_iter: int = 100,
    force: bool = False,
    initial=None,
) -> SolveReport:
    """Return-maximizing band (gamma = 0), Newton in u from (A_-, A_+)."""
    _guard_epsilon(params, force)
    if params.mu <= 0:
        raise DomainError("the return-maximizing band needs mu > 0")
    delta = math.sqrt(params.epsilon)
    u_floor = delta / (1.0 - delta * delta)

    def admissible(x):
        um, up = x
        return um > up > u_floor and 1.0 + 1.0 / (up * delta) < 1.0 / params.epsilon

    def residual(x):
        return np.array(residual_risk_neutral(x[0], x[1], delta, params))

    start = leading_constants(params) if initial is None else tuple(initial)
    res = damped_newton(residual, list(start), tol=tol, max_iter=max_iter, admissible=admissible)
    um, up = res.x
    zm, zp = -1.0 - um * delta, -1.0 - up * delta
    pi_minus = 1.0 + 1.0 / (um * delta)
    pi_plus = 1.0 + 1.0 / (up * delta)
    band = Band.from_zeta(zm, zp, params, pi_minus, pi_plus)
    pref = Preference(0.0)
    lam = params.mu * pi_minus
    return SolveReport(band, lam, res.residual_norm, WEvaluator(zm, zp, params, pref), res.iterations,
                       Method.RISK_NEUTRAL, params, pref, stretched=(um, up))


def solve(params: MarketParams, pref: Preference, force: bool = False, initial=None) -> SolveReport:
    """Dispatch on gamma."""
    if pref.risk_neutral:
        return solve_risk_neutral(params, force=force)
    return solve_risk_averse(params, pref, force=force, initial=initial)


def boundary_residuals(report: SolveReport) -> dict:
    """Absolute residuals of W(zeta_-)=0, W'(zeta_-)=0, W(zeta_+)=G, W'(zeta_+)=G'."""
    if report.band.is_degenerate:
        return {"value_lower": 0.0, "slope_lower": 0.0, "value_upper": 0.0, "slope_upper": 0.0}
    b = report.band
    w_lo, dw_lo = report.w_eval(b.zeta_minus)
    w_hi, dw_hi = report.w_eval(b.zeta_plus)
    return {
        "value_lower": abs(w_lo),
        "slope_lower": abs(dw_lo),
        "value_upper": abs(w_hi - model.G(b.zeta_plus, report.params)),
        "slope_upper": abs(dw_hi - model.G_prime(b.zeta_plus, report.params)),
    }


@dataclass(frozen=True)
class Multiplier:
    exact: float
    approx: float
    leading: float

    @property
    def constant(self) -> float:
        """(1 - kappa) sqrt(kappa), the coefficient of sqrt(mu/sigma^2/eps)."""
        k = kappa_root()
        return (1.0 - k) * math.sqrt(k)


def multiplier(params: MarketParams, force: bool = False) -> Multiplier:
    """Maximum return multiple pi_- at gamma = 0, with its closed-form approximations.

    ``approx`` includes the order-one term, ``leading`` is the bare eps^(-1/2) term.
    """
    from .asymptotics import risk_neutral_expansion

    report = solve_risk_neutral(params, force=force)
    approx, _ = risk_neutral_expansion(params, include_one=True)
    leading, _ = risk_neutral_expansion(params, include_one=False)
    return Multiplier(report.band.pi_minus, approx, leading)
