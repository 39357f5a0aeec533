import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levlim import ConvergenceError, DomainError, MarketParams, Preference, Regime, fbp, model
from levlim.asymptotics import zeta_expansion

KAPPA = 0.5828116438658114


@pytest.fixture(scope="module")
def solved_log():
    params = MarketParams(0.08, 0.16, 0.0, 0.01)
    return fbp.solve(params, Preference(1.0))


def test_eval_w_at_lower_boundary(base_params, unit_pref):
    assert fbp.eval_W(2.0, 2.0, base_params, unit_pref) == (0.0, 0.0)
    assert fbp.eval_W(-5.0, -5.0, base_params, unit_pref) == (0.0, 0.0)


def test_eval_w_rejects_mixed_branches(base_params, unit_pref):
    with pytest.raises(DomainError):
        fbp.eval_W(2.0, -3.0, base_params, unit_pref)


def test_value_matching_at_solution(solved_log):
    b = solved_log.band
    w, _ = fbp.eval_W(b.zeta_minus, b.zeta_plus, solved_log.params, solved_log.pref)
    assert abs(w - model.G(b.zeta_plus, solved_log.params)) < 1e-9


def test_residuals_vanish_at_solution(solved_log):
    b = solved_log.band
    psi = fbp.residual_risk_averse(b.zeta_minus, b.zeta_plus, solved_log.params, solved_log.pref)
    assert max(abs(p) for p in psi) < 1e-10
    assert max(fbp.boundary_residuals(solved_log).values()) < 1e-9


def test_W_between_zero_and_G(solved_log):
    b = solved_log.band
    grid = np.linspace(b.zeta_minus, b.zeta_plus, 1000)
    w, _ = solved_log.w_eval(grid)
    g = model.G(grid, solved_log.params)
    tol = 1e-12
    assert np.all(w >= -tol)
    assert np.all(w <= g + tol)
    assert np.all(w[1:] > 0)


def test_W_evaluator_matches_pointwise(solved_log):
    b = solved_log.band
    grid = np.linspace(b.zeta_minus, b.zeta_plus, 7)
    w, dw = solved_log.w_eval(grid)
    for z, wi, dwi in zip(grid, w, dw):
        w1, dw1 = fbp.eval_W(b.zeta_minus, z, solved_log.params, solved_log.pref)
        assert wi == pytest.approx(w1, rel=1e-9, abs=1e-15)
        assert dwi == pytest.approx(dw1, rel=1e-9, abs=1e-15)


def test_W_prime_agrees_with_difference_quotient(solved_log):
    b = solved_log.band
    z = 0.5 * (b.zeta_minus + b.zeta_plus)
    step = 1e-5 * abs(z)
    wp, _ = fbp.eval_W(b.zeta_minus, z + step, solved_log.params, solved_log.pref)
    wm, _ = fbp.eval_W(b.zeta_minus, z - step, solved_log.params, solved_log.pref)
    _, dw = fbp.eval_W(b.zeta_minus, z, solved_log.params, solved_log.pref)
    assert dw == pytest.approx((wp - wm) / (2 * step), rel=1e-6)


def test_perturbed_upper_boundary_changes_sign(solved_log):
    b = solved_log.band
    p, g = solved_log.params, solved_log.pref
    _, up = fbp.residual_risk_averse(b.zeta_minus, b.zeta_plus + 1e-3, p, g)
    _, down = fbp.residual_risk_averse(b.zeta_minus, b.zeta_plus - 1e-3, p, g)
    assert abs(up) > 1e-8 and abs(down) > 1e-8
    assert math.copysign(1, up) != math.copysign(1, down)


def test_asymptotic_initializer_is_close_but_not_exact(base_params, unit_pref):
    zm, zp = zeta_expansion(base_params, unit_pref)
    psi = fbp.residual_risk_averse(zm, zp, base_params, unit_pref)
    g = model.G(zp, base_params)
    assert 0 < max(abs(x) for x in psi)
    assert abs(psi[0]) < 0.5 * g


@pytest.mark.parametrize("scale", [0.8, 1.2])
@pytest.mark.parametrize("gamma", [0.5, 1.0, 5.0])
def test_local_uniqueness_from_perturbed_start(base_params, gamma, scale):
    pref = Preference(gamma)
    ref = fbp.solve(base_params, pref).band
    pi_star = model.merton_fraction(base_params, pref)
    centre = pi_star / (1 - pi_star)
    zm, zp = zeta_expansion(base_params, pref)
    start = (centre + scale * (zm - centre), centre + scale * (zp - centre))
    again = fbp.solve_risk_averse(base_params, pref, initial=start).band
    assert again.zeta_minus == pytest.approx(ref.zeta_minus, rel=1e-8)
    assert again.zeta_plus == pytest.approx(ref.zeta_plus, rel=1e-8)


def test_band_shape_across_gamma(base_params):
    # long-only bands bracket the frictionless weight; deep leverage puts both edges below it
    for gamma in (4.0, 5.0, 20.0):
        pref = Preference(gamma)
        b = fbp.solve(base_params, pref).band
        assert b.regime is Regime.LONG_ONLY
        assert b.pi_minus < model.merton_fraction(base_params, pref) < b.pi_plus
    for gamma in (0.1, 0.2, 0.3):
        pref = Preference(gamma)
        b = fbp.solve(base_params, pref).band
        assert b.regime is Regime.LEVERAGED
        assert b.pi_plus < model.merton_fraction(base_params, pref)


def test_band_width_shrinks_near_full_investment(base_params):
    g0 = model.degenerate_gamma(base_params)
    widths = [fbp.solve(base_params, Preference(g0 * (1 + d))).band for d in (0.2, 0.05, 0.01)]
    w = [b.pi_plus - b.pi_minus for b in widths]
    assert w[0] > w[1] > w[2] > 0


def test_degenerate_gamma_gives_full_investment(base_params):
    g0 = model.degenerate_gamma(base_params)
    rep = fbp.solve(base_params, Preference(g0))
    assert rep.band.is_degenerate
    assert rep.band.pi_minus == rep.band.pi_plus == 1.0
    assert rep.esr == pytest.approx(base_params.mu - 0.5 * g0 * base_params.sigma**2)


def test_log_utility_second_order_term_vanishes(base_params, unit_pref):
    # pi_pm = pi* -+ (3/(4 gamma) pi*^2 (pi*-1)^2)^(1/3) eps^(1/3) + O(eps) at gamma = 1
    pi_star = model.merton_fraction(base_params, unit_pref)
    errs = []
    epsilons = (1e-4, 1e-5, 1e-6)
    for eps in epsilons:
        b = fbp.solve(base_params.with_epsilon(eps), unit_pref).band
        half = (0.75 * pi_star**2 * (pi_star - 1) ** 2) ** (1 / 3) * eps ** (1 / 3)
        errs.append(max(abs(b.pi_minus - (pi_star - half)), abs(b.pi_plus - (pi_star + half))) / eps)
    assert max(errs) < 5 * min(errs)


def test_upper_boundary_below_liquidation_bound(base_params):
    for gamma in (0.0, 0.3, 1.0):
        b = fbp.solve(base_params, Preference(gamma)).band
        assert b.pi_plus < 1 / base_params.epsilon


def test_epsilon_guard():
    params = MarketParams(0.08, 0.16, 0.0, 0.2)
    with pytest.raises(DomainError, match="force"):
        fbp.solve(params, Preference(5.0))


def test_solve_rejects_inadmissible_initial(base_params, unit_pref):
    with pytest.raises(DomainError):
        fbp.solve_risk_averse(base_params, unit_pref, initial=(-1.005, -1.001))


def test_solve_risk_averse_needs_positive_gamma(base_params):
    with pytest.raises(DomainError):
        fbp.solve_risk_averse(base_params, Preference(0.0))


def test_spurious_band_is_rejected(base_params):
    # a far-out leveraged band where W and G are both tiny
    pref = Preference(0.5)
    with pytest.raises(ConvergenceError):
        fbp._check_relative_match(-1e5, -9e4, base_params, pref, type("R", (), {"x": None, "residual_norm": 0.0, "iterations": 0})())


def test_small_gamma_close_to_risk_neutral(base_params):
    gamma = 1e-4
    neutral = fbp.solve_risk_neutral(base_params).band
    averse = fbp.solve_risk_averse(
        base_params, Preference(gamma), initial=(neutral.zeta_minus, neutral.zeta_plus)
    ).band
    assert abs(averse.zeta_minus - neutral.zeta_minus) / abs(neutral.zeta_minus) < 10 * gamma
    assert abs(averse.zeta_plus - neutral.zeta_plus) / abs(neutral.zeta_plus) < 10 * gamma


# risk-neutral branch


def test_kappa_root():
    k = fbp.kappa_root()
    assert 0.58 < k < 0.59
    assert k > 1 / 3
    assert abs(1.5 * k + math.log(1 - k)) < 1e-14
    assert k == pytest.approx(KAPPA, rel=1e-15)


def test_leading_constants(base_params):
    a_minus, a_plus = fbp.leading_constants(base_params)
    root = math.sqrt(base_params.sigma**2 / base_params.mu)
    assert a_plus == pytest.approx(root / math.sqrt(KAPPA), rel=1e-14)
    assert a_minus == pytest.approx(root / math.sqrt(KAPPA) / (1 - KAPPA), rel=1e-14)
    mu, s2 = base_params.mu, base_params.sigma**2
    assert a_minus == pytest.approx(mu * a_plus**3 / (mu * a_plus**2 - s2), rel=1e-12)


def test_risk_neutral_residual_vanishes_at_zero_spread(base_params):
    a_minus, a_plus = fbp.leading_constants(base_params)
    f1, f2 = fbp.residual_risk_neutral(a_minus, a_plus, 0.0, base_params)
    assert abs(f1) < 1e-10 * a_plus**-2
    assert abs(f2) < 1e-10 * a_plus**-3


def test_risk_neutral_residual_rejects_unordered(base_params):
    with pytest.raises(DomainError):
        fbp.residual_risk_neutral(1.0, 2.0, 0.1, base_params)


def test_risk_neutral_matching_conditions(base_params):
    rep = fbp.solve_risk_neutral(base_params)
    assert max(fbp.boundary_residuals(rep).values()) < 1e-9
    assert rep.esr == pytest.approx(base_params.mu * rep.band.pi_minus)
    assert rep.band.regime is Regime.LEVERAGED


def test_multiplier_table_cells():
    m = fbp.multiplier(MarketParams(0.05, 0.10, 0.0, 0.001))
    assert m.exact == pytest.approx(23.15, rel=5e-3)
    m = fbp.multiplier(MarketParams(0.25, 0.50, 0.0, 0.01))
    assert m.exact == pytest.approx(3.66, rel=5e-3)
    assert m.leading < m.exact
    assert m.constant == pytest.approx((1 - KAPPA) * math.sqrt(KAPPA), rel=1e-14)


def test_band_ratio_approaches_one_minus_kappa():
    params = MarketParams(0.1, 0.2, 0.0, 1e-3)
    ratios = []
    for eps in (1e-3, 1e-5, 1e-7):
        b = fbp.solve_risk_neutral(params.with_epsilon(eps)).band
        ratios.append(b.pi_minus / b.pi_plus)
    gaps = [abs(r - (1 - KAPPA)) for r in ratios]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_multiplier_scales_like_inverse_root_spread():
    params = MarketParams(0.1, 0.2)
    big = fbp.multiplier(params.with_epsilon(1e-4)).exact
    small = fbp.multiplier(params.with_epsilon(1e-6)).exact
    assert big / small == pytest.approx(0.1, rel=0.02)


@given(st.floats(0.03, 0.3), st.floats(0.05, 0.15), st.floats(1e-4, 1e-2))
@settings(max_examples=15, deadline=None)
def test_risk_neutral_solution_properties(sharpe, sigma, eps):
    mu = sharpe * sigma
    params = MarketParams(mu, sigma, 0.0, eps)
    rep = fbp.solve_risk_neutral(params)
    b = rep.band
    assert 1 < b.pi_minus < b.pi_plus < 1 / eps
    assert max(fbp.boundary_residuals(rep).values()) < 1e-9
