import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from levlim import DomainError, MarketParams, Preference, ergodic, fbp, model
from levlim import asymptotics as asy

KAPPA = 0.5828116438658114


def _slope(epsilons, errors):
    return float(np.polyfit(np.log(epsilons), np.log(errors), 1)[0])


def test_log_utility_has_no_second_order_shift(base_params, unit_pref):
    pi_star = model.merton_fraction(base_params, unit_pref)
    pm, pp = asy.boundaries_expansion(base_params, unit_pref)
    assert 0.5 * (pm + pp) == pytest.approx(pi_star, rel=1e-15)


def test_long_only_band_brackets_merton(base_params):
    pref = Preference(5.0)
    pm, pp = asy.boundaries_expansion(base_params, pref)
    assert pm < model.merton_fraction(base_params, pref) < pp


def test_expansions_refuse_singular_points(base_params):
    with pytest.raises(DomainError):
        asy.boundaries_expansion(base_params, Preference(0.0))
    with pytest.raises(DomainError):
        asy.stats_expansion(base_params, Preference(model.degenerate_gamma(base_params)))


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 5.0])
def test_ratio_and_weight_expansions_agree_to_first_order(base_params, gamma):
    pref = Preference(gamma)
    gaps = []
    epsilons = (1e-3, 1e-4, 1e-5, 1e-6)
    for eps in epsilons:
        p = base_params.with_epsilon(eps)
        zm, zp = asy.zeta_expansion(p, pref)
        pm, pp = asy.boundaries_expansion(p, pref)
        gaps.append(max(abs(model.pi_of_zeta(zm) - pm), abs(model.pi_of_zeta(zp) - pp)))
    # any mismatch at order eps^(2/3) would show up as a slope near 2/3
    assert _slope(epsilons, gaps) > 0.95


def test_frictionless_limits(base_params):
    pref = Preference(2.0)
    mu, sigma = base_params.mu, base_params.sigma
    s = asy.stats_expansion(base_params.with_epsilon(1e-15), pref)
    assert s.m_hat == pytest.approx(mu**2 / (2.0 * sigma**2), rel=1e-8)
    assert s.s_hat == pytest.approx(mu / (2.0 * sigma), rel=1e-8)
    assert s.esr == pytest.approx(mu**2 / (4.0 * sigma**2), rel=1e-8)
    assert s.atc == pytest.approx(0.0, abs=1e-10)


@given(st.floats(0.2, 50.0))
def test_leading_trading_cost_positive(gamma):
    params = MarketParams(0.08, 0.16, 0.0, 1e-3)
    if abs(model.merton_fraction(params, Preference(gamma)) - 1.0) < 1e-6:
        return
    assert asy.stats_expansion(params, Preference(gamma)).atc > 0


@given(st.floats(-1e6, 1e6))
def test_odd_root_of_negative_is_negative(a):
    assert asy._cbrt(a) == pytest.approx(math.copysign(abs(a) ** (1 / 3), a), rel=1e-12, abs=1e-300)
    assert asy._pow_2_3(a) >= 0


@pytest.mark.parametrize("gamma", [1.0, 5.0])
def test_boundary_expansion_error_is_first_order(gamma):
    params = MarketParams(0.08, 0.16, 0.0, 1e-3)
    pref = Preference(gamma)
    epsilons = (1e-3, 1e-4, 1e-5)
    lo, hi = [], []
    for eps in epsilons:
        p = params.with_epsilon(eps)
        b = fbp.solve(p, pref).band
        pm, pp = asy.boundaries_expansion(p, pref)
        lo.append(abs(b.pi_minus - pm))
        hi.append(abs(b.pi_plus - pp))
    assert _slope(epsilons, lo) >= 0.8
    assert _slope(epsilons, hi) >= 0.8


@pytest.mark.parametrize("gamma", [1.0, 5.0])
def test_stats_expansion_against_closed_forms(gamma):
    params = MarketParams(0.08, 0.16, 0.0, 1e-3)
    pref = Preference(gamma)
    epsilons = (1e-3, 1e-4, 1e-5)
    errs = {"esr": [], "atc": [], "m_hat": [], "s_hat": []}
    for eps in epsilons:
        p = params.with_epsilon(eps)
        rep = fbp.solve(p, pref)
        exact = ergodic.long_run_stats(rep.band, p, pref)
        approx = asy.stats_expansion(p, pref)
        for k in errs:
            errs[k].append(abs(getattr(exact, k) - getattr(approx, k)))
    for k, v in errs.items():
        assert _slope(epsilons, v) >= 0.8, k


def test_mean_expansion_obeys_mean_variance_identity(base_params):
    # m = ESR + gamma s^2 / 2 holds exactly, so the expansions must agree through eps^(2/3)
    pref = Preference(5.0)
    gaps, printed_gaps = [], []
    epsilons = (1e-4, 1e-6, 1e-8)
    for eps in epsilons:
        s = asy.stats_expansion(base_params.with_epsilon(eps), pref)
        rhs = s.esr + 0.5 * pref.gamma * s.s_hat**2
        gaps.append(abs(s.m_hat - rhs))
        printed_gaps.append(abs(s.m_hat_printed - rhs))
    assert _slope(epsilons, gaps) > 1.2
    assert _slope(epsilons, printed_gaps) < 0.7


def test_printed_mean_agrees_at_log_utility(base_params, unit_pref):
    s = asy.stats_expansion(base_params, unit_pref)
    assert s.m_hat_printed == pytest.approx(s.m_hat, rel=1e-15)


def test_risk_neutral_ratio_is_one_minus_kappa(base_params):
    pm, pp = asy.risk_neutral_expansion(base_params, include_one=False)
    assert pm / pp == pytest.approx(1 - KAPPA, rel=1e-14)


def test_quartering_spread_doubles_leading_term(base_params):
    a, _ = asy.risk_neutral_expansion(base_params, include_one=False)
    b, _ = asy.risk_neutral_expansion(base_params.with_epsilon(base_params.epsilon / 4), include_one=False)
    assert b == pytest.approx(2 * a, rel=1e-14)
    with_one, _ = asy.risk_neutral_expansion(base_params, include_one=True)
    assert with_one == pytest.approx(a + 1.0, rel=1e-15)
