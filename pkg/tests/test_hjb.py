import dataclasses

import numpy as np
import pytest

from levlim import Band, DomainError, MarketParams, Preference, fbp, hjb, model


@pytest.fixture(scope="module")
def base():
    return MarketParams(0.08, 0.16, 0.0, 0.01)


@pytest.fixture(scope="module", params=[0.0, 0.5, 1.0, 5.0], ids=lambda g: f"gamma={g}")
def solved(request, base):
    return fbp.solve(base, Preference(request.param))


def test_solved_band_passes(solved):
    rep = hjb.verify_hjb(solved)
    assert rep.passed, (rep.worst_region, rep.worst_pi, rep.reason)
    assert rep.pass_
    assert rep.inside_residual_max < 1e-7
    assert rep.min_gradient_slack_lower >= -1e-7
    assert rep.min_gradient_slack_upper >= -1e-7
    assert rep.min_operator_residual >= -1e-7


def test_grids_cover_three_regions(solved):
    rep = hjb.verify_hjb(solved, n_points=500)
    b = solved.band
    assert set(rep.grid) == {"below", "inside", "above"}
    assert rep.grid["inside"][0] == b.zeta_minus and rep.grid["inside"][-1] == b.zeta_plus
    above = rep.grid["above"]
    # upper region stops short of the liquidation bound
    assert np.max(above) < 1.0 / base_eps(solved)
    assert np.max(above) > (1.0 - 1e-5) / base_eps(solved)


def base_eps(report):
    return report.params.epsilon


def test_upper_shift_fails_near_a_boundary(base):
    rep = fbp.solve(base, Preference(1.0))
    shifted = hjb.perturb_upper(rep.band, base)
    out = hjb.verify_band(shifted, base, rep.pref)
    assert not out.passed
    b = rep.band
    lo, hi = sorted((b.pi_minus, b.pi_plus))
    near = min(abs(out.worst_pi - lo), abs(out.worst_pi - hi), abs(out.worst_pi - shifted.pi_plus))
    assert near < 0.5 * (hi - lo)


@pytest.mark.parametrize("edge", ["lower", "upper"])
@pytest.mark.parametrize("factor", [0.95, 1.05])
def test_any_five_percent_shift_fails(solved, edge, factor):
    b = solved.band
    if edge == "lower":
        pm, pp = b.pi_minus * factor, b.pi_plus
    else:
        pm, pp = b.pi_minus, b.pi_plus * factor
    try:
        band = Band.from_pi(pm, pp, solved.params)
    except DomainError:
        return  # the shift leaves the admissible set, which is a failure in itself
    out = hjb.verify_band(band, solved.params, solved.pref)
    assert not out.passed


def test_inverted_band_is_reported_not_raised(base, unit_pref):
    band = Band(3.0, 2.0, 0.75, 2 / 3, None)
    out = hjb.verify_band(band, base, unit_pref)
    assert not out.passed
    assert "not admissible" in out.reason


def test_degenerate_report_passes(base):
    g0 = model.degenerate_gamma(base)
    rep = fbp.solve(base, Preference(g0))
    assert hjb.verify_hjb(rep).passed


def test_unconverged_report_is_rejected(base, unit_pref):
    rep = fbp.solve(base, unit_pref)
    bad = dataclasses.replace(rep, converged=False)
    with pytest.raises(DomainError):
        hjb.verify_hjb(bad)


def test_below_operator_nonnegative_under_the_band(base, unit_pref):
    rep = fbp.solve(base, unit_pref)
    pi = np.linspace(0.0, rep.band.pi_minus, 200)
    pi = pi[np.abs(pi - 1.0) > 1e-6]
    assert np.all(hjb.operator_below(pi, rep.lam, base, unit_pref) >= -1e-12)


def test_above_operator_matches_generator_of_G(base, unit_pref):
    # L(pi) = A V - h + lambda with V' = G, checked against zeta-space derivatives
    rep = fbp.solve(base, unit_pref)
    zeta = np.array([-30.0, -10.0, -6.0])
    pi = zeta / (1 + zeta)
    s2, mu = base.sigma**2, base.mu
    direct = (0.5 * s2 * zeta**2 * model.G_prime(zeta, base) + mu * zeta * model.G(zeta, base)
              - model.h(zeta, base, unit_pref) + rep.lam)
    np.testing.assert_allclose(hjb.operator_above(pi, rep.lam, base, unit_pref), direct, rtol=1e-10, atol=1e-15)


def test_tolerance_is_respected(base, unit_pref):
    rep = fbp.solve(base, unit_pref)
    out = hjb.verify_hjb(rep, tol=1e-30)
    assert not out.passed
    assert out.tol == 1e-30
