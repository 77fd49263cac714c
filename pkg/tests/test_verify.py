import numpy as np
import pytest

from rotflow.field_grid import Grid, QuadParams
from rotflow.fields import gaussian_stream_field
from rotflow.ou_kernel import OUEvolution
from rotflow.propagator import MatrixFunSpec
from rotflow.verify import (_loglog_fit, fit_gradient_rate, fit_lplq_rate,
                            qbounds_check, small_time_limits)

ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])

FIT_GRID = Grid(2, 2.5, 256)
FIT_RANGE = (2.0 ** -8, 2.0 ** -4)


def heat_evo():
    return OUEvolution(MatrixFunSpec.zero(2))


def test_loglog_fit_recovers_power_law():
    taus = np.geomspace(1e-3, 1e-1, 9)
    slope, r2 = _loglog_fit(taus, 3.7 * taus ** -0.42)
    assert slope == pytest.approx(-0.42, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_loglog_fit_flat_series():
    taus = np.geomspace(1e-3, 1e-1, 6)
    slope, r2 = _loglog_fit(taus, np.full(6, 2.0))
    assert slope == pytest.approx(0.0, abs=1e-14)
    assert r2 == 1.0


def test_matched_rate_heat_2_4():
    rep = fit_lplq_rate(heat_evo(), None, 2.0, 4.0, tau_range=FIT_RANGE,
                        samples=9, grid=FIT_GRID)
    assert rep.mode == "matched"
    assert rep.exponent_theory == pytest.approx(-0.25)
    assert abs(rep.exponent_fit - rep.exponent_theory) <= 0.05 * 0.25
    assert rep.r_squared >= 0.98
    assert rep.within()


def test_matched_rate_equal_exponents_is_flat():
    rep = fit_lplq_rate(heat_evo(), None, 2.0, 2.0, tau_range=FIT_RANGE,
                        samples=9, grid=FIT_GRID)
    assert rep.exponent_theory == 0.0
    assert abs(rep.exponent_fit) <= 0.02
    assert rep.within()


def test_matched_gradient_rate_equal_exponents():
    rep = fit_gradient_rate(heat_evo(), None, 2.0, 2.0, tau_range=FIT_RANGE,
                            samples=9, grid=FIT_GRID)
    assert rep.exponent_theory == pytest.approx(-0.5)
    assert abs(rep.exponent_fit + 0.5) <= 0.025
    assert rep.r_squared >= 0.98


def test_matched_rate_skew_matches_heat():
    skew = OUEvolution(MatrixFunSpec.constant(1.3 * ROT2))
    rep = fit_lplq_rate(skew, None, 2.0, 4.0, tau_range=FIT_RANGE,
                        samples=9, grid=FIT_GRID)
    assert abs(rep.exponent_fit + 0.25) <= 0.05 * 0.25


def test_fixed_wide_data_flagged_non_saturating():
    # data already smooth at the fit scale decays much too slowly
    g = Grid(2, 4.0, 256)
    u = gaussian_stream_field(g, 0.45)
    rep = fit_lplq_rate(heat_evo(), u, 2.0, 4.0, tau_range=FIT_RANGE,
                        samples=9)
    assert rep.mode == "fixed"
    assert not rep.saturating
    assert abs(rep.exponent_fit) < 0.5 * 0.25


def test_rate_fit_validates_exponents():
    with pytest.raises(ValueError):
        fit_lplq_rate(heat_evo(), None, 4.0, 2.0, grid=FIT_GRID)
    with pytest.raises(ValueError):
        fit_lplq_rate(heat_evo(), None, 2.0, 4.0, grid=FIT_GRID, samples=3)


def test_qbounds_skew_statistics_exact():
    evo = OUEvolution(MatrixFunSpec.constant(2.0 * ROT2))
    rep = qbounds_check(evo, T=1.0, samples=12, unit_vectors=50)
    assert rep.sup_whitening_stat == pytest.approx(1.0, abs=1e-12)
    assert rep.inf_det_stat == pytest.approx(1.0, abs=1e-12)
    assert rep.quarter_ok
    assert rep.quarter_margin >= 4.0 - 1e-9
    assert rep.ok


def test_qbounds_hyperbolic_generator_bounded():
    evo = OUEvolution(MatrixFunSpec.constant(np.diag([1.0, -1.0])))
    rep = qbounds_check(evo, T=1.0, samples=16, unit_vectors=50)
    assert np.isfinite(rep.sup_whitening_stat)
    assert 0.0 < rep.inf_det_stat <= 1.5
    assert rep.quarter_ok
    # statistics stable under a 10x stricter quadrature tolerance
    assert max(rep.refinement_drift) <= 0.02


def test_small_time_limits_smooth_data():
    # monotone from k = 4 needs the data scale to dominate: sigma^2 >> 2^-4
    g = Grid(2, 5.5, 128)
    evo = heat_evo()
    u = gaussian_stream_field(g, 0.7)
    rep = small_time_limits(evo, u, 2.0, 4.0, k_min=2, k_max=12)
    assert rep.decreasing(from_k=4)
    # fixed smooth data decays like tau^gamma, gamma = 1/4 here
    assert 0.1 <= rep.q_ratio <= 0.4
    assert not rep.reaches(1e-3)


def test_small_time_limits_equal_exponents_show_continuity():
    from rotflow.field_grid import lp_norm
    g = Grid(2, 3.0, 128)
    evo = heat_evo()
    u = gaussian_stream_field(g, 0.35)
    rep = small_time_limits(evo, u, 2.0, 2.0, k_min=2, k_max=12)
    # weight is 1: the sequence tends to ||u||_2 (strong continuity)
    assert rep.weighted_q[-1] == pytest.approx(lp_norm(u, 2.0), rel=2e-2)
    gaps = [abs(v - lp_norm(u, 2.0)) for v in rep.weighted_q]
    assert gaps[-1] < gaps[0]


def test_small_time_limits_reach_threshold_with_small_p():
    g = Grid(2, 6.5, 128)
    evo = heat_evo()
    u = gaussian_stream_field(g, 1.0)
    rep = small_time_limits(evo, u, 1.25, 10.0, k_min=2, k_max=24)
    assert rep.decreasing(from_k=4)
    assert rep.reaches(1e-3)
