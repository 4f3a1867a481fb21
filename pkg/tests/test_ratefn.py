import logging
import math

import numpy as np
import pytest

import bpre
from bpre.models import tilted_moments
from bpre.ratefn import DIRECT_GRID, _direct_objective, _rate_interp, _rate_table, direct_minimum, lambda_slope

LOG2 = math.log(2)


def k_prime(env, lam):
    return float(tilted_moments(env, lam)[1])


def test_lambda_rate(strongly_subcritical):
    env = strongly_subcritical
    assert bpre.lambda_rate(env, 0.0) > 0
    assert bpre.lambda_rate(env, env.x_max) == pytest.approx(math.log(5))
    assert math.isinf(bpre.lambda_rate(env, env.x_max + 0.1))

    theta = k_prime(env, 3.0)
    assert bpre.lambda_rate(env, theta) == pytest.approx(3 * theta - bpre.cgf(env, 3.0), rel=1e-10)
    assert lambda_slope(env, theta) == pytest.approx(3.0, rel=1e-9)

    values = bpre.lambda_rate(env, np.array([0.0, 0.2, 1.0]))
    assert values.shape == (3,)
    assert values[0] < values[1] and math.isinf(values[2])

    with pytest.raises(ValueError):
        bpre.lambda_rate(env, -0.1)


def test_lambda_rate_below_drift(supercritical):
    assert bpre.lambda_rate(supercritical, 0.0) == 0.0
    assert bpre.lambda_rate(supercritical, 0.1) == 0.0
    assert bpre.lambda_rate(supercritical, 0.4) > 0


def test_gamma(bundled):
    assert bpre.gamma(bundled['strongly_subcritical']) == pytest.approx(LOG2, abs=1e-12)
    assert bpre.gamma(bundled['galton_watson']) == pytest.approx(LOG2, abs=1e-12)
    assert bpre.gamma(bundled['critical']) == 0.0
    assert bpre.gamma(bundled['supercritical']) == 0.0


def test_theta_star(bundled):
    env = bundled['strongly_subcritical']
    # tangency at lambda = 2, where E[m^2] = 0.8/16 + 0.2 * 2.25 = 1/2 = E[m]
    expected = (0.05 * math.log(0.25) + 0.45 * math.log(1.5)) / 0.5
    assert bpre.theta_star(env) == pytest.approx(expected, rel=1e-9)
    assert bpre.theta_star(bundled['critical']) == 0.0
    assert bpre.theta_star(bundled['supercritical']) == 0.0
    assert bpre.theta_star(bundled['galton_watson']) == 0.0


def test_chi(strongly_subcritical):
    env = strongly_subcritical
    star = bpre.theta_star(env)
    assert bpre.chi(env, 0.0) == pytest.approx(LOG2)
    # chord slope equals the tangency tilt
    assert bpre.chi(env, 0.1) == pytest.approx(LOG2 + 0.2, rel=1e-9)
    assert bpre.chi_slope(env, 0.1) == pytest.approx(2.0, rel=1e-9)
    assert bpre.chi(env, star) == pytest.approx(bpre.lambda_rate(env, star), rel=1e-9)
    assert bpre.chi(env, 0.3) == bpre.lambda_rate(env, 0.3)
    assert math.isinf(bpre.chi_slope(env, env.x_max))

    grid = np.linspace(0.0, env.x_max, 11)
    assert np.all(bpre.chi(env, grid) <= bpre.lambda_rate(env, grid) + 1e-12)


def test_theta_dagger(bundled):
    env = bundled['strongly_subcritical']
    assert bpre.theta_dagger(env, 5.0) == pytest.approx(k_prime(env, 5.0), rel=1e-12)
    assert bpre.theta_dagger(env, 1.5) == 0.0

    critical = bundled['critical']
    assert bpre.theta_dagger(critical, 2.0) == pytest.approx(LOG2 * 15 / 17, rel=1e-12)
    assert bpre.theta_dagger(bundled['galton_watson'], 2.0) == 0.0

    with pytest.raises(ValueError):
        bpre.theta_dagger(env, 1.0)


def test_psi_galton_watson():
    assert bpre.psi_galton_watson(0.5, 2.0, 1.0) == pytest.approx(LOG2 + 2.0)
    assert bpre.psi_galton_watson(1.0, 3.0, 0.5) == pytest.approx(1.5)
    assert bpre.psi_galton_watson(2.0, 2.0, LOG2) == 0.0
    assert bpre.psi_galton_watson(2.0, 2.0, 1.0) == pytest.approx(2 * (1 - LOG2))

    with pytest.raises(ValueError):
        bpre.psi_galton_watson(2.0, 2.0, 0.1)
    with pytest.raises(ValueError):
        bpre.psi_galton_watson(0.0, 2.0, 0.1)


def test_psi_piecewise(bundled):
    env = bundled['strongly_subcritical']
    assert bpre.psi_piecewise(env, 1.5, 0.3) == pytest.approx(LOG2 + 0.45)
    assert bpre.psi_piecewise(env, 5.0, 0.0) == pytest.approx(LOG2)

    # beyond theta-dagger the rate is the ray beta theta - K(beta)
    for theta in (0.45, 1.0, 3.0):
        assert bpre.psi_piecewise(env, 5.0, theta) == pytest.approx(5 * theta - bpre.cgf(env, 5.0), rel=1e-9)

    gw = bundled['galton_watson']
    values = bpre.psi_piecewise(gw, 2.0, np.array([0.0, 0.5]))
    assert values == pytest.approx(np.array([LOG2, LOG2 + 1.0]))


@pytest.mark.parametrize('theta', [0.0, 0.1, 0.3, 0.5, 1.2])
def test_psi_direct_matches_piecewise(strongly_subcritical, theta):
    env = strongly_subcritical
    assert bpre.psi_direct(env, 5.0, theta) == pytest.approx(bpre.psi_piecewise(env, 5.0, theta), abs=1e-7)


def test_psi_direct_final_jump(strongly_subcritical):
    best = direct_minimum(strongly_subcritical, 1.5, 0.3)
    assert best.t == 1.0
    assert best.s == 0.3
    assert best.value == pytest.approx(LOG2 + 0.45)
    assert not best.degenerate


def test_psi_direct_galton_watson(galton_watson):
    for theta in (0.0, 0.25, 1.0):
        assert bpre.psi_direct(galton_watson, 2.0, theta) == pytest.approx(LOG2 + 2 * theta)


def test_psi_beta_limit(bundled):
    critical = bundled['critical']
    assert bpre.psi_beta_limit(critical, 0.3) == pytest.approx(bpre.lambda_rate(critical, 0.3), rel=1e-9)
    assert math.isinf(bpre.psi_beta_limit(critical, 1.0))
    assert bpre.psi_beta_limit(bundled['galton_watson'], 0.0) == pytest.approx(LOG2)
    assert math.isinf(bpre.psi_beta_limit(bundled['galton_watson'], 0.1))


def test_psi_supercritical(supercritical):
    assert bpre.psi_supercritical(supercritical, 2.0, 0.1) == 0.0
    for theta in (0.5, 1.0):
        assert bpre.psi_supercritical(supercritical, 2.0, theta) == \
            pytest.approx(bpre.psi_piecewise(supercritical, 2.0, theta), abs=1e-8)


def test_psi_supercritical_needs_positive_drift(critical):
    with pytest.raises(ValueError):
        bpre.psi_supercritical(critical, 2.0, 0.5)


def test_rate_profile(strongly_subcritical):
    profile = bpre.rate_profile(strongly_subcritical, 5)
    summary = profile.summary()
    assert summary['beta'] == 5.0
    assert summary['gamma'] == pytest.approx(LOG2)
    assert summary['regime'] == 'StronglySubcritical'
    assert summary['theta_star_applicable']
    assert summary['theta_dagger'] > summary['theta_star'] > 0
    assert profile.psi_curve(0.0) == pytest.approx(LOG2)


def test_characterization_checks(strongly_subcritical):
    grid = np.linspace(0.0, 1.2, 7)
    checks = bpre.characterization_checks(strongly_subcritical, 5.0, grid, 'ssub ')
    names = [c.name for c in checks]
    assert 'ssub beta=5 ray=beta*theta-K(beta)' in names
    failed = [c.name for c in checks if not c.passed]
    assert failed == []


def test_beta_checks(strongly_subcritical):
    checks = bpre.beta_checks(strongly_subcritical, [1.5, 5.0], np.array([0.0, 0.1, 0.2, 0.3]))
    assert [c.name for c in checks] == ['monotone-in-beta', 'beta-limit']
    assert all(c.passed for c in checks)


@pytest.mark.parametrize('name', ['strongly_subcritical', 'critical', 'supercritical', 'heavy_supercritical'])
def test_rate_table_brackets_rate(bundled, name):
    env = bundled[name]
    error = _rate_table(env)[2]
    assert 0 <= error < 1e-3
    theta = np.linspace(0.0, env.x_max, 401)
    exact = bpre.lambda_rate(env, theta)
    interpolated = _rate_interp(env, theta)
    assert np.all(interpolated >= exact - 1e-12)
    assert np.all(interpolated <= exact + error + 1e-12)
    assert math.isinf(_rate_interp(env, env.x_max + 0.1))


@pytest.mark.parametrize('m, thetas', [(1.0, (0.0, 0.5, 1.0)), (2.0, (LOG2, 1.0, 2.0))])
@pytest.mark.parametrize('beta', [1.5, 3.0])
def test_galton_watson_reduction(m, thetas, beta):
    law = bpre.Bounded.from_mapping({0: 0.5, 2: 0.5}) if m == 1 else bpre.Bounded.from_mapping({1: 0.5, 3: 0.5})
    env = bpre.EnvironmentModel.from_states((law, 1.0))
    for theta in thetas:
        expected = bpre.psi_galton_watson(m, beta, theta)
        assert bpre.psi_direct(env, beta, theta) == pytest.approx(expected, abs=1e-7)
        assert bpre.psi_piecewise(env, beta, theta) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize('name', ['critical', 'supercritical'])
@pytest.mark.parametrize('beta', [1.5, 2.0, 5.0])
def test_characterization_non_subcritical(bundled, name, beta):
    env = bundled[name]
    grid = np.linspace(0.0, env.x_max + 2.0, 11)
    checks = bpre.characterization_checks(env, beta, grid, name + ' ')
    assert [c.name for c in checks if not c.passed] == []
    for theta in grid:
        assert bpre.psi_direct(env, beta, theta) == pytest.approx(bpre.psi_piecewise(env, beta, theta), abs=1e-6)


@pytest.mark.parametrize('name', ['strongly_subcritical', 'critical', 'supercritical'])
@pytest.mark.parametrize('beta', [1.5, 2.0, 5.0])
def test_theta_ordering(bundled, name, beta):
    env = bundled[name]
    star, dagger = bpre.theta_star(env), bpre.theta_dagger(env, beta)
    assert 0 <= star <= env.x_max
    assert 0 <= dagger <= env.x_max
    if dagger > 0:
        assert star <= dagger
        assert dagger >= max(0.0, bpre.drift(env))


@pytest.mark.parametrize('name, beta', [('strongly_subcritical', 5.0), ('critical', 2.0), ('supercritical', 2.0)])
def test_psi_slope_beyond_dagger(bundled, name, beta):
    env = bundled[name]
    dagger = bpre.theta_dagger(env, beta)
    for lo, hi in ((dagger + 0.05, dagger + 0.3), (dagger + 0.5, dagger + 2.0)):
        piecewise = (bpre.psi_piecewise(env, beta, hi) - bpre.psi_piecewise(env, beta, lo)) / (hi - lo)
        assert piecewise == pytest.approx(beta, abs=1e-9)
        direct = (bpre.psi_direct(env, beta, hi) - bpre.psi_direct(env, beta, lo)) / (hi - lo)
        assert direct == pytest.approx(beta, abs=1e-5)


def test_tangency_is_exact(strongly_subcritical):
    env = strongly_subcritical
    star = bpre.theta_star(env)
    # the chord from (0, gamma) touches Lambda at theta* with the tilt as slope
    slope = (bpre.lambda_rate(env, star) - bpre.gamma(env)) / star
    assert slope == pytest.approx(lambda_slope(env, star), rel=1e-9)
    assert bpre.cgf(env, slope) == pytest.approx(-bpre.gamma(env), abs=1e-9)


@pytest.mark.parametrize('theta', [0.1, 0.4, 0.9])
def test_direct_minimum_screening(strongly_subcritical, caplog, theta):
    env, beta = strongly_subcritical, 2.0
    with caplog.at_level(logging.DEBUG, logger='bpre.ratefn'):
        screened = direct_minimum.__wrapped__(env, beta, theta)
    messages = [r.getMessage() for r in caplog.records if 'cells evaluated exactly' in r.getMessage()]
    words = messages[-1].split(': ')[1].split()
    evaluated, total = int(words[0]), int(words[2])
    assert total == (DIRECT_GRID - 1) * DIRECT_GRID
    assert evaluated < total // 2

    # the full coarse grid evaluated exactly cannot beat the screened result
    t_axis = np.linspace(0.0, 1.0, DIRECT_GRID)[:-1]
    s_axis = np.linspace(0.0, theta, DIRECT_GRID)
    full = _direct_objective(env, beta, theta, bpre.gamma(env), t_axis[:, None], s_axis[None, :])
    assert screened.value <= min(float(full.min()), bpre.gamma(env) + beta * theta) + 1e-12
