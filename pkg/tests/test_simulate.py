import math

import numpy as np
import pytest

import bpre
from bpre.simulate import MIN_HITS, block_rng, tilted_estimate


@pytest.fixture(scope="module")
def doubling():
    return bpre.EnvironmentModel.from_states((bpre.Bounded.from_mapping({2: 1}), 1.0))


def test_run_bpre(critical):
    first = bpre.run_bpre(critical, 8, 3, 10 ** 6, np.random.default_rng(5))
    second = bpre.run_bpre(critical, 8, 3, 10 ** 6, np.random.default_rng(5))
    assert np.array_equal(first.z, second.z)
    assert np.array_equal(first.env_seq, second.env_seq)
    assert first.z.size == 9 and first.z[0] == 3
    assert first.s_walk[0] == 0.0
    assert first.m_min == first.s_walk[first.tau] == first.s_walk.min()
    assert first.m_min <= 0.0


def test_run_bpre_cap(doubling):
    run = bpre.run_bpre(doubling, 10, 1, 100, np.random.default_rng(0))
    assert run.overflow
    assert run.z[-1] == 100
    assert list(run.z[:7]) == [1, 2, 4, 8, 16, 32, 64]

    with pytest.raises(ValueError):
        bpre.run_bpre(doubling, 0, 1, 100, np.random.default_rng(0))


def test_exact_tail_degenerate(doubling):
    estimate, rows = bpre.exact_tail(doubling, 3, 1, 8)
    assert estimate.p_hat == 1.0
    assert estimate.method is bpre.Method.EXACT
    assert len(rows) == 1
    assert rows[0].states == (0, 0, 0)
    assert bpre.exact_tail(doubling, 3, 1, 9)[0].p_hat == 0.0


def test_exact_tail_galton_watson(galton_watson):
    estimate, _ = bpre.exact_tail(galton_watson, 4, 1, 1)
    assert estimate.p_hat == pytest.approx(1 / 16, abs=1e-15)
    assert estimate.rate == pytest.approx(math.log(2))


def test_exact_distribution(critical):
    dist = bpre.exact_distribution(critical, 3, 2)
    assert len(dist.sequences) == 8
    assert dist.probabilities.sum() == pytest.approx(1.0)
    assert dist.pmf().sum() == pytest.approx(1.0, abs=1e-12)
    assert dist.tail(0) == pytest.approx(1.0, abs=1e-12)
    assert dist.error_bound == 0.0
    # one sequence keeps only the halving state: Z_3 <= 2
    assert dist.conditional_tail(3)[dist.sequences.index((1, 1, 1))] == 0.0


def test_exact_distribution_fft_matches_convolution(critical):
    # support 4^6 takes the direct path, z0 = 2 doubles it onto the FFT grid
    small = bpre.exact_distribution(critical, 6, 1)
    large = bpre.exact_distribution(critical, 6, 2)
    assert large.sequences == small.sequences
    # two ancestors branch independently given the environment
    expected = 1 - (1 - small.conditional_tail(1)) ** 2
    assert large.conditional_tail(1) == pytest.approx(expected, abs=1e-9)


def test_exact_distribution_guards(bundled, critical):
    heavy = bundled['heavy_supercritical']
    with pytest.raises(bpre.GuardError):
        bpre.exact_distribution(heavy, 2)
    with pytest.raises(bpre.GuardError):
        bpre.exact_distribution(heavy, 2, truncation=10)
    with pytest.raises(bpre.GuardError):
        bpre.exact_distribution(critical, 21)
    with pytest.raises(bpre.GuardError):
        bpre.exact_distribution(critical, 11)


def test_exact_distribution_truncated():
    env = bpre.EnvironmentModel.from_states((bpre.Poisson(0.8), 0.5), (bpre.Poisson(1.5), 0.5))
    dist = bpre.exact_distribution(env, 2, truncation=30)
    assert 0 <= dist.error_bound < 1e-9
    assert dist.tail(0) == pytest.approx(1.0, abs=1e-9)
    survival = dist.tail(1)
    assert 0 < survival < 0.5 * (1 - math.exp(-0.8)) + 0.5 * (1 - math.exp(-1.5))


def test_conditional_survival_bound(bundled):
    for name in ('critical', 'strongly_subcritical', 'supercritical'):
        assert bpre.conditional_survival_bound_check(bundled[name], 4)


def test_block_rng():
    assert block_rng(3, 0).random() == block_rng(3, 0).random()
    assert block_rng(3, 0).random() != block_rng(3, 1).random()


def test_mc_tail_matches_exact(critical):
    exact, _ = bpre.exact_tail(critical, 4, 1, 1)
    estimate = bpre.mc_tail(critical, 4, 1, 1, 20000, seed=1)
    sigma = math.sqrt(exact.p_hat * (1 - exact.p_hat) / 20000)
    assert abs(estimate.p_hat - exact.p_hat) <= 4 * sigma
    assert estimate.method is bpre.Method.NAIVE
    assert estimate.n_samples == 20000


def test_mc_tail_threads(critical):
    single = bpre.mc_tail(critical, 5, 1, 2, 40000, seed=9, threads=1)
    multi = bpre.mc_tail(critical, 5, 1, 2, 40000, seed=9, threads=3)
    assert single == multi


def test_mc_tail_invalid(critical):
    with pytest.raises(ValueError):
        bpre.mc_tail(critical, 4, 1, 10, 100, cap=5)
    with pytest.raises(ValueError):
        bpre.mc_tail(critical, 4, 1, 1, 0)


def test_tilted_tail_matches_exact(critical):
    exact, _ = bpre.exact_tail(critical, 6, 1, 8)
    estimate = bpre.tilted_tail(critical, 6, 1, 0.3, 8, 20000, seed=2)
    assert estimate.method is bpre.Method.TILTED
    assert estimate.tilt > 0
    assert estimate.std_err > 0
    assert abs(estimate.p_hat - exact.p_hat) <= 5 * estimate.std_err


def test_tilted_estimate_without_tilt(critical):
    plain = tilted_estimate(critical, 0.0, 4, 1, 1, 5000, seed=4)
    naive = bpre.mc_tail(critical, 4, 1, 1, 5000, seed=4)
    assert plain.p_hat == pytest.approx(naive.p_hat, abs=1e-12)


def test_tilted_tail_invalid(critical):
    with pytest.raises(ValueError):
        bpre.tilted_tail(critical, 6, 1, critical.x_max, 8, 100)
    with pytest.raises(ValueError):
        bpre.tilted_tail(critical, 6, 1, -0.1, 8, 100)


def test_tail_estimate():
    estimate = bpre.TailEstimate(0.0, 0.0, 10, bpre.Method.NAIVE, 5, 4, seed=1)
    assert math.isinf(estimate.rate)
    row = estimate.row(0.5)
    assert row['method'] == 'naive'
    assert row['k'] == 5
    assert row['theta'] == '0.5'
    assert row['seed'] == 1
    assert row['error_bound'] == '0.0'
    assert bpre.TailEstimate(0.25, 0.0, 1, bpre.Method.EXACT, 1, 2).rate == pytest.approx(math.log(2))


def test_survival_rate_scan_exact(galton_watson):
    points = bpre.survival_rate_scan(galton_watson, [1, 2, 3, 4], 100, method='exact')
    assert [p.n for p in points] == [1, 2, 3, 4]
    for point in points:
        assert point.rate == pytest.approx(math.log(2), abs=1e-12)


def test_survival_rate_scan_tilted(strongly_subcritical):
    exact = bpre.survival_rate_scan(strongly_subcritical, [6], 100, method='exact')[0]
    tilted = bpre.survival_rate_scan(strongly_subcritical, [6], 20000, seed=3)[0]
    assert tilted.estimate.method is bpre.Method.TILTED
    assert abs(tilted.estimate.p_hat - exact.estimate.p_hat) <= 5 * tilted.estimate.std_err


def test_survival_rate_scan_invalid(critical):
    with pytest.raises(ValueError):
        bpre.survival_rate_scan(critical, [4], 100, method='tilted')
    with pytest.raises(ValueError):
        bpre.survival_rate_scan(critical, [4], 100, method='bogus')


def test_empirical_rate_curve(critical):
    points = bpre.empirical_rate_curve(critical, 2.0, 0.3, [4, 6], 5000, seed=6)
    assert [p.n for p in points] == [4, 6]
    for point in points:
        assert point.estimate.threshold == math.ceil(math.exp(0.3 * point.n))
        assert point.estimate.method is bpre.Method.TILTED

    with pytest.raises(ValueError):
        bpre.empirical_rate_curve(critical, 2.0, 0.3, [100], 100, cap=1000)


def test_triangle_checks_guard(bundled):
    checks = bpre.triangle_checks(bundled['heavy_supercritical'], 2, 100, tag='heavy ')
    assert len(checks) == 5
    assert all(c.status is bpre.Status.SKIPPED for c in checks)
    assert checks[0].name == 'heavy n=2 naive~exact survival'


def test_triangle_checks_deterministic(galton_watson):
    checks = bpre.triangle_checks(galton_watson, 3, 2000)
    assert [c.name for c in checks] == ['n=3 naive~exact survival', 'n=3 naive~exact moderate',
                                        'n=3 survival<=exp(M_n)']
    assert checks[-1].passed


def test_tail_estimate_error_bound():
    env = bpre.EnvironmentModel.from_states((bpre.Poisson(0.8), 0.5), (bpre.Poisson(1.5), 0.5))
    dist = bpre.exact_distribution(env, 2, truncation=16)
    estimate, _ = bpre.exact_tail(env, 2, 1, 3, truncation=16)
    assert estimate.error_bound == dist.error_bound
    assert estimate.row()['error_bound'] == repr(dist.error_bound)


@pytest.fixture(scope="module")
def growing():
    # no offspring law has mass at zero, populations never shrink
    return bpre.EnvironmentModel.from_states(
        (bpre.Bounded.from_mapping({1: 0.5, 3: 0.5}), 0.5),
        (bpre.Bounded.from_mapping({1: 0.75, 2: 0.25}), 0.5))


def test_capping_soundness(growing):
    for seed in range(100):
        capped = bpre.run_bpre(growing, 12, 1, 50, np.random.default_rng(seed))
        free = bpre.run_bpre(growing, 12, 1, 10 ** 9, np.random.default_rng(seed))
        assert not free.overflow
        for k in (10, 30, 50):
            assert (capped.z[-1] >= k) == (free.z[-1] >= k)


def test_capping_soundness_mc(doubling):
    capped = bpre.mc_tail(doubling, 10, 1, 64, 1000, cap=100, seed=3)
    free = bpre.mc_tail(doubling, 10, 1, 64, 1000, seed=3)
    assert capped.p_hat == free.p_hat == 1.0


def test_jump_estimate_matches_exact(critical):
    exact, _ = bpre.exact_tail(critical, 4, 1, 16)
    estimate = tilted_estimate(critical, 0.0, 4, 1, 16, 40000, seed=5, jump=4)
    assert estimate.jump == 4
    assert estimate.hits > 0
    assert abs(estimate.p_hat - exact.p_hat) <= 5 * estimate.std_err


def test_jump_estimate_reaches_deep_tail(bundled):
    heavy = bundled['heavy_supercritical']
    jump = tilted_estimate(heavy, 0.0, 3, 1, 1000, 4000, seed=8, jump=1000)
    naive = bpre.mc_tail(heavy, 3, 1, 1000, 4000, seed=8)
    assert naive.hits < MIN_HITS
    assert jump.hits >= 500
    assert jump.relative_error < 0.1


def test_jump_estimate_invalid(critical):
    with pytest.raises(ValueError):
        tilted_estimate(critical, 0.0, 4, 2, 16, 100, jump=4)


def test_empirical_rate_curve_jump(bundled):
    heavy = bundled['heavy_supercritical']
    theta = bpre.drift(heavy) + 0.1
    strategy = bpre.optimal_strategy(heavy, 2.5, theta)
    assert strategy.regime is bpre.Strategy.JUMP_THEN_GROW
    point = bpre.empirical_rate_curve(heavy, 2.5, theta, [40], 8000, seed=0)[0]
    assert point.estimate.jump == math.ceil(math.exp(strategy.s_theta * 40))
    assert point.estimate.hits >= MIN_HITS
    assert point.estimate.relative_error <= 0.3


def test_level_rate_scan(galton_watson, critical):
    points = bpre.level_rate_scan(galton_watson, 0.0, [1, 2, 3], 100, method='exact')
    for point in points:
        assert point.estimate.threshold == 1
        assert point.rate == pytest.approx(math.log(2), abs=1e-12)

    naive = bpre.level_rate_scan(critical, 0.3, [4], 5000, seed=6)[0]
    assert naive.estimate.method is bpre.Method.NAIVE
    assert naive.estimate.threshold == math.ceil(math.exp(1.2))

    with pytest.raises(ValueError):
        bpre.level_rate_scan(critical, 0.3, [4], 100, method='tilted')


def test_triangle_checks_deep_tail(critical):
    checks = bpre.triangle_checks(critical, 6, 20000, seed=1, target=1e-4)
    deep = [c for c in checks if c.name == 'n=6 tilted~exact deep']
    assert len(deep) == 1
    assert 'too few hits' not in deep[0].detail
    hits = int(deep[0].detail.rsplit('hits=', 1)[1])
    assert hits >= MIN_HITS


def test_triangle_checks_unreachable_deep_tail(critical):
    # ten replicates cannot be expected to hit any threshold with probability below 0.05 two hundred times
    checks = bpre.triangle_checks(critical, 4, 10, seed=1)
    names = [c.name for c in checks]
    assert 'n=4 tilted~exact deep' not in names
    assert 'n=4 tilt variance reduction' not in names
    assert names[-1] == 'n=4 survival<=exp(M_n)'


def test_triangle_checks_too_few_hits(critical, monkeypatch):
    def degenerate(env, n, z0, theta_prime, k, replicates, **kwargs):
        return bpre.TailEstimate(3.458e-7, 3.46e-7, replicates, bpre.Method.TILTED, k, n, hits=1)

    monkeypatch.setattr(bpre.simulate, 'tilted_tail', degenerate)
    checks = bpre.triangle_checks(critical, 6, 20000, seed=1, target=1e-4)
    deep = [c for c in checks if c.name == 'n=6 tilted~exact deep'][0]
    assert deep.status is bpre.Status.FAIL
    assert deep.detail.startswith('too few hits')


def test_triangle_checks_band(critical):
    wide = bpre.triangle_checks(critical, 4, 2000, seed=2, band=1e6)
    assert all(c.passed for c in wide if 'naive~exact' in c.name)
