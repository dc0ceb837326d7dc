import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from geodesic_compass import closed_form as cf
from geodesic_compass import sampler as sm
from geodesic_compass.errors import ConditioningError
from geodesic_compass.params import ModelParams as P
from geodesic_compass.sampler import Condition, SeedSpec, Trajectory

seeds = st.integers(0, 2**63)


# -- single trajectories ----------------------------------------------------------

def test_no_events_at_time_zero():
    for s in range(20):
        assert sm.sample_poisson_times(P(3.0, 1.0, 0.0), SeedSpec(s)).n_events == 0


@settings(max_examples=30)
@given(seeds, st.integers(0, 100))
def test_replay_is_bitwise(master, stream):
    p = P(2.0, 1.0, 3.0)
    a = sm.sample_poisson_times(p, SeedSpec(master, stream))
    b = sm.sample_poisson_times(p, SeedSpec(master, stream))
    assert a == b
    assert sm.sample_times_given_n(p, 4, SeedSpec(master, stream)) == sm.sample_times_given_n(p, 4, SeedSpec(master, stream))


@settings(max_examples=30)
@given(seeds, st.floats(0.1, 5.0), st.floats(0.0, 4.0))
def test_trajectory_invariants(master, lam, t):
    traj = sm.sample_poisson_times(P(lam, 1.0, t), SeedSpec(master))
    legs = traj.legs
    assert np.all(legs >= 0)
    assert math.fsum(legs) == pytest.approx(t, abs=1e-12)
    assert all(a < b for a, b in zip(traj.event_times, traj.event_times[1:]))


def test_event_counts_are_poisson():
    p = P(1.5, 1.0, 2.0)
    n = np.array([sm.sample_poisson_times(p, SeedSpec(11, i)).n_events for i in range(20_000)])
    assert abs(n.mean() - 3.0) < 3 * math.sqrt(3.0 / n.size)
    k = np.arange(9)
    observed = np.array([(n == j).sum() for j in k[:-1]] + [(n >= 8).sum()])
    expected = n.size * np.append(stats.poisson.pmf(k[:-1], 3.0), stats.poisson.sf(7, 3.0))
    assert stats.chisquare(observed, expected).pvalue > 0.01


def test_batch_event_counts_are_poisson():
    p = P(1.0, 1.0, 2.0)
    b = sm.sample_batch(p, 100_000, SeedSpec(5).generator(0))
    assert abs(b.n_events.mean() - 2.0) < 3 * math.sqrt(2.0 / len(b))


def test_given_n_order_statistics():
    p = P(1.0, 1.0, 3.0)
    t1 = np.array([sm.sample_times_given_n(p, 1, SeedSpec(2, i)).event_times[0] for i in range(20_000)])
    assert abs(t1.mean() - 1.5) < 3 * t1.std() / math.sqrt(t1.size)
    b = sm.sample_batch(p, 100_000, SeedSpec(3).generator(0), Condition.exactly(2))
    first = b.legs[:, 0]
    assert abs(first.mean() - 1.0) < 3 * first.std() / math.sqrt(first.size)
    assert sm.sample_times_given_n(p, 0, SeedSpec(1)).legs.tolist() == [3.0]


def test_mixing_conditioned_laws_recovers_poisson_process():
    p = P(1.0, 1.0, 2.0)
    direct = sm.sample_batch(p, 100_000, SeedSpec(8).generator(0))
    rng = np.random.default_rng(9)
    ns = rng.poisson(p.mu, 100_000)
    mixed = []
    for n in np.unique(ns):
        m = int((ns == n).sum())
        b = sm.sample_batch(p, m, SeedSpec(10, int(n)).generator(0), Condition.exactly(int(n)))
        mixed.append(b.legs[:, 0])
    # first event time (t itself when there is none)
    assert stats.ks_2samp(direct.legs[:, 0], np.concatenate(mixed)).pvalue > 0.01


def test_at_least_conditioning_law_of_kth_event():
    p, k = P(0.3, 1.0, 2.0), 2
    b = sm.sample_batch(p, 50_000, SeedSpec(4).generator(0), Condition.at_least(k))
    assert np.all(b.n_events >= k)
    tk = b.legs[:, :k].sum(axis=1)
    # truncated Erlang CDF
    cdf = lambda s: stats.gamma.cdf(s, k, scale=1 / p.lam) / stats.gamma.cdf(p.t, k, scale=1 / p.lam)
    assert stats.kstest(tk, cdf).pvalue > 0.01


# -- statistics --------------------------------------------------------------------

def test_statistic_examples():
    assert sm.cosh_eta(Trajectory((), 2.0), 0.5).log_cosh_eta == pytest.approx(math.log(math.cosh(1.0)), rel=1e-15)
    assert sm.cosh_eta(Trajectory((0.4, 1.1), 2.0), 0.0).log_cosh_eta == 0.0
    two = sm.cosh_eta(Trajectory((1.0,), 2.0), 1.0)
    assert two.log_cosh_eta == pytest.approx(2 * math.log(math.cosh(1.0)), rel=1e-15)
    assert two.sinh_bound_log == pytest.approx(2 * math.log(math.sinh(1.0)), rel=1e-14)
    assert sm.cos_spherical(Trajectory((), 2.0), 0.4) == pytest.approx(math.cos(0.8), rel=1e-15)
    assert sm.cos_spherical(Trajectory((1.0,), 2.0), math.pi / 3) == pytest.approx(0.25, rel=1e-14)
    assert abs(sm.cos_spherical(Trajectory((0.5,), 2.0), math.pi)) < 1e-15


def test_jumpback_statistic():
    traj = Trajectory((0.3, 1.0), 1.8)
    c = 1.2
    assert sm.cosh_eta_jumpback(traj, c, 0) == sm.cosh_eta(traj, c)
    assert sm.cosh_eta_jumpback(traj, c, 1).log_cosh_eta == pytest.approx(
        math.log(math.cosh(c * 0.7) * math.cosh(c * 0.8)), rel=1e-14)
    assert sm.cosh_eta_jumpback(traj, c, 2).log_cosh_eta == pytest.approx(math.log(math.cosh(c * 0.8)), rel=1e-14)
    with pytest.raises(ValueError):
        sm.cosh_eta_jumpback(traj, c, 3)


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory((0.5, 0.4), 1.0)
    with pytest.raises(ValueError):
        Trajectory((1.5,), 1.0)


@settings(max_examples=30, deadline=None)
@given(seeds, st.floats(0.01, 3.0), st.just(0.0) | st.floats(1e-6, 3.0))
def test_distance_invariants(master, c, t):
    p = P(2.0, c, t)
    b = sm.sample_batch(p, 200, SeedSpec(master).generator(0))
    lc = b.log_cosh_eta(c)
    assert np.all(lc >= 0)
    ls = sm.log_sinh_from_log_cosh(lc)
    bound = b.log_sinh_bound(c)
    finite = np.isfinite(ls)
    assert np.all(bound[finite] <= ls[finite] + 1e-12 * np.maximum(1, np.abs(ls[finite])))
    assert np.all(bound[~finite] == -np.inf)
    cos = b.cos_spherical(c)
    assert np.all(np.abs(cos) <= 1.0)


@settings(max_examples=30)
@given(seeds, st.floats(0.01, 3.0), st.floats(0.01, 2.0))
def test_extending_horizon_never_decreases_distance(master, c, extra):
    traj = sm.sample_poisson_times(P(1.5, c, 2.0), SeedSpec(master))
    longer = Trajectory(traj.event_times + (2.0,), 2.0 + extra)
    assert sm.cosh_eta(longer, c).log_cosh_eta >= sm.cosh_eta(traj, c).log_cosh_eta - 1e-15


# -- estimation --------------------------------------------------------------------

def test_no_motion_is_exact():
    rep = sm.estimate("cosh", P(1.0, 0.0, 2.0), replications=5000, seed=3)
    assert rep.mean == 1.0 and rep.stderr == 0.0 and rep.zscore == 0.0


def test_cosh_estimate_against_mean():
    rep = sm.estimate("cosh", P(1.0, 0.5, 2.0), replications=100_000, seed=SeedSpec(42))
    assert rep.analytic == cf.mean_cosh(P(1.0, 0.5, 2.0))
    assert abs(rep.zscore) <= 3


def test_spherical_estimate_at_critical_rate():
    rep = sm.estimate("cos", P(2.0, 1.0, 1.0), replications=100_000, seed=7)
    assert rep.analytic == pytest.approx(2 * math.exp(-1.0), rel=1e-15)
    assert abs(rep.zscore) <= 3


@pytest.mark.parametrize("kind, cond", [
    ("cosh_eta_squared", None),
    ("sinh_bound", None),
    ("sinh_bound", Condition.exactly(2)),
    ("cosh_eta", Condition.at_least(2)),
    ("cos_spherical", Condition.exactly(1)),
    ("cosh_eta_squared", Condition.exactly(2)),
])
def test_other_estimates_agree(kind, cond):
    rep = sm.estimate(kind, P(1.0, 0.5, 2.0), cond, replications=50_000, seed=13)
    assert rep.analytic is not None
    assert abs(rep.zscore) <= 3.5


@pytest.mark.parametrize("k", [1, 2, 3])
def test_jumpback_estimates(k):
    rep = sm.estimate("jumpback", P(1.0, 0.5, 2.0), replications=50_000, seed=21, k=k)
    assert str(rep.condition) == f"N>={k}"
    assert abs(rep.zscore) <= 3.5


def test_small_rate_conditioning_does_not_degenerate():
    # Pr{N >= 2} ~ 2e-5: rejection sampling would be hopeless here
    rep = sm.estimate("jumpback", P(0.003, 1.0, 2.0), replications=20_000, seed=1, k=2)
    assert abs(rep.zscore) <= 3.5


def test_result_independent_of_worker_count():
    p = P(1.0, 0.5, 2.0)
    one = sm.estimate("cosh", p, replications=60_000, seed=9, workers=1)
    many = sm.estimate("cosh", p, replications=60_000, seed=9, workers=4)
    assert (one.mean, one.stderr) == (many.mean, many.stderr)


def test_conditioning_failures():
    with pytest.raises(ConditioningError):
        sm.estimate("cosh", P(1.0, 1.0, 0.0), Condition.at_least(1), replications=10)
    with pytest.raises(ConditioningError):
        sm.estimate("jumpback", P(1.0, 1.0, 0.0), replications=10)
    with pytest.raises(ValueError):
        sm.estimate("jumpback", P(1.0, 1.0, 1.0), Condition.none(), replications=10)
    with pytest.raises(ValueError):
        sm.estimate("nope", P(1.0, 1.0, 1.0), replications=10)
    with pytest.raises(ValueError):
        sm.estimate("cosh", P(1.0, 1.0, 1.0), replications=0)


def test_workers_from_environment(monkeypatch):
    monkeypatch.setenv("GEODESIC_COMPASS_WORKERS", "3")
    assert sm.default_workers() == 3
    monkeypatch.setenv("GEODESIC_COMPASS_WORKERS", "zero")
    with pytest.raises(ValueError):
        sm.default_workers()
