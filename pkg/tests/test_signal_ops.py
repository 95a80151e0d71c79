import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from childci import signal_ops as so
from childci.model import DomainError


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, allow_subnormal=False)
series = arrays(np.float64, st.integers(10, 80), elements=finite)


# -- kinematics and geometry -------------------------------------------------

def test_kinematic_profile_examples():
    speed, direction = so.kinematic_profile([(0, 0), (3, 4)], [0, 1000])
    assert speed[0] == pytest.approx(5.0)
    assert speed[-1] == speed[0]
    speed, direction = so.kinematic_profile([(0, 0), (5, 0)], [0, 100])
    assert direction[0] == 0.0
    speed, direction = so.kinematic_profile([(0, 0), (1, 1)], [0, 500])
    assert direction[0] == pytest.approx(math.pi / 4)
    assert speed[0] == pytest.approx(2.828, abs=1e-3)


def test_kinematic_profile_duplicate_timestamp_gives_zero_speed():
    speed, _ = so.kinematic_profile([(0, 0), (5, 5), (6, 6)], [0, 0, 100])
    assert speed[0] == 0.0
    assert np.isfinite(speed).all()


def test_path_and_chord_examples():
    assert so.path_and_chord([(0, 0), (1, 0), (2, 0)]) == pytest.approx((2, 2))
    assert so.path_and_chord([(0, 0), (1, 1), (2, 0)]) == pytest.approx((2 * math.sqrt(2), 2))


@given(arrays(np.float64, (10, 2), elements=finite))
def test_path_at_least_chord(p):
    path, chord = so.path_and_chord(p)
    assert path >= chord - 1e-9 * max(1.0, path)


def test_ldp_examples():
    r = so.largest_deviation_point([(0, 0), (1, 1), (2, 0)])
    assert (r.index, r.size) == (1, pytest.approx(1.0))
    r = so.largest_deviation_point([(0, 0), (1, 0), (2, 0), (3, 0)])
    assert (r.index, r.size) == (1, 0.0)
    r = so.largest_deviation_point([(0, 0), (1, 2), (2, 2), (3, 0)])
    assert (r.index, r.size) == (1, pytest.approx(2.0))
    with pytest.raises(DomainError):
        so.largest_deviation_point([(0, 0), (1, 1)])


def test_ldp_velocity_read_from_speeds():
    r = so.largest_deviation_point([(0, 0), (1, 3), (2, 0)], speeds=[1.0, 7.5, 2.0])
    assert r.velocity == 7.5


@given(arrays(np.float64, st.tuples(st.integers(3, 30), st.just(2)), elements=finite))
def test_ldp_matches_bruteforce(p):
    r = so.largest_deviation_point(p)
    i, d = oracles.ldp(p.tolist())
    assert r.size == pytest.approx(d, rel=1e-9, abs=1e-9)
    assert oracles.ldp(p.tolist())[1] == pytest.approx(oracles.ldp(p.tolist())[1])
    # the chosen index attains the maximum
    assert oracles.ldp([p[0], p[r.index], p[-1]])[1] == pytest.approx(d, rel=1e-9, abs=1e-9)


def test_radial_transform_examples():
    rs = so.radial_transform([(1, 0), (0, 1), (-1, 0), (0, -1)], (0, 0), [0, 1, 2, 3])
    assert np.allclose(rs.R, 1)
    assert np.allclose(rs.theta, [0, math.pi / 2, math.pi, 3 * math.pi / 2])
    assert np.allclose(rs.t, [0, 0.001, 0.002, 0.003])
    assert so.radial_transform([(3, 4)], (0, 0), [0]).R.tolist() == [5.0]


def test_radial_transform_two_turn_spiral():
    th = np.linspace(0, 4 * math.pi, 800)
    pts = np.column_stack([2 * th * np.cos(th), 2 * th * np.sin(th)]) + [100, 50]
    rs = so.radial_transform(pts, (100, 50), np.arange(len(th)) * 16)
    assert rs.theta[-1] - rs.theta[1] == pytest.approx(4 * math.pi - th[1], abs=1e-6)
    assert np.abs(np.diff(rs.theta[1:])).max() < math.pi


def test_radial_transform_centre_point_adds_no_rotation():
    rs = so.radial_transform([(1, 0), (0, 0), (0, 1)], (0, 0), [0, 1, 2])
    assert rs.theta.tolist() == [0.0, 0.0, 0.0]


# -- amplitude statistics ----------------------------------------------------

def test_amplitude_examples():
    a = so.amplitude_stats([1, -2, 3])
    assert (a.mav, a.iemg, a.ssi, a.wl) == (2, 6, 14, 8)
    c = so.amplitude_stats([5, 5, 5])
    assert (c.var, c.std, c.wl, c.acc) == (0, 0, 0, 0)
    with pytest.raises(DomainError):
        so.amplitude_stats([1.0])


def test_amplitude_log_zero_guard():
    a = so.amplitude_stats([0.0, 1.0, 2.0])
    assert np.isfinite(a.log_det) and a.log_det > 0
    assert a.mfl == pytest.approx(math.log(2.0))
    assert np.isfinite(so.amplitude_stats([3.0, 3.0]).mfl)


@settings(max_examples=60)
@given(series)
def test_amplitude_matches_formulas(r):
    got = so.amplitude_stats(r)
    ref = oracles.amplitude(r)
    for k, v in ref.items():
        assert getattr(got, k) == pytest.approx(v, rel=1e-9, abs=1e-9), k
    assert got.var == pytest.approx(got.std ** 2, rel=1e-12, abs=1e-12)


# -- sample entropy ------------------------------------------------------------

def test_sample_entropy_constant_is_zero():
    assert so.sample_entropy(np.full(30, 4.0)) == 0.0


@pytest.mark.parametrize("x", [np.arange(1, 21, dtype=float), np.tile([0.0, 1.0], 10)])
def test_sample_entropy_fixed_fixtures(x):
    assert so.sample_entropy(x) == pytest.approx(oracles.sample_entropy(x), rel=1e-6)


def test_sample_entropy_cap_when_no_matches():
    x = np.random.default_rng(1).normal(size=20)
    b, a = so.sample_entropy_counts(x, 3, 1e-9)
    assert a == 0 and b == 0
    nt = len(x) - 3
    assert so.sample_entropy(x, 3, 1e-9) == pytest.approx(math.log((nt - 1) * nt / 2))


def test_sample_entropy_too_short():
    with pytest.raises(DomainError):
        so.sample_entropy([1.0, 2.0, 3.0, 4.0])


@settings(max_examples=60)
@given(series, st.sampled_from([0.25, 0.5, 2.0, 8.0, 1024.0]))
def test_sample_entropy_counts_scale_invariant(x, factor):
    assert so.sample_entropy_counts(x) == so.sample_entropy_counts(x * factor)


@settings(max_examples=60)
@given(series)
def test_sample_entropy_counts_match_pairwise_oracle(x):
    r = 0.2 * float(np.std(x, ddof=1))
    assert so.sample_entropy_counts(x) == oracles.sampen_counts(x, 3, r)


# -- Higuchi -------------------------------------------------------------------

def test_higuchi_line():
    assert so.higuchi_fd(np.linspace(0, 10, 200)) == pytest.approx(1.0, abs=0.05)


def test_higuchi_white_noise():
    x = np.random.default_rng(0).uniform(size=1000)
    assert so.higuchi_fd(x) == pytest.approx(2.0, abs=0.1)


def test_higuchi_sine():
    x = np.sin(np.linspace(0, 8 * math.pi, 500))
    assert 1.0 < so.higuchi_fd(x) < 1.3


def test_higuchi_too_short():
    with pytest.raises(DomainError):
        so.higuchi_fd(np.arange(9.0))


@settings(max_examples=60)
@given(series)
def test_higuchi_matches_published_procedure(x):
    if np.ptp(x) < 1e-100:
        return
    ref = oracles.higuchi(x)
    assert so.higuchi_fd(x) == pytest.approx(ref, rel=1e-6, abs=1e-9)


# -- crossings, radial rates, extrema -----------------------------------------

def test_crossings_examples():
    assert so.crossings_and_slope_changes([1, -1, 1, -1])[0] == 3
    assert so.crossings_and_slope_changes([0, 1, 0, 1, 0])[1] == 3
    zc, ssc = so.crossings_and_slope_changes(np.arange(10.0))
    assert zc <= 1 and ssc == 0


def test_slope_change_skips_flat_steps():
    assert so.crossings_and_slope_changes([0, 1, 1, 1, 0])[1] == 1
    assert so.crossings_and_slope_changes([0, 1, 1, 2])[1] == 0


@given(arrays(np.float64, st.integers(3, 60), elements=st.integers(-5, 5).map(float)))
def test_crossings_match_oracle(r):
    assert so.crossings_and_slope_changes(r) == oracles.crossings(r)


def test_radial_rates_examples():
    rs = so.RadialSeries(np.array([0.0, 1.0]), np.array([0.0, 0.5]), np.array([0.0, 0.25]))
    assert so.radial_difference_rates(rs) == pytest.approx((1.0, 2.0))
    const = so.RadialSeries(np.full(5, 3.0), np.arange(5.0), np.arange(5.0))
    assert so.radial_difference_rates(const) == (0.0, 0.0)


def test_radial_rates_archimedes():
    n = 400
    th = np.linspace(0.5, 6 * math.pi, n)
    pts = np.column_stack([2 * th * np.cos(th), 2 * th * np.sin(th)])
    rs = so.radial_transform(pts, (0, 0), np.arange(n) * 10.0)
    per_rad, _ = so.radial_difference_rates(rs)
    assert per_rad == pytest.approx(2 * (n - 1) / n, rel=1e-6)


@given(arrays(np.float64, st.integers(2, 60), elements=finite),
       arrays(np.float64, 60, elements=st.floats(0, 3, allow_subnormal=False)),
       arrays(np.float64, 60, elements=st.floats(0, 1, allow_subnormal=False)))
def test_radial_rates_match_oracle(R, dth, dt):
    n = len(R)
    theta = np.cumsum(dth[:n])
    t = np.cumsum(dt[:n])
    got = so.radial_difference_rates(so.RadialSeries(R, theta, t))
    ref = oracles.radial_rates(R, theta, t)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_extrema_examples():
    assert so.extrema_summary([0, 1, 0, 1, 0])[:2] == (2, 1)
    assert so.extrema_summary(np.arange(8.0))[2:] == (4, 1)
    assert so.extrema_summary([0, 5, 0, 0, 0, 0, 0, 0])[2] == 1


def test_extrema_ignore_rounding_noise():
    r = 50.0 + np.array([0, 1e-14, -1e-14, 2e-14, 0, 0])
    assert so.extrema_summary(r)[:2] == (0, 0)


@given(arrays(np.float64, st.integers(3, 40), elements=st.integers(-5, 5).map(float)))
def test_extrema_counts_match_neighbour_rule(r):
    mid, lo, hi = r[1:-1], r[:-2], r[2:]
    assert so.extrema_summary(r)[:2] == (int(((mid > lo) & (mid > hi)).sum()), int(((mid < lo) & (mid < hi)).sum()))
