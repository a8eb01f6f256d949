import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bnlab.batch import SeedSpec, gaussian_matrix
from bnlab.errors import InvalidParameterError, PreconditionError, UnsupportedDimensionError
from bnlab.rank_probe import (
    Exhausted,
    chernoff_bound,
    circle_batch,
    estimate_gamma_exact_2d,
    estimate_gamma_mc,
    min_neurons_to_full_rank,
    rank_probe_experiment,
    sign_pattern,
    simple_bound,
    wilson_interval,
)

E12 = np.eye(2)


def test_sign_pattern_examples():
    np.testing.assert_array_equal(sign_pattern([1.0, 0.0], E12), [1, 0])
    w = np.array([0.3, -1.2])
    b = gaussian_matrix(2, 6, 1.0, SeedSpec(1))
    np.testing.assert_array_equal(sign_pattern(w, b), sign_pattern(2 * w, b))
    np.testing.assert_array_equal(sign_pattern(-w, b), -sign_pattern(w, b))
    with pytest.raises(InvalidParameterError):
        sign_pattern([0.0, 0.0], b)


@pytest.mark.parametrize(
    "b, lo, hi, classes",
    [
        (E12, 0.24, 0.26, 4),
        (np.array([[1.0], [0.0]]), 0.49, 0.51, 2),
    ],
)
def test_gamma_mc_examples(b, lo, hi, classes):
    est = estimate_gamma_mc(b, 100_000, SeedSpec(0))
    assert lo <= est.gamma_hat <= hi
    assert est.classes_observed == classes
    assert not est.exact and est.samples == 100_000
    assert est.ci_low <= est.gamma_hat <= est.ci_high


def test_gamma_mc_circle():
    # five lines through the origin cut the plane into ten equal sectors
    est = estimate_gamma_mc(circle_batch(5), 100_000, SeedSpec(0))
    assert est.classes_observed == 10
    assert abs(est.gamma_hat - 0.1) <= 3 * est.stderr


@pytest.mark.parametrize(
    "b, gamma, classes",
    [
        (E12, 0.25, 4),
        (circle_batch(5), 0.1, 10),
        (np.array([[1.0, 2.0], [1.0, 2.0]]), 0.5, 2),
        (np.array([[1.0, -3.0], [0.5, -1.5]]), 0.5, 2),
        (circle_batch(4), 0.25, 4),
    ],
)
def test_gamma_exact_examples(b, gamma, classes):
    est = estimate_gamma_exact_2d(b)
    assert est.exact
    assert est.gamma_hat == pytest.approx(gamma, abs=1e-15)
    assert est.classes_observed == classes


def test_gamma_exact_needs_planar_batch():
    with pytest.raises(UnsupportedDimensionError):
        estimate_gamma_exact_2d(np.ones((3, 4)))


def test_mc_caveat_for_few_samples():
    assert estimate_gamma_mc(E12, 10, SeedSpec(0)).caveat


@pytest.mark.parametrize("seed", range(5))
def test_mc_agrees_with_exact(seed):
    b = gaussian_matrix(2, 4, 1.0, SeedSpec(seed, 1))
    exact = estimate_gamma_exact_2d(b).gamma_hat
    mc = estimate_gamma_mc(b, 100_000, SeedSpec(seed, 2))
    assert abs(mc.gamma_hat - exact) <= 3 * math.sqrt(exact * (1 - exact) / mc.samples)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.floats(0, 2 * np.pi), st.lists(st.floats(0.01, 100), min_size=5, max_size=5))
def test_exact_gamma_rotation_and_scale_invariant(seed, angle, scales):
    b = gaussian_matrix(2, 5, 1.0, SeedSpec(seed))
    g = estimate_gamma_exact_2d(b).gamma_hat
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    assert estimate_gamma_exact_2d(rot @ b).gamma_hat == pytest.approx(g, abs=1e-9)
    assert estimate_gamma_exact_2d(b * np.array(scales)).gamma_hat == pytest.approx(g, abs=1e-9)


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(30, 1000)
    assert lo < 0.03 < hi
    assert wilson_interval(0, 10)[0] == 0.0


def test_single_column_needs_geometric_number_of_neurons():
    b = np.array([[0.6], [0.8]])
    ys = [min_neurons_to_full_rank(b, seed=SeedSpec(0, t)) for t in range(10_000)]
    assert 1.9 <= np.mean(ys) <= 2.1


def test_first_full_rank_prefix_matches_one_at_a_time():
    b = circle_batch(5)
    for t in range(20):
        s = SeedSpec(4, t)
        y = min_neurons_to_full_rank(b, max_d=300, seed=s)
        z = np.maximum(s.generator().standard_normal((300, 2)) @ b, 0)
        brute = next(d for d in range(1, 301) if np.linalg.matrix_rank(z[:d]) == 5)
        assert y == brute >= 5


def test_collinear_columns_rejected():
    b = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 1.0]])
    with pytest.raises(PreconditionError, match="columns 0 and 1"):
        min_neurons_to_full_rank(b)


def test_exhausted():
    b = gaussian_matrix(2, 6, 1.0, SeedSpec(2))
    assert min_neurons_to_full_rank(b, max_d=6, seed=SeedSpec(0)) in (6, Exhausted(6))
    with pytest.raises(InvalidParameterError):
        min_neurons_to_full_rank(b, max_d=5)


def test_circle_expected_neurons():
    rep = rank_probe_experiment(circle_batch(5), 1000, [3, 5], seed=SeedSpec(0))
    assert min(rep.y) >= 5
    assert rep.mean_y <= 25
    assert rep.mean_y <= rep.bound_mean + 3 * rep.stderr_y


def test_failure_at_alpha_four():
    b = circle_batch(5)
    g = estimate_gamma_exact_2d(b).gamma_hat
    d = int(4 * 5 / g)
    trials = 500
    fails = sum(isinstance(min_neurons_to_full_rank(b, max_d=d, seed=SeedSpec(1, t)), Exhausted) for t in range(trials))
    p = simple_bound(5, 4.0)
    assert fails / trials <= p + 3 * math.sqrt(p * (1 - p) / trials)


def test_single_trial_report():
    rep = rank_probe_experiment(circle_batch(5), 1, [3], seed=SeedSpec(2))
    assert len(rep.y) == 1 and rep.mean_y == rep.y[0] and rep.stderr_y == 0.0


def test_workers_do_not_change_results():
    b = circle_batch(7)
    a = rank_probe_experiment(b, 40, seed=SeedSpec(3))
    c = rank_probe_experiment(b, 40, seed=SeedSpec(3), workers=4)
    assert a.y == c.y


def test_with_bn_uses_recentered_gamma():
    b = np.array([[1.0, 2.0, 0.5, 3.0], [0.2, 1.5, 2.5, 0.9]])
    rep = rank_probe_experiment(b, 200, [3], with_bn=True, seed=SeedSpec(4))
    g = estimate_gamma_exact_2d(b - b.mean(axis=1, keepdims=True)).gamma_hat
    assert rep.gamma.gamma_hat == g
    assert rep.mean_y <= 4 / g + 3 * rep.stderr_y


@pytest.mark.parametrize("n, alpha, gamma", [(5, 3.0, 0.1), (5, 4.0, 0.2), (10, 2.5, 0.05), (3, 1.5, 0.3)])
def test_chernoff_closed_form_is_the_optimum(n, alpha, gamma):
    s = np.linspace(1e-9, -math.log(1 - gamma) - 1e-12, 400_001)
    mgf = (gamma * np.exp(s) / (1 - (1 - gamma) * np.exp(s))) ** n * np.exp(-s * alpha * n / gamma)
    assert chernoff_bound(n, alpha, gamma) == pytest.approx(mgf.min(), rel=1e-6)
    assert chernoff_bound(n, alpha, gamma) <= simple_bound(n, alpha)
