import math
import warnings

import numpy as np
import pytest

from rnormlab.constructions import (
    AUTO,
    ParityTarget,
    PeriodicRidgeTarget,
    cap_construction,
    parity_full_average,
    parity_random_average,
    periodic_average,
    periodic_blades,
    periodic_k_start,
    periodic_perturbations,
    random_average_k_start,
    sawtooth_sum,
)
from rnormlab.cube import band_probability, cube, parity
from rnormlab.nets import TwoLayerNet, rnorm
from rnormlab.ridge import sawtooth


def test_parity_target():
    X = cube(4)
    assert np.array_equal(ParityTarget(4)(X), parity(X))
    assert np.array_equal(ParityTarget(4, (2, 0))(X), X[:, 0] * X[:, 2])
    with pytest.raises(ValueError):
        ParityTarget(3, (3,))


def test_sawtooth_sum_equals_concatenation():
    rng = np.random.default_rng(0)
    S = rng.choice([-1.0, 1.0], size=(6, 6))
    fast = sawtooth_sum(S, 2, 0.3)
    slow = TwoLayerNet.concatenate([sawtooth(s, 2)[1] for s in S], [0.3] * 6)
    X = cube(6)
    assert np.allclose(fast(X), slow(X), atol=1e-12)
    assert fast.l1_mass == pytest.approx(slow.l1_mass)


def test_full_average_d2_value():
    g = parity_full_average(2)
    assert g([1.0, 1.0]) == pytest.approx(1.0)
    assert band_probability(2, 0) == 0.5
    assert rnorm(g) <= 8 * math.sqrt(2) + 1e-9


def test_full_average_d4_mass():
    g = parity_full_average(4)
    assert g.l1_mass == pytest.approx(4 * 2 / 0.375)
    assert g.l1_mass == pytest.approx(21.333333333333, abs=1e-9)


@pytest.mark.parametrize("d", [2, 4, 6, 8, 10])
def test_full_average_interpolates(d):
    g = parity_full_average(d)
    X = cube(d)
    assert np.max(np.abs(g(X) - parity(X))) <= 1e-9
    q = band_probability(d, 0)
    assert rnorm(g) <= 4 * math.sqrt(d) / q + 1e-9


def test_full_average_errors():
    with pytest.raises(ValueError):
        parity_full_average(5)
    with pytest.raises(ValueError):
        parity_full_average(16)


def test_random_average_k_start_regimes():
    k, regime, T = random_average_k_start(12, 0, 0.25)
    assert regime == 1 and T == 2 * math.ceil(math.sqrt(6 * math.log(32)))
    assert k == math.ceil(12**1.5 * math.sqrt(math.log(4)) / 0.0625)
    k2, regime2, _ = random_average_k_start(100, 100, 0.25)
    assert regime2 == 2 and k2 == math.ceil(100**2 / (0.25 * 100**2))


def test_random_average_full_band_exact():
    net, rep = parity_random_average(6, 6, 0.25, k=3, seed=1)
    X = cube(6)
    assert np.max(np.abs(net(X) - parity(X))) <= 1e-9
    assert rep["sup_error"] <= 1e-9


def test_random_average_report_and_width():
    net, rep = parity_random_average(8, 2, 0.3, k=AUTO, seed=2)
    for key in ("params", "seed", "q", "k", "regime", "T", "sup_error", "rnorm_upper", "checks"):
        assert key in rep
    assert rep["checks"]["target_met"]
    assert net.width <= rep["k"] * (2 + 3)
    assert rep["checks"]["sign_consistent"]
    assert rep["q"] == pytest.approx(band_probability(8, 2))
    assert rep["l1_mass"] == pytest.approx(rep["rnorm_upper"], rel=1e-12)


def test_random_average_sign_consistency_and_counting():
    d, t, k = 8, 2, 40
    net, rep = parity_random_average(d, t, 0.25, k=k, seed=3)
    X = cube(d)
    g = net(X)
    assert np.all(g * parity(X) >= -1e-9)
    # g / chi counts the sawtooth bands containing x
    ratio = g * parity(X) * k * rep["q"]
    assert np.allclose(ratio, np.round(ratio), atol=1e-8)


def test_random_average_errors_non_increasing_median():
    d, t = 10, 0
    meds = []
    for k in (50, 200, 800):
        errs = [parity_random_average(d, t, 0.25, k=k, seed=s)[1]["sup_error"] for s in range(5)]
        meds.append(np.median(errs))
    assert meds[0] >= meds[1] >= meds[2]


def test_random_average_cap_reported():
    net, rep = parity_random_average(10, 0, 0.01, k=AUTO, seed=0, max_atoms=3000)
    assert rep["checks"]["cap_hit"] and not rep["checks"]["target_met"]
    assert net.width <= 3000
    _, rep = parity_random_average(10, 0, 0.05, k=AUTO, seed=0, max_atoms=30_000)
    assert rep["checks"]["cap_hit"] and rep["width"] <= 30_000


def test_random_average_argument_checks():
    with pytest.raises(ValueError):
        parity_random_average(8, 1, 0.25)
    with pytest.raises(ValueError):
        parity_random_average(8, 0, 0.6)


def independent_points(d, n, rng):
    while True:
        X = rng.choice([-1.0, 1.0], size=(n, d))
        if np.linalg.matrix_rank(X) == n:
            return X


def test_cap_exact_fit_small():
    rng = np.random.default_rng(4)
    d = 32
    X = independent_points(d, 24, rng)
    y = parity(X)
    # groups of size between c1 d / ln d and twice that
    c1 = 2 * math.log(d) / d
    net, rep = cap_construction((X, y), c1, seed=0)
    assert rep["checks"]["P1"]
    lo, hi = rep["params"]["group_size_range"]
    assert all(lo <= s <= hi for s in rep["group_sizes"])
    assert rep["rnorm"] <= rep["rnorm_bound_groups"] + 1e-9
    assert rep["rnorm"] == pytest.approx(rep["rnorm_upper"], rel=1e-9)
    if rep["checks"]["margin"]:
        assert rep["checks"]["interpolates"]


def test_cap_margin_implies_interpolation():
    # the sound form of the case analysis: in-group exact fit plus out-of-group margin 1/2
    rng = np.random.default_rng(5)
    d = 128
    hits = 0
    for s in range(3):
        X = rng.choice([-1.0, 1.0], size=(16, d))
        net, rep = cap_construction((X, parity(X)), math.log(d) / d * 2, seed=s)
        if rep["checks"]["P1"] and rep["checks"]["margin"]:
            hits += 1
            assert rep["checks"]["interpolates"]
            assert np.max(np.abs(net(X) - parity(X))) <= 1e-6
    assert hits >= 1


def test_cap_errors():
    X = cube(4)
    with pytest.raises(ValueError):
        cap_construction((X, np.full(16, 0.5)), 1.0)
    with pytest.raises(ValueError):
        cap_construction((X, parity(X)), 0.01)


def cosine_target(d, rho):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return PeriodicRidgeTarget(np.full(d, 1 / math.sqrt(d)), rho,
                                   lambda z: np.cos(2 * math.pi * np.asarray(z) / rho), 2 * math.pi / rho)


def test_periodic_target_validation():
    with pytest.raises(ValueError):
        PeriodicRidgeTarget(np.array([1.0, 1.0]), 1.0, np.cos, 1.0)
    with pytest.raises(ValueError):
        PeriodicRidgeTarget(np.array([1.0, 0.0]), 1.0, lambda z: np.cos(z), 1.0)
    with pytest.warns(RuntimeWarning):
        PeriodicRidgeTarget(np.array([0.6, 0.8]), 2.0, lambda z: np.cos(np.pi * z), np.pi)


def test_periodic_target_equals_parity_at_rho_4_over_sqrt_d():
    d = 8
    f = cosine_target(d, 4 / math.sqrt(d))
    X = cube(d)
    assert np.allclose(f(X), parity(X), atol=1e-12)


def test_periodic_sigma():
    d = 16
    f = cosine_target(d, 8 / math.sqrt(d))
    assert f.sigma == pytest.approx(math.sqrt(15))


def test_periodic_blades_exact_on_cube():
    d = 12
    f = cosine_target(d, 8 / math.sqrt(d))
    rng = np.random.default_rng(6)
    W = periodic_perturbations(f, 200, rng)
    X = cube(d)
    assert np.max(np.abs(periodic_blades(f, W, X) - f(X)[None, :])) <= 1e-6
    assert set(np.unique(W)) <= {0.0, -2.0}


def test_periodic_zero_perturbation_single_blade():
    d = 16
    f = cosine_target(d, 8 / math.sqrt(d))
    W = np.zeros((3, d))
    net, rep = periodic_average(f, 0.3, perturbations=W)
    assert rep["k"] == 3
    # all blades coincide, so the network is one truncated ridge approximant
    assert np.allclose(net.W, f.v)


def test_periodic_average_meets_target():
    d = 16
    f = cosine_target(d, 2.0)
    net, rep = periodic_average(f, 0.3, AUTO, seed=0)
    assert rep["checks"]["target_met"]
    assert rep["k"] >= periodic_k_start(d, 0.3)
    assert rep["sigma"] == pytest.approx(math.sqrt(15))
    assert rep["rnorm_upper"] == pytest.approx(net.l1_mass)
    assert rep["max_direction_norm"] <= rep["direction_norm_bound"] + 1


def test_periodic_k_start():
    assert periodic_k_start(16, 0.3) == math.floor(9 * 17 * math.log(2) / 0.3) + 1
