import math

import numpy as np
import pytest

from rnormlab.cube import cube, parity
from rnormlab.nets import rnorm
from rnormlab.ridge import (
    InfeasibleError,
    PiecewiseLinearFn,
    RidgeFn,
    TRUNCATION_CONST,
    direction_pool,
    pwl_to_net,
    ridge_direction_bound,
    ridge_rnorm,
    sawtooth,
    sawtooth_profile,
    search_ridge_vp,
    solve_ridge_vp,
    truncate_lipschitz,
    truncation_profile,
    tv_prime,
)


def secant_oracle(z, y):
    o = np.argsort(z)
    s = np.diff(y[o]) / np.diff(z[o])
    return float(np.sum(np.abs(np.diff(s))))


def test_pwl_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearFn(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    p = PiecewiseLinearFn.from_knots([(0, 0), (1, 1)], left_slope=2.0, right_slope=-1.0)
    assert p(-1.0) == pytest.approx(-2.0)
    assert p(3.0) == pytest.approx(-1.0)
    assert p(0.5) == pytest.approx(0.5)


def test_tv_prime_hinge_and_bump():
    assert tv_prime(PiecewiseLinearFn.hinge(0.3, -2.5), (-1, 1)) == pytest.approx(2.5)
    bump = PiecewiseLinearFn.from_knots([(-1, 0), (0, 1), (1, 0)])
    assert tv_prime(bump, (-2, 2)) == pytest.approx(4.0)
    # knots on the boundary are excluded
    assert tv_prime(bump, (-1, 1)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        tv_prime(bump, (1, 1))


def test_tv_prime_full_sawtooth_profile():
    # phi_4 on the w^T x scale: 5 interior flips of size 2 plus two boundary changes of 1
    p = sawtooth_profile(4, 4)
    assert tv_prime(p, (-6, 6)) == pytest.approx(12.0)


def test_tv_prime_affine_invariance():
    rng = np.random.default_rng(0)
    z = np.sort(rng.uniform(-3, 3, 9))
    p = PiecewiseLinearFn(z, rng.uniform(-1, 1, 9), 0.3, -0.2)
    assert tv_prime(p.add_affine(1.7, -0.4), (-3, 3)) == pytest.approx(tv_prime(p, (-3, 3)))


def test_ridge_rnorm_examples():
    r0, _ = sawtooth(np.ones(4), 0)
    assert ridge_rnorm(r0) == pytest.approx(8.0)
    r4, _ = sawtooth(np.ones(4), 4)
    # knots at +-5/2 lie outside the domain [-2, 2]; only the 3 interior flips of 4 count
    assert ridge_rnorm(r4) == pytest.approx(12.0)
    aff = RidgeFn(PiecewiseLinearFn.affine(3.0, 1.0), np.array([1.0, 0.0]))
    assert ridge_rnorm(aff) == 0.0


def test_ridge_rnorm_rotation_invariance():
    rng = np.random.default_rng(1)
    d = 5
    z = np.sort(rng.uniform(-2, 2, 6))
    prof = PiecewiseLinearFn(z, rng.uniform(-1, 1, 6), 0.5, 0.1)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    r, rq = RidgeFn(prof, u), RidgeFn(prof, Q @ u)
    assert ridge_rnorm(rq) == pytest.approx(ridge_rnorm(r))
    X = rng.standard_normal((50, d))
    assert np.allclose(rq(X @ Q.T), r(X))


def test_pwl_to_net_single_hinge():
    net = pwl_to_net(RidgeFn(PiecewiseLinearFn.hinge(0.2, 1.5), np.array([0.0, 1.0])))
    assert net.width == 1 and net.a[0] == pytest.approx(1.5) and net.b[0] == pytest.approx(-0.2)


def test_pwl_to_net_sawtooth_d2():
    _, net = sawtooth([1, 1], 0)
    r2 = math.sqrt(2)
    assert np.allclose(net.a, [-r2, 2 * r2, -r2])
    assert rnorm(net) == pytest.approx(4 * r2)


def test_pwl_to_net_matches_ridge_random():
    rng = np.random.default_rng(2)
    for _ in range(100):
        d = int(rng.integers(1, 7))
        sd = math.sqrt(d)
        k = int(rng.integers(1, 8))
        z = np.sort(rng.uniform(-sd, sd, k))
        if k > 1 and np.min(np.diff(z)) < 1e-6:
            continue
        prof = PiecewiseLinearFn(z, rng.uniform(-2, 2, k), rng.uniform(-1, 1), rng.uniform(-1, 1))
        u = rng.standard_normal(d)
        r = RidgeFn(prof, u / np.linalg.norm(u))
        net = pwl_to_net(r)
        assert rnorm(net) == pytest.approx(ridge_rnorm(r), abs=1e-9)
        X = rng.standard_normal((200, d))
        X *= (sd * rng.random(200) ** (1 / d) / np.linalg.norm(X, axis=1))[:, None]
        assert np.max(np.abs(net(X) - r(X))) <= 1e-9


def test_pwl_to_net_rejects_outside_knots_when_unrestricted():
    r = RidgeFn(PiecewiseLinearFn.hinge(3.0, 1.0), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        pwl_to_net(r, restrict=False)
    assert pwl_to_net(r).width == 0


@pytest.mark.parametrize("d", range(1, 11))
def test_sawtooth_identity_exhaustive(d):
    rng = np.random.default_rng(d)
    X = cube(d)
    chi = parity(X)
    for t in range(d % 2, d + 1, 2):
        for _ in range(5):
            w = rng.choice([-1.0, 1.0], size=d)
            r, net = sawtooth(w, t)
            want = chi * (np.abs(X @ w) <= t)
            assert np.max(np.abs(net(X) - want)) <= 1e-9
            assert np.max(np.abs(r(X) - want)) <= 1e-9
            assert net.width <= t + 3


def test_sawtooth_examples():
    _, net = sawtooth([1, -1], 0)
    assert net([1.0, 1.0]) == pytest.approx(1.0)
    assert net([1.0, -1.0]) == pytest.approx(0.0, abs=1e-12)
    _, net = sawtooth(np.ones(4), 2)
    assert net(np.ones(4)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        sawtooth(np.ones(4), 1)
    with pytest.raises(ValueError):
        sawtooth([1, 0.5], 0)


def test_sawtooth_lipschitz_after_rescale():
    d = 9
    r, _ = sawtooth(np.ones(d), 3)
    assert np.max(np.abs(r.profile.segment_slopes())) == pytest.approx(math.sqrt(d))


def test_truncation_zero_profile():
    net = truncate_lipschitz(lambda z: np.zeros_like(z), 1.0, 1.0, 0.5, np.array([1.0, 0, 0, 0]))
    assert net.width == 0 and np.allclose(net.v, 0) and net.c == 0


def test_truncation_cosine_example():
    L, t, delta = 2 * math.pi, 1.0, 0.1
    u = np.zeros(9)
    u[0] = 1.0
    phi = lambda z: np.cos(2 * math.pi * z)
    net = truncate_lipschitz(phi, L, t, delta, u)
    assert net.width <= math.ceil(2 * t * L / delta) + 2
    zs = np.linspace(-t, t, 10_000)
    X = np.outer(zs, u)
    assert np.max(np.abs(net(X) - phi(zs))) <= delta
    # vanishes past the ramp, bounded by 1 everywhere
    z_out = t + 1 / L + 0.5
    assert net(z_out * u) == pytest.approx(0.0, abs=1e-12)
    zz = np.linspace(-3, 3, 5001)
    g = net(np.outer(zz, u))
    assert np.max(np.abs(g - phi(zz))) <= 1.0 + 1e-12
    assert np.max(np.abs(g[np.abs(zz) >= t + 1 / L])) <= 1e-12
    assert rnorm(net) <= TRUNCATION_CONST * t * L**2 / delta
    # a ridge net: all rows share the direction
    assert np.allclose(net.W, u)


def test_truncation_argument_checks():
    u = np.array([1.0, 0, 0, 0])
    with pytest.raises(ValueError):
        truncate_lipschitz(np.cos, 1.0, 1.5, 0.1, u)  # t > sqrt(d) - 1
    with pytest.raises(ValueError):
        truncate_lipschitz(np.cos, 0.5, 1.0, 0.1, u)
    with pytest.raises(ValueError):
        truncate_lipschitz(np.cos, 1.0, 1.0, 1.0, u)


def test_truncation_profile_capped_band_has_no_ramp():
    p = truncation_profile(np.cos, 1.0, 5.0, 0.1, limit=3.0)
    assert p.z[0] == pytest.approx(-3.0) and p.z[-1] == pytest.approx(3.0)


def test_solve_ridge_vp_examples():
    data = (np.array([[0.0], [1.0], [2.0]]), np.array([0.0, 1.0, 0.0]))
    res = solve_ridge_vp(data, [1.0], 0.0)
    assert res.value == pytest.approx(2.0) and res.exact
    coll = (np.array([[0.0], [0.5], [1.0]]), np.array([1.0, 2.0, 3.0]))
    assert solve_ridge_vp(coll, [1.0]).value == pytest.approx(0.0, abs=1e-12)


def test_solve_ridge_vp_parity_d4():
    X = cube(4)
    res = solve_ridge_vp((X, parity(X)), np.full(4, 0.5), 0.0)
    assert res.value == pytest.approx(12.0)
    half = solve_ridge_vp((X, parity(X)), np.full(4, 0.5), 0.5)
    assert not half.exact
    assert half.value >= 4**1.5 / (2 * math.sqrt(2)) - 1e-9


def test_solve_ridge_vp_matches_secant_oracle():
    rng = np.random.default_rng(3)
    for _ in range(100):
        m = int(rng.integers(1, 9))
        z = rng.uniform(-1, 1, m)
        y = rng.uniform(-1, 1, m)
        res = solve_ridge_vp((z[:, None], y), [1.0], 0.0)
        assert res.value == pytest.approx(secant_oracle(z, y) if m > 2 else 0.0, abs=1e-6, rel=1e-9)
        assert np.allclose(res.ridge(z[:, None]), y, atol=1e-9)


def test_solve_ridge_vp_infeasible():
    data = (np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 1.0]))
    u = np.array([1.0, 1.0]) / math.sqrt(2)
    with pytest.raises(InfeasibleError):
        solve_ridge_vp(data, u, 0.0)
    with pytest.raises(InfeasibleError):
        solve_ridge_vp(data, u, 0.4)
    assert solve_ridge_vp(data, u, 0.5).value == 0.0


def test_solve_ridge_vp_tube_is_feasible():
    rng = np.random.default_rng(4)
    z = np.sort(rng.uniform(-1, 1, 30))
    y = np.sign(np.sin(7 * z))
    res = solve_ridge_vp((z[:, None], y), [1.0], 0.3)
    assert np.max(np.abs(res.ridge(z[:, None]) - y)) <= 0.3 + 1e-7
    assert res.value <= secant_oracle(z, y) + 1e-9


def test_ridge_direction_bound_examples():
    assert ridge_direction_bound(np.full(4, 0.5)) == pytest.approx(2.0)
    assert ridge_direction_bound([1.0, 0.0, 0.0]) == math.inf
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = rng.standard_normal(7)
        assert ridge_direction_bound(w) >= 7**1.5 / 4 - 1e-9


def test_direction_pool_dedupes_up_to_sign():
    X = cube(3)
    U, src = direction_pool((X, parity(X)), {"hypercube": True, "differences": 0, "random": 0,
                                              "directions": [[-1, -1, -1], [1, 1, 1]]})
    assert U.shape[0] == 4
    assert src == ["hypercube"] * 4


def test_search_ridge_vp_generator_in_pool():
    rng = np.random.default_rng(6)
    d = 5
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    prof = PiecewiseLinearFn.from_knots([(-0.5, 0.0), (0.0, 1.0), (0.7, -0.2)])
    gen = RidgeFn(prof, u)
    X = np.clip(rng.standard_normal((40, d)), -1, 1)
    data = (X, gen(X))
    res = search_ridge_vp(data, 0.0, {"hypercube": False, "differences": 20, "random": 20,
                                      "directions": [u]})
    assert res.value <= ridge_rnorm(gen) + 1e-9
    assert len(res.table) == res.directions.shape[0]
    assert set(res.table[0]) == {"direction_id", "source", "feasible", "value", "certificate_bound"}


def test_search_ridge_vp_singleton_and_determinism():
    X = cube(4)
    data = (X, parity(X))
    u = np.array([1.0, 1.0, 1.0, -1.0]) / 2
    one = search_ridge_vp(data, 0.5, {"hypercube": False, "differences": 0, "random": 0,
                                      "directions": [u]})
    assert one.value == pytest.approx(solve_ridge_vp(data, u, 0.5).value)
    a = search_ridge_vp(data, 0.0, {"hypercube": True, "random": 50}, seed=3)
    b = search_ridge_vp(data, 0.0, {"hypercube": True, "random": 50}, seed=3)
    assert a.value == b.value and a.table == b.table


def test_search_ridge_vp_parity_half_tube_bound():
    X = cube(4)
    res = search_ridge_vp((X, parity(X)), 0.5, {"hypercube": True, "differences": 0, "random": 0})
    assert res.value >= 4**1.5 / (2 * math.sqrt(2))
    assert res.value >= max(r["certificate_bound"] for r in res.table) - 1e-9


def test_search_ridge_vp_all_infeasible():
    data = (np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([0.0, 1.0]))
    with pytest.raises(InfeasibleError):
        search_ridge_vp(data, 0.0, {"hypercube": False, "differences": 0, "random": 0,
                                    "directions": [[1.0, 1.0]]})
