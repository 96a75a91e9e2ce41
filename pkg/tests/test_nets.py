import json
import math
import warnings

import numpy as np
import pytest

from rnormlab.nets import (
    Neuron,
    OutsideDomainWarning,
    TwoLayerNet,
    affine_atoms,
    canonicalize,
    deserialize,
    evaluate,
    rnorm,
    rnorm_details,
    serialize,
    v2norm_upper,
)
from rnormlab.ridge import sawtooth


def ball_points(d, n, rng):
    X = rng.standard_normal((n, d))
    X *= (math.sqrt(d) * rng.random(n) ** (1 / d) / np.linalg.norm(X, axis=1))[:, None]
    return X


def random_net(d, m, rng, affine=True):
    W = rng.standard_normal((m, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    b = rng.uniform(-math.sqrt(d), math.sqrt(d), m)
    v = rng.standard_normal(d) if affine else None
    return TwoLayerNet(d, rng.standard_normal(m), W, b, v, float(rng.standard_normal()) if affine else 0.0)


def test_single_neuron_eval():
    net = TwoLayerNet(3, [1.0], [[1.0, 0, 0]], [0.0])
    assert net([1.0, 0, 0]) == pytest.approx(1.0)


def test_affine_only_eval():
    net = TwoLayerNet(3, v=[1.0, 0, 0], c=2.0)
    assert net(np.array([[1.5, 0, 0]])) == pytest.approx(3.5)
    # outside the ball evaluation still works, with a warning
    with pytest.warns(OutsideDomainWarning):
        assert net([3.0, 0, 0]) == pytest.approx(5.0)


def test_dimension_mismatch():
    net = TwoLayerNet(3)
    with pytest.raises(ValueError):
        net(np.zeros((2, 4)))


def test_sawtooth_eval_d2():
    # s_{1,0}(x) = chi(x) 1{x1 + x2 = 0}; at (1,-1) this is chi = -1
    _, net = sawtooth([1, 1], 0)
    assert net([1.0, -1.0]) == pytest.approx(-1.0, abs=1e-12)
    assert net([1.0, 1.0]) == pytest.approx(0.0, abs=1e-12)


def test_non_unit_rows_are_normalized():
    net = TwoLayerNet(2, [1.0], [[2.0, 0.0]], [1.0])
    assert net.W[0].tolist() == [1.0, 0.0]
    assert net.a[0] == 2.0 and net.b[0] == 0.5
    with pytest.raises(ValueError):
        TwoLayerNet(2, [1.0], [[2.0, 0.0]], [1.0], normalize=False)


def test_bias_regimes():
    d = 4
    # b > sqrt(d): affine on the domain, absorbed
    net = TwoLayerNet(d, [2.0], [[1, 0, 0, 0]], [3.0])
    assert net.width == 0 and net.v[0] == 2.0 and net.c == 6.0
    with pytest.raises(ValueError):
        TwoLayerNet(d, [1.0], [[1, 0, 0, 0]], [-3.0])
    V = TwoLayerNet(d, [1.0], [[1, 0, 0, 0]], [3.5], regime="V2")
    assert V.width == 1
    with pytest.raises(ValueError):
        TwoLayerNet(d, [1.0], [[1, 0, 0, 0]], [4.5], regime="V2")
    with pytest.raises(ValueError):
        TwoLayerNet(d, v=[1, 0, 0, 0], regime="V2")


def test_neurons_view():
    net = TwoLayerNet(2, [1.0, -2.0], [[1, 0], [0, 1]], [0.1, 0.2])
    assert net.neurons[1] == Neuron(-2.0, pytest.approx(np.array([0.0, 1.0])), 0.2) or \
        net.neurons[1].a == -2.0
    assert net.l1_mass == 3.0


def test_linearity_of_combination():
    rng = np.random.default_rng(1)
    g1, g2 = random_net(5, 7, rng), random_net(5, 4, rng)
    X = ball_points(5, 200, rng)
    h = 2.5 * g1 - 0.5 * g2
    assert np.allclose(h(X), 2.5 * g1(X) - 0.5 * g2(X), atol=1e-12)
    cat = TwoLayerNet.concatenate([g1, g2], [2.5, -0.5])
    assert np.allclose(cat(X), h(X), atol=1e-12)


def test_canonicalize_exact_cancellation():
    w = np.array([0.6, 0.8])
    net = TwoLayerNet(2, [1.0, -1.0], [w, w], [0.3, 0.3], v=[0.1, 0.2], c=0.5)
    can = canonicalize(net)
    assert can.width == 0
    assert np.allclose(can.v, [0.1, 0.2]) and can.c == pytest.approx(0.5)


def test_canonicalize_antipodal_pair():
    rng = np.random.default_rng(2)
    w = np.array([0.6, 0.8])
    net = TwoLayerNet(2, [1.0, -1.0], [w, -w], [0.3, -0.3])
    can = canonicalize(net)
    assert can.width == 0
    assert np.allclose(can.v, w) and can.c == pytest.approx(0.3)
    X = ball_points(2, 500, rng)
    assert np.allclose(can(X), net(X), atol=1e-12)


def test_canonicalize_merges_duplicates():
    w = [0.0, 1.0]
    can = canonicalize(TwoLayerNet(2, [2.0, 3.0], [w, w], [0.1, 0.1]))
    assert can.width == 1 and can.a[0] == pytest.approx(5.0)


def test_canonicalize_preserves_values():
    rng = np.random.default_rng(3)
    for _ in range(5):
        net = random_net(6, 30, rng)
        # add antipodes and duplicates
        net = net + TwoLayerNet(6, -0.5 * net.a[:10], -net.W[:10], -net.b[:10]) \
            + TwoLayerNet(6, net.a[10:20], net.W[10:20], net.b[10:20])
        can = canonicalize(net)
        X = ball_points(6, 1000, rng)
        assert np.max(np.abs(can(X) - net(X))) <= 1e-9
        assert can.width <= 30


def test_rnorm_examples():
    assert rnorm(TwoLayerNet(3, [3.0], [[0, 0, 1.0]], [0.2])) == pytest.approx(3.0)
    _, s = sawtooth([1, 1, 1, 1], 0)
    assert rnorm(s) == pytest.approx(8.0, abs=1e-12)
    assert rnorm(s.with_affine([1.0, 2.0, 3.0, 4.0], -7.0)) == pytest.approx(8.0, abs=1e-12)


def test_rnorm_regime_guard():
    with pytest.raises(ValueError):
        rnorm(TwoLayerNet(2, [1.0], [[1, 0]], [3.0], regime="V2"))


def test_rnorm_details_flags_near_duplicates():
    w = np.array([1.0, 0.0])
    w2 = np.array([math.cos(1e-8), math.sin(1e-8)])
    val, exact = rnorm_details(TwoLayerNet(2, [1.0, 1.0], [w, w2], [0.0, 0.0]))
    assert val == pytest.approx(2.0) and not exact
    val, exact = rnorm_details(TwoLayerNet(2, [1.0, 1.0], [w, [0.0, 1.0]], [0.0, 0.0]))
    assert exact


def test_affine_atoms_example():
    atoms = affine_atoms(np.array([1.0, 0, 0, 0]), 0.0, 4)
    assert atoms.regime == "V2"
    got = sorted(zip(atoms.a.tolist(), atoms.b.tolist()))
    assert got == [(-3.0, 4.0), (4.0, 3.0)]
    assert atoms.l1_mass == pytest.approx(7.0)
    X = ball_points(4, 300, np.random.default_rng(0))
    assert np.allclose(atoms(X), X[:, 0], atol=1e-12)


def test_v2norm_upper_affine_free():
    # rows already in canonical orientation, so no affine part appears
    W = np.array([[1.0, 0, 0, 0], [0.6, 0.8, 0, 0], [0.8, 0, 0.6, 0]])
    net = TwoLayerNet(4, [1.5, -2.0, 0.25], W, [0.1, -0.7, 1.2])
    mass, v2 = v2norm_upper(net)
    assert mass == pytest.approx(3.75)
    assert v2.width == 3 and v2.regime == "V2"


def test_v2norm_upper_matches_and_bounds():
    rng = np.random.default_rng(5)
    for _ in range(20):
        net = random_net(8, int(rng.integers(1, 20)), rng)
        mass, v2 = v2norm_upper(net)
        X = ball_points(8, 500, rng)
        assert np.max(np.abs(v2(X) - net(X))) <= 1e-9
        can = canonicalize(net)
        assert rnorm(net) <= mass + 1e-12
        assert mass <= can.l1_mass + 7 * np.linalg.norm(can.v) + 4 * abs(can.c) / math.sqrt(8) + 1e-9


def test_v2norm_warns_on_bad_K():
    net = TwoLayerNet(4, v=[10.0, 0, 0, 0])
    with pytest.warns(RuntimeWarning):
        v2norm_upper(net, K=0.0)


def test_serialize_round_trip():
    empty = TwoLayerNet(3)
    assert deserialize(serialize(empty)).to_dict() == empty.to_dict()
    _, s = sawtooth([1, -1, 1, 1], 2)
    back = deserialize(serialize(s))
    assert np.array_equal(back.a, s.a) and np.array_equal(back.W, s.W)
    assert np.array_equal(back.b, s.b) and np.array_equal(back.v, s.v) and back.c == s.c


def test_deserialize_rejects_bad_input():
    bad = {"d": 2, "regime": "R", "neurons": [{"a": 1.0, "w": [2.0, 0.0], "b": 0.0}],
           "v": [0.0, 0.0], "c": 0.0}
    with pytest.raises(ValueError):
        deserialize(json.dumps(bad))
    with pytest.raises(ValueError):
        deserialize("{not json")
    bad["neurons"][0]["w"] = [1.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        deserialize(json.dumps(bad))


def test_schema_fields():
    obj = json.loads(serialize(TwoLayerNet(2, [1.0], [[1, 0]], [0.0])))
    assert set(obj) == {"d", "regime", "neurons", "v", "c"}
    assert set(obj["neurons"][0]) == {"a", "w", "b"}


def test_evaluate_grouped_path_matches_dense():
    rng = np.random.default_rng(6)
    d = 6
    U = rng.standard_normal((4, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    W = np.repeat(U, 50, axis=0)
    b = rng.uniform(-2, 2, 200)
    a = rng.standard_normal(200)
    net = TwoLayerNet(d, a, W, b)
    X = ball_points(d, 300, rng)
    dense = np.maximum(X @ W.T + b, 0) @ a
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert np.allclose(evaluate(net, X), dense, atol=1e-10)
