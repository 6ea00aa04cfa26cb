from fractions import Fraction

import numpy as np
import pytest

import oracles
from depstat.cvm import (bn_stat, cvm_test, ecdf, joint_cvm, mobius_cvm,
                         mobius_cvm_all_subsets)
from depstat.data import as_block_sample


def test_ecdf_examples():
    assert ecdf([[0.0], [1.0], [2.0]], [1.0]) == 2 / 3
    assert ecdf([[0.0], [1.0], [2.0]], [-1.0]) == 0.0
    assert ecdf([[0.0], [1.0], [2.0]], [5.0]) == 1.0
    assert ecdf([[0.0, 0.0], [1.0, 1.0]], [1.0, 0.0]) == 0.5
    with pytest.raises(ValueError):
        ecdf([[0.0, 0.0]], [1.0])


def test_ecdf_monotone(rng):
    data = rng.standard_normal((20, 2))
    p = rng.standard_normal(2)
    assert ecdf(data, p) <= ecdf(data, p + np.array([0.3, 0.0]))


def test_bn_fixtures():
    assert bn_stat([0.0, 1.0], [0.0, 1.0]) == 1 / 32
    assert bn_stat([0.0, 3.0, 1.0], [2.0, 2.0, 2.0]) == 0.0


def test_bn_matches_rational_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(2, 12))
        x = rng.integers(0, 4, size=(n, 2)).astype(float)  # ties included
        y = rng.standard_normal(n)
        assert bn_stat(x, y) == pytest.approx(float(oracles.bn(x.tolist(), y.tolist())),
                                              abs=1e-15)


def test_bn_bounds_and_symmetry(rng):
    for _ in range(200):
        n = int(rng.integers(2, 15))
        x, y = rng.standard_normal((n, 2)), rng.standard_normal(n)
        v = bn_stat(x, y)
        assert 0.0 <= v <= 1 / 16
        assert v == bn_stat(y, x)


def test_joint_cvm_two_blocks_is_bn(rng):
    x, y = rng.standard_normal((15, 2)), rng.standard_normal(15)
    assert joint_cvm([x, y]) == bn_stat(x, y)
    assert joint_cvm([x, np.ones(15)]) == 0.0


def test_joint_cvm_three_block_fixture():
    blocks = [[0.0, 2.0, 1.0], [1.0, 0.0, 2.0], [2.0, 1.0, 0.0]]
    assert oracles.joint(blocks) == Fraction(1, 81)
    assert joint_cvm([np.array(b) for b in blocks]) == pytest.approx(1 / 81, abs=1e-15)


def test_mobius_cvm_hand_example():
    assert mobius_cvm([[0.0, 1.0], [0.0, 1.0]], (0, 1)) == 1 / 32


def test_mobius_cvm_and_bn_on_fixture():
    x, y = [0.0, 1.0, 3.0, 2.0], [1.0, 0.0, 2.0, 3.0]
    # both loop oracles give 1/128 here; for two blocks the Möbius term reduces to F_XY - F_X F_Y
    assert 4 * bn_stat(x, y) == 4 / 128
    assert 4 * mobius_cvm([x, y], (0, 1)) == pytest.approx(4 / 128, abs=1e-15)


def test_mobius_cvm_matches_oracle(rng):
    blocks = [rng.standard_normal((8, 2)), rng.standard_normal(8), rng.standard_normal(8)]
    for subset in [(0, 1), (0, 2), (1, 2), (0, 1, 2)]:
        ref = float(oracles.mobius_cvm([b.tolist() for b in blocks], subset))
        assert mobius_cvm(blocks, subset) == pytest.approx(ref, abs=1e-15)


def test_mobius_cvm_constant_block(rng):
    assert mobius_cvm([rng.standard_normal(9), np.full(9, 2.0), rng.standard_normal(9)],
                      (0, 1, 2)) == 0.0
    with pytest.raises(ValueError):
        mobius_cvm([rng.standard_normal(9), rng.standard_normal(9)], (1,))


def test_order_invariance_exact(rng):
    x, y, z = rng.standard_normal((20, 2)), rng.standard_normal(20), rng.standard_normal(20)
    gx, gy, gz = x ** 3, np.exp(y), 5 * z + 2
    assert bn_stat(x, y) == bn_stat(gx, gy)
    assert joint_cvm([x, y, z]) == joint_cvm([gx, gy, gz])
    assert mobius_cvm([x, y, z], (0, 1, 2)) == mobius_cvm([gx, gy, gz], (0, 1, 2))
    p = rng.permutation(20)
    assert bn_stat(x[p], y[p]) == bn_stat(x, y)
    assert mobius_cvm([x[p], y[p], z[p]], (0, 2)) == mobius_cvm([x, y, z], (0, 2))


def test_cvm_test(rng):
    x = rng.standard_normal(40)
    y = x + 0.3 * rng.standard_normal(40)
    res = cvm_test(x, y, reps=199, seed=2)
    assert res.p_value == 1 / 200
    assert res.statistic == 40 * bn_stat(x, y)
    res0 = cvm_test(x, rng.standard_normal(40), reps=0, seed=2)
    assert res0.p_value is None


def test_mobius_cvm_all_subsets(rng):
    s = as_block_sample([rng.standard_normal(20) for _ in range(3)])
    res = mobius_cvm_all_subsets(s, reps=99, seed=1)
    assert len(res.subsets) == 4
    for sub in res.subsets:
        assert sub.value == pytest.approx(20 * mobius_cvm(s, sub.blocks), abs=1e-15)
    assert mobius_cvm_all_subsets(s, reps=99, seed=1, threads=2).to_dict() == res.to_dict()
