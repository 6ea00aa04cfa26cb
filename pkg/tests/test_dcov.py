import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from depstat.data import as_block_sample, to_ranks
from depstat.dcov import (dcor, dcov_stat, dcov_test, double_center, kernel,
                          mobius_all_subsets, mobius_dcov, pairwise_distances, subset_masks)


def test_pairwise_distance_examples():
    np.testing.assert_array_equal(pairwise_distances([0.0, 1.0, 2.0]),
                                  [[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    assert pairwise_distances([[0.0, 0.0], [3.0, 4.0]])[0, 1] == 5.0
    assert pairwise_distances([0.0, 4.0], alpha=0.5)[0, 1] == 2.0


@pytest.mark.parametrize("alpha", [0.0, 2.0, -1.0, 2.5])
def test_alpha_out_of_range(alpha):
    with pytest.raises(ValueError):
        pairwise_distances([0.0, 1.0], alpha)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        pairwise_distances([0.0, np.nan])


def test_distance_matrix_shape_properties(rng):
    D = pairwise_distances(rng.standard_normal((15, 3)), 1.3)
    np.testing.assert_array_equal(D, D.T)
    assert np.all(np.diag(D) == 0) and np.all(D >= 0)


def test_double_center_hand_values():
    K = double_center(pairwise_distances([0.0, 1.0, 2.0])).K
    ref = oracles.centered([0, 1, 2])
    np.testing.assert_allclose(K, ref, atol=1e-15)
    np.testing.assert_allclose([K[0, 0], K[0, 1], K[0, 2], K[1, 1]],
                               [10 / 9, -2 / 9, -8 / 9, 4 / 9], atol=1e-15)


def test_constant_block_kernel_is_zero():
    assert np.all(kernel(np.full((5, 2), 3.5)).K == 0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_kernel_invariants(rng, alpha):
    K = kernel(rng.standard_normal((25, 2)) * 4, alpha).K
    n = K.shape[0]
    tol = 1e-9 * n * np.abs(K).max()
    np.testing.assert_array_equal(K, K.T)
    assert np.abs(K.sum(axis=0)).max() <= tol
    assert np.abs(K.sum(axis=1)).max() <= tol


def test_dcov_fixture():
    K = kernel([0.0, 1.0, 2.0])
    assert abs(dcov_stat(K, K) - 40 / 81) <= 1e-12
    # affine reversal keeps distances, so the value is unchanged
    assert abs(dcov_stat(K, kernel([2.0, 1.0, 0.0])) - 40 / 81) <= 1e-12
    # a non-affine relabelling changes it; value from the loop oracle (= 28/81)
    assert abs(dcov_stat(K, kernel([1.0, 0.0, 2.0])) - 28 / 81) <= 1e-12
    assert abs(dcov_stat(kernel([0.0, 1, 2, 3]), kernel([1.0, 3, 0, 2])) - 0.3125) <= 1e-12


def test_dcov_constant_block_is_zero(rng):
    assert dcov_stat(kernel(rng.standard_normal(10)), kernel(np.ones(10))) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        dcov_stat(kernel([0.0, 1.0, 2.0]), kernel([0.0, 1.0]))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_dcov_matches_loop_oracle(rng, alpha):
    for _ in range(5):
        n = int(rng.integers(2, 20))
        x = rng.standard_normal((n, int(rng.integers(1, 4))))
        y = rng.standard_normal((n, int(rng.integers(1, 4))))
        got = dcov_stat(kernel(x, alpha), kernel(y, alpha))
        assert abs(got - oracles.dcov(x.tolist(), y.tolist(), alpha)) <= 1e-10


def test_dcor_examples(rng):
    x = rng.standard_normal(20)
    Kx = kernel(x)
    assert dcor(Kx, Kx) == 1.0
    assert dcor(Kx, kernel(np.ones(20))) == 0.0
    assert abs(dcor(Kx, kernel(3 * x + 7)) - 1.0) <= 1e-12


def test_symmetry_exact(rng):
    Kx, Ky = kernel(rng.standard_normal((12, 2))), kernel(rng.standard_normal(12))
    assert dcov_stat(Kx, Ky) == dcov_stat(Ky, Kx)


def test_translation_invariance_exact(rng):
    # dyadic data so that shifting is exact in floating point
    x = rng.integers(-40, 40, size=(15, 2)) / 8.0
    y = rng.integers(-40, 40, size=15) / 8.0
    shift = np.array([3.0, -2.5])
    np.testing.assert_array_equal(kernel(x + shift).K, kernel(x).K)
    assert dcov_stat(kernel(x + shift), kernel(y + 1.0)) == dcov_stat(kernel(x), kernel(y))
    s1 = as_block_sample([x, y, y[::-1]])
    s2 = as_block_sample([x + shift, y - 4.0, y[::-1] + 0.5])
    assert mobius_dcov(s1, (0, 1, 2)) == mobius_dcov(s2, (0, 1, 2))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.7])
def test_scaling(rng, alpha):
    x = rng.standard_normal(20)
    y = x + rng.standard_normal(20)
    base = dcov_stat(kernel(x, alpha), kernel(y, alpha))
    a = 2.7
    assert math.isclose(dcov_stat(kernel(a * x, alpha), kernel(y, alpha)), a ** alpha * base,
                        rel_tol=1e-12)
    assert abs(dcor(kernel(a * x, alpha), kernel(y, alpha))
               - dcor(kernel(x, alpha), kernel(y, alpha))) <= 1e-10


def test_dcor_rotation_invariant(rng):
    x = rng.standard_normal((25, 2))
    y = x[:, :1] ** 2 + rng.standard_normal((25, 1))
    t = 0.7
    R = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    assert abs(dcor(kernel(x @ R.T), kernel(y)) - dcor(kernel(x), kernel(y))) <= 1e-10


def test_row_permutation_invariance_exact(rng):
    x, y, z = rng.standard_normal((18, 2)), rng.standard_normal(18), rng.standard_normal(18)
    p = rng.permutation(18)
    assert dcov_stat(kernel(x[p]), kernel(y[p])) == dcov_stat(kernel(x), kernel(y))
    assert dcor(kernel(x[p]), kernel(y[p])) == dcor(kernel(x), kernel(y))
    assert (mobius_dcov([x[p], y[p], z[p]], (0, 1, 2))
            == mobius_dcov([x, y, z], (0, 1, 2)))


def test_rank_variant_invariance_exact(rng):
    x, y = rng.standard_normal((30, 2)), rng.standard_normal(30)
    ref = dcov_stat(kernel(to_ranks(x).values), kernel(to_ranks(y).values))
    for g in (lambda v: v ** 3, np.exp, lambda v: 5 * v + 2):
        assert dcov_stat(kernel(to_ranks(g(x)).values), kernel(to_ranks(g(y)).values)) == ref


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 32 - 1), st.sampled_from([0.5, 1.0, 1.5]))
def test_nonnegative(n, seed, alpha):
    g = np.random.default_rng(seed)
    v = dcov_stat(kernel(g.standard_normal((n, 2)), alpha), kernel(g.standard_normal(n), alpha))
    assert v >= 0.0


def test_mobius_pair_equals_n_dcov(rng):
    for alpha in (0.5, 1.0, 1.5):
        n = int(rng.integers(3, 25))
        x, y = rng.standard_normal((n, 2)), rng.standard_normal(n)
        got = mobius_dcov([x, y], (0, 1), alpha)
        assert abs(got - n * oracles.dcov(x.tolist(), y.tolist(), alpha)) <= 1e-10


def test_mobius_triple_fixture():
    blocks = [np.array(b, float) for b in
              ([0, 1, 3, 7], [2, -1, 0, 5], [1, 1, 4, -2])]
    # loop-oracle value 24.0
    assert abs(mobius_dcov(blocks, (0, 1, 2)) - 24.0) <= 1e-10
    assert mobius_dcov(blocks, 0b111) == mobius_dcov(blocks, (2, 0, 1))


def test_mobius_constant_block_is_zero(rng):
    assert mobius_dcov([rng.standard_normal(10), np.zeros(10), rng.standard_normal(10)],
                       (0, 1, 2)) == 0.0


@pytest.mark.parametrize("subset", [(0,), (0, 0), (0, 5)])
def test_mobius_subset_errors(rng, subset):
    with pytest.raises(ValueError):
        mobius_dcov([rng.standard_normal(5), rng.standard_normal(5)], subset)


def test_subset_enumeration():
    assert len(subset_masks(2)) == 1
    assert subset_masks(3) == [0b011, 0b101, 0b110, 0b111]
    assert len(subset_masks(6)) == 2 ** 6 - 6 - 1
    for d in (1, 17):
        with pytest.raises(ValueError):
            subset_masks(d)


def test_mobius_all_subsets_values_and_pvalues(rng):
    blocks = [rng.standard_normal(25) for _ in range(3)]
    blocks[2] = blocks[0] ** 2 + 0.1 * rng.standard_normal(25)
    res = mobius_all_subsets(blocks, reps=199, seed=5)
    assert [s.blocks for s in res.subsets] == [(0, 1), (0, 2), (1, 2), (0, 1, 2)]
    for s in res.subsets:
        assert s.value == mobius_dcov(blocks, s.blocks)
        assert 1 / 200 <= s.p_value <= 1
    assert res.subsets[1].p_value <= 0.01
    assert 1 / 200 <= res.combined_p_value <= 0.05
    again = mobius_all_subsets(blocks, reps=199, seed=5, threads=3)
    assert again.to_dict() == res.to_dict()


def test_mobius_all_subsets_no_reps(rng):
    res = mobius_all_subsets([rng.standard_normal(10) for _ in range(4)], reps=0, seed=1)
    assert len(res.subsets) == 11
    assert res.combined_p_value is None and all(s.p_value is None for s in res.subsets)


def test_dcov_test_detects_dependence(rng):
    x = rng.standard_normal(40)
    y = x ** 2 + 0.1 * rng.standard_normal(40)
    res = dcov_test(x, y, reps=199, seed=3, keep_replicates=True)
    assert res.p_value == 1 / 200
    assert res.statistic == dcov_stat(kernel(x), kernel(y))
    assert res.replicates.shape == (199,) and res.replicates.max() < res.statistic


def test_dcov_test_rank_statistic_invariant(rng):
    x, y = rng.standard_normal(30), rng.standard_normal(30)
    a = dcov_test(x, y, reps=99, seed=4, rank=True)
    b = dcov_test(np.exp(x), y ** 3, reps=99, seed=4, rank=True)
    assert a.statistic == b.statistic and a.p_value == b.p_value
