"""
Cramér–von Mises statistics built from empirical distribution functions.

All statistics are integrals against the empirical joint law, i.e. averages
over the sample points, and depend on the data only through componentwise
orderings.  Comparisons use weak inequality, so tied values count as ``<=``.
"""

from __future__ import annotations

import math

import numpy as np

from .data import BlockSample, as_block_sample
from .dcov import MobiusResult, subset_masks, mask_blocks, _normalize_subset, subset_test
from .resampling import ResamplingPlan, TestResult, permutation_pvalue


def ecdf(data, point) -> float:
    """
    Empirical CDF ``(1/n) #{i : data_i <= point componentwise}``.

    Examples
    --------
    >>> ecdf([[0.0], [1.0], [2.0]], [1.0])
    0.6666666666666666
    >>> ecdf([[0.0, 0.0], [1.0, 1.0]], [1.0, 0.0])
    0.5
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    point = np.atleast_1d(np.asarray(point, dtype=np.float64))
    if point.shape != (data.shape[1],):
        raise ValueError(
            f"point has dimension {point.size}, data has {data.shape[1]} columns")
    return int(np.all(data <= point, axis=1).sum()) / data.shape[0]


def indicator_matrix(z) -> np.ndarray:
    """``I[i, j] = 1`` when row ``j`` is componentwise ``<=`` row ``i``."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    return np.all(z[None, :, :] <= z[:, None, :], axis=2).astype(np.float64)


def _joint_from_indicators(Is: list[np.ndarray], exact: bool = True) -> float:
    n = Is[0].shape[0]
    joint = Is[0]
    for I in Is[1:]:
        joint = joint * I
    # counts are small integers, so these sums are exact in any order
    H = joint.sum(axis=1) / n
    prod = Is[0].sum(axis=1) / n
    for I in Is[1:]:
        prod = prod * (I.sum(axis=1) / n)
    sq = (H - prod) ** 2
    if exact:
        return math.fsum(sq.tolist()) / n
    return float(sq.sum()) / n


def _blocks_of(sample) -> list[np.ndarray]:
    if not isinstance(sample, BlockSample):
        sample = as_block_sample(sample)
    return sample.blocks()


def bn_stat(x, y) -> float:
    """
    ``B_n = (1/n) sum_i {F_XY(X_i, Y_i) - F_X(X_i) F_Y(Y_i)}^2``.

    Always within ``[0, 1/16]``; ``n * B_n`` is the test statistic.

    Examples
    --------
    >>> bn_stat([0.0, 1.0], [0.0, 1.0])
    0.03125
    """
    x, y = _blocks_of([x, y])
    return _joint_from_indicators([indicator_matrix(x), indicator_matrix(y)])


def joint_cvm(sample) -> float:
    """``(1/n) sum_i {H_n(Z_i) - prod_k F_{n,k}(Z_ik)}^2`` over all blocks."""
    blocks = _blocks_of(sample)
    if len(blocks) < 2:
        raise ValueError("joint_cvm needs at least two blocks")
    return _joint_from_indicators([indicator_matrix(b) for b in blocks])


def _centered_indicators(z) -> np.ndarray:
    I = indicator_matrix(z)
    return I - I.mean(axis=1, keepdims=True)


def _mobius_from_centered(Cs: list[np.ndarray], blocks, exact: bool = True) -> float:
    prod = Cs[blocks[0]].copy()
    for k in blocks[1:]:
        prod *= Cs[k]
    n = prod.shape[0]
    if exact:
        G = np.array([math.fsum(row) for row in prod.tolist()]) / n
        return math.fsum((G * G).tolist()) / n
    G = prod.sum(axis=1) / n
    return float((G * G).sum()) / n


def mobius_cvm(sample, subset) -> float:
    """
    Cramér–von Mises functional ``T_{n,A}`` of the Möbius process for ``A``.

    ``T_{n,A} = (1/n) sum_i G_A(Z_i)^2`` with
    ``G_A(z) = (1/n) sum_j prod_{k in A} {1(Z_jk <= z_k) - F_{n,k}(z_k)}``;
    ``n * T_{n,A}`` is the test statistic.
    """
    blocks = _blocks_of(sample)
    idx = _normalize_subset(subset, len(blocks))
    Cs = [_centered_indicators(b) if k in idx else None for k, b in enumerate(blocks)]
    return _mobius_from_centered(Cs, idx)


def cvm_test(x, y, reps: int = 999, seed: int = 0, *, threads: int | None = None,
             keep_replicates: bool = False) -> TestResult:
    """Permutation test of independence based on ``n * B_n``."""
    x, y = _blocks_of([x, y])
    n = x.shape[0]
    Ix, Iy = indicator_matrix(x), indicator_matrix(y)

    def evaluator(_, index):
        if index is None:
            return _joint_from_indicators([Ix, Iy], exact=False)
        p = index[1]
        return _joint_from_indicators([Ix, Iy[np.ix_(p, p)]], exact=False)

    plan = ResamplingPlan("permute-second-block", reps, seed)
    res = permutation_pvalue(evaluator, None, plan, n=n, d=2, method="cvm",
                             threads=threads, keep_replicates=keep_replicates)
    res.statistic = n * bn_stat(x, y)
    if res.replicates is not None:
        res.replicates = n * res.replicates
    return res


def mobius_cvm_all_subsets(sample, reps: int = 999, seed: int = 0, *,
                           threads: int | None = None) -> MobiusResult:
    """``n * T_{n,A}`` for every subset, permutation p-values and Fisher combination."""
    if not isinstance(sample, BlockSample):
        sample = as_block_sample(sample)
    d, n = sample.d, sample.n
    masks = subset_masks(d)
    Cs = [_centered_indicators(b) for b in sample.blocks()]
    exact = [n * _mobius_from_centered(Cs, mask_blocks(m)) for m in masks]

    def stats(index):
        cs = Cs if index is None else [C[np.ix_(ix, ix)] for C, ix in zip(Cs, index)]
        return np.array([_mobius_from_centered(cs, mask_blocks(m), exact=False)
                         for m in masks])

    return subset_test(stats, exact, n, d, reps, seed, method="mobius-cvm", alpha=None,
                       scheme="permute-blocks-independently", threads=threads)
