"""
Distance covariance, distance correlation and Möbius multi-block statistics.

Each block contributes a centered kernel ``K = -(D - row mean - column mean
+ grand mean)`` built from its pairwise distances raised to ``alpha``.
With the product weight over blocks, the squared norm of the Möbius-centered
empirical characteristic-function process for a block subset ``A`` reduces
to ``(1/n) sum_ij prod_{k in A} K^(k)_ij``; for two blocks that is ``n``
times the usual ``V_n^2``.

Public statistics use correctly rounded summation (:func:`math.fsum`), so
they are exactly invariant under simultaneous row permutations.  The
resampling loops use plain numpy sums, which are deterministic but not
order-independent; observed and replicate values inside a test always come
from the same path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import BlockSample, as_block_sample
from .resampling import (ResamplingPlan, TestResult, fisher_combined_pvalue,
                         permutation_pvalue, run_replicates, draw_indices, RNG_ALGORITHM)


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"exponent alpha must lie in (0, 2), got {alpha}")
    return alpha


def pairwise_distances(z, alpha: float = 1.0) -> np.ndarray:
    """
    Euclidean distances between rows raised to ``alpha``.

    Parameters
    ----------
    z : array_like, shape (n,) or (n, p)
    alpha : float in (0, 2)

    Returns
    -------
    (n, n) ndarray
        Symmetric, nonnegative, zero diagonal.

    Examples
    --------
    >>> pairwise_distances([0.0, 1.0, 2.0])
    array([[0., 1., 2.],
           [1., 0., 1.],
           [2., 1., 0.]])
    """
    alpha = check_alpha(alpha)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input to pairwise_distances")
    if z.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    d = squareform(pdist(z, "euclidean"))
    if alpha != 1.0:
        d = d ** alpha
    return d


def _fsum_rows(a: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(row) for row in a.tolist()])


def _fsum_all(a: np.ndarray) -> float:
    return math.fsum(a.ravel().tolist())


@dataclass(frozen=True)
class CenteredKernel:
    """Negated double-centered distance matrix of one block."""

    K: np.ndarray
    alpha: float | None = None
    block: int | None = None

    @property
    def n(self) -> int:
        return self.K.shape[0]


def double_center(D, alpha: float | None = None, block: int | None = None) -> CenteredKernel:
    """
    Negated double centering ``K_ij = -(D_ij - r_i - r_j + g)``.

    ``r`` holds the row means (equal to column means for symmetric ``D``)
    and ``g`` the grand mean, all correctly rounded.  The ``r_i + r_j``
    grouping keeps ``K`` exactly symmetric.

    Examples
    --------
    >>> K = double_center(pairwise_distances([0.0, 1.0, 2.0])).K
    >>> np.round(K * 9, 12)
    array([[10., -2., -8.],
           [-2.,  4., -2.],
           [-8., -2., 10.]])
    """
    D = np.asarray(D, dtype=np.float64)
    n = D.shape[0]
    r = _fsum_rows(D) / n
    g = _fsum_all(D) / (n * n)
    K = -(D - (r[:, None] + r[None, :]) + g)
    K.setflags(write=False)
    return CenteredKernel(K, alpha, block)


def kernel(z, alpha: float = 1.0, block: int | None = None) -> CenteredKernel:
    return double_center(pairwise_distances(z, alpha), alpha, block)


def _center_fast(D: np.ndarray) -> np.ndarray:
    r = D.mean(axis=1)
    return -(D - (r[:, None] + r[None, :]) + r.mean())


def _as_K(k) -> np.ndarray:
    return k.K if isinstance(k, CenteredKernel) else np.asarray(k, dtype=np.float64)


def dcov_stat(Kx, Ky) -> float:
    """
    Squared empirical distance covariance ``V_n^2 = (1/n^2) sum_ij Kx_ij Ky_ij``.

    Fp noise below zero is clamped to 0.
    """
    a, b = _as_K(Kx), _as_K(Ky)
    if a.shape != b.shape:
        raise ValueError(f"kernel shapes differ: {a.shape} vs {b.shape}")
    n = a.shape[0]
    return max(_fsum_all(a * b) / (n * n), 0.0)


def dcor(Kx, Ky) -> float:
    """Distance correlation; 0 when either block has zero distance variance."""
    vxy = dcov_stat(Kx, Ky)
    vxx = dcov_stat(Kx, Kx)
    vyy = dcov_stat(Ky, Ky)
    if vxx <= 0.0 or vyy <= 0.0:
        return 0.0
    return min(max(vxy / math.sqrt(vxx * vyy), 0.0), 1.0)


def subset_masks(d: int) -> list[int]:
    """Bitmasks of all block subsets of size >= 2, by size then lexicographically."""
    if not 2 <= d <= 16:
        raise ValueError(f"number of blocks must be in [2, 16], got {d}")
    out = []
    for size in range(2, d + 1):
        for combo in combinations(range(d), size):
            out.append(sum(1 << k for k in combo))
    return out


def mask_blocks(mask: int) -> tuple[int, ...]:
    return tuple(k for k in range(mask.bit_length()) if mask >> k & 1)


def _normalize_subset(subset, d: int) -> tuple[int, ...]:
    if isinstance(subset, (int, np.integer)):
        blocks = mask_blocks(int(subset))
    else:
        blocks = tuple(sorted(int(k) for k in subset))
    if len(set(blocks)) != len(blocks):
        raise ValueError("subset lists a block twice")
    if len(blocks) < 2:
        raise ValueError("subset must contain at least two blocks")
    for k in blocks:
        if not 0 <= k < d:
            raise ValueError(f"unknown block index {k} (have {d} blocks)")
    return blocks


def _kernels_of(sample, alpha: float) -> list[CenteredKernel]:
    if not isinstance(sample, BlockSample):
        sample = as_block_sample(sample)
    return [kernel(b, alpha, k) for k, b in enumerate(sample.blocks())]


def mobius_dcov_from_kernels(kernels, subset) -> float:
    Ks = [_as_K(k) for k in kernels]
    blocks = _normalize_subset(subset, len(Ks))
    prod = Ks[blocks[0]].copy()
    for k in blocks[1:]:
        prod *= Ks[k]
    n = prod.shape[0]
    return max(_fsum_all(prod) / n, 0.0)


def mobius_dcov(sample, subset, alpha: float = 1.0) -> float:
    """
    Möbius distance-covariance statistic ``V_{n,A}`` of a block subset.

    Parameters
    ----------
    sample : BlockSample or sequence of block arrays
    subset : iterable of 0-based block indices, or a bitmask
    alpha : float in (0, 2)

    Notes
    -----
    For ``|A| = 2`` this is ``n * dcov_stat``.  It is a squared norm, hence
    nonnegative for every subset size.
    """
    alpha = check_alpha(alpha)
    return mobius_dcov_from_kernels(_kernels_of(sample, alpha), subset)


def _subset_sums(Ks: list[np.ndarray], masks: list[int]) -> np.ndarray:
    """``sum_ij prod_{k in A} K_ij / n`` for every mask, sharing partial products."""
    n = Ks[0].shape[0]
    wanted = set(masks)
    values: dict[int, float] = {}
    d = len(Ks)

    def walk(start, mask, prod):
        for k in range(start, d):
            nxt = prod * Ks[k]
            m = mask | (1 << k)
            if m in wanted:
                values[m] = float(nxt.sum()) / n
            if k + 1 < d:
                walk(k + 1, m, nxt)

    for k in range(d - 1):
        walk(k + 1, 1 << k, Ks[k])
    return np.array([values[m] for m in masks])


@dataclass
class SubsetStatistic:
    subset: int
    blocks: tuple[int, ...]
    value: float
    p_value: float | None

    def to_dict(self) -> dict:
        return {"subset": list(self.blocks), "mask": self.subset,
                "value": self.value, "p_value": self.p_value}


@dataclass
class MobiusResult:
    method: str
    subsets: list[SubsetStatistic]
    combined_statistic: float | None
    combined_p_value: float | None
    reps: int
    seed: int
    n: int
    alpha: float | None
    scheme: str
    rng: str = RNG_ALGORITHM

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "subsets": [s.to_dict() for s in self.subsets],
            "combined": {"rule": "fisher", "statistic": self.combined_statistic,
                         "p_value": self.combined_p_value},
            "reps": self.reps, "seed": self.seed, "n": self.n,
            "alpha": self.alpha, "scheme": self.scheme, "rng": self.rng,
        }


def subset_test(fast_stats, exact_stats, n: int, d: int, reps: int, seed: int, *,
                method: str, alpha: float | None, scheme: str,
                threads: int | None = None, index_draw=None) -> MobiusResult:
    """
    Shared driver for subset-statistic tests with a Fisher combination.

    ``fast_stats(index)`` returns the vector of subset statistics for one
    resampled index (``None`` = observed); ``exact_stats`` is the reported
    observed vector.
    """
    masks = subset_masks(d)
    observed = np.asarray(fast_stats(None))
    if index_draw is None:
        def index_draw(rng):
            return draw_indices(scheme, n, d, rng)
    replicates = run_replicates(lambda rng: fast_stats(index_draw(rng)), reps, seed, threads)
    per, combined_p = fisher_combined_pvalue(observed, replicates)
    subsets = [SubsetStatistic(m, mask_blocks(m), float(v),
                               None if per is None else float(per[i]))
               for i, (m, v) in enumerate(zip(masks, exact_stats))]
    combined_stat = None
    if per is not None:
        combined_stat = float(-2.0 * np.sum(np.log(per)))
    return MobiusResult(method, subsets, combined_stat, combined_p, reps, seed, n,
                        alpha, scheme)


def mobius_all_subsets(sample, alpha: float = 1.0, reps: int = 999, seed: int = 0, *,
                       rank: bool = False, threads: int | None = None) -> MobiusResult:
    """
    ``V_{n,A}`` for all ``2^d - d - 1`` subsets with permutation p-values.

    Blocks ``2..d`` are permuted independently.  The combined p-value ranks
    Fisher's ``-2 sum log p_A`` of the observed sample among the same
    combination computed for each replicate.
    """
    alpha = check_alpha(alpha)
    if not isinstance(sample, BlockSample):
        sample = as_block_sample(sample)
    if rank:
        sample = sample.ranked()
    d, n = sample.d, sample.n
    masks = subset_masks(d)
    blocks = sample.blocks()
    exact = [mobius_dcov_from_kernels(_kernels_of(sample, alpha), m) for m in masks]
    Ks = [_center_fast(pairwise_distances(b, alpha)) for b in blocks]

    def stats(index):
        if index is None:
            return _subset_sums(Ks, masks)
        return _subset_sums([K[np.ix_(ix, ix)] for K, ix in zip(Ks, index)], masks)

    return subset_test(stats, exact, n, d, reps, seed,
                       method="mobius-rank-dcov" if rank else "mobius-dcov", alpha=alpha,
                       scheme="permute-blocks-independently", threads=threads)


def dcov_test(x, y, alpha: float = 1.0, reps: int = 999, seed: int = 0, *,
              rank: bool = False, threads: int | None = None,
              keep_replicates: bool = False) -> TestResult:
    """
    Permutation test of independence based on ``V_n^2``.

    With ``rank=True`` both samples are first replaced by normalized ranks.
    The reported statistic is ``V_n^2``; the test uses the rows of ``y``
    permuted against fixed ``x``.
    """
    alpha = check_alpha(alpha)
    sample = as_block_sample([x, y])
    if rank:
        sample = sample.ranked()
    x, y = sample.blocks()
    n = sample.n
    Kx = _center_fast(pairwise_distances(x, alpha))
    Ky = _center_fast(pairwise_distances(y, alpha))

    def evaluator(_, index):
        if index is None:
            return float((Kx * Ky).sum())
        p = index[1]
        return float((Kx * Ky[np.ix_(p, p)]).sum())

    plan = ResamplingPlan("permute-second-block", reps, seed)
    res = permutation_pvalue(evaluator, None, plan, n=n, d=2,
                             method="rank-dcov" if rank else "dcov", alpha=alpha,
                             threads=threads, keep_replicates=keep_replicates)
    res.statistic = dcov_stat(kernel(x, alpha), kernel(y, alpha))
    if res.replicates is not None:
        res.replicates = res.replicates / (n * n)
    return res
