"""
Monte Carlo permutation and bootstrap engine.

Every replicate ``r`` draws from its own generator, derived from
``(seed, r)`` alone, so p-values do not depend on the order in which
replicates run or on how many worker threads execute them.
"""

from __future__ import annotations

import os
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

RNG_ALGORITHM = "numpy.PCG64 via SeedSequence(seed, spawn_key=(replicate,))"

SCHEMES = (
    "permute-second-block",
    "permute-blocks-independently",
    "permute-time-index",
    "parametric-bootstrap-ar1",
)

THREADS_ENV = "DEPSTAT_THREADS"


def make_stream(seed: int, replicate: int) -> np.random.Generator:
    """Independent generator for replicate ``replicate`` of a run seeded by ``seed``."""
    if seed < 0 or replicate < 0:
        raise ValueError("seed and replicate index must be nonnegative")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.PCG64(ss))


def fresh_seed() -> int:
    """A 63-bit seed from system entropy."""
    return secrets.randbits(63)


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


@dataclass(frozen=True)
class ResamplingPlan:
    scheme: str
    reps: int
    seed: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown resampling scheme {self.scheme!r}")
        if self.reps < 0:
            raise ValueError(f"reps must be >= 0, got {self.reps}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass
class TestResult:
    """Outcome of a resampling test.

    ``p_value`` is ``None`` when no replicates were drawn.
    """

    __test__ = False  # keep pytest from collecting this class

    method: str
    statistic: float
    p_value: float | None
    reps: int
    seed: int
    n: int
    alpha: float | None = None
    scheme: str | None = None
    rng: str = RNG_ALGORITHM
    replicates: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": float(self.statistic),
            "p_value": None if self.p_value is None else float(self.p_value),
            "reps": self.reps,
            "seed": self.seed,
            "n": self.n,
            "alpha": self.alpha,
            "scheme": self.scheme,
            "rng": self.rng,
        }


def add_one_pvalue(observed, replicates) -> np.ndarray | float | None:
    """
    ``(1 + #{replicate >= observed}) / (reps + 1)``, column-wise.

    ``replicates`` has shape ``(reps,)`` or ``(reps, k)`` for ``k`` statistics
    sharing the same draws.  Returns ``None`` when ``reps == 0``.
    """
    replicates = np.asarray(replicates, dtype=np.float64)
    reps = replicates.shape[0]
    if reps == 0:
        return None
    observed = np.asarray(observed, dtype=np.float64)
    p = (1.0 + np.sum(replicates >= observed, axis=0)) / (reps + 1.0)
    return float(p) if p.ndim == 0 else p


def run_replicates(draw: Callable[[np.random.Generator], object], reps: int, seed: int,
                   threads: int | None = None) -> np.ndarray:
    """
    Evaluate ``draw(make_stream(seed, r))`` for ``r = 0 .. reps-1``.

    Results are stacked in replicate order whatever the thread count.
    ``draw`` may return a scalar or a 1-d array of fixed length.
    """
    if reps < 0:
        raise ValueError(f"reps must be >= 0, got {reps}")
    if reps == 0:
        return np.empty((0,))
    threads = default_threads() if threads is None else max(1, int(threads))

    def one(r):
        return np.asarray(draw(make_stream(seed, r)), dtype=np.float64)

    if threads == 1 or reps < 2:
        out = [one(r) for r in range(reps)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, range(reps), chunksize=max(1, reps // (4 * threads))))
    return np.stack(out)


def draw_indices(scheme: str, n: int, d: int, rng: np.random.Generator):
    """
    Row index arrays for one permutation replicate.

    Returns a list with one index array per block for the block schemes,
    and a single permutation of ``range(n)`` for ``permute-time-index``.
    """
    if scheme == "permute-second-block":
        if d != 2:
            raise ValueError("permute-second-block needs exactly 2 blocks")
        return [np.arange(n), rng.permutation(n)]
    if scheme == "permute-blocks-independently":
        return [np.arange(n)] + [rng.permutation(n) for _ in range(d - 1)]
    if scheme == "permute-time-index":
        return rng.permutation(n)
    raise ValueError(f"scheme {scheme!r} does not draw permutations")


def permutation_pvalue(evaluator: Callable, data, plan: ResamplingPlan, *, n: int, d: int = 2,
                       method: str = "", alpha: float | None = None,
                       threads: int | None = None, keep_replicates: bool = False,
                       simulate: Callable | None = None) -> TestResult:
    """
    Monte Carlo p-value of a scalar statistic.

    Parameters
    ----------
    evaluator : callable
        ``evaluator(data, index)`` returns the statistic.  ``index`` is
        ``None`` for the observed value and otherwise the output of
        :func:`draw_indices` for ``plan.scheme``.
    data
        Whatever ``evaluator`` consumes; passed through unchanged.
    plan : ResamplingPlan
    n, d : int
        Number of rows and blocks the permutations act on.
    simulate : callable, optional
        Required for ``parametric-bootstrap-ar1``: ``simulate(rng)`` returns
        a fresh dataset, evaluated as ``evaluator(dataset, None)``.
    """
    observed = float(evaluator(data, None))
    if plan.scheme == "parametric-bootstrap-ar1":
        if simulate is None:
            raise ValueError("parametric bootstrap needs a simulate callable")

        def draw(rng):
            return evaluator(simulate(rng), None)
    else:
        def draw(rng):
            return evaluator(data, draw_indices(plan.scheme, n, d, rng))

    reps = run_replicates(draw, plan.reps, plan.seed, threads)
    return TestResult(
        method=method, statistic=observed, p_value=add_one_pvalue(observed, reps),
        reps=plan.reps, seed=plan.seed, n=n, alpha=alpha, scheme=plan.scheme,
        replicates=reps if keep_replicates else None)


def fisher_combined_pvalue(observed, replicates) -> tuple[np.ndarray | None, float | None]:
    """
    Per-statistic and Fisher-combined Monte Carlo p-values.

    The observed vector and the ``reps`` replicate vectors form an
    exchangeable pool under the null.  Each pool member gets per-statistic
    p-values against the whole pool, those are combined with
    ``-2 * sum(log p)``, and the observed combination is ranked among the
    replicate combinations with the add-one rule.
    """
    replicates = np.asarray(replicates, dtype=np.float64)
    if replicates.shape[0] == 0:
        return None, None
    observed = np.asarray(observed, dtype=np.float64)
    pool = np.vstack([observed[None, :], replicates.reshape(replicates.shape[0], -1)])
    size = pool.shape[0]
    # p[k, a] = #{c : pool[c, a] >= pool[k, a]} / size, via sorted counts
    p = np.empty_like(pool)
    for a in range(pool.shape[1]):
        col = pool[:, a]
        srt = np.sort(col)
        p[:, a] = (size - np.searchsorted(srt, col, side="left")) / size
    w = -2.0 * np.sum(np.log(p), axis=1)
    combined = float(np.sum(w >= w[0]) / size)
    return p[0], combined
