"""
Monte Carlo studies: null calibration, power tables and the AR(1)
residual miscalibration study.

Run ``i`` of a study draws its data and its test seed from
``make_stream(seed, i)``, so every table is reproducible from the scenario
and seed alone and does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats
from scipy.signal import lfilter

from .cvm import cvm_test, mobius_cvm_all_subsets
from .data import BlockSample, as_block_sample
from .dcov import dcov_test, mobius_all_subsets
from .resampling import add_one_pvalue, make_stream, run_replicates
from .serial import BURN_IN, acov_spectrum, residual_serial_test

MODELS = ("independent", "gaussian-rho", "quadratic", "circular", "ar1")
SERIAL_MODELS = ("ar1",)


def generate(model: str, n: int, rng: np.random.Generator, *, rho: float = 0.0,
             sigma: float = 0.0, phi: float = 0.0, d: int = 2,
             transform: str | None = None):
    """
    Draw one sample of size ``n`` from a named dependence model.

    Returns a :class:`BlockSample` of univariate blocks, or an ``(n, 1)``
    series array for ``"ar1"``.

    Models
    ------
    independent
        ``d`` independent standard normal blocks.
    gaussian-rho
        Bivariate normal with correlation ``rho``.
    quadratic
        ``Y = X^2 + sigma * eps`` with ``X, eps`` standard normal.
    circular
        ``(cos T, sin T)`` plus ``sigma``-scaled normal noise, ``T`` uniform.
    ar1
        ``Z_t = phi Z_{t-1} + e_t`` with standard normal ``e_t`` after a
        burn-in.

    ``transform="cube"`` applies ``x -> x^3`` to every coordinate.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not abs(rho) < 1.0:
        raise ValueError(f"need |rho| < 1, got {rho}")
    if sigma < 0.0:
        raise ValueError(f"need sigma >= 0, got {sigma}")
    if not abs(phi) < 1.0:
        raise ValueError(f"need |phi| < 1, got {phi}")
    if transform not in (None, "cube"):
        raise ValueError(f"unknown transform {transform!r}")

    if model == "independent":
        if not 2 <= d <= 16:
            raise ValueError(f"d must be in [2, 16], got {d}")
        cols = rng.standard_normal((n, d))
    elif model == "gaussian-rho":
        x = rng.standard_normal(n)
        y = rho * x + math.sqrt(1.0 - rho * rho) * rng.standard_normal(n)
        cols = np.column_stack([x, y])
    elif model == "quadratic":
        x = rng.standard_normal(n)
        cols = np.column_stack([x, x * x + sigma * rng.standard_normal(n)])
    elif model == "circular":
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        noise = sigma * rng.standard_normal((n, 2))
        cols = np.column_stack([np.cos(theta), np.sin(theta)]) + noise
    elif model == "ar1":
        e = rng.standard_normal(n + BURN_IN)
        cols = lfilter([1.0], [1.0, -phi], e)[BURN_IN:, None]
    else:
        raise ValueError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")

    if transform == "cube":
        cols = cols ** 3
    if model == "ar1":
        return cols
    return as_block_sample([cols[:, k] for k in range(cols.shape[1])])


def pearson_test(x, y, reps: int, seed: int) -> float:
    """Permutation p-value of ``|corr(x, y)|`` (baseline for comparisons)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    xs = (x - x.mean()) / x.std()
    ys = (y - y.mean()) / y.std()
    observed = abs(float(np.dot(xs, ys)))
    reps_ = run_replicates(lambda rng: abs(float(np.dot(xs, ys[rng.permutation(x.size)]))),
                           reps, seed, 1)
    return add_one_pvalue(observed, reps_)


def _two_blocks(sample) -> tuple[np.ndarray, np.ndarray]:
    if not isinstance(sample, BlockSample):
        raise ValueError("this test needs a block sample, not a series")
    if sample.d != 2:
        raise ValueError(f"two-block test applied to {sample.d} blocks")
    return sample.block(0), sample.block(1)


def _series(sample) -> np.ndarray:
    if isinstance(sample, BlockSample):
        raise ValueError("portmanteau test needs a series model such as ar1")
    return sample


# name -> f(sample, reps, seed, alpha, max_lag) -> p-value
TESTS: dict[str, Callable] = {
    "dcov": lambda s, reps, seed, alpha, L: dcov_test(
        *_two_blocks(s), alpha, reps, seed, threads=1).p_value,
    "rank-dcov": lambda s, reps, seed, alpha, L: dcov_test(
        *_two_blocks(s), alpha, reps, seed, rank=True, threads=1).p_value,
    "cvm": lambda s, reps, seed, alpha, L: cvm_test(
        *_two_blocks(s), reps, seed, threads=1).p_value,
    "mobius": lambda s, reps, seed, alpha, L: mobius_all_subsets(
        s, alpha, reps, seed, threads=1).combined_p_value,
    "mobius-cvm": lambda s, reps, seed, alpha, L: mobius_cvm_all_subsets(
        s, reps, seed, threads=1).combined_p_value,
    "portmanteau": lambda s, reps, seed, alpha, L: acov_spectrum(
        _series(s), L, alpha, reps, seed, threads=1).portmanteau_p_value,
    "pearson": lambda s, reps, seed, alpha, L: pearson_test(*_two_blocks(s), reps, seed),
}


@dataclass
class ScenarioSpec:
    model: str
    n: int
    runs: int = 500
    level: float = 0.05
    tests: tuple[str, ...] = ("dcov",)
    seed: int = 0
    rho: float = 0.0
    sigma: float = 0.0
    phi: float = 0.0
    d: int = 2
    transform: str | None = None
    reps: int = 499
    alpha: float = 1.0
    max_lag: int = 3

    def __post_init__(self):
        self.tests = tuple(self.tests)
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        unknown = [t for t in self.tests if t not in TESTS]
        if unknown:
            raise ValueError(f"unknown test(s) {unknown}; choose from {sorted(TESTS)}")
        if not abs(self.rho) < 1.0 or self.sigma < 0.0 or not abs(self.phi) < 1.0:
            raise ValueError("model parameter out of range")

    def is_null(self) -> bool:
        return (self.model == "independent"
                or (self.model == "gaussian-rho" and self.rho == 0.0)
                or (self.model == "ar1" and self.phi == 0.0))

    def label(self) -> str:
        params = {"gaussian-rho": f"rho={self.rho:g}", "quadratic": f"sigma={self.sigma:g}",
                  "circular": f"sigma={self.sigma:g}", "ar1": f"phi={self.phi:g}",
                  "independent": f"d={self.d}"}[self.model]
        label = f"{self.model}({params})"
        return label + ("+cube" if self.transform else "")


def simulate_pvalues(spec: ScenarioSpec, threads: int | None = None) -> np.ndarray:
    """``(runs, len(tests))`` matrix of p-values for a scenario."""

    def one_run(rng):
        sample = generate(spec.model, spec.n, rng, rho=spec.rho, sigma=spec.sigma,
                          phi=spec.phi, d=spec.d, transform=spec.transform)
        test_seed = int(rng.integers(0, 2 ** 63 - 1))
        return [TESTS[t](sample, spec.reps, test_seed, spec.alpha, spec.max_lag)
                for t in spec.tests]

    return run_replicates(one_run, spec.runs, spec.seed, threads).reshape(spec.runs, -1)


@dataclass
class PowerRow:
    test: str
    model: str
    n: int
    rate: float
    se: float
    runs: int
    level: float
    reps: int
    seed: int


@dataclass
class PowerTable:
    rows: list[PowerRow] = field(default_factory=list)

    def rate(self, test: str, model: str, n: int) -> PowerRow:
        for row in self.rows:
            if (row.test, row.model, row.n) == (test, model, n):
                return row
        raise KeyError((test, model, n))

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]

    def write_csv(self, path) -> None:
        names = list(PowerRow.__dataclass_fields__)
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            for rec in self.to_records():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in rec.items()})

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_records(), indent=2) + "\n")


def rejection_row(test: str, spec: ScenarioSpec, pvalues: np.ndarray) -> PowerRow:
    rate = float(np.mean(pvalues <= spec.level))
    se = math.sqrt(rate * (1.0 - rate) / spec.runs)
    return PowerRow(test, spec.label(), spec.n, rate, se, spec.runs, spec.level,
                    spec.reps, spec.seed)


def binomial_band(runs: int, level: float, coverage: float = 0.99) -> tuple[float, float]:
    """Central ``coverage`` interval of ``Binomial(runs, level) / runs``."""
    tail = (1.0 - coverage) / 2.0
    lo = stats.binom.ppf(tail, runs, level)
    hi = stats.binom.isf(tail, runs, level)
    return float(lo) / runs, float(hi) / runs


def ks_uniform(pvalues) -> tuple[float, float]:
    """KS distance of p-values from Uniform(0, 1) and its p-value."""
    res = stats.kstest(np.asarray(pvalues, dtype=np.float64), "uniform")
    return float(res.statistic), float(res.pvalue)


def calibrate(spec: ScenarioSpec, threads: int | None = None) -> dict:
    """
    Null rejection rates with exact binomial 99% bands and KS diagnostics.

    Raises ``ValueError`` for a model with dependence.
    """
    if not spec.is_null():
        raise ValueError(f"{spec.label()} is not a null model")
    pvalues = simulate_pvalues(spec, threads)
    lo, hi = binomial_band(spec.runs, spec.level)
    table, diagnostics = PowerTable(), []
    for j, test in enumerate(spec.tests):
        row = rejection_row(test, spec, pvalues[:, j])
        table.rows.append(row)
        ks, ks_p = ks_uniform(pvalues[:, j])
        diagnostics.append({"test": test, "rate": row.rate, "se": row.se,
                            "band": [lo, hi], "within_band": lo <= row.rate <= hi,
                            "ks_distance": ks, "ks_p_value": ks_p})
    return {"scenario": spec.label(), "n": spec.n, "runs": spec.runs, "level": spec.level,
            "reps": spec.reps, "seed": spec.seed, "table": table,
            "diagnostics": diagnostics, "pvalues": pvalues}


def power_curve(scenarios, threads: int | None = None) -> PowerTable:
    """Rejection rates over every (test, scenario) cell."""
    table = PowerTable()
    for spec in scenarios:
        pvalues = simulate_pvalues(spec, threads)
        for j, test in enumerate(spec.tests):
            table.rows.append(rejection_row(test, spec, pvalues[:, j]))
    return table


def residual_miscalibration_study(phi: float, n: int, runs: int, seed: int, *,
                                  reps: int = 499, lag: int = 1, alpha: float = 1.0,
                                  ks_level: float = 0.05,
                                  threads: int | None = None) -> dict:
    """
    Compare naive permutation and AR(1) bootstrap p-values for residual
    distance autocovariance.

    Each run simulates an AR(1) series with coefficient ``phi``, fits it, and
    computes the lag-``lag`` residual p-value both ways.  With at least two
    runs the KS distances of both p-value samples from uniform are compared
    against the ``ks_level`` critical value.
    """
    if not abs(phi) < 1.0:
        raise ValueError(f"need |phi| < 1, got {phi}")
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")

    def one_run(rng):
        z = generate("ar1", n, rng, phi=phi)
        test_seed = int(rng.integers(0, 2 ** 63 - 1))
        out = []
        for method in ("permutation", "bootstrap"):
            spec = residual_serial_test(z, lag, alpha, reps, test_seed, method=method,
                                        threads=1)
            out.append(spec.p_values[lag - 1])
        return out

    pv = run_replicates(one_run, runs, seed, threads).reshape(runs, 2)
    report = {"phi": phi, "n": n, "runs": runs, "reps": reps, "lag": lag, "alpha": alpha,
              "seed": seed, "ks_level": ks_level,
              "permutation_pvalues": pv[:, 0].tolist(),
              "bootstrap_pvalues": pv[:, 1].tolist()}
    if runs < 2:
        report.update(insufficient_runs=True, ks_critical=None,
                      permutation_ks=None, bootstrap_ks=None,
                      permutation_calibrated=None, bootstrap_calibrated=None)
        return report
    crit = float(stats.kstwo.ppf(1.0 - ks_level, runs))
    perm_ks, _ = ks_uniform(pv[:, 0])
    boot_ks, _ = ks_uniform(pv[:, 1])
    report.update(insufficient_runs=False, ks_critical=crit,
                  permutation_ks=perm_ks, bootstrap_ks=boot_ks,
                  permutation_calibrated=perm_ks < crit, bootstrap_calibrated=boot_ks < crit,
                  permutation_rejection_rate=float(np.mean(pv[:, 0] <= 0.05)),
                  bootstrap_rejection_rate=float(np.mean(pv[:, 1] <= 0.05)))
    return report
