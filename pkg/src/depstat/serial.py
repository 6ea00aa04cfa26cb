"""
Serial dependence: distance autocovariance, portmanteau and lag-window
Möbius tests, AR(1) fitting and residual-based tests.

Lag ``l`` pairs the overlapping observations ``(Z_t, Z_{t+l})``,
``t = 1 .. n-l``, so the statistic is a ``V_m^2`` with ``m = n - l``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .data import DataMatrix
from .dcov import (MobiusResult, _center_fast, check_alpha, dcov_stat, kernel,
                   mobius_dcov_from_kernels, pairwise_distances, subset_masks,
                   subset_test, _subset_sums)
from .resampling import RNG_ALGORITHM, add_one_pvalue, run_replicates

BURN_IN = 100


def as_series(series) -> np.ndarray:
    """Validate a time-ordered ``(n,)`` or ``(n, p)`` series; returns ``(n, p)``."""
    values = series.values if isinstance(series, DataMatrix) else DataMatrix(series).values
    if values.shape[0] < 3:
        raise ValueError(f"a series needs at least 3 observations, got {values.shape[0]}")
    return values


def _check_lag(l: int, n: int) -> None:
    if not 1 <= l <= n - 2:
        raise ValueError(f"lag must lie in [1, {n - 2}] for a series of length {n}, got {l}")


def lag_dcov(series, lag: int, alpha: float = 1.0) -> float:
    """Distance autocovariance ``V_m^2(Z_t, Z_{t+lag})`` with ``m = n - lag``."""
    z = as_series(series)
    n = z.shape[0]
    _check_lag(lag, n)
    return dcov_stat(kernel(z[:n - lag], alpha), kernel(z[lag:], alpha))


def _spectrum_fast(D: np.ndarray, order: np.ndarray, max_lag: int) -> np.ndarray:
    """Lag statistics and portmanteau sum for the series reordered by ``order``."""
    n = order.shape[0]
    out = np.empty(max_lag + 1)
    total = 0.0
    for l in range(1, max_lag + 1):
        m = n - l
        a, b = order[:m], order[l:]
        v = float((_center_fast(D[np.ix_(a, a)]) * _center_fast(D[np.ix_(b, b)])).sum())
        v = max(v / (m * m), 0.0)
        out[l - 1] = v
        total += m * v
    out[max_lag] = total
    return out


@dataclass
class LagSpectrum:
    """Distance autocovariances for lags ``1..max_lag`` with p-values."""

    method: str
    max_lag: int
    values: np.ndarray
    p_values: np.ndarray | None
    portmanteau: float
    portmanteau_p_value: float | None
    reps: int
    seed: int
    n: int
    alpha: float
    scheme: str
    rng: str = RNG_ALGORITHM
    fit: "ARFit | None" = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "lags": [
                {"lag": l + 1, "statistic": float(v),
                 "p_value": None if self.p_values is None else float(self.p_values[l])}
                for l, v in enumerate(self.values)
            ],
            "portmanteau": {"statistic": self.portmanteau,
                            "p_value": self.portmanteau_p_value},
            "reps": self.reps, "seed": self.seed, "n": self.n, "alpha": self.alpha,
            "scheme": self.scheme, "rng": self.rng,
        }
        if self.fit is not None:
            out["ar1"] = {"mu": [float(v) for v in self.fit.mu], "phi": self.fit.phi}
        return out


def _exact_spectrum(z: np.ndarray, max_lag: int, alpha: float) -> tuple[np.ndarray, float]:
    n = z.shape[0]
    values = np.array([lag_dcov(z, l, alpha) for l in range(1, max_lag + 1)])
    total = float(sum((n - l) * v for l, v in enumerate(values, start=1)))
    return values, total


def _build_spectrum(method, z, max_lag, alpha, reps, seed, scheme, draw, threads,
                    fit=None) -> LagSpectrum:
    n = z.shape[0]
    values, total = _exact_spectrum(z, max_lag, alpha)
    D = pairwise_distances(z, alpha)
    observed = _spectrum_fast(D, np.arange(n), max_lag)
    replicates = run_replicates(draw, reps, seed, threads)
    p = add_one_pvalue(observed, replicates) if reps else None
    return LagSpectrum(method, max_lag, values,
                       None if p is None else np.asarray(p[:max_lag]),
                       total, None if p is None else float(p[max_lag]),
                       reps, seed, n, alpha, scheme, fit=fit)


def acov_spectrum(series, max_lag: int, alpha: float = 1.0, reps: int = 999, seed: int = 0,
                  *, threads: int | None = None) -> LagSpectrum:
    """
    Distance autocovariance spectrum with a white-noise portmanteau test.

    The portmanteau statistic is ``S = sum_{l=1}^{L} (n - l) V^2(l)``.  All
    p-values come from the same random permutations of the time index,
    which is exact under an iid null.
    """
    alpha = check_alpha(alpha)
    z = as_series(series)
    n = z.shape[0]
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    _check_lag(max_lag, n)
    D = pairwise_distances(z, alpha)
    return _build_spectrum("portmanteau-dcov", z, max_lag, alpha, reps, seed,
                           "permute-time-index",
                           lambda rng: _spectrum_fast(D, rng.permutation(n), max_lag),
                           threads)


def lag_windows(z: np.ndarray, m: int) -> list[np.ndarray]:
    """Block ``k`` holds ``Z_{t+k}`` for the windows ``t = 1 .. n-m+1``."""
    rows = z.shape[0] - m + 1
    return [z[k:k + rows] for k in range(m)]


def lag_embed_mobius(series, m: int, alpha: float = 1.0, reps: int = 999, seed: int = 0,
                     *, threads: int | None = None) -> MobiusResult:
    """
    Möbius distance-covariance test on sliding windows ``(Z_t, ..., Z_{t+m-1})``.

    The ``m`` window positions are the blocks.  Replicates permute the time
    index of the whole series and rebuild the windows.
    """
    alpha = check_alpha(alpha)
    z = as_series(series)
    n = z.shape[0]
    if not 2 <= m <= 6:
        raise ValueError(f"window must lie in [2, 6], got {m}")
    rows = n - m + 1
    if rows < 10:
        raise ValueError(f"window {m} leaves {rows} rows; need at least 10")
    masks = subset_masks(m)
    kernels = [kernel(b, alpha, k) for k, b in enumerate(lag_windows(z, m))]
    exact = [mobius_dcov_from_kernels(kernels, mask) for mask in masks]
    D = pairwise_distances(z, alpha)

    def stats(index):
        if index is None:
            index = [np.arange(k, k + rows) for k in range(m)]
        return _subset_sums([_center_fast(D[np.ix_(ix, ix)]) for ix in index], masks)

    def draw(rng):
        order = rng.permutation(n)
        return [order[k:k + rows] for k in range(m)]

    return subset_test(stats, exact, rows, m, reps, seed, method="lag-embed-mobius-dcov",
                       alpha=alpha, scheme="permute-time-index", threads=threads,
                       index_draw=draw)


@dataclass(frozen=True)
class ARFit:
    """Conditional least-squares fit of ``Z_t = mu + phi (Z_{t-1} - mu) + e_t``."""

    mu: np.ndarray
    phi: float
    residuals: np.ndarray

    def simulate(self, n: int, rng: np.random.Generator, burn_in: int = BURN_IN) -> np.ndarray:
        """
        Series of length ``n`` driven by resampled centered residuals.

        The recursion starts at ``mu`` and the first ``burn_in`` steps are
        discarded.
        """
        if not abs(self.phi) < 1.0:
            raise ValueError(f"cannot simulate a nonstationary AR(1) with phi={self.phi}")
        e = self.residuals - self.residuals.mean(axis=0)
        draws = e[rng.integers(0, e.shape[0], size=burn_in + n)]
        dev = lfilter([1.0], [1.0, -self.phi], draws, axis=0)
        return dev[burn_in:] + self.mu


def fit_ar1(series, mu_known=None) -> ARFit:
    """
    Fit a scalar-coefficient AR(1) by conditional least squares.

    ``mu`` is the sample mean unless ``mu_known`` is given; ``phi`` is
    ``sum <Z_t - mu, Z_{t-1} - mu> / sum |Z_{t-1} - mu|^2``.  Multivariate
    series share one ``phi`` with a per-coordinate ``mu``.

    Examples
    --------
    >>> fit = fit_ar1([1.0, 0.5, 0.25, 0.125], mu_known=0.0)
    >>> fit.phi, fit.residuals.ravel().tolist()
    (0.5, [0.0, 0.0, 0.0])
    """
    z = as_series(series)
    if mu_known is None:
        mu = z.mean(axis=0)
    else:
        mu = np.broadcast_to(np.asarray(mu_known, dtype=np.float64), (z.shape[1],)).copy()
    dev = z - mu
    prev, cur = dev[:-1], dev[1:]
    denom = float(np.sum(prev * prev))
    if denom == 0.0:
        raise ValueError("AR(1) fit undefined: lagged series has zero variation")
    phi = float(np.sum(cur * prev)) / denom
    return ARFit(mu, phi, cur - phi * prev)


def residual_serial_test(series, max_lag: int, alpha: float = 1.0, reps: int = 999,
                         seed: int = 0, *, method: str = "bootstrap", mu_known=None,
                         burn_in: int = BURN_IN, threads: int | None = None) -> LagSpectrum:
    """
    Distance autocovariance spectrum of AR(1) residuals.

    Parameters
    ----------
    method : {"bootstrap", "permutation"}
        ``"bootstrap"`` simulates the fitted AR(1) from resampled centered
        residuals, refits, and recomputes the residual spectrum.
        ``"permutation"`` treats the residuals as iid and permutes them; it
        ignores the estimation effect and is kept as a baseline.
    """
    alpha = check_alpha(alpha)
    z = as_series(series)
    n = z.shape[0]
    fit = fit_ar1(z, mu_known)
    res = fit.residuals
    if max_lag < 1:
        raise ValueError(f"max_lag must be >= 1, got {max_lag}")
    _check_lag(max_lag, res.shape[0])

    if method == "bootstrap":
        if reps and not abs(fit.phi) < 1.0:
            raise ValueError(f"fitted phi={fit.phi} is not stationary; bootstrap unavailable")

        def draw(rng):
            sim = fit.simulate(n, rng, burn_in)
            r = fit_ar1(sim, mu_known).residuals
            return _spectrum_fast(pairwise_distances(r, alpha), np.arange(r.shape[0]), max_lag)
        scheme = "parametric-bootstrap-ar1"
    elif method == "permutation":
        D = pairwise_distances(res, alpha)
        m = res.shape[0]

        def draw(rng):
            return _spectrum_fast(D, rng.permutation(m), max_lag)
        scheme = "permute-time-index"
    else:
        raise ValueError(f"unknown method {method!r}")

    return _build_spectrum(f"residual-ar1-{method}", res, max_lag, alpha, reps, seed,
                           scheme, draw, threads, fit=fit)
