"""Statistics of transforms applied to the least-squares estimate, and error metrics.

With ``x_est = (F^T F)^+ F^T y`` the estimation error has covariance
``alpha^-1 (F^T F)^+``, so any linear transform ``A`` applied to it has
per-component variance ``alpha^-1 diag(A (F^T F)^+ A^T)``. The functions here
evaluate those closed forms and the Monte-Carlo counterparts used to check them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward_models import LinearForwardModel, Measurement, dft_matrix

PINV_RTOL = 1e-10
LOG_FLOOR = 1e-16


def _matrix(obj) -> np.ndarray:
    return np.asarray(getattr(obj, "matrix", obj))


def gram_pinv(model: LinearForwardModel) -> np.ndarray:
    """Moore-Penrose inverse of ``Re(F^H F)``, singular values below 1e-10 * max dropped."""
    Fr = model.real_stacked()
    return np.linalg.pinv(Fr.T @ Fr, rtol=PINV_RTOL, hermitian=True)


def ls_estimate(m: Measurement) -> np.ndarray:
    return gram_pinv(m.model) @ np.real(m.model.adjoint(m.y))


def _quadratic_diag(A, G, B) -> np.ndarray:
    return np.einsum("ij,jk,ik->i", A, G, B)


def estimator_variance(transform, model: LinearForwardModel, alpha: float) -> np.ndarray:
    A = _matrix(transform)
    return _quadratic_diag(A, gram_pinv(model), A) / alpha


def estimator_cross_covariance(T, S, model: LinearForwardModel, alpha: float) -> np.ndarray:
    return _quadratic_diag(_matrix(T), gram_pinv(model), _matrix(S)) / alpha


@dataclass(frozen=True)
class EstimatorStats:
    mean: np.ndarray  # residual transform applied to the truth
    var_local: np.ndarray
    var_global: np.ndarray
    var_residual: np.ndarray
    cov_cross: np.ndarray


def stats_to_csv(stats: EstimatorStats, path) -> None:
    from .io import write_csv

    cols = [stats.mean, stats.var_local, stats.var_global, stats.var_residual, stats.cov_cross]
    write_csv(path, ["index", "mean", "var_local", "var_global", "var_residual", "cov_cross"], [np.arange(cols[0].size), *cols])


def estimator_stats(T, S, model: LinearForwardModel, alpha: float, truth=None) -> EstimatorStats:
    T, S = _matrix(T), _matrix(S)
    G = gram_pinv(model)
    var_t = _quadratic_diag(T, G, T) / alpha
    var_s = _quadratic_diag(S, G, S) / alpha
    cov = _quadratic_diag(T, G, S) / alpha
    var_r = var_t + var_s - 2 * cov
    mean = (T - S) @ truth if truth is not None else np.zeros(T.shape[0])
    return EstimatorStats(mean, var_t, var_s, var_r, cov)


def monte_carlo_stats(T, S, model: LinearForwardModel, alpha: float, truth, draws: int, seed: int) -> EstimatorStats:
    """Empirical counterpart of :func:`estimator_stats` from noisy least-squares fits."""
    T, S = _matrix(T), _matrix(S)
    truth = np.asarray(truth, dtype=float)
    x_est = _ls_draws(model, alpha, truth, draws, seed)
    tx, sx = x_est @ T.T, x_est @ S.T
    tc, sc = tx - tx.mean(axis=0), sx - sx.mean(axis=0)
    var_t = np.mean(tc**2, axis=0)
    var_s = np.mean(sc**2, axis=0)
    cov = np.mean(tc * sc, axis=0)
    rc = tc - sc
    return EstimatorStats((tx - sx).mean(axis=0), var_t, var_s, np.mean(rc**2, axis=0), cov)


def _ls_draws(model, alpha, truth, draws, seed):
    rng = np.random.default_rng(seed)
    F = model.matrix
    clean = F @ truth
    if np.iscomplexobj(F):
        noise = (rng.standard_normal((draws, F.shape[0])) + 1j * rng.standard_normal((draws, F.shape[0]))) / np.sqrt(
            2 * alpha
        )
    else:
        noise = rng.standard_normal((draws, F.shape[0])) / np.sqrt(alpha)
    Y = clean[None, :] + noise
    # rows: x_est = G Re(F^H y)
    return np.real(Y @ F.conj()) @ gram_pinv(model).T


@dataclass(frozen=True)
class UnbiasednessReport:
    passed: bool
    max_deviation: float
    bound: float
    draws: int


def unbiasedness_check(transform, model, truth, alpha, draws=10_000, seed=0, estimator=None) -> UnbiasednessReport:
    """Check that ``transform @ x_est`` averages to ``transform @ truth``.

    Passes when the largest deviation of the sample mean is within four
    standard errors. ``estimator`` may replace the least-squares map for
    negative controls; it receives the draws (one per row) and returns estimates.
    """
    if draws < 1000:
        raise ValueError("at least 1000 draws are needed")
    A = _matrix(transform)
    truth = np.asarray(truth, dtype=float)
    if np.isinf(alpha):
        x_est = np.tile(gram_pinv(model) @ np.real(model.matrix.conj().T @ (model.matrix @ truth)), (draws, 1))
    else:
        x_est = _ls_draws(model, alpha, truth, draws, seed)
    if estimator is not None:
        x_est = estimator(x_est)
    vals = x_est @ A.T
    dev = np.abs(vals.mean(axis=0) - A @ truth)
    se = vals.std(axis=0, ddof=1) / np.sqrt(draws)
    max_dev = float(dev.max())
    bound = float(4 * se.max())
    return UnbiasednessReport(max_dev <= bound + 1e-12 * max(1.0, np.abs(A @ truth).max()), max_dev, bound, draws)


def concentration_matrix_fourier(n: int, p: int, zeta: float) -> np.ndarray:
    """The concentration-factor transform rebuilt from its Fourier-sum definition.

    Sums ``pi i sgn(k) sigma(|k| ds/pi) sinc(|k| ds/2) f_hat_k exp(i k s)`` over
    k = -n/2..n/2 at ``s = s_j + zeta*ds``, with the two Nyquist terms halved
    and ``f_hat_{n/2} = f_hat_{-n/2}``. Independent of the cosine-sum route.
    """
    from math import comb

    q0 = comb(2 * p, p)
    ds = 2 * np.pi / n
    F = dft_matrix(n)  # rows k = -n/2..n/2-1
    F_ext = np.vstack([F, F[:1]])  # append k = +n/2
    k = np.arange(-n // 2, n // 2 + 1)
    eta = np.abs(k) * ds / np.pi
    sigma = 2 ** (2 * p) * eta * np.sin(np.pi * eta / 2) ** (2 * p) / q0
    sinc = np.sinc(np.abs(k) * ds / 2 / np.pi)  # numpy sinc is sin(pi x)/(pi x)
    weight = np.where(np.abs(k) == n // 2, 0.5, 1.0)
    coef = np.pi * 1j * np.sign(k) * sigma * sinc * weight
    s = -np.pi + (np.arange(n) + zeta) * ds
    phase = np.exp(1j * np.outer(s, k))
    return np.real((phase * coef) @ F_ext)


def fourier_variance_global(n: int, p: int, zeta: float, model: LinearForwardModel, alpha: float) -> np.ndarray:
    """Variance of the concentration-factor estimate via the Fourier-domain quadratic form."""
    A = concentration_matrix_fourier(n, p, zeta)
    return _quadratic_diag(A, gram_pinv(model), A) / alpha


@dataclass(frozen=True)
class ErrorReport:
    pointwise: np.ndarray
    mean_abs: float
    log10_pointwise: np.ndarray


def report_to_csv(report: ErrorReport, path) -> None:
    from .io import write_csv

    idx = np.arange(report.pointwise.size)
    write_csv(path, ["index", "abs_err", "log10_abs_err"], [idx, report.pointwise, report.log10_pointwise])


def error_report(x, truth) -> ErrorReport:
    x = np.asarray(getattr(x, "values", x), dtype=float)
    truth = np.asarray(getattr(truth, "values", truth), dtype=float)
    if x.shape != truth.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {truth.shape}")
    err = np.abs(x - truth)
    return ErrorReport(err, float(err.mean()), np.log10(np.maximum(err, LOG_FLOOR)))
