"""Bayesian de-quantization of quantized compressed measurements.

Model: ``z = phi @ x + e + n`` with ``x ~ N(0, gamma*P)``, measurement noise
``n ~ N(0, lam*I)`` and quantization error ``e`` uniform on the cell
``[-delta/2, delta/2]``.  ``recover`` runs a nested EM:

* inner E-step: Gaussian posterior of ``x`` given working measurements ``y``;
* inner M-step: ``P`` from the posterior second moment, regularized onto
  the DCT-II basis (an AR(1) surrogate) with unit diagonal, then ``gamma``;
* outer E-step: ``e_hat`` as the mean of the residual's truncated normal,
  and ``y = z - e_hat``.

All matrices are small (N around 128), so everything is dense numpy/LAPACK.
"""
from __future__ import annotations

import functools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from scipy.special import erf, erfcx

from .errors import IllConditionedError, InvalidConfigError, InvalidParameterError
from .sensing import SparseBinaryMatrix

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# fixed matrices


@functools.lru_cache(maxsize=16)
def _dct_cached(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    c[0] *= math.sqrt(1.0 / n)
    c[1:] *= math.sqrt(2.0 / n)
    c.setflags(write=False)
    return c


def dct_matrix(n):
    """Orthonormal DCT-II matrix; row ``k`` is the ``k``-th cosine basis vector."""
    if n < 1:
        raise InvalidParameterError(f"size must be positive, got {n}")
    return _dct_cached(int(n)).copy()


def _check_r(r, n):
    if not abs(r) < 1:
        raise InvalidParameterError(f"AR(1) coefficient must satisfy |r| < 1, got {r}")
    if n < 2:
        raise InvalidParameterError(f"size must be at least 2, got {n}")


def ar1_matrix(r, n):
    """Toeplitz correlation matrix with entries ``r**|i-j|``."""
    _check_r(r, n)
    idx = np.arange(n)
    return float(r) ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def ar1_inverse(r, n):
    """Closed-form tridiagonal inverse of ``ar1_matrix(r, n)``."""
    _check_r(r, n)
    inv = np.zeros((n, n))
    main = np.full(n, 1.0 + r * r)
    main[0] = main[-1] = 1.0
    inv[np.diag_indices(n)] = main
    off = np.arange(n - 1)
    inv[off, off + 1] = -r
    inv[off + 1, off] = -r
    return inv / (1.0 - r * r)


# ---------------------------------------------------------------------------
# inner E/M steps


def _dense(phi):
    if isinstance(phi, SparseBinaryMatrix):
        return phi.toarray()
    return np.asarray(phi, dtype=np.float64)


def _cho(mat):
    try:
        return sla.cho_factor(mat, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise IllConditionedError(f"measurement covariance is not positive definite: {exc}") from exc


def posterior_update(y, phi, gamma, P, lam):
    """Posterior mean and covariance of ``x`` given ``y``.

    Both come from the M x M system ``lam*I + gamma*phi P phi^T``, which
    avoids inverting ``P`` (often rank deficient).
    """
    phi = _dense(phi)
    y = np.asarray(y, dtype=np.float64)
    m, n = phi.shape
    if gamma < 0 or not lam > 0:
        raise InvalidParameterError(f"need gamma >= 0 and lam > 0, got {gamma}, {lam}")
    if gamma == 0:
        return np.zeros(n), np.zeros((n, n))
    gpt = gamma * (P @ phi.T)
    cov = lam * np.eye(m) + phi @ gpt
    cf = _cho(cov)
    mu = gpt @ sla.cho_solve(cf, y)
    sigma = gamma * P - gpt @ sla.cho_solve(cf, gpt.T)
    sigma = 0.5 * (sigma + sigma.T)
    return mu, sigma


def update_correlation(mu, sigma, gamma):
    """Unregularized correlation estimate ``(sigma + mu mu^T) / gamma``."""
    if not gamma > 0:
        raise InvalidParameterError(f"gamma must be positive, got {gamma}")
    p = (sigma + np.outer(mu, mu)) / gamma
    return 0.5 * (p + p.T)


@dataclass(frozen=True, eq=False)
class RegularizedCorrelation:
    """``p_bar = diag(1/v) C^T diag(d) C diag(1/v)`` with ``C`` the DCT-II basis.

    Keeps the factors so the inverse and traces against it never need a
    dense inversion.
    """

    p_bar: np.ndarray
    eigenvalues: np.ndarray
    scale: np.ndarray
    basis: np.ndarray

    def inverse(self):
        c, d, v = self.basis, self.eigenvalues, self.scale
        inner = (c.T / d) @ c
        return v[:, None] * inner * v[None, :]

    def trace_inverse_product(self, s):
        """``Tr[p_bar^{-1} s]`` from the factors."""
        cv = self.basis * self.scale[None, :]
        return float(np.sum((cv @ s) * cv, axis=1) @ (1.0 / self.eigenvalues))


def regularize_correlation(P, eigen_floor=1e-8):
    """Replace the eigenbasis of ``P`` with the DCT-II basis and renormalize.

    Eigenvalues are sorted in descending order and paired with DCT rows of
    increasing frequency.  Each one is floored at ``eigen_floor`` times the
    largest before the diagonal is normalized to ones.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[0]
    d = np.linalg.eigvalsh(0.5 * (P + P.T))[::-1]
    if not d[0] > 0:
        raise IllConditionedError("correlation estimate has no positive eigenvalue")
    d = np.maximum(d, eigen_floor * d[0])
    c = _dct_cached(n)
    p_tilde = (c.T * d) @ c
    diag = np.diag(p_tilde)
    if np.any(diag <= 0):
        raise IllConditionedError("regularized correlation has a non-positive diagonal")
    v = np.sqrt(diag)
    p_bar = p_tilde / np.outer(v, v)
    p_bar = 0.5 * (p_bar + p_bar.T)
    p_bar[np.diag_indices(n)] = 1.0
    return RegularizedCorrelation(p_bar, d, v, c)


def update_gamma(mu, sigma, p_bar_inverse):
    """``Tr[p_bar^{-1} (sigma + mu mu^T)] / N``.

    ``p_bar_inverse`` is either a ``RegularizedCorrelation`` (factorized
    route) or a dense inverse matrix.
    """
    s = sigma + np.outer(mu, mu)
    if isinstance(p_bar_inverse, RegularizedCorrelation):
        tr = p_bar_inverse.trace_inverse_product(s)
    else:
        tr = float(np.sum(np.asarray(p_bar_inverse) * s.T))
    return max(tr / len(mu), 0.0)


def update_lambda(y, phi, mu, sigma):
    """Noise variance ``(|y - phi mu|^2 + Tr(sigma phi^T phi)) / M``."""
    phi = _dense(phi)
    resid = np.asarray(y) - phi @ mu
    return float((resid @ resid + np.sum((phi @ sigma) * phi)) / phi.shape[0])


def negative_log_likelihood(y, phi, gamma, P, lam):
    """``log|C| + y^T C^{-1} y`` with ``C = lam*I + gamma*phi P phi^T``."""
    phi = _dense(phi)
    y = np.asarray(y, dtype=np.float64)
    cov = lam * np.eye(phi.shape[0]) + gamma * (phi @ P @ phi.T)
    cf = _cho(0.5 * (cov + cov.T))
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return float(logdet + y @ sla.cho_solve(cf, y))


def fit_gamma(y, phi, P, lam, gamma=1.0, iters=50):
    """EM on ``gamma`` alone with ``P`` held fixed.

    Returns the final ``gamma`` and the likelihood trace (one value per
    iterate, starting with the initial ``gamma``).
    """
    phi = _dense(phi)
    P = np.asarray(P, dtype=np.float64)
    pf = _cho(P)
    trace = [negative_log_likelihood(y, phi, gamma, P, lam)]
    for _ in range(iters):
        mu, sigma = posterior_update(y, phi, gamma, P, lam)
        s = sigma + np.outer(mu, mu)
        gamma = float(np.trace(sla.cho_solve(pf, s))) / len(mu)
        trace.append(negative_log_likelihood(y, phi, gamma, P, lam))
    return gamma, trace


# ---------------------------------------------------------------------------
# outer E-step


def truncated_normal_mean(lower, upper):
    """Mean of a standard normal restricted to ``[lower, upper]`` (elementwise).

    Bounds may be infinite.  Intervals are reflected so that ``lower + upper
    >= 0``; intervals away from zero use the scaled complementary error
    function, intervals straddling zero use a sum of ``erf`` terms.  The
    result is clipped to the interval.
    """
    a, b = np.broadcast_arrays(np.asarray(lower, dtype=np.float64),
                               np.asarray(upper, dtype=np.float64))
    with np.errstate(invalid="ignore"):
        flip = (a + b) < 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    out = np.zeros(lo.shape)
    with np.errstate(all="ignore"):
        # (hi - lo) * (hi + lo) / 2 is the log-ratio of the two densities
        spread = np.where(np.isinf(hi), np.inf, 0.5 * (hi - lo) * (hi + lo))
        one_minus_t = -np.expm1(-spread)

        tail = lo >= 0
        narrow = tail & (spread < 5e-7)
        wide = tail & ~narrow
        t = 1.0 - one_minus_t
        ex_hi = np.where(np.isinf(hi), 0.0, erfcx(hi / _SQRT2))
        den = 0.5 * (erfcx(lo / _SQRT2) - t * ex_hi)
        out = np.where(wide, _INV_SQRT_2PI * one_minus_t / den, out)

        # exponential tilt across a very narrow cell
        mid = 0.5 * (lo + hi)
        width = hi - lo
        out = np.where(narrow, mid - mid * width * width / 12.0, out)

        straddle = lo < 0
        mass = 0.5 * (erf(hi / _SQRT2) - erf(lo / _SQRT2))
        num = _INV_SQRT_2PI * np.exp(-0.5 * lo * lo) * one_minus_t
        out = np.where(straddle, num / mass, out)

        both_inf = np.isinf(lo) & np.isinf(hi)
        out = np.where(both_inf, 0.0, out)
        bad = ~np.isfinite(out)
        out = np.where(bad, np.where(np.isinf(lo), hi, lo), out)
        out = np.clip(out, lo, hi)
    return np.where(flip, -out, out)


def estimate_quantization_error(z, mu, phi, lam, delta, v_ref=None):
    """Conditional mean of the quantization error for every measurement.

    The residual ``z - phi @ mu`` is treated as ``N(., lam)`` and truncated
    to the cell ``[-delta/2, delta/2]``.  When ``v_ref`` is given, entries
    whose prediction lies beyond a rail are taken as saturated and their
    cell becomes one-sided: on the positive rail the error ``z - y`` is
    unbounded below, on the negative rail unbounded above.
    """
    if not lam > 0 or not delta > 0:
        raise InvalidParameterError(f"need lam > 0 and delta > 0, got {lam}, {delta}")
    z = np.asarray(z, dtype=np.float64)
    z_hat = _dense(phi) @ mu
    mu_e = z - z_hat
    s = math.sqrt(lam)
    lower = (-0.5 * delta - mu_e) / s
    upper = (0.5 * delta - mu_e) / s
    if v_ref is not None:
        lower = np.where(z_hat > v_ref, -np.inf, lower)
        upper = np.where(z_hat < -v_ref, np.inf, upper)
    return mu_e + s * truncated_normal_mean(lower, upper)


# ---------------------------------------------------------------------------
# full algorithm


@dataclass(frozen=True)
class BdqOptions:
    delta: float
    lam: float = 1e-3
    max_iter: int = 128
    tol: float = 1e-8
    eigen_floor: float = 1e-8
    saturation_aware: bool = True
    v_ref: float | None = None
    learn_lambda: bool = False
    gamma_init: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidConfigError(f"delta must be positive, got {self.delta}")
        if not self.lam > 0:
            raise InvalidConfigError(f"lam must be positive, got {self.lam}")
        if not self.tol > 0:
            raise InvalidConfigError(f"tol must be positive, got {self.tol}")
        if not 0 < self.eigen_floor < 1:
            raise InvalidConfigError(f"eigen_floor must be in (0, 1), got {self.eigen_floor}")
        if self.max_iter < 1:
            raise InvalidConfigError(f"max_iter must be at least 1, got {self.max_iter}")
        if not self.gamma_init > 0:
            raise InvalidConfigError(f"gamma_init must be positive, got {self.gamma_init}")
        if self.v_ref is not None and not self.v_ref > 0:
            raise InvalidConfigError(f"v_ref must be positive, got {self.v_ref}")


@dataclass
class Diagnostics:
    iterations: int = 0
    converged: bool = False
    nll: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    final_gamma: float = float("nan")
    final_lambda: float = float("nan")
    saturated: int = 0
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)


class RecoveryResult(NamedTuple):
    x_hat: np.ndarray
    e_hat: np.ndarray
    diagnostics: Diagnostics


def _run(z, phi, opts, aware):
    t0 = time.perf_counter()
    phi = _dense(phi)
    z = np.asarray(z, dtype=np.float64)
    m, n = phi.shape
    if z.shape != (m,):
        raise InvalidParameterError(f"expected {m} measurements, got shape {z.shape}")

    gamma, lam = float(opts.gamma_init), float(opts.lam)
    P = np.eye(n)
    y = z.copy()
    e_hat = np.zeros(m)
    mu_prev = np.zeros(n)
    mu = mu_prev
    v_ref = opts.v_ref if opts.saturation_aware else None
    diag = Diagnostics()

    for it in range(1, opts.max_iter + 1):
        mu, sigma = posterior_update(y, phi, gamma, P, lam)
        diag.nll.append(negative_log_likelihood(y, phi, gamma, P, lam))
        if opts.learn_lambda:
            lam = max(update_lambda(y, phi, mu, sigma), 1e-12)
        reg = regularize_correlation(update_correlation(mu, sigma, gamma), opts.eigen_floor)
        gamma = update_gamma(mu, sigma, reg)
        P = reg.p_bar
        diag.gamma.append(gamma)
        if aware:
            e_hat = estimate_quantization_error(z, mu, phi, lam, opts.delta, v_ref)
            y = z - e_hat

        change = np.linalg.norm(mu - mu_prev) / max(np.linalg.norm(mu_prev), 1e-12)
        mu_prev = mu
        diag.iterations = it
        if change < opts.tol or gamma <= 0:
            diag.converged = True
            break

    if aware and v_ref is not None:
        z_hat = phi @ mu
        diag.saturated = int(np.sum(np.abs(z_hat) > v_ref))
    diag.final_gamma = gamma
    diag.final_lambda = lam
    diag.wall_time = time.perf_counter() - t0
    return RecoveryResult(mu, e_hat, diag)


def recover(z, phi, opts):
    """Recover ``x`` from mid-point de-quantized measurements ``z``."""
    return _run(z, phi, opts, aware=True)


def recover_blind(z, phi, opts):
    """Same loop with the quantization-error step disabled (``e_hat = 0``)."""
    return _run(z, phi, opts, aware=False)
