"""Multivariate Gaussian targets with tempered, mixed and t modified conditionals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtri, stdtrit

from .errors import ConfigurationError, EvaluationError
from .sampler import TargetModel

_LOG_2PI = math.log(2.0 * math.pi)


def _normal_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


@dataclass(frozen=True)
class ModifiedConditionalSpec:
    """How to flatten a normal full conditional N(m, s^2).

    kind:
        ``tempered``  g = N(m, s^2 / beta), the normalised beta-power of f.
        ``mixed``     g = f/(1+epsilon) + epsilon/(1+epsilon) * tempered;
                      guarantees f/g <= 1 + epsilon.
        ``student_t`` location-scale t with shape nu, centred at the
                      conditional mean with the conditional standard deviation
                      as scale (unbounded f/g ratio).
    """

    kind: str = "mixed"
    beta: float = 1.0
    epsilon: float = 1.0
    nu: float = 0.2

    def __post_init__(self):
        if self.kind not in ("tempered", "mixed", "student_t"):
            raise ConfigurationError(f"unknown modified-conditional kind {self.kind!r}")
        if self.kind in ("tempered", "mixed") and not 0.0 < self.beta <= 1.0:
            raise ConfigurationError(f"beta must lie in (0, 1], got {self.beta}")
        if self.kind == "mixed" and self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.kind == "student_t" and self.nu <= 0.0:
            raise ConfigurationError(f"nu must be positive, got {self.nu}")


class _TemperedNormal:
    def __init__(self, mean, var, beta):
        self.mean, self.var = mean, var / beta

    def logpdf(self, x):
        return _normal_logpdf(x, self.mean, self.var)

    def sample(self, rng):
        return self.mean + math.sqrt(self.var) * ndtri(rng.random())


class _MixedNormal:
    def __init__(self, mean, var, beta, epsilon):
        self.mean, self.var, self.tempered_var = mean, var, var / beta
        self.epsilon = epsilon

    def logpdf(self, x):
        base = _normal_logpdf(x, self.mean, self.var)
        flat = _normal_logpdf(x, self.mean, self.tempered_var)
        return np.logaddexp(base, math.log(self.epsilon) + flat) - math.log1p(self.epsilon)

    def sample(self, rng):
        take_flat = rng.random() < self.epsilon / (1.0 + self.epsilon)
        var = self.tempered_var if take_flat else self.var
        return self.mean + math.sqrt(var) * ndtri(rng.random())


class _LocationScaleT:
    def __init__(self, mean, var, nu):
        self.mean, self.scale, self.nu = mean, math.sqrt(var), nu

    def logpdf(self, x):
        nu = self.nu
        z = (x - self.mean) / self.scale
        return (gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0)
                - 0.5 * math.log(nu * math.pi) - math.log(self.scale)
                - (nu + 1.0) / 2.0 * np.log1p(z * z / nu))

    def sample(self, rng):
        return self.mean + self.scale * stdtrit(self.nu, rng.random())


def modified_conditional(spec: ModifiedConditionalSpec, mean: float, variance: float):
    """Normalised univariate modified conditional for the given moments."""
    if not variance > 0.0:
        raise EvaluationError(f"conditional variance must be positive, got {variance}")
    if spec.kind == "tempered":
        return _TemperedNormal(mean, variance, spec.beta)
    if spec.kind == "mixed":
        return _MixedNormal(mean, variance, spec.beta, spec.epsilon)
    return _LocationScaleT(mean, variance, spec.nu)


class GaussianTarget(TargetModel):
    """Multivariate normal target; conditionals come from the precision matrix.

    The modified conditionals share the exact conditional moments, flattened
    according to ``modified``.  Coordinate draws use inverse-CDF sampling so
    that each update consumes a fixed number of uniforms (one for tempered and
    t draws, two for mixture draws).
    """

    def __init__(self, mean, cov, modified: ModifiedConditionalSpec | None = None):
        mean = np.asarray(mean, dtype=float)
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ConfigurationError("covariance shape does not match the mean")
        asym = np.abs(cov - cov.T).max()
        if asym > 1e-12:
            raise ConfigurationError(f"covariance asymmetry {asym:.2e} exceeds 1e-12")
        eigvals = np.linalg.eigvalsh(cov)
        if eigvals[0] <= 0.0:
            raise ConfigurationError(f"covariance not positive definite (min eig {eigvals[0]:.3e})")
        self.mean = mean
        self.cov = cov
        self.d = mean.size
        self.precision = np.linalg.inv(cov)
        self._prec_diag = np.diag(self.precision).copy()
        self._chol = np.linalg.cholesky(cov)
        self.modified = ModifiedConditionalSpec() if modified is None else modified

    # -- conditional moments -------------------------------------------------
    def conditional_moments(self, i: int, x: np.ndarray):
        """Mean and variance of x_i given the other coordinates."""
        x = np.asarray(x, dtype=float)
        if not np.isfinite(x).all():
            raise EvaluationError("state contains non-finite coordinates")
        delta = x - self.mean
        lam_i = self._prec_diag[i]
        cross = float(self.precision[i] @ delta) - lam_i * delta[i]
        return float(self.mean[i] - cross / lam_i), float(1.0 / lam_i)

    def all_conditional_moments(self, x: np.ndarray):
        delta = np.asarray(x, dtype=float) - self.mean
        full = self.precision @ delta
        variances = 1.0 / self._prec_diag
        means = self.mean - (full - self._prec_diag * delta) * variances
        return means, variances

    # -- TargetModel interface -----------------------------------------------
    def conditional_logpdf(self, i, x):
        m, v = self.conditional_moments(i, x)
        return float(_normal_logpdf(x[i], m, v))

    def conditional_sample(self, i, x, rng):
        m, v = self.conditional_moments(i, x)
        return m + math.sqrt(v) * ndtri(rng.random())

    def modified_logpdf(self, i, x):
        m, v = self.conditional_moments(i, x)
        return float(modified_conditional(self.modified, m, v).logpdf(x[i]))

    def modified_sample(self, i, x, rng):
        m, v = self.conditional_moments(i, x)
        return modified_conditional(self.modified, m, v).sample(rng)

    def log_selection_ratios(self, x):
        means, variances = self.all_conditional_moments(x)
        z2 = (np.asarray(x, dtype=float) - means) ** 2 / variances
        spec = self.modified
        if spec.kind == "tempered":
            return 0.5 * math.log(spec.beta) + 0.5 * (1.0 - spec.beta) * z2
        if spec.kind == "mixed":
            log_r = 0.5 * math.log(spec.beta) + 0.5 * (1.0 - spec.beta) * z2
            return np.logaddexp(0.0, math.log(spec.epsilon) + log_r) - math.log1p(spec.epsilon)
        scales = np.sqrt(variances)
        z = (x - means) / scales
        nu = spec.nu
        log_t = (gammaln((nu + 1.0) / 2.0) - gammaln(nu / 2.0)
                 - 0.5 * math.log(nu * math.pi) - np.log(scales)
                 - (nu + 1.0) / 2.0 * np.log1p(z * z / nu))
        log_f = _normal_logpdf(np.asarray(x, dtype=float), means, variances)
        return log_t - log_f

    def exact_sample(self, rng):
        u = rng.random(self.d)
        return self.mean + self._chol @ ndtri(u)

    def initial_state(self, rng):
        return self.exact_sample(rng)


def scenario_covariance(kind: str, d: int, rho: float) -> np.ndarray:
    """Unit-diagonal covariance for the three correlation layouts.

    ``pairwise`` couples coordinates (2i-1, 2i) at rho; ``positive_exchangeable``
    sets every off-diagonal to rho; ``negative_exchangeable`` to -rho/(d-1).
    """
    if not 0.0 <= rho < 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1), got {rho}")
    if kind == "pairwise":
        if d % 2:
            raise ConfigurationError("pairwise layout needs an even dimension")
        cov = np.eye(d)
        for i in range(0, d, 2):
            cov[i, i + 1] = cov[i + 1, i] = rho
    elif kind == "positive_exchangeable":
        cov = np.full((d, d), rho)
        np.fill_diagonal(cov, 1.0)
    elif kind == "negative_exchangeable":
        cov = np.full((d, d), -rho / (d - 1))
        np.fill_diagonal(cov, 1.0)
    else:
        raise ConfigurationError(f"unknown covariance scenario {kind!r}")
    smallest = np.linalg.eigvalsh(cov)[0]
    if smallest <= 0.0:
        raise ConfigurationError(f"requested covariance is not positive definite "
                                 f"(smallest eigenvalue {smallest:.3e})")
    return cov


def export_covariance_csv(cov: np.ndarray, path) -> None:
    np.savetxt(path, cov, delimiter=",", fmt="%.17g")
