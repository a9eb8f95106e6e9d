"""Estimator-quality and spectral analysis for enumerable chains.

Exact quantities (asymptotic variances, spectral gaps, relaxation times) are
computed by linear algebra on explicit kernels, never by simulation, so the
theory checks carry no Monte Carlo noise.  Replicate-based estimation is
provided for targets that cannot be enumerated.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .discrete import (BinaryTarget, DiscreteModifiedSpec, EtaSpec, KernelMatrix,
                       build_kernel, enumerate_distribution)
from .errors import ConfigurationError, EvaluationError

SYMMETRY_TOL = 1e-10


def _symmetrised(matrix: np.ndarray, law: np.ndarray, generator: bool) -> np.ndarray:
    """Similarity transform D^{1/2} K D^{-1/2}; errors if K is not reversible."""
    root = np.sqrt(law)
    sym = matrix * root[:, None] / root[None, :]
    scale = max(1.0, np.abs(sym).max())
    residual = np.abs(sym - sym.T).max() / scale
    if residual > SYMMETRY_TOL:
        kind = "generator" if generator else "kernel"
        raise EvaluationError(f"{kind} is not reversible: symmetrised residual "
                              f"{residual:.3e} exceeds {SYMMETRY_TOL:.0e}")
    return 0.5 * (sym + sym.T)


def spectral_gap_discrete(P: np.ndarray, law: np.ndarray) -> float:
    """1 - lambda_2 of a reversible stochastic matrix (not the absolute gap)."""
    eig = np.linalg.eigvalsh(_symmetrised(P, law, generator=False))
    return float(1.0 - eig[-2])


def spectral_gap_generator(Q: np.ndarray, law: np.ndarray) -> float:
    """Smallest nonzero eigenvalue of -Q for a reversible generator."""
    eig = np.linalg.eigvalsh(_symmetrised(-Q, law, generator=True))
    scale = max(1.0, np.abs(eig).max())
    if abs(eig[0]) > 1e-8 * scale:
        raise EvaluationError(f"generator has no zero eigenvalue (found {eig[0]:.3e})")
    return float(eig[1])


@dataclass(frozen=True)
class RelaxationTimes:
    """Inverse spectral gaps of the three kernels on one enumerable target."""

    t_gs: float
    t_tgs: float
    t_wtgs: float | None
    gap_source: str = "discrete_eigen+continuous_eigen"

    def as_dict(self):
        return {"t_gs": self.t_gs, "t_tgs": self.t_tgs, "t_wtgs": self.t_wtgs}


def relaxation_times(target: BinaryTarget,
                     g_spec: DiscreteModifiedSpec | None = None,
                     eta_spec: EtaSpec | None = None,
                     gs_metropolised: bool = True) -> RelaxationTimes:
    """Exact relaxation times: discrete gap for the Gibbs kernel, generator
    gaps (jump matrix Z(x) P(x, y)) for the tempered kernels."""
    if target.p > 10:
        raise ConfigurationError("relaxation times need p <= 10 for eigendecomposition")
    gs = build_kernel(target, "gs", gs_metropolised=gs_metropolised)
    t_gs = 1.0 / spectral_gap_discrete(gs.matrix, gs.chain_law)
    tgs = build_kernel(target, "tgs", g_spec=g_spec)
    t_tgs = 1.0 / spectral_gap_generator(tgs.jump, tgs.target_law)
    t_wtgs = None
    if eta_spec is not None or target.eta_spec is not None:
        wtgs = build_kernel(target, "wtgs", g_spec=g_spec, eta_spec=eta_spec)
        t_wtgs = 1.0 / spectral_gap_generator(wtgs.jump, wtgs.target_law)
    return RelaxationTimes(t_gs, t_tgs, t_wtgs)


# -- exact asymptotic variances -------------------------------------------------

def asymptotic_variance(P: np.ndarray, law: np.ndarray, values: np.ndarray) -> float:
    """Time-average asymptotic variance of ``values`` along the chain P.

    Solves the Poisson equation through the fundamental matrix
    (I - P + 1 law')^{-1}; returns  2 <u, v>_law - var_law(u)  for the centred
    u, which equals the sum of all lagged autocovariances.
    """
    u = values - float(law @ values)
    fundamental = np.eye(len(law)) - P + np.outer(np.ones(len(law)), law)
    v = np.linalg.solve(fundamental, u)
    return float(2.0 * law @ (u * v) - law @ (u * u))


def var_weighted_chain(kernel: KernelMatrix, h_values: np.ndarray) -> float:
    """Exact asymptotic variance of the self-normalised weighted estimator.

    The delta method reduces the ratio estimator to the time average of
    w(x) (h(x) - E_f h) under the reweighted chain.
    """
    if kernel.z is None:
        raise ConfigurationError("kernel carries no weight normaliser")
    mean_h = float(kernel.target_law @ h_values)
    u = (h_values - mean_h) / kernel.z
    return asymptotic_variance(kernel.matrix, kernel.chain_law, u)


def var_gibbs_chain(kernel: KernelMatrix, h_values: np.ndarray) -> float:
    """Exact asymptotic variance of the plain ergodic average under a GS kernel."""
    return asymptotic_variance(kernel.matrix, kernel.chain_law, np.asarray(h_values, float))


def var_self_normalised_iid(kernel: KernelMatrix, h_values: np.ndarray) -> float:
    """E_f[(h - E_f h)^2 w]: the variance an iid sampler from the reweighted
    law would achieve with the same importance weights."""
    mean_h = float(kernel.target_law @ h_values)
    return float(kernel.target_law @ ((h_values - mean_h) ** 2 / kernel.z))


def weight_variance_exact(kernel: KernelMatrix) -> float:
    """Var(W) = E_f[w] - 1 for W = w(X), X from the reweighted law."""
    return float(kernel.target_law @ (1.0 / kernel.z)) - 1.0


# -- replicate-based estimation -------------------------------------------------

@dataclass
class EfficiencyReport:
    """Across-replicate variances and timings of one algorithm's estimators."""

    variances: np.ndarray
    cpu_time: float
    mean_estimates: np.ndarray
    n_replicates: int
    labels: list | None = None
    extra: dict = field(default_factory=dict)


def replicate_estimates(run, n_replicates: int, seed: int | None = None):
    """Run ``run(seed_t)`` for spawned seeds; stack the estimate vectors.

    ``run`` returns a vector of estimates; wall and CPU time are recorded per
    replicate.  Any replicate failure aborts with its seed in the message.
    """
    if n_replicates < 2:
        raise ConfigurationError("need at least 2 replicates for a variance")
    seeds = np.random.SeedSequence(seed).spawn(n_replicates)
    estimates = []
    cpu_times = []
    for seq in seeds:
        child_seed = int(seq.generate_state(1)[0])
        start = time.process_time()
        try:
            est = np.asarray(run(child_seed), dtype=float)
        except Exception as exc:
            raise EvaluationError(f"replicate with seed {child_seed} failed: {exc}") from exc
        cpu_times.append(time.process_time() - start)
        estimates.append(est)
    return np.vstack(estimates), np.asarray(cpu_times)


def replicate_variance(run, n_replicates: int, seed: int | None = None,
                       labels=None) -> EfficiencyReport:
    """Unbiased across-replicate variance of each estimate, with median CPU time."""
    estimates, cpu_times = replicate_estimates(run, n_replicates, seed)
    return EfficiencyReport(variances=estimates.var(axis=0, ddof=1),
                            cpu_time=float(np.median(cpu_times)),
                            mean_estimates=estimates.mean(axis=0),
                            n_replicates=n_replicates, labels=labels)


@dataclass
class RelativeEfficiency:
    """Per-function efficiency of a candidate over a baseline algorithm.

    ``ratios[i] = (var_base * T_base) / (var_cand * T_cand)``; entries where
    either variance vanishes (typically the baseline never moved the
    variable) are censored: no finite ratio exists and the summaries skip
    them.
    """

    ratios: np.ndarray
    censored: np.ndarray
    median: float
    high_pip_mean: float | None
    high_pip_indices: np.ndarray
    n_censored: int


def relative_efficiency(baseline: EfficiencyReport, candidate: EfficiencyReport,
                        pip_threshold: float = 0.05) -> RelativeEfficiency:
    if baseline.variances.shape != candidate.variances.shape:
        raise ConfigurationError("reports cover different estimator sets")
    vb, vc = baseline.variances, candidate.variances
    censored = (vb <= 0.0) | (vc <= 0.0)
    ratios = np.full(vb.shape, np.nan)
    ok = ~censored
    ratios[ok] = (vb[ok] * baseline.cpu_time) / (vc[ok] * candidate.cpu_time)
    finite = ratios[ok]
    median = float(np.median(finite)) if finite.size else math.nan
    high = (np.maximum(baseline.mean_estimates, candidate.mean_estimates)
            > pip_threshold)
    sel = high & ok
    high_mean = float(ratios[sel].mean()) if sel.any() else None
    return RelativeEfficiency(ratios=ratios, censored=censored, median=median,
                              high_pip_mean=high_mean,
                              high_pip_indices=np.flatnonzero(high),
                              n_censored=int(censored.sum()))


def batch_means_variance(values: np.ndarray, weights: np.ndarray | None = None,
                         n_batches: int = 30) -> float:
    """Single-chain batch-means estimate of the asymptotic variance (convenience
    only; the replicate route is the quoted estimator)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2 * n_batches:
        raise ConfigurationError("trace too short for the requested batches")
    if weights is None:
        weights = np.ones(n)
    size = n // n_batches
    means = np.empty(n_batches)
    for b in range(n_batches):
        sl = slice(b * size, (b + 1) * size)
        means[b] = np.sum(weights[sl] * values[sl]) / np.sum(weights[sl])
    return float(size * means.var(ddof=1))


# -- accept/reject marginal kernel on a grid -------------------------------------

@dataclass
class GridKernel:
    """Discretised accept/reject kernel on a one-dimensional grid."""

    grid: np.ndarray
    matrix: np.ndarray
    stationary: np.ndarray

    def spectral_gap(self) -> float:
        return spectral_gap_discrete(self.matrix, self.stationary)

    def detailed_balance_residual(self) -> float:
        flux = self.stationary[:, None] * self.matrix
        return float(np.abs(flux - flux.T).max())


def barker_z_kernel(log_marginal_pdf, log_proposal_pdf, grid: np.ndarray) -> GridKernel:
    """Accept/reject kernel with the Barker rule on a discretised marginal.

    ``log_proposal_pdf(z_from, z_to)`` is vectorised over ``z_to``.  Off the
    diagonal ``P(z'|z) = q(z'|z) pi(z') q(z|z') / (pi(z) q(z'|z) + pi(z') q(z|z'))``
    with the rejection mass on the diagonal; the discretised marginal is
    exactly stationary.
    """
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    log_pi = np.asarray(log_marginal_pdf(grid), dtype=float)
    log_pi = log_pi - logsumexp(log_pi)
    mass_outside = 1.0 - math.fsum(np.exp(
        np.asarray(log_marginal_pdf(grid), dtype=float)
    )) * (grid[1] - grid[0])
    if mass_outside > 1e-8:
        raise ConfigurationError(f"grid covers too little marginal mass "
                                 f"(missing about {mass_outside:.2e})")
    log_q = np.empty((m, m))
    for i in range(m):
        log_q[i] = log_proposal_pdf(grid[i], grid)
    if not np.isfinite(log_q).all():
        raise EvaluationError("proposal vanishes somewhere the marginal does not")
    log_q = log_q - logsumexp(log_q, axis=1, keepdims=True)
    fwd = log_pi[:, None] + log_q              # pi(z) q(z'|z)
    rev = fwd.T                                 # pi(z') q(z|z')
    accept = np.exp(rev - np.logaddexp(fwd, rev))
    P = np.exp(log_q) * accept
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, np.maximum(0.0, 1.0 - P.sum(axis=1)))
    return GridKernel(grid=grid, matrix=P, stationary=np.exp(log_pi))
