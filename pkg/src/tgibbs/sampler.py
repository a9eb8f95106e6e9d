"""Componentwise samplers built around tempered coordinate selection.

The chain updates one coordinate per iteration.  A coordinate ``i`` is chosen
with probability proportional to

    p_i(x) = eta_i(x_-i) * g(x_i | x_-i) / f(x_i | x_-i),

the coordinate is refreshed by a Markov update that preserves the modified
conditional ``g``, and the new state receives the importance weight
``w(x) = Z(x)^{-1}`` with ``Z(x) = (1/d) sum_i p_i(x)`` (for ``eta == 1``; when
selection weights are supplied the sum is kept unnormalised and every
estimator self-normalises).  With ``g == f`` and ``eta == 1`` the scheme is the
plain random-scan Gibbs sampler with unit weights.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    AbsoluteContinuityError,
    CapabilityError,
    ConfigurationError,
    DegenerateSelectionError,
    EvaluationError,
)

KERNELS = ("gs", "tgs", "wtgs")


class TargetModel(abc.ABC):
    """A d-dimensional target together with its modified conditionals.

    Concrete targets expose the full conditionals ``f(x_i | x_-i)``, the
    modified conditionals ``g(x_i | x_-i)`` used for the tempered update, and
    optionally positive selection weights ``eta_i(x_-i)``.

    Coordinate draws must consume a fixed number of uniforms per call (one per
    inverse-CDF draw, plus one for a mixture-component or accept/reject
    choice) so that runs with coupled generators stay aligned under coordinate
    permutations and rescalings.
    """

    d: int
    has_eta: bool = False
    gs_metropolised: bool = False

    @abc.abstractmethod
    def conditional_logpdf(self, i: int, x: np.ndarray) -> float:
        """log f(x_i | x_-i) evaluated at the current value of x_i."""

    @abc.abstractmethod
    def conditional_sample(self, i: int, x: np.ndarray, rng: np.random.Generator):
        """Exact draw from f(. | x_-i)."""

    @abc.abstractmethod
    def modified_logpdf(self, i: int, x: np.ndarray) -> float:
        """log g(x_i | x_-i) evaluated at the current value of x_i."""

    @abc.abstractmethod
    def modified_sample(self, i: int, x: np.ndarray, rng: np.random.Generator):
        """Exact draw from g(. | x_-i)."""

    @abc.abstractmethod
    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        """Default starting state for a chain."""

    def modified_update(self, i: int, x: np.ndarray, rng: np.random.Generator):
        """Markov update of coordinate i preserving g(. | x_-i).

        Defaults to an exact draw; discrete targets override this with the
        Metropolised flip.
        """
        return self.modified_sample(i, x, rng)

    def conditional_update(self, i: int, x: np.ndarray, rng: np.random.Generator):
        """Markov update of coordinate i preserving f(. | x_-i)."""
        return self.conditional_sample(i, x, rng)

    def log_selection_ratios(self, x: np.ndarray) -> np.ndarray:
        """log[g(x_i|x_-i) / f(x_i|x_-i)] for every coordinate."""
        out = np.empty(self.d)
        for i in range(self.d):
            out[i] = self.modified_logpdf(i, x) - self.conditional_logpdf(i, x)
        return out

    def log_eta(self, x: np.ndarray) -> np.ndarray | None:
        """log eta_i(x_-i) for every coordinate, or None when eta is absent."""
        return None

    def inclusion_probabilities(self, x: np.ndarray) -> np.ndarray | None:
        """Per-coordinate conditional inclusion probabilities, when defined."""
        return None


@dataclass(frozen=True)
class WeightedSample:
    """One chain iteration: the new state, the flipped index, its weight."""

    state: np.ndarray
    index: int
    weight: float
    log_weight: float = 0.0


@dataclass
class WeightedTrace:
    """Post-burn-in output of a single chain.

    ``log_weights`` are stored in log space; for selection-weighted runs they
    are unnormalised (shifting them by a constant changes no estimator).
    ``rb_sums`` accumulates ``sum_t w_t * p(x_i active | rest)`` whenever the
    target reports conditional inclusion probabilities.
    """

    kernel: str
    burn_in: int
    log_weights: np.ndarray
    indices: np.ndarray
    states: np.ndarray | None = None
    rb_sums: np.ndarray | None = None
    rb_weight_sum: float = 0.0
    freq_sums: np.ndarray | None = None
    flip_counts: np.ndarray | None = None
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def normalised_weights(self) -> np.ndarray:
        """Weights rescaled to mean one (shift-invariant in log space)."""
        lw = self.log_weights
        log_mean = logsumexp(lw) - math.log(len(lw))
        return np.exp(lw - log_mean)

    def samples(self):
        """Iterate stored iterations as WeightedSample records."""
        if self.states is None:
            raise CapabilityError("trace was run with store_states=False")
        w = self.weights
        for t in range(len(self)):
            yield WeightedSample(self.states[t], int(self.indices[t]), float(w[t]),
                                 float(self.log_weights[t]))


def _validate_logs(values: np.ndarray, what: str) -> None:
    if np.isnan(values).any():
        i = int(np.flatnonzero(np.isnan(values))[0])
        raise EvaluationError(f"{what} is NaN at coordinate {i}")
    if np.isposinf(values).any():
        i = int(np.flatnonzero(np.isposinf(values))[0])
        raise EvaluationError(f"{what} is +inf at coordinate {i} (zero target conditional)")


def _log_sum_exp(values: np.ndarray) -> float:
    # scipy's logsumexp carries too much dispatch overhead for the step loop
    m = values.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + math.log(np.exp(values - m).sum()))


def _log_selection_state(x, target, weighted):
    """Return (log p_i vector, log Z) at the state x.

    For weighted selection the returned log Z is the unnormalised
    ``log sum_i p_i``; otherwise ``log mean_i p_i``.
    """
    log_ratios = target.log_selection_ratios(x)
    if not np.isfinite(log_ratios).all():
        _validate_logs(log_ratios, "selection log-ratio")
        i = int(np.flatnonzero(np.isneginf(log_ratios))[0])
        raise AbsoluteContinuityError(
            f"modified conditional vanishes where the target conditional does not "
            f"(coordinate {i})")
    if weighted:
        log_eta = target.log_eta(x)
        if log_eta is None:
            raise ConfigurationError("weighted selection requires the target to supply eta")
        log_eta = np.asarray(log_eta, dtype=float)
        if not np.isfinite(log_eta).all():
            if np.isneginf(log_eta).all():
                raise DegenerateSelectionError("eta vanished at every coordinate")
            raise EvaluationError("eta is non-finite at some coordinate")
        logp = log_ratios + log_eta
        logz = _log_sum_exp(logp)
    else:
        logp = log_ratios
        logz = _log_sum_exp(logp) - math.log(target.d)
    return logp, logz


def _pick_index(logp: np.ndarray, u: float) -> int:
    """Draw an index proportionally to exp(logp) with a single uniform."""
    shifted = np.exp(logp - logp.max())
    cum = np.cumsum(shifted)
    total = cum[-1]
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateSelectionError("selection probabilities vanished after underflow guard")
    return min(int(np.searchsorted(cum, u * total, side="right")), len(logp) - 1)


def selection_probabilities(x: np.ndarray, target: TargetModel):
    """Selection probabilities p_i(x) and the weight normaliser Z(x).

    Returns ``(p, z)`` where ``z = mean(p)`` for plain tempered selection and
    the unnormalised ``sum(p)`` when the target carries selection weights.
    """
    logp, logz = _log_selection_state(np.asarray(x, dtype=float), target, target.has_eta)
    return np.exp(logp), math.exp(logz)


def tgs_step(x: np.ndarray, target: TargetModel, rng: np.random.Generator) -> WeightedSample:
    """One tempered-selection step; the weight is evaluated at the new state."""
    x = np.array(x)
    logp, _ = _log_selection_state(x, target, weighted=False)
    i, _, logz = _advance(x, logp, target, rng, weighted=False)
    return WeightedSample(x, i, math.exp(-logz), -logz)


def wtgs_step(x: np.ndarray, target: TargetModel, rng: np.random.Generator) -> WeightedSample:
    """One selection-weighted step (weights unnormalised; see module docs)."""
    x = np.array(x)
    logp, _ = _log_selection_state(x, target, weighted=True)
    i, _, logz = _advance(x, logp, target, rng, weighted=True)
    return WeightedSample(x, i, math.exp(-logz), -logz)


def gs_step(x: np.ndarray, target: TargetModel, rng: np.random.Generator) -> WeightedSample:
    """One random-scan Gibbs step (unit weight)."""
    x = np.array(x)
    u = rng.random()
    i = _pick_index(np.zeros(target.d), u)
    x[i] = target.conditional_update(i, x, rng)
    return WeightedSample(x, i, 1.0, 0.0)


def _advance(x, logp, target, rng, weighted):
    """Advance the chain in place given the selection vector at x."""
    u = rng.random()
    i = _pick_index(logp, u)
    x[i] = target.modified_update(i, x, rng)
    logp_new, logz_new = _log_selection_state(x, target, weighted)
    return i, logp_new, logz_new


def run_chain(target: TargetModel, kernel: str, n_iters: int, burn_in: int | None = None,
              seed: int | None = None, init: np.ndarray | None = None,
              store_states: bool = True, rng: np.random.Generator | None = None,
              rb_capture: bool | None = None) -> WeightedTrace:
    """Run one chain and collect its post-burn-in weighted trace.

    ``burn_in`` defaults to 10% of ``n_iters``.  The run is deterministic
    given ``seed``.  ``rb_capture`` controls the conditional-inclusion
    accumulators; by default they are kept whenever the target reports
    inclusion probabilities and the kernel emits weights.
    """
    if kernel not in KERNELS:
        raise ConfigurationError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    if kernel == "wtgs" and not target.has_eta:
        raise ConfigurationError("wtgs requires a target with selection weights (eta)")
    if burn_in is None:
        burn_in = n_iters // 10
    if not 0 <= burn_in < n_iters:
        raise ConfigurationError(f"need n_iters > burn_in >= 0, got {n_iters}, {burn_in}")
    if rng is None:
        rng = np.random.default_rng(seed)

    x = np.array(target.initial_state(rng) if init is None else init)
    d = target.d
    n_keep = n_iters - burn_in
    log_weights = np.zeros(n_keep)
    indices = np.zeros(n_keep, dtype=np.int64)
    states = np.zeros((n_keep,) + x.shape, dtype=x.dtype) if store_states else None
    flip_counts = np.zeros(d, dtype=np.int64)
    freq_sums = None
    rb_sums = None
    rb_weight_sum = 0.0
    if rb_capture is None:
        rb_capture = target.inclusion_probabilities(x) is not None
    if rb_capture:
        rb_sums = np.zeros(d)
        freq_sums = np.zeros(d)

    weighted = kernel == "wtgs"
    if kernel == "gs":
        zero_logp = np.zeros(d)
        for t in range(n_iters):
            u = rng.random()
            i = _pick_index(zero_logp, u)
            x[i] = target.conditional_update(i, x, rng)
            if t >= burn_in:
                k = t - burn_in
                indices[k] = i
                flip_counts[i] += 1
                if states is not None:
                    states[k] = x
                if rb_capture:
                    incl = target.inclusion_probabilities(x)
                    rb_sums += incl
                    freq_sums += np.asarray(x, dtype=float)
                    rb_weight_sum += 1.0
    else:
        logp, _ = _log_selection_state(x, target, weighted)
        for t in range(n_iters):
            i, logp, logz = _advance(x, logp, target, rng, weighted)
            if t >= burn_in:
                k = t - burn_in
                indices[k] = i
                log_weights[k] = -logz
                flip_counts[i] += 1
                if states is not None:
                    states[k] = x
                if rb_capture:
                    w = math.exp(-logz)
                    rb_sums += w * target.inclusion_probabilities(x)
                    freq_sums += w * np.asarray(x, dtype=float)
                    rb_weight_sum += w

    return WeightedTrace(kernel=kernel, burn_in=burn_in, log_weights=log_weights,
                         indices=indices, states=states, rb_sums=rb_sums,
                         rb_weight_sum=rb_weight_sum, freq_sums=freq_sums,
                         flip_counts=flip_counts, seed=seed)


def importance_estimate(trace: WeightedTrace, h) -> float:
    """Self-normalised estimate of E_f[h] from a weighted trace."""
    if trace.states is None:
        raise CapabilityError("importance_estimate needs stored states")
    if len(trace) == 0:
        raise CapabilityError("empty trace")
    values = np.array([h(s) for s in trace.states], dtype=float)
    if not np.isfinite(values).all():
        t = int(np.flatnonzero(~np.isfinite(values))[0])
        raise EvaluationError(f"h is non-finite at stored iteration {t}")
    w = trace.normalised_weights()
    return float(np.sum(w * values) / np.sum(w))


def weight_variance(trace: WeightedTrace) -> float:
    """Normalised variance of the importance weights, (1/n) sum w_bar^2 - 1."""
    if len(trace) == 0:
        raise CapabilityError("empty trace")
    wbar = trace.normalised_weights()
    return float(np.mean(wbar**2) - 1.0)


def rao_blackwell_pips(trace: WeightedTrace) -> np.ndarray:
    """Weighted average of conditional inclusion probabilities, per coordinate."""
    if trace.rb_sums is None or trace.rb_weight_sum <= 0.0:
        raise CapabilityError("trace carries no conditional-inclusion accumulators")
    return trace.rb_sums / trace.rb_weight_sum


def frequency_pips(trace: WeightedTrace) -> np.ndarray:
    """Weighted average of raw inclusion indicators, per coordinate."""
    if trace.freq_sums is None or trace.rb_weight_sum <= 0.0:
        raise CapabilityError("trace carries no inclusion-frequency accumulators")
    return trace.freq_sums / trace.rb_weight_sum
