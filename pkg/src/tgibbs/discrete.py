"""Enumerable binary targets and exact transition-kernel construction.

States live in {0,1}^p and are encoded little-endian (bit i of the integer
index is coordinate i), which makes flip neighbours a single XOR.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, EnumerationLimitError, EvaluationError
from .sampler import TargetModel

MAX_ENUM_STATES = 2**20


def _log_sigmoid(z):
    # log sigma(z), stable on both tails
    return -np.logaddexp(0.0, -z)


def _sigmoid(z):
    return np.exp(_log_sigmoid(z))


@dataclass(frozen=True)
class DiscreteModifiedSpec:
    """Modified conditional for a binary coordinate with inclusion logit l.

    ``uniform`` is the fully flattened choice g = (1/2, 1/2); ``tempered``
    keeps the normalised beta-power (logit beta*l, so beta=0 recovers
    uniform); ``mixed`` blends f with its beta-power, bounding f/g by
    1 + epsilon.  ``update`` selects the coordinate refresh: a Metropolised
    flip with respect to g (default, always accepted when g is uniform) or an
    exact resample from g.
    """

    kind: str = "uniform"
    beta: float = 0.0
    epsilon: float = 1.0
    update: str = "metropolised"

    def __post_init__(self):
        if self.kind not in ("uniform", "tempered", "mixed"):
            raise ConfigurationError(f"unknown discrete modified kind {self.kind!r}")
        if self.kind in ("tempered", "mixed") and not 0.0 <= self.beta < 1.0:
            raise ConfigurationError(f"beta must lie in [0, 1) for binary coordinates, "
                                     f"got {self.beta}")
        if self.kind == "mixed" and self.epsilon <= 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if self.update not in ("metropolised", "resample"):
            raise ConfigurationError(f"unknown update mode {self.update!r}")

    def log_g1(self, logits):
        """log g(value 1 | rest) as a function of the inclusion logits."""
        if self.kind == "uniform":
            return np.full_like(np.asarray(logits, dtype=float), -math.log(2.0))
        if self.kind == "tempered":
            return _log_sigmoid(self.beta * np.asarray(logits, dtype=float))
        base = _log_sigmoid(np.asarray(logits, dtype=float))
        flat = _log_sigmoid(self.beta * np.asarray(logits, dtype=float))
        return np.logaddexp(base, math.log(self.epsilon) + flat) - math.log1p(self.epsilon)

    def log_g0(self, logits):
        return self.log_g1(-np.asarray(logits, dtype=float))


@dataclass(frozen=True)
class EtaSpec:
    """Selection weights eta_i for binary coordinates.

    ``conditional`` uses the conditional inclusion probability itself;
    ``shifted`` adds the uniform floor k/p that keeps rarely included
    coordinates in play.
    """

    kind: str = "shifted"
    k: float = 5.0

    def __post_init__(self):
        if self.kind not in ("conditional", "shifted"):
            raise ConfigurationError(f"unknown eta kind {self.kind!r}")
        if self.kind == "shifted" and self.k <= 0.0:
            raise ConfigurationError(f"k must be positive, got {self.k}")

    def log_eta(self, logits, p):
        incl = _sigmoid(np.asarray(logits, dtype=float))
        if self.kind == "conditional":
            return np.log(incl)
        return np.log(incl + self.k / p)


class BinaryTarget(TargetModel):
    """Base class for {0,1}^p targets defined through inclusion logits.

    Subclasses provide ``log_mass`` (unnormalised) and the vectorised
    ``conditional_logits``; everything else (modified conditionals, selection
    ratios, eta, Metropolised updates) derives from those.
    """

    gs_metropolised = True

    def __init__(self, p: int, g_spec: DiscreteModifiedSpec | None = None,
                 eta_spec: EtaSpec | None = None):
        self.d = p
        self.p = p
        self.g_spec = DiscreteModifiedSpec() if g_spec is None else g_spec
        self.eta_spec = eta_spec
        self.has_eta = eta_spec is not None

    def log_mass(self, gamma: np.ndarray) -> float:
        raise NotImplementedError

    def conditional_logits(self, gamma: np.ndarray) -> np.ndarray:
        """logit p(gamma_i = 1 | gamma_-i) for every coordinate."""
        raise NotImplementedError

    def conditional_logit(self, i: int, gamma: np.ndarray) -> float:
        return float(self.conditional_logits(gamma)[i])

    # -- TargetModel interface -------------------------------------------
    def conditional_logpdf(self, i, x):
        lam = self.conditional_logit(i, x)
        return float(_log_sigmoid(lam) if x[i] else _log_sigmoid(-lam))

    def conditional_sample(self, i, x, rng):
        lam = self.conditional_logit(i, x)
        return 1 if rng.random() < _sigmoid(lam) else 0

    def conditional_update(self, i, x, rng):
        # Metropolised flip with respect to the full conditional
        lam = self.conditional_logit(i, x)
        delta = -lam if x[i] else lam
        return 1 - x[i] if math.log(rng.random()) < min(0.0, delta) else x[i]

    def modified_logpdf(self, i, x):
        lam = self.conditional_logit(i, x)
        spec = self.g_spec
        return float(spec.log_g1(lam) if x[i] else spec.log_g0(lam))

    def modified_sample(self, i, x, rng):
        lam = self.conditional_logit(i, x)
        return 1 if rng.random() < math.exp(self.g_spec.log_g1(lam)) else 0

    def modified_update(self, i, x, rng):
        if self.g_spec.update == "resample":
            return self.modified_sample(i, x, rng)
        lam = self.conditional_logit(i, x)
        spec = self.g_spec
        log_cur, log_flip = ((spec.log_g1(lam), spec.log_g0(lam)) if x[i]
                             else (spec.log_g0(lam), spec.log_g1(lam)))
        accept = min(0.0, float(log_flip - log_cur))
        return 1 - x[i] if math.log(rng.random()) < accept else x[i]

    def log_selection_ratios(self, x):
        lam = self.conditional_logits(x)
        x = np.asarray(x)
        log_g = np.where(x == 1, self.g_spec.log_g1(lam), self.g_spec.log_g0(lam))
        log_f = np.where(x == 1, _log_sigmoid(lam), _log_sigmoid(-lam))
        return log_g - log_f

    def log_eta(self, x):
        if self.eta_spec is None:
            return None
        return self.eta_spec.log_eta(self.conditional_logits(x), self.p)

    def inclusion_probabilities(self, x):
        return _sigmoid(self.conditional_logits(x))

    def initial_state(self, rng):
        return np.zeros(self.p, dtype=np.int8)

    # -- enumeration helpers ----------------------------------------------
    def log_mass_batch(self, states: np.ndarray) -> np.ndarray:
        return np.array([self.log_mass(s) for s in states])


class ProductBernoulliTarget(BinaryTarget):
    """Independent inclusion variables with probabilities q_i."""

    def __init__(self, q, g_spec=None, eta_spec=None):
        q = np.asarray(q, dtype=float)
        if not ((q > 0.0) & (q < 1.0)).all():
            raise ConfigurationError("all inclusion probabilities must lie in (0, 1)")
        super().__init__(q.size, g_spec, eta_spec)
        self.q = q
        self._logit_q = np.log(q) - np.log1p(-q)
        self._log_q = np.log(q)
        self._log_1mq = np.log1p(-q)

    def log_mass(self, gamma):
        gamma = np.asarray(gamma)
        return float(np.where(gamma == 1, self._log_q, self._log_1mq).sum())

    def log_mass_batch(self, states):
        return states @ self._log_q + (1 - states) @ self._log_1mq

    def conditional_logits(self, gamma):
        return self._logit_q

    def initial_state(self, rng):
        return (rng.random(self.p) < self.q).astype(np.int8)


class CollinearStructuredTarget(BinaryTarget):
    """A symmetric m-block glued to independent tail coordinates.

    The first ``m`` coordinates carry a joint mass that depends on the block
    configuration only through its number of active entries, ``block_mass[s]``
    up to normalisation; the remaining coordinates are independent Bernoulli.
    """

    def __init__(self, block_mass, tail_q=(), g_spec=None, eta_spec=None):
        block_mass = np.asarray(block_mass, dtype=float)
        if block_mass.ndim != 1 or block_mass.size < 2:
            raise ConfigurationError("block_mass must hold masses for s = 0..m")
        if (block_mass <= 0.0).any():
            raise ConfigurationError("block masses must be positive")
        tail_q = np.asarray(tail_q, dtype=float)
        if tail_q.size and not ((tail_q > 0.0) & (tail_q < 1.0)).all():
            raise ConfigurationError("tail inclusion probabilities must lie in (0, 1)")
        m = block_mass.size - 1
        super().__init__(m + tail_q.size, g_spec, eta_spec)
        self.m = m
        counts = np.array([math.comb(m, s) for s in range(m + 1)], dtype=float)
        norm = float(counts @ block_mass)
        self.block_mass = block_mass / norm
        self._log_block = np.log(self.block_mass)
        self.tail_q = tail_q
        self._tail_logit = np.log(tail_q) - np.log1p(-tail_q) if tail_q.size else np.empty(0)
        self._log_tq = np.log(tail_q) if tail_q.size else np.empty(0)
        self._log_1mtq = np.log1p(-tail_q) if tail_q.size else np.empty(0)

    def log_mass(self, gamma):
        gamma = np.asarray(gamma)
        s = int(gamma[:self.m].sum())
        tail = gamma[self.m:]
        return float(self._log_block[s]
                     + np.where(tail == 1, self._log_tq, self._log_1mtq).sum())

    def log_mass_batch(self, states):
        s = states[:, :self.m].sum(axis=1)
        tail = states[:, self.m:]
        return (self._log_block[s] + tail @ self._log_tq
                + (1 - tail) @ self._log_1mtq)

    def conditional_logits(self, gamma):
        gamma = np.asarray(gamma)
        s_minus = int(gamma[:self.m].sum()) - gamma[:self.m]
        block_logits = self._log_block[s_minus + 1] - self._log_block[s_minus]
        return np.concatenate([block_logits, self._tail_logit])


class GenericBinaryTarget(BinaryTarget):
    """A target given by an explicit table of log masses over {0,1}^p."""

    def __init__(self, log_masses, p, g_spec=None, eta_spec=None):
        log_masses = np.asarray(log_masses, dtype=float)
        if log_masses.shape != (2**p,):
            raise ConfigurationError(f"expected 2^{p} log masses, got {log_masses.shape}")
        if not np.isfinite(log_masses).all():
            raise EvaluationError("log masses must be finite")
        super().__init__(p, g_spec, eta_spec)
        self._lm = log_masses - logsumexp(log_masses)
        self._bits = 1 << np.arange(p)

    def encode(self, gamma):
        return int(np.asarray(gamma) @ self._bits)

    def log_mass(self, gamma):
        return float(self._lm[self.encode(gamma)])

    def log_mass_batch(self, states):
        return self._lm[states @ self._bits]

    def conditional_logits(self, gamma):
        idx = self.encode(gamma)
        ones = self._lm[idx | self._bits]
        zeros = self._lm[idx & ~self._bits]
        return ones - zeros

    def initial_state(self, rng):
        idx = int(np.searchsorted(np.cumsum(np.exp(self._lm)), rng.random()))
        idx = min(idx, 2**self.p - 1)
        return ((idx >> np.arange(self.p)) & 1).astype(np.int8)


def collinear_block_mass(m: int, c: float, h: float, n_obs: int = 6) -> np.ndarray:
    """Block masses for regressors that each fully explain the response.

    Activating the first block member buys the whole likelihood gain,
    ``q(1)/q(0) ~ [h/(1-h)] c^{(n-1)/2}``; every further activation only pays
    the prior and complexity price, ``q(s+1)/q(s) = [h/(1-h)] c^{-1/2}``.
    The returned masses are unnormalised (the target constructor normalises).
    """
    if m < 1 or not 0.0 < h < 1.0 or c <= 0.0:
        raise ConfigurationError("need m >= 1, h in (0, 1) and c > 0")
    s = np.arange(m + 1, dtype=float)
    log_q = s * (math.log(h) - math.log1p(-h)) + 0.5 * (n_obs - s) * math.log(c)
    log_q[0] = 0.0
    return np.exp(log_q - log_q.max())


def all_states(p: int) -> np.ndarray:
    """All binary vectors of length p, row s encoding the integer s."""
    return ((np.arange(2**p)[:, None] >> np.arange(p)) & 1).astype(np.int8)


@dataclass
class ProbabilityTable:
    """Exact normalised distribution over an enumerated binary state space."""

    p: int
    states: np.ndarray
    probs: np.ndarray
    log_probs: np.ndarray

    def pips(self) -> np.ndarray:
        return self.probs @ self.states

    def expectation(self, values) -> float:
        values = np.asarray([values(s) for s in self.states], dtype=float) \
            if callable(values) else np.asarray(values, dtype=float)
        return float(self.probs @ values)

    def variance(self, values) -> float:
        values = np.asarray([values(s) for s in self.states], dtype=float) \
            if callable(values) else np.asarray(values, dtype=float)
        mean = self.probs @ values
        return float(self.probs @ (values - mean) ** 2)

    def state_index(self, gamma) -> int:
        return int(np.asarray(gamma) @ (1 << np.arange(self.p)))

    def sample_iid(self, n, rng) -> np.ndarray:
        idx = rng.choice(len(self.probs), size=n, p=self.probs)
        return self.states[idx]


def enumerate_distribution(target: BinaryTarget, max_states: int = MAX_ENUM_STATES) -> ProbabilityTable:
    """Exact probability table of the target over {0,1}^p."""
    if 2**target.p > max_states:
        raise EnumerationLimitError(
            f"2^{target.p} states exceed the limit {max_states}; "
            f"raise max_states to at least {2**target.p} to enumerate")
    states = all_states(target.p)
    log_mass = target.log_mass_batch(states)
    log_probs = log_mass - logsumexp(log_mass)
    probs = np.exp(log_probs)
    probs /= probs.sum()
    return ProbabilityTable(target.p, states, probs, np.log(probs))


@dataclass
class KernelMatrix:
    """Explicit one-step kernel over an enumerated binary state space.

    ``chain_law`` is the invariant law of the discrete-time chain (f for the
    plain Gibbs kernel, the reweighted f*Z law otherwise); ``jump`` is the
    continuous-time generator Z(x) P(x, y) used for relaxation times, with
    rows summing to zero.
    """

    kernel: str
    matrix: np.ndarray
    chain_law: np.ndarray
    target_law: np.ndarray
    z: np.ndarray | None = None
    selection: np.ndarray | None = None
    jump: np.ndarray | None = None
    zeta: float | None = None

    def stationary_distribution(self) -> np.ndarray:
        """Leading left eigenvector of the kernel, normalised to a law."""
        vals, vecs = np.linalg.eig(self.matrix.T)
        lead = np.argmax(vals.real)
        vec = np.abs(vecs[:, lead].real)
        return vec / vec.sum()

    def detailed_balance_residual(self) -> float:
        flux = self.chain_law[:, None] * self.matrix
        return float(np.abs(flux - flux.T).max())

    def index_frequencies(self) -> np.ndarray:
        """Exact stationary frequency with which each coordinate is selected."""
        if self.selection is None:
            raise ConfigurationError("kernel carries no selection matrix")
        return self.chain_law @ self.selection


def build_kernel(target: BinaryTarget, kernel: str,
                 g_spec: DiscreteModifiedSpec | None = None,
                 eta_spec: EtaSpec | None = None,
                 gs_metropolised: bool = True,
                 max_states: int = 2**12) -> KernelMatrix:
    """Explicit transition matrix of the requested kernel on the enumerated target.

    ``g_spec``/``eta_spec`` default to the target's own; the weighted kernel's
    Z is normalised with the exact zeta = sum_i E_f[eta_i] so that
    sum_x f(x) Z(x) = 1.
    """
    if 2**target.p > max_states:
        raise EnumerationLimitError(f"2^{target.p} states exceed the kernel limit {max_states}")
    if kernel not in ("gs", "tgs", "wtgs"):
        raise ConfigurationError(f"unknown kernel {kernel!r}")
    g_spec = target.g_spec if g_spec is None else g_spec
    eta_spec = target.eta_spec if eta_spec is None else eta_spec
    if kernel == "wtgs" and eta_spec is None:
        raise ConfigurationError("weighted kernel needs an eta spec")

    table = enumerate_distribution(target, max_states=max_states)
    S, p = len(table.probs), target.p
    flip_index = np.arange(S)[:, None] ^ (1 << np.arange(p))

    logits = np.empty((S, p))
    for s in range(S):
        logits[s] = target.conditional_logits(table.states[s])

    P = np.zeros((S, S))
    if kernel == "gs":
        lp = table.log_probs
        for s in range(S):
            for i in range(p):
                t = flip_index[s, i]
                if gs_metropolised:
                    P[s, t] = math.exp(min(0.0, lp[t] - lp[s])) / p
                else:
                    lam = logits[s, i]
                    flip_prob = _sigmoid(-lam) if table.states[s, i] else _sigmoid(lam)
                    P[s, t] = flip_prob / p
            P[s, s] = max(0.0, 1.0 - P[s].sum() + P[s, s])
        return KernelMatrix("gs", P, table.probs.copy(), table.probs.copy())

    gamma = table.states
    log_g1 = g_spec.log_g1(logits)
    log_g0 = g_spec.log_g0(logits)
    log_g_cur = np.where(gamma == 1, log_g1, log_g0)
    log_g_flip = np.where(gamma == 1, log_g0, log_g1)
    log_f_cur = np.where(gamma == 1, _log_sigmoid(logits), _log_sigmoid(-logits))
    log_ratio = log_g_cur - log_f_cur
    if kernel == "wtgs":
        log_eta = eta_spec.log_eta(logits.ravel(), p).reshape(S, p)
        logp = log_ratio + log_eta
        incl = _sigmoid(logits)
        eta_means = table.probs @ (incl if eta_spec.kind == "conditional"
                                   else incl + eta_spec.k / p)
        zeta = float(eta_means.sum())
        z = np.exp(logsumexp(logp, axis=1)) / zeta
    else:
        logp = log_ratio
        zeta = float(p)
        z = np.exp(logsumexp(logp, axis=1)) / p

    sel = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
    if g_spec.update == "metropolised":
        move = np.exp(np.minimum(0.0, log_g_flip - log_g_cur))
    else:
        move = np.exp(log_g_flip)
    for s in range(S):
        for i in range(p):
            P[s, flip_index[s, i]] += sel[s, i] * move[s, i]
        P[s, s] += (sel[s] * (1.0 - move[s])).sum()

    chain_law = table.probs * z
    return KernelMatrix(kernel, P, chain_law, table.probs.copy(), z=z,
                        selection=sel, jump=_jump_matrix(P, z), zeta=zeta)


def _jump_matrix(P: np.ndarray, z: np.ndarray) -> np.ndarray:
    Q = z[:, None] * P
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def export_table_csv(table: ProbabilityTable, path) -> None:
    cols = np.column_stack([table.states, table.probs])
    header = ",".join([f"g{i}" for i in range(table.p)] + ["prob"])
    np.savetxt(path, cols, delimiter=",", fmt="%.17g", header=header, comments="")
