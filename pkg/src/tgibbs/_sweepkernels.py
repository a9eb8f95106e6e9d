"""Jitted inner kernels for the variable-selection conditional sweep.

State layout shared with :mod:`tgibbs.bvs`:

    L  (kmax, kmax)  lower Cholesky factor of the active-block matrix
                     M = X_A' X_A (+ I/c for the independence prior)
    G  (kmax, kmax)  explicit inverse of L (lower triangular)
    Wr (p, kmax)     row j holds L^{-1} XtX[active, j], i.e. the solved
                     cross-product column for candidate variable j
    t  (kmax,)       L^{-1} X_A' Y
    S  scalar        residual quadratic form Y'Y - kappa * |t|^2

Every kernel is O(|active| * p) or cheaper per call; nothing here allocates
beyond small scratch vectors, so the per-iteration cost is dominated by the
p-linear passes once p is large.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# flag bits returned by the update kernels
OK = 0
NEEDS_REFRESH = 1


@njit(cache=True)
def sweep_deltas(L, G, Wr, t, xty, diag_stat, pos, k, S, yty, kappa,
                 log_det_add_const, log_c, n_obs, logit_h, is_gprior,
                 delta, s_out, snew, counts):
    """Inclusion log-odds for every variable in one pass.

    ``delta[j] = log p(gamma_j = 1, rest | Y) - log p(gamma_j = 0, rest | Y)``.
    ``snew[j]`` is the residual quadratic form the state would have after
    flipping j.  ``counts[0]``/``counts[1]`` accumulate the clamp events on
    the Schur complement and on the residual.
    """
    p = Wr.shape[0]
    half_n = 0.5 * n_obs
    log_S = math.log(S)
    for j in range(p):
        if pos[j] >= 0:
            continue
        cn = 0.0
        rj = xty[j]
        for l in range(k):
            w = Wr[j, l]
            cn += w * w
            rj -= w * t[l]
        s = diag_stat[j] - cn
        floor = 1e-12 * diag_stat[j]
        if s < floor:
            s = floor
            counts[0] += 1
        s_add = S - kappa * (rj * rj) / s
        res_floor = 1e-12 * yty
        if s_add < res_floor:
            s_add = res_floor
            counts[1] += 1
        if is_gprior:
            dv = log_det_add_const
        else:
            dv = 0.5 * (log_c + math.log(s))
        delta[j] = logit_h - dv + half_n * (log_S - math.log(s_add))
        s_out[j] = s
        snew[j] = s_add
    # removal odds for the active variables, from the explicit inverse
    for l in range(k):
        beta = 0.0
        fll = 0.0
        for m in range(l, k):
            g = G[m, l]
            beta += g * t[m]
            fll += g * g
        s_rem = S + kappa * (beta * beta) / fll
        j = -1
        for jj in range(p):
            if pos[jj] == l:
                j = jj
                break
        if is_gprior:
            dv = log_det_add_const
        else:
            dv = 0.5 * (log_c - math.log(fll))
        delta[j] = logit_h - dv + half_n * (math.log(s_rem) - log_S)
        s_out[j] = fll
        snew[j] = s_rem
    return OK


@njit(cache=True)
def selection_logs(delta, gamma, k_over_p, weighted, logpi, prob1):
    """Selection log-probabilities log p_i = log eta_i - log 2 - log p(cur).

    ``prob1`` receives the conditional inclusion probabilities sigma(delta).
    Returns the log normaliser piece logsumexp(logpi).
    """
    p = delta.shape[0]
    mx = -1e300
    for j in range(p):
        d = delta[j]
        # log sigma(d) and log sigma(-d), stable on both tails
        if d > 0.0:
            log_p1 = -math.log1p(math.exp(-d))
            log_p0 = -d + log_p1
        else:
            log_p0 = -math.log1p(math.exp(d))
            log_p1 = d + log_p0
        prob1[j] = math.exp(log_p1)
        log_pcur = log_p1 if gamma[j] == 1 else log_p0
        if weighted:
            log_eta = math.log(prob1[j] + k_over_p)
        else:
            log_eta = 0.0
        v = log_eta - 0.6931471805599453 - log_pcur
        logpi[j] = v
        if v > mx:
            mx = v
    acc = 0.0
    for j in range(p):
        acc += math.exp(logpi[j] - mx)
    return mx + math.log(acc)


@njit(cache=True)
def pick_index(logpi, u):
    p = logpi.shape[0]
    mx = logpi[0]
    for j in range(1, p):
        if logpi[j] > mx:
            mx = logpi[j]
    total = 0.0
    for j in range(p):
        total += math.exp(logpi[j] - mx)
    threshold = u * total
    acc = 0.0
    for j in range(p):
        acc += math.exp(logpi[j] - mx)
        if acc >= threshold:
            return j
    return p - 1


@njit(cache=True)
def apply_add(L, G, Wr, t, active, pos, xtx_row, j, k, s_j, r_j, s_new):
    """Grow the factorisation by variable j (Schur complement s_j known)."""
    if not (s_j > 0.0) or not math.isfinite(s_j):
        return NEEDS_REFRESH
    lam = math.sqrt(s_j)
    for l in range(k):
        L[k, l] = Wr[j, l]
    L[k, k] = lam
    # new row of the inverse: G[k, :k] = -(w' G)/lam, G[k, k] = 1/lam
    for m in range(k):
        acc = 0.0
        for l in range(m, k):
            acc += Wr[j, l] * G[l, m]
        G[k, m] = -acc / lam
    G[k, k] = 1.0 / lam
    # new solved column for every candidate
    p = Wr.shape[0]
    for jj in range(p):
        acc = 0.0
        for l in range(k):
            acc += Wr[jj, l] * Wr[j, l]
        Wr[jj, k] = (xtx_row[jj] - acc) / lam
    t[k] = r_j / lam
    active[k] = j
    pos[j] = k
    return OK


@njit(cache=True)
def apply_remove(L, G, Wr, t, active, pos, q, k):
    """Delete the active variable at position q via a Givens cascade.

    The trailing factor block absorbs the deleted column as a rank-one
    update; the same rotations keep t, the solved columns in Wr and the
    explicit inverse G consistent, after which every index above q shifts
    down by one.
    """
    m = k - q - 1
    cs = np.empty(m)
    ss = np.empty(m)
    for l in range(m):
        dl = L[q + 1 + l, q + 1 + l]
        vl = L[q + 1 + l, q]
        r = math.hypot(dl, vl)
        if not (r > 0.0) or not math.isfinite(r):
            return NEEDS_REFRESH
        c = dl / r
        s = vl / r
        cs[l] = c
        ss[l] = s
        L[q + 1 + l, q + 1 + l] = r
        for i in range(l + 1, m):
            di = L[q + 1 + i, q + 1 + l]
            vi = L[q + 1 + i, q]
            L[q + 1 + i, q + 1 + l] = c * di + s * vi
            L[q + 1 + i, q] = -s * di + c * vi
    # rotate the solved RHS
    aux = t[q]
    for l in range(m):
        tl = t[q + 1 + l]
        t[q + 1 + l] = cs[l] * tl + ss[l] * aux
        aux = -ss[l] * tl + cs[l] * aux
    # rotate the inverse rows (aux row is the deleted one)
    for col in range(k):
        a = G[q, col]
        for l in range(m):
            g = G[q + 1 + l, col]
            G[q + 1 + l, col] = cs[l] * g + ss[l] * a
            a = -ss[l] * g + cs[l] * a
    # rotate every solved cross-product column, row-contiguous per variable
    p = Wr.shape[0]
    for jj in range(p):
        a = Wr[jj, q]
        for l in range(m):
            w = Wr[jj, q + 1 + l]
            nw = cs[l] * w + ss[l] * a
            a = -ss[l] * w + cs[l] * a
            Wr[jj, q + l] = nw
    # shift the factor, inverse, RHS and bookkeeping down by one index
    for l in range(m):
        t[q + l] = t[q + 1 + l]
    for i in range(q + 1, k):
        for col in range(q):
            L[i - 1, col] = L[i, col]
            G[i - 1, col] = G[i, col]
        for col in range(q + 1, k):
            L[i - 1, col - 1] = L[i, col]
            G[i - 1, col - 1] = G[i, col]
    for l in range(m):
        idx = active[q + 1 + l]
        active[q + l] = idx
        pos[idx] = q + l
    return OK


@njit(cache=True)
def gs_flip_odds(L, t, xtx_col_active, xty_j, diag_stat_j, q, k, S, yty, kappa,
                 log_det_add_const, log_c, n_obs, logit_h, is_gprior):
    """Inclusion log-odds and candidate residual for a single variable.

    ``q`` is the variable's active position (-1 when inactive);
    ``xtx_col_active`` holds XtX[active[:k], j].  O(k^2), independent of p.
    """
    half_n = 0.5 * n_obs
    if q < 0:
        w = np.empty(k)
        for i in range(k):
            acc = xtx_col_active[i]
            for l in range(i):
                acc -= L[i, l] * w[l]
            w[i] = acc / L[i, i]
        cn = 0.0
        rj = xty_j
        for l in range(k):
            cn += w[l] * w[l]
            rj -= w[l] * t[l]
        s = diag_stat_j - cn
        floor = 1e-12 * diag_stat_j
        clamped = False
        if s < floor:
            s = floor
            clamped = True
        s_add = S - kappa * (rj * rj) / s
        if s_add < 1e-12 * yty:
            s_add = 1e-12 * yty
            clamped = True
        dv = log_det_add_const if is_gprior else 0.5 * (log_c + math.log(s))
        delta = logit_h - dv + half_n * (math.log(S) - math.log(s_add))
        return delta, s, rj, s_add, clamped
    # active: solve L z = e_q to read off the inverse diagonal and beta
    z = np.empty(k)
    for i in range(k):
        acc = 1.0 if i == q else 0.0
        for l in range(i):
            acc -= L[i, l] * z[l]
        z[i] = acc / L[i, i]
    fll = 0.0
    beta = 0.0
    for l in range(k):
        fll += z[l] * z[l]
        beta += z[l] * t[l]
    s_rem = S + kappa * (beta * beta) / fll
    dv = log_det_add_const if is_gprior else 0.5 * (log_c - math.log(fll))
    delta = logit_h - dv + half_n * (math.log(s_rem) - math.log(S))
    return delta, fll, 0.0, s_rem, False


@njit(cache=True)
def gs_apply_add(L, t, xtx_col_active, j, k, s_j, r_j, active, pos):
    if not (s_j > 0.0) or not math.isfinite(s_j):
        return NEEDS_REFRESH
    w = np.empty(k)
    for i in range(k):
        acc = xtx_col_active[i]
        for l in range(i):
            acc -= L[i, l] * w[l]
        w[i] = acc / L[i, i]
    lam2 = s_j
    lam = math.sqrt(lam2)
    for l in range(k):
        L[k, l] = w[l]
    L[k, k] = lam
    t[k] = r_j / lam
    active[k] = j
    pos[j] = k
    return OK


@njit(cache=True)
def gs_apply_remove(L, t, active, pos, q, k):
    m = k - q - 1
    for l in range(m):
        dl = L[q + 1 + l, q + 1 + l]
        vl = L[q + 1 + l, q]
        r = math.hypot(dl, vl)
        if not (r > 0.0) or not math.isfinite(r):
            return NEEDS_REFRESH
        c = dl / r
        s = vl / r
        L[q + 1 + l, q + 1 + l] = r
        for i in range(l + 1, m):
            di = L[q + 1 + i, q + 1 + l]
            vi = L[q + 1 + i, q]
            L[q + 1 + i, q + 1 + l] = c * di + s * vi
            L[q + 1 + i, q] = -s * di + c * vi
        tl = t[q + 1 + l]
        t[q + 1 + l] = c * tl + s * t[q]
        t[q] = -s * tl + c * t[q]
    for l in range(m):
        t[q + l] = t[q + 1 + l]
    for i in range(q + 1, k):
        for col in range(q):
            L[i - 1, col] = L[i, col]
        for col in range(q + 1, k):
            L[i - 1, col - 1] = L[i, col]
    for l in range(m):
        idx = active[q + 1 + l]
        active[q + l] = idx
        pos[idx] = q + l
    return OK
