"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The public names at the bottom dispatch on :data:`childci._accel.USE_NUMBA`.
Both variants perform the same arithmetic in the same order, so integer
counts and split choices agree exactly between them.
"""

import numpy as np

from ._accel import USE_NUMBA, njit


# -- sample entropy template matching ---------------------------------------

@njit
def _sampen_counts_nb(x, m, r):
    n = x.shape[0]
    ntemp = n - m
    b = 0
    a = 0
    for i in range(ntemp - 1):
        for j in range(i + 1, ntemp):
            ok = True
            for k in range(m):
                if abs(x[i + k] - x[j + k]) > r:
                    ok = False
                    break
            if ok:
                b += 1
                if abs(x[i + m] - x[j + m]) <= r:
                    a += 1
    return b, a


def _sampen_counts_np(x, m, r):
    x = np.asarray(x, dtype=np.float64)
    ntemp = x.shape[0] - m
    b = 0
    a = 0
    for lag in range(1, ntemp):
        cnt = ntemp - lag
        d = np.zeros(cnt)
        for k in range(m):
            np.maximum(d, np.abs(x[k:k + cnt] - x[lag + k:lag + k + cnt]), out=d)
        ok = d <= r
        b += int(ok.sum())
        a += int((ok & (np.abs(x[m:m + cnt] - x[lag + m:lag + m + cnt]) <= r)).sum())
    return b, a


# -- Higuchi curve lengths -------------------------------------------------

@njit
def _higuchi_lengths_nb(x, kmax):
    n = x.shape[0]
    out = np.empty(kmax)
    for k in range(1, kmax + 1):
        total = 0.0
        for m in range(k):
            nseg = (n - 1 - m) // k
            s = 0.0
            for i in range(1, nseg + 1):
                s += abs(x[m + i * k] - x[m + (i - 1) * k])
            total += s * (n - 1) / (nseg * k) / k
        out[k - 1] = total / k
    return out


def _higuchi_lengths_np(x, kmax):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.empty(kmax)
    for k in range(1, kmax + 1):
        total = 0.0
        for m in range(k):
            sub = x[m::k]
            nseg = (n - 1 - m) // k
            s = float(np.abs(np.diff(sub[:nseg + 1])).sum())
            total += s * (n - 1) / (nseg * k) / k
        out[k - 1] = total / k
    return out


# -- gini split search -----------------------------------------------------

@njit
def _best_split_nb(xs, y, n_classes):
    """Best (column, threshold, score) over the columns of ``xs``.

    score = sum_c nl_c^2 / nl + sum_c nr_c^2 / nr, maximised (equivalent to
    minimising weighted gini). Returns column -1 when no column has two
    distinct values.
    """
    n, f = xs.shape
    tot = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        tot[y[i]] += 1
    best_col = -1
    best_thr = 0.0
    best_score = -1.0
    left = np.zeros(n_classes, dtype=np.int64)
    for c in range(f):
        col = xs[:, c]
        order = np.argsort(col, kind="mergesort")
        for q in range(n_classes):
            left[q] = 0
        for i in range(n - 1):
            left[y[order[i]]] += 1
            v0 = col[order[i]]
            v1 = col[order[i + 1]]
            if v1 <= v0:
                continue
            nl = i + 1
            nr = n - nl
            lsq = 0.0
            rsq = 0.0
            for q in range(n_classes):
                lsq += float(left[q] * left[q])
                rq = tot[q] - left[q]
                rsq += float(rq * rq)
            score = lsq / nl + rsq / nr
            if score > best_score:
                best_score = score
                best_col = c
                thr = (v0 + v1) / 2.0
                if thr >= v1:
                    thr = v0
                best_thr = thr
    return best_col, best_thr, best_score


def _best_split_np(xs, y, n_classes):
    xs = np.asarray(xs, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, f = xs.shape
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), y] = 1
    tot = onehot.sum(axis=0)
    best_col, best_thr, best_score = -1, 0.0, -1.0
    for c in range(f):
        col = xs[:, c]
        order = np.argsort(col, kind="stable")
        v = col[order]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        usable = v[1:] > v[:-1]
        if not usable.any():
            continue
        right = tot - left
        lsq = np.zeros(n - 1)
        rsq = np.zeros(n - 1)
        for q in range(n_classes):
            lsq = lsq + (left[:, q] * left[:, q]).astype(np.float64)
            rsq = rsq + (right[:, q] * right[:, q]).astype(np.float64)
        nl = np.arange(1, n, dtype=np.float64)
        score = lsq / nl + rsq / (n - nl)
        score[~usable] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = float(score[i])
            best_col = c
            thr = (v[i] + v[i + 1]) / 2.0
            best_thr = float(v[i] if thr >= v[i + 1] else thr)
    return best_col, best_thr, best_score


# -- SMO for the soft-margin dual --------------------------------------------

@njit
def _smo_nb(K, y, C, tol, max_iter):
    """Second-order working-set SMO (libsvm WSS2) on a precomputed kernel.

    Minimises 0.5 a'Qa - e'a s.t. y'a = 0, 0 <= a <= C with Q = yy' * K.
    Returns (alpha, b, iterations) for f(x) = sum a_i y_i K(x_i, x) + b.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    tau = 1e-12
    it = 0
    while it < max_iter:
        # select i: max over I_up of -y_i grad_i
        gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > gmax:
                    gmax = v
                    i = t
        gmin = np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * grad[t]
                if v < gmin:
                    gmin = v
                if i >= 0:
                    bdiff = gmax - v
                    if bdiff > 0:
                        a = K[i, i] + K[t, t] - 2.0 * K[i, t]
                        if a <= 0:
                            a = tau
                        o = -(bdiff * bdiff) / a
                        if o < obj_min:
                            obj_min = o
                            j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        it += 1
        yi = y[i]
        yj = y[j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = tau
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - old_ai
        daj = alpha[j] - old_aj
        for t in range(n):
            grad[t] += y[t] * (yi * K[t, i] * dai + yj * K[t, j] * daj)
    # bias from free vectors, else midpoint of the feasible interval
    nfree = 0
    sfree = 0.0
    ub = np.inf
    lb = -np.inf
    for t in range(n):
        yg = y[t] * grad[t]
        if 0 < alpha[t] < C:
            nfree += 1
            sfree += yg
        elif (y[t] > 0 and alpha[t] >= C) or (y[t] < 0 and alpha[t] <= 0):
            if yg > lb:
                lb = yg
        else:
            if yg < ub:
                ub = yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = (ub + lb) / 2.0
    return alpha, -rho, it


def _smo_np(K, y, C, tol, max_iter):
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)
    tau = 1e-12
    diagK = np.diag(K).copy()
    it = 0
    while it < max_iter:
        yg = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        gmax = yg[i]
        gmin = float(np.min(yg[low]))
        bdiff = gmax - yg
        a = K[i, i] + diagK - 2.0 * K[i]
        a = np.where(a <= 0, tau, a)
        cand = low & (bdiff > 0)
        if not cand.any() or gmax - gmin < tol:
            break
        obj = np.where(cand, -(bdiff * bdiff) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1
        yi, yj = y[i], y[j]
        old_ai, old_aj = alpha[i], alpha[j]
        quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = tau
        ai, aj = alpha[i], alpha[j]
        if yi != yj:
            delta = (-grad[i] - grad[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (grad[i] - grad[j]) / quad
            s = ai + aj
            ai -= delta
            aj += delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        dai = ai - old_ai
        daj = aj - old_aj
        grad += y * (yi * K[:, i] * dai + yj * K[:, j] * daj)
    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = float(yg[free].sum() / free.sum())
    else:
        at_lb = ((y > 0) & (alpha >= C)) | ((y < 0) & (alpha <= 0))
        lb = float(yg[at_lb].max()) if at_lb.any() else -np.inf
        ub = float(yg[~at_lb].min()) if (~at_lb).any() else np.inf
        rho = (ub + lb) / 2.0
    return alpha, -rho, it


# -- dispatch --------------------------------------------------------------

if USE_NUMBA:
    sampen_counts = _sampen_counts_nb
    higuchi_lengths = _higuchi_lengths_nb
    best_split = _best_split_nb
    smo_solve = _smo_nb
else:
    sampen_counts = _sampen_counts_np
    higuchi_lengths = _higuchi_lengths_np
    best_split = _best_split_np
    smo_solve = _smo_np

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = ["sampen_counts", "higuchi_lengths", "best_split", "smo_solve", "BACKEND"]
