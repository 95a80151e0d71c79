"""Brute-force reference implementations written directly from the formulas.

These deliberately avoid the package's code paths (no shared helpers, plain
loops or full pairwise matrices) so agreement is meaningful.
"""

import itertools
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import linregress

EPS = np.finfo(float).eps


def amplitude(r):
    r = [float(v) for v in r]
    n = len(r)
    mu = math.fsum(r) / n
    mav = math.fsum(abs(v) for v in r) / n
    var = math.fsum(abs(v - mu) ** 2 for v in r) / (n - 1)
    rms = math.sqrt(math.fsum(v * v for v in r) / n)
    log_det = math.exp(math.fsum(math.log(max(abs(v), EPS)) for v in r) / n)
    wl = math.fsum(abs(r[i + 1] - r[i]) for i in range(n - 1))
    acc = math.sqrt(math.fsum((r[i + 1] - r[i]) ** 2 for i in range(n - 1)) / (n - 1))
    mfl = math.log(wl) if wl > 0 else math.log(EPS)
    return {
        "mav": mav, "var": var, "rms": rms, "log_det": log_det, "wl": wl,
        "std": math.sqrt(var), "acc": acc, "mfl": mfl,
        "iemg": math.fsum(abs(v) for v in r), "ssi": math.fsum(v * v for v in r),
    }


def sampen_counts(x, m, r):
    """(B, A) from full pairwise Chebyshev distance matrices."""
    x = np.asarray(x, dtype=float)
    nt = len(x) - m
    tm = sliding_window_view(x, m)[:nt]
    tm1 = sliding_window_view(x, m + 1)[:nt]
    dm = np.abs(tm[:, None, :] - tm[None, :, :]).max(axis=2)
    dm1 = np.abs(tm1[:, None, :] - tm1[None, :, :]).max(axis=2)
    iu = np.triu_indices(nt, k=1)
    return int((dm[iu] <= r).sum()), int((dm1[iu] <= r).sum())


def sample_entropy(x, m=3, r_frac=0.2):
    x = np.asarray(x, dtype=float)
    r = r_frac * float(np.std(x, ddof=1))
    b, a = sampen_counts(x, m, r)
    if a == 0 or b == 0:
        nt = len(x) - m
        return math.log((nt - 1) * nt / 2)
    return -math.log(a / b)


def higuchi(x, kmax=5):
    """Higuchi's procedure written out with 1-based indices."""
    x = [float(v) for v in x]
    N = len(x)
    X = lambda i: x[i - 1]
    lk = []
    for k in range(1, kmax + 1):
        lm = []
        for m in range(1, k + 1):
            top = (N - m) // k
            s = sum(abs(X(m + i * k) - X(m + (i - 1) * k)) for i in range(1, top + 1))
            lm.append(s * (N - 1) / (top * k) / k)
        lk.append(sum(lm) / k)
    ks = np.arange(1, kmax + 1)
    return float(linregress(np.log(1.0 / ks), np.log(lk)).slope)


def crossings(r):
    r = [float(v) for v in r]
    mu = sum(r) / len(r)
    zc = sum(1 for a, b in zip(r, r[1:]) if (a - mu) * (b - mu) < 0)
    ssc, last = 0, 0
    for a, b in zip(r, r[1:]):
        s = (b > a) - (b < a)
        if s == 0:
            continue
        if last and s != last:
            ssc += 1
        last = s
    return zc, ssc


def radial_rates(R, theta, t):
    n = len(R)
    pr = ps = 0.0
    for i in range(n - 1):
        dr = abs(R[i + 1] - R[i])
        dth = abs(theta[i + 1] - theta[i])
        dt = abs(t[i + 1] - t[i])
        if dth != 0:
            pr += dr / dth
        if dt != 0:
            ps += dr / dt
    return pr / n, ps / n


def ldp(points):
    """(index, size) maximising point-to-line distance, earliest on ties."""
    (x1, y1), (x2, y2) = points[0], points[-1]
    den = math.hypot(y2 - y1, x2 - x1)
    best_i, best_d = None, -1.0
    for i in range(1, len(points) - 1):
        x0, y0 = points[i]
        if den == 0:
            d = math.hypot(x0 - x1, y0 - y1)
        else:
            d = abs((y2 - y1) * x0 - (x2 - x1) * y0 + x2 * y1 - y2 * x1) / den
        if d > best_d:
            best_i, best_d = i, d
    return best_i, best_d


def ldp_exact_index(points):
    """Argmax for integer coordinates using exact integer cross products."""
    (x1, y1), (x2, y2) = points[0], points[-1]
    best_i, best = None, -1
    for i in range(1, len(points) - 1):
        x0, y0 = points[i]
        if (x1, y1) == (x2, y2):
            v = (x0 - x1) ** 2 + (y0 - y1) ** 2
        else:
            v = abs((x2 - x1) * (y0 - y1) - (y2 - y1) * (x0 - x1))
        if v > best:
            best_i, best = i, v
    return best_i


def mann_whitney_exact_p(a, b):
    """Two-sided exact p by enumerating every assignment of ranks."""
    m, n = len(a), len(b)
    ranks = np.argsort(np.argsort(np.concatenate([a, b]))) + 1
    ua = ranks[:m].sum() - m * (m + 1) / 2
    u = min(ua, m * n - ua)
    total = count = 0
    for pos in itertools.combinations(range(1, m + n + 1), m):
        ux = sum(pos) - m * (m + 1) / 2
        total += 1
        if min(ux, m * n - ux) <= u:
            count += 1
    return min(1.0, count / total)


def kruskal_permutation_p(groups, draws, rng):
    """Monte Carlo permutation p of the H statistic (no tie correction needed for continuous data)."""
    sizes = [len(g) for g in groups]
    allv = np.concatenate(groups)
    N = len(allv)

    def h(values):
        ranks = np.argsort(np.argsort(values)) + 1.0
        out, s = 0.0, 0
        for k in sizes:
            out += ranks[s:s + k].sum() ** 2 / k
            s += k
        return 12.0 / (N * (N + 1)) * out - 3 * (N + 1)

    h0 = h(allv)
    hits = 0
    for _ in range(draws):
        if h(rng.permutation(allv)) >= h0 - 1e-12:
            hits += 1
    return hits / draws
