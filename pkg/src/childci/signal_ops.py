"""Numerical primitives behind the drag, zoom and spiral feature tables.

Everything here is a pure function of numpy arrays. Units: pixels, seconds
for rates (px/s), milliseconds where a function takes raw sample times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import DomainError, Stroke

EPS = np.finfo(float).eps
TINY = np.finfo(float).tiny
FLAT_REL = 1e-9


@dataclass(frozen=True)
class RadialSeries:
    R: np.ndarray
    theta: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not (len(self.R) == len(self.theta) == len(self.t) >= 1):
            raise DomainError("radial series arrays must have equal length >= 1")

    def __len__(self):
        return len(self.R)


@dataclass(frozen=True)
class LdpResult:
    index: int
    size: float
    velocity: float = 0.0


@dataclass(frozen=True)
class AmplitudeStats:
    mav: float
    var: float
    rms: float
    log_det: float
    wl: float
    std: float
    acc: float
    mfl: float
    iemg: float
    ssi: float


def _points(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    return p.reshape(-1, 2)


def kinematic_profile(stroke_or_xy, t_ms=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample speed (px/s) and direction (rad in (-pi, pi]).

    Accepts a :class:`Stroke` or an ``(n, 2)`` array plus times in ms. Sample
    ``i`` describes the segment to ``i + 1``; the last sample repeats the
    previous value. Segments with zero elapsed time get speed 0.
    """
    if isinstance(stroke_or_xy, Stroke):
        xy, t_ms = stroke_or_xy.xy, stroke_or_xy.t
    else:
        xy, t_ms = _points(stroke_or_xy), np.asarray(t_ms, dtype=float)
    if len(xy) < 2:
        raise DomainError("kinematic profile needs >= 2 samples")
    d = np.diff(xy, axis=0)
    dt = np.diff(t_ms) / 1000.0
    dist = np.hypot(d[:, 0], d[:, 1])
    speed = np.divide(dist, dt, out=np.zeros_like(dist), where=dt > 0)
    direction = np.arctan2(d[:, 1], d[:, 0])
    direction[direction == -np.pi] = np.pi
    return np.append(speed, speed[-1]), np.append(direction, direction[-1])


def path_and_chord(points) -> tuple[float, float]:
    p = _points(points)
    if len(p) < 2:
        raise DomainError("path_and_chord needs >= 2 points")
    d = np.diff(p, axis=0)
    path = float(np.hypot(d[:, 0], d[:, 1]).sum())
    chord = float(math.hypot(*(p[-1] - p[0])))
    return path, chord


def _perp_distances(p: np.ndarray) -> np.ndarray:
    a, b = p[0], p[-1]
    ab = b - a
    n = math.hypot(ab[0], ab[1])
    rel = p - a
    if n == 0:
        return np.hypot(rel[:, 0], rel[:, 1])
    return np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / n


def largest_deviation_point(points, speeds=None) -> LdpResult:
    """Sample farthest (perpendicular) from the start-stop chord.

    Only interior samples compete; ties go to the earliest index. When
    ``speeds`` is given the LDP velocity is read from it.
    """
    p = _points(points)
    if len(p) < 3:
        raise DomainError("largest deviation point needs >= 3 points")
    d = _perp_distances(p)[1:-1]
    k = int(np.argmax(d)) + 1
    vel = float(speeds[k]) if speeds is not None else 0.0
    return LdpResult(k, float(d[k - 1]), vel)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def radial_transform(points, center, times_ms) -> RadialSeries:
    """Distance and unwrapped angle about ``center``; times converted to s."""
    p = _points(points)
    if len(p) < 1:
        raise DomainError("radial transform needs >= 1 point")
    rel = p - np.asarray(center, dtype=float)
    R = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    step = _wrap(np.diff(ang))
    # undefined angle at the centre contributes no rotation
    at_center = (R[1:] == 0) | (R[:-1] == 0)
    step[at_center] = 0.0
    theta = np.concatenate([[ang[0]], ang[0] + np.cumsum(step)])
    return RadialSeries(R, theta, np.asarray(times_ms, dtype=float) / 1000.0)


def amplitude_stats(series) -> AmplitudeStats:
    r = np.asarray(series, dtype=float)
    n = len(r)
    if n < 2:
        raise DomainError("amplitude stats need >= 2 values")
    a = np.abs(r)
    dif = np.abs(np.diff(r))
    var = float(((r - r.mean()) ** 2).sum() / (n - 1))
    wl = float(dif.sum())
    return AmplitudeStats(
        mav=float(a.mean()),
        var=var,
        rms=float(np.sqrt((r * r).mean())),
        log_det=float(np.exp(np.log(np.maximum(a, EPS)).mean())),
        wl=wl,
        std=float(np.sqrt(var)),
        acc=float(np.sqrt((dif * dif).sum() / (n - 1))),
        mfl=float(np.log(wl)) if wl > 0 else float(np.log(EPS)),
        iemg=float(a.sum()),
        ssi=float((r * r).sum()),
    )


def sample_entropy_counts(series, m: int = 3, r_frac: float = 0.2) -> tuple[int, int]:
    """Template match counts (B at length m, A at length m + 1)."""
    x = np.ascontiguousarray(series, dtype=np.float64)
    if len(x) < m + 2:
        raise DomainError(f"sample entropy needs >= {m + 2} values, got {len(x)}")
    r = r_frac * float(np.std(x, ddof=1))
    b, a = kernels.sampen_counts(x, m, r)
    return int(b), int(a)


def sample_entropy(series, m: int = 3, r_frac: float = 0.2) -> float:
    """SampEn with Chebyshev distance, self-matches excluded.

    Tolerance is ``r_frac`` times the sample std of the series. When either
    count is zero the result is capped at ``ln(B_max)``, the largest value a
    finite ratio could produce.
    """
    x = np.asarray(series, dtype=np.float64)
    b, a = sample_entropy_counts(x, m, r_frac)
    if a == 0 or b == 0:
        nt = len(x) - m
        return float(np.log(nt * (nt - 1) / 2.0))
    return float(-np.log(a / b))


def higuchi_fd(series, kmax: int = 5) -> float:
    x = np.ascontiguousarray(series, dtype=np.float64)
    if len(x) < 2 * kmax:
        raise DomainError(f"higuchi_fd needs >= {2 * kmax} values")
    L = kernels.higuchi_lengths(x, kmax)
    k = np.arange(1, kmax + 1, dtype=float)
    lx = np.log(1.0 / k)
    ly = np.log(np.maximum(L, TINY))
    lxm = lx.mean()
    return float(((lx - lxm) * (ly - ly.mean())).sum() / ((lx - lxm) ** 2).sum())


def crossings_and_slope_changes(series) -> tuple[int, int]:
    r = np.asarray(series, dtype=float)
    if len(r) < 3:
        raise DomainError("crossings need >= 3 values")
    s = np.sign(r - r.mean())
    zc = int(np.count_nonzero(s[:-1] * s[1:] < 0))
    slopes = np.sign(np.diff(r))
    slopes = slopes[slopes != 0]
    ssc = int(np.count_nonzero(slopes[:-1] != slopes[1:]))
    return zc, ssc


def radial_difference_rates(rs: RadialSeries) -> tuple[float, float]:
    """Mean |dR/dtheta| and |dR/dt|, summed over pairs and divided by N."""
    n = len(rs)
    if n < 2:
        raise DomainError("radial difference rates need >= 2 samples")
    dR = np.abs(np.diff(rs.R))
    dth = np.abs(np.diff(rs.theta))
    dt = np.abs(np.diff(rs.t))
    per_rad = np.divide(dR, dth, out=np.zeros_like(dR), where=dth > 0).sum() / n
    per_sec = np.divide(dR, dt, out=np.zeros_like(dR), where=dt > 0).sum() / n
    return float(per_rad), float(per_sec)


def _quartile_of(idx: int, n: int) -> int:
    bounds = np.cumsum([len(b) for b in np.array_split(np.arange(n), 4)])
    return int(np.searchsorted(bounds, idx, side="right")) + 1


def extrema_summary(series) -> tuple[int, int, int, int]:
    """Strict interior extrema counts and the index quarter of the global max/min.

    Steps smaller than ``FLAT_REL`` times the series magnitude count as flat,
    so rounding noise on a constant radius does not create extrema.
    """
    r = np.asarray(series, dtype=float)
    n = len(r)
    if n < 3:
        raise DomainError("extrema summary needs >= 3 values")
    d = np.diff(r)
    d[np.abs(d) <= FLAT_REL * np.abs(r).max()] = 0.0
    n_max = int(np.count_nonzero((d[:-1] > 0) & (d[1:] < 0)))
    n_min = int(np.count_nonzero((d[:-1] < 0) & (d[1:] > 0)))
    return n_max, n_min, _quartile_of(int(np.argmax(r)), n), _quartile_of(int(np.argmin(r)), n)
