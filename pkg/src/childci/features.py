"""Per-test feature extraction and test-completion rules.

Each ``extract_*`` function returns a :class:`FeatureVector` whose length
always equals the catalog entry for its test; values that cannot be computed
are stored as 0 with ``valid=False``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import signal_ops as so
from .model import (
    FeatureVector,
    InputKind,
    TargetKind,
    TestId,
    TestSession,
)

STD_DDOF = 1
ZOOM_DWELL_MS = 500.0
COVERAGE_THRESHOLD = 0.70
RASTER_SIZE = 256
BRUSH_RADIUS_PX = 8.0
MAX_MOLES = 4
SPIRAL_MIN_SAMPLES = 10
DEFAULT_LINE_WIDTH = 10.0


# -- catalog ---------------------------------------------------------------

@dataclass(frozen=True)
class FeatureDef:
    feature_id: str
    name: str
    source: str


def _defs(prefix: str, source: str, names: Sequence[tuple[str, str]]) -> tuple[FeatureDef, ...]:
    return tuple(FeatureDef(f"{prefix}{fid}", name, source) for fid, name in names)


TAP_FEATURES = _defs("t1_", "tap accuracy", [
    ("dist_mean", "Average distance between tap and centre of mole"),
    ("dist_std", "Standard deviation distance between tap and centre of mole"),
    ("dist_max", "Maximum distance between tap and centre of mole"),
    ("dist_min", "Minimum distance between tap and centre of mole"),
    ("moles_touched", "Number of moles touched"),
])

_DRAG_QUANTITIES = [
    ("ldp_size", "LDP size"),
    ("ldp_velocity", "LDP velocity"),
    ("start_ldp_latency", "start-to-LDP latency (ms)"),
    ("start_ldp_length", "straight start-to-LDP length"),
    ("start_ldp_direction", "start-to-LDP direction"),
    ("start_stop_latency", "start-to-stop latency (ms)"),
    ("start_stop_length", "straight start-to-stop length"),
    ("start_stop_direction", "start-to-stop direction"),
    ("ldp_stop_latency", "LDP-to-stop latency (ms)"),
    ("ldp_stop_length", "straight LDP-to-stop length"),
    ("ldp_stop_direction", "LDP-to-stop direction"),
    ("start_velocity", "start point velocity"),
    ("stop_velocity", "stop point velocity"),
]
DRAG_FEATURES = _defs("t2_", "drag kinematics", [
    pair for key, label in _DRAG_QUANTITIES
    for pair in ((f"{key}_mean", f"Average {label}"), (f"{key}_std", f"Standard deviation {label}"))
] + [
    ("carrot_first_down", "The carrot is touched in the first pen-down"),
    ("carrot_in_rabbit", "Carrot ends up in the rabbit (target)"),
])

ZOOM_FEATURES = _defs("zoom_", "zoom control", [
    ("time_on_target", "Total time on target (ms)"),
    ("reaction_two_fingers", "Reaction time until using 2 fingers (ms)"),
    ("scale_max", "Maximum scale"),
    ("scale_min", "Minimum scale"),
    ("scale_mean", "Average scale"),
    ("scale_std", "Standard deviation scale"),
    ("n_two_finger", "# samples using 2 fingers"),
    ("n_one_finger", "# samples using 1 finger"),
    ("fc_vx_mean", "Average Vx FC"),
    ("fc_vy_mean", "Average Vy FC"),
    ("sc_vx_mean", "Average Vx SC"),
    ("sc_vy_mean", "Average Vy SC"),
    ("fc_length", "FC trajectory length"),
    ("sc_length", "SC trajectory length"),
    ("fc_velocity", "FC trajectory velocity"),
    ("sc_velocity", "SC trajectory velocity"),
    ("start_distance", "Start distance between both fingers"),
    ("stop_distance", "Stop distance between both fingers"),
    ("fc_straight", "FC straight length"),
    ("sc_straight", "SC straight length"),
])

SPIRAL_FEATURES = _defs("t5_", "spiral radial series", [
    ("length", "Spiral length"),
    ("step_mean", "Average (distance between points)"),
    ("step_std", "STD (distance between points)"),
    ("response_time", "Response time (s)"),
    ("sampen", "Sample entropy (m=3, r=0.2)"),
    ("mav", "Mean absolute value"),
    ("var", "Variance"),
    ("rms", "Root mean square"),
    ("log", "Log detector"),
    ("wl", "Waveform length"),
    ("std", "Standard deviation"),
    ("acc", "Difference absolute standard deviation"),
    ("fd", "Higuchi fractal dimension (kmax=5)"),
    ("mfl", "Maximum fractal length"),
    ("iemg", "Integrated EMG"),
    ("ssi", "Simple square integral"),
    ("zc", "Zero crossings about the mean"),
    ("ssc", "Slope sign changes"),
    ("rad_per_radian", "Mean radial difference per radian"),
    ("rad_per_second", "Mean radial difference per second"),
    ("n_max", "# maximums in R"),
    ("n_min", "# minimums in R"),
    ("q_max", "Global maximum quartile of R"),
    ("q_min", "Global minimum quartile of R"),
])

_GLOBAL_NAMES = [
    # time
    ("duration_ms", "Session duration (ms)"),
    ("n_strokes", "Number of strokes"),
    ("stroke_dur_mean", "Mean stroke duration (ms)"),
    ("stroke_dur_std", "Std stroke duration (ms)"),
    ("gap_mean", "Mean inter-stroke gap (ms)"),
    ("pendown_ratio", "Pen-down time / session duration"),
    # kinematic
    ("speed_mean", "Mean speed (px/s)"),
    ("speed_std", "Std speed (px/s)"),
    ("speed_max", "Max speed (px/s)"),
    ("acc_mean", "Mean acceleration magnitude (px/s^2)"),
    ("acc_std", "Std acceleration magnitude (px/s^2)"),
    ("acc_max", "Max acceleration magnitude (px/s^2)"),
    ("jerk_mean", "Mean jerk magnitude (px/s^3)"),
    ("jerk_std", "Std jerk magnitude (px/s^3)"),
    ("jerk_max", "Max jerk magnitude (px/s^3)"),
    # direction
    *[(f"dir_bin{i}", f"Direction histogram bin {i} (of 8)") for i in range(8)],
    ("turn_mean", "Mean absolute turning angle (rad)"),
    # geometry
    ("path_length", "Total path length (px)"),
    ("bbox_w", "Bounding box width (px)"),
    ("bbox_h", "Bounding box height (px)"),
    ("bbox_aspect", "Bounding box aspect (w/h)"),
    ("path_chord_ratio", "Mean path/chord ratio over strokes"),
    # pressure
    ("pressure_mean", "Mean pressure"),
    ("pressure_std", "Std pressure"),
    ("pressure_max", "Max pressure"),
    ("pressure_min", "Min pressure"),
    ("pressure_range", "Pressure range"),
]
GLOBAL_FEATURES = _defs("g_", "HCI family: time, kinematic, direction, geometry, pressure", _GLOBAL_NAMES)
PRESSURE_SLICE = slice(len(GLOBAL_FEATURES) - 5, len(GLOBAL_FEATURES))

DRAWING_FEATURES = _defs("t6_", "HCI family (drawing)", _GLOBAL_NAMES[:-1]) + (
    FeatureDef("t6_coverage", "Fraction of the tree surface coloured", "drawing coverage"),
)

TEST_FEATURES = {
    TestId.T1: TAP_FEATURES,
    TestId.T2: DRAG_FEATURES,
    TestId.T3: ZOOM_FEATURES,
    TestId.T4: ZOOM_FEATURES,
    TestId.T5: SPIRAL_FEATURES,
    TestId.T6: DRAWING_FEATURES,
}


def catalog(test_id, with_global: bool = True) -> tuple[FeatureDef, ...]:
    """Ordered feature definitions used as the classifier input for a test.

    Tests 1-5 carry their table features followed by the global family;
    Test 6 already is the global family (with coverage in the last slot).
    """
    test_id = TestId(test_id)
    own = TEST_FEATURES[test_id]
    if with_global and test_id is not TestId.T6:
        return own + GLOBAL_FEATURES
    return own


def feature_ids(test_id, with_global: bool = True) -> list[str]:
    return [d.feature_id for d in catalog(test_id, with_global)]


def distinct_definition_count() -> int:
    """Number of distinct test-specific definitions (zoom set counted once)."""
    seen = {}
    for defs in TEST_FEATURES.values():
        for d in defs:
            seen[d.feature_id] = d
    return len(seen)


# -- helpers ---------------------------------------------------------------

def _std(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.std(a, ddof=STD_DDOF)) if len(a) > STD_DDOF else 0.0


def _circ_mean(angles) -> float:
    a = np.asarray(angles, dtype=float)
    return float(math.atan2(np.sin(a).mean(), np.cos(a).mean()))


def _circ_std(angles) -> float:
    a = np.asarray(angles, dtype=float)
    if len(a) < 2:
        return 0.0
    rbar = math.hypot(np.sin(a).mean(), np.cos(a).mean())
    return float(math.sqrt(max(0.0, -2.0 * math.log(max(rbar, 1e-300)))))


class _Builder:
    """Accumulates (value, valid) pairs in catalog order."""

    def __init__(self, test_id: TestId, n: int):
        self.test_id = test_id
        self.n = n
        self.values: list[float] = []
        self.valid: list[bool] = []

    def add(self, value, valid=True):
        ok = bool(valid) and value is not None and np.isfinite(value)
        self.values.append(float(value) if ok else 0.0)
        self.valid.append(ok)

    def skip(self, k=1):
        for _ in range(k):
            self.add(0.0, False)

    def build(self) -> FeatureVector:
        if len(self.values) != self.n:
            raise AssertionError(f"{self.test_id.value}: built {len(self.values)} of {self.n} features")
        return FeatureVector(self.test_id, self.values, self.valid)


def _active_target(session: TestSession, kind: TargetKind, t: float):
    """Latest target of ``kind`` spawned at or before ``t``."""
    best = None
    for ev in session.targets:
        if ev.kind is kind and ev.t <= t:
            best = ev
    return best


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# -- test 1 ----------------------------------------------------------------

def tap_hits(session: TestSession) -> tuple[list[float], int]:
    """Tap-to-mole distances and the number of distinct moles hit (uncapped)."""
    moles = session.targets_of(TargetKind.MOLE_SPAWN)
    dists = []
    hit = set()
    for st in session.strokes:
        down = st.samples[0]
        active = None
        for idx, ev in enumerate(moles):
            if ev.t <= down.t:
                active = (idx, ev)
        if active is None:
            continue
        idx, ev = active
        d = _dist((down.x, down.y), ev.center)
        dists.append(d)
        if d <= ev.radius:
            hit.add(idx)
    return dists, len(hit)


def extract_test1(session: TestSession) -> FeatureVector:
    b = _Builder(TestId.T1, len(TAP_FEATURES))
    dists, touched = tap_hits(session)
    if not dists:
        return FeatureVector.invalid(TestId.T1, len(TAP_FEATURES))
    b.add(np.mean(dists))
    b.add(_std(dists))
    b.add(np.max(dists))
    b.add(np.min(dists))
    b.add(min(touched, MAX_MOLES))
    return b.build()


# -- test 2 ----------------------------------------------------------------

def drag_stroke_quantities(stroke) -> list[float]:
    """The 13 per-stroke drag quantities, in catalog order."""
    xy, t = stroke.xy, stroke.t
    speed, _ = so.kinematic_profile(xy, t)
    ldp = so.largest_deviation_point(xy, speed)
    k = ldp.index
    s, l, e = xy[0], xy[k], xy[-1]
    ang = lambda a, b: math.atan2(b[1] - a[1], b[0] - a[0])
    return [
        ldp.size, ldp.velocity,
        t[k] - t[0], _dist(s, l), ang(s, l),
        t[-1] - t[0], _dist(s, e), ang(s, e),
        t[-1] - t[k], _dist(l, e), ang(l, e),
        speed[0], speed[-1],
    ]


_DIRECTION_COLS = {4, 7, 10}


def carrot_flags(session: TestSession) -> tuple[Optional[bool], Optional[bool]]:
    carrots = session.targets_of(TargetKind.CARROT_POS)
    rabbits = session.targets_of(TargetKind.RABBIT_POS)
    first_down = None
    if session.strokes:
        s0 = session.strokes[0].samples[0]
        carrot = _active_target(session, TargetKind.CARROT_POS, s0.t) or (carrots[0] if carrots else None)
        if carrot is not None:
            first_down = _dist((s0.x, s0.y), carrot.center) <= carrot.radius
    in_rabbit = None
    if carrots and rabbits:
        in_rabbit = _dist(carrots[-1].center, rabbits[-1].center) <= rabbits[-1].radius
    return first_down, in_rabbit


def extract_test2(session: TestSession) -> FeatureVector:
    b = _Builder(TestId.T2, len(DRAG_FEATURES))
    rows = [drag_stroke_quantities(st) for st in session.strokes if len(st) >= 3]
    if rows:
        q = np.array(rows, dtype=float)
        for c in range(q.shape[1]):
            if c in _DIRECTION_COLS:
                b.add(_circ_mean(q[:, c]))
                b.add(_circ_std(q[:, c]))
            else:
                b.add(q[:, c].mean())
                b.add(_std(q[:, c]))
    else:
        b.skip(26)
    first_down, in_rabbit = carrot_flags(session)
    b.add(float(bool(first_down)), first_down is not None)
    b.add(float(bool(in_rabbit)), in_rabbit is not None)
    return b.build()


# -- tests 3 and 4 ---------------------------------------------------------

def time_on_target(session: TestSession) -> float:
    ui = session.ui_states
    total = 0.0
    for i, ev in enumerate(ui):
        if ev.on_target:
            end = ui[i + 1].t if i + 1 < len(ui) else max(session.duration_ms, ev.t)
            total += end - ev.t
    return total


def on_target_intervals(session: TestSession) -> list[float]:
    ui = session.ui_states
    out, start = [], None
    for i, ev in enumerate(ui):
        if ev.on_target and start is None:
            start = ev.t
        elif not ev.on_target and start is not None:
            out.append(ev.t - start)
            start = None
    if start is not None:
        out.append(max(session.duration_ms, ui[-1].t) - start)
    return out


def _finger_pair(session: TestSession):
    """(first curve, second curve, overlap start, overlap end) of the first
    pair of strokes on different pointers that are down simultaneously."""
    best = None
    strokes = session.strokes
    for i, a in enumerate(strokes):
        for b in strokes[i + 1:]:
            if a.pointer_id == b.pointer_id:
                continue
            lo, hi = max(a.start_t, b.start_t), min(a.end_t, b.end_t)
            if lo <= hi and (best is None or lo < best[2]):
                first, second = (a, b) if (a.start_t, a.pointer_id) <= (b.start_t, b.pointer_id) else (b, a)
                best = (first, second, lo, hi)
    return best


def _hold(stroke, times):
    idx = np.searchsorted(stroke.t, times, side="right") - 1
    return stroke.xy[np.clip(idx, 0, len(stroke) - 1)]


def finger_counts(session: TestSession) -> tuple[int, int]:
    """Sample events taken while >= 2 pointers are down, and while exactly 1 is."""
    if not session.strokes:
        return 0, 0
    starts = np.array([st.start_t for st in session.strokes])
    ends = np.array([st.end_t for st in session.strokes])
    t = np.concatenate([st.t for st in session.strokes])
    active = ((starts[None, :] <= t[:, None]) & (t[:, None] <= ends[None, :])).sum(axis=1)
    return int(np.count_nonzero(active >= 2)), int(np.count_nonzero(active == 1))


def _mean_velocity(stroke) -> tuple[float, float]:
    if len(stroke) < 2:
        return 0.0, 0.0
    d = np.diff(stroke.xy, axis=0)
    dt = np.diff(stroke.t) / 1000.0
    ok = dt > 0
    if not ok.any():
        return 0.0, 0.0
    return float((d[ok, 0] / dt[ok]).mean()), float((d[ok, 1] / dt[ok]).mean())


def extract_zoom(session: TestSession) -> FeatureVector:
    if session.test_id not in (TestId.T3, TestId.T4):
        raise ValueError(f"zoom features need a T3/T4 session, got {session.test_id.value}")
    b = _Builder(session.test_id, len(ZOOM_FEATURES))
    has_ui = bool(session.ui_states)
    b.add(time_on_target(session), has_ui)
    pair = _finger_pair(session)
    b.add(pair[2] if pair else 0.0, pair is not None)

    dists = None
    if pair:
        fc, sc, lo, hi = pair
        ts = np.unique(np.concatenate([fc.t, sc.t]))
        ts = ts[(ts >= lo) & (ts <= hi)]
        if len(ts) == 0:
            ts = np.array([lo])
        pa, pb = _hold(fc, ts), _hold(sc, ts)
        dists = np.hypot(*(pa - pb).T)
    if has_ui:
        scale = np.array([u.scale for u in session.ui_states])
    elif dists is not None and dists[0] > 0:
        scale = dists / dists[0]
    else:
        scale = None
    if scale is not None:
        b.add(scale.max()); b.add(scale.min()); b.add(scale.mean()); b.add(_std(scale))
    else:
        b.skip(4)
    n2, n1 = finger_counts(session)
    b.add(n2)
    b.add(n1)
    if pair:
        fc, sc = pair[0], pair[1]
        for st in (fc, sc):
            vx, vy = _mean_velocity(st)
            b.add(vx); b.add(vy)
        lengths = []
        for st in (fc, sc):
            lengths.append(so.path_and_chord(st.xy)[0] if len(st) >= 2 else 0.0)
            b.add(lengths[-1])
        for st, ln in zip((fc, sc), lengths):
            dur = (st.end_t - st.start_t) / 1000.0
            b.add(ln / dur if dur > 0 else 0.0)
        b.add(dists[0]); b.add(dists[-1])
        for st in (fc, sc):
            b.add(so.path_and_chord(st.xy)[1] if len(st) >= 2 else 0.0)
    else:
        b.skip(12)
    return b.build()


# -- test 5 ----------------------------------------------------------------

def _concat(session: TestSession) -> tuple[np.ndarray, np.ndarray]:
    if not session.strokes:
        return np.zeros((0, 2)), np.zeros(0)
    return (np.concatenate([st.xy for st in session.strokes]),
            np.concatenate([st.t for st in session.strokes]))


def extract_test5(session: TestSession) -> FeatureVector:
    n = len(SPIRAL_FEATURES)
    xy, t = _concat(session)
    refs = session.targets_of(TargetKind.SPIRAL_REF)
    if len(xy) < SPIRAL_MIN_SAMPLES or not refs:
        return FeatureVector.invalid(TestId.T5, n)
    b = _Builder(TestId.T5, n)
    steps = np.concatenate([np.hypot(*np.diff(st.xy, axis=0).T) for st in session.strokes])
    b.add(steps.sum())
    b.add(steps.mean() if len(steps) else 0.0, len(steps) > 0)
    b.add(_std(steps), len(steps) > 0)
    b.add(session.strokes[0].start_t / 1000.0)

    rs = so.radial_transform(xy, refs[0].center, t)
    R = rs.R
    b.add(so.sample_entropy(R, 3, 0.2))
    amp = so.amplitude_stats(R)
    b.add(amp.mav); b.add(amp.var); b.add(amp.rms); b.add(amp.log_det)
    b.add(amp.wl); b.add(amp.std); b.add(amp.acc)
    b.add(so.higuchi_fd(R, 5))
    b.add(amp.mfl); b.add(amp.iemg); b.add(amp.ssi)
    zc, ssc = so.crossings_and_slope_changes(R)
    b.add(zc); b.add(ssc)
    per_rad, per_sec = so.radial_difference_rates(rs)
    b.add(per_rad); b.add(per_sec)
    for v in so.extrema_summary(R):
        b.add(v)
    return b.build()


# -- global family ---------------------------------------------------------

def _derivatives(stroke):
    """Speed, acceleration and jerk magnitudes of one stroke (px/s^k)."""
    t = stroke.t / 1000.0
    xy = stroke.xy
    keep = np.concatenate([[True], np.diff(t) > 0])
    t, xy = t[keep], xy[keep]
    out = []
    if len(t) < 2:
        return [np.zeros(0)] * 3
    v = np.diff(xy, axis=0) / np.diff(t)[:, None]
    tv = (t[1:] + t[:-1]) / 2
    out.append(np.hypot(v[:, 0], v[:, 1]))
    for _ in range(2):
        if len(tv) < 2:
            out.append(np.zeros(0))
            continue
        dt = np.diff(tv)
        v = np.diff(v, axis=0) / dt[:, None]
        tv = (tv[1:] + tv[:-1]) / 2
        out.append(np.hypot(v[:, 0], v[:, 1]))
    return out


def _union_length(spans) -> float:
    total, cur_lo, cur_hi = 0.0, None, None
    for lo, hi in sorted(spans):
        if cur_hi is None or lo > cur_hi:
            if cur_hi is not None:
                total += cur_hi - cur_lo
            cur_lo, cur_hi = lo, hi
        else:
            cur_hi = max(cur_hi, hi)
    if cur_hi is not None:
        total += cur_hi - cur_lo
    return total


def _global_values(session: TestSession, test_id: TestId, n_out: int) -> _Builder:
    b = _Builder(test_id, n_out)
    strokes = session.strokes
    # time
    dur = float(session.duration_ms)
    b.add(dur)
    b.add(len(strokes))
    sd = [st.end_t - st.start_t for st in strokes]
    b.add(np.mean(sd) if sd else 0.0, bool(sd))
    b.add(_std(sd), bool(sd))
    ordered = sorted(strokes, key=lambda st: st.start_t)
    gaps = [b2.start_t - a.end_t for a, b2 in zip(ordered, ordered[1:])]
    b.add(np.mean(gaps) if gaps else 0.0, bool(gaps))
    b.add(_union_length([(st.start_t, st.end_t) for st in strokes]) / dur if dur > 0 else 0.0, dur > 0)
    # kinematic
    parts = [_derivatives(st) for st in strokes if len(st) >= 3]
    for k in range(3):
        vals = np.concatenate([p[k] for p in parts]) if parts else np.zeros(0)
        ok = len(vals) > 0
        b.add(vals.mean() if ok else 0.0, ok)
        b.add(_std(vals), ok)
        b.add(vals.max() if ok else 0.0, ok)
    # direction
    dirs, turns = [], []
    for st in strokes:
        if len(st) < 2:
            continue
        d = np.diff(st.xy, axis=0)
        moving = np.hypot(d[:, 0], d[:, 1]) > 0
        a = np.arctan2(d[moving, 1], d[moving, 0])
        dirs.append(a)
        if len(a) >= 2:
            turns.append(np.abs(so._wrap(np.diff(a))))
    dirs = np.concatenate(dirs) if dirs else np.zeros(0)
    if len(dirs):
        bins = np.clip(((dirs + np.pi) // (np.pi / 4)).astype(int), 0, 7)
        hist = np.bincount(bins, minlength=8) / len(dirs)
        for h in hist:
            b.add(h)
    else:
        b.skip(8)
    turns = np.concatenate(turns) if turns else np.zeros(0)
    b.add(turns.mean() if len(turns) else 0.0, len(turns) > 0)
    # geometry
    xy, _ = _concat(session)
    path = sum(so.path_and_chord(st.xy)[0] for st in strokes if len(st) >= 2)
    b.add(path, len(xy) > 0)
    if len(xy):
        w, h = np.ptp(xy[:, 0]), np.ptp(xy[:, 1])
        b.add(w); b.add(h); b.add(w / h if h > 0 else 0.0, h > 0)
    else:
        b.skip(3)
    ratios = []
    for st in strokes:
        if len(st) >= 2:
            p, c = so.path_and_chord(st.xy)
            if c > 0:
                ratios.append(p / c)
    b.add(np.mean(ratios) if ratios else 0.0, bool(ratios))
    # pressure
    pr = np.concatenate([st.pressure for st in strokes]) if strokes else np.zeros(0)
    ok = len(pr) > 0 and not (session.input is InputKind.FINGER and np.ptp(pr) == 0)
    if ok:
        b.add(pr.mean()); b.add(_std(pr)); b.add(pr.max()); b.add(pr.min()); b.add(np.ptp(pr))
    else:
        b.skip(5)
    return b


def extract_global_hci(session: TestSession) -> FeatureVector:
    n = len(GLOBAL_FEATURES)
    if not any(len(st) >= 3 for st in session.strokes):
        return FeatureVector.invalid(session.test_id, n)
    return _global_values(session, session.test_id, n).build()


# -- test 6 ----------------------------------------------------------------

def _inside_polygon(px, py, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule point-in-polygon for arrays of points."""
    inside = np.zeros(px.shape, dtype=bool)
    x0, y0 = poly[-1]
    for x1, y1 in poly:
        cond = (y1 > py) != (y0 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x0 - x1) * (py - y1) / (y0 - y1) + x1
        inside ^= cond & (px < xint)
        x0, y0 = x1, y1
    return inside


def tree_raster(polygon, size: int = RASTER_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres (n, 2) of the size x size grid over the polygon's bbox,
    and the mask of cells inside the polygon."""
    poly = np.asarray(polygon, dtype=float)
    (x0, y0), (x1, y1) = poly.min(axis=0), poly.max(axis=0)
    xs = x0 + (np.arange(size) + 0.5) * (x1 - x0) / size
    ys = y0 + (np.arange(size) + 0.5) * (y1 - y0) / size
    gx, gy = np.meshgrid(xs, ys)
    centres = np.column_stack([gx.ravel(), gy.ravel()])
    return centres, _inside_polygon(centres[:, 0], centres[:, 1], poly)


def coloring_coverage(session: TestSession, size: int = RASTER_SIZE,
                      brush: float = BRUSH_RADIUS_PX) -> Optional[float]:
    outline = session.targets_of(TargetKind.TREE_OUTLINE)
    if not outline:
        return None
    centres, inside = tree_raster(outline[0].points, size)
    n_in = int(inside.sum())
    if n_in == 0:
        return None
    xy, _ = _concat(session)
    if len(xy) == 0:
        return 0.0
    d, _ = cKDTree(xy).query(centres[inside], k=1, distance_upper_bound=brush)
    return float(np.count_nonzero(d <= brush) / n_in)


def extract_test6(session: TestSession) -> FeatureVector:
    n = len(DRAWING_FEATURES)
    if not any(len(st) >= 3 for st in session.strokes):
        return FeatureVector.invalid(TestId.T6, n)
    b = _global_values(session, TestId.T6, len(GLOBAL_FEATURES))
    b.values, b.valid = b.values[:n - 1], b.valid[:n - 1]
    b.n = n
    cov = coloring_coverage(session)
    b.add(cov if cov is not None else 0.0, cov is not None)
    return b.build()


# -- dispatch --------------------------------------------------------------

EXTRACTORS: dict[TestId, Callable[[TestSession], FeatureVector]] = {
    TestId.T1: extract_test1,
    TestId.T2: extract_test2,
    TestId.T3: extract_zoom,
    TestId.T4: extract_zoom,
    TestId.T5: extract_test5,
    TestId.T6: extract_test6,
}


def extract_features(session: TestSession, with_global: bool = True) -> FeatureVector:
    """Full classifier input for a session, matching :func:`catalog`."""
    own = EXTRACTORS[session.test_id](session)
    if not with_global or session.test_id is TestId.T6:
        return own
    g = extract_global_hci(session)
    return FeatureVector(session.test_id, np.concatenate([own.values, g.values]),
                         np.concatenate([own.valid, g.valid]))


def feature_matrix(dataset, test_id, with_global: bool = True):
    """(child_ids, X, valid, group indices) for subjects that have ``test_id``."""
    test_id = TestId(test_id)
    ids, rows, masks, y = [], [], [], []
    for s in dataset.subjects:
        sess = s.sessions.get(test_id)
        if sess is None:
            continue
        fv = extract_features(sess, with_global)
        ids.append(s.child_id)
        rows.append(fv.values)
        masks.append(fv.valid)
        y.append(s.group.index)
    n = len(catalog(test_id, with_global))
    X = np.array(rows, dtype=float).reshape(-1, n)
    V = np.array(masks, dtype=bool).reshape(-1, n)
    return ids, X, V, np.array(y, dtype=np.int64)


def export_feature_csv(dataset, test_id, path, with_global: bool = True, header_lines: Iterable[str] = ()):
    """Write the feature matrix and a ``.valid.csv`` sidecar; returns both paths."""
    test_id = TestId(test_id)
    ids, X, V, _ = feature_matrix(dataset, test_id, with_global)
    cols = feature_ids(test_id, with_global)
    path = Path(path)
    side = path.with_name(path.stem + ".valid.csv")
    for target, data, fmt in ((path, X, repr), (side, V, lambda v: str(int(v)))):
        with open(target, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["child_id", "test_id", *cols])
            for cid, row in zip(ids, data):
                w.writerow([cid, test_id.value, *(fmt(float(v)) if fmt is repr else fmt(v) for v in row)])
    return path, side


# -- completion ------------------------------------------------------------

def _spiral_done(session: TestSession) -> bool:
    refs = session.targets_of(TargetKind.SPIRAL_REF)
    xy, _ = _concat(session)
    if not refs or len(xy) == 0:
        return False
    ref = refs[0]
    width = ref.radius if ref.radius is not None else DEFAULT_LINE_WIDTH
    end = np.asarray(ref.points[-1])
    return bool((np.hypot(*(xy - end).T) <= 2 * width).any())


def completion_flag(session: TestSession) -> bool:
    tid = session.test_id
    if tid is TestId.T1:
        return tap_hits(session)[1] >= MAX_MOLES
    if tid is TestId.T2:
        return bool(carrot_flags(session)[1])
    if tid in (TestId.T3, TestId.T4):
        if finger_counts(session)[0] == 0:
            return False
        return any(d >= ZOOM_DWELL_MS for d in on_target_intervals(session))
    if tid is TestId.T5:
        return _spiral_done(session)
    cov = coloring_coverage(session)
    return cov is not None and cov >= COVERAGE_THRESHOLD


@dataclass(frozen=True)
class CompletionRow:
    age_years: int
    test_id: TestId
    completed_fraction: float
    n_children: int


@dataclass(frozen=True)
class CompletionTable:
    rows: tuple[CompletionRow, ...]

    def fraction(self, age_years: int, test_id) -> float:
        for r in self.rows:
            if r.age_years == age_years and r.test_id is TestId(test_id):
                return r.completed_fraction
        raise KeyError((age_years, test_id))


def completion_report(dataset) -> CompletionTable:
    tally: dict[tuple[int, TestId], list[int]] = {}
    for s in dataset.subjects:
        year = s.age_months // 12
        for tid, sess in s.sessions.items():
            c = tally.setdefault((year, tid), [0, 0])
            c[0] += int(completion_flag(sess))
            c[1] += 1
    rows = tuple(CompletionRow(y, tid, done / n, n)
                 for (y, tid), (done, n) in sorted(tally.items(), key=lambda kv: (kv[0][0], kv[0][1].index)))
    return CompletionTable(rows)
