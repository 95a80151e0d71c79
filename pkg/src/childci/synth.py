"""Seeded synthetic cohorts for exercising the pipeline end to end.

Motor ability is a piecewise-linear function of age (``ANCHORS``). Every
session additionally draws a session-level age offset (``session_jitter_months``)
in :func:`generate_cohort`, which models day-to-day and test-to-test variation
and keeps the age groups separable but overlapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .ingest import Dataset
from .model import (
    GROUP_MONTHS,
    MAX_AGE_MONTHS,
    MIN_AGE_MONTHS,
    TIME_LIMIT_MS,
    Action,
    AgeGroup,
    DomainError,
    InputKind,
    Stroke,
    SubjectRecord,
    TargetEvent,
    TargetKind,
    TestId,
    TestSession,
    TouchSample,
    UiStateEvent,
)

FRAME_MS = 1000.0 / 60.0
SCREEN = (1280, 800)

# value at 12 months, value at 96 months
ANCHORS: Mapping[str, tuple[float, float]] = MappingProxyType({
    "reaction_mean_ms": (2500.0, 600.0),
    "reaction_std_ms": (120.0, 30.0),
    "tremor_amp_px": (6.0, 1.0),
    "tremor_freq_hz": (4.0, 8.0),
    "path_noise_px": (10.0, 2.0),
    "speed_px_s": (80.0, 400.0),
    # pinching emerges around the third year; (age, value) knots
    "two_finger_skill": ((12.0, 0.02), (24.0, 0.05), (36.0, 0.5), (48.0, 0.9), (96.0, 0.98)),
    "pressure_mean": (0.75, 0.45),
    "complete_T1": (0.55, 1.0),
    "complete_T2": (0.45, 1.0),
    "complete_T3": (0.5, 1.0),
    "complete_T4": (0.5, 1.0),
    "complete_T5": (0.15, 0.95),
    "complete_T6": (0.10, 0.90),
})
ANCHOR_AGES = (MIN_AGE_MONTHS, MAX_AGE_MONTHS)


@dataclass(frozen=True)
class MotorProfile:
    age_months: float
    reaction_mean_ms: float
    reaction_std_ms: float
    tremor_amp_px: float
    tremor_freq_hz: float
    path_noise_px: float
    speed_px_s: float
    two_finger_skill: float
    pressure_mean: float
    completion_prob: Mapping[TestId, float]

    def __post_init__(self):
        for name in ("reaction_mean_ms", "reaction_std_ms", "tremor_amp_px", "tremor_freq_hz",
                     "path_noise_px", "speed_px_s", "two_finger_skill", "pressure_mean"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        probs = {TestId(k): float(v) for k, v in dict(self.completion_prob).items()}
        if not 0 <= self.two_finger_skill <= 1 or any(not 0 <= p <= 1 for p in probs.values()):
            raise DomainError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "completion_prob", MappingProxyType(probs))


def _interp(age: float, anchor_ages: Sequence[float], vals) -> float:
    """Linear interpolation over (v_min_age, v_max_age) or explicit (age, value) knots."""
    vals = np.asarray(vals, dtype=float)
    if vals.ndim == 2:
        return float(np.interp(age, vals[:, 0], vals[:, 1]))
    return float(np.interp(age, anchor_ages, vals))


def default_profile(age_months: float, anchors: Optional[Mapping[str, Sequence[float]]] = None,
                    anchor_ages: Sequence[float] = ANCHOR_AGES) -> MotorProfile:
    """Interpolate the motor anchors at ``age_months`` (12..96)."""
    if not MIN_AGE_MONTHS <= age_months <= MAX_AGE_MONTHS:
        raise DomainError(f"age_months={age_months} outside [{MIN_AGE_MONTHS}, {MAX_AGE_MONTHS}]")
    anchors = dict(ANCHORS if anchors is None else anchors)
    v = {k: _interp(age_months, anchor_ages, vals) for k, vals in anchors.items()}
    return MotorProfile(
        age_months=float(age_months),
        reaction_mean_ms=v["reaction_mean_ms"],
        reaction_std_ms=v["reaction_std_ms"],
        tremor_amp_px=v["tremor_amp_px"],
        tremor_freq_hz=v["tremor_freq_hz"],
        path_noise_px=v["path_noise_px"],
        speed_px_s=v["speed_px_s"],
        two_finger_skill=v["two_finger_skill"],
        pressure_mean=v["pressure_mean"],
        completion_prob={t: v[f"complete_{t.value}"] for t in TestId},
    )


# -- trajectory helpers ----------------------------------------------------

def _frames(t0: float, n: int) -> np.ndarray:
    return np.round(t0 + np.arange(n) * FRAME_MS)


def _wobble(rng, n: int, sd: float) -> np.ndarray:
    """Smooth zero-mean noise with standard deviation ``sd``."""
    if n == 0 or sd == 0:
        return np.zeros(n)
    w = rng.normal(size=n + 20)
    alpha = 0.15
    out = np.empty_like(w)
    acc = 0.0
    for i, v in enumerate(w):
        acc = (1 - alpha) * acc + alpha * v
        out[i] = acc
    out = out[20:]
    s = out.std()
    return out / s * sd if s > 0 else out


def _min_jerk(n: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    return 10 * s ** 3 - 15 * s ** 4 + 6 * s ** 5


def _reaction(rng, p: MotorProfile) -> float:
    return max(150.0, rng.normal(p.reaction_mean_ms, p.reaction_std_ms))


def _stroke(t, xy, pointer=0, pressure=None) -> Stroke:
    n = len(t)
    if pressure is None:
        pressure = np.ones(n)
    acts = [Action.DOWN] + [Action.MOVE] * (n - 2) + [Action.UP] if n > 1 else [Action.DOWN]
    samples = tuple(
        TouchSample(t=float(t[i]), x=float(round(xy[i, 0], 2)), y=float(round(xy[i, 1], 2)),
                    pressure=float(round(min(1.0, max(0.0, pressure[i])), 4)),
                    pointer_id=pointer, action=acts[i])
        for i in range(n)
    )
    return Stroke(pointer, samples)


def _path(rng, p: MotorProfile, a, b, t0: float, speed: Optional[float] = None, bow: float = 0.0):
    """Frames, points for a reach from ``a`` to ``b`` with tremor and wobble."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    dist = float(np.hypot(*(b - a)))
    speed = speed or p.speed_px_s
    n = max(3, int(math.ceil(dist / speed * 1000.0 / FRAME_MS)) + 1)
    t = _frames(t0, n)
    s = _min_jerk(n)
    base = a + s[:, None] * (b - a)
    if dist > 0:
        normal = np.array([-(b - a)[1], (b - a)[0]]) / dist
    else:
        normal = np.array([0.0, 1.0])
    ts = (t - t[0]) / 1000.0
    lateral = bow * np.sin(np.pi * s) + p.tremor_amp_px * np.sin(2 * np.pi * p.tremor_freq_hz * ts + rng.uniform(0, 2 * np.pi))
    lateral = lateral + _wobble(rng, n, p.path_noise_px * 0.5)
    xy = base + lateral[:, None] * normal[None, :]
    return t, xy


def _contact(rng, p: MotorProfile, n: int) -> np.ndarray:
    """Finger contact pressure: firmer presses in younger children."""
    return p.pressure_mean + _wobble(rng, n, 0.02)


def _tap(rng, p: MotorProfile, at, t0: float, pointer=0) -> Stroke:
    # younger children keep the finger down longer and drift more
    n = max(3, int(round(3 + p.tremor_amp_px * 0.6 + rng.normal(0, 0.3))))
    t = _frames(t0, n)
    drift = np.cumsum(rng.normal(0, 0.1 + p.tremor_amp_px * 0.3, size=(n, 2)), axis=0)
    return _stroke(t, np.asarray(at, float) + drift, pointer, _contact(rng, p, n))


def _finish(child_id, test_id, strokes, targets, ui=(), duration=None) -> TestSession:
    limit = TIME_LIMIT_MS[test_id]
    end = max(st.end_t for st in strokes)
    dur = float(limit) if duration is None else float(min(limit, round(max(duration, end))))
    return TestSession(
        child_id=child_id, test_id=test_id,
        input=InputKind.STYLUS if test_id in (TestId.T5, TestId.T6) else InputKind.FINGER,
        strokes=tuple(strokes), targets=tuple(targets), ui_states=tuple(ui),
        duration_ms=dur, screen=SCREEN,
    )


def _trim(strokes: list[Stroke], limit: float) -> list[Stroke]:
    out = []
    for st in strokes:
        keep = tuple(s for s in st.samples if s.t < limit)
        if keep:
            out.append(Stroke(st.pointer_id, keep))
    return out


# -- per-test simulators ---------------------------------------------------

BURROWS = tuple((x, y) for y in (300.0, 550.0) for x in (320.0, 640.0, 960.0))
MOLE_RADIUS = 60.0


def _sim_tap(rng, p: MotorProfile, child_id: str) -> TestSession:
    limit = TIME_LIMIT_MS[TestId.T1]
    completes = rng.random() < p.completion_prob[TestId.T1]
    goal = 4 if completes else int(rng.integers(0, 4))
    burrow = int(rng.integers(0, 6))
    targets = [TargetEvent(0.0, TargetKind.MOLE_SPAWN, BURROWS[burrow], MOLE_RADIUS)]
    strokes = []
    hits, now = 0, 0.0
    aim_sd = 2.5 * p.path_noise_px
    while hits < goal and now < limit - 1000:
        t_tap = now + _reaction(rng, p)
        centre = np.array(BURROWS[burrow])
        at = centre + rng.normal(0, aim_sd, 2)
        st = _tap(rng, p, at, t_tap)
        strokes.append(st)
        now = st.end_t
        if np.hypot(*(at - centre)) <= MOLE_RADIUS:
            hits += 1
            burrow = int((burrow + rng.integers(1, 6)) % 6)
            if hits < 4:
                targets.append(TargetEvent(now, TargetKind.MOLE_SPAWN, BURROWS[burrow], MOLE_RADIUS))
    if not completes or not strokes:
        # wandering taps away from the mole until the child gives up
        for _ in range(int(rng.integers(1, 3))):
            t_tap = now + _reaction(rng, p)
            if t_tap > limit - 500:
                break
            at = np.array([rng.uniform(100, 1180), rng.uniform(80, 720)])
            centre = np.array(BURROWS[burrow])
            if np.hypot(*(at - centre)) <= MOLE_RADIUS:
                at = centre + 2.5 * MOLE_RADIUS
            strokes.append(_tap(rng, p, at, t_tap))
            now = strokes[-1].end_t
    strokes = _trim(strokes, limit)
    duration = now + 400 if completes and hits == 4 else None
    return _finish(child_id, TestId.T1, strokes, targets, duration=duration)


CARROT_START = (250.0, 400.0)
CARROT_RADIUS = 50.0
RABBIT_POS = (1030.0, 400.0)
RABBIT_RADIUS = 80.0


def _sim_drag(rng, p: MotorProfile, child_id: str) -> TestSession:
    limit = TIME_LIMIT_MS[TestId.T2]
    completes = rng.random() < p.completion_prob[TestId.T2]
    targets = [TargetEvent(0.0, TargetKind.CARROT_POS, CARROT_START, CARROT_RADIUS),
               TargetEvent(0.0, TargetKind.RABBIT_POS, RABBIT_POS, RABBIT_RADIUS)]
    carrot = np.array(CARROT_START)
    rabbit = np.array(RABBIT_POS)
    aim_sd = 2.5 * p.path_noise_px
    strokes = []
    now = 0.0
    n_drags = 1 + int(rng.random() < 0.6 * (1 - p.two_finger_skill))
    for k in range(n_drags):
        start = carrot + rng.normal(0, aim_sd, 2)
        last = k == n_drags - 1
        if last and completes:
            goal = rabbit + rng.normal(0, RABBIT_RADIUS * 0.25, 2)
        else:
            frac = rng.uniform(0.3, 0.8) if not last else rng.uniform(0.2, 0.75)
            goal = carrot + frac * (rabbit - carrot) + rng.normal(0, 3 * p.path_noise_px, 2)
        bow = rng.choice((-1.0, 1.0)) * 4 * p.path_noise_px * rng.uniform(0.8, 1.2)
        t, xy = _path(rng, p, start, goal, now + _reaction(rng, p), bow=bow)
        if t[-1] >= limit:
            break
        strokes.append(_stroke(t, xy, 0, _contact(rng, p, len(t))))
        now = t[-1]
        if np.hypot(*(start - carrot)) <= CARROT_RADIUS:
            carrot = carrot + (xy[-1] - start)
            targets.append(TargetEvent(now, TargetKind.CARROT_POS, tuple(carrot), CARROT_RADIUS))
    if not strokes:
        strokes.append(_tap(rng, p, carrot, min(now + 500, limit - 200)))
    in_rabbit = np.hypot(*(carrot - rabbit)) <= RABBIT_RADIUS
    return _finish(child_id, TestId.T2, strokes, targets, duration=now + 400 if in_rabbit else None)


RABBIT_CENTRE = (640.0, 400.0)
ZOOM_TARGET = {TestId.T3: 2.0, TestId.T4: 0.5}
ZOOM_TOLERANCE = 0.15
PINCH_SPEED_FACTOR = 0.25


def _sim_zoom(rng, p: MotorProfile, child_id: str, test_id: TestId) -> TestSession:
    limit = TIME_LIMIT_MS[test_id]
    target_scale = ZOOM_TARGET[test_id]
    targets = [TargetEvent(0.0, TargetKind.CIRCLE_PAIR, radius=40.0,
                           points=((540.0, 400.0), (740.0, 400.0)))]
    ui = [UiStateEvent(0.0, 1.0, False)]
    strokes = []
    centre = np.array(RABBIT_CENTRE) + rng.normal(0, p.path_noise_px, 2)
    two_finger = rng.random() < p.two_finger_skill
    completes = two_finger and rng.random() < p.completion_prob[test_id]
    now = _reaction(rng, p)
    if not two_finger:
        n_swipes = 1 + int(round(2 * (1 - p.two_finger_skill) + rng.normal(0, 0.3)))
        for _ in range(max(1, n_swipes)):
            a = centre + rng.normal(0, 30, 2)
            ang = rng.uniform(0, 2 * np.pi)
            b = a + rng.uniform(70, 110) * np.array([math.cos(ang), math.sin(ang)])
            t, xy = _path(rng, p, a, b, now)
            if t[-1] >= limit:
                break
            strokes.append(_stroke(t, xy, 0, _contact(rng, p, len(t))))
            now = t[-1] + _reaction(rng, p) * 0.6
        if not strokes:
            strokes.append(_tap(rng, p, centre, 200.0))
        return _finish(child_id, test_id, strokes, targets, ui)

    d0 = rng.uniform(90, 100) if test_id is TestId.T3 else rng.uniform(180, 200)
    if completes:
        final = target_scale * (1 + rng.uniform(-0.5, 0.5) * ZOOM_TOLERANCE)
    else:
        # stops short of the target band
        lo, hi = sorted((1.0, target_scale))
        final = 1.0 + rng.uniform(0.1, 0.6) * (target_scale - 1.0)
    angle = rng.uniform(-0.4, 0.4)
    axis = np.array([math.cos(angle), math.sin(angle)])
    lag = rng.uniform(60, 100) + (1 - p.two_finger_skill) * 150.0
    # each finger covers half the distance change; pinching is slower than reaching
    gesture = abs(final - 1.0) * d0 / 2.0 / max(PINCH_SPEED_FACTOR * p.speed_px_s, 1.0) * 1000.0
    hold = rng.uniform(700, 1200) if completes else rng.uniform(100, 300)
    n_move = max(3, int(gesture / FRAME_MS))
    n_hold = max(1, int(hold / FRAME_MS))
    t_b = _frames(now + lag, n_move + n_hold)
    s = np.concatenate([_min_jerk(n_move), np.ones(n_hold)])
    dist = d0 * (1 + s * (final - 1.0))
    ts = (t_b - t_b[0]) / 1000.0
    trem = p.tremor_amp_px * np.sin(2 * np.pi * p.tremor_freq_hz * ts)
    pa = centre - (dist / 2)[:, None] * axis + (trem + _wobble(rng, len(ts), p.path_noise_px * 0.3))[:, None] * axis[::-1]
    pb = centre + (dist / 2)[:, None] * axis + _wobble(rng, len(ts), p.path_noise_px * 0.3)[:, None] * axis[::-1]
    n_pre = max(1, int(lag / FRAME_MS))
    t_a = np.concatenate([_frames(now, n_pre), t_b])
    pa = np.vstack([np.repeat(pa[:1], n_pre, axis=0) + rng.normal(0, 0.5, (n_pre, 2)), pa])
    t_a, idx = np.unique(t_a, return_index=True)
    pa = pa[idx]
    strokes = [_stroke(t_a, pa, 0, _contact(rng, p, len(t_a))), _stroke(t_b, pb, 1, _contact(rng, p, len(t_b)))]
    on = False
    for k, tk in enumerate(t_b):
        scale = dist[k] / d0
        now_on = abs(scale - target_scale) <= ZOOM_TOLERANCE * target_scale
        if k % 3 == 0 or now_on != on:
            ui.append(UiStateEvent(float(tk), float(scale), bool(now_on)))
            on = now_on
    end = t_b[-1] + FRAME_MS
    if end < limit:
        ui.append(UiStateEvent(float(round(end)), float(dist[-1] / d0), False))
    return _finish(child_id, test_id, _trim(strokes, limit), targets,
                   [u for u in ui if u.t < limit], duration=end + 300 if completes else None)


SPIRAL_CENTRE = (640.0, 400.0)
SPIRAL_PITCH = 12.0  # px per radian
SPIRAL_TURNS = 3.0
SPIRAL_LINE = 12.0


def spiral_reference(n: int = 240) -> np.ndarray:
    th = np.linspace(0, 2 * np.pi * SPIRAL_TURNS, n)
    r = SPIRAL_PITCH * th
    return np.column_stack([SPIRAL_CENTRE[0] + r * np.cos(th), SPIRAL_CENTRE[1] + r * np.sin(th)])


def _spiral_theta(arc: np.ndarray) -> np.ndarray:
    """Angle reached after arc length ``arc`` along r = a*theta (inverted numerically)."""
    th = np.linspace(0, 2 * np.pi * SPIRAL_TURNS * 1.05, 4000)
    a = SPIRAL_PITCH
    s = a / 2 * (th * np.sqrt(1 + th ** 2) + np.arcsinh(th))
    return np.interp(arc, s, th)


def _sim_spiral(rng, p: MotorProfile, child_id: str) -> TestSession:
    limit = TIME_LIMIT_MS[TestId.T5]
    ref = spiral_reference()
    targets = [TargetEvent(0.0, TargetKind.SPIRAL_REF, SPIRAL_CENTRE, SPIRAL_LINE,
                           tuple(map(tuple, np.round(ref, 3))))]
    th_end = 2 * np.pi * SPIRAL_TURNS
    completes = rng.random() < p.completion_prob[TestId.T5]
    stop_frac = 1.0 if completes else rng.uniform(0.3, 0.85)
    a = SPIRAL_PITCH
    total_arc = a / 2 * (th_end * math.sqrt(1 + th_end ** 2) + math.asinh(th_end)) * stop_frac
    t0 = _reaction(rng, p)
    n = max(12, int(total_arc / p.speed_px_s * 1000.0 / FRAME_MS))
    t = _frames(t0, n)
    arc = np.linspace(0, total_arc, n)
    th = _spiral_theta(arc)
    ts = (t - t0) / 1000.0
    r = a * th + p.tremor_amp_px * np.sin(2 * np.pi * p.tremor_freq_hz * ts + rng.uniform(0, 2 * np.pi))
    r = r + _wobble(rng, n, p.path_noise_px * 0.6)
    r = np.abs(r)
    xy = np.column_stack([SPIRAL_CENTRE[0] + r * np.cos(th), SPIRAL_CENTRE[1] + r * np.sin(th)])
    pres = p.pressure_mean + _wobble(rng, n, 0.05 + 0.1 * (p.tremor_amp_px / 6.0))
    # pen lifts: younger children lift more often
    n_lifts = int(rng.poisson(2.0 * p.tremor_amp_px / 6.0))
    cuts = sorted(rng.choice(np.arange(5, n - 5), size=min(n_lifts, max(0, n // 20)), replace=False)) if n > 20 else []
    strokes, lo, shift = [], 0, 0.0
    for c in list(cuts) + [n]:
        seg_t = t[lo:c] + shift
        strokes.append(_stroke(seg_t, xy[lo:c], 0, pres[lo:c]))
        shift += rng.uniform(150, 500) * (p.reaction_mean_ms / 1500.0)
        lo = c
    strokes = _trim(strokes, limit)
    end = strokes[-1].end_t
    return _finish(child_id, TestId.T5, strokes, targets, duration=end + 400 if completes else None)


TREE_OUTLINE = ((640.0, 120.0), (860.0, 480.0), (700.0, 480.0), (700.0, 680.0),
                (580.0, 680.0), (580.0, 480.0), (420.0, 480.0))
HATCH_SPACING = 13.0


def _polygon_row(y: float, poly=TREE_OUTLINE) -> Optional[tuple[float, float]]:
    xs = []
    pts = list(poly)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:] + pts[:1]):
        if (y0 <= y < y1) or (y1 <= y < y0):
            xs.append(x0 + (y - y0) * (x1 - x0) / (y1 - y0))
    if len(xs) < 2:
        return None
    return min(xs), max(xs)


def _sim_drawing(rng, p: MotorProfile, child_id: str) -> TestSession:
    limit = TIME_LIMIT_MS[TestId.T6]
    targets = [TargetEvent(0.0, TargetKind.TREE_OUTLINE, points=TREE_OUTLINE)]
    completes = rng.random() < p.completion_prob[TestId.T6]
    ys = np.arange(120 + HATCH_SPACING / 2, 680, HATCH_SPACING)
    stop_frac = 1.0 if completes else rng.uniform(0.15, 0.55)
    n_rows = max(1, int(round(len(ys) * stop_frac)))
    start_row = 0 if completes else int(rng.integers(0, len(ys) - n_rows + 1))
    strokes = []
    now = _reaction(rng, p)
    overshoot = 1.5 * p.path_noise_px
    for k in range(start_row, start_row + n_rows):
        span = _polygon_row(ys[k])
        if span is None:
            continue
        x0, x1 = span
        a = (x0 - rng.uniform(0, overshoot), ys[k] + rng.normal(0, 1))
        b = (x1 + rng.uniform(0, overshoot), ys[k] + rng.normal(0, 1))
        if k % 2:
            a, b = b, a
        t, xy = _path(rng, p, a, b, now, speed=p.speed_px_s * 1.2)
        if t[-1] >= limit:
            break
        pres = p.pressure_mean + _wobble(rng, len(t), 0.05 + 0.1 * (p.tremor_amp_px / 6.0))
        strokes.append(_stroke(t, xy, 0, pres))
        now = t[-1] + max(60.0, rng.normal(p.reaction_mean_ms * 0.15, p.reaction_std_ms * 0.1))
    if not strokes:
        t, xy = _path(rng, p, (600, 400), (680, 400), now)
        strokes.append(_stroke(t, xy, 0, np.full(len(t), p.pressure_mean)))
    strokes = _trim(strokes, limit)
    end = strokes[-1].end_t
    return _finish(child_id, TestId.T6, strokes, targets, duration=end + 500 if completes else None)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def generate_session(profile: MotorProfile, test_id, seed, child_id: str = "synthetic") -> TestSession:
    """Simulate one child performing ``test_id``; deterministic in ``seed``."""
    test_id = TestId(test_id)
    rng = _rng(seed)
    if test_id is TestId.T1:
        return _sim_tap(rng, profile, child_id)
    if test_id is TestId.T2:
        return _sim_drag(rng, profile, child_id)
    if test_id in (TestId.T3, TestId.T4):
        return _sim_zoom(rng, profile, child_id, test_id)
    if test_id is TestId.T5:
        return _sim_spiral(rng, profile, child_id)
    return _sim_drawing(rng, profile, child_id)


# Session-level age spread per test. Tests whose simulated traces are
# already noisy get less, so every test ends up with a similar total
# error and the tests fail on different children.
SESSION_JITTER_MONTHS: Mapping[TestId, float] = MappingProxyType({
    TestId.T1: 2.5, TestId.T2: 2.5, TestId.T3: 1.0, TestId.T4: 1.5, TestId.T5: 5.0, TestId.T6: 5.0,
})


@dataclass(frozen=True)
class CohortSpec:
    per_group: tuple[int, int, int] = (30, 30, 30)
    seed: int = 0
    anchors: Mapping[str, tuple[float, float]] = field(default_factory=lambda: dict(ANCHORS))
    # float for one shared spread, or a per-test mapping
    session_jitter_months: Union[float, Mapping[TestId, float]] = field(
        default_factory=lambda: dict(SESSION_JITTER_MONTHS))
    tests: tuple[TestId, ...] = tuple(TestId)

    def jitter(self, test_id: TestId) -> float:
        j = self.session_jitter_months
        if isinstance(j, Mapping):
            return float({TestId(k): v for k, v in j.items()}.get(TestId(test_id), 0.0))
        return float(j)

    def __post_init__(self):
        if isinstance(self.per_group, int):
            object.__setattr__(self, "per_group", (self.per_group,) * 3)
        if len(self.per_group) != 3 or any(c < 1 for c in self.per_group):
            raise DomainError("per_group needs three counts >= 1")
        if any(self.jitter(t) < 0 for t in TestId):
            raise DomainError("session_jitter_months must be >= 0")


def generate_cohort(spec: CohortSpec) -> Dataset:
    root = np.random.SeedSequence(spec.seed)
    age_rng = np.random.default_rng(root.spawn(1)[0])
    ages = []
    for g, count in zip(AgeGroup, spec.per_group):
        lo, hi = GROUP_MONTHS[g]
        top = hi if g is AgeGroup.G3 else hi - 1
        ages.extend(int(a) for a in age_rng.integers(lo, top + 1, size=count))
    subjects = []
    for i, age in enumerate(ages):
        cid = f"c{i:04d}"
        sessions = {}
        for tid in spec.tests:
            ss = np.random.SeedSequence([spec.seed, i, tid.index])
            jit_rng = np.random.default_rng(ss.spawn(1)[0])
            eff = float(np.clip(age + jit_rng.normal(0, spec.jitter(tid)),
                                MIN_AGE_MONTHS, MAX_AGE_MONTHS))
            prof = default_profile(eff, spec.anchors)
            sessions[tid] = generate_session(prof, tid, ss, child_id=cid)
        subjects.append(SubjectRecord(cid, age, sessions))
    return Dataset(tuple(subjects), {"source": "synthetic", "seed": spec.seed,
                                     "per_group": list(spec.per_group)})
