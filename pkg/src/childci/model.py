"""Domain types shared by every stage of the pipeline.

All containers are frozen dataclasses holding tuples, so sessions and
subjects can be handed to worker processes without defensive copies.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from types import MappingProxyType
from typing import Mapping, Optional, Sequence

import numpy as np


class ChildCIError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ChildCIError, ValueError):
    """A value lies outside the domain of an operation or type."""


class Action(str, Enum):
    DOWN = "down"
    MOVE = "move"
    UP = "up"


class TestId(str, Enum):
    __test__ = False  # keep pytest from collecting the enum

    T1 = "T1"
    T2 = "T2"
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"
    T6 = "T6"

    @property
    def index(self) -> int:
        return int(self.value[1]) - 1


class InputKind(str, Enum):
    FINGER = "finger"
    STYLUS = "stylus"


class TargetKind(str, Enum):
    MOLE_SPAWN = "mole_spawn"
    CARROT_POS = "carrot_pos"
    RABBIT_POS = "rabbit_pos"
    CIRCLE_PAIR = "circle_pair"
    SPIRAL_REF = "spiral_ref"
    TREE_OUTLINE = "tree_outline"


class AgeGroup(str, Enum):
    G1 = "G1"
    G2 = "G2"
    G3 = "G3"

    @property
    def index(self) -> int:
        return int(self.value[1]) - 1

    @classmethod
    def from_index(cls, i: int) -> "AgeGroup":
        return _GROUPS[int(i)]


_GROUPS = (AgeGroup.G1, AgeGroup.G2, AgeGroup.G3)

ALL_TESTS = tuple(TestId)
FINGER_TESTS = frozenset({TestId.T1, TestId.T2, TestId.T3, TestId.T4})
STYLUS_TESTS = frozenset({TestId.T5, TestId.T6})
TIME_LIMIT_MS = MappingProxyType(
    {TestId.T1: 30_000, TestId.T2: 30_000, TestId.T3: 30_000,
     TestId.T4: 30_000, TestId.T5: 30_000, TestId.T6: 120_000}
)

MIN_AGE_MONTHS = 12
MAX_AGE_MONTHS = 96
# left-closed month ranges; G3 also includes its upper end
GROUP_MONTHS = MappingProxyType(
    {AgeGroup.G1: (12, 36), AgeGroup.G2: (36, 72), AgeGroup.G3: (72, 96)}
)


def assign_age_group(age_months: int) -> AgeGroup:
    """Map an age in months to its age group.

    >>> assign_age_group(30), assign_age_group(36), assign_age_group(96)
    (<AgeGroup.G1: 'G1'>, <AgeGroup.G2: 'G2'>, <AgeGroup.G3: 'G3'>)
    """
    if isinstance(age_months, bool) or int(age_months) != age_months:
        raise DomainError(f"age_months must be an integer, got {age_months!r}")
    age = int(age_months)
    if not MIN_AGE_MONTHS <= age <= MAX_AGE_MONTHS:
        raise DomainError(
            f"age_months={age} outside [{MIN_AGE_MONTHS}, {MAX_AGE_MONTHS}]"
        )
    if age < 36:
        return AgeGroup.G1
    if age < 72:
        return AgeGroup.G2
    return AgeGroup.G3


@dataclass(frozen=True)
class TouchSample:
    t: float
    x: float
    y: float
    pressure: float = 1.0
    pointer_id: int = 0
    action: Action = Action.MOVE

    def __post_init__(self):
        if not self.t >= 0:
            raise DomainError(f"sample time must be >= 0, got {self.t}")
        if not 0.0 <= self.pressure <= 1.0:
            raise DomainError(f"pressure out of range: {self.pressure}")
        if not isinstance(self.action, Action):
            object.__setattr__(self, "action", Action(self.action))


@dataclass(frozen=True)
class Stroke:
    pointer_id: int
    samples: tuple[TouchSample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        if not samples:
            raise DomainError("stroke needs at least one sample")
        ts = [s.t for s in samples]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise DomainError("stroke timestamps must be non-decreasing")

    def __len__(self) -> int:
        return len(self.samples)

    @cached_property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.samples], dtype=float)

    @cached_property
    def xy(self) -> np.ndarray:
        return np.array([(s.x, s.y) for s in self.samples], dtype=float).reshape(-1, 2)

    @cached_property
    def pressure(self) -> np.ndarray:
        return np.array([s.pressure for s in self.samples], dtype=float)

    @property
    def start_t(self) -> float:
        return self.samples[0].t

    @property
    def end_t(self) -> float:
        return self.samples[-1].t


@dataclass(frozen=True)
class TargetEvent:
    t: float
    kind: TargetKind
    center: Optional[tuple[float, float]] = None
    radius: Optional[float] = None
    points: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self):
        if not isinstance(self.kind, TargetKind):
            object.__setattr__(self, "kind", TargetKind(self.kind))
        if self.center is not None:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.points is not None:
            pts = tuple((float(p[0]), float(p[1])) for p in self.points)
            object.__setattr__(self, "points", pts)
        if self.radius is not None and not self.radius > 0:
            raise DomainError(f"target radius must be > 0, got {self.radius}")
        if self.kind in (TargetKind.SPIRAL_REF, TargetKind.TREE_OUTLINE):
            if self.kind is TargetKind.SPIRAL_REF and self.center is None:
                raise DomainError("spiral_ref needs a center")
            if self.points is None or len(self.points) < 2:
                raise DomainError(f"{self.kind.value} needs a polyline of >= 2 points")
            if self.kind is TargetKind.TREE_OUTLINE and len(self.points) < 3:
                raise DomainError("tree_outline polygon needs >= 3 points")
        elif self.kind is TargetKind.CIRCLE_PAIR:
            if self.points is None or len(self.points) != 2 or self.radius is None:
                raise DomainError("circle_pair needs two centers and a radius")
        else:
            if self.center is None or self.radius is None:
                raise DomainError(f"{self.kind.value} needs center and radius")


@dataclass(frozen=True)
class UiStateEvent:
    t: float
    scale: float
    on_target: bool

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"ui scale must be > 0, got {self.scale}")


@dataclass(frozen=True)
class TestSession:
    __test__ = False

    child_id: str
    test_id: TestId
    input: InputKind
    strokes: tuple[Stroke, ...]
    targets: tuple[TargetEvent, ...] = ()
    ui_states: tuple[UiStateEvent, ...] = ()
    duration_ms: float = 0.0
    screen: tuple[int, int] = (1280, 800)

    def __post_init__(self):
        object.__setattr__(self, "test_id", TestId(self.test_id))
        object.__setattr__(self, "input", InputKind(self.input))
        # canonical event order: strokes by first sample, events by time (stable)
        object.__setattr__(self, "strokes", tuple(sorted(self.strokes, key=lambda st: st.start_t)))
        object.__setattr__(self, "targets", tuple(sorted(self.targets, key=lambda e: e.t)))
        object.__setattr__(self, "ui_states", tuple(sorted(self.ui_states, key=lambda e: e.t)))
        object.__setattr__(self, "screen", (int(self.screen[0]), int(self.screen[1])))
        expected = InputKind.FINGER if self.test_id in FINGER_TESTS else InputKind.STYLUS
        if self.input is not expected:
            raise DomainError(f"{self.test_id.value} is a {expected.value} test, got {self.input.value}")
        if self.duration_ms < 0:
            raise DomainError("duration_ms must be >= 0")

    def targets_of(self, kind: TargetKind) -> list[TargetEvent]:
        return [e for e in self.targets if e.kind is kind]

    @cached_property
    def samples_by_time(self) -> list[TouchSample]:
        """All samples of all strokes, stably ordered by time."""
        out = [s for st in self.strokes for s in st.samples]
        out.sort(key=lambda s: s.t)
        return out


@dataclass(frozen=True)
class SubjectRecord:
    child_id: str
    age_months: int
    sessions: Mapping[TestId, TestSession] = field(default_factory=dict)
    metadata: Mapping[str, str] = field(default_factory=dict)
    group: AgeGroup = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "group", assign_age_group(self.age_months))
        sessions = {TestId(k): v for k, v in dict(self.sessions).items()}
        for tid, s in sessions.items():
            if s.test_id is not tid or s.child_id != self.child_id:
                raise DomainError(f"session {s.child_id}/{s.test_id.value} filed under {self.child_id}/{tid.value}")
        object.__setattr__(self, "sessions", MappingProxyType(dict(sorted(sessions.items(), key=lambda kv: kv[0].index))))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    def has_tests(self, tests: Sequence[TestId]) -> bool:
        return all(TestId(t) in self.sessions for t in tests)


@dataclass(frozen=True)
class FeatureVector:
    test_id: TestId
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        valid = np.array(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 1:
            raise DomainError("values and valid mask must be 1-D of equal length")
        values[~valid] = 0.0
        values.flags.writeable = False
        valid.flags.writeable = False
        object.__setattr__(self, "test_id", TestId(self.test_id))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (self.test_id is other.test_id
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.valid, other.valid))

    __hash__ = None

    @classmethod
    def invalid(cls, test_id: TestId, n: int) -> "FeatureVector":
        return cls(test_id, np.zeros(n), np.zeros(n, dtype=bool))

    def to_dict(self) -> dict:
        return {"test_id": self.test_id.value,
                "values": [float(v) for v in self.values],
                "valid": [bool(v) for v in self.valid]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureVector":
        return cls(TestId(d["test_id"]), d["values"], d["valid"])
