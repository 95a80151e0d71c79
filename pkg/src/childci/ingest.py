"""Reading, validating and writing session logs.

A session file is line-delimited JSON. The first line is a header::

    {"schema": "childci/1", "child_id": "c001", "test_id": "T1",
     "input": "finger", "screen": {"w": 1280, "h": 800}, "duration_ms": 21000}

and every following line is one event, ``{"type": "sample" | "target" | "ui", ...}``,
in non-decreasing time order. A dataset directory holds any number of
``*.jsonl`` session files plus a ``subjects.csv`` index with the columns
``child_id,age_months``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Union

from .model import (
    TIME_LIMIT_MS,
    Action,
    ChildCIError,
    DomainError,
    Stroke,
    SubjectRecord,
    TargetEvent,
    TargetKind,
    TestId,
    TestSession,
    TouchSample,
    UiStateEvent,
)

log = logging.getLogger(__name__)

SCHEMA = "childci/1"
SUBJECTS_INDEX = "subjects.csv"

_HEADER_KEYS = {"schema", "child_id", "test_id", "input", "screen", "duration_ms"}
_EVENT_KEYS = {
    "sample": {"type", "t", "x", "y", "pressure", "pointer_id", "action"},
    "target": {"type", "t", "kind", "center", "radius", "points"},
    "ui": {"type", "t", "scale", "on_target"},
}


class ParseError(ChildCIError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class LoadError(ChildCIError):
    pass


@dataclass(frozen=True)
class Issue:
    severity: str  # "warn" | "fatal"
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    child_id: str
    test_id: TestId
    issues: tuple[Issue, ...] = ()

    @property
    def fatal(self) -> bool:
        return any(i.severity == "fatal" for i in self.issues)

    @property
    def codes(self) -> list[str]:
        return [i.code for i in self.issues]


@dataclass(frozen=True)
class Dataset:
    subjects: tuple[SubjectRecord, ...]
    provenance: dict = field(default_factory=dict)
    reports: tuple[ValidationReport, ...] = ()

    def __post_init__(self):
        subjects = tuple(sorted(self.subjects, key=lambda s: s.child_id))
        ids = [s.child_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise LoadError("duplicate child_id in dataset")
        object.__setattr__(self, "subjects", subjects)

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def n_sessions(self) -> int:
        return sum(len(s.sessions) for s in self.subjects)

    def subject(self, child_id: str) -> SubjectRecord:
        for s in self.subjects:
            if s.child_id == child_id:
                return s
        raise KeyError(child_id)

    def with_tests(self, tests: Iterable[TestId]) -> "Dataset":
        tests = [TestId(t) for t in tests]
        keep = tuple(s for s in self.subjects if s.has_tests(tests))
        return Dataset(keep, dict(self.provenance), self.reports)

    def subset(self, child_ids: Iterable[str]) -> "Dataset":
        wanted = set(child_ids)
        keep = tuple(s for s in self.subjects if s.child_id in wanted)
        return Dataset(keep, dict(self.provenance), self.reports)


# -- parsing ---------------------------------------------------------------

def _num(d: dict, key: str, line: int, default=None):
    if key not in d:
        if default is not None:
            return default
        raise ParseError(f"missing field {key!r}", line)
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"field {key!r} must be numeric", line)
    return v


def parse_session(stream: Union[IO[bytes], IO[str], bytes, str],
                  issues: Optional[list] = None) -> TestSession:
    """Parse one canonical session document.

    ``stream`` may be a binary or text file object, or the document itself as
    bytes/str. Non-fatal findings (unknown fields, missing ui states, unclosed
    strokes) are appended to ``issues`` as warn-level :class:`Issue` objects.
    """
    if isinstance(stream, bytes):
        text = stream.decode("utf-8")
    elif isinstance(stream, str):
        text = stream
    else:
        raw = stream.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw
    if issues is None:
        issues = []

    def warn(code, msg):
        issues.append(Issue("warn", code, msg))
        log.debug("%s: %s", code, msg)

    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise ParseError("empty document", 1)

    def load(lineno, ln):
        try:
            obj = json.loads(ln)
        except json.JSONDecodeError as e:
            raise ParseError(f"malformed JSON: {e.msg}", lineno) from None
        if not isinstance(obj, dict):
            raise ParseError("each line must be a JSON object", lineno)
        return obj

    hline, hraw = lines[0]
    header = load(hline, hraw)
    if header.get("schema") != SCHEMA:
        raise ParseError(f"schema version mismatch: expected {SCHEMA!r}, got {header.get('schema')!r}", hline)
    for key in ("child_id", "test_id", "input"):
        if key not in header:
            raise ParseError(f"header missing {key!r}", hline)
    for key in sorted(set(header) - _HEADER_KEYS):
        warn("unknown_field", f"header field {key!r} ignored")
    screen = header.get("screen") or {"w": 1280, "h": 800}
    try:
        screen_wh = (int(screen["w"]), int(screen["h"]))
        test_id = TestId(header["test_id"])
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"bad header: {e}", hline) from None
    duration = _num(header, "duration_ms", hline, default=0)

    open_strokes: dict[int, list[TouchSample]] = {}
    finished: list[tuple[int, int, list[TouchSample]]] = []  # (order, pointer, samples)
    order_of: dict[int, int] = {}
    targets, uis = [], []
    last_t = -float("inf")
    counter = 0

    for lineno, ln in lines[1:]:
        ev = load(lineno, ln)
        kind = ev.get("type")
        if kind not in _EVENT_KEYS:
            raise ParseError(f"unknown event type {kind!r}", lineno)
        for key in sorted(set(ev) - _EVENT_KEYS[kind]):
            warn("unknown_field", f"line {lineno}: field {key!r} ignored")
        t = _num(ev, "t", lineno)
        if t < last_t:
            raise ParseError(f"non-monotone timestamp {t} after {last_t}", lineno)
        last_t = t
        try:
            if kind == "sample":
                s = TouchSample(
                    t=t, x=_num(ev, "x", lineno), y=_num(ev, "y", lineno),
                    pressure=_num(ev, "pressure", lineno, default=1.0),
                    pointer_id=int(ev.get("pointer_id", 0)),
                    action=Action(ev.get("action", "move")),
                )
                pid = s.pointer_id
                if s.action is Action.DOWN and pid in open_strokes:
                    warn("missing_up", f"line {lineno}: pointer {pid} down without prior up")
                    finished.append((order_of.pop(pid), pid, open_strokes.pop(pid)))
                if pid not in open_strokes:
                    if s.action is not Action.DOWN:
                        warn("missing_down", f"line {lineno}: pointer {pid} {s.action.value} without down")
                    open_strokes[pid] = []
                    order_of[pid] = counter
                    counter += 1
                open_strokes[pid].append(s)
                if s.action is Action.UP:
                    finished.append((order_of.pop(pid), pid, open_strokes.pop(pid)))
            elif kind == "target":
                targets.append(TargetEvent(
                    t=t, kind=TargetKind(ev["kind"]), center=ev.get("center"),
                    radius=ev.get("radius"), points=ev.get("points"),
                ))
            else:
                uis.append(UiStateEvent(t=t, scale=_num(ev, "scale", lineno),
                                        on_target=bool(ev.get("on_target", False))))
        except DomainError as e:
            raise ParseError(str(e), lineno) from None
        except (KeyError, ValueError, TypeError) as e:
            raise ParseError(f"bad {kind} event: {e}", lineno) from None

    for pid in list(open_strokes):
        if len(open_strokes[pid]) > 1:
            warn("missing_up", f"pointer {pid} stroke not closed")
        finished.append((order_of.pop(pid), pid, open_strokes.pop(pid)))
    finished.sort(key=lambda f: f[0])
    strokes = [Stroke(pid, tuple(samples)) for _, pid, samples in finished]

    if test_id in (TestId.T3, TestId.T4) and not uis:
        warn("no_ui_states", "zoom session carries no ui state events")
    try:
        return TestSession(
            child_id=str(header["child_id"]), test_id=test_id, input=header["input"],
            strokes=tuple(strokes), targets=tuple(targets), ui_states=tuple(uis),
            duration_ms=duration, screen=screen_wh,
        )
    except (DomainError, ValueError) as e:
        raise ParseError(str(e), hline) from None


def parse_childcidb_v1(stream, issues: Optional[list] = None) -> TestSession:
    """Placeholder for the published database's own file layout.

    It takes the same arguments as :func:`parse_session` so a real mapping can
    be dropped in once that layout has been inspected. Until then it refuses.
    """
    raise ParseError("no field mapping for the childcidb_v1 layout yet; convert to childci/1 first")


PARSERS = {SCHEMA: parse_session, "childcidb_v1": parse_childcidb_v1}


def get_parser(fmt: str = SCHEMA):
    try:
        return PARSERS[fmt]
    except KeyError:
        raise DomainError(f"unknown session format {fmt!r}; expected one of {sorted(PARSERS)}") from None


def _jnum(v: float):
    v = float(v)
    return int(v) if v.is_integer() else v


def session_lines(session: TestSession) -> list[str]:
    header = {
        "schema": SCHEMA, "child_id": session.child_id, "test_id": session.test_id.value,
        "input": session.input.value, "screen": {"w": session.screen[0], "h": session.screen[1]},
        "duration_ms": _jnum(session.duration_ms),
    }
    events = []
    # tie order at equal t: targets, ui, then samples in stroke order
    for i, ev in enumerate(session.targets):
        d = {"type": "target", "t": _jnum(ev.t), "kind": ev.kind.value}
        if ev.center is not None:
            d["center"] = [ev.center[0], ev.center[1]]
        if ev.radius is not None:
            d["radius"] = float(ev.radius)
        if ev.points is not None:
            d["points"] = [[p[0], p[1]] for p in ev.points]
        events.append((ev.t, 0, i, 0, d))
    for i, ev in enumerate(session.ui_states):
        events.append((ev.t, 1, i, 0, {"type": "ui", "t": _jnum(ev.t), "scale": float(ev.scale),
                                       "on_target": bool(ev.on_target)}))
    for si, st in enumerate(session.strokes):
        for k, s in enumerate(st.samples):
            events.append((s.t, 2, si, k, {
                "type": "sample", "t": _jnum(s.t), "x": float(s.x), "y": float(s.y),
                "pressure": float(s.pressure), "pointer_id": int(s.pointer_id),
                "action": s.action.value,
            }))
    events.sort(key=lambda e: e[:4])
    out = [json.dumps(header, sort_keys=True)]
    out.extend(json.dumps(e[4], sort_keys=True) for e in events)
    return out


def write_session(session: TestSession, stream: Optional[IO[str]] = None) -> str:
    """Serialise ``session``; returns the text and also writes it to ``stream`` if given."""
    text = "\n".join(session_lines(session)) + "\n"
    if stream is not None:
        stream.write(text)
    return text


# -- validation ------------------------------------------------------------

def _two_pointer_overlap(session: TestSession) -> bool:
    spans = sorted((st.start_t, st.end_t, st.pointer_id) for st in session.strokes)
    for i, (a0, a1, pa) in enumerate(spans):
        for b0, b1, pb in spans[i + 1:]:
            if b0 > a1:
                break
            if pb != pa:
                return True
    return False


def validate_session(session: TestSession) -> ValidationReport:
    issues = []
    if not session.strokes:
        issues.append(Issue("fatal", "no_strokes", "session has zero strokes"))
    for i, st in enumerate(session.strokes):
        if len(st.samples) < 1:
            issues.append(Issue("fatal", "empty_stroke", f"stroke {i} has no samples"))
        acts = [s.action for s in st.samples]
        if acts[0] is not Action.DOWN or (len(acts) > 1 and acts[-1] is not Action.UP) \
                or any(a is not Action.MOVE for a in acts[1:-1]):
            issues.append(Issue("warn", "pointer_sequence", f"stroke {i} is not down, move*, up"))
    limit = TIME_LIMIT_MS[session.test_id]
    if session.duration_ms > limit:
        issues.append(Issue("fatal", "duration_limit",
                            f"duration exceeds {limit // 1000} s limit ({session.duration_ms:g} ms)"))
    if session.test_id in (TestId.T3, TestId.T4):
        if not session.ui_states and not _two_pointer_overlap(session):
            issues.append(Issue("fatal", "zoom_unusable", "no two-pointer overlap and no ui states"))
    return ValidationReport(session.child_id, session.test_id, tuple(issues))


# -- datasets --------------------------------------------------------------

def read_subjects_index(path: Union[str, os.PathLike]) -> dict[str, int]:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing subjects index {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(ln for ln in fh if not ln.startswith("#"))
        if reader.fieldnames is None or not {"child_id", "age_months"} <= set(reader.fieldnames):
            raise LoadError(f"{path}: header must contain child_id, age_months")
        ages = {}
        for row in reader:
            cid = row["child_id"].strip()
            if cid in ages:
                raise LoadError(f"duplicate child_id {cid!r} in {path.name}")
            ages[cid] = int(row["age_months"])
    return ages


def load_dataset(path: Union[str, os.PathLike]) -> Dataset:
    """Load every session under ``path`` and group sessions by child.

    Sessions with fatal validation issues are dropped; their reports are kept
    on ``Dataset.reports``.
    """
    root = Path(path)
    ages = read_subjects_index(root / SUBJECTS_INDEX)
    sessions: dict[str, dict[TestId, TestSession]] = defaultdict(dict)
    reports = []
    for f in sorted(root.rglob("*.jsonl")):
        parse_issues: list[Issue] = []
        try:
            with open(f, "rb") as fh:
                s = parse_session(fh, parse_issues)
        except ParseError as e:
            raise LoadError(f"{f.relative_to(root)}: {e}") from e
        rep = validate_session(s)
        rep = ValidationReport(rep.child_id, rep.test_id, tuple(parse_issues) + rep.issues)
        reports.append(rep)
        if s.child_id not in ages:
            raise LoadError(f"{f.name}: child_id {s.child_id!r} missing from {SUBJECTS_INDEX}")
        if s.test_id in sessions[s.child_id]:
            raise LoadError(f"duplicate session {s.child_id}/{s.test_id.value} ({f.name})")
        if rep.fatal:
            log.warning("excluding %s/%s: %s", s.child_id, s.test_id.value,
                        "; ".join(i.message for i in rep.issues if i.severity == "fatal"))
            continue
        sessions[s.child_id][s.test_id] = s
    try:
        subjects = [SubjectRecord(cid, age, sessions.get(cid, {})) for cid, age in ages.items()]
    except DomainError as e:
        raise LoadError(str(e)) from e
    return Dataset(tuple(subjects), {"source": str(root), "schema": SCHEMA},
                   tuple(sorted(reports, key=lambda r: (r.child_id, r.test_id.index))))


def write_dataset(dataset: Dataset, path: Union[str, os.PathLike], header_lines: Iterable[str] = ()) -> Path:
    """Write ``subjects.csv`` (optionally prefixed by ``#`` comment lines) and one JSONL per session."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / SUBJECTS_INDEX, "w", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["child_id", "age_months"])
        for s in dataset.subjects:
            w.writerow([s.child_id, s.age_months])
    sdir = root / "sessions"
    sdir.mkdir(exist_ok=True)
    for s in dataset.subjects:
        for tid, sess in s.sessions.items():
            with open(sdir / f"{s.child_id}_{tid.value}.jsonl", "w") as fh:
                write_session(sess, fh)
    return root


def session_from_text(text: str) -> TestSession:
    return parse_session(io.StringIO(text))
