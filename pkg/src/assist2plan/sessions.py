"""Edit-session recording format and step-by-step replay.

A session file is a JSON object:
  {"floor_id": str, "session_index": int,
   "events": [{"kind": "add"|"modify"|"delete", "id": str, "t": float,
               "state": {...}, "before": {...}}]}
with "state" absent for deletes and "before" present for modify/delete.
Unknown fields are preserved across a load/save round trip. Long recordings
are split into 15-minute sessions on save.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .geometry import WallGraph, WallSegment

SESSION_LIMIT_SECONDS = 15.0 * 60.0

EVENT_KINDS = ("add", "modify", "delete")


class SessionFormatError(ValueError):
    pass


@dataclass
class EditEvent:
    kind: str
    element_id: str
    t: float
    state: Optional[dict] = None
    before: Optional[dict] = None
    raw: Optional[dict] = None

    def to_dict(self) -> dict:
        if self.raw is not None:
            d = dict(self.raw)
            d["kind"] = self.kind
            d["id"] = self.element_id
            d["t"] = self.t
            if self.state is not None:
                d["state"] = self.state
            else:
                d.pop("state", None)
            if self.before is not None:
                d["before"] = self.before
            else:
                d.pop("before", None)
            return d
        d = {"kind": self.kind, "id": self.element_id, "t": self.t}
        if self.state is not None:
            d["state"] = self.state
        if self.before is not None:
            d["before"] = self.before
        return d


@dataclass
class EditSession:
    floor_id: str
    session_index: int
    events: list[EditEvent] = field(default_factory=list)
    raw: Optional[dict] = None

    def to_dict(self) -> dict:
        d = dict(self.raw) if self.raw is not None else {}
        d["floor_id"] = self.floor_id
        d["session_index"] = self.session_index
        d["events"] = [e.to_dict() for e in self.events]
        return d


def wall_state(seg: WallSegment) -> dict:
    return {
        "x0": seg.x0,
        "y0": seg.y0,
        "x1": seg.x1,
        "y1": seg.y1,
        "thickness": seg.thickness,
    }


def wall_from_state(state: dict, timestep: int = 0) -> WallSegment:
    th = state.get("thickness")
    return WallSegment(
        x0=float(state["x0"]),
        y0=float(state["y0"]),
        x1=float(state["x1"]),
        y1=float(state["y1"]),
        thickness=int(th) if th is not None else None,
        timestep=timestep,
    )


def _parse_event(obj: dict, position: int) -> EditEvent:
    if not isinstance(obj, dict):
        raise SessionFormatError(f"event {position} is not an object")
    kind = obj.get("kind")
    if kind not in EVENT_KINDS:
        raise SessionFormatError(f"event {position} has unknown kind {kind!r}")
    if "id" not in obj:
        raise SessionFormatError(f"event {position} is missing an id")
    if "t" not in obj:
        raise SessionFormatError(f"event {position} is missing a timestamp")
    state = obj.get("state")
    before = obj.get("before")
    if kind in ("add", "modify") and state is None:
        raise SessionFormatError(f"{kind} event {position} is missing state")
    if kind in ("modify", "delete") and before is None:
        raise SessionFormatError(f"{kind} event {position} is missing before")
    if kind == "delete":
        state = None
    return EditEvent(
        kind=kind,
        element_id=str(obj["id"]),
        t=float(obj["t"]),
        state=state,
        before=before,
        raw=obj,
    )


def load_session(path) -> EditSession:
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SessionFormatError(f"malformed session JSON in {path}: {e}") from e
    if not isinstance(doc, dict):
        raise SessionFormatError(f"session root must be an object in {path}")
    events = [_parse_event(o, i) for i, o in enumerate(doc.get("events", []))]

    ts = [e.t for e in events]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise SessionFormatError(f"events out of timestamp order in {path}")
    if ts and ts[-1] - ts[0] > SESSION_LIMIT_SECONDS + 1e-9:
        raise SessionFormatError(
            f"session spans {ts[-1] - ts[0]:.1f}s, over the 15-minute limit"
        )

    session_index = int(doc.get("session_index", 0))
    # The first session of a floor is self-contained; later sessions may
    # reference elements introduced earlier, so only replay can verify those.
    if session_index == 0:
        known: set[str] = set()
        for i, e in enumerate(events):
            if e.kind == "add":
                known.add(e.element_id)
            elif e.element_id not in known:
                raise SessionFormatError(
                    f"event {i} ({e.kind}) references unknown id {e.element_id!r}"
                )
            if e.kind == "delete":
                known.discard(e.element_id)

    return EditSession(
        floor_id=str(doc.get("floor_id", "")),
        session_index=session_index,
        events=events,
        raw=doc,
    )


def save_session(session: EditSession, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(session.to_dict(), f, indent=2)
        f.write("\n")


def split_into_sessions(floor_id: str, events: list[EditEvent]) -> list[EditSession]:
    """Chunk an event stream into 15-minute sessions by timestamp."""
    sessions: list[EditSession] = []
    current: list[EditEvent] = []
    start = None
    for e in events:
        if start is not None and e.t - start > SESSION_LIMIT_SECONDS:
            sessions.append(EditSession(floor_id, len(sessions), current))
            current = []
            start = None
        if start is None:
            start = e.t
        current.append(e)
    if current or not sessions:
        sessions.append(EditSession(floor_id, len(sessions), current))
    return sessions


@dataclass
class ReplayResult:
    """Surviving walls in recency order (oldest first) plus the final graph."""

    walls: list[WallSegment]
    ids: list[str]
    graph: WallGraph


def replay(sessions: list[EditSession]) -> ReplayResult:
    """Apply recorded events in order, honoring that a modification makes a
    wall the most recent one again."""
    ordered = sorted(sessions, key=lambda s: s.session_index)
    states: dict[str, dict] = {}
    last_touch: dict[str, int] = {}
    step = 0
    for s in ordered:
        for e in s.events:
            step += 1
            if e.kind == "add":
                if e.element_id in states:
                    raise SessionFormatError(
                        f"add reuses live id {e.element_id!r} at step {step}"
                    )
                states[e.element_id] = dict(e.state)
                last_touch[e.element_id] = step
            elif e.kind == "modify":
                if e.element_id not in states:
                    raise SessionFormatError(
                        f"modify of unknown id {e.element_id!r} at step {step}"
                    )
                states[e.element_id] = dict(e.state)
                last_touch[e.element_id] = step
            else:
                if e.element_id not in states:
                    raise SessionFormatError(
                        f"delete of unknown id {e.element_id!r} at step {step}"
                    )
                del states[e.element_id]
                del last_touch[e.element_id]
    order = sorted(states, key=lambda k: last_touch[k])
    walls = [wall_from_state(states[k]) for k in order]
    return ReplayResult(walls=walls, ids=order, graph=WallGraph(walls=list(walls)))


def events_from_walls(walls: list[WallSegment], ids: Optional[list[str]] = None,
                      dt: float = 1.0) -> list[EditEvent]:
    """Re-record a wall sequence as a stream of add events."""
    if ids is None:
        ids = [f"w{i}" for i in range(len(walls))]
    return [
        EditEvent(kind="add", element_id=wid, t=i * dt, state=wall_state(w))
        for i, (wid, w) in enumerate(zip(ids, walls))
    ]
