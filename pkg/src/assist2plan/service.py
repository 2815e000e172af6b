"""Local HTTP/WebSocket service for the assistive modeling loop.

Sessions hold the current wall history, cached corners, and a proposal
buffer derived from the current revision. Mutations use optimistic
concurrency: every write carries the revision it was computed against and
conflicts with 409 when stale. After each mutation the new proposal rollout
is pushed to connected websocket clients; polling works too.
"""

from __future__ import annotations

import io
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse, Response

from . import autodiff as ad
from .enumeration import (
    CandidateWall,
    EdgeClassifier,
    EdgeClassifierConfig,
    enumerate_and_classify,
)
from .geometry import WallSegment, remove_duplicates
from .nextwall import (
    NextWallConfig,
    NextWallModel,
    assign_timesteps,
    score_candidates,
    top_k_alternatives,
)
from .raster import DensityImage
from .sessions import (
    EditEvent,
    load_session,
    replay,
    split_into_sessions,
    wall_state,
)
from .synthetic import load_floor


@dataclass
class ServiceConfig:
    seed: int = 0
    nextwall_checkpoint: Optional[str] = None
    edge_checkpoint: Optional[str] = None
    prob_threshold: float = 0.5
    duplicate_threshold: float = 10.0
    default_proposals: int = 5
    nextwall: NextWallConfig = field(default_factory=NextWallConfig)
    edge: EdgeClassifierConfig = field(default_factory=EdgeClassifierConfig)


class AssistSession:
    def __init__(self, session_id: str, floor_id: str):
        self.session_id = session_id
        self.floor_id = floor_id
        self.revision = 0
        self.density: Optional[DensityImage] = None
        self.corners: list[tuple[float, float]] = []
        self.user_corners: list[tuple[float, float]] = []
        self.history: list[WallSegment] = []
        self.ids: list[str] = []
        self.imported_count = 0
        self.provided: list[CandidateWall] = []
        self.events: list[EditEvent] = []
        self.proposals: list[dict] = []
        self.proposals_revision = -1
        self.lock = threading.Lock()
        self._id_counter = 0
        self.sockets: list[WebSocket] = []

    def fresh_id(self) -> str:
        self._id_counter += 1
        return f"w{self._id_counter:04d}"

    def clock(self) -> float:
        return float(len(self.events))

    def log(self, kind: str, wid: str, state: Optional[dict], before: Optional[dict]):
        self.events.append(
            EditEvent(kind=kind, element_id=wid, t=self.clock(), state=state, before=before)
        )

    def timestepped_history(self) -> list[WallSegment]:
        n = len(self.history)
        out = []
        for i, w in enumerate(self.history):
            if i < self.imported_count:
                t = 10
            else:
                t = min(10, n - i)
            out.append(w.with_timestep(t))
        return out


def _wall_from_payload(d: dict) -> WallSegment:
    try:
        th = d.get("thickness")
        return WallSegment(
            float(d["x0"]), float(d["y0"]), float(d["x1"]), float(d["y1"]),
            thickness=int(th) if th is not None else None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise HTTPException(status_code=422, detail=f"invalid wall payload: {e}")


def create_app(config: ServiceConfig = ServiceConfig()) -> FastAPI:
    app = FastAPI(title="assist2plan", version="0.1.0")
    sessions: dict[str, AssistSession] = {}
    counter = {"n": 0}

    model = NextWallModel(config.nextwall)
    if config.nextwall_checkpoint:
        model.load_state_dict(ad.load_checkpoint(config.nextwall_checkpoint))
    model.eval()

    classifier = EdgeClassifier(config.edge)
    if config.edge_checkpoint:
        classifier.load_state_dict(ad.load_checkpoint(config.edge_checkpoint))
    classifier.eval()

    def get_session(sid: str) -> AssistSession:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid!r}")
        return s

    def check_revision(s: AssistSession, revision: int):
        if revision != s.revision:
            raise HTTPException(
                status_code=409,
                detail=f"stale revision {revision}, current is {s.revision}",
            )

    def candidate_walls(s: AssistSession) -> list[CandidateWall]:
        cands: list[CandidateWall]
        if s.provided:
            cands = list(s.provided)
        elif s.density is not None:
            corners = s.corners + s.user_corners
            cands = enumerate_and_classify(
                corners, s.density, classifier, config.prob_threshold
            )
        else:
            cands = []
        kept_walls = remove_duplicates(
            [c.wall for c in cands], s.history, config.duplicate_threshold
        )
        kept_set = {w.coords() for w in kept_walls}
        return [c for c in cands if c.wall.coords() in kept_set]

    def compute_proposals(s: AssistSession, n: int) -> list[dict]:
        cands = candidate_walls(s)
        if not cands or n < 1:
            return []
        out: list[dict] = []
        history = s.timestepped_history()
        pool = [c.wall for c in cands]
        probs = {c.wall.coords(): c.prob for c in cands}
        if not history:
            # seed-wall policy: highest enumeration probability
            seed_idx = int(np.argmax([c.prob for c in cands]))
            seed = pool.pop(seed_idx)
            history = [seed.with_timestep(1)]
            out.append({**wall_state(seed), "score": probs[seed.coords()], "seed": True})
        while len(out) < n and pool:
            state = assign_timesteps(history, pool)
            sc = score_candidates(state, model)
            best = int(np.argmax(sc.scores))
            wall = pool.pop(best)
            history = history + [wall]
            out.append({**wall_state(wall), "score": float(sc.scores[best]), "seed": False})
        return out

    def proposals_for(s: AssistSession, n: int) -> list[dict]:
        if s.proposals_revision != s.revision or len(s.proposals) < n:
            s.proposals = compute_proposals(s, max(n, config.default_proposals))
            s.proposals_revision = s.revision
        return s.proposals[:n]

    async def broadcast(s: AssistSession):
        payload = {
            "type": "proposals",
            "revision": s.revision,
            "walls": proposals_for(s, config.default_proposals),
        }
        dead = []
        for ws in s.sockets:
            try:
                await ws.send_json(payload)
            except Exception:
                dead.append(ws)
        for ws in dead:
            s.sockets.remove(ws)

    def mutated(s: AssistSession):
        s.revision += 1
        s.proposals = []
        s.proposals_revision = -1

    def state_payload(s: AssistSession) -> dict:
        walls = s.timestepped_history()
        return {
            "session_id": s.session_id,
            "floor_id": s.floor_id,
            "revision": s.revision,
            "walls": [
                {"id": wid, **wall_state(w), "timestep": w.timestep}
                for wid, w in zip(s.ids, walls)
            ],
            "corners": [list(c) for c in s.corners + s.user_corners],
            "extent": [s.density.width, s.density.height] if s.density else None,
            "n_candidates": len(candidate_walls(s)),
        }

    @app.post("/sessions")
    def create_session(payload: dict = Body(default={})):
        counter["n"] += 1
        s = AssistSession(f"s{counter['n']:06d}", str(payload.get("floor_id", "")))
        try:
            if "floor_dir" in payload:
                floor = load_floor(payload["floor_dir"])
                s.density = floor.density
                s.floor_id = s.floor_id or floor.floor_id
                if payload.get("oracle_corners"):
                    s.corners = list(floor.corners)
            elif "density_path" in payload:
                s.density = DensityImage.load(payload["density_path"])
            if "session_path" in payload:
                result = replay([load_session(payload["session_path"])])
                s.history = list(result.walls)
                s.ids = list(result.ids)
                s._id_counter = len(s.ids)
                for wid, w in zip(s.ids, s.history):
                    s.log("add", wid, wall_state(w), None)
            if "walls" in payload:
                # imported model without history: every wall becomes t=10
                for d in payload["walls"]:
                    w = _wall_from_payload(d)
                    wid = s.fresh_id()
                    s.history.append(w)
                    s.ids.append(wid)
                    s.log("add", wid, wall_state(w), None)
                s.imported_count = len(s.history)
            if "candidates" in payload:
                s.provided = [CandidateWall.from_dict(d) for d in payload["candidates"]]
                # the candidate endpoints are the known corner cache
                for c in s.provided:
                    for p in (c.wall.p0, c.wall.p1):
                        if not any(
                            (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 <= 1.0
                            for q in s.corners
                        ):
                            s.corners.append(p)
        except HTTPException:
            raise
        except Exception as e:
            raise HTTPException(status_code=400, detail=f"unparseable input: {e}")
        sessions[s.session_id] = s
        return state_payload(s)

    @app.get("/sessions/{sid}/state")
    def get_state(sid: str):
        return state_payload(get_session(sid))

    @app.get("/sessions/{sid}/proposals")
    def get_proposals(sid: str, n: int = Query(default=None)):
        s = get_session(sid)
        count = n if n is not None else config.default_proposals
        return {"revision": s.revision, "proposals": proposals_for(s, count)}

    @app.get("/sessions/{sid}/alternatives")
    def get_alternatives(sid: str):
        s = get_session(sid)
        cands = candidate_walls(s)
        history = s.timestepped_history()
        if not cands:
            return {"revision": s.revision, "alternatives": []}
        if not history:
            order = np.argsort([-c.prob for c in cands], kind="stable")[:3]
            alts = [
                {"index": int(i), **wall_state(cands[i].wall), "score": cands[i].prob}
                for i in order
            ]
            return {"revision": s.revision, "alternatives": alts}
        state = assign_timesteps(history, [c.wall for c in cands])
        top = top_k_alternatives(state, model, k=3)
        return {
            "revision": s.revision,
            "alternatives": [
                {"index": i, **wall_state(cands[i].wall), "score": score}
                for i, score in top
            ],
        }

    @app.post("/sessions/{sid}/accept")
    async def accept(sid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            count = int(payload.get("count", 1))
            props = proposals_for(s, count)
            if count > len(props):
                raise HTTPException(
                    status_code=422,
                    detail=f"asked for {count} proposals, only {len(props)} available",
                )
            for p in props[:count]:
                w = _wall_from_payload(p)
                wid = s.fresh_id()
                s.history.append(w)
                s.ids.append(wid)
                s.log("add", wid, wall_state(w), None)
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.post("/sessions/{sid}/reject")
    async def reject(sid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.post("/sessions/{sid}/choose")
    async def choose_alternative(sid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            index = int(payload.get("index", 0))
            cands = candidate_walls(s)
            if not (0 <= index < len(cands)):
                raise HTTPException(status_code=422, detail=f"no candidate {index}")
            w = cands[index].wall
            wid = s.fresh_id()
            s.history.append(w)
            s.ids.append(wid)
            s.log("add", wid, wall_state(w), None)
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.post("/sessions/{sid}/walls")
    async def add_wall(sid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            w = _wall_from_payload(payload)
            wid = s.fresh_id()
            s.history.append(w)
            s.ids.append(wid)
            s.user_corners.extend([w.p0, w.p1])
            s.log("add", wid, wall_state(w), None)
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.patch("/sessions/{sid}/walls/{wid}")
    async def modify_wall(sid: str, wid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            if wid not in s.ids:
                raise HTTPException(status_code=404, detail=f"unknown wall {wid!r}")
            i = s.ids.index(wid)
            old = s.history[i]
            merged = {**wall_state(old), **{k: payload[k] for k in
                      ("x0", "y0", "x1", "y1", "thickness") if k in payload}}
            w = _wall_from_payload(merged)
            # modification refreshes recency: the wall moves to the end
            del s.history[i], s.ids[i]
            if i < s.imported_count:
                s.imported_count -= 1
            s.history.append(w)
            s.ids.append(wid)
            s.user_corners.extend([w.p0, w.p1])
            s.log("modify", wid, wall_state(w), wall_state(old))
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.delete("/sessions/{sid}/walls/{wid}")
    async def delete_wall(sid: str, wid: str, revision: int = Query(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, revision)
            if wid not in s.ids:
                raise HTTPException(status_code=404, detail=f"unknown wall {wid!r}")
            i = s.ids.index(wid)
            old = s.history[i]
            del s.history[i], s.ids[i]
            if i < s.imported_count:
                s.imported_count -= 1
            s.log("delete", wid, None, wall_state(old))
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.post("/sessions/{sid}/corners")
    async def add_corner(sid: str, payload: dict = Body(...)):
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            try:
                s.user_corners.append((float(payload["x"]), float(payload["y"])))
            except (KeyError, TypeError, ValueError) as e:
                raise HTTPException(status_code=422, detail=f"invalid corner: {e}")
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.post("/sessions/{sid}/auto")
    async def run_automatic(sid: str, payload: dict = Body(...)):
        # automatic mode: unbounded proposals, accept everything
        s = get_session(sid)
        with s.lock:
            check_revision(s, int(payload.get("revision", -1)))
            props = compute_proposals(s, int(payload.get("n", 10**6)))
            for p in props:
                w = _wall_from_payload(p)
                wid = s.fresh_id()
                s.history.append(w)
                s.ids.append(wid)
                s.log("add", wid, wall_state(w), None)
            mutated(s)
        await broadcast(s)
        return state_payload(s)

    @app.get("/sessions/{sid}/export")
    def export_session(sid: str):
        s = get_session(sid)
        chunks = split_into_sessions(s.floor_id, s.events)
        return {"sessions": [c.to_dict() for c in chunks]}

    @app.get("/sessions/{sid}/density.png")
    def density_png(sid: str, plane: int = Query(default=0)):
        s = get_session(sid)
        if s.density is None or not (0 <= plane < 3):
            raise HTTPException(status_code=404, detail="no density plane")
        from PIL import Image

        arr = np.clip(s.density.data[plane] * 255.0, 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(arr, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.websocket("/sessions/{sid}/ws")
    async def session_ws(ws: WebSocket, sid: str):
        s = sessions.get(sid)
        if s is None:
            await ws.close(code=4404)
            return
        await ws.accept()
        s.sockets.append(ws)
        await ws.send_json(
            {
                "type": "proposals",
                "revision": s.revision,
                "walls": proposals_for(s, config.default_proposals),
            }
        )
        try:
            while True:
                await ws.receive_text()
        except WebSocketDisconnect:
            if ws in s.sockets:
                s.sockets.remove(ws)

    return app
