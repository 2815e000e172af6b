"""HTTP/WebSocket assist-service contract tests."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from assist2plan.nextwall import NextWallConfig
from assist2plan.service import ServiceConfig, create_app
from assist2plan.sessions import EditSession, replay, _parse_event
from assist2plan.synthetic import generate_synthetic_floor, save_floor


def small_config():
    return ServiceConfig(
        seed=0,
        nextwall=NextWallConfig(blocks=1, heads=2, ff_dim=32, dropout=0.0, seed=0),
    )


def cand(x0, y0, x1, y1, prob, th=4):
    return {"x0": x0, "y0": y0, "x1": x1, "y1": y1, "thickness": th, "prob": prob}


CANDS = [
    cand(0, 0, 60, 0, 0.95),
    cand(60, 0, 60, 40, 0.9),
    cand(60, 40, 0, 40, 0.85),
    cand(0, 40, 0, 0, 0.8),
    cand(20, 0, 20, 40, 0.75),
]


@pytest.fixture()
def client():
    return TestClient(create_app(small_config()))


def make_session(client, **extra):
    payload = {"floor_id": "t1", "candidates": CANDS, **extra}
    r = client.post("/sessions", json=payload)
    assert r.status_code == 200
    return r.json()


class TestCreateSession:
    def test_distinct_ids(self, client):
        a = make_session(client)
        b = make_session(client)
        assert a["session_id"] != b["session_id"]

    def test_empty_floor(self, client):
        s = make_session(client)
        assert s["walls"] == [] and s["revision"] == 0
        assert s["n_candidates"] == len(CANDS)

    def test_imported_walls_marked_old(self, client):
        s = make_session(client, walls=[cand(0, 0, 60, 0, 0.5)])
        assert s["walls"][0]["timestep"] == 10

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/nope/state").status_code == 404

    def test_unparseable_input_400(self, client):
        r = client.post("/sessions", json={"floor_dir": "/does/not/exist"})
        assert r.status_code == 400

    def test_create_from_floor_dir(self, client, tmp_path):
        floor = generate_synthetic_floor(2)
        save_floor(floor, tmp_path / "f")
        r = client.post(
            "/sessions", json={"floor_dir": str(tmp_path / "f"), "oracle_corners": True}
        )
        assert r.status_code == 200
        body = r.json()
        assert body["extent"] == [256, 256]
        assert len(body["corners"]) == len(floor.corners)
        png = client.get(f"/sessions/{body['session_id']}/density.png?plane=1")
        assert png.status_code == 200
        assert png.headers["content-type"] == "image/png"

    def test_create_from_session_json(self, client, tmp_path):
        doc = {
            "floor_id": "f9",
            "session_index": 0,
            "events": [
                {"kind": "add", "id": "a", "t": 0.0,
                 "state": {"x0": 0, "y0": 0, "x1": 30, "y1": 0, "thickness": 4}},
                {"kind": "add", "id": "b", "t": 1.0,
                 "state": {"x0": 30, "y0": 0, "x1": 30, "y1": 30, "thickness": 4}},
            ],
        }
        p = tmp_path / "s.json"
        p.write_text(json.dumps(doc))
        r = client.post("/sessions", json={"session_path": str(p), "candidates": CANDS})
        body = r.json()
        assert [w["id"] for w in body["walls"]] == ["a", "b"]
        # replayed history keeps recency: last added wall is most recent
        assert body["walls"][-1]["timestep"] == 1


class TestProposals:
    def test_n_one(self, client):
        s = make_session(client)
        r = client.get(f"/sessions/{s['session_id']}/proposals", params={"n": 1}).json()
        assert len(r["proposals"]) == 1
        # seed-wall policy: highest enumeration probability first
        assert r["proposals"][0]["x0"] == 0 and r["proposals"][0]["score"] == 0.95

    def test_deterministic_between_calls(self, client):
        s = make_session(client)
        a = client.get(f"/sessions/{s['session_id']}/proposals", params={"n": 4}).json()
        b = client.get(f"/sessions/{s['session_id']}/proposals", params={"n": 4}).json()
        assert a == b

    def test_never_duplicates_existing(self, client):
        # candidate within 10 px of the existing wall must be filtered
        s = make_session(
            client,
            walls=[{"x0": 1, "y0": 1, "x1": 61, "y1": 1, "thickness": 4}],
        )
        r = client.get(f"/sessions/{s['session_id']}/proposals", params={"n": 10}).json()
        for p in r["proposals"]:
            assert not (abs(p["x0"] - 0) < 10 and abs(p["y0"] - 0) < 10
                        and abs(p["x1"] - 60) < 10 and abs(p["y1"] - 0) < 10)

    def test_no_candidates_empty(self, client):
        r = client.post("/sessions", json={"floor_id": "bare"})
        sid = r.json()["session_id"]
        assert client.get(f"/sessions/{sid}/proposals").json()["proposals"] == []


class TestAcceptRejectChoose:
    def test_accept_grows_history_and_log(self, client):
        s = make_session(client)
        sid = s["session_id"]
        r = client.post(f"/sessions/{sid}/accept", json={"count": 3, "revision": 0})
        assert r.status_code == 200
        body = r.json()
        assert len(body["walls"]) == 3
        assert body["revision"] == 1
        exported = client.get(f"/sessions/{sid}/export").json()
        events = [e for sess in exported["sessions"] for e in sess["events"]]
        assert [e["kind"] for e in events] == ["add", "add", "add"]

    def test_stale_revision_conflict(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
        r = client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
        assert r.status_code == 409
        state = client.get(f"/sessions/{sid}/state").json()
        assert len(state["walls"]) == 1  # no mutation on conflict

    def test_reject_bumps_revision_only(self, client):
        s = make_session(client)
        sid = s["session_id"]
        r = client.post(f"/sessions/{sid}/reject", json={"revision": 0}).json()
        assert r["revision"] == 1 and r["walls"] == []

    def test_alternatives_top3(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
        alts = client.get(f"/sessions/{sid}/alternatives").json()["alternatives"]
        assert 1 <= len(alts) <= 3
        scores = [a["score"] for a in alts]
        assert scores == sorted(scores, reverse=True)

    def test_choose_alternative_resumes_from_it(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
        alts = client.get(f"/sessions/{sid}/alternatives").json()["alternatives"]
        pick = alts[1] if len(alts) > 1 else alts[0]
        r = client.post(f"/sessions/{sid}/choose", json={"index": pick["index"], "revision": 1})
        assert r.status_code == 200
        walls = r.json()["walls"]
        assert walls[-1]["x0"] == pick["x0"] and walls[-1]["timestep"] == 1

    def test_empty_candidates_alternatives_empty(self, client):
        r = client.post("/sessions", json={"floor_id": "bare"})
        sid = r.json()["session_id"]
        alts = client.get(f"/sessions/{sid}/alternatives").json()
        assert alts["alternatives"] == []

    def test_automatic_mode_accepts_all(self, client):
        s = make_session(client)
        sid = s["session_id"]
        r = client.post(f"/sessions/{sid}/auto", json={"revision": 0})
        assert len(r.json()["walls"]) == len(CANDS)


class TestUserGeometry:
    def test_add_wall_and_events(self, client):
        s = make_session(client)
        sid = s["session_id"]
        r = client.post(
            f"/sessions/{sid}/walls",
            json={"x0": 5, "y0": 5, "x1": 50, "y1": 5, "thickness": 6, "revision": 0},
        )
        assert r.status_code == 200
        assert r.json()["walls"][0]["thickness"] == 6

    def test_zero_length_wall_rejected_no_bump(self, client):
        s = make_session(client)
        sid = s["session_id"]
        r = client.post(
            f"/sessions/{sid}/walls",
            json={"x0": 5, "y0": 5, "x1": 5, "y1": 5, "revision": 0},
        )
        assert r.status_code == 422
        assert client.get(f"/sessions/{sid}/state").json()["revision"] == 0

    def test_modify_wall_refreshes_recency(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 2, "revision": 0})
        state = client.get(f"/sessions/{sid}/state").json()
        first_id = state["walls"][0]["id"]
        r = client.patch(
            f"/sessions/{sid}/walls/{first_id}",
            json={"thickness": 8, "revision": state["revision"]},
        )
        walls = r.json()["walls"]
        assert walls[-1]["id"] == first_id
        assert walls[-1]["timestep"] == 1
        assert walls[-1]["thickness"] == 8

    def test_delete_wall(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
        state = client.get(f"/sessions/{sid}/state").json()
        wid = state["walls"][0]["id"]
        r = client.delete(f"/sessions/{sid}/walls/{wid}", params={"revision": 1})
        assert r.status_code == 200
        assert r.json()["walls"] == []

    def test_add_corner_extends_cache(self, client, tmp_path):
        floor = generate_synthetic_floor(3)
        save_floor(floor, tmp_path / "f")
        r = client.post(
            "/sessions", json={"floor_dir": str(tmp_path / "f"), "oracle_corners": True}
        )
        sid = r.json()["session_id"]
        before = r.json()["corners"]
        r2 = client.post(f"/sessions/{sid}/corners", json={"x": 77.0, "y": 99.0, "revision": 0})
        after = r2.json()["corners"]
        assert len(after) == len(before) + 1
        assert [77.0, 99.0] in after


class TestExportReplay:
    def test_export_replay_reproduces_graph(self, client):
        s = make_session(client)
        sid = s["session_id"]
        client.post(f"/sessions/{sid}/accept", json={"count": 2, "revision": 0})
        client.post(
            f"/sessions/{sid}/walls",
            json={"x0": 7, "y0": 7, "x1": 30, "y1": 7, "revision": 1},
        )
        state = client.get(f"/sessions/{sid}/state").json()
        exported = client.get(f"/sessions/{sid}/export").json()
        sessions = []
        for doc in exported["sessions"]:
            events = [_parse_event(e, i) for i, e in enumerate(doc["events"])]
            sessions.append(EditSession(doc["floor_id"], doc["session_index"], events))
        result = replay(sessions)
        got = [(w.x0, w.y0, w.x1, w.y1) for w in result.walls]
        want = [(w["x0"], w["y0"], w["x1"], w["y1"]) for w in state["walls"]]
        assert got == want
        assert result.ids == [w["id"] for w in state["walls"]]


class TestWebSocket:
    def test_push_after_mutation(self, client):
        s = make_session(client)
        sid = s["session_id"]
        with client.websocket_connect(f"/sessions/{sid}/ws") as ws:
            first = ws.receive_json()
            assert first["type"] == "proposals" and first["revision"] == 0
            client.post(f"/sessions/{sid}/accept", json={"count": 1, "revision": 0})
            push = ws.receive_json()
            assert push["type"] == "proposals"
            assert push["revision"] == 1
            assert isinstance(push["walls"], list)

    def test_unknown_session_closed(self, client):
        with pytest.raises(Exception):
            with client.websocket_connect("/sessions/ghost/ws") as ws:
                ws.receive_json()


class TestScriptedDeterminism:
    def test_same_script_same_state(self, client):
        def run_script():
            s = make_session(client)
            sid = s["session_id"]
            rev = 0
            client.post(f"/sessions/{sid}/accept", json={"count": 2, "revision": rev})
            rev += 1
            client.post(f"/sessions/{sid}/reject", json={"revision": rev})
            rev += 1
            client.post(
                f"/sessions/{sid}/walls",
                json={"x0": 3, "y0": 9, "x1": 44, "y1": 9, "revision": rev},
            )
            state = client.get(f"/sessions/{sid}/state").json()
            return [(w["x0"], w["y0"], w["x1"], w["y1"], w["timestep"]) for w in state["walls"]]

        assert run_script() == run_script()
