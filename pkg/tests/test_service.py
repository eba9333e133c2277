"""Trial service tests: protocol shape, blindness, persistence, aggregation."""

import json
import threading
import urllib.error
import urllib.request

import numpy as np
import pytest

from blocktower.dataset import load_record, write_dataset
from blocktower.learn.model import FallMaskNet, init_weights, save_checkpoint
from blocktower.scenegen import GenConfig, generate_balanced
from blocktower.service import N_TEST, N_TRAINING, ServiceError, TrialService

CFG = GenConfig(master_seed=99, count_per_cell=1, test_count_per_cell=25)


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("svc_ds")
    samples = generate_balanced(CFG, "train") + generate_balanced(CFG, "test")
    write_dataset(samples, out, CFG)
    return out


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    model = FallMaskNet(input_hw=56)
    init_weights(model, 1234)
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(model, path)
    return path


@pytest.fixture()
def service(dataset_dir, checkpoint, tmp_path):
    return TrialService(dataset_dir, tmp_path / "sessions", checkpoint,
                        ui_dir=None)


@pytest.fixture()
def server(service):
    srv = service.make_server(port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_port}", service
    srv.shutdown()


def api(base, method, path, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read() or b"{}")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read() or b"{}")


def answer_truth(service, record_id):
    return "fall" if service.records[record_id].fell else "stay"


def test_session_creation_counts(server):
    base, _ = server
    status, body = api(base, "POST", "/api/session",
                       {"subject_label": "s1", "seed": 7})
    assert status == 200
    assert body["n_training"] == 50
    assert body["n_test"] == 100


def test_same_seed_gives_identical_plans(service):
    a = service.create_session("a", seed=42)
    b = service.create_session("b", seed=42)
    sa = service._sessions[a["session_id"]]
    sb = service._sessions[b["session_id"]]
    assert sa.training_plan == sb.training_plan
    assert sa.test_plan == sb.test_plan
    assert not set(sa.training_plan) & set(sa.test_plan)
    assert len(set(sa.plan())) == 150


def test_plans_stratified_across_sizes(service):
    info = service.create_session("s", seed=5)
    session = service._sessions[info["session_id"]]
    comp = session.size_composition
    assert sum(comp["training"].values()) == 50
    assert sum(comp["test"].values()) == 100
    assert max(comp["training"].values()) - min(comp["training"].values()) <= 1
    assert max(comp["test"].values()) - min(comp["test"].values()) <= 1


def test_insufficient_dataset_409(tmp_path, checkpoint):
    cfg = GenConfig(master_seed=3, count_per_cell=1, test_count_per_cell=10)
    samples = generate_balanced(cfg, "test")
    write_dataset(samples, tmp_path / "small", cfg)
    svc = TrialService(tmp_path / "small", tmp_path / "sess", checkpoint)
    with pytest.raises(ServiceError) as err:
        svc.create_session("x", seed=1)
    assert err.value.status == 409


def test_trial_flow_and_feedback(server):
    base, service = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "x", "seed": 11})
    sid = created["session_id"]

    status, trial = api(base, "GET", f"/api/session/{sid}/trial")
    assert status == 200
    assert trial["trial_index"] == 0
    assert trial["phase"] == "training"
    assert trial["image_url"].startswith("/api/image/")
    # idempotent until answered
    assert api(base, "GET", f"/api/session/{sid}/trial")[1] == trial

    record_id = trial["image_url"].split("/")[3]
    truth = answer_truth(service, record_id)
    status, fb = api(base, "POST", f"/api/session/{sid}/response",
                     {"prediction": truth, "trial_index": 0})
    assert status == 200
    assert fb["correct"] is True
    assert fb["outcome_image"] == f"/api/image/{record_id}/4"

    # wrong answer on the next trial reports incorrect
    _, trial = api(base, "GET", f"/api/session/{sid}/trial")
    record_id = trial["image_url"].split("/")[3]
    wrong = "stay" if answer_truth(service, record_id) == "fall" else "fall"
    _, fb = api(base, "POST", f"/api/session/{sid}/response",
                {"prediction": wrong, "trial_index": 1})
    assert fb["correct"] is False


def test_duplicate_response_409(server):
    base, _ = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "d", "seed": 12})
    sid = created["session_id"]
    assert api(base, "POST", f"/api/session/{sid}/response",
               {"prediction": "fall", "trial_index": 0})[0] == 200
    status, body = api(base, "POST", f"/api/session/{sid}/response",
                       {"prediction": "fall", "trial_index": 0})
    assert status == 409
    assert "error" in body


def test_bad_prediction_400(server):
    base, _ = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "b", "seed": 13})
    sid = created["session_id"]
    status, _ = api(base, "POST", f"/api/session/{sid}/response",
                    {"prediction": "topple"})
    assert status == 400


def test_unknown_session_404(server):
    base, _ = server
    assert api(base, "GET", "/api/session/nope/trial")[0] == 404


def complete_session(base, service, sid, subject=None):
    """Finish a session; subject maps record_id -> prediction (default truth)."""
    replies = []
    while True:
        status, trial = api(base, "GET", f"/api/session/{sid}/trial")
        if status == 410:
            break
        rid = trial["image_url"].split("/")[3]
        pred = subject(rid) if subject else answer_truth(service, rid)
        status, body = api(base, "POST", f"/api/session/{sid}/response",
                           {"prediction": pred, "trial_index": trial["trial_index"]})
        assert status == 200
        replies.append((trial["phase"], body))
    return replies


def test_full_session_protocol_and_blindness(server):
    base, service = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "p", "seed": 21})
    sid = created["session_id"]
    replies = complete_session(base, service, sid)
    assert len(replies) == 150
    training = [b for phase, b in replies if phase == "training"]
    test = [b for phase, b in replies if phase == "test"]
    assert len(training) == 50 and len(test) == 100
    assert all("correct" in b and "outcome_image" in b for b in training)
    assert all(b == {} for b in test)  # blindness: no feedback fields at all

    status, _ = api(base, "GET", f"/api/session/{sid}/trial")
    assert status == 410
    status, _ = api(base, "POST", f"/api/session/{sid}/response",
                    {"prediction": "fall"})
    assert status == 409


def test_results_ground_truth_subject(server):
    base, service = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "g", "seed": 31})
    sid = created["session_id"]
    status, _ = api(base, "GET", f"/api/session/{sid}/results")
    assert status == 409  # incomplete
    complete_session(base, service, sid)
    status, results = api(base, "GET", f"/api/session/{sid}/results")
    assert status == 200
    assert results["subject_accuracy"] == 1.0
    assert results["subject_accuracy_ci"] == 0.0
    assert results["n_test"] == 100
    assert set(results["per_size"]) <= {"2", "3", "4"}
    assert results["model_roc"]["points"][0] == [0.0, 0.0]
    assert results["model_roc"]["points"][-1] == [1.0, 1.0]


def test_results_match_eval_module(server):
    base, service = server
    _, created = api(base, "POST", "/api/session", {"subject_label": "e", "seed": 41})
    sid = created["session_id"]
    complete_session(base, service, sid)
    _, results = api(base, "GET", f"/api/session/{sid}/results")

    from blocktower.evalmetrics import evaluate

    session = service._sessions[sid]
    examples = [load_record(service.dataset_dir, service.records[rid])
                for rid in session.test_plan]
    report = evaluate(service.model, examples)
    assert abs(results["model_accuracy"] - report.accuracy) < 1e-12
    assert abs(results["model_roc"]["auc"] - report.auc) < 1e-12


def test_persistence_across_restart(dataset_dir, checkpoint, tmp_path):
    sessions_dir = tmp_path / "sessions"
    svc1 = TrialService(dataset_dir, sessions_dir, checkpoint)
    info = svc1.create_session("r", seed=77)
    sid = info["session_id"]
    for i in range(7):
        trial = svc1.current_trial(sid)
        svc1.submit_response(sid, "fall", trial_index=trial["trial_index"])
    # new process simulation: fresh instance over the same directory
    svc2 = TrialService(dataset_dir, sessions_dir, checkpoint)
    trial = svc2.current_trial(sid)
    assert trial["trial_index"] == 7
    s1 = svc1._sessions[sid]
    s2 = svc2._sessions[sid]
    assert s1.training_plan == s2.training_plan
    assert [r["prediction"] for r in s2.responses] == ["fall"] * 7


def test_aggregate_vote_fractions(server):
    base, service = server
    _, a = api(base, "POST", "/api/session", {"subject_label": "a", "seed": 55})
    complete_session(base, service, a["session_id"],
                     subject=lambda rid: "fall")
    status, agg = api(base, "GET", "/api/aggregate")
    assert status == 200
    assert agg["n_sessions"] >= 1
    fracs = list(agg["vote_fractions"].values())
    assert set(fracs) <= {0.0, 1.0}

    # opposite subject on the same plan drives shared records to 0.5
    _, b = api(base, "POST", "/api/session", {"subject_label": "b", "seed": 55})
    complete_session(base, service, b["session_id"],
                     subject=lambda rid: "stay")
    _, agg2 = api(base, "GET", "/api/aggregate")
    shared = service._sessions[a["session_id"]].test_plan
    assert all(agg2["vote_fractions"][rid] == 0.5 for rid in shared)


def test_aggregate_without_complete_sessions_404(server):
    base, service = server
    # a brand-new service over an empty sessions dir has nothing aggregated
    status, _ = api(base, "GET", "/api/aggregate")
    assert status == 404


def test_image_endpoints(server):
    base, service = server
    rid = service.test_records[0].id
    req = urllib.request.Request(f"{base}/api/image/{rid}/0")
    with urllib.request.urlopen(req) as resp:
        assert resp.headers["Content-Type"] == "image/png"
        assert resp.read().startswith(b"\x89PNG")
    req = urllib.request.Request(f"{base}/api/image/{rid}/4?format=ppm")
    with urllib.request.urlopen(req) as resp:
        assert resp.headers["Content-Type"] == "image/x-portable-pixmap"
        assert resp.read().startswith(b"P6\n")
    assert api(base, "GET", "/api/image/nope/0")[0] == 404
    assert api(base, "GET", f"/api/image/{rid}/7")[0] == 404


def test_static_placeholder_served(server):
    base, _ = server
    req = urllib.request.Request(base + "/")
    with urllib.request.urlopen(req) as resp:
        assert resp.headers["Content-Type"].startswith("text/html")
        assert b"blocktower" in resp.read()


def test_built_ui_served_from_dist(dataset_dir, checkpoint, tmp_path):
    import os

    dist = os.path.join("frontend", "dist")
    if not os.path.isfile(os.path.join(dist, "index.html")):
        pytest.skip("frontend not built")
    svc = TrialService(dataset_dir, tmp_path / "s", checkpoint, ui_dir=dist)
    srv = svc.make_server(port=0)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    try:
        base = f"http://127.0.0.1:{srv.server_port}"
        with urllib.request.urlopen(base + "/") as resp:
            body = resp.read()
            assert b"Block tower trials" in body
            assert resp.headers["Content-Type"].startswith("text/html")
        with urllib.request.urlopen(base + "/main.js") as resp:
            assert resp.headers["Content-Type"].startswith("text/javascript")
        with urllib.request.urlopen(base + "/styles.css") as resp:
            assert resp.headers["Content-Type"].startswith("text/css")
    finally:
        srv.shutdown()
