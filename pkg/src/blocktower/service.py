"""HTTP service for the human-subject trials.

Protocol: 50 training trials with correctness feedback and the outcome
image, then 100 test trials with acknowledgment only. Trial plans are drawn
without replacement from the dataset's test split, stratified evenly across
tower sizes, deterministically from a recorded seed. Each response is
persisted to the session file before the HTTP reply, so a restart loses
nothing. No test-phase reply ever contains correctness, labels, or outcome
images.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .dataset import load_record, read_manifest
from .evalmetrics import ConstantInputError, binomial_ci, pearson, roc_curve
from .imageio import encode_png, read_ppm
from .learn.model import load_checkpoint
from .rng import Pcg32, derive_seed

N_TRAINING = 50
N_TEST = 100
PLAN_STREAM = 0x7121A15


class ServiceError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Session:
    session_id: str
    subject_label: str
    seed: int
    training_plan: list[str]
    test_plan: list[str]
    responses: list[dict]
    size_composition: dict

    @property
    def n_answered(self) -> int:
        return len(self.responses)

    @property
    def state(self) -> str:
        if self.n_answered < N_TRAINING:
            return "in-training"
        if self.n_answered < N_TRAINING + N_TEST:
            return "in-test"
        return "complete"

    def plan(self) -> list[str]:
        return self.training_plan + self.test_plan

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "subject_label": self.subject_label,
            "seed": self.seed,
            "training_plan": self.training_plan,
            "test_plan": self.test_plan,
            "responses": self.responses,
            "size_composition": self.size_composition,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Session":
        return cls(**{k: raw[k] for k in (
            "session_id", "subject_label", "seed", "training_plan",
            "test_plan", "responses", "size_composition")})


class TrialService:
    """Session book-keeping, plan drawing, metrics; transport-agnostic."""

    def __init__(self, dataset_dir, sessions_dir, checkpoint_path=None,
                 ui_dir="auto"):
        self.dataset_dir = dataset_dir
        self.sessions_dir = sessions_dir
        os.makedirs(sessions_dir, exist_ok=True)
        self.manifest = read_manifest(dataset_dir)
        self.records = {r.id: r for r in self.manifest.records}
        self.test_records = [r for r in self.manifest.records if r.split == "test"]
        self.model = load_checkpoint(checkpoint_path) if checkpoint_path else None
        if ui_dir == "auto":
            candidate = os.path.join("frontend", "dist")
            ui_dir = candidate if os.path.isdir(candidate) else None
        self.ui_dir = ui_dir
        self._lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._sessions: dict[str, Session] = {}
        self._confidence_cache: dict[str, float] = {}
        self._load_sessions()

    # -- persistence ----------------------------------------------------------

    def _session_path(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, f"{session_id}.json")

    def _load_sessions(self) -> None:
        for name in sorted(os.listdir(self.sessions_dir)):
            if name.endswith(".json"):
                with open(os.path.join(self.sessions_dir, name), encoding="utf-8") as fh:
                    session = Session.from_json(json.load(fh))
                self._sessions[session.session_id] = session
                self._session_locks[session.session_id] = threading.Lock()

    def _persist(self, session: Session) -> None:
        path = self._session_path(session.session_id)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(session.to_json(), fh)
            fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _get(self, session_id: str) -> tuple[Session, threading.Lock]:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is None:
                raise ServiceError(404, f"unknown session {session_id}")
            return session, self._session_locks[session_id]

    # -- plan drawing -----------------------------------------------------------

    def _draw_plans(self, seed: int) -> tuple[list[str], list[str], dict]:
        rng = Pcg32(derive_seed(seed, PLAN_STREAM))
        by_size: dict[int, list[str]] = {}
        for r in self.test_records:
            by_size.setdefault(r.n_blocks, []).append(r.id)
        pools = []
        for size in sorted(by_size):
            ids = sorted(by_size[size])
            rng.shuffle(ids)
            pools.append(ids)
        drawn: list[str] = []
        cursor = [0] * len(pools)
        while len(drawn) < N_TRAINING + N_TEST:
            progressed = False
            for k, pool in enumerate(pools):
                if cursor[k] < len(pool) and len(drawn) < N_TRAINING + N_TEST:
                    drawn.append(pool[cursor[k]])
                    cursor[k] += 1
                    progressed = True
            if not progressed:
                raise ServiceError(409, "insufficient test records for a session")
        training, test = drawn[:N_TRAINING], drawn[N_TRAINING:]
        composition = {
            "training": _size_counts(training, self.records),
            "test": _size_counts(test, self.records),
        }
        return training, test, composition

    def create_session(self, subject_label: str, seed=None) -> dict:
        if len(self.test_records) < N_TRAINING + N_TEST:
            raise ServiceError(
                409,
                f"dataset has {len(self.test_records)} test records; "
                f"{N_TRAINING + N_TEST} required",
            )
        if seed is None:
            seed = int.from_bytes(os.urandom(8), "little")
        seed = int(seed)
        training, test, composition = self._draw_plans(seed)
        with self._lock:
            session_id = f"{seed:016x}-{len(self._sessions):04d}"
            session = Session(
                session_id=session_id,
                subject_label=str(subject_label),
                seed=seed,
                training_plan=training,
                test_plan=test,
                responses=[],
                size_composition=composition,
            )
            self._sessions[session_id] = session
            self._session_locks[session_id] = threading.Lock()
            self._persist(session)
        return {"session_id": session_id, "n_training": N_TRAINING, "n_test": N_TEST}

    # -- trial flow ---------------------------------------------------------------

    def current_trial(self, session_id: str) -> dict:
        session, lock = self._get(session_id)
        with lock:
            if session.state == "complete":
                raise ServiceError(410, "session complete")
            index = session.n_answered
            record_id = session.plan()[index]
            phase = "training" if index < N_TRAINING else "test"
            return {
                "trial_index": index,
                "phase": phase,
                "image_url": f"/api/image/{record_id}/0",
                "n_training": N_TRAINING,
                "n_test": N_TEST,
            }

    def submit_response(self, session_id: str, prediction: str,
                        trial_index=None) -> dict:
        if prediction not in ("fall", "stay"):
            raise ServiceError(400, f"prediction must be fall or stay, got {prediction!r}")
        session, lock = self._get(session_id)
        with lock:
            index = session.n_answered
            if session.state == "complete":
                raise ServiceError(409, "no pending trial: session complete")
            if trial_index is not None and int(trial_index) != index:
                raise ServiceError(
                    409, f"trial {trial_index} is not pending (current {index})"
                )
            record = self.records[session.plan()[index]]
            phase = "training" if index < N_TRAINING else "test"
            correct = (prediction == "fall") == record.fell
            session.responses.append({
                "record_id": record.id,
                "phase": phase,
                "prediction": prediction,
                "correct": correct,
                "timestamp": time.time(),
            })
            self._persist(session)  # write-ahead of the reply
            if phase == "training":
                return {
                    "correct": correct,
                    "outcome_image": f"/api/image/{record.id}/4",
                }
            return {}

    # -- metrics --------------------------------------------------------------------

    def _model_confidence(self, record_id: str) -> float:
        if self.model is None:
            raise ServiceError(409, "no model checkpoint loaded")
        if record_id not in self._confidence_cache:
            example = load_record(self.dataset_dir, self.records[record_id])
            prob = self.model.forward_fall(example.image[None])[0]
            self._confidence_cache[record_id] = float(prob)
        return self._confidence_cache[record_id]

    def session_results(self, session_id: str) -> dict:
        session, lock = self._get(session_id)
        with lock:
            if session.state != "complete":
                raise ServiceError(409, f"session {session.state}; results need completion")
            test_responses = session.responses[N_TRAINING:]
        labels = np.array([self.records[r["record_id"]].fell for r in test_responses])
        human = np.array([r["prediction"] == "fall" for r in test_responses])
        correct = human == labels
        acc = float(correct.mean())
        per_size: dict = {}
        for r, ok in zip(test_responses, correct):
            size = self.records[r["record_id"]].n_blocks
            per_size.setdefault(size, []).append(bool(ok))
        per_size_out = {
            str(size): {
                "n": len(v),
                "accuracy": float(np.mean(v)),
                "accuracy_ci": binomial_ci(float(np.mean(v)), len(v)),
            }
            for size, v in sorted(per_size.items())
        }
        confidences = np.array(
            [self._model_confidence(r["record_id"]) for r in test_responses]
        )
        model_correct = (confidences > 0.5) == labels
        try:
            rho = pearson(human.astype(float), confidences)
        except ConstantInputError:
            rho = None
        points, auc = roc_curve(confidences, labels)
        return {
            "subject_accuracy": acc,
            "subject_accuracy_ci": binomial_ci(acc, len(test_responses)),
            "per_size": per_size_out,
            "model_accuracy": float(model_correct.mean()),
            "model_accuracy_ci": binomial_ci(float(model_correct.mean()),
                                             len(test_responses)),
            "human_model_correlation": rho,
            "model_roc": {"points": [list(p) for p in points], "auc": auc},
            "n_test": len(test_responses),
        }

    def aggregate(self) -> dict:
        with self._lock:
            complete = [s for s in self._sessions.values() if s.state == "complete"]
        if not complete:
            raise ServiceError(404, "no complete sessions")
        votes: dict[str, list[bool]] = {}
        for session in complete:
            for r in session.responses[N_TRAINING:]:
                votes.setdefault(r["record_id"], []).append(r["prediction"] == "fall")
        record_ids = sorted(votes)
        fractions = np.array([np.mean(votes[rid]) for rid in record_ids])
        labels = np.array([self.records[rid].fell for rid in record_ids])
        confidences = np.array([self._model_confidence(rid) for rid in record_ids])
        try:
            rho = pearson(fractions, confidences)
        except ConstantInputError:
            rho = None
        human_roc = None
        if labels.any() and not labels.all():
            points, auc = roc_curve(fractions, labels)
            human_roc = {"points": [list(p) for p in points], "auc": auc}
        return {
            "n_sessions": len(complete),
            "n_records": len(record_ids),
            "vote_fractions": {rid: float(f) for rid, f in zip(record_ids, fractions)},
            "human_model_correlation": rho,
            "human_roc": human_roc,
        }

    # -- images / server -------------------------------------------------------------

    def image_bytes(self, record_id: str, frame: str, fmt: str = "png"):
        record = self.records.get(record_id)
        if record is None:
            raise ServiceError(404, f"unknown record {record_id}")
        rel = record.image_path if frame == "0" else record.outcome_image_path
        if frame not in ("0", "4"):
            raise ServiceError(404, f"frame must be 0 or 4, got {frame}")
        path = os.path.join(self.dataset_dir, rel)
        if fmt == "ppm":
            with open(path, "rb") as fh:
                return fh.read(), "image/x-portable-pixmap"
        return encode_png(read_ppm(path)), "image/png"

    def make_server(self, port: int, host: str = "127.0.0.1") -> ThreadingHTTPServer:
        server = ThreadingHTTPServer((host, port), _make_handler(self))
        server.daemon_threads = True
        return server


def _size_counts(ids, records) -> dict:
    out: dict[str, int] = {}
    for rid in ids:
        key = str(records[rid].n_blocks)
        out[key] = out.get(key, 0) + 1
    return dict(sorted(out.items()))


_ROUTES = [
    ("POST", re.compile(r"^/api/session$")),
    ("GET", re.compile(r"^/api/session/([^/]+)/trial$")),
    ("POST", re.compile(r"^/api/session/([^/]+)/response$")),
    ("GET", re.compile(r"^/api/session/([^/]+)/results$")),
    ("GET", re.compile(r"^/api/aggregate$")),
    ("GET", re.compile(r"^/api/image/([^/]+)/([^/?]+)$")),
]

_STATIC_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


def _make_handler(service: TrialService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # tests stay quiet
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_bytes(self, body: bytes, content_type: str) -> None:
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> dict:
            length = int(self.headers.get("Content-Length") or 0)
            if length == 0:
                return {}
            try:
                return json.loads(self.rfile.read(length))
            except json.JSONDecodeError as exc:
                raise ServiceError(400, f"invalid JSON body: {exc}") from exc

        def _dispatch(self, method: str) -> None:
            path, _, query = self.path.partition("?")
            try:
                if method == "POST" and path == "/api/session":
                    body = self._read_body()
                    self._send_json(200, service.create_session(
                        body.get("subject_label", ""), body.get("seed")))
                    return
                m = re.match(r"^/api/session/([^/]+)/trial$", path)
                if method == "GET" and m:
                    self._send_json(200, service.current_trial(m.group(1)))
                    return
                m = re.match(r"^/api/session/([^/]+)/response$", path)
                if method == "POST" and m:
                    body = self._read_body()
                    self._send_json(200, service.submit_response(
                        m.group(1), body.get("prediction"),
                        body.get("trial_index")))
                    return
                m = re.match(r"^/api/session/([^/]+)/results$", path)
                if method == "GET" and m:
                    self._send_json(200, service.session_results(m.group(1)))
                    return
                if method == "GET" and path == "/api/aggregate":
                    self._send_json(200, service.aggregate())
                    return
                m = re.match(r"^/api/image/([^/]+)/([^/]+)$", path)
                if method == "GET" and m:
                    fmt = "ppm" if "format=ppm" in query else "png"
                    body, ctype = service.image_bytes(m.group(1), m.group(2), fmt)
                    self._send_bytes(body, ctype)
                    return
                if method == "GET":
                    self._serve_static(path)
                    return
                raise ServiceError(404, f"no route for {method} {path}")
            except ServiceError as exc:
                self._send_json(exc.status, {"error": exc.message})
            except Exception as exc:  # noqa: BLE001
                self._send_json(500, {"error": f"{type(exc).__name__}: {exc}"})

        def _serve_static(self, path: str) -> None:
            if path == "/":
                path = "/index.html"
            if service.ui_dir is None:
                if path == "/index.html":
                    body = (b"<!doctype html><title>blocktower</title>"
                            b"<p>Trial service is running. UI assets not built; "
                            b"see frontend/README.md.</p>")
                    self._send_bytes(body, "text/html; charset=utf-8")
                    return
                raise ServiceError(404, "no UI assets configured")
            rel = os.path.normpath(path.lstrip("/"))
            if rel.startswith(".."):
                raise ServiceError(404, "not found")
            full = os.path.join(service.ui_dir, rel)
            if not os.path.isfile(full):
                raise ServiceError(404, f"no such asset {path}")
            ext = os.path.splitext(full)[1]
            with open(full, "rb") as fh:
                self._send_bytes(fh.read(), _STATIC_TYPES.get(ext, "application/octet-stream"))

        def do_GET(self):
            self._dispatch("GET")

        def do_POST(self):
            self._dispatch("POST")

    return Handler
