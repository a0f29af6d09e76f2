"""HTTP session API for interactive cleaning.

Endpoints (JSON over HTTP):

* ``POST /sessions`` create a session from a dataset (server path or
  inline CSV text) plus a config document; returns the session id and the
  initial model.
* ``GET /sessions/{id}/batch`` propose the next batch: records with their
  current values, sampling probabilities, and detector hints. A second
  call while a batch is outstanding answers 409; a finished session 410.
* ``POST /sessions/{id}/clean`` submit repairs covering exactly the
  outstanding batch; one model update runs and the new history point comes
  back. Invalid submissions are rejected atomically (422), leaving the
  session untouched.
* ``GET /sessions/{id}`` progress: status, budget, partition sizes,
  current training loss, detector accuracy on tagged examples, history.
* ``POST /sessions/{id}/config`` adjust batch_size / margin_threshold for
  later batches, or stop the session.

Wire history counts completed batches only: the session's internal
initialization point (the dirty fit before any cleaning) is not a history
row, so a fresh session reports an empty history and the first submission
makes it length 1. The initial model itself comes back from the create
call and from the progress document's ``theta``/``theta0``.

Model coefficients travel as decimal strings (``repr`` of the float) so a
client can reproduce them bit for bit. Sessions are snapshotted to disk
after every state change (atomic rename, versioned format) and reloaded on
startup, so a restarted service resumes where it stopped. Requests on one
session are serialized by a per-session lock; distinct sessions run
concurrently.

Session construction matches the CLI ``simulate`` path exactly, so a
scripted client that submits oracle values walks the same trajectory.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import threading
import uuid
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import detector as detector_mod
from . import models
from .baselines import SESSION_STRATEGIES, StrategyId, make_session
from .dataset import DatasetView, Record, load_csv
from .detector import AdaptiveClassifier, DetectorConfig, DetectorOutput, Rule, RuleSet
from .estimator import DeltaStats
from .models import ModelSpec
from .updater import (HistoryPoint, PendingBatch, SessionState, StepSchedule,
                      UpdateConfig, apply_repairs, propose_batch)

SNAPSHOT_VERSION = 1


class ApiError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def _theta_wire(theta) -> list:
    """Nested lists of repr strings, bit-exact through JSON."""
    a = np.asarray(theta, dtype=float)
    if a.ndim == 1:
        return [repr(float(v)) for v in a]
    return [_theta_wire(row) for row in a]


def _theta_parse(wire) -> np.ndarray:
    return np.asarray(wire, dtype=float)


def _nan_none(v: float):
    return None if (isinstance(v, float) and np.isnan(v)) else v


def _history_wire(pt: HistoryPoint) -> dict:
    return {
        "t": pt.t,
        "records_cleaned": pt.records_cleaned,
        "training_loss": pt.training_loss,
        "test_accuracy": _nan_none(pt.test_accuracy),
        "rel_model_error": _nan_none(pt.rel_model_error),
        "wall_ms": pt.wall_ms,
        "theta": _theta_wire(pt.theta),
    }


def _detection_wire(det: DetectorOutput) -> dict:
    return {
        "is_dirty": det.is_dirty,
        "corrupted_features": sorted(det.corrupted_features),
        "corrupted_labels": sorted(det.corrupted_labels),
        "error_class": det.error_class,
    }


def _detection_restore(doc: dict) -> DetectorOutput:
    return DetectorOutput(
        bool(doc["is_dirty"]),
        frozenset(doc["corrupted_features"]),
        frozenset(doc["corrupted_labels"]),
        int(doc["error_class"]),
    )


def session_config(doc: dict) -> tuple:
    """Parse a create-session config document.

    Returns (spec-kwargs, update config, strategy, seed, margin, rules).
    """
    loss = doc.get("loss")
    if not loss:
        raise ApiError(400, "config.loss is required")
    l2 = float(doc.get("l2_reg", 1e-4))
    if loss in models.AGGREGATE_LOSSES:
        l2 = 0.0
    strategy = StrategyId(doc.get("strategy", "AC"))
    if strategy not in SESSION_STRATEGIES:
        raise ApiError(400, f"strategy {strategy.value} is not a session strategy")
    cfg = UpdateConfig(
        batch_size=int(doc.get("batch_size", 50)),
        budget=int(doc.get("budget", 500)),
        schedule=StepSchedule("inverse_scaling", float(doc.get("gamma0", 0.1))),
        floor_epsilon=float(doc.get("floor_epsilon", 0.1)),
    )
    seed = int(doc.get("seed", 0))
    margin = float(doc.get("margin_threshold", 0.0))
    rules = doc.get("rules")
    return loss, l2, cfg, strategy, seed, margin, rules


def _load_dataset(doc: dict) -> DatasetView:
    path = doc.get("dataset_path")
    csv_text = doc.get("dataset_csv")
    if (path is None) == (csv_text is None):
        raise ApiError(400, "provide exactly one of dataset_path or dataset_csv")
    try:
        if path is not None:
            ds = load_csv(path)
        else:
            with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False) as f:
                f.write(csv_text)
                tmp = f.name
            try:
                ds = load_csv(tmp)
            finally:
                os.unlink(tmp)
    except FileNotFoundError as e:
        raise ApiError(400, f"dataset not found: {e}") from e
    except ValueError as e:
        raise ApiError(400, f"bad dataset: {e}") from e
    if len(ds) == 0:
        raise ApiError(400, "dataset has no records")
    return ds


# ---------------------------------------------------------------- snapshots


def session_snapshot(session_id: str, session: SessionState) -> dict:
    """Everything needed to resume the session after a restart."""
    ds = session.dataset
    records = []
    for r in ds.records:
        records.append({
            "id": r.id,
            "x": r.x.tolist(),
            "y": r.y.tolist(),
            "clean_x": None if r.clean_x is None else r.clean_x.tolist(),
            "clean_y": None if r.clean_y is None else r.clean_y.tolist(),
            "error_class": r.error_class,
            "dirty": r.id in ds.dirty_ids,
        })
    det = session.detector
    classifier = None
    if det.classifier is not None:
        c = det.classifier
        classifier = {
            "feature_means": c.feature_means.tolist(),
            "n_classes": c.n_classes,
            "theta": None if c.theta is None else c.theta.tolist(),
            "trained_on": c.trained_on,
        }
    rules = None
    if det.rules is not None:
        rules = [{"feature": r.feature, "min": r.min, "max": r.max,
                  "allowed": None if r.allowed is None else sorted(r.allowed),
                  "name": r.name} for r in det.rules.rules]
    stats = None
    if session.stats is not None:
        s = session.stats
        stats = {
            "mode": s.mode, "d": s.d, "l": s.l,
            "fx_sum": s.fx_sum.tolist(), "fx_w": s.fx_w.tolist(),
            "fy_sum": s.fy_sum.tolist(), "fy_w": s.fy_w.tolist(),
            "by_class": [[c, sx.tolist(), sy.tolist(), sw]
                         for c, (sx, sy, sw) in sorted(s.by_class.items())],
        }
    pending = None
    if session.pending is not None:
        p = session.pending
        pending = {
            "draw_ids": list(p.draw_ids),
            "draw_probs": list(p.draw_probs),
            "distinct_ids": list(p.distinct_ids),
            "census": p.census,
            "detections": [[rid, _detection_wire(d)] for rid, d in sorted(p.detections.items())],
        }
    return {
        "version": SNAPSHOT_VERSION,
        "session_id": session_id,
        "spec": {"loss": session.spec.loss, "d": session.spec.d,
                 "l2_reg": session.spec.l2_reg, "n_classes": session.spec.n_classes},
        "cfg": {"batch_size": session.cfg.batch_size, "budget": session.cfg.budget,
                "schedule_kind": session.cfg.schedule.kind, "gamma0": session.cfg.schedule.gamma0,
                "floor_epsilon": session.cfg.floor_epsilon,
                "polish_on_exhaustion": session.cfg.polish_on_exhaustion,
                "polish_tol": session.cfg.polish_tol},
        "plan_kind": session.plan_kind,
        "detector": {"mode": det.mode, "margin_threshold": det.margin_threshold,
                     "rules": rules, "classifier": classifier},
        "theta": np.asarray(session.theta).tolist(),
        "rng_state": session.rng.bit_generator.state,
        "seed": session.seed,
        "stats": stats,
        "t": session.t,
        "budget_remaining": session.budget_remaining,
        "records_cleaned": session.records_cleaned,
        "cleaned_ids": sorted(session.cleaned_ids),
        "pending": pending,
        "history": [_history_wire(pt) for pt in session.history],
        "status": session.status,
        "tagged": [[x.tolist(), c] for x, c in session.tagged],
        "feature_means": session.feature_means.tolist(),
        "records": records,
    }


def session_restore(doc: dict) -> SessionState:
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {doc.get('version')!r}")
    records = []
    dirty_ids = set()
    for rd in doc["records"]:
        rec = Record(
            int(rd["id"]), np.asarray(rd["x"], dtype=float), np.asarray(rd["y"], dtype=float),
            None if rd["clean_x"] is None else np.asarray(rd["clean_x"], dtype=float),
            None if rd["clean_y"] is None else np.asarray(rd["clean_y"], dtype=float),
            rd["error_class"],
        )
        records.append(rec)
        if rd["dirty"]:
            dirty_ids.add(rec.id)
    ds = DatasetView(records, dirty_ids=dirty_ids)
    spec = ModelSpec(**doc["spec"])
    c = doc["cfg"]
    cfg = UpdateConfig(
        batch_size=c["batch_size"], budget=c["budget"],
        schedule=StepSchedule(c["schedule_kind"], c["gamma0"]),
        floor_epsilon=c["floor_epsilon"],
        polish_on_exhaustion=c["polish_on_exhaustion"], polish_tol=c["polish_tol"],
    )
    dd = doc["detector"]
    rules = None
    if dd["rules"] is not None:
        rules = RuleSet([Rule(r["feature"], r["min"], r["max"],
                              None if r["allowed"] is None else frozenset(r["allowed"]),
                              r["name"]) for r in dd["rules"]])
    classifier = None
    if dd["classifier"] is not None:
        cd = dd["classifier"]
        classifier = AdaptiveClassifier(np.asarray(cd["feature_means"], dtype=float), cd["n_classes"])
        if cd["theta"] is not None:
            classifier.theta = np.asarray(cd["theta"], dtype=float)
        classifier.trained_on = cd["trained_on"]
    detector = DetectorConfig(dd["mode"], rules=rules, classifier=classifier,
                              margin_threshold=dd["margin_threshold"])
    stats = None
    if doc["stats"] is not None:
        sd = doc["stats"]
        stats = DeltaStats(sd["mode"], sd["d"], sd["l"])
        stats.fx_sum = np.asarray(sd["fx_sum"], dtype=float)
        stats.fx_w = np.asarray(sd["fx_w"], dtype=float)
        stats.fy_sum = np.asarray(sd["fy_sum"], dtype=float)
        stats.fy_w = np.asarray(sd["fy_w"], dtype=float)
        stats.by_class = {int(c): (np.asarray(sx, dtype=float), np.asarray(sy, dtype=float), float(sw))
                          for c, sx, sy, sw in sd["by_class"]}
    rng = np.random.default_rng(doc["seed"])
    rng.bit_generator.state = doc["rng_state"]
    pending = None
    if doc["pending"] is not None:
        pd = doc["pending"]
        pending = PendingBatch(
            [int(i) for i in pd["draw_ids"]],
            [float(p) for p in pd["draw_probs"]],
            [int(i) for i in pd["distinct_ids"]],
            {int(rid): _detection_restore(d) for rid, d in pd["detections"]},
            bool(pd["census"]),
        )
    history = []
    for h in doc["history"]:
        history.append(HistoryPoint(
            h["t"], h["records_cleaned"], h["training_loss"],
            float("nan") if h["test_accuracy"] is None else h["test_accuracy"],
            float("nan") if h["rel_model_error"] is None else h["rel_model_error"],
            h["wall_ms"], _theta_parse(h["theta"]),
        ))
    session = SessionState(
        dataset=ds, spec=spec, cfg=cfg, plan_kind=doc["plan_kind"], detector=detector,
        theta=np.asarray(doc["theta"], dtype=float), rng=rng, seed=doc["seed"], stats=stats,
        t=doc["t"], budget_remaining=doc["budget_remaining"],
        records_cleaned=doc["records_cleaned"], cleaned_ids=set(doc["cleaned_ids"]),
        pending=pending, history=history, status=doc["status"],
        tagged=[(np.asarray(x, dtype=float), int(cl)) for x, cl in doc["tagged"]],
        feature_means=np.asarray(doc["feature_means"], dtype=float),
    )
    return session


def _write_snapshot(snapshot_dir: Path, session_id: str, session: SessionState):
    doc = session_snapshot(session_id, session)
    path = snapshot_dir / f"{session_id}.json"
    fd, tmp = tempfile.mkstemp(dir=snapshot_dir, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------- the app


class SessionStore:
    def __init__(self, snapshot_dir=None):
        self.sessions: dict = {}
        self.locks: dict = {}
        self._registry = threading.Lock()
        self.snapshot_dir = None
        if snapshot_dir is not None:
            self.snapshot_dir = Path(snapshot_dir)
            self.snapshot_dir.mkdir(parents=True, exist_ok=True)
            for path in sorted(self.snapshot_dir.glob("*.json")):
                with open(path) as f:
                    doc = json.load(f)
                self.sessions[doc["session_id"]] = session_restore(doc)
                self.locks[doc["session_id"]] = threading.Lock()

    def add(self, session_id: str, session: SessionState):
        with self._registry:
            self.sessions[session_id] = session
            self.locks[session_id] = threading.Lock()

    def lock_of(self, session_id: str) -> threading.Lock:
        with self._registry:
            if session_id not in self.sessions:
                raise ApiError(404, f"unknown session {session_id}")
            return self.locks[session_id]

    def get(self, session_id: str) -> SessionState:
        with self._registry:
            try:
                return self.sessions[session_id]
            except KeyError:
                raise ApiError(404, f"unknown session {session_id}") from None

    def persist(self, session_id: str):
        if self.snapshot_dir is not None:
            _write_snapshot(self.snapshot_dir, session_id, self.sessions[session_id])


def _progress_doc(session_id: str, session: SessionState) -> dict:
    ds = session.dataset
    ids = ds.ids()
    training_loss = models.mean_loss(session.spec, ds.x_matrix(ids), ds.y_vector(ids), session.theta)
    detector_accuracy = None
    clf = session.detector.classifier
    if clf is not None and clf.theta is not None and session.tagged:
        hits = sum(1 for x, c in session.tagged
                   if clf.predict(x, session.detector.margin_threshold) == c)
        detector_accuracy = hits / len(session.tagged)
    return {
        "session_id": session_id,
        "status": session.status,
        "d": ds.d,
        "n": len(ds),
        "n_dirty": len(ds.dirty_ids),
        "n_clean": len(ds.clean_ids),
        "budget_remaining": session.budget_remaining,
        "records_cleaned": session.records_cleaned,
        "t": session.t,
        "training_loss": training_loss,
        "detector_accuracy": detector_accuracy,
        "pending_ids": list(session.pending.distinct_ids) if session.pending else None,
        "theta": _theta_wire(session.theta),
        "theta0": _theta_wire(session.history[0].theta),
        "history": [_history_wire(pt) for pt in session.history[1:]],
        "plan_kind": session.plan_kind,
        "detector_mode": session.detector.mode,
        "batch_size": session.cfg.batch_size,
        "budget": session.cfg.budget,
    }


def build_app(snapshot_dir=None, cors_origins=("*",)) -> FastAPI:
    """Create the service; pass snapshot_dir to persist and resume sessions."""
    app = FastAPI(title="cleantrain session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(snapshot_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"detail": exc.detail})

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict):
        ds = _load_dataset(payload)
        try:
            loss, l2, cfg, strategy, seed, margin, rules_doc = session_config(payload.get("config", {}))
            spec = ModelSpec(loss, ds.d, l2_reg=l2)
            session = make_session(ds, spec, cfg, strategy, seed, margin_threshold=margin)
            if rules_doc:
                session.detector = DetectorConfig(
                    "rules", rules=RuleSet.from_config(rules_doc),
                    margin_threshold=margin)
                # re-partition under the rules so the first batch and the
                # done-check see what the rules flag, not the preset detector
                dirty, clean = detector_mod.partition(ds, session.detector, session.cleaned_ids)
                ds.set_partition(dirty, clean)
                if not ds.dirty_ids:
                    session.status = "done"
        except (TypeError, ValueError) as e:
            raise ApiError(400, str(e)) from e
        session_id = uuid.uuid4().hex
        store.add(session_id, session)
        store.persist(session_id)
        return {
            "session_id": session_id,
            "status": session.status,
            "d": ds.d,
            "n": len(ds),
            "n_dirty": len(ds.dirty_ids),
            "budget_remaining": session.budget_remaining,
            "strategy": strategy.value,
            "theta": _theta_wire(session.theta),
        }

    @app.get("/sessions/{session_id}/batch")
    def next_batch(session_id: str):
        lock = store.lock_of(session_id)
        with lock:
            session = store.get(session_id)
            if session.status == "done":
                raise ApiError(410, "session is done")
            if session.pending is not None:
                raise ApiError(409, "a batch is already outstanding")
            try:
                pending = propose_batch(session)
            except (RuntimeError, ValueError) as e:
                raise ApiError(409, str(e)) from e
            store.persist(session_id)
            ds = session.dataset
            probs = {}
            for rid, p in zip(pending.draw_ids, pending.draw_probs):
                probs[rid] = p
            records = []
            for rid in pending.distinct_ids:
                rec = ds.record(rid)
                records.append({
                    "id": rid,
                    "x": rec.x.tolist(),
                    "y": rec.y.tolist(),
                    "probability": probs[rid],
                    "hint": _detection_wire(pending.detections[rid]),
                })
            return {
                "session_id": session_id,
                "t": session.t,
                "census": pending.census,
                "records": records,
                "draw_ids": list(pending.draw_ids),
            }

    @app.post("/sessions/{session_id}/clean")
    def submit_cleaned(session_id: str, payload: dict):
        lock = store.lock_of(session_id)
        with lock:
            session = store.get(session_id)
            if session.status == "done":
                raise ApiError(410, "session is done")
            if session.pending is None:
                raise ApiError(409, "no outstanding batch")
            items = payload.get("repairs")
            if not isinstance(items, list):
                raise ApiError(422, "repairs must be a list")
            repairs = {}
            try:
                for item in items:
                    rid = int(item["id"])
                    if rid in repairs:
                        raise ApiError(422, f"record {rid} repaired twice")
                    x = [float(v) for v in item["x"]]
                    y_raw = item["y"]
                    y = [float(v) for v in (y_raw if isinstance(y_raw, list) else [y_raw])]
                    tag = int(item.get("error_class", 0))
                    repairs[rid] = (x, y, tag)
            except ApiError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise ApiError(422, f"malformed repair entry: {e}") from e
            try:
                point = apply_repairs(session, repairs)
            except ValueError as e:
                raise ApiError(422, str(e)) from e
            store.persist(session_id)
            return {
                "session_id": session_id,
                "status": session.status,
                "budget_remaining": session.budget_remaining,
                "records_cleaned": session.records_cleaned,
                "n_dirty": len(session.dataset.dirty_ids),
                "n_clean": len(session.dataset.clean_ids),
                "history_point": _history_wire(point),
                "theta": _theta_wire(session.theta),
            }

    @app.post("/sessions/{session_id}/config")
    def update_config(session_id: str, payload: dict):
        lock = store.lock_of(session_id)
        with lock:
            session = store.get(session_id)
            if "batch_size" in payload:
                try:
                    b = int(payload["batch_size"])
                    session.cfg = dataclasses.replace(session.cfg, batch_size=b)
                except (TypeError, ValueError) as e:
                    raise ApiError(422, f"bad batch_size: {e}") from e
            if "margin_threshold" in payload:
                try:
                    m = float(payload["margin_threshold"])
                except (TypeError, ValueError) as e:
                    raise ApiError(422, f"bad margin_threshold: {e}") from e
                if m < 0:
                    raise ApiError(422, "margin_threshold must be >= 0")
                session.detector.margin_threshold = m
            if payload.get("stop"):
                # an outstanding batch never mutated the model, so it can
                # just be dropped
                session.pending = None
                session.status = "done"
            store.persist(session_id)
            return {
                "session_id": session_id,
                "status": session.status,
                "batch_size": session.cfg.batch_size,
                "margin_threshold": session.detector.margin_threshold,
            }

    @app.get("/sessions/{session_id}")
    def get_progress(session_id: str):
        lock = store.lock_of(session_id)
        with lock:
            session = store.get(session_id)
            return _progress_doc(session_id, session)

    return app
