"""The mixed-gradient update loop over a partially cleaned relation.

Each iteration draws a batch from the dirty partition under a sampling
plan, has the batch cleaned, and takes one step

    g     = (n_dirty / N) * g_S  +  (n_clean / N) * g_C
    theta = theta - gamma_t * g

where ``g_S`` is the importance-weighted estimate of the mean clean
gradient over the dirty partition (1/p per draw, divided by batch size and
by n_dirty, so its expectation is exactly that mean), ``g_C`` is the exact
mean gradient over the clean partition, and the partition sizes are taken
before the batch moves. Inverse scaling uses gamma_t = gamma0 / (b * t)
with the configured batch size b and 1-based iteration t.

Batch semantics: the batch is min(b, remaining budget) draws with
replacement; duplicate draws are memoized (the budget pays per distinct
record). When that many draws would cover the whole dirty partition the
iteration takes a census instead (each dirty record once, p = 1/n_dirty,
which makes g_S the exact mean). When an iteration empties the dirty
partition the session finishes that iteration with pure clean-side descent
("polish") until the full-relation gradient norm reaches ``polish_tol``,
recording the polished theta in that iteration's history point.

Sessions are deterministic: a seed fixes every draw, and the split entry
points (``propose_batch`` / ``apply_repairs``) used by the HTTP service
walk bit-for-bit the same trajectory as ``run_iteration`` with the oracle
cleaner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import detector as detector_mod
from . import models, sampler
from .dataset import DatasetView
from .detector import DetectorConfig, DetectorOutput
from .estimator import CleanedExample, DeltaStats, corrected_plan_weights, update_deltas
from .models import GradientEstimate, ModelSpec

PLAN_KINDS = ("uniform", "dirty_gradient", "corrected", "oracle", "uncertainty")


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule: inverse_scaling gamma0/(b*t) or constant gamma0."""

    kind: str = "inverse_scaling"
    gamma0: float = 0.1

    def __post_init__(self):
        if self.kind not in ("inverse_scaling", "constant"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.gamma0 <= 0:
            raise ValueError("gamma0 must be positive")

    def gamma(self, t: int, batch_size: int) -> float:
        if t < 1:
            raise ValueError("iterations are 1-based")
        if self.kind == "constant":
            return self.gamma0
        return self.gamma0 / (batch_size * t)


@dataclass(frozen=True)
class UpdateConfig:
    batch_size: int = 50
    budget: int = 500
    schedule: StepSchedule = StepSchedule()
    floor_epsilon: float = sampler.DEFAULT_FLOOR
    polish_on_exhaustion: bool = True
    polish_tol: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.batch_size <= self.budget:
            raise ValueError("need 1 <= batch_size <= budget")
        if not 0.0 <= self.floor_epsilon <= 1.0:
            raise ValueError("floor_epsilon must lie in [0, 1]")


@dataclass(frozen=True)
class CleanedDraw:
    """One with-replacement draw handed to estimate_gs."""

    record_id: int
    clean_x: np.ndarray
    clean_y: np.ndarray
    p: float


def estimate_gs(cleaned_sample, theta, spec: ModelSpec, n_dirty: int) -> GradientEstimate:
    """Importance-weighted estimate of the mean clean gradient over the
    dirty partition: (1 / (|S| * n_dirty)) * sum 1/p(i) grad(clean_i).

    Duplicates from with-replacement draws must appear as repeated entries.
    """
    draws = list(cleaned_sample)
    if not draws:
        raise ValueError("empty sample")
    if n_dirty < 1:
        raise ValueError("n_dirty must be >= 1")
    acc = models.zero_theta(spec)
    for d in draws:
        if d.p <= 0.0:
            raise ValueError(f"record {d.record_id}: draw probability must be positive")
        acc = acc + models.gradient(spec, d.clean_x, d.clean_y, theta).g / d.p
    return GradientEstimate(acc / (len(draws) * n_dirty), "sampled")


def compute_gc(X, Y, theta, spec: ModelSpec) -> GradientEstimate:
    """Exact mean gradient over the clean partition (zeros when empty)."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        return GradientEstimate(models.zero_theta(spec), "exact")
    return GradientEstimate(models.mean_gradient(spec, X, Y, theta), "exact")


def combine_and_step(theta, g_s, g_c, n_dirty: int, n_clean: int, t: int, cfg: UpdateConfig) -> np.ndarray:
    """One update with the dirty/clean mixture weights taken pre-move."""
    n = n_dirty + n_clean
    if n < 1:
        raise ValueError("empty relation")
    if n_dirty < 0 or n_clean < 0:
        raise ValueError("partition sizes must be non-negative")
    theta = np.asarray(theta, dtype=float)
    g_s_vec = g_s.g if isinstance(g_s, GradientEstimate) else np.asarray(g_s, dtype=float)
    g_c_vec = g_c.g if isinstance(g_c, GradientEstimate) else np.asarray(g_c, dtype=float)
    g = (n_dirty / n) * g_s_vec + (n_clean / n) * g_c_vec
    out = theta - cfg.schedule.gamma(t, cfg.batch_size) * g
    if not np.all(np.isfinite(out)):
        raise ValueError("update produced non-finite theta")
    return out


@dataclass
class HistoryPoint:
    t: int
    records_cleaned: int
    training_loss: float
    test_accuracy: float = float("nan")
    rel_model_error: float = float("nan")
    wall_ms: float = 0.0
    theta: np.ndarray | None = None


@dataclass
class PendingBatch:
    draw_ids: list
    draw_probs: list
    distinct_ids: list  # first-occurrence order
    detections: dict
    census: bool


@dataclass
class SessionState:
    """Everything one progressive-cleaning run owns."""

    dataset: DatasetView
    spec: ModelSpec
    cfg: UpdateConfig
    plan_kind: str
    detector: DetectorConfig
    theta: np.ndarray
    rng: np.random.Generator
    seed: int
    stats: DeltaStats | None = None
    t: int = 1
    budget_remaining: int = 0
    records_cleaned: int = 0
    cleaned_ids: set = field(default_factory=set)
    pending: PendingBatch | None = None
    history: list = field(default_factory=list)
    status: str = "active"
    tagged: list = field(default_factory=list)  # (dirty_x, error_class) for the adaptive classifier
    feature_means: np.ndarray | None = None
    theta_star: np.ndarray | None = None
    test_xy: tuple | None = None

    def n_total(self) -> int:
        return len(self.dataset)


def _metrics(session: SessionState) -> tuple:
    ids = session.dataset.ids()
    X = session.dataset.x_matrix(ids)
    Y = session.dataset.y_vector(ids)
    training_loss = models.mean_loss(session.spec, X, Y, session.theta)
    test_acc = float("nan")
    if session.test_xy is not None:
        test_acc = models.evaluate(session.spec, session.theta, *session.test_xy)["accuracy"]
    rel = float("nan")
    if session.theta_star is not None:
        denom = float(np.linalg.norm(session.theta_star))
        rel = float(np.linalg.norm(session.theta - session.theta_star)) / denom
    return training_loss, test_acc, rel


def _record_history(session: SessionState, t: int, wall_ms: float):
    loss, acc, rel = _metrics(session)
    session.history.append(
        HistoryPoint(t, session.records_cleaned, loss, acc, rel, wall_ms, session.theta.copy())
    )


def new_session(
    dataset: DatasetView,
    spec: ModelSpec,
    cfg: UpdateConfig,
    seed: int,
    plan_kind: str = "corrected",
    detector_cfg: DetectorConfig | None = None,
    use_estimator: bool | None = None,
    theta0=None,
    theta_star=None,
    test_xy=None,
) -> SessionState:
    """Initialize a run: dirty model fit (unless theta0 given), initial
    partition, empty statistics, and the t=0 history point."""
    if plan_kind not in PLAN_KINDS:
        raise ValueError(f"unknown plan kind {plan_kind!r}; expected one of {PLAN_KINDS}")
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    detector_cfg = detector_cfg or DetectorConfig("none")
    ids = dataset.ids()
    X = dataset.x_matrix(ids)
    Y = dataset.y_vector(ids)
    if theta0 is None:
        theta0 = models.train_full(spec, (X, Y))
    if use_estimator is None:
        use_estimator = plan_kind == "corrected"
    stats = None
    if use_estimator:
        mode = "adaptive" if detector_cfg.mode == "adaptive" else "apriori"
        stats = DeltaStats(mode, dataset.d, dataset.l)
    session = SessionState(
        dataset=dataset,
        spec=spec,
        cfg=cfg,
        plan_kind=plan_kind,
        detector=detector_cfg,
        theta=np.asarray(theta0, dtype=float).copy(),
        rng=np.random.default_rng(seed),
        seed=seed,
        stats=stats,
        budget_remaining=cfg.budget,
        feature_means=X.mean(axis=0),
        theta_star=None if theta_star is None else np.asarray(theta_star, dtype=float),
        test_xy=test_xy,
    )
    dirty, clean = detector_mod.partition(dataset, detector_cfg, session.cleaned_ids)
    dataset.set_partition(dirty, clean)
    _record_history(session, 0, 0.0)
    if not dataset.dirty_ids or session.budget_remaining <= 0:
        session.status = "done"
    return session


def build_plan(session: SessionState) -> sampler.SamplingPlan:
    """The sampling plan the session's strategy implies for this iteration."""
    ds, spec, theta = session.dataset, session.spec, session.theta
    eps = session.cfg.floor_epsilon
    kind = session.plan_kind
    if kind == "uniform":
        return sampler.uniform_plan(ds.sorted_dirty_ids())
    if kind == "dirty_gradient":
        return sampler.dirty_gradient_plan(ds, theta, spec, eps)
    if kind == "oracle":
        return sampler.oracle_plan(ds, theta, spec, eps)
    if kind == "uncertainty":
        return sampler.uncertainty_plan(ds, theta, spec, eps)
    detections = {rid: detector_mod.detect(ds.record(rid), session.detector) for rid in ds.sorted_dirty_ids()}
    weights = corrected_plan_weights(ds, theta, spec, session.stats, detections)
    return sampler.weighted_plan(ds.sorted_dirty_ids(), weights, eps)


def propose_batch(session: SessionState, plan: sampler.SamplingPlan | None = None) -> PendingBatch:
    """Draw the next batch (idempotent while a batch is outstanding)."""
    if session.status == "done":
        raise RuntimeError("session is done")
    if session.pending is not None:
        return session.pending
    ds = session.dataset
    dirty = ds.sorted_dirty_ids()
    if not dirty:
        raise RuntimeError("dirty partition is empty")
    b_eff = min(session.cfg.batch_size, session.budget_remaining)
    if b_eff >= len(dirty):
        draw_ids = list(dirty)
        p = 1.0 / len(dirty)
        draw_probs = [p] * len(dirty)
        census = True
    else:
        if plan is None:
            plan = build_plan(session)
        if sorted(plan.ids) != dirty:
            raise ValueError("plan does not cover the current dirty partition")
        draw_ids = sampler.draw_with_replacement(plan, b_eff, session.rng)
        draw_probs = [plan.prob_of(i) for i in draw_ids]
        census = False
    distinct, seen = [], set()
    for rid in draw_ids:
        if rid not in seen:
            seen.add(rid)
            distinct.append(rid)
    detections = {rid: detector_mod.detect(ds.record(rid), session.detector) for rid in distinct}
    session.pending = PendingBatch(draw_ids, draw_probs, distinct, detections, census)
    session.status = "awaiting_batch"
    return session.pending


def _polish(session: SessionState):
    ids = session.dataset.ids()
    X = session.dataset.x_matrix(ids)
    Y = session.dataset.y_vector(ids)
    session.theta = models.descend(
        session.spec, X, Y, session.theta, tol=session.cfg.polish_tol, max_iter=5000
    )


def apply_repairs(session: SessionState, repairs: dict) -> HistoryPoint:
    """Apply cleaned values for the outstanding batch and take one step.

    ``repairs`` maps record id to (clean_x, clean_y, error_class_tag); the
    tag may be None outside adaptive sessions. The repair set must cover
    exactly the outstanding batch's distinct ids. Validation happens before
    any state changes, so a rejected submission leaves the session intact.
    """
    if session.pending is None:
        raise RuntimeError("no outstanding batch")
    pending = session.pending
    expected = set(pending.distinct_ids)
    got = set(repairs)
    if got != expected:
        raise ValueError(f"repairs must cover exactly the batch ids; missing {sorted(expected - got)}, extra {sorted(got - expected)}")
    ds = session.dataset
    normalized = {}
    for rid, (x, y, tag) in repairs.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != (ds.d,) or y.shape != (ds.l,):
            raise ValueError(f"record {rid}: repaired values have wrong dimensions")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError(f"record {rid}: repaired values are non-finite")
        tag = 0 if tag is None else int(tag)
        if tag < 0:
            raise ValueError(f"record {rid}: error class tag must be >= 0")
        normalized[rid] = (x, y, tag)

    started = time.perf_counter()
    n_dirty = len(ds.dirty_ids)
    n_clean = len(ds.clean_ids)

    draws = [
        CleanedDraw(rid, normalized[rid][0], normalized[rid][1], p)
        for rid, p in zip(pending.draw_ids, pending.draw_probs)
    ]
    g_s = estimate_gs(draws, session.theta, session.spec, n_dirty)
    clean_ids = ds.sorted_clean_ids()
    g_c = compute_gc(
        ds.x_matrix(clean_ids), ds.y_vector(clean_ids), session.theta, session.spec
    )
    session.theta = combine_and_step(
        session.theta, g_s, g_c, n_dirty, n_clean, session.t, session.cfg
    )

    if session.stats is not None:
        examples = []
        for rid, p in zip(pending.draw_ids, pending.draw_probs):
            rec = ds.record(rid)
            x, y, tag = normalized[rid]
            if session.stats.mode == "adaptive":
                det = DetectorOutput(True, error_class=tag) if tag > 0 else detector_mod.CLEAN_VERDICT
            else:
                det = pending.detections[rid]
            examples.append(CleanedExample(rid, rec.x.copy(), rec.y.copy(), x, y, p, det))
        update_deltas(session.stats, examples)

    newly = 0
    for rid in pending.distinct_ids:
        x, y, tag = normalized[rid]
        if session.detector.mode == "adaptive":
            session.tagged.append((ds.record(rid).x.copy(), tag))
        ds.apply_clean_values(rid, x, y)
        if rid not in session.cleaned_ids:
            session.cleaned_ids.add(rid)
            newly += 1
        ds.mark_clean(rid)
    session.records_cleaned += newly
    session.budget_remaining -= newly

    if session.detector.mode == "adaptive" and session.tagged:
        u = max((c for _, c in session.tagged), default=0)
        labeled = [(SimpleNamespace(x=x), c) for x, c in session.tagged]
        session.detector.classifier = detector_mod.adaptive_train(
            labeled, u, feature_means=session.feature_means
        )
    dirty, clean = detector_mod.partition(ds, session.detector, session.cleaned_ids)
    ds.set_partition(dirty, clean)

    finished_t = session.t
    session.t += 1
    session.pending = None
    if not ds.dirty_ids:
        if session.cfg.polish_on_exhaustion:
            _polish(session)
        session.status = "done"
    elif session.budget_remaining <= 0:
        session.status = "done"
    else:
        session.status = "active"
    _record_history(session, finished_t, (time.perf_counter() - started) * 1000.0)
    return session.history[-1]


def run_iteration(session: SessionState, plan=None, cleaner=None) -> SessionState:
    """One full iteration driven by a cleaning function (terminal no-op on
    a done session). ``cleaner`` must expose ``clean(record_id) ->
    (clean_x, clean_y, error_class)``; defaults to the dataset's oracle."""
    if session.status == "done":
        return session
    if cleaner is None:
        from .dataset import OracleCleaner

        cleaner = OracleCleaner(session.dataset)
    pending = propose_batch(session, plan)
    repairs = {rid: cleaner.clean(rid) for rid in pending.distinct_ids}
    apply_repairs(session, repairs)
    return session


def run_to_completion(session: SessionState, cleaner=None, max_iterations: int | None = None) -> SessionState:
    """Iterate until the budget is gone or the dirty partition empties."""
    limit = max_iterations if max_iterations is not None else 10**9
    for _ in range(limit):
        if session.status == "done":
            break
        run_iteration(session, cleaner=cleaner)
    return session
