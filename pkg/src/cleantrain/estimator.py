"""Taylor-corrected sampling weights from running cleaning statistics.

:class:`DeltaStats` accumulates importance-weighted average value changes
(delta = dirty - clean, weight 1/p per cleaned draw) in one of two modes:

* ``apriori``: per-feature accumulators, fed only on the features the
  detector flagged for each cleaned record;
* ``adaptive``: one full difference vector per error class, keyed by the
  class tag supplied with the repair.

The averages are self-normalized (sum of weighted deltas over sum of
weights). ``corrected_weight`` scores a still-dirty record by

    || gradient(dirty) + M_x @ dx_r + M_y @ dy_r ||

where (M_x, M_y) come from ``models.taylor_matrices`` (correction
orientation: the sum approximates the record's clean gradient) and
(dx_r, dy_r) is ``delta_vector`` masked by the record's detector output.
Empty statistics give zero deltas, so the weight degrades to the plain
dirty-gradient norm.

``compare_estimators`` measures, on ground-truth data, how well four
estimators reconstruct the mean clean gradient over the dirty pool as
cleaning progresses: the Taylor correction, a flat average-gradient-change
shift, an average-feature-change plug-in, and per-component least-squares
regression from dirty to clean gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import models
from .detector import DetectorOutput, ground_truth_detect


@dataclass
class DeltaStats:
    mode: str
    d: int
    l: int = 1
    fx_sum: np.ndarray = None
    fx_w: np.ndarray = None
    fy_sum: np.ndarray = None
    fy_w: np.ndarray = None
    by_class: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("apriori", "adaptive"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.fx_sum is None:
            self.fx_sum = np.zeros(self.d)
            self.fx_w = np.zeros(self.d)
            self.fy_sum = np.zeros(self.l)
            self.fy_w = np.zeros(self.l)

    def copy(self) -> "DeltaStats":
        out = DeltaStats(self.mode, self.d, self.l)
        out.fx_sum = self.fx_sum.copy()
        out.fx_w = self.fx_w.copy()
        out.fy_sum = self.fy_sum.copy()
        out.fy_w = self.fy_w.copy()
        out.by_class = {k: (v[0].copy(), v[1].copy(), v[2]) for k, v in self.by_class.items()}
        return out


@dataclass(frozen=True)
class CleanedExample:
    """One cleaned draw: the record's dirty values, clean values, the draw
    probability, and the detector output / class tag that selected it."""

    record_id: int
    dirty_x: np.ndarray
    dirty_y: np.ndarray
    clean_x: np.ndarray
    clean_y: np.ndarray
    p: float
    detection: DetectorOutput


def update_deltas(stats: DeltaStats, cleaned) -> DeltaStats:
    """Fold a batch of cleaned examples into the running averages.

    Weights are 1/p per draw. A clean verdict (no flagged features, class 0)
    contributes nothing. Raises on p <= 0.
    """
    for ex in cleaned:
        if ex.p <= 0.0:
            raise ValueError(f"record {ex.record_id}: draw probability must be positive")
        w = 1.0 / ex.p
        dx = np.asarray(ex.dirty_x, dtype=float) - np.asarray(ex.clean_x, dtype=float)
        dy = np.asarray(ex.dirty_y, dtype=float) - np.asarray(ex.clean_y, dtype=float)
        if stats.mode == "apriori":
            for j in ex.detection.corrupted_features:
                stats.fx_sum[j] += w * dx[j]
                stats.fx_w[j] += w
            for j in ex.detection.corrupted_labels:
                stats.fy_sum[j] += w * dy[j]
                stats.fy_w[j] += w
        else:
            c = ex.detection.error_class
            if c == 0:
                continue
            if c not in stats.by_class:
                stats.by_class[c] = (np.zeros(stats.d), np.zeros(stats.l), 0.0)
            sx, sy, sw = stats.by_class[c]
            stats.by_class[c] = (sx + w * dx, sy + w * dy, sw + w)
    return stats


def delta_vector(stats: DeltaStats, detection: DetectorOutput):
    """(dx, dy) for one record: the running averages masked by its
    detector output. Unknown classes and class 0 give zeros."""
    dx = np.zeros(stats.d)
    dy = np.zeros(stats.l)
    if stats.mode == "apriori":
        for j in detection.corrupted_features:
            if stats.fx_w[j] > 0:
                dx[j] = stats.fx_sum[j] / stats.fx_w[j]
        for j in detection.corrupted_labels:
            if stats.fy_w[j] > 0:
                dy[j] = stats.fy_sum[j] / stats.fy_w[j]
        return dx, dy
    c = detection.error_class
    if c in stats.by_class:
        sx, sy, sw = stats.by_class[c]
        if sw > 0:
            dx = sx / sw
            dy = sy / sw
    return dx, dy


def corrected_weight(record, theta, spec, stats: DeltaStats, detection: DetectorOutput) -> float:
    """Estimated clean-gradient norm for a still-dirty record."""
    g = models.gradient(spec, record.x, record.y, theta).g
    m_x, m_y = models.taylor_matrices(spec, record.x, record.y, theta)
    dx, dy = delta_vector(stats, detection)
    if spec.loss in models.AGGREGATE_LOSSES:
        corrected = g + m_x @ dx[:1] + m_y @ dy[:1]
    else:
        corrected = g + m_x @ dx + m_y @ dy
    return float(np.linalg.norm(corrected))


def corrected_plan_weights(dataset, theta, spec, stats, detections: dict) -> list:
    """Corrected weights for the sorted dirty ids (detections keyed by id)."""
    out = []
    for rid in dataset.sorted_dirty_ids():
        out.append(corrected_weight(dataset.record(rid), theta, spec, stats, detections[rid]))
    return out


def _true_mean_clean_gradient(dataset, ids, theta, spec):
    X = dataset.x_matrix(ids, clean=True)
    Y = dataset.y_vector(ids, clean=True)
    return models.mean_gradient(spec, X, Y, theta)


def compare_estimators(dataset, theta, spec, grid, seed: int = 0) -> list:
    """Error table for the four gradient estimators along a cleaning grid.

    The pool is the dataset's dirty partition (ground truth required).
    Records are cleaned in a seeded uniform order; at each grid count the
    table gets a row {cleaned_count, taylor, avg_gradient, avg_feature,
    regression} of relative L2 errors against the exact mean clean gradient
    over the pool.
    """
    ids = dataset.sorted_dirty_ids()
    n = len(ids)
    if n == 0:
        raise ValueError("dirty pool is empty")
    for k in grid:
        if not 0 <= k <= n:
            raise ValueError(f"grid count {k} outside 0..{n}")
    detections = {}
    for rid in ids:
        r = dataset.record(rid)
        if not r.has_ground_truth():
            raise ValueError(f"record {rid} has no ground truth")
        detections[rid] = ground_truth_detect(r)

    rng = np.random.default_rng(seed)
    order = [ids[int(i)] for i in rng.permutation(n)]
    truth = _true_mean_clean_gradient(dataset, ids, theta, spec)
    tnorm = float(np.linalg.norm(truth))
    if tnorm == 0.0:
        raise ValueError("true mean clean gradient is zero; relative error undefined")

    dirty_g = {rid: models.gradient(spec, dataset.record(rid).x, dataset.record(rid).y, theta).g for rid in ids}
    clean_g = {
        rid: models.gradient(spec, dataset.record(rid).clean_x, dataset.record(rid).clean_y, theta).g for rid in ids
    }

    rows = []
    for k in sorted(grid):
        done = order[:k]
        done_set = set(done)
        pending = [rid for rid in ids if rid not in done_set]

        stats = DeltaStats("apriori", dataset.d, dataset.l)
        update_deltas(
            stats,
            [
                CleanedExample(
                    rid,
                    dataset.record(rid).x,
                    dataset.record(rid).y,
                    dataset.record(rid).clean_x,
                    dataset.record(rid).clean_y,
                    1.0 / n,
                    detections[rid],
                )
                for rid in done
            ],
        )

        shift = (
            np.mean([clean_g[rid] - dirty_g[rid] for rid in done], axis=0)
            if done
            else np.zeros_like(truth)
        )

        # per-component least squares clean_g ~ a * dirty_g + b
        if len(done) >= 2:
            D = np.array([dirty_g[rid] for rid in done])
            C = np.array([clean_g[rid] for rid in done])
            slopes = np.ones(D.shape[1])
            inters = np.zeros(D.shape[1])
            for j in range(D.shape[1]):
                dj = D[:, j]
                var = float(np.sum((dj - dj.mean()) ** 2))
                if var > 1e-30:
                    slopes[j] = float(np.sum((dj - dj.mean()) * (C[:, j] - C[:, j].mean())) / var)
                    inters[j] = float(C[:, j].mean() - slopes[j] * dj.mean())
        else:
            slopes, inters = np.ones_like(truth), np.zeros_like(truth)

        est = {"taylor": [], "avg_gradient": [], "avg_feature": [], "regression": []}
        for rid in done:
            for key in est:
                est[key].append(clean_g[rid])
        for rid in pending:
            r = dataset.record(rid)
            det = detections[rid]
            dx, dy = delta_vector(stats, det)
            m_x, m_y = models.taylor_matrices(spec, r.x, r.y, theta)
            est["taylor"].append(dirty_g[rid] + m_x @ dx + m_y @ dy)
            est["avg_gradient"].append(dirty_g[rid] + shift)
            est["avg_feature"].append(models.gradient(spec, r.x - dx, r.y - dy, theta).g)
            est["regression"].append(slopes * dirty_g[rid] + inters)

        row = {"cleaned_count": k}
        for key, vecs in est.items():
            err = float(np.linalg.norm(np.mean(vecs, axis=0) - truth)) / tnorm
            row[key] = err
        rows.append(row)
    return rows


def estimators_csv(rows) -> str:
    """Render a compare_estimators table as CSV text."""
    cols = ["cleaned_count", "taylor", "avg_gradient", "avg_feature", "regression"]
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if c != "cleaned_count" else str(row[c]) for c in cols))
    return "\n".join(lines) + "\n"
