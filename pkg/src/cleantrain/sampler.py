"""Sampling plans over the dirty partition and a variance oracle.

A :class:`SamplingPlan` is a strictly positive, normalized distribution over
a fixed id order (sorted ids, so cumulative-inversion draws are
deterministic given a seed). ``weighted_plan`` applies the floor mix

    p = (1 - eps) * w / sum(w) + eps / n

so every record keeps probability at least ``eps / n`` regardless of its
weight; all-zero weights degrade to uniform. Plans are invariant to scaling
the weight vector.

``estimator_variance`` is the brute-force oracle for the 1/p-reweighted
with-replacement mean estimator: it enumerates every outcome when feasible
(exactly for sample_size 1) and falls back to seeded Monte Carlo otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models

DEFAULT_FLOOR = 0.1
_NORM_TOL = 1e-9


@dataclass(frozen=True)
class SamplingPlan:
    ids: tuple
    probs: np.ndarray
    floor_epsilon: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "ids", tuple(self.ids))
        if len(self.ids) == 0:
            raise ValueError("a plan needs at least one record")
        if len(self.ids) != probs.shape[0]:
            raise ValueError("ids and probs disagree on length")
        if not np.all(np.isfinite(probs)):
            raise ValueError("plan contains non-finite probabilities")
        if np.any(probs <= 0.0) or np.any(probs > 1.0):
            raise ValueError("plan probabilities must lie in (0, 1]")
        if abs(float(probs.sum()) - 1.0) > _NORM_TOL:
            raise ValueError(f"plan probabilities sum to {probs.sum()!r}, not 1")

    def prob_of(self, record_id) -> float:
        try:
            return float(self.probs[self.ids.index(record_id)])
        except ValueError:
            raise KeyError(f"record {record_id} is not in the plan") from None


def uniform_plan(ids) -> SamplingPlan:
    ids = sorted(ids)
    n = len(ids)
    if n == 0:
        raise ValueError("cannot build a plan over an empty set")
    return SamplingPlan(tuple(ids), np.full(n, 1.0 / n))


def weighted_plan(ids, weights, floor_epsilon: float = DEFAULT_FLOOR) -> SamplingPlan:
    """Floor-mixed plan from non-negative weights (ids re-sorted)."""
    if not 0.0 <= floor_epsilon <= 1.0:
        raise ValueError("floor_epsilon must lie in [0, 1]")
    ids = list(ids)
    w = np.asarray(weights, dtype=float)
    if len(ids) != w.shape[0]:
        raise ValueError("ids and weights disagree on length")
    if len(ids) == 0:
        raise ValueError("cannot build a plan over an empty set")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    order = np.argsort(np.asarray(ids))
    ids = [ids[i] for i in order]
    w = w[order]
    n = len(ids)
    total = float(w.sum())
    base = np.full(n, 1.0 / n) if total == 0.0 else w / total
    probs = (1.0 - floor_epsilon) * base + floor_epsilon / n
    probs = probs / probs.sum()  # sweep up rounding residue
    return SamplingPlan(tuple(ids), probs, floor_epsilon)


def dirty_gradient_plan(dataset, theta, spec, floor_epsilon: float = DEFAULT_FLOOR) -> SamplingPlan:
    """Weights are gradient norms at the records' current (dirty) values."""
    ids = dataset.sorted_dirty_ids()
    w = [float(np.linalg.norm(models.gradient(spec, dataset.record(i).x, dataset.record(i).y, theta).g)) for i in ids]
    return weighted_plan(ids, w, floor_epsilon)


def oracle_plan(dataset, theta, spec, floor_epsilon: float = DEFAULT_FLOOR) -> SamplingPlan:
    """Weights are gradient norms at the ground-truth clean values."""
    ids = dataset.sorted_dirty_ids()
    w = []
    for i in ids:
        r = dataset.record(i)
        if not r.has_ground_truth():
            raise ValueError(f"record {i} has no ground truth; oracle plan unavailable")
        w.append(float(np.linalg.norm(models.gradient(spec, r.clean_x, r.clean_y, theta).g)))
    return weighted_plan(ids, w, floor_epsilon)


def uncertainty_plan(dataset, theta, spec, floor_epsilon: float = DEFAULT_FLOOR) -> SamplingPlan:
    """Boundary-distance weights 1 / (|theta.x| + 1e-6) over dirty values."""
    ids = dataset.sorted_dirty_ids()
    theta = np.asarray(theta, dtype=float)
    w = [1.0 / (abs(float(theta @ dataset.record(i).x)) + 1e-6) for i in ids]
    return weighted_plan(ids, w, floor_epsilon)


def draw_with_replacement(plan: SamplingPlan, k: int, rng: np.random.Generator) -> list:
    """k ids drawn with replacement by cumulative-sum inversion."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cum = np.cumsum(plan.probs)
    u = rng.random(k)
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(plan.ids) - 1)
    return [plan.ids[int(i)] for i in idx]


def _estimate(values, probs, idx_tuple, n):
    k = len(idx_tuple)
    acc = np.zeros_like(values[0])
    for i in idx_tuple:
        acc = acc + values[i] / probs[i]
    return acc / (k * n)


def estimator_variance(values, plan: SamplingPlan, sample_size: int, mc_draws: int = 100_000, seed: int = 0) -> float:
    """E ||mu_hat - mean||^2 for the 1/p-reweighted with-replacement
    estimator of the mean of ``values`` (vectors or scalars) under ``plan``.

    Exact enumeration over all n^k outcomes when that is small (always for
    sample_size 1); seeded Monte Carlo otherwise.
    """
    vals = [np.atleast_1d(np.asarray(v, dtype=float)) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("values is empty")
    if n != len(plan.ids):
        raise ValueError("plan does not cover the value list")
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    mean = sum(vals) / n
    probs = plan.probs
    if n**sample_size <= 200_000:
        total = 0.0
        stack = [((), 1.0)]
        for _ in range(sample_size):
            nxt = []
            for idxs, p in stack:
                for i in range(n):
                    nxt.append((idxs + (i,), p * probs[i]))
            stack = nxt
        for idxs, p in stack:
            err = _estimate(vals, probs, idxs, n) - mean
            total += p * float(err @ err)
        return float(total)
    rng = np.random.default_rng(seed)
    cum = np.cumsum(probs)
    acc = 0.0
    V = np.array(vals)
    for _ in range(mc_draws):
        u = rng.random(sample_size)
        idx = np.minimum(np.searchsorted(cum, u, side="right"), n - 1)
        est = (V[idx] / probs[idx, None]).sum(axis=0) / (sample_size * n)
        err = est - mean
        acc += float(err @ err)
    return acc / mc_draws
