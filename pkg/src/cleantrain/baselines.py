"""Comparison strategies sharing one cleaning-budget accounting.

Strategy ids
------------
* ``AC``        progressive loop, known-corruption detection, corrected plan
* ``AC_O``      progressive loop with clean-gradient (oracle) weights
* ``AC_D``      progressive loop, no detection, dirty-gradient weights
* ``AC_D_I``    progressive loop, no detection, uniform weights
* ``AC_C``      progressive loop, adaptive classifier detection
* ``AL``        progressive loop weighted by decision-boundary distance
* ``SC``        train from scratch on a uniformly sampled cleaned subset
* ``PC``        clean uniform batches in place, retrain on the full mix
* ``PC_D``      like PC but batches come from detector-flagged records
* ``DISCARD``   drop detector-flagged records, train on the rest
* ``ROBUST``    thresholded outlier removal, then logistic training
* ``NO_CLEAN``  train on the relation as-is
* ``FULL_CLEAN``train on ground-truth values

The progressive strategies are all the same updater loop under different
(plan, detector, estimator) presets; ``session_preset`` exposes the nesting
so tests can assert it by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import models
from .dataset import DatasetView, OracleCleaner
from .detector import DetectorConfig
from .updater import SessionState, UpdateConfig, new_session, run_to_completion


class StrategyId(str, Enum):
    AC = "AC"
    AC_O = "AC_O"
    AC_D = "AC_D"
    AC_D_I = "AC_D_I"
    AC_C = "AC_C"
    AL = "AL"
    SC = "SC"
    PC = "PC"
    PC_D = "PC_D"
    DISCARD = "DISCARD"
    ROBUST = "ROBUST"
    NO_CLEAN = "NO_CLEAN"
    FULL_CLEAN = "FULL_CLEAN"


SESSION_STRATEGIES = (
    StrategyId.AC,
    StrategyId.AC_O,
    StrategyId.AC_D,
    StrategyId.AC_D_I,
    StrategyId.AC_C,
    StrategyId.AL,
)


@dataclass(frozen=True)
class SessionPreset:
    plan_kind: str
    detector_mode: str
    use_estimator: bool


_PRESETS = {
    StrategyId.AC: SessionPreset("corrected", "ground_truth", True),
    StrategyId.AC_O: SessionPreset("oracle", "ground_truth", False),
    StrategyId.AC_D: SessionPreset("dirty_gradient", "none", False),
    StrategyId.AC_D_I: SessionPreset("uniform", "none", False),
    StrategyId.AC_C: SessionPreset("corrected", "adaptive", True),
    StrategyId.AL: SessionPreset("uncertainty", "none", False),
}


def session_preset(strategy: StrategyId) -> SessionPreset:
    try:
        return _PRESETS[StrategyId(strategy)]
    except KeyError:
        raise ValueError(f"{strategy} is not a progressive session strategy") from None


def make_session(
    dataset: DatasetView,
    spec: models.ModelSpec,
    cfg: UpdateConfig,
    strategy: StrategyId,
    seed: int,
    theta0=None,
    theta_star=None,
    test_xy=None,
    margin_threshold: float = 0.0,
) -> SessionState:
    """Build the updater session a progressive strategy prescribes."""
    preset = session_preset(strategy)
    if strategy == StrategyId.AL and spec.loss not in ("svm_binary", "logistic_regression"):
        raise ValueError("AL needs a classification model (boundary distance is undefined otherwise)")
    detector_cfg = DetectorConfig(preset.detector_mode, margin_threshold=margin_threshold)
    return new_session(
        dataset,
        spec,
        cfg,
        seed=seed,
        plan_kind=preset.plan_kind,
        detector_cfg=detector_cfg,
        use_estimator=preset.use_estimator,
        theta0=theta0,
        theta_star=theta_star,
        test_xy=test_xy,
    )


def active_learning_run(dataset, spec, cfg, seed, cleaner=None, **kw) -> SessionState:
    """The updater loop with boundary-distance weights, no detector, no
    estimator; classification models only."""
    session = make_session(dataset, spec, cfg, StrategyId.AL, seed, **kw)
    return run_to_completion(session, cleaner=cleaner)


def sampleclean_run(dataset: DatasetView, spec, cleaner, grid, seed: int, observer=None) -> list:
    """Train from scratch on a growing uniformly sampled cleaned subset.

    The sample grows cumulatively (without replacement) so at grid point k
    exactly k distinct records have been cleaned. Cleaning writes back into
    the dataset; the returned list holds (k, theta) pairs. ``observer``,
    when given, is called with (k, theta) while the dataset still reflects
    grid point k.
    """
    ids = dataset.ids()
    n = len(ids)
    grid = sorted(set(int(k) for k in grid))
    if grid and grid[-1] > n:
        raise ValueError("grid exceeds the dataset size")
    rng = np.random.default_rng(seed)
    order = [ids[int(i)] for i in rng.permutation(n)]
    out = []
    done = 0
    for k in grid:
        if k < 1:
            continue
        for rid in order[done:k]:
            cx, cy, _ = cleaner.clean(rid)
            dataset.apply_clean_values(rid, cx, cy)
            dataset.mark_clean(rid)
        done = k
        sample = order[:k]
        X = dataset.x_matrix(sample)
        Y = dataset.y_vector(sample)
        theta = models.train_full(spec, (X, Y))
        if observer is not None:
            observer(k, theta)
        out.append((k, theta))
    return out


def partial_cleaning_run(
    dataset: DatasetView,
    spec,
    cleaner,
    cfg: UpdateConfig,
    seed: int,
    detector_cfg: DetectorConfig | None = None,
    observer=None,
) -> list:
    """Clean uniform batches in place and retrain on the full mixed relation
    after every batch. With a detector, batches come from flagged records
    only. Returns (records_cleaned, theta) pairs, one per batch; ``observer``
    is called with each pair while the relation reflects that batch."""
    from . import detector as detector_mod

    rng = np.random.default_rng(seed)
    budget = cfg.budget
    cleaned: set = set()
    out = []
    while budget > 0:
        if detector_cfg is not None and detector_cfg.mode != "none":
            dirty, clean = detector_mod.partition(dataset, detector_cfg, cleaned)
            pool = sorted(dirty)
        else:
            pool = [rid for rid in dataset.ids() if rid not in cleaned]
        if not pool:
            break
        take = min(cfg.batch_size, budget, len(pool))
        picks = rng.choice(len(pool), size=take, replace=False)
        for i in picks:
            rid = pool[int(i)]
            cx, cy, _ = cleaner.clean(rid)
            dataset.apply_clean_values(rid, cx, cy)
            dataset.mark_clean(rid)
            cleaned.add(rid)
        budget -= take
        ids = dataset.ids()
        theta = models.train_full(spec, (dataset.x_matrix(ids), dataset.y_vector(ids)))
        if observer is not None:
            observer(len(cleaned), theta)
        out.append((len(cleaned), theta))
    return out


def no_clean_train(dataset: DatasetView, spec) -> np.ndarray:
    ids = dataset.ids()
    return models.train_full(spec, (dataset.x_matrix(ids), dataset.y_vector(ids)))


def full_clean_train(dataset: DatasetView, spec) -> np.ndarray:
    ids = dataset.ids()
    for rid in ids:
        if not dataset.record(rid).has_ground_truth():
            raise ValueError(f"record {rid} has no ground truth")
    return models.train_full(spec, (dataset.x_matrix(ids, clean=True), dataset.y_vector(ids, clean=True)))


def discard_run(dataset: DatasetView, spec, detector_cfg: DetectorConfig) -> np.ndarray:
    """Drop detector-flagged records and train on the remainder."""
    from . import detector as detector_mod

    dirty, clean = detector_mod.partition(dataset, detector_cfg, frozenset())
    keep = sorted(clean)
    if not keep:
        raise ValueError("detector flagged everything; nothing left to train on")
    return models.train_full(spec, (dataset.x_matrix(keep), dataset.y_vector(keep)))


@dataclass(frozen=True)
class RobustModel:
    """Logistic model over standardized, norm-capped features."""

    theta: np.ndarray
    feature_stds: np.ndarray
    norm_scale: float
    threshold: float
    kept: int
    dropped: int

    def transform(self, X) -> np.ndarray:
        Z = np.asarray(X, dtype=float) / self.feature_stds
        return Z / self.norm_scale

    def accuracy(self, X, Y) -> float:
        scores = self.transform(X) @ self.theta
        pred = (scores >= 0.0).astype(float)
        return float(np.mean(pred == (np.asarray(Y) > 0.5).astype(float)))


def robust_threshold(n: int, p: int) -> float:
    """Norm cutoff 4 * sqrt(ln p / n + ln n / n)."""
    if n < 2 or p < 1:
        raise ValueError("need n >= 2 and p >= 1")
    return 4.0 * math.sqrt(math.log(p) / n + math.log(n) / n)


def robust_logreg(X, Y, l2_reg: float = 1e-4) -> RobustModel:
    """Outlier-thresholded logistic regression (labels in {0, 1}).

    Features are scaled to unit variance per column (no centering, so the
    through-origin decision boundary is preserved), all rows are rescaled
    by the maximum row norm (norms live in [0, 1]), rows with norm >= T
    are dropped, and a logistic model is trained on the rest.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    n, p = X.shape
    sd = X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    Z = X / sd
    norms = np.linalg.norm(Z, axis=1)
    scale = float(norms.max())
    if scale == 0.0:
        raise ValueError("degenerate data: all rows identical")
    Z = Z / scale
    T = robust_threshold(n, p)
    keep = np.linalg.norm(Z, axis=1) < T
    if not np.any(keep):
        raise ValueError("threshold removed every example")
    spec = models.ModelSpec("logistic_regression", d=p, l2_reg=l2_reg)
    theta = models.train_full(spec, (Z[keep], Y[keep]))
    return RobustModel(theta, sd, scale, T, int(keep.sum()), int((~keep).sum()))
