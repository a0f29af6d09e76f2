"""Dirty-data detection: declared rules, known-corruption flags, and an
adaptive error classifier.

Three detector modes feed ``partition``:

* ``rules``: a record is dirty iff it violates at least one rule; the
  violated features become its corrupted-feature set.
* ``ground_truth``: simulation datasets carry clean values, so dirtiness is
  "current differs from clean" and the corrupted-feature set is the exact
  diff (the records-known-in-advance setting used by the benchmark).
* ``adaptive``: a one-vs-all linear SVM over error classes 0..u (0 = clean),
  retrained from scratch on every tagged example seen so far. With no
  training data the partition falls back to no-detector behavior (all
  uncleaned records are candidates) rather than trusting the cold-start
  "everything is clean" prediction.

The adaptive classifier runs on deviation-augmented features
``[x, |x - feature_means|]``: value-pinning corruption (a feature stuck at
its mean) is linearly separable there but not in raw feature space, and any
raw-separable labeling stays separable after augmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models


@dataclass(frozen=True)
class DetectorOutput:
    is_dirty: bool
    corrupted_features: frozenset = frozenset()
    corrupted_labels: frozenset = frozenset()
    error_class: int = 0

    def __post_init__(self):
        if not self.is_dirty and (self.corrupted_features or self.corrupted_labels or self.error_class):
            raise ValueError("a clean verdict cannot carry corruption details")


CLEAN_VERDICT = DetectorOutput(False)


@dataclass(frozen=True)
class Rule:
    """Interval / allowed-set constraint on one feature.

    Violation: value < min, value > max, or value not in allowed. Every rule
    is total (evaluates on any finite value).
    """

    feature: int
    min: float | None = None
    max: float | None = None
    allowed: frozenset | None = None
    name: str = ""

    def violated(self, value: float) -> bool:
        if self.min is not None and value < self.min:
            return True
        if self.max is not None and value > self.max:
            return True
        if self.allowed is not None and float(value) not in self.allowed:
            return True
        return False


@dataclass(frozen=True)
class RuleSet:
    rules: tuple

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @staticmethod
    def from_config(entries) -> "RuleSet":
        """Build from config triples: {feature, min?, max?, allowed?, name?}."""
        rules = []
        for i, e in enumerate(entries):
            if "feature" not in e:
                raise ValueError(f"rule {i}: missing 'feature'")
            allowed = e.get("allowed")
            rules.append(
                Rule(
                    feature=int(e["feature"]),
                    min=None if e.get("min") is None else float(e["min"]),
                    max=None if e.get("max") is None else float(e["max"]),
                    allowed=None if allowed is None else frozenset(float(v) for v in allowed),
                    name=str(e.get("name", f"rule{i}")),
                )
            )
        return RuleSet(tuple(rules))


def apriori_detect(record, rules: RuleSet) -> DetectorOutput:
    """Dirty iff any rule is violated; f_r is the union of violated features."""
    bad = set()
    for rule in rules.rules:
        if rule.feature >= record.x.shape[0]:
            raise ValueError(f"rule on feature {rule.feature} exceeds record dimension")
        if rule.violated(float(record.x[rule.feature])):
            bad.add(rule.feature)
    if bad:
        return DetectorOutput(True, frozenset(bad))
    return CLEAN_VERDICT


def ground_truth_detect(record) -> DetectorOutput:
    """Exact detection from recorded clean values."""
    if not record.has_ground_truth():
        raise ValueError(f"record {record.id} has no ground truth")
    feats = frozenset(int(j) for j in np.nonzero(record.x != record.clean_x)[0])
    labels = frozenset(int(j) for j in np.nonzero(record.y != record.clean_y)[0])
    if not feats and not labels:
        return CLEAN_VERDICT
    ec = record.error_class if record.error_class else 1
    return DetectorOutput(True, feats, labels, ec)


class AdaptiveClassifier:
    """One-vs-all linear SVM over error classes on augmented features."""

    def __init__(self, feature_means: np.ndarray, n_classes: int):
        self.feature_means = np.asarray(feature_means, dtype=float)
        self.n_classes = int(n_classes)
        self.theta = None  # (2d+1, n_classes) once trained
        self.trained_on = 0

    def _augment(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, np.abs(x - self.feature_means), [1.0]])

    def scores(self, x) -> np.ndarray:
        if self.theta is None:
            raise ValueError("classifier is untrained")
        return self._augment(x) @ self.theta

    def predict(self, x, margin_threshold: float = 0.0) -> int:
        """Class 0 unless some dirty class beats it by more than the margin.

        Ties among dirty classes break toward the lowest class index. An
        untrained classifier predicts 0 for everything.
        """
        if self.theta is None:
            return 0
        s = self.scores(x)
        if self.n_classes == 1:
            return 0
        k = 1 + int(np.argmax(s[1:]))  # argmax picks the first (lowest) on ties
        return k if s[k] - s[0] > margin_threshold else 0


def adaptive_train(
    labeled,
    u: int,
    feature_means=None,
    tol: float = 1e-4,
    max_iter: int = 2000,
) -> AdaptiveClassifier:
    """Train the error classifier on (record, error_class) pairs.

    ``u`` is the number of dirty classes (classes run 0..u). Zero examples
    yield the cold-start classifier (predicts 0). Classes never observed get
    columns trained against everything, which scores them low.
    """
    labeled = list(labeled)
    if u < 0:
        raise ValueError("u must be >= 0")
    for _, c in labeled:
        if not 0 <= c <= u:
            raise ValueError(f"error class {c} outside 0..{u}")
    if feature_means is None:
        if labeled:
            feature_means = np.mean([np.asarray(r.x, dtype=float) for r, _ in labeled], axis=0)
        else:
            feature_means = np.zeros(1)
    clf = AdaptiveClassifier(feature_means, u + 1)
    if not labeled:
        return clf
    X = np.array([clf._augment(r.x) for r, _ in labeled])
    Y = np.array([float(c) for _, c in labeled])
    spec = models.ModelSpec("svm_multiclass", d=X.shape[1], l2_reg=1e-6, n_classes=u + 1)
    theta = models.train_full(spec, (X, Y), tol=tol, max_iter=max_iter)
    # The line-searched descent above can stall on hinge kinks before the
    # classes are fully separated. Finish with Polyak-stepped subgradient
    # epochs (target loss 0), keeping the best iterate seen.
    best = theta
    best_f = models.mean_loss(spec, X, Y, theta)
    for _ in range(max_iter):
        g = models.mean_gradient(spec, X, Y, theta)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            best, best_f = theta, models.mean_loss(spec, X, Y, theta)
            break
        f = models.mean_loss(spec, X, Y, theta)
        theta = theta - (f / (gn * gn)) * g
        f_new = models.mean_loss(spec, X, Y, theta)
        if f_new < best_f:
            best, best_f = theta, f_new
    clf.theta = best
    clf.trained_on = len(labeled)
    return clf


@dataclass
class DetectorConfig:
    """Which detector drives the partition (mode: none | rules |
    ground_truth | adaptive), plus mode-specific state."""

    mode: str = "none"
    rules: RuleSet | None = None
    classifier: AdaptiveClassifier | None = None
    margin_threshold: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "rules", "ground_truth", "adaptive"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.mode == "rules" and self.rules is None:
            raise ValueError("rules mode needs a RuleSet")


def detect(record, config: DetectorConfig) -> DetectorOutput:
    """Apply the configured detector to one record."""
    if config.mode == "none":
        return DetectorOutput(True)
    if config.mode == "rules":
        return apriori_detect(record, config.rules)
    if config.mode == "ground_truth":
        return ground_truth_detect(record)
    clf = config.classifier
    if clf is None or clf.theta is None:
        return DetectorOutput(True)
    k = clf.predict(record.x, config.margin_threshold)
    return DetectorOutput(True, error_class=k) if k > 0 else CLEAN_VERDICT


def partition(dataset, config: DetectorConfig, cleaned_ids=frozenset()):
    """Split record ids into (dirty_ids, clean_ids).

    Records already cleaned never re-enter the dirty side. With no detector
    (or an untrained adaptive classifier) every uncleaned record is dirty.
    """
    cleaned_ids = set(cleaned_ids)
    dirty, clean = set(), set()
    untrained = config.mode == "adaptive" and (config.classifier is None or config.classifier.theta is None)
    for rid in dataset.ids():
        if rid in cleaned_ids:
            clean.add(rid)
            continue
        if config.mode == "none" or untrained:
            dirty.add(rid)
            continue
        out = detect(dataset.record(rid), config)
        (dirty if out.is_dirty else clean).add(rid)
    return dirty, clean
