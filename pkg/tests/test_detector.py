from types import SimpleNamespace

import numpy as np
import pytest

import oracles
from cleantrain import detector
from cleantrain.dataset import CorruptionSpec, Record, corrupt, from_arrays
from cleantrain.detector import (
    CLEAN_VERDICT,
    AdaptiveClassifier,
    DetectorConfig,
    DetectorOutput,
    Rule,
    RuleSet,
    adaptive_train,
    apriori_detect,
    detect,
    ground_truth_detect,
    partition,
)
from conftest import corrupted_regression, regression_arrays


def rec(x, y=(0.0,), **kw):
    return Record(0, np.asarray(x, float), np.asarray(y, float), **kw)


def blobs(centers, n_per, seed, spread=0.3):
    """Well-separated class blobs; class index = center index."""
    rng = np.random.default_rng(seed)
    out = []
    for c, center in enumerate(centers):
        for _ in range(n_per):
            out.append((np.asarray(center, float) + spread * rng.standard_normal(len(center)), c))
    rng.shuffle(out)
    return out


THREE_CLASS = [np.zeros(3), np.array([4.0, 0.0, 0.0]), np.array([0.0, 4.0, 0.0])]


def test_clean_verdict_carries_no_details():
    with pytest.raises(ValueError):
        DetectorOutput(False, frozenset({1}))
    with pytest.raises(ValueError):
        DetectorOutput(False, error_class=2)
    assert CLEAN_VERDICT.is_dirty is False
    assert CLEAN_VERDICT.corrupted_features == frozenset()
    assert CLEAN_VERDICT.error_class == 0


@pytest.mark.parametrize(
    "rule,value,bad",
    [
        (Rule(0, min=0.0), -0.5, True),
        (Rule(0, min=0.0), 0.0, False),
        (Rule(0, max=10.0), 10.5, True),
        (Rule(0, max=10.0), 10.0, False),
        (Rule(0, allowed=frozenset({1.0, 2.0})), 3.0, True),
        (Rule(0, allowed=frozenset({1.0, 2.0})), 2.0, False),
        (Rule(0, min=0.0, max=1.0), 0.5, False),
    ],
)
def test_rule_violation(rule, value, bad):
    assert rule.violated(value) is bad


def test_allowed_set_rule_flags_unknown_code():
    # categorical column encoded as floats: codes 1 and 2 are legal,
    # anything else is a violation on that feature
    rules = RuleSet((Rule(feature=2, allowed=frozenset({1.0, 2.0}), name="code"),))
    out = apriori_detect(rec([0.0, 0.0, 7.0]), rules)
    assert out.is_dirty and out.corrupted_features == frozenset({2})
    assert apriori_detect(rec([0.0, 0.0, 1.0]), rules) == CLEAN_VERDICT


def test_ruleset_from_config():
    rs = RuleSet.from_config(
        [
            {"feature": 1, "min": 0, "max": 5, "name": "range"},
            {"feature": 0, "allowed": [1, 2]},
        ]
    )
    assert rs.rules[0] == Rule(1, 0.0, 5.0, None, "range")
    assert rs.rules[1].allowed == frozenset({1.0, 2.0})
    assert rs.rules[1].name == "rule1"
    with pytest.raises(ValueError, match="feature"):
        RuleSet.from_config([{"min": 0}])


def test_apriori_unions_violated_features():
    rules = RuleSet(
        (
            Rule(1, max=1.0),
            Rule(4, min=0.0),
            Rule(2, max=100.0),
        )
    )
    out = apriori_detect(rec([0.0, 5.0, 0.0, 0.0, -1.0]), rules)
    assert out.is_dirty
    assert out.corrupted_features == frozenset({1, 4})
    assert apriori_detect(rec([0.0, 0.5, 0.0, 0.0, 1.0]), rules) == CLEAN_VERDICT


def test_apriori_rule_out_of_range():
    with pytest.raises(ValueError, match="dimension"):
        apriori_detect(rec([1.0]), RuleSet((Rule(3, min=0.0),)))


def test_ground_truth_detect():
    r = rec([1.0, 9.0], clean_x=np.array([1.0, 2.0]), clean_y=np.array([0.0]), error_class=3)
    out = ground_truth_detect(r)
    assert out.is_dirty and out.corrupted_features == frozenset({1})
    assert out.corrupted_labels == frozenset()
    assert out.error_class == 3

    flipped = rec([1.0], (1.0,), clean_x=np.array([1.0]), clean_y=np.array([0.0]))
    out = ground_truth_detect(flipped)
    assert out.corrupted_labels == frozenset({0})
    assert out.error_class == 1  # unset class on a corrupted record reads as 1

    same = rec([1.0], clean_x=np.array([1.0]), clean_y=np.array([0.0]))
    assert ground_truth_detect(same) == CLEAN_VERDICT

    with pytest.raises(ValueError, match="ground truth"):
        ground_truth_detect(rec([1.0]))


def test_adaptive_cold_start_predicts_clean():
    clf = adaptive_train([], u=0)
    assert clf.theta is None
    assert clf.predict(np.array([100.0, -3.0])) == 0
    with pytest.raises(ValueError, match="untrained"):
        clf.scores(np.array([1.0]))


def test_adaptive_train_rejects_out_of_range_labels():
    pts = [(SimpleNamespace(x=np.zeros(2)), 0), (SimpleNamespace(x=np.ones(2)), 5)]
    with pytest.raises(ValueError, match="outside"):
        adaptive_train(pts, u=2)
    with pytest.raises(ValueError):
        adaptive_train([], u=-1)


def test_adaptive_two_separable_classes_perfect_training_accuracy():
    pts = blobs([np.zeros(2), np.array([4.0, 4.0])], n_per=50, seed=1)
    # certify the construction really is separable before trusting accuracy
    X = np.array([x for x, _ in pts])
    y = np.array([1 if c else -1 for _, c in pts])
    assert oracles.perceptron_separable(X, y)
    clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in pts], u=1)
    assert all(clf.predict(x) == c for x, c in pts)


def test_adaptive_u_growth_emits_new_class():
    pts = blobs(THREE_CLASS, n_per=30, seed=2)
    clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in pts], u=2)
    assert clf.n_classes == 3
    # a new error type shows up; retraining with u=3 must be able to emit it
    new_center = np.array([0.0, 0.0, 4.0])
    grown = pts + [(x, 3) for x, _ in blobs([new_center], n_per=30, seed=3)]
    clf2 = adaptive_train([(SimpleNamespace(x=x), c) for x, c in grown], u=3)
    assert clf2.n_classes == 4
    assert clf2.predict(new_center) == 3


def test_margin_threshold_monotone():
    pts = blobs(THREE_CLASS, n_per=40, seed=4)
    clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in pts], u=2)
    probes = [x for x, _ in blobs(THREE_CLASS, n_per=50, seed=5)]
    counts = [sum(clf.predict(x, m) > 0 for x in probes) for m in (0.0, 0.5, 1.0, 2.0, 5.0, 1e6)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[0] > 0 and counts[-1] == 0


def test_predict_tie_breaks_to_lowest_class_and_margin_is_strict():
    clf = AdaptiveClassifier(np.zeros(1), 3)
    clf.theta = np.zeros((3, 3))
    clf.theta[2, 1] = 1.0  # bias row: scores become [0, 1, 1]
    clf.theta[2, 2] = 1.0
    assert clf.predict(np.array([0.0])) == 1  # tie between 1 and 2
    assert clf.predict(np.array([0.0]), margin_threshold=1.0) == 0  # must beat, not meet
    assert clf.predict(np.array([0.0]), margin_threshold=0.5) == 1


def test_held_out_f1_after_200_labeled():
    train = blobs(THREE_CLASS, n_per=67, seed=6)[:200]
    clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in train], u=2)
    held = blobs(THREE_CLASS, n_per=100, seed=7)
    pred_dirty = np.array([clf.predict(x) > 0 for x, _ in held])
    true_dirty = np.array([c > 0 for _, c in held])
    assert oracles.f1(pred_dirty, true_dirty) >= 0.9


def test_accuracy_non_decreasing_with_labeled_size():
    sizes = (20, 60, 120, 200)
    accs = {s: [] for s in sizes}
    for seed in range(5):
        pool = blobs(THREE_CLASS, n_per=70, seed=10 + seed)
        held = blobs(THREE_CLASS, n_per=40, seed=100 + seed)
        for s in sizes:
            clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in pool[:s]], u=2)
            accs[s].append(np.mean([clf.predict(x) == c for x, c in held]))
    medians = [float(np.median(accs[s])) for s in sizes]
    assert all(b >= a - 1e-12 for a, b in zip(medians, medians[1:]))
    assert medians[-1] >= 0.9


# partitioning


def test_detector_config_validation():
    with pytest.raises(ValueError, match="mode"):
        DetectorConfig("bogus")
    with pytest.raises(ValueError, match="RuleSet"):
        DetectorConfig("rules")


def test_partition_none_mode_all_uncleaned_dirty():
    ds = corrupted_regression()
    dirty, clean = partition(ds, DetectorConfig("none"))
    assert dirty == set(ds.ids()) and clean == set()
    dirty, clean = partition(ds, DetectorConfig("none"), cleaned_ids={0, 1})
    assert clean == {0, 1} and dirty == set(ds.ids()) - {0, 1}


def test_partition_ground_truth_matches_corruption_bookkeeping():
    ds = corrupted_regression()
    dirty, clean = partition(ds, DetectorConfig("ground_truth"))
    assert dirty == {r.id for r in ds.records if r.is_corrupted()}
    assert clean == {r.id for r in ds.records if not r.is_corrupted()}


def test_partition_cleaned_ids_never_reenter_dirty():
    ds = corrupted_regression()
    some_dirty = ds.sorted_dirty_ids()[:2]
    dirty, clean = partition(ds, DetectorConfig("ground_truth"), cleaned_ids=set(some_dirty))
    assert set(some_dirty) <= clean
    assert not (set(some_dirty) & dirty)


def test_partition_untrained_adaptive_falls_back_to_all_dirty():
    ds = corrupted_regression()
    cfg = DetectorConfig("adaptive", classifier=AdaptiveClassifier(np.zeros(ds.d), 1))
    dirty, clean = partition(ds, cfg, cleaned_ids={3})
    assert clean == {3} and dirty == set(ds.ids()) - {3}


def test_rules_exact_on_rule_aligned_corruption():
    # random corruption writes 3 * column max, so a per-feature max rule at
    # the pre-corruption maximum flags exactly the corrupted records
    X, Y, _ = regression_arrays(60, 3, seed=9)
    X = np.abs(X) + 0.1
    ds = from_arrays(X, Y)
    col_max = X.max(axis=0)
    out = corrupt(ds, CorruptionSpec("random", rate=0.3, seed=4, outlier_scale=3.0))
    rules = RuleSet(tuple(Rule(j, max=float(col_max[j])) for j in range(3)))
    dirty, clean = partition(out, DetectorConfig("rules", rules=rules))
    truth = {r.id for r in out.records if r.is_corrupted()}
    assert dirty == truth
    assert clean == set(out.ids()) - truth


def test_cleaned_record_is_a_fixed_point_of_detection():
    X, Y, _ = regression_arrays(30, 2, seed=12)
    X = np.abs(X) + 0.1
    out = corrupt(from_arrays(X, Y), CorruptionSpec("random", rate=0.5, seed=2))
    col_max = out.x_matrix(out.ids(), clean=True).max(axis=0)
    rules = RuleSet(tuple(Rule(j, max=float(col_max[j])) for j in range(2)))
    victim = next(r for r in out.records if r.is_corrupted())
    assert apriori_detect(victim, rules).is_dirty
    out.apply_clean_values(victim.id, victim.clean_x, victim.clean_y)
    assert apriori_detect(victim, rules) == CLEAN_VERDICT


def test_detect_mode_none_marks_everything_dirty():
    out = detect(rec([1.0]), DetectorConfig("none"))
    assert out.is_dirty and out.corrupted_features == frozenset()


def test_detect_adaptive_wraps_prediction():
    pts = blobs([np.zeros(2), np.array([5.0, 5.0])], n_per=30, seed=8)
    clf = adaptive_train([(SimpleNamespace(x=x), c) for x, c in pts], u=1)
    cfg = DetectorConfig("adaptive", classifier=clf)
    dirty_out = detect(rec([5.0, 5.0]), cfg)
    assert dirty_out.is_dirty and dirty_out.error_class == 1
    assert detect(rec([0.0, 0.0]), cfg) == CLEAN_VERDICT
