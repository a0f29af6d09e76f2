import math

import numpy as np
import pytest

from cleantrain import models
from cleantrain.baselines import StrategyId
from cleantrain.harness import (
    DESK_GAMMA0,
    REPORT_COLUMNS,
    ExperimentConfig,
    class_mean_vector,
    convergence_diagnostic,
    estimator_comparison,
    label_offset_benchmark,
    make_instance,
    median_rows,
    records_to_target,
    relative_model_error,
    report_csv,
    robust_comparison,
    run_experiment,
    run_strategy,
    simpson_demo,
    synthetic_benchmark,
    value_at_checkpoint,
    _synthetic_xy,
)
from cleantrain.models import ModelSpec
from cleantrain.updater import HistoryPoint

SMALL = ExperimentConfig(
    loss="linear_regression", l2_reg=1e-4, d=3, n=200, rate=0.1,
    corruption="random", batch_size=10, budget=30, noise=0.5,
    strategies=(StrategyId.AC, StrategyId.SC, StrategyId.NO_CLEAN),
    seeds=(0, 1), checkpoints=(0, 10, 20, 30),
)


def hp(t, rc, rel=0.5):
    return HistoryPoint(t, rc, 1.0, float("nan"), rel, 0.0, np.zeros(2))


# ---------------------------------------------------------------- generators


def test_class_separation_vector_decays():
    assert np.allclose(class_mean_vector(3), [2.0, 1.6, 1.28])


def test_synthetic_benchmark_validation():
    with pytest.raises(ValueError):
        synthetic_benchmark(99, 5, "classification", 0)
    with pytest.raises(ValueError):
        synthetic_benchmark(100, 1, "classification", 0)
    with pytest.raises(ValueError, match="unknown task"):
        synthetic_benchmark(100, 5, "ranking", 0)
    with pytest.raises(ValueError, match="label convention"):
        _synthetic_xy(100, 5, "classification", 0, labels="bool")


def test_synthetic_benchmark_deterministic():
    a = synthetic_benchmark(120, 4, "classification", seed=3)
    b = synthetic_benchmark(120, 4, "classification", seed=3)
    c = synthetic_benchmark(120, 4, "classification", seed=4)
    ids = a.ids()
    assert np.array_equal(a.x_matrix(ids), b.x_matrix(ids))
    assert np.array_equal(a.y_vector(ids), b.y_vector(ids))
    assert not np.array_equal(a.x_matrix(ids), c.x_matrix(ids))


def test_classification_margin_and_balance():
    X, Y = _synthetic_xy(200, 4, "classification", seed=1, margin=0.2)
    assert set(np.unique(Y)) == {-1.0, 1.0}
    v = class_mean_vector(4)
    vn = v / np.linalg.norm(v)
    assert (Y * (X @ vn) >= 0.2).all()
    # alternating labels balance the classes exactly on even n
    pos = float(np.mean(Y > 0))
    assert 0.45 <= pos <= 0.55

    X01, Y01 = _synthetic_xy(200, 4, "classification", seed=1, labels="01")
    assert set(np.unique(Y01)) == {0.0, 1.0}
    assert np.array_equal(Y01, (Y > 0).astype(float))


def test_balance_parameter_skews_classes():
    _, y_neg = _synthetic_xy(300, 3, "classification", seed=0, balance=0.0)
    assert (y_neg == -1.0).all()
    _, y_pos = _synthetic_xy(300, 3, "classification", seed=0, balance=1.0)
    assert (y_pos == 1.0).all()
    _, y_skew = _synthetic_xy(1000, 3, "classification", seed=0, balance=0.3)
    assert 0.2 <= float(np.mean(y_skew > 0)) <= 0.4


def test_clean_benchmark_svm_is_accurate():
    X, Y = _synthetic_xy(600, 4, "classification", seed=2)
    spec = ModelSpec("svm_binary", 4, l2_reg=1e-3)
    theta = models.train_full(spec, (X[:400], Y[:400]))
    acc = models.evaluate(spec, theta, X[400:], Y[400:])["accuracy"]
    assert acc >= 0.95


def test_regression_benchmark_has_planted_signal():
    X, Y = _synthetic_xy(500, 3, "regression", seed=5, noise=0.1)
    resid = Y - X @ class_mean_vector(3)
    assert float(np.std(resid)) < 0.2


# ---------------------------------------------------------------- metrics


def test_relative_model_error():
    star = np.array([0.0, 5.0])
    assert relative_model_error(star, star) == 0.0
    assert relative_model_error(2 * star, star) == pytest.approx(1.0)
    assert relative_model_error([3.0, 4.0], star) == pytest.approx(math.sqrt(10) / 5)
    with pytest.raises(ValueError, match="identically zero"):
        relative_model_error([1.0, 0.0], [0.0, 0.0])


def test_value_at_checkpoint_is_a_step_function():
    history = [hp(0, 0), hp(1, 10), hp(2, 20)]
    assert value_at_checkpoint(history, -1) is None
    assert value_at_checkpoint(history, 0).records_cleaned == 0
    assert value_at_checkpoint(history, 10).records_cleaned == 10
    assert value_at_checkpoint(history, 15).records_cleaned == 10
    assert value_at_checkpoint(history, 999).records_cleaned == 20


def test_records_to_target():
    history = [hp(0, 0, rel=0.5), hp(1, 10, rel=float("nan")), hp(2, 20, rel=0.005)]
    assert records_to_target(history, 0.01, budget=30) == 20
    assert records_to_target(history, 1e-9, budget=30) == 30
    assert records_to_target([], 0.01, budget=7) == 7


def test_median_rows_skip_nan_and_prior_medians():
    rows = []
    for seed, rel in ((0, 0.3), (1, 0.1), (2, float("nan"))):
        rows.append({"strategy": "AC", "seed": seed, "checkpoint": 0,
                     "records_cleaned": seed, "rel_model_error": rel,
                     "test_accuracy": float("nan"), "training_loss": 1.0, "wall_ms": 0.0})
    rows.append({"strategy": "AC", "seed": "median", "checkpoint": 0,
                 "records_cleaned": 99, "rel_model_error": 99.0,
                 "test_accuracy": 99.0, "training_loss": 99.0, "wall_ms": 99.0})
    med = median_rows(rows)
    assert len(med) == 1
    assert med[0]["seed"] == "median"
    assert med[0]["rel_model_error"] == pytest.approx(0.2)  # nan dropped
    assert math.isnan(med[0]["test_accuracy"])
    assert med[0]["records_cleaned"] == 1


# ---------------------------------------------------------------- config and instances


def test_experiment_config_helpers():
    cfg = ExperimentConfig()
    assert cfg.gamma0 == DESK_GAMMA0 == 20.0
    assert cfg.task() == "classification"
    assert cfg.label_convention() == "01"
    spec = cfg.model_spec()
    assert (spec.loss, spec.d, spec.l2_reg) == ("logistic_regression", 10, 0.1)
    ucfg = cfg.update_config()
    assert ucfg.batch_size == 50 and ucfg.budget == 500
    assert ucfg.schedule.kind == "inverse_scaling" and ucfg.schedule.gamma0 == 20.0
    assert ucfg.floor_epsilon == 0.1

    reg = ExperimentConfig(loss="linear_regression")
    assert reg.task() == "regression"
    assert reg.label_convention() == "pm1"
    svm = ExperimentConfig(loss="svm_binary")
    assert svm.task() == "classification"
    assert svm.label_convention() == "pm1"


def test_make_instance_shapes_and_references():
    inst = make_instance(SMALL, 0)
    assert len(inst.dataset) == 160
    assert inst.test_x.shape == (40, 3) and inst.test_y.shape == (40,)
    corrupted = sum(1 for r in inst.dataset.records if r.error_class)
    assert corrupted == math.ceil(0.1 * 160)

    ids = inst.dataset.ids()
    star_ref = models.train_full(inst.spec, (inst.dataset.x_matrix(ids, clean=True),
                                             inst.dataset.y_vector(ids, clean=True)))
    assert np.array_equal(inst.theta_star, star_ref)
    dirty_ref = models.train_full(inst.spec, (inst.dataset.x_matrix(ids),
                                              inst.dataset.y_vector(ids)))
    assert np.array_equal(inst.theta_dirty, dirty_ref)


def test_make_instance_deterministic():
    a = make_instance(SMALL, 1)
    b = make_instance(SMALL, 1)
    ids = a.dataset.ids()
    assert np.array_equal(a.dataset.x_matrix(ids), b.dataset.x_matrix(ids))
    assert np.array_equal(a.theta_star, b.theta_star)
    assert np.array_equal(a.theta_dirty, b.theta_dirty)
    assert np.array_equal(a.test_x, b.test_x)


# ---------------------------------------------------------------- strategy runs


def test_reference_strategies_emit_single_points():
    inst = make_instance(SMALL, 0)
    nc = run_strategy(inst, StrategyId.NO_CLEAN, SMALL, 0)
    assert len(nc) == 1 and nc[0].records_cleaned == 0
    assert np.array_equal(nc[0].theta, inst.theta_dirty)

    fc = run_strategy(inst, StrategyId.FULL_CLEAN, SMALL, 0)
    assert len(fc) == 1 and fc[0].records_cleaned == len(inst.dataset)
    assert fc[0].rel_model_error <= 1e-9


def test_progressive_run_starts_at_the_dirty_model():
    inst = make_instance(SMALL, 0)
    history = run_strategy(inst, StrategyId.AC, SMALL, 0)
    assert history[0].t == 0 and history[0].records_cleaned == 0
    assert np.array_equal(history[0].theta, inst.theta_dirty)
    rcs = [p.records_cleaned for p in history]
    assert rcs == sorted(rcs) and len(set(rcs)) == len(rcs)
    # known-corruption detection: the run finishes once every truly-dirty
    # record is cleaned, even with budget left over
    corrupted = sum(1 for r in inst.dataset.records if r.error_class)
    assert rcs[-1] == corrupted <= SMALL.budget


def test_sampling_and_batch_strategies_follow_the_grid():
    inst = make_instance(SMALL, 0)
    sc = run_strategy(inst, StrategyId.SC, SMALL, 0)
    assert [p.records_cleaned for p in sc] == [10, 20, 30]
    pc = run_strategy(inst, StrategyId.PC, SMALL, 0)
    assert [p.records_cleaned for p in pc] == [10, 20, 30]


def test_run_strategy_leaves_the_instance_alone():
    inst = make_instance(SMALL, 0)
    ids = inst.dataset.ids()
    before = inst.dataset.x_matrix(ids).copy()
    dirty_before = set(inst.dataset.dirty_ids)
    for strategy in (StrategyId.AC, StrategyId.SC, StrategyId.PC, StrategyId.FULL_CLEAN):
        run_strategy(inst, strategy, SMALL, 0)
    assert np.array_equal(inst.dataset.x_matrix(ids), before)
    assert set(inst.dataset.dirty_ids) == dirty_before


def test_run_strategy_deterministic():
    inst = make_instance(SMALL, 1)
    a = run_strategy(inst, StrategyId.AC, SMALL, 1)
    b = run_strategy(inst, StrategyId.AC, SMALL, 1)
    assert len(a) == len(b)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.theta, pb.theta)
        assert pa.records_cleaned == pb.records_cleaned


def test_robust_strategy_needs_logistic():
    inst = make_instance(SMALL, 0)
    with pytest.raises(ValueError, match="logistic"):
        run_strategy(inst, StrategyId.ROBUST, SMALL, 0)


# ---------------------------------------------------------------- reports


def test_run_experiment_rows_and_medians():
    rows = run_experiment(SMALL)
    strategies = {r["strategy"] for r in rows}
    assert strategies == {"AC", "SC", "NO_CLEAN"}
    med = [r for r in rows if r["seed"] == "median"]
    assert med and all(set(r) == set(REPORT_COLUMNS) for r in rows)
    # at checkpoint 0 the progressive strategy reports the dirty model
    for seed in SMALL.seeds:
        inst = make_instance(SMALL, seed)
        want = relative_model_error(inst.theta_dirty, inst.theta_star)
        got = [r for r in rows
               if r["strategy"] == "AC" and r["seed"] == seed and r["checkpoint"] == 0]
        assert len(got) == 1 and got[0]["rel_model_error"] == pytest.approx(want)
    # NO_CLEAN never cleans, so its rows repeat at every checkpoint
    nc = [r for r in rows if r["strategy"] == "NO_CLEAN" and r["seed"] == 0]
    assert [r["checkpoint"] for r in nc] == [0, 10, 20, 30]
    assert len({r["rel_model_error"] for r in nc}) == 1


def test_report_csv_bytes_are_reproducible():
    csv1 = report_csv(run_experiment(SMALL))
    csv2 = report_csv(run_experiment(SMALL))
    assert csv1 == csv2
    lines = csv1.splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    # measured wall time is zeroed in the serialized report
    assert all(line.rsplit(",", 1)[1] == "0" for line in lines[1:])


def test_report_csv_cell_format():
    row = {"strategy": "AC", "seed": 0, "checkpoint": 50, "records_cleaned": 50,
           "rel_model_error": 0.125, "test_accuracy": float("nan"),
           "training_loss": 2.0, "wall_ms": 17.5}
    out = report_csv([row])
    assert out.splitlines()[1] == "AC,0,50,50,0.125,nan,2.0,0"


# ---------------------------------------------------------------- demos and comparisons


def test_simpson_demo_flips_the_mixed_slope():
    demo = simpson_demo()
    assert demo["clean_slope"] == pytest.approx(2.0)
    assert demo["dirty_slope"] == pytest.approx(0.2210242587601076)
    assert demo["mixed_slope"] == pytest.approx(-0.037129954841946755)
    assert demo["clean_slope"] > 0 and demo["dirty_slope"] > 0 > demo["mixed_slope"]
    assert len(demo["cleaned_ids"]) == 2

    # closed-form least squares on the mixed relation as an oracle
    mixed = demo["mixed_dataset"]
    ids = mixed.ids()
    x = mixed.x_matrix(ids)[:, 0]
    y = mixed.y_vector(ids)
    n = len(x)
    slope = (n * np.sum(x * y) - x.sum() * y.sum()) / (n * np.sum(x * x) - x.sum() ** 2)
    assert demo["mixed_slope"] == pytest.approx(float(slope))
    assert len(mixed.clean_ids) == 2


def test_label_offset_benchmark_contract():
    ds = label_offset_benchmark(50, 3, seed=7, rate=0.2, offset=5.0)
    dirty = ds.sorted_dirty_ids()
    assert len(dirty) == math.ceil(0.2 * 50)
    assert len(ds.clean_ids) == 50 - len(dirty)
    for rid in ds.ids():
        r = ds.record(rid)
        assert np.array_equal(r.x, r.clean_x)
        delta = float(r.y[0] - r.clean_y[0])
        if rid in ds.dirty_ids:
            assert delta == pytest.approx(5.0) and r.error_class == 1
        else:
            assert delta == 0.0 and r.error_class == 0
    twin = label_offset_benchmark(50, 3, seed=7, rate=0.2, offset=5.0)
    assert np.array_equal(ds.y_vector(ds.ids()), twin.y_vector(twin.ids()))


def test_estimator_comparison_table():
    out = estimator_comparison(seeds=(0, 1), grid=(0, 25), n=300, d=4)
    assert {r["cleaned_count"] for r in out["rows"]} == {0, 25}
    meds = {m["cleaned_count"]: m for m in out["medians"]}
    at0 = meds[0]
    # nothing cleaned yet: every correction is a no-op, all errors agree
    assert at0["taylor"] == at0["avg_gradient"] == at0["avg_feature"] == at0["regression"]
    at25 = meds[25]
    assert at25["taylor"] <= at25["avg_gradient"]
    assert at25["taylor"] <= 1e-8


def test_robust_comparison_summary():
    out = robust_comparison(seeds=(0, 1, 2))
    assert len(out["rows"]) == 3
    assert out["median_drop_systematic"] >= out["median_drop_random"]
    assert out["median_drop_random"] <= 0.02
    assert out["median_full_clean_systematic"] > out["median_robust_systematic"]


def test_convergence_diagnostic_decays():
    rows = convergence_diagnostic(Ts=(4, 16, 64), seeds=(0, 1, 2))
    assert [r["iterations"] for r in rows] == [4, 16, 64]
    assert all(r["budget"] == 25 * r["iterations"] for r in rows)
    sq = [r["mean_squared_error"] for r in rows]
    assert sq[0] > sq[1] > sq[2] > 0
    # decay at least as fast as 1/T over the grid
    assert sq[-1] <= sq[0] * (4 / 64)
