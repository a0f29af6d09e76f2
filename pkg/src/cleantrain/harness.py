"""Synthetic benchmarks and the strategy-comparison experiment runner.

The benchmark generator builds a classification or regression problem with
a known reference model, holds out a test split, corrupts the training
split, and fits the clean and dirty reference models. ``run_experiment``
then replays a set of cleaning strategies against identical copies of the
instance and reports metrics along a cleaned-records checkpoint grid.

Step sizes: the library default gamma0 = 0.1 with inverse scaling is far
too timid at this benchmark's scale (steps shrink by 1/(b*t)), so the
harness uses ``DESK_GAMMA0`` for its experiments. Exports write wall_ms as
0 so report files are byte-identical across runs; the in-memory rows keep
the measured value.
"""

from __future__ import annotations

import io
import math
import statistics
from dataclasses import dataclass, replace

import numpy as np

from . import baselines, models
from .baselines import StrategyId, SESSION_STRATEGIES
from .dataset import CorruptionSpec, DatasetView, OracleCleaner, Record, corrupt, from_arrays
from .detector import DetectorConfig
from .models import ModelSpec
from .updater import HistoryPoint, StepSchedule, UpdateConfig, run_to_completion

DESK_GAMMA0 = 20.0

REPORT_COLUMNS = (
    "strategy",
    "seed",
    "checkpoint",
    "records_cleaned",
    "rel_model_error",
    "test_accuracy",
    "training_loss",
    "wall_ms",
)


def class_mean_vector(d: int, scale: float = 2.0, decay: float = 0.8) -> np.ndarray:
    """Per-feature class separation; later features carry less signal."""
    return scale * decay ** np.arange(d)


def _synthetic_xy(n: int, d: int, task: str, seed: int, labels: str = "pm1",
                  noise: float = 1.0, margin: float = 0.2,
                  balance: float | None = None):
    """Generate (X, Y) arrays with a planted signal.

    Classification: two Gaussian clouds at +-v (v from class_mean_vector)
    with per-coordinate spread ``noise``, every record resampled until its
    projection onto v clears ``margin`` (negative margin disables the
    resampling, so the clouds may overlap). Labels alternate exactly;
    ``balance`` instead draws the positive class with that probability,
    which skews the feature means away from the origin. Regression:
    X ~ N(0, 1), y = v.x + noise. ``labels`` picks the classification
    convention: "pm1" or "01".
    """
    rng = np.random.default_rng(seed)
    v = class_mean_vector(d)
    if task == "regression":
        X = rng.standard_normal((n, d))
        Y = X @ v + noise * rng.standard_normal(n)
        return X, Y
    if task != "classification":
        raise ValueError(f"unknown task {task!r}")
    vn = v / np.linalg.norm(v)
    X = np.empty((n, d))
    Y = np.empty(n)
    for i in range(n):
        if balance is None:
            s = 1.0 if i % 2 == 0 else -1.0
        else:
            s = 1.0 if rng.random() < balance else -1.0
        while True:
            x = s * v + noise * rng.standard_normal(d)
            if s * float(x @ vn) >= margin:
                break
        X[i] = x
        Y[i] = s
    if labels == "01":
        Y = (Y > 0).astype(float)
    elif labels != "pm1":
        raise ValueError(f"unknown label convention {labels!r}")
    return X, Y


def synthetic_benchmark(n: int, d: int, task: str, seed: int, labels: str = "pm1",
                        noise: float = 1.0, margin: float = 0.2) -> DatasetView:
    """Seeded synthetic dataset (see _synthetic_xy for the construction)."""
    if n < 100 or d < 2:
        raise ValueError("need n >= 100 and d >= 2")
    X, Y = _synthetic_xy(n, d, task, seed, labels=labels, noise=noise, margin=margin)
    return from_arrays(X, Y)


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark experiment: model, data, corruption, budget, strategies."""

    loss: str = "logistic_regression"
    d: int = 10
    l2_reg: float = 0.1
    n: int = 5000
    test_fraction: float = 0.2
    corruption: str = "systematic"
    rate: float = 0.05
    outlier_scale: float = 3.0
    num_features: int = 3
    batch_size: int = 50
    budget: int = 500
    gamma0: float = DESK_GAMMA0
    floor_epsilon: float = 0.1
    noise: float = 1.0
    margin: float = 0.2
    balance: float | None = None
    margin_threshold: float = 0.0
    strategies: tuple = (StrategyId.AC, StrategyId.AL, StrategyId.SC)
    seeds: tuple = (0, 1, 2, 3, 4)
    checkpoints: tuple = tuple(range(0, 501, 50))

    def task(self) -> str:
        return "regression" if self.loss in ("linear_regression", "mean", "median") else "classification"

    def label_convention(self) -> str:
        return "01" if self.loss == "logistic_regression" else "pm1"

    def model_spec(self) -> ModelSpec:
        return ModelSpec(self.loss, self.d, l2_reg=self.l2_reg)

    def update_config(self) -> UpdateConfig:
        return UpdateConfig(
            batch_size=self.batch_size,
            budget=self.budget,
            schedule=StepSchedule("inverse_scaling", self.gamma0),
            floor_epsilon=self.floor_epsilon,
        )


@dataclass
class BenchmarkInstance:
    """A corrupted training view plus everything needed to score models."""

    dataset: DatasetView
    spec: ModelSpec
    test_x: np.ndarray
    test_y: np.ndarray
    theta_star: np.ndarray
    theta_dirty: np.ndarray

    def test_xy(self):
        return self.test_x, self.test_y


def make_instance(cfg: ExperimentConfig, seed: int) -> BenchmarkInstance:
    """Generate, split, corrupt, and fit the two reference models."""
    X, Y = _synthetic_xy(cfg.n, cfg.d, cfg.task(), seed,
                         labels=cfg.label_convention(), noise=cfg.noise, margin=cfg.margin,
                         balance=cfg.balance)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cfg.n)
    n_test = int(round(cfg.test_fraction * cfg.n))
    test_idx, train_idx = perm[:n_test], perm[n_test:]
    spec = cfg.model_spec()
    clean_train = from_arrays(X[train_idx], Y[train_idx])
    theta_star = models.train_full(spec, (X[train_idx], Y[train_idx]))
    cspec = CorruptionSpec(cfg.corruption, cfg.rate, seed=seed,
                           outlier_scale=cfg.outlier_scale, num_features=cfg.num_features)
    dirty = corrupt(clean_train, cspec, reference_theta=theta_star)
    ids = dirty.ids()
    theta_dirty = models.train_full(spec, (dirty.x_matrix(ids), dirty.y_vector(ids)))
    return BenchmarkInstance(dirty, spec, X[test_idx], Y[test_idx], theta_star, theta_dirty)


def relative_model_error(theta, theta_star) -> float:
    theta = np.asarray(theta, dtype=float).ravel()
    theta_star = np.asarray(theta_star, dtype=float).ravel()
    denom = float(np.linalg.norm(theta_star))
    if denom == 0.0:
        raise ValueError("reference model is identically zero")
    return float(np.linalg.norm(theta - theta_star)) / denom


def _score_point(t, rc, theta, spec, dataset, test_xy, theta_star) -> HistoryPoint:
    ids = dataset.ids()
    loss = models.mean_loss(spec, dataset.x_matrix(ids), dataset.y_vector(ids), theta)
    acc = models.evaluate(spec, theta, *test_xy)["accuracy"] if test_xy is not None else float("nan")
    rel = relative_model_error(theta, theta_star) if theta_star is not None else float("nan")
    return HistoryPoint(t, rc, loss, acc, rel, 0.0, np.asarray(theta, dtype=float).copy())


def run_strategy(instance: BenchmarkInstance, strategy: StrategyId, cfg: ExperimentConfig,
                 seed: int) -> list:
    """Replay one strategy on a private copy of the instance.

    Returns a history: HistoryPoints ordered by records_cleaned. Reference
    strategies (NO_CLEAN, FULL_CLEAN, DISCARD, ROBUST) yield one point.
    """
    strategy = StrategyId(strategy)
    ds = instance.dataset.copy()
    spec = instance.spec
    ucfg = cfg.update_config()
    test_xy = instance.test_xy()

    if strategy in SESSION_STRATEGIES:
        session = baselines.make_session(
            ds, spec, ucfg, strategy, seed,
            theta0=instance.theta_dirty,
            theta_star=instance.theta_star,
            test_xy=test_xy,
            margin_threshold=cfg.margin_threshold,
        )
        run_to_completion(session, cleaner=OracleCleaner(ds))
        return list(session.history)

    if strategy == StrategyId.SC:
        grid = [c for c in cfg.checkpoints if 0 < c <= len(ds)]
        points = []
        baselines.sampleclean_run(
            ds, spec, OracleCleaner(ds), grid, seed,
            observer=lambda k, th: points.append(
                _score_point(len(points) + 1, k, th, spec, ds, test_xy, instance.theta_star)))
        return points

    if strategy in (StrategyId.PC, StrategyId.PC_D):
        det = DetectorConfig("ground_truth") if strategy == StrategyId.PC_D else None
        points = []
        baselines.partial_cleaning_run(
            ds, spec, OracleCleaner(ds), ucfg, seed, detector_cfg=det,
            observer=lambda k, th: points.append(
                _score_point(len(points) + 1, k, th, spec, ds, test_xy, instance.theta_star)))
        return points

    if strategy == StrategyId.NO_CLEAN:
        return [_score_point(0, 0, instance.theta_dirty, spec, ds, test_xy, instance.theta_star)]

    if strategy == StrategyId.FULL_CLEAN:
        theta = baselines.full_clean_train(ds, spec)
        for rid in ds.ids():
            rec = ds.record(rid)
            ds.apply_clean_values(rid, rec.clean_x, rec.clean_y)
            ds.mark_clean(rid)
        return [_score_point(0, len(ds), theta, spec, ds, test_xy, instance.theta_star)]

    if strategy == StrategyId.DISCARD:
        theta = baselines.discard_run(ds, spec, DetectorConfig("ground_truth"))
        return [_score_point(0, 0, theta, spec, ds, test_xy, instance.theta_star)]

    if strategy == StrategyId.ROBUST:
        if spec.loss != "logistic_regression":
            raise ValueError("ROBUST is a logistic-regression baseline")
        ids = ds.ids()
        model = baselines.robust_logreg(ds.x_matrix(ids), ds.y_vector(ids), l2_reg=spec.l2_reg)
        acc = model.accuracy(instance.test_x, instance.test_y)
        pt = HistoryPoint(0, 0, float("nan"), acc, float("nan"), 0.0, model.theta.copy())
        return [pt]

    raise ValueError(f"unhandled strategy {strategy}")


def value_at_checkpoint(history: list, checkpoint: int) -> HistoryPoint | None:
    """Step-function lookup: the last point with records_cleaned <= c."""
    best = None
    for pt in history:
        if pt.records_cleaned <= checkpoint:
            best = pt
        else:
            break
    return best


def run_experiment(cfg: ExperimentConfig) -> list:
    """Rows of the strategy-comparison report, plus per-checkpoint medians.

    Row keys follow REPORT_COLUMNS; median rows use seed="median".
    """
    rows = []
    for seed in cfg.seeds:
        instance = make_instance(cfg, seed)
        for strategy in cfg.strategies:
            history = run_strategy(instance, strategy, cfg, seed)
            for c in cfg.checkpoints:
                pt = value_at_checkpoint(history, c)
                if pt is None:
                    continue
                rows.append({
                    "strategy": StrategyId(strategy).value,
                    "seed": seed,
                    "checkpoint": c,
                    "records_cleaned": pt.records_cleaned,
                    "rel_model_error": pt.rel_model_error,
                    "test_accuracy": pt.test_accuracy,
                    "training_loss": pt.training_loss,
                    "wall_ms": pt.wall_ms,
                })
    rows.extend(median_rows(rows))
    return rows


def median_rows(rows: list) -> list:
    """Per (strategy, checkpoint) medians over seeds, seed="median"."""
    groups: dict = {}
    for r in rows:
        if r["seed"] == "median":
            continue
        groups.setdefault((r["strategy"], r["checkpoint"]), []).append(r)
    out = []
    for (strategy, checkpoint) in sorted(groups):
        members = groups[(strategy, checkpoint)]
        med = {"strategy": strategy, "seed": "median", "checkpoint": checkpoint}
        for k in ("records_cleaned", "rel_model_error", "test_accuracy", "training_loss", "wall_ms"):
            vals = [m[k] for m in members if not (isinstance(m[k], float) and math.isnan(m[k]))]
            med[k] = statistics.median(vals) if vals else float("nan")
        out.append(med)
    return out


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_csv(rows: list) -> str:
    """Serialize report rows; wall_ms is written as 0 for reproducibility."""
    buf = io.StringIO()
    buf.write(",".join(REPORT_COLUMNS) + "\n")
    for r in rows:
        cells = []
        for col in REPORT_COLUMNS:
            cells.append("0" if col == "wall_ms" else _fmt_cell(r[col]))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def records_to_target(history: list, target: float, budget: int) -> int:
    """Cleanings needed to first reach rel_model_error <= target (capped at
    the budget when the run never gets there)."""
    for pt in history:
        if not math.isnan(pt.rel_model_error) and pt.rel_model_error <= target:
            return pt.records_cleaned
    return budget


def corruption_sweep(cfg: ExperimentConfig, rates, target: float = 0.01) -> list:
    """Cleanings-to-target rows across corruption rates.

    Returns rows {rate, strategy, seed, records_to_target} plus medians
    (seed="median") per (rate, strategy).
    """
    rows = []
    for rate in rates:
        rcfg = replace(cfg, rate=float(rate))
        for seed in cfg.seeds:
            instance = make_instance(rcfg, seed)
            for strategy in cfg.strategies:
                history = run_strategy(instance, strategy, rcfg, seed)
                rows.append({
                    "rate": float(rate),
                    "strategy": StrategyId(strategy).value,
                    "seed": seed,
                    "records_to_target": records_to_target(history, target, cfg.budget),
                })
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["rate"], r["strategy"]), []).append(r["records_to_target"])
    for (rate, strategy) in sorted(groups):
        rows.append({
            "rate": rate,
            "strategy": strategy,
            "seed": "median",
            "records_to_target": statistics.median(groups[(rate, strategy)]),
        })
    return rows


def simpson_demo() -> dict:
    """A tiny regression where partial cleaning flips the slope sign.

    Ten points on y = 2x (x = 1..10, intercept feature appended). Every
    record except the first gets its x shifted by +50. Cleaning just the
    two records with the largest true x leaves a mix whose least-squares
    slope is negative even though both the fully clean fit and the fully
    dirty fit have positive slopes.
    """
    records = []
    for i in range(1, 11):
        x_clean = np.array([float(i), 1.0])
        y = np.array([2.0 * i])
        if i == 1:
            records.append(Record(i, x_clean.copy(), y.copy(), x_clean.copy(), y.copy(), 0))
        else:
            x_dirty = np.array([float(i) + 50.0, 1.0])
            records.append(Record(i, x_dirty, y.copy(), x_clean.copy(), y.copy(), 1))
    ds = DatasetView(records)

    def lstsq_fit(X, Y):
        coef, *_ = np.linalg.lstsq(np.asarray(X, dtype=float), np.asarray(Y, dtype=float), rcond=None)
        return coef

    ids = ds.ids()
    dirty_fit = lstsq_fit(ds.x_matrix(ids), ds.y_vector(ids))
    clean_fit = lstsq_fit(ds.x_matrix(ids, clean=True), ds.y_vector(ids, clean=True))

    mixed = ds.copy()
    cleaned_ids = [9, 10]
    for rid in cleaned_ids:
        rec = mixed.record(rid)
        mixed.apply_clean_values(rid, rec.clean_x, rec.clean_y)
        mixed.mark_clean(rid)
    mids = mixed.ids()
    mixed_fit = lstsq_fit(mixed.x_matrix(mids), mixed.y_vector(mids))

    return {
        "dataset": ds,
        "mixed_dataset": mixed,
        "cleaned_ids": cleaned_ids,
        "clean_fit": clean_fit,
        "dirty_fit": dirty_fit,
        "mixed_fit": mixed_fit,
        "clean_slope": float(clean_fit[0]),
        "dirty_slope": float(dirty_fit[0]),
        "mixed_slope": float(mixed_fit[0]),
    }


def robust_comparison(cfg: ExperimentConfig | None = None, seeds=(0, 1, 2, 3, 4)) -> dict:
    """Accuracy of the outlier-thresholding baseline under both corruption
    kinds, against its clean-data accuracy and the full-cleaning model.

    Returns per-seed rows and the median summary used by the comparison:
    the accuracy drop (clean-trained minus corrupted-trained) under each
    corruption kind, and full-cleaning accuracy under systematic noise.
    """
    if cfg is None:
        # Overlapping, class-skewed clouds: the skew puts the feature means
        # off the origin, so mean-value corruption drags records across the
        # decision boundary instead of just rescaling it, while the 3x-max
        # outliers of random corruption stay easy to threshold away.
        cfg = ExperimentConfig(loss="logistic_regression", n=2000, d=3, num_features=2,
                               rate=0.4, noise=1.5, margin=-10.0, balance=0.3,
                               l2_reg=1e-4,
                               strategies=(StrategyId.ROBUST, StrategyId.FULL_CLEAN))
    rows = []
    for seed in seeds:
        row = {"seed": seed}
        for kind in ("random", "systematic"):
            inst = make_instance(replace(cfg, corruption=kind), seed)
            ids = inst.dataset.ids()
            clean_model = baselines.robust_logreg(
                inst.dataset.x_matrix(ids, clean=True), inst.dataset.y_vector(ids, clean=True),
                l2_reg=cfg.l2_reg)
            dirty_model = baselines.robust_logreg(
                inst.dataset.x_matrix(ids), inst.dataset.y_vector(ids), l2_reg=cfg.l2_reg)
            base = clean_model.accuracy(inst.test_x, inst.test_y)
            got = dirty_model.accuracy(inst.test_x, inst.test_y)
            row[f"robust_clean_{kind}"] = base
            row[f"robust_dirty_{kind}"] = got
            row[f"drop_{kind}"] = base - got
            if kind == "systematic":
                theta_full = baselines.full_clean_train(inst.dataset, inst.spec)
                row["full_clean_systematic"] = models.evaluate(
                    inst.spec, theta_full, inst.test_x, inst.test_y)["accuracy"]
                row["robust_systematic"] = got
        rows.append(row)

    def med(key):
        return statistics.median(r[key] for r in rows)

    return {
        "rows": rows,
        "median_drop_random": med("drop_random"),
        "median_drop_systematic": med("drop_systematic"),
        "median_full_clean_systematic": med("full_clean_systematic"),
        "median_robust_systematic": med("robust_systematic"),
    }


def label_offset_benchmark(n: int, d: int, seed: int, rate: float = 0.2,
                           offset: float = 5.0, noise: float = 0.1) -> DatasetView:
    """Regression dataset where a fraction of labels carry a constant offset.

    A unit-conversion style error: ceil(rate * n) seeded-uniform records get
    y shifted by ``offset``, with the original stored as ground truth and
    the partition set to exactly the shifted records. The x-side corruption
    kinds move records several sigma at once, far outside a first-order
    approximation's reach at this scale; a constant label offset keeps the
    gradient change linear, which is the regime the estimator comparison
    is about.
    """
    X, Y = _synthetic_xy(n, d, "regression", seed, noise=noise)
    ds = from_arrays(X, Y)
    rng = np.random.default_rng(seed + 1)
    picks = rng.choice(n, size=math.ceil(rate * n), replace=False)
    ids = ds.ids()
    for r in ds.records:
        r.clean_x = r.x.copy()
        r.clean_y = r.y.copy()
        r.error_class = 0
    dirty_ids = set()
    for pos in picks:
        rec = ds.record(ids[int(pos)])
        rec.y = rec.y + offset
        rec.error_class = 1
        dirty_ids.add(rec.id)
    ds.set_partition(dirty_ids, set(ids) - dirty_ids)
    return ds


def estimator_comparison(seeds=(0, 1, 2, 3, 4), grid=(0, 25, 50, 100),
                         n: int = 5000, d: int = 10, rate: float = 0.2,
                         offset: float = 5.0) -> dict:
    """Gradient-estimator error table on the label-offset benchmark.

    Runs compare_estimators per seed with the model fitted to the dirty
    labels as the probe point, and returns per-seed rows plus the median
    error per estimator at each grid count.
    """
    from .estimator import compare_estimators

    spec = ModelSpec("linear_regression", d=d, l2_reg=1e-4)
    rows = []
    for seed in seeds:
        ds = label_offset_benchmark(n, d, seed, rate=rate, offset=offset)
        ids = ds.ids()
        theta_dirty = models.train_full(spec, (ds.x_matrix(ids), ds.y_vector(ids)))
        for row in compare_estimators(ds, theta_dirty, spec, grid, seed=seed):
            rows.append({"seed": seed, **row})
    medians = []
    for k in sorted(set(grid)):
        at_k = [r for r in rows if r["cleaned_count"] == k]
        medians.append({
            "cleaned_count": k,
            **{key: statistics.median(r[key] for r in at_k)
               for key in ("taylor", "avg_gradient", "avg_feature", "regression")},
        })
    return {"rows": rows, "medians": medians}


def convergence_diagnostic(Ts=(4, 8, 16, 32, 64), n: int = 2000, d: int = 4,
                           batch_size: int = 25, l2_reg: float = 0.5,
                           gamma0: float | None = None, seeds=(0, 1, 2, 3, 4)) -> list:
    """Mean squared model error after T update iterations, for eyeballing
    the strongly-convex decay bound (at most C/T).

    Runs the update loop on clean data (identity repairs) from a zero start
    with the step size matched to the regularizer (gamma_t = 1/(l2_reg*t)
    when gamma0 is None), averaging over seeds. Returns rows {iterations,
    budget, mean_squared_error, mean_rel_error}.
    """
    from .updater import new_session

    if gamma0 is None:
        gamma0 = batch_size / l2_reg
    X, Y = _synthetic_xy(n, d, "classification", 0)
    spec = ModelSpec("svm_binary", d, l2_reg=l2_reg)
    theta_star = models.train_full(spec, (X, Y))
    denom2 = float(np.linalg.norm(theta_star) ** 2)
    rows = []
    for T in Ts:
        sq = []
        for seed in seeds:
            ds = from_arrays(X, Y)
            for rec in ds.records:
                rec.clean_x = rec.x.copy()
                rec.clean_y = rec.y.copy()
                rec.error_class = 0
            ucfg = UpdateConfig(batch_size=batch_size, budget=batch_size * int(T),
                                schedule=StepSchedule("inverse_scaling", gamma0),
                                polish_on_exhaustion=False)
            session = new_session(ds, spec, ucfg, seed=seed, plan_kind="uniform",
                                  use_estimator=False, theta0=np.zeros(d),
                                  theta_star=theta_star)
            run_to_completion(session, cleaner=OracleCleaner(ds))
            sq.append(float(np.linalg.norm(session.theta - theta_star) ** 2))
        mean_sq = float(np.mean(sq))
        rows.append({
            "iterations": int(T),
            "budget": batch_size * int(T),
            "mean_squared_error": mean_sq,
            "mean_rel_error": math.sqrt(mean_sq / denom2),
        })
    return rows
