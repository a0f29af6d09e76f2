"""Command-line frontend.

Subcommands: corrupt, train, simulate, compare, estimators, serve,
demo-simpson. Every subcommand accepts --config PATH (JSON or TOML, flat
keys named like the long flags with dashes as underscores; --l2 travels
as l2_reg); explicit flags override config values, config values override
built-in defaults. Input files are
never modified; outputs go only to --out. Exit codes: 0 success, 1 usage
error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, dataset, estimator, harness, models
from .baselines import SESSION_STRATEGIES, StrategyId
from .dataset import CorruptionSpec, OracleCleaner, corrupt, load_csv, save_csv
from .harness import ExperimentConfig
from .models import ModelSpec
from .updater import StepSchedule, UpdateConfig, run_to_completion

TRAJECTORY_COLUMNS = ("t", "records_cleaned", "training_loss", "test_accuracy",
                      "rel_model_error", "theta")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that signals usage problems instead of exiting with 2."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def load_config(path) -> dict:
    p = Path(path)
    text = p.read_text()
    if p.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    if p.suffix == ".json":
        return json.loads(text)
    raise ValueError(f"config {path}: expected a .json or .toml file")


class _Options:
    """Flag > config > default lookup."""

    def __init__(self, args, config: dict):
        self.args = vars(args)
        self.config = config

    def get(self, key, default=None):
        v = self.args.get(key)
        if v is not None:
            return v
        if key in self.config:
            return self.config[key]
        return default


def _add_common(p: _Parser):
    p.add_argument("--config", help="JSON or TOML config file")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", help="output path (default: stdout where sensible)")


def build_parser() -> _Parser:
    parser = _Parser(prog="cleantrain", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("corrupt", help="corrupt a clean dataset CSV", add_help=True)
    _add_common(p)
    p.add_argument("--in", dest="input", help="clean dataset CSV")
    p.add_argument("--kind", choices=["random", "systematic"], help="corruption kind")
    p.add_argument("--rate", type=float, help="fraction of records to corrupt")
    p.add_argument("--outlier-scale", type=float, dest="outlier_scale")
    p.add_argument("--num-features", type=int, dest="num_features")
    p.add_argument("--loss", help="model used for the systematic reference fit")
    p.add_argument("--l2", type=float, dest="l2_reg")

    p = sub.add_parser("train", help="fit a model on a dataset CSV")
    _add_common(p)
    p.add_argument("--in", dest="input", help="dataset CSV")
    p.add_argument("--loss", help="loss name")
    p.add_argument("--l2", type=float, dest="l2_reg")

    p = sub.add_parser("simulate", help="run one progressive strategy with oracle repairs")
    _add_common(p)
    p.add_argument("--in", dest="input", help="dirty dataset CSV with ground truth")
    p.add_argument("--strategy", choices=[s.value for s in SESSION_STRATEGIES])
    p.add_argument("--budget", type=int, help="total cleaning budget")
    p.add_argument("--batch", type=int, help="records per batch")
    p.add_argument("--loss", help="loss name")
    p.add_argument("--l2", type=float, dest="l2_reg")
    p.add_argument("--gamma0", type=float, help="step-size scale")
    p.add_argument("--floor-epsilon", type=float, dest="floor_epsilon")
    p.add_argument("--margin-threshold", type=float, dest="margin_threshold")

    p = sub.add_parser("compare", help="run the strategy-comparison benchmark")
    _add_common(p)
    p.add_argument("--strategy", action="append", dest="strategies_flag",
                   help="strategy to include (repeatable)")
    p.add_argument("--budget", type=int)
    p.add_argument("--batch", type=int)

    p = sub.add_parser("estimators", help="compare gradient estimators on ground-truth data")
    _add_common(p)
    p.add_argument("--in", dest="input", help="dirty dataset CSV with ground truth")
    p.add_argument("--loss", help="loss name")
    p.add_argument("--l2", type=float, dest="l2_reg")
    p.add_argument("--grid", help="comma-separated cleaned counts, e.g. 10,25,50")

    p = sub.add_parser("serve", help="run the cleaning-session HTTP service")
    _add_common(p)
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--snapshot-dir", dest="snapshot_dir")

    p = sub.add_parser("demo-simpson", help="tiny dataset where partial cleaning flips a slope")
    _add_common(p)

    return parser


def _write_out(text: str, out_path):
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _model_spec(opt: _Options, d: int) -> ModelSpec:
    loss = opt.get("loss", "svm_binary")
    l2 = float(opt.get("l2_reg", 1e-4))
    if loss in models.AGGREGATE_LOSSES:
        l2 = 0.0
    return ModelSpec(loss, d, l2_reg=l2)


def cmd_corrupt(opt: _Options) -> int:
    path = opt.get("input")
    if not path:
        raise _UsageError("corrupt: --in is required")
    out = opt.get("out")
    if not out:
        raise _UsageError("corrupt: --out is required")
    ds = load_csv(path)
    kind = opt.get("kind", "random")
    cspec = CorruptionSpec(
        kind,
        float(opt.get("rate", 0.05)),
        seed=int(opt.get("seed", 0)),
        outlier_scale=float(opt.get("outlier_scale", 3.0)),
        num_features=int(opt.get("num_features", 3)),
    )
    reference = None
    if kind == "systematic":
        spec = _model_spec(opt, ds.d)
        ids = ds.ids()
        reference = models.train_full(spec, (ds.x_matrix(ids), ds.y_vector(ids)))
    dirty = corrupt(ds, cspec, reference_theta=reference)
    save_csv(dirty, out)
    return 0


def cmd_train(opt: _Options) -> int:
    path = opt.get("input")
    if not path:
        raise _UsageError("train: --in is required")
    ds = load_csv(path)
    spec = _model_spec(opt, ds.d)
    ids = ds.ids()
    X, Y = ds.x_matrix(ids), ds.y_vector(ids)
    theta = models.train_full(spec, (X, Y))
    doc = {
        "loss": spec.loss,
        "d": spec.d,
        "l2_reg": spec.l2_reg,
        "theta": [repr(float(v)) for v in np.asarray(theta).ravel()],
        "theta_shape": list(np.asarray(theta).shape),
        "training_loss": models.mean_loss(spec, X, Y, theta),
    }
    _write_out(json.dumps(doc, indent=2) + "\n", opt.get("out"))
    return 0


def trajectory_csv(history) -> str:
    buf = io.StringIO()
    buf.write(",".join(TRAJECTORY_COLUMNS) + "\n")
    for pt in history:
        theta = ";".join(repr(float(v)) for v in np.asarray(pt.theta).ravel())
        row = [str(pt.t), str(pt.records_cleaned), repr(pt.training_loss),
               repr(pt.test_accuracy), repr(pt.rel_model_error), theta]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def simulation_session(ds, opt: _Options):
    """Build the session `simulate` runs; the HTTP service uses the same
    construction so trajectories agree bit for bit."""
    spec = _model_spec(opt, ds.d)
    cfg = UpdateConfig(
        batch_size=int(opt.get("batch", 50)),
        budget=int(opt.get("budget", 500)),
        schedule=StepSchedule("inverse_scaling", float(opt.get("gamma0", 0.1))),
        floor_epsilon=float(opt.get("floor_epsilon", 0.1)),
    )
    strategy = StrategyId(opt.get("strategy", "AC"))
    return baselines.make_session(
        ds, spec, cfg, strategy, int(opt.get("seed", 0)),
        margin_threshold=float(opt.get("margin_threshold", 0.0)),
    )


def cmd_simulate(opt: _Options) -> int:
    path = opt.get("input")
    if not path:
        raise _UsageError("simulate: --in is required")
    ds = load_csv(path)
    session = simulation_session(ds, opt)
    run_to_completion(session, cleaner=OracleCleaner(ds))
    _write_out(trajectory_csv(session.history), opt.get("out"))
    return 0


def cmd_compare(opt: _Options) -> int:
    kwargs = {}
    for key in ("loss", "d", "l2_reg", "n", "test_fraction", "corruption", "rate",
                "outlier_scale", "num_features", "gamma0", "floor_epsilon",
                "noise", "margin", "margin_threshold"):
        v = opt.get(key)
        if v is not None:
            kwargs[key] = v
    if opt.get("batch") is not None:
        kwargs["batch_size"] = int(opt.get("batch"))
    if opt.get("budget") is not None:
        kwargs["budget"] = int(opt.get("budget"))
    strategies = opt.get("strategies_flag") or opt.get("strategies")
    if strategies is not None:
        kwargs["strategies"] = tuple(StrategyId(s) for s in strategies)
    if opt.get("seeds") is not None:
        kwargs["seeds"] = tuple(int(s) for s in opt.get("seeds"))
    elif opt.get("seed") is not None:
        kwargs["seeds"] = (int(opt.get("seed")),)
    if opt.get("checkpoints") is not None:
        kwargs["checkpoints"] = tuple(int(c) for c in opt.get("checkpoints"))
    cfg = ExperimentConfig(**kwargs)
    rows = harness.run_experiment(cfg)
    _write_out(harness.report_csv(rows), opt.get("out"))
    return 0


def cmd_estimators(opt: _Options) -> int:
    path = opt.get("input")
    if not path:
        raise _UsageError("estimators: --in is required")
    ds = load_csv(path)
    spec = _model_spec(opt, ds.d)
    ids = ds.ids()
    theta = models.train_full(spec, (ds.x_matrix(ids), ds.y_vector(ids)))
    grid_raw = opt.get("grid", "10,25,50,100")
    if isinstance(grid_raw, str):
        grid = [int(s) for s in grid_raw.split(",") if s.strip()]
    else:
        grid = [int(s) for s in grid_raw]
    rows = estimator.compare_estimators(ds, theta, spec, grid, seed=int(opt.get("seed", 0)))
    _write_out(estimator.estimators_csv(rows), opt.get("out"))
    return 0


def cmd_serve(opt: _Options) -> int:
    import uvicorn

    from .service import build_app

    app = build_app(snapshot_dir=opt.get("snapshot_dir"))
    uvicorn.run(app, host=opt.get("host", "127.0.0.1"), port=int(opt.get("port", 8000)))
    return 0


def cmd_demo_simpson(opt: _Options) -> int:
    demo = harness.simpson_demo()
    ds = demo["dataset"]
    doc = {
        "clean_slope": demo["clean_slope"],
        "dirty_slope": demo["dirty_slope"],
        "mixed_slope": demo["mixed_slope"],
        "cleaned_ids": demo["cleaned_ids"],
        "records": [
            {"id": r.id, "x": r.x.tolist(), "y": r.y.tolist(),
             "clean_x": r.clean_x.tolist(), "clean_y": r.clean_y.tolist()}
            for r in ds.records
        ],
    }
    lines = [
        f"clean fit slope:  {demo['clean_slope']:+.4f}",
        f"dirty fit slope:  {demo['dirty_slope']:+.4f}",
        f"mixed fit slope:  {demo['mixed_slope']:+.4f}  (after cleaning records {demo['cleaned_ids']})",
        "cleaning only part of the data reversed the trend direction",
    ]
    out = opt.get("out")
    if out:
        Path(out).write_text(json.dumps(doc, indent=2) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


_COMMANDS = {
    "corrupt": cmd_corrupt,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "estimators": cmd_estimators,
    "serve": cmd_serve,
    "demo-simpson": cmd_demo_simpson,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        config = {}
        if getattr(args, "config", None):
            config = load_config(args.config)
            if not isinstance(config, dict):
                raise ValueError(f"config {args.config}: expected a table of keys")
        return _COMMANDS[args.command](_Options(args, config))
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (KeyboardInterrupt, BrokenPipeError):
        return 2
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
