"""Compare cleaning strategies on one synthetic benchmark.

Runs the progressive cleaner (AC), active learning (AL), and retrain-on-a-
clean-subset (SC) on the same corrupted instances and prints the median
relative model error at each cleaning checkpoint. Smaller is better; the
budget is 200 records cleaned out of 2000.
"""

from cleantrain.baselines import StrategyId
from cleantrain.harness import ExperimentConfig, run_experiment

cfg = ExperimentConfig(
    n=2000, d=6, rate=0.1, batch_size=25, budget=200,
    strategies=(StrategyId.AC, StrategyId.AL, StrategyId.SC),
    seeds=(0, 1, 2), checkpoints=tuple(range(0, 201, 50)),
)
rows = run_experiment(cfg)

meds = [r for r in rows if r["seed"] == "median"]
strategies = [s.value for s in cfg.strategies]
print(f"median relative model error, {len(cfg.seeds)} seeds")
print(f"{'cleaned':>8} " + " ".join(f"{s:>12}" for s in strategies))
for c in cfg.checkpoints:
    cells = []
    for s in strategies:
        m = [r for r in meds if r["strategy"] == s and r["checkpoint"] == c]
        cells.append(f"{m[0]['rel_model_error']:>12.4f}" if m else f"{'-':>12}")
    print(f"{c:>8} " + " ".join(cells))

final = {s: [r for r in meds if r["strategy"] == s and r["checkpoint"] == cfg.budget][0]
         for s in strategies}
best = min(final, key=lambda s: final[s]["rel_model_error"])
print(f"\nbest at the budget: {best} "
      f"(rel error {final[best]['rel_model_error']:.4f})")
