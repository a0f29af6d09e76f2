"""Train convex-loss models while the data is still being cleaned.

The update loop treats the relation as a shifting mixture of dirty and
cleaned records: each iteration samples a small batch from the dirty
partition, applies the repairs, and takes one gradient step whose
expectation matches a step on the fully cleaned data. Detection narrows
the dirty partition, and Taylor-corrected importance sampling focuses the
cleaning effort on the records that matter most for the model.

Main entry points:

* :mod:`cleantrain.models` loss/gradient kernels and full-data training
* :mod:`cleantrain.dataset` records, ground truth, corruption, CSV I/O
* :mod:`cleantrain.updater` the progressive cleaning session loop
* :mod:`cleantrain.harness` synthetic benchmarks and strategy comparison
* :mod:`cleantrain.service` HTTP API for interactive cleaning sessions
* :mod:`cleantrain.cli` command-line frontend (``cleantrain --help``)
"""

from .baselines import SESSION_STRATEGIES, SessionPreset, StrategyId, robust_logreg, session_preset
from .dataset import (CorruptionSpec, DatasetView, OracleCleaner, Record, ValueRule,
                      corrupt, from_arrays, load_csv, save_csv, set_of_records_clean)
from .detector import (CLEAN_VERDICT, AdaptiveClassifier, DetectorConfig, DetectorOutput,
                       Rule, RuleSet, adaptive_train, detect, partition)
from .estimator import (CleanedExample, DeltaStats, compare_estimators, corrected_weight,
                        delta_vector, update_deltas)
from .harness import (BenchmarkInstance, ExperimentConfig, make_instance, relative_model_error,
                      report_csv, run_experiment, run_strategy, simpson_demo, synthetic_benchmark)
from .models import (GradientEstimate, ModelSpec, evaluate, gradient, loss, mean_gradient,
                     mean_loss, taylor_matrices, train_full)
from .sampler import (SamplingPlan, dirty_gradient_plan, draw_with_replacement,
                      estimator_variance, oracle_plan, uncertainty_plan, uniform_plan,
                      weighted_plan)
from .updater import (HistoryPoint, SessionState, StepSchedule, UpdateConfig, apply_repairs,
                      combine_and_step, compute_gc, estimate_gs, new_session, propose_batch,
                      run_iteration, run_to_completion)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
