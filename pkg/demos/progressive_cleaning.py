"""Walk the core loop by hand: corrupt a dataset, then repair it in small
prioritized batches while the model keeps training on the mixed data.

The session alternates two moves. It proposes a batch drawn from the dirty
partition under an importance-sampling plan, and once the batch comes back
cleaned it takes one mixed-gradient step that stays unbiased no matter how
few records have been repaired so far.
"""

import numpy as np

from cleantrain import models, updater
from cleantrain.dataset import CorruptionSpec, corrupt, from_arrays
from cleantrain.detector import DetectorConfig
from cleantrain.models import ModelSpec
from cleantrain.updater import StepSchedule, UpdateConfig

rng = np.random.default_rng(0)
n, d = 400, 4
X = rng.standard_normal((n, d))
w = np.array([2.0, -1.0, 0.5, 0.0])
Y = X @ w + 0.1 * rng.standard_normal(n)

base = from_arrays(X, Y)
dirty = corrupt(base, CorruptionSpec(kind="random", rate=0.2, seed=1, outlier_scale=3.0))

spec = ModelSpec("linear_regression", d, l2_reg=1e-4)
theta_clean = models.train_full(spec, (X, Y))

cfg = UpdateConfig(batch_size=10, budget=100,
                   schedule=StepSchedule("inverse_scaling", 20.0), floor_epsilon=0.1)
session = updater.new_session(dirty, spec, cfg, seed=0, plan_kind="corrected",
                              detector_cfg=DetectorConfig("ground_truth"))

print(f"{len(dirty.dirty_ids)} of {n} records corrupted; "
      f"budget {cfg.budget}, batches of {cfg.batch_size}")
print(f"{'batch':>5} {'cleaned':>8} {'rel model error':>16}")


def rel(theta):
    return float(np.linalg.norm(theta - theta_clean) / np.linalg.norm(theta_clean))


print(f"{0:>5} {0:>8} {rel(session.theta):>16.4e}   (dirty fit)")
batch_no = 0
while session.status == "active":
    pending = updater.propose_batch(session)
    repairs = {}
    for rid in pending.distinct_ids:
        rec = dirty.record(rid)  # the cleaner would edit these by hand
        repairs[rid] = (rec.clean_x, rec.clean_y, rec.error_class)
    updater.apply_repairs(session, repairs)
    batch_no += 1
    print(f"{batch_no:>5} {session.records_cleaned:>8} {rel(session.theta):>16.4e}")

print(f"session status: {session.status}")
print(f"error vs training on fully clean data: {rel(session.theta):.2e}")
