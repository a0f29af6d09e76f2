"""How well can the sampler guess a record's clean gradient before cleaning?

On a label-offset benchmark (a unit-conversion style error), four estimators
predict each dirty record's clean gradient from the records cleaned so far.
The first-order correction uses the learned average change per feature and
label; the naive alternatives reuse an average gradient or average feature
vector. The table shows the error of each estimate of the mean clean
gradient as more records are cleaned.
"""

from cleantrain.estimator import compare_estimators
from cleantrain.harness import label_offset_benchmark
from cleantrain.models import ModelSpec, train_full

n, d = 2000, 6
ds = label_offset_benchmark(n, d, seed=0, rate=0.2, offset=5.0)
spec = ModelSpec("linear_regression", d, l2_reg=1e-4)
ids = ds.ids()
theta_dirty = train_full(spec, (ds.x_matrix(ids), ds.y_vector(ids)))

rows = compare_estimators(ds, theta_dirty, spec, grid=(0, 25, 50, 100, 200), seed=0)

print(f"{n} records, {len(ds.dirty_ids)} with a +5.0 label offset")
print(f"{'cleaned':>8} {'corrected':>12} {'avg gradient':>13} {'avg feature':>12} {'regression':>12}")
for r in rows:
    print(f"{r['cleaned_count']:>8} {r['taylor']:>12.4g} {r['avg_gradient']:>13.4g} "
          f"{r['avg_feature']:>12.4g} {r['regression']:>12.4g}")

print("\nthe corrected estimate nails a constant label shift after a handful")
print("of cleaned records; averaging gradients never does")
