"""Drive a cleaning session over the HTTP API.

The service hands out batches of suspect records and accepts repaired
values; every submission advances the model by one unbiased step. This
script plays both sides in-process for reproducibility. Against a real
deployment (`cleantrain serve`) the requests are identical, just sent to
http://127.0.0.1:8000 instead.
"""

import numpy as np
from fastapi.testclient import TestClient

from cleantrain.dataset import CorruptionSpec, corrupt, from_arrays, save_csv
from cleantrain.service import build_app
import tempfile, os

rng = np.random.default_rng(3)
n, d = 300, 3
X = rng.standard_normal((n, d))
Y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.standard_normal(n)
bad = corrupt(from_arrays(X, Y), CorruptionSpec(kind="random", rate=0.15, seed=4, outlier_scale=3.0))
path = os.path.join(tempfile.mkdtemp(), "dirty.csv")
save_csv(bad, path)

client = TestClient(build_app())

doc = client.post("/sessions", json={
    "dataset_path": path,
    "config": {"loss": "linear_regression", "strategy": "AC",
               "batch_size": 15, "budget": 60, "seed": 0},
}).json()
sid = doc["session_id"]
print(f"session {sid[:8]}…  {doc['n']} records, {doc['n_dirty']} flagged dirty")

while True:
    batch = client.get(f"/sessions/{sid}/batch")
    if batch.status_code == 410:
        break
    repairs = []
    for rec in batch.json()["records"]:
        true = bad.record(rec["id"])  # a human would edit these in the UI
        repairs.append({"id": rec["id"], "x": true.clean_x.tolist(),
                        "y": np.asarray(true.clean_y).item(),
                        "error_class": true.error_class})
    reply = client.post(f"/sessions/{sid}/clean", json={"repairs": repairs}).json()
    hp = reply["history_point"]
    print(f"  t={hp['t']:<2} cleaned {reply['records_cleaned']:>3} "
          f"training loss {hp['training_loss']:.4f}")

progress = client.get(f"/sessions/{sid}").json()
print(f"done: {progress['records_cleaned']} records cleaned, "
      f"{progress['budget_remaining']} budget left")
print(f"final model: {[f'{float(v):+.3f}' for v in progress['theta']]}")
