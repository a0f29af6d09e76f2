import numpy as np
import pytest

from cleantrain.dataset import CorruptionSpec, corrupt, from_arrays


def regression_arrays(n, d, seed, noise=0.1):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    Y = (X @ w + noise * rng.standard_normal(n)).reshape(-1, 1)
    return X, Y, w


def corrupted_regression(n=40, d=3, seed=5, rate=0.25, kind="random", cspec_seed=9):
    """Small ground-truth-carrying dataset with its partition set to the
    truly corrupted records."""
    X, Y, _ = regression_arrays(n, d, seed)
    ds = from_arrays(X, Y)
    ds = corrupt(ds, CorruptionSpec(kind, rate=rate, seed=cspec_seed))
    dirty = sorted(r.id for r in ds.records if r.is_corrupted())
    clean = sorted(set(ds.ids()) - set(dirty))
    ds.set_partition(dirty, clean)
    return ds


@pytest.fixture
def tmp_csv(tmp_path):
    def write(name, text):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write
