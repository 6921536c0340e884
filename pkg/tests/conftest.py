import numpy as np
import pytest

from itele.pipeline import TCP, UDP, Direction, FlowKey, PacketRecord


def key(i=1, proto=TCP, sport=443):
    return FlowKey.make(f"203.0.113.{i}", "10.0.0.1", sport, 40000 + i, proto)


def pkt(t, k, nbytes=1500, **kw):
    return PacketRecord(float(t), k, nbytes, Direction.DOWNSTREAM, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_models():
    """Forests trained on a modest synthetic dataset; shared by slow-ish tests."""
    from itele import ml, traffgen
    from itele.broker import Machines
    ident, res = traffgen.generate_dataset(120, 120, rng_seed=99)
    return Machines(
        ml.train_forest(ident, n_trees=20, max_depth=9, attrs_per_split=1, rng_seed=1),
        ml.train_forest(res, n_trees=20, max_depth=5, attrs_per_split=3, rng_seed=2),
    )
