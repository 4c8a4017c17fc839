import numpy as np
import pytest

from blockgcn.data import Dataset, Split
from blockgcn.model import BlockGCN
from blockgcn.probes import (adjacency_stats, desk_dataset, forgetting_model_config, mean_frame_experiment,
                             mean_frames, pearson, probe_forgetting, random_frames, scaled_train_config,
                             single_frame_config)


def test_pearson(rng):
    a = rng.normal(size=(5, 5))
    assert pearson(a, a) == pytest.approx(1.0)
    assert pearson(a, -2 * a + 1) == pytest.approx(-1.0)
    assert pearson(a, np.ones((5, 5))) == 0.0


@pytest.fixture(scope="module")
def small():
    return desk_dataset(n_per_class=5, frames=4, num_classes=2)


@pytest.mark.parametrize("init", ["physical", "identity", "ones", "kaiming"])
def test_untrained_stats(small, init):
    model = BlockGCN(forgetting_model_config(small, init))
    initial = [blk.gc.params["A"].copy() for blk in model.blocks]
    stats = adjacency_stats(model, initial)
    assert stats["deviation"] == 0.0
    for layer in stats["layers"]:
        assert layer["init_corr"] == pytest.approx(1.0) or init == "ones"
        assert -1.0 <= layer["bone_corr"] <= 1.0
    if init == "physical":
        assert stats["bone_corr"] == pytest.approx(1.0)


def test_forgetting_report(small):
    rep = probe_forgetting(small, ("physical", "kaiming"), epochs=2)
    assert set(rep.accuracies) == {"physical", "kaiming"}
    assert 0.0 <= rep.max_gap <= 1.0
    for r in rep.results:
        assert r.deviation > 0 and -1 <= r.bone_corr_final <= 1
        assert len(r.layers) == 4
    assert rep.result("physical").bone_corr_init == pytest.approx(1.0)
    assert rep.table().splitlines()[0].startswith("init, val_acc")
    again = probe_forgetting(small, ("physical", "kaiming"), epochs=2)
    assert again.table() == rep.table()
    with pytest.raises(ValueError):
        probe_forgetting(small, ("physical",))


def test_frame_views(rng):
    ds = Dataset(rng.normal(size=(3, 5, 4, 3)), np.arange(3))
    np.testing.assert_allclose(mean_frames(ds).x[:, 0], ds.x.mean(axis=1))
    picked = random_frames(ds, np.random.default_rng(0)).x[:, 0]
    assert all(any(np.array_equal(picked[i], ds.x[i, t]) for t in range(5)) for i in range(3))


def test_mean_frame_report(small):
    rep = mean_frame_experiment(small, epochs=2)
    assert rep.chance == 0.5
    assert 0 <= rep.mean_frame_acc <= 1 and 0 <= rep.random_frame_acc <= 1
    assert single_frame_config(2).temporal is False


def test_mean_frame_warns_on_single_frame(small):
    one = Split(Dataset(small.train.x[:, :1], small.train.y), Dataset(small.val.x[:, :1], small.val.y), 2)
    with pytest.warns(RuntimeWarning):
        rep = mean_frame_experiment(one, epochs=1)
    assert rep.mean_frame_acc == rep.random_frame_acc


def test_scaled_schedule():
    cfg = scaled_train_config(30)
    assert cfg.decay_epochs == (20, 25) and cfg.warmup_epochs == 5
    assert scaled_train_config(15).decay_epochs == (10, 12)
    assert scaled_train_config(2).total_epochs == 2
