"""Diagnostics: full-model gradcheck, parameter audit, and two training probes.

The probes (adjacency forgetting across inits, mean frame vs random frame)
train small models on synthetic data and return reports whose ``table()``
is a numeric text table.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blockgc import ADJ_INITS
from .data import Dataset, Split, generate_synthetic, make_synth_spec
from .graph import bone_adjacency, preset
from .model import BlockGCN, ModelConfig, desk_config, expected_param_count
from .tensor import GradcheckReport, gradcheck, make_rng
from .training import TrainConfig, train

log = logging.getLogger(__name__)


def model_gradcheck(config: ModelConfig, seed: int = 0, batch: int = 3, scale: float = 0.5,
                    eps: float = 1e-5, tol: float = 1e-4) -> GradcheckReport:
    """Central-difference check of every parameter of a model built from ``config``.

    Parameters are redrawn uniformly in ``[-scale, scale]`` so that the
    zero-initialized head and encodings do not hide errors upstream.
    """
    rng = make_rng(seed)
    model = BlockGCN(config)
    for p in model.named_parameters().values():
        p[...] = rng.uniform(-scale, scale, p.shape)
    x = rng.normal(size=(batch, config.frames, model.skeleton.num_joints, config.in_channels))
    y = rng.integers(config.num_classes, size=batch)
    _, grads = model.loss_and_grads(x, y)
    grads = {k: g.copy() for k, g in grads.items()}
    return gradcheck(lambda _: model.loss_and_grads(x, y)[0], model.named_parameters(), grads, eps, tol)


def param_breakdown(config: ModelConfig) -> dict:
    """Parameter counts by kind, plus the closed-form total for comparison."""
    model = BlockGCN(config)
    out = {"projection": 0, "adjacency": 0}
    for blk in model.blocks:
        pc = blk.gc.param_count()
        out["projection"] += pc["projection"]
        out["adjacency"] += pc["adjacency"]
    out["total"] = model.num_parameters()
    out["formula"] = expected_param_count(config)
    return out


def scaled_train_config(epochs: int, **kw) -> TrainConfig:
    """Desk schedule for ``epochs``: warmup and both decays keep their 30-epoch proportions."""
    base = dict(total_epochs=epochs, warmup_epochs=min(5, epochs // 6),
                decay_epochs=tuple(sorted({max(1, round(epochs * 2 / 3)), max(2, round(epochs * 5 / 6))})))
    base["decay_epochs"] = tuple(e for e in base["decay_epochs"] if e < epochs)
    base.update(kw)
    return TrainConfig(**base)


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Correlation of two flattened arrays; 0 when either is constant."""
    a = np.ravel(a) - np.mean(a)
    b = np.ravel(b) - np.mean(b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    if den == 0:
        return 0.0
    return float(np.clip(a @ b / den, -1.0, 1.0))


def adjacency_stats(model: BlockGCN, initial: list | None = None) -> dict:
    """Per-layer statistics of the learned ``A`` (averaged over groups)."""
    bone = bone_adjacency(model.skeleton, normalize=True)
    layers = []
    for i, blk in enumerate(model.blocks):
        a = blk.gc.params["A"]
        a0 = initial[i] if initial is not None else a
        layers.append({
            "layer": i,
            "mean": float(a.mean()),
            "std": float(a.std()),
            "deviation": float(np.linalg.norm(a - a0)),
            "bone_corr": float(np.mean([pearson(ak, bone) for ak in a])),
            "init_corr": float(np.mean([pearson(ak, a0k) for ak, a0k in zip(a, a0)])),
        })
    return {"layers": layers,
            "deviation": float(np.mean([l["deviation"] for l in layers])),
            "bone_corr": float(np.mean([l["bone_corr"] for l in layers]))}


@dataclass
class InitResult:
    init: str
    val_acc: float
    train_acc: float
    bone_corr_init: float
    bone_corr_final: float
    deviation: float
    layers: list


@dataclass
class ProbeReport:
    results: list
    config: dict = field(default_factory=dict)

    @property
    def accuracies(self) -> dict:
        return {r.init: r.val_acc for r in self.results}

    @property
    def max_gap(self) -> float:
        acc = list(self.accuracies.values())
        return max(acc) - min(acc)

    def result(self, init: str) -> InitResult:
        for r in self.results:
            if r.init == init:
                return r
        raise KeyError(init)

    def table(self) -> str:
        lines = ["init, val_acc, train_acc, bone_corr_init, bone_corr_final, deviation"]
        for r in self.results:
            lines.append(f"{r.init}, {r.val_acc:.4f}, {r.train_acc:.4f}, {r.bone_corr_init:.6f}, "
                         f"{r.bone_corr_final:.6f}, {r.deviation:.6f}")
        lines += ["", "init, layer, A_mean, A_std, deviation, bone_corr"]
        for r in self.results:
            for l in r.layers:
                lines.append(f"{r.init}, {l['layer']}, {l['mean']:.6f}, {l['std']:.6f}, "
                             f"{l['deviation']:.6f}, {l['bone_corr']:.6f}")
        lines += ["", f"max_gap, {self.max_gap:.4f}"]
        return "\n".join(lines)


def desk_dataset(mean_separable: bool = True, n_per_class: int = 100, frames: int = 16,
                 num_classes: int = 4, skeleton: str = "ntu25", seed: int = 0, **spec_kw) -> Split:
    rng = make_rng(seed)
    spec = make_synth_spec(preset(skeleton), num_classes, rng, mean_separable=mean_separable, **spec_kw)
    return generate_synthetic(spec, n_per_class, frames, rng)


def mean_frame_dataset(mean_separable: bool = True, n_per_class: int = 100, seed: int = 0, **kw) -> Split:
    """Desk data with per-frame noise large enough that one frame is a weak cue but the mean is not."""
    kw = dict(dict(separation=0.05, noise_sigma=0.15), **kw)
    return desk_dataset(mean_separable, n_per_class, seed=seed, **kw)


def forgetting_model_config(split: Split, init: str, **kw) -> ModelConfig:
    """Vanilla GC blocks without encodings: the setting where topology can be forgotten."""
    base = dict(num_classes=split.num_classes, frames=split.train.x.shape[1], groups=1, variant="vanilla",
                adj_init=init, use_topo=False, use_stat=False)
    base.update(kw)
    return desk_config(**base)


def probe_forgetting(split: Split, inits=ADJ_INITS, epochs: int = 15, seed: int = 0,
                     train_config: TrainConfig | None = None, **model_kw) -> ProbeReport:
    inits = tuple(inits)
    if len(inits) < 2:
        raise ValueError("the forgetting probe compares at least two init modes")
    tc = train_config or scaled_train_config(epochs, seed=seed)
    results = []
    for init in inits:
        cfg = forgetting_model_config(split, init, seed=seed, **model_kw)
        model = BlockGCN(cfg)
        initial = [blk.gc.params["A"].copy() for blk in model.blocks]
        before = adjacency_stats(model, initial)
        hist = train(model, split, tc)
        after = adjacency_stats(model, initial)
        last = hist.records[-1]
        results.append(InitResult(init, last.val_acc, last.train_acc, before["bone_corr"],
                                  after["bone_corr"], after["deviation"], after["layers"]))
        log.info("forgetting probe %s: val %.3f corr %.3f -> %.3f", init, last.val_acc,
                 before["bone_corr"], after["bone_corr"])
    return ProbeReport(results, {"epochs": tc.total_epochs, "seed": seed, "inits": list(inits)})


# -- mean frame --------------------------------------------------------------

@dataclass
class MeanFrameReport:
    mean_frame_acc: float
    random_frame_acc: float
    chance: float
    config: dict = field(default_factory=dict)

    def table(self) -> str:
        return "\n".join(["statistic, value",
                          f"mean_frame_acc, {self.mean_frame_acc:.4f}",
                          f"random_frame_acc, {self.random_frame_acc:.4f}",
                          f"chance, {self.chance:.4f}"])


def single_frame_config(num_classes: int, **kw) -> ModelConfig:
    """The spatial stack alone: every temporal module replaced by the identity, one input frame."""
    base = dict(num_classes=num_classes, frames=1, temporal=False, strides=(1, 1, 1, 1))
    base.update(kw)
    return desk_config(**base)


def mean_frames(ds: Dataset) -> Dataset:
    return Dataset(ds.x.mean(axis=1, keepdims=True), ds.y)


def random_frames(ds: Dataset, rng: np.random.Generator) -> Dataset:
    t = rng.integers(ds.x.shape[1], size=len(ds))
    return Dataset(ds.x[np.arange(len(ds)), t][:, None], ds.y)


def mean_frame_experiment(split: Split, epochs: int = 15, seed: int = 0,
                          train_config: TrainConfig | None = None, **model_kw) -> MeanFrameReport:
    """Train one single-frame classifier on temporal means and one on a random frame per sample."""
    frames = split.train.x.shape[1]
    if frames == 1:
        warnings.warn("T=1: mean frame and random frame coincide", RuntimeWarning, stacklevel=2)
    tc = train_config or scaled_train_config(epochs, seed=seed)
    rng = make_rng(seed)
    views = {
        "mean": Split(mean_frames(split.train), mean_frames(split.val), split.num_classes),
        "random": Split(random_frames(split.train, rng), random_frames(split.val, rng), split.num_classes),
    }
    acc = {}
    for name, view in views.items():
        model = BlockGCN(single_frame_config(split.num_classes, seed=seed, **model_kw))
        acc[name] = train(model, view, tc).records[-1].val_acc
    return MeanFrameReport(acc["mean"], acc["random"], 1.0 / split.num_classes,
                           {"epochs": tc.total_epochs, "seed": seed, "frames": frames})
