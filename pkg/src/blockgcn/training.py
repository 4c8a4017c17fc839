"""SGD with Nesterov momentum, warmup + step schedule, training loop and score fusion."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .data import Dataset, SkeletonSequence, Split, random_rotation
from .errors import ConfigError, DimensionError
from .model import BlockGCN
from .tensor import cross_entropy_batch, make_rng, softmax

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    base_lr: float = 0.1
    momentum: float = 0.9
    nesterov: bool = True
    weight_decay: float = 4e-4
    warmup_epochs: int = 5
    decay_epochs: tuple = (20, 25)
    decay_factor: float = 0.1
    batch_size: int = 32
    total_epochs: int = 30
    seed: int = 0
    random_rotation: bool = False
    max_angle: float = 0.3
    decay_encodings: bool = True
    grad_clip: float = 1.0      # global L2 norm; 0 disables
    fit_input_norm: bool = True

    def __post_init__(self):
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        self.validate()

    def validate(self):
        d = self.decay_epochs
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ConfigError("decay epochs must be strictly increasing")
        if d and d[-1] >= self.total_epochs:
            raise ConfigError("decay epochs must precede total_epochs")
        if self.grad_clip < 0:
            raise ConfigError("grad_clip must be non-negative")
        if self.batch_size < 1 or self.total_epochs < 1 or self.warmup_epochs < 0:
            raise ConfigError("batch_size and total_epochs must be positive")

    def to_dict(self):
        d = asdict(self)
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        if set(d) - known:
            raise ConfigError(f"unknown train config keys {sorted(set(d) - known)}")
        return cls(**d)


def paper_train_config(**kw) -> TrainConfig:
    base = dict(total_epochs=140, decay_epochs=(110, 120), batch_size=64)
    base.update(kw)
    return TrainConfig(**base)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Linear warmup over ``warmup_epochs``, then step decay at each ``decay_epochs`` entry."""
    if not 0 <= epoch < config.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.total_epochs})")
    if epoch < config.warmup_epochs:
        return config.base_lr * (epoch + 1) / config.warmup_epochs
    passed = sum(1 for e in config.decay_epochs if epoch >= e)
    return config.base_lr * config.decay_factor ** passed


def sgd_step(params: dict, grads: dict, velocity: dict, config: TrainConfig, epoch: int,
             lr: float | None = None, no_decay: frozenset = frozenset()) -> None:
    """In-place update: ``g += wd*p; v = mu*v + g; p -= lr*(g + mu*v)`` (plain momentum without Nesterov)."""
    lr = lr_at(config, epoch) if lr is None else lr
    mu, wd = config.momentum, config.weight_decay
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        if wd and name not in no_decay:
            g = g + wd * p
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(p)
        v *= mu
        v += g
        p -= lr * (g + mu * v) if config.nesterov else lr * v


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``; returns the norm before."""
    total = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        for g in grads.values():
            g *= max_norm / total
    return total


def encoding_parameter_names(model: BlockGCN) -> frozenset:
    return frozenset(n for n in model.named_parameters() if ".topo." in n or ".stat." in n)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_acc: float


@dataclass
class History:
    records: list
    initial_loss: float
    best_val_acc: float
    best_epoch: int

    def table(self) -> str:
        lines = ["epoch, lr, train_loss, train_acc, val_acc"]
        for r in self.records:
            lines.append(f"{r.epoch}, {r.lr:.6g}, {r.train_loss:.6f}, {r.train_acc:.4f}, {r.val_acc:.4f}")
        return "\n".join(lines)

    def column(self, name):
        return [getattr(r, name) for r in self.records]


def evaluate(model: BlockGCN, data: Dataset, batch_size: int = 64):
    """Return ``(mean loss, accuracy, probabilities)`` over ``data``."""
    if len(data) == 0:
        return float("nan"), float("nan"), np.zeros((0, model.config.num_classes))
    probs, loss_sum = [], 0.0
    for s in range(0, len(data), batch_size):
        logits = model.forward(data.x[s:s + batch_size])
        loss, _ = cross_entropy_batch(logits, data.y[s:s + batch_size])
        loss_sum += loss * len(logits)
        probs.append(softmax(logits))
    probs = np.concatenate(probs)
    acc = float(np.mean(probs.argmax(axis=1) == data.y))
    return loss_sum / len(data), acc, probs


def _augment(x, rng, config):
    if not config.random_rotation:
        return x
    return np.stack([random_rotation(SkeletonSequence(s), rng, config.max_angle).coords for s in x])


def train(model: BlockGCN, split: Split, config: TrainConfig,
          checkpoint_path: str | Path | None = None) -> History:
    """Minibatch SGD over ``split.train``; validates on ``split.val`` after every epoch.

    Fits the model's input statistics on ``split.train`` first when
    ``config.fit_input_norm`` is set. Deterministic given ``config.seed`` and
    the model's initial parameters.
    """
    if len(split.train) == 0:
        raise ValueError("training set is empty")
    rng = make_rng(config.seed)
    if config.fit_input_norm:
        model.fit_input_normalization(split.train.x)
    params = model.named_parameters()
    velocity: dict = {}
    no_decay = frozenset() if config.decay_encodings else encoding_parameter_names(model)
    initial_loss = evaluate(model, split.train, config.batch_size)[0]
    records, best_acc, best_epoch = [], -1.0, -1
    n = len(split.train)
    for epoch in range(config.total_epochs):
        lr = lr_at(config, epoch)
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for s in range(0, n, config.batch_size):
            idx = order[s:s + config.batch_size]
            x = _augment(split.train.x[idx], rng, config)
            y = split.train.y[idx]
            model.zero_grad()
            logits = model.forward(x)
            loss, g = cross_entropy_batch(logits, y)
            model.backward(g)
            grads = model.named_grads()
            if config.grad_clip:
                clip_grad_norm(grads, config.grad_clip)
            sgd_step(params, grads, velocity, config, epoch, lr, no_decay)
            loss_sum += loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == y))
        val_acc = evaluate(model, split.val, config.batch_size)[1] if len(split.val) else float("nan")
        rec = EpochRecord(epoch, lr, loss_sum / n, correct / n, val_acc)
        records.append(rec)
        log.info("epoch %d lr %.4g loss %.4f train %.3f val %.3f", epoch, lr, rec.train_loss, rec.train_acc, val_acc)
        score = val_acc if len(split.val) else rec.train_acc
        if score > best_acc:
            best_acc, best_epoch = score, epoch
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path)
    return History(records, initial_loss, best_acc, best_epoch)


def ensemble(scores: list, mode: str = "prob"):
    """Fuse per-stream scores by an unweighted mean; returns ``(class, fused)``.

    ``mode="prob"`` averages probability vectors (each must sum to 1);
    ``mode="logit"`` averages logits and returns the softmax of the mean.
    """
    if not scores:
        raise ValueError("no streams to fuse")
    arrs = [np.asarray(s, dtype=np.float64) for s in scores]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise DimensionError("all streams must have the same shape")
    stacked = np.stack(arrs)
    # mean taken relative to the first stream, so identical streams fuse to themselves exactly
    mean = stacked[0] + (stacked - stacked[0]).mean(axis=0)
    if mode == "prob":
        if not np.allclose(stacked.sum(axis=-1), 1.0, atol=1e-9):
            raise ValueError("probability streams must sum to 1")
        fused = mean
    elif mode == "logit":
        fused = softmax(mean)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    return np.argmax(fused, axis=-1), fused
