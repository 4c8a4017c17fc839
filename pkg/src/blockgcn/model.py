"""The BlockGCN network: stem, residual BlockGC/MS-TC blocks, mean pooling, classifier.

One block computes::

    x = GC(h) + res1(h)
    y = TC(x) + res2(h)
    h' = relu(y)

where ``res1``/``res2`` are the identity unless the channel count or the
temporal stride changes, in which case they are learned 1x1 projections.
With ``temporal=False`` the block is ``relu(GC(h) + res1(h))``.

Coordinates are standardized per (joint, axis) with fixed statistics before
the stem. The statistics are buffers, not parameters: they are fitted once
from training data and travel with checkpoints. The statistical encoding
always sees raw coordinates.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .blockgc import ADJ_INITS, BlockGC, init_adjacency, projection_params
from .encodings import FEATURE_WISE, SHARED, StatEncoding, TopoEncoding, temporal_mean_relative
from .errors import ConfigError, DimensionError, MissingStateError
from .graph import graph_distances, resolve_skeleton
from .mstc import DEFAULT_BRANCHES, MSTC, Branch, split_channels
from .tensor import cross_entropy_batch, make_rng, relu, softmax


def branch_to_str(b: Branch) -> str:
    return "none" if b.kind == "none" else f"{b.kind}:{b.kernel}:{b.dilation}"


def branch_from_str(text: str) -> Branch:
    parts = text.strip().split(":")
    if parts[0] == "none":
        return Branch("none")
    kernel = int(parts[1]) if len(parts) > 1 else 3
    dilation = int(parts[2]) if len(parts) > 2 else 1
    return Branch(parts[0], kernel, dilation)


@dataclass
class ModelConfig:
    num_classes: int = 4
    skeleton: str = "ntu25"
    frames: int = 16
    in_channels: int = 3
    channels: tuple = (16, 16, 32, 32)
    strides: tuple = (1, 1, 2, 1)
    groups: int = 4
    variant: str = "block"
    adj_init: str = "physical"
    use_topo: bool = True
    topo_mode: str = SHARED
    distance: str = "shortest_path"
    l2_normalize: bool = True
    use_stat: bool = True
    stat_mode: str = FEATURE_WISE
    stat_hidden: int = 64
    temporal: bool = True
    branches: tuple = DEFAULT_BRANCHES
    seed: int = 0

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        self.branches = tuple(branch_from_str(b) if isinstance(b, str) else b for b in self.branches)
        self.validate()

    @property
    def num_layers(self) -> int:
        return len(self.channels)

    def validate(self) -> None:
        if len(self.strides) != len(self.channels):
            raise ConfigError("one stride per layer required")
        k = 1 if self.variant == "vanilla" else self.groups
        if self.variant == "vanilla" and self.groups != 1:
            raise ConfigError("vanilla variant requires groups=1")
        for c in self.channels:
            if c % k:
                raise ConfigError(f"channels {c} not divisible by K={k}")
        total_stride = int(np.prod(self.strides))
        if self.frames % total_stride:
            raise ConfigError(f"stride product {total_stride} does not divide T={self.frames}")
        if not self.temporal and total_stride != 1:
            raise ConfigError("strides require the temporal module")
        if self.adj_init not in ADJ_INITS:
            raise ConfigError(f"adj_init must be one of {ADJ_INITS}")
        if self.temporal:
            for c in self.channels:
                split_channels(c, len(self.branches))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["strides"] = list(self.strides)
        d["branches"] = [branch_to_str(b) for b in self.branches]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)


def tiny_config(**kw) -> ModelConfig:
    base = dict(num_classes=3, skeleton="tiny5", frames=8, channels=(8, 8), strides=(1, 1),
                groups=2, stat_hidden=6, branches=(Branch("conv", 3, 1), Branch("conv", 3, 2), Branch("none")))
    base.update(kw)
    return ModelConfig(**base)


def desk_config(**kw) -> ModelConfig:
    return ModelConfig(**kw)


def paper_config(**kw) -> ModelConfig:
    base = dict(num_classes=120, skeleton="ntu25", frames=64,
                channels=(64,) * 4 + (128,) * 3 + (256,) * 3,
                strides=(1, 1, 1, 1, 2, 1, 1, 2, 1, 1), groups=4)
    base.update(kw)
    return ModelConfig(**base)


class Affine:
    """Per-position linear map on the last axis."""

    def __init__(self, d_in, d_out, rng=None, zero=False):
        if zero:
            w, b = np.zeros((d_in, d_out)), np.zeros(d_out)
        else:
            bound = 1.0 / np.sqrt(d_in)
            w, b = rng.uniform(-bound, bound, (d_in, d_out)), rng.uniform(-bound, bound, d_out)
        self.params = {"w": w, "b": b}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, g):
        if self._x is None:
            raise MissingStateError("Affine.backward before forward")
        d_in = self._x.shape[-1]
        self.grads["w"] += self._x.reshape(-1, d_in).T @ g.reshape(-1, g.shape[-1])
        self.grads["b"] += g.reshape(-1, g.shape[-1]).sum(axis=0)
        return g @ self.params["w"].T


class Block:
    def __init__(self, cfg: ModelConfig, d_in: int, d_out: int, stride: int, dist, skeleton, rng):
        k = cfg.groups
        self.stride = stride
        adjacency = init_adjacency(cfg.adj_init, skeleton, k, rng)
        self.gc = BlockGC(d_in, d_out, skeleton.num_joints, k, cfg.variant, adjacency, rng)
        self.topo = TopoEncoding(dist, d_in, cfg.topo_mode, cfg.l2_normalize) if cfg.use_topo else None
        self.stat = StatEncoding(d_in, cfg.stat_hidden, cfg.stat_mode, rng) if cfg.use_stat else None
        self.res1 = Affine(d_in, d_out, rng) if d_in != d_out else None
        self.tc = MSTC(d_out, d_out, stride, cfg.branches, rng) if cfg.temporal else None
        needs_res2 = cfg.temporal and (d_in != d_out or stride != 1)
        self.res2 = Affine(d_in, d_out, rng) if needs_res2 else None
        self._saved = None

    def parts(self):
        for name in ("gc", "topo", "stat", "res1", "tc", "res2"):
            part = getattr(self, name)
            if part is not None:
                yield name, part

    def forward(self, h, rbar):
        b = self.topo.forward() if self.topo else None
        c = self.stat.forward(rbar) if self.stat else None
        x = self.gc.forward(h, b, c)
        x = x + (self.res1.forward(h) if self.res1 else h)
        if self.tc is None:
            y = x
        else:
            y = self.tc.forward(x)
            y = y + (self.res2.forward(h[:, :, ::self.stride, :]) if self.res2 else h)
        self._saved = (h.shape, y > 0)
        return relu(y)

    def backward(self, grad):
        if self._saved is None:
            raise MissingStateError("Block.backward before forward")
        h_shape, active = self._saved
        gy = grad * active
        if self.tc is None:
            gx, gh = gy, np.zeros(h_shape)
        else:
            gx = self.tc.backward(gy)
            gh = np.zeros(h_shape)
            if self.res2:
                gh[:, :, ::self.stride, :] += self.res2.backward(gy)
            else:
                gh += gy
        gh += self.res1.backward(gx) if self.res1 else gx
        g_gc, g_b, g_c = self.gc.backward(gx)
        gh += g_gc
        if self.topo:
            self.topo.backward(g_b)
        if self.stat:
            self.stat.backward(g_c)
        return gh


class BlockGCN:
    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None):
        config.validate()
        self.config = config
        rng = rng if rng is not None else make_rng(config.seed)
        self.skeleton = resolve_skeleton(config.skeleton)
        self.dist = graph_distances(self.skeleton, config.distance)
        c = config.channels
        self.stem = Affine(config.in_channels, c[0], rng)
        self.blocks = []
        d_in = c[0]
        for d_out, stride in zip(c, config.strides):
            self.blocks.append(Block(config, d_in, d_out, stride, self.dist, self.skeleton, rng))
            d_in = d_out
        self.head = Affine(c[-1], config.num_classes, zero=True)
        v = self.skeleton.num_joints
        self.buffers = {"input.mean": np.zeros((v, config.in_channels)),
                        "input.scale": np.ones((v, config.in_channels))}
        self._saved = None

    def fit_input_normalization(self, x: np.ndarray, min_scale: float = 1e-3) -> None:
        """Set the input statistics from a batch (N, T, V, C); near-constant axes keep scale ``min_scale``."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        self.buffers["input.mean"][...] = x.mean(axis=(0, 1))
        self.buffers["input.scale"][...] = np.maximum(x.std(axis=(0, 1)), min_scale)

    # -- parameters ------------------------------------------------------

    def modules(self):
        yield "stem", self.stem
        for i, blk in enumerate(self.blocks):
            for name, part in blk.parts():
                yield f"blocks.{i}.{name}", part
        yield "head", self.head

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": v for prefix, mod in self.modules() for k, v in mod.params.items()}

    def named_grads(self) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": v for prefix, mod in self.modules() for k, v in mod.grads.items()}

    def zero_grad(self) -> None:
        for _, mod in self.modules():
            for g in mod.grads.values():
                g[...] = 0.0

    def load_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = set(params) - set(values)
        extra = set(values) - set(params)
        if missing or extra:
            raise DimensionError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, p in params.items():
            v = np.asarray(values[name])
            if v.shape != p.shape:
                raise DimensionError(f"{name}: expected {p.shape}, got {v.shape}")
            p[...] = v

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    # -- forward / backward ----------------------------------------------

    def _check_input(self, x):
        cfg = self.config
        if x.ndim != 4 or x.shape[2] != self.skeleton.num_joints or x.shape[3] != cfg.in_channels:
            raise DimensionError(f"expected (N, T, {self.skeleton.num_joints}, {cfg.in_channels}), got {x.shape}")
        if cfg.temporal and x.shape[1] != cfg.frames:
            raise DimensionError(f"expected T={cfg.frames}, got {x.shape[1]}")

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a batch (N, T, V, 3) or a single sequence (T, V, 3)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 3
        if single:
            x = x[None]
        self._check_input(x)
        rbar = temporal_mean_relative(x) if self.config.use_stat else None
        z = (x - self.buffers["input.mean"]) / self.buffers["input.scale"]
        h = self.stem.forward(np.ascontiguousarray(z.transpose(0, 2, 1, 3)))
        for blk in self.blocks:
            h = blk.forward(h, rbar)
        self._saved = h.shape
        logits = self.head.forward(h.mean(axis=(1, 2)))
        return logits[0] if single else logits

    def backward(self, grad_logits: np.ndarray) -> None:
        if self._saved is None:
            raise MissingStateError("BlockGCN.backward before forward")
        n, v, t, d = self._saved
        g_pool = self.head.backward(grad_logits)
        gh = np.broadcast_to(g_pool[:, None, None, :] / (v * t), self._saved).copy()
        for blk in reversed(self.blocks):
            gh = blk.backward(gh)
        self.stem.backward(gh)

    def loss_and_grads(self, x: np.ndarray, labels) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy over the batch and gradients for every parameter."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[0] == 0:
            raise DimensionError("non-empty batch (N, T, V, 3) required")
        self.zero_grad()
        logits = self.forward(x)
        loss, g = cross_entropy_batch(logits, labels)
        self.backward(g)
        return loss, self.named_grads()

    def predict(self, x: np.ndarray):
        """``(class, probabilities)`` for one sequence, or arrays of both for a batch."""
        logits = self.forward(x)
        probs = softmax(logits)
        return np.argmax(probs, axis=-1), probs


def loss_and_grads(model: BlockGCN, batch, labels):
    return model.loss_and_grads(batch, labels)


def predict(model: BlockGCN, seq):
    return model.predict(seq)


def expected_param_count(cfg: ModelConfig) -> int:
    """Closed-form parameter count of :class:`BlockGCN` for ``cfg``."""
    skel = resolve_skeleton(cfg.skeleton)
    v = skel.num_joints
    table_len = graph_distances(skel, cfg.distance).max + 1
    k, h = cfg.groups, cfg.stat_hidden
    c = cfg.channels
    total = cfg.in_channels * c[0] + c[0]
    d_in = c[0]
    for d_out, stride in zip(c, cfg.strides):
        total += k * v * v + projection_params(d_in, d_out, k, cfg.variant) + d_out
        if cfg.use_topo:
            total += table_len * (1 if cfg.topo_mode == SHARED else d_in)
        if cfg.use_stat:
            width = d_in if cfg.stat_mode == FEATURE_WISE else 1
            total += 3 * h + h + h * width + width
        if d_in != d_out:
            total += d_in * d_out + d_out
        if cfg.temporal:
            for br, cb in zip(cfg.branches, split_channels(d_out, len(cfg.branches))):
                total += d_out * cb + cb
                if br.kind == "conv":
                    total += cb * cb * br.kernel + cb
            if d_in != d_out or stride != 1:
                total += d_in * d_out + d_out
        d_in = d_out
    total += c[-1] * cfg.num_classes + cfg.num_classes
    return total
