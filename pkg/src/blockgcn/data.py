"""Skeleton sequences: file I/O, preprocessing, modalities and synthetic data.

File format (one record)::

    SKEL1 <T> <V> <label>\\n
    <T*V*3 little-endian float64 values, frame-major>

A dataset file is a concatenation of records.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

from .errors import MalformedHeaderError, ShapeError, TruncatedFileError, ValidationError
from .graph import Skeleton

MAGIC = b"SKEL1"
MODALITIES = ("joint", "bone", "joint_motion", "bone_motion")


@dataclass
class SkeletonSequence:
    coords: np.ndarray
    label: int = 0

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 3 or self.coords.shape[2] != 3:
            raise ShapeError(f"coords must be (T, V, 3), got {self.coords.shape}")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def joints(self) -> int:
        return self.coords.shape[1]


# -- file I/O ---------------------------------------------------------------

def write_record(stream: BinaryIO, seq: SkeletonSequence) -> None:
    t, v, _ = seq.coords.shape
    stream.write(b"%s %d %d %d\n" % (MAGIC, t, v, int(seq.label)))
    stream.write(np.ascontiguousarray(seq.coords, dtype="<f8").tobytes())


def read_record(stream: BinaryIO) -> SkeletonSequence | None:
    """Next record, or ``None`` at a clean end of file."""
    line = stream.readline(256)
    if not line:
        return None
    parts = line.split()
    if not line.endswith(b"\n") or len(parts) != 4 or parts[0] != MAGIC:
        raise MalformedHeaderError(f"bad record header {line[:40]!r}")
    try:
        t, v, label = (int(p) for p in parts[1:])
    except ValueError:
        raise MalformedHeaderError(f"non-integer field in header {line!r}") from None
    if t < 1 or v < 1 or label < 0:
        raise MalformedHeaderError(f"invalid header values T={t} V={v} label={label}")
    nbytes = t * v * 3 * 8
    payload = stream.read(nbytes)
    if len(payload) < nbytes:
        raise TruncatedFileError(f"expected {nbytes} payload bytes, found {len(payload)}")
    coords = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(t, v, 3)
    if not np.isfinite(coords).all():
        raise ValidationError("non-finite coordinate in payload")
    return SkeletonSequence(coords, label)


def save_sequence(seq: SkeletonSequence, path: str | Path) -> None:
    with open(path, "wb") as fh:
        write_record(fh, seq)


def load_sequence(path: str | Path) -> SkeletonSequence:
    with open(path, "rb") as fh:
        seq = read_record(fh)
    if seq is None:
        raise TruncatedFileError(f"{path} is empty")
    return seq


def iter_records(path: str | Path) -> Iterator[SkeletonSequence]:
    with open(path, "rb") as fh:
        while (seq := read_record(fh)) is not None:
            yield seq


# -- preprocessing ----------------------------------------------------------

def resize_frames(seq: SkeletonSequence, target_t: int) -> SkeletonSequence:
    """Linear interpolation along time onto ``target_t`` evenly spaced frames (end points kept)."""
    if target_t < 1:
        raise ShapeError("target_t must be >= 1")
    t = seq.frames
    if target_t == t:
        return SkeletonSequence(seq.coords.copy(), seq.label)
    pos = np.zeros(1) if target_t == 1 else np.arange(target_t) * ((t - 1) / (target_t - 1))
    lo = np.clip(np.floor(pos).astype(np.int64), 0, t - 1)
    hi = np.minimum(lo + 1, t - 1)
    w = (pos - lo)[:, None, None]
    coords = seq.coords[lo] * (1.0 - w) + seq.coords[hi] * w
    return SkeletonSequence(coords, seq.label)


def rotation_matrix(angles) -> np.ndarray:
    """``Rz @ Ry @ Rx`` for rotation angles (rx, ry, rz) in radians."""
    ax, ay, az = angles
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def random_rotation(seq: SkeletonSequence, rng: np.random.Generator, max_angle: float) -> SkeletonSequence:
    if max_angle < 0:
        raise ValueError("max_angle must be >= 0")
    rot = rotation_matrix(rng.uniform(-max_angle, max_angle, 3))
    return SkeletonSequence(seq.coords @ rot.T, seq.label)


def center_sequence(seq: SkeletonSequence, joint: int = 0) -> SkeletonSequence:
    """Subtract the first-frame position of ``joint`` from every coordinate."""
    return SkeletonSequence(seq.coords - seq.coords[0, joint], seq.label)


def motion(coords: np.ndarray) -> np.ndarray:
    """Frame ``t+1`` minus frame ``t``; the last frame is zero."""
    out = np.zeros_like(coords)
    out[:-1] = coords[1:] - coords[:-1]
    return out


def bones(coords: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    return coords - coords[..., skeleton.parent, :]


def derive_modalities(seq: SkeletonSequence, skeleton: Skeleton) -> dict[str, np.ndarray]:
    if seq.joints != skeleton.num_joints:
        raise ShapeError(f"sequence has {seq.joints} joints, skeleton {skeleton.num_joints}")
    joint = seq.coords
    bone = bones(joint, skeleton)
    return {"joint": joint, "bone": bone, "joint_motion": motion(joint), "bone_motion": motion(bone)}


def modality(x: np.ndarray, name: str, skeleton: Skeleton) -> np.ndarray:
    """One modality for a batch (N, T, V, 3)."""
    if name == "joint":
        return x
    if name == "bone":
        return bones(x, skeleton)
    if name == "joint_motion":
        return np.stack([motion(s) for s in x])
    if name == "bone_motion":
        return np.stack([motion(s) for s in bones(x, skeleton)])
    raise ValueError(f"unknown modality {name!r}; choose from {MODALITIES}")


# -- datasets ---------------------------------------------------------------

@dataclass
class Dataset:
    x: np.ndarray          # (N, T, V, 3)
    y: np.ndarray          # (N,)

    def __len__(self):
        return len(self.y)

    def sequences(self) -> list[SkeletonSequence]:
        return [SkeletonSequence(c, int(l)) for c, l in zip(self.x, self.y)]

    @classmethod
    def from_sequences(cls, seqs) -> "Dataset":
        seqs = list(seqs)
        if not seqs:
            return cls(np.zeros((0, 1, 1, 3)), np.zeros(0, dtype=np.int64))
        return cls(np.stack([s.coords for s in seqs]), np.array([s.label for s in seqs], dtype=np.int64))


@dataclass
class Split:
    train: Dataset
    val: Dataset
    num_classes: int
    meta: dict = field(default_factory=dict)


def save_dataset(split: Split, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, ds in (("train", split.train), ("val", split.val)):
        with open(d / f"{name}.skel", "wb") as fh:
            for seq in ds.sequences():
                write_record(fh, seq)
    meta = dict(split.meta, num_classes=split.num_classes)
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_dataset(directory: str | Path) -> Split:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    train = Dataset.from_sequences(iter_records(d / "train.skel"))
    val = Dataset.from_sequences(iter_records(d / "val.skel"))
    return Split(train, val, int(meta["num_classes"]), meta)


# -- synthetic generator ----------------------------------------------------

@dataclass
class Motion:
    joint: int
    axis: int
    amplitude: float
    frequency: int       # whole cycles per sequence, so the motion has zero temporal mean
    phase: float


@dataclass
class SynthSpec:
    num_classes: int
    base_poses: np.ndarray               # (C, V, 3)
    motions: list[list[Motion]]
    noise_sigma: float = 0.02
    mean_separable: bool = True
    phase_jitter: bool = True

    def __post_init__(self):
        if len(self.base_poses) != self.num_classes or len(self.motions) != self.num_classes:
            raise ValueError("one base pose and one motion list per class")
        if not self.mean_separable and not np.all(self.base_poses == self.base_poses[0]):
            raise ValueError("mean-degenerate data needs identical base poses")


def template_pose(skeleton: Skeleton, rng: np.random.Generator, bone_length: float = 0.25) -> np.ndarray:
    """A random rest pose: every bone a fixed-length segment in a random direction."""
    pose = np.zeros((skeleton.num_joints, 3))
    order = np.argsort(_depths(skeleton), kind="stable")
    dirs = rng.normal(size=(skeleton.num_joints, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for j in order:
        p = skeleton.parent[j]
        if p != j:
            pose[j] = pose[p] + bone_length * dirs[j]
    return pose


def _depths(skeleton: Skeleton) -> np.ndarray:
    depth = np.zeros(skeleton.num_joints, dtype=np.int64)
    for j in range(skeleton.num_joints):
        k = j
        while skeleton.parent[k] != k:
            depth[j] += 1
            k = skeleton.parent[k]
    return depth


def make_synth_spec(skeleton: Skeleton, num_classes: int, rng: np.random.Generator,
                    mean_separable: bool = True, separation: float = 0.1, amplitude: float = 0.3,
                    motions_per_class: int = 4, noise_sigma: float = 0.02) -> SynthSpec:
    """Random class definitions on ``skeleton``.

    Mean-separable classes get per-joint offsets of scale ``separation`` on a
    shared template; mean-degenerate classes share one base pose and differ
    only in their (zero-mean) motions.
    """
    template = template_pose(skeleton, rng)
    if mean_separable:
        poses = template + separation * rng.normal(size=(num_classes,) + template.shape)
    else:
        poses = np.repeat(template[None], num_classes, axis=0)
    motions = []
    for _ in range(num_classes):
        joints = rng.choice(skeleton.num_joints, size=min(motions_per_class, skeleton.num_joints), replace=False)
        motions.append([Motion(int(j), int(rng.integers(3)), amplitude * rng.uniform(0.5, 1.0),
                               int(rng.integers(1, 4)), float(rng.uniform(0, 2 * np.pi)))
                        for j in joints])
    return SynthSpec(num_classes, poses, motions, noise_sigma, mean_separable)


def render(spec: SynthSpec, label: int, frames: int, rng: np.random.Generator) -> np.ndarray:
    base = spec.base_poses[label]
    coords = np.repeat(base[None], frames, axis=0)
    shift = rng.uniform(0, 2 * np.pi) if spec.phase_jitter else 0.0
    t = np.arange(frames) / frames
    for m in spec.motions[label]:
        coords[:, m.joint, m.axis] += m.amplitude * np.sin(2 * np.pi * m.frequency * t + m.phase + shift)
    if spec.noise_sigma > 0:
        coords = coords + rng.normal(0.0, spec.noise_sigma, coords.shape)
    return coords


def generate_synthetic(spec: SynthSpec, n_per_class: int, frames: int, rng: np.random.Generator,
                       val_fraction: float = 0.2) -> Split:
    """Render ``n_per_class`` sequences per class and split them by a seeded shuffle."""
    labels = np.repeat(np.arange(spec.num_classes), n_per_class)
    x = np.stack([render(spec, int(c), frames, rng) for c in labels])
    order = rng.permutation(len(labels))
    n_val = int(round(val_fraction * len(labels)))
    val_idx, train_idx = order[:n_val], order[n_val:]
    meta = {"frames": frames, "joints": int(x.shape[2]), "n_per_class": n_per_class,
            "mean_separable": spec.mean_separable, "noise_sigma": spec.noise_sigma}
    return Split(Dataset(x[train_idx], labels[train_idx]), Dataset(x[val_idx], labels[val_idx]),
                 spec.num_classes, meta)
