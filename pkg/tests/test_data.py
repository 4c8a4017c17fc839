import io

import numpy as np
import pytest

from blockgcn.data import (Motion, SkeletonSequence, Split, SynthSpec, derive_modalities, generate_synthetic,
                           iter_records, load_dataset, load_sequence, make_synth_spec, modality, random_rotation,
                           read_record, render, resize_frames, save_dataset, save_sequence, write_record)
from blockgcn.errors import MalformedHeaderError, ShapeError, TruncatedFileError, ValidationError
from blockgcn.graph import preset
from blockgcn.tensor import make_rng


def seq(rng, t=6, v=5, label=2):
    return SkeletonSequence(rng.normal(size=(t, v, 3)), label)


def test_round_trip_bit_identical(rng, tmp_path):
    s = seq(rng)
    save_sequence(s, tmp_path / "a.skel")
    back = load_sequence(tmp_path / "a.skel")
    assert back.coords.tobytes() == s.coords.tobytes() and back.label == 2
    raw = (tmp_path / "a.skel").read_bytes()
    assert raw.startswith(b"SKEL1 6 5 2\n") and len(raw) == len(b"SKEL1 6 5 2\n") + 6 * 5 * 3 * 8


def test_distinct_file_errors(rng):
    buf = io.BytesIO()
    write_record(buf, seq(rng))
    raw = buf.getvalue()
    with pytest.raises(TruncatedFileError):
        read_record(io.BytesIO(raw[:-5]))
    with pytest.raises(MalformedHeaderError):
        read_record(io.BytesIO(b"SKEL2 6 5 2\n" + raw[12:]))
    with pytest.raises(MalformedHeaderError):
        read_record(io.BytesIO(b"SKEL1 six 5 2\n"))
    bad = seq(rng)
    bad.coords[1, 2, 0] = np.nan
    buf = io.BytesIO()
    write_record(buf, bad)
    with pytest.raises(ValidationError):
        read_record(io.BytesIO(buf.getvalue()))
    assert read_record(io.BytesIO(b"")) is None


def test_multi_record_file(rng, tmp_path):
    seqs = [seq(rng, label=i) for i in range(3)]
    with open(tmp_path / "d.skel", "wb") as fh:
        for s in seqs:
            write_record(fh, s)
    back = list(iter_records(tmp_path / "d.skel"))
    assert [b.label for b in back] == [0, 1, 2]
    assert all(np.array_equal(a.coords, b.coords) for a, b in zip(seqs, back))


def test_resize(rng):
    s = seq(rng)
    assert np.array_equal(resize_frames(s, 6).coords, s.coords)
    const = SkeletonSequence(np.full((4, 5, 3), 0.7))
    for t in (1, 3, 9):
        np.testing.assert_allclose(resize_frames(const, t).coords, 0.7, atol=1e-15)
    two = seq(rng, t=2)
    np.testing.assert_allclose(resize_frames(two, 3).coords[1], two.coords.mean(axis=0), atol=1e-15)
    r = resize_frames(s, 11)
    np.testing.assert_array_equal(r.coords[[0, -1]], s.coords[[0, -1]])
    with pytest.raises(ShapeError):
        resize_frames(s, 0)


def test_rotation(rng):
    s = seq(rng, v=7)
    assert np.array_equal(random_rotation(s, make_rng(1), 0.0).coords, s.coords)
    r = random_rotation(s, make_rng(1), 0.5)
    pd = lambda c: np.linalg.norm(c[:, :, None] - c[:, None, :], axis=-1)
    np.testing.assert_allclose(pd(r.coords), pd(s.coords), atol=1e-9)
    assert np.array_equal(random_rotation(s, make_rng(1), 0.5).coords, r.coords)
    with pytest.raises(ValueError):
        random_rotation(s, rng, -1.0)


def test_modalities(rng):
    sk = preset("ntu25")
    static = SkeletonSequence(np.repeat(rng.normal(size=(1, 25, 3)), 4, axis=0))
    mods = derive_modalities(static, sk)
    assert not mods["joint_motion"].any() and not mods["bone_motion"].any()
    s = seq(rng, t=5, v=25)
    mods = derive_modalities(s, sk)
    assert not mods["bone"][:, sk.root].any()
    shifted = derive_modalities(SkeletonSequence(s.coords + [1.5, -2.0, 0.25]), sk)
    np.testing.assert_allclose(shifted["bone"], mods["bone"], atol=1e-14)
    np.testing.assert_allclose(mods["joint_motion"][:-1], s.coords[1:] - s.coords[:-1])
    assert not mods["joint_motion"][-1].any()
    batch = np.stack([s.coords, s.coords])
    for name in mods:
        np.testing.assert_array_equal(modality(batch, name, sk)[1], mods[name])
    with pytest.raises(ShapeError):
        derive_modalities(seq(rng, v=5), sk)


def test_bones_telescope_to_joints(rng):
    for name in ("ntu25", "nwucla20", "tiny5"):
        sk = preset(name)
        s = seq(rng, t=3, v=sk.num_joints)
        bone = derive_modalities(s, sk)["bone"]
        rebuilt = np.zeros_like(bone)
        for j in range(sk.num_joints):
            k = j
            while sk.parent[k] != k:
                rebuilt[:, j] += bone[:, k]
                k = sk.parent[k]
        np.testing.assert_allclose(rebuilt, s.coords - s.coords[:, [sk.root]], atol=1e-12)


def test_synthetic_noise_free_is_base_pose():
    base = np.arange(15.0).reshape(1, 5, 3)
    spec = SynthSpec(1, base, [[Motion(0, 0, 0.0, 1, 0.0)]], noise_sigma=0.0)
    x = render(spec, 0, 6, make_rng(0))
    assert np.array_equal(x, np.repeat(base, 6, axis=0))


def test_synthetic_determinism_and_split():
    def make():
        rng = make_rng(5)
        spec = make_synth_spec(preset("tiny5"), 3, rng)
        return generate_synthetic(spec, 10, 8, rng)
    a, b = make(), make()
    assert np.array_equal(a.train.x, b.train.x) and np.array_equal(a.val.y, b.val.y)
    assert len(a.train) == 24 and len(a.val) == 6


def test_mean_degenerate_class_means_agree():
    rng = make_rng(9)
    spec = make_synth_spec(preset("ntu25"), 4, rng, mean_separable=False, noise_sigma=0.02)
    split = generate_synthetic(spec, 50, 16, rng)
    x = np.concatenate([split.train.x, split.val.x])
    y = np.concatenate([split.train.y, split.val.y])
    means = np.stack([x[y == c].mean(axis=(0, 1)) for c in range(4)])
    # each class mean averages 50*16 noisy frames; whole-cycle motions average to zero over time
    tol = 5 * 0.02 / np.sqrt(16 * 50)
    assert np.abs(means - means[0]).max() < tol
    sep = make_synth_spec(preset("ntu25"), 4, make_rng(9), mean_separable=True)
    assert min(np.abs(sep.base_poses[i] - sep.base_poses[j]).max() for i in range(4) for j in range(i)) > 0.05


def test_degenerate_spec_rejects_distinct_poses():
    with pytest.raises(ValueError):
        SynthSpec(2, np.stack([np.zeros((5, 3)), np.ones((5, 3))]), [[], []], mean_separable=False)


def test_dataset_directory_round_trip(tmp_path):
    rng = make_rng(1)
    split = generate_synthetic(make_synth_spec(preset("tiny5"), 2, rng), 5, 4, rng)
    save_dataset(split, tmp_path / "ds")
    back = load_dataset(tmp_path / "ds")
    assert isinstance(back, Split) and back.num_classes == 2
    assert np.array_equal(back.train.x, split.train.x) and np.array_equal(back.val.y, split.val.y)
