import numpy as np
import pytest
from hypothesis import given, strategies as st

from blockgcn.encodings import (FEATURE_WISE, SHARED, StatEncoding, TopoEncoding, build_B, build_B_backward,
                                build_C, temporal_mean_relative)
from blockgcn.errors import ShapeError
from blockgcn.graph import Skeleton, preset, shortest_path_distances
from blockgcn.tensor import gradcheck

PATH3 = Skeleton(3, ((0, 1), (1, 2)))


def test_lookup_example():
    d = shortest_path_distances(PATH3)
    b = build_B(np.array([0, 0.5, -0.25]), d)
    np.testing.assert_array_equal(b, [[0, .5, -.25], [.5, 0, .5], [-.25, .5, 0]])
    np.testing.assert_array_equal(build_B(np.zeros(3), d, l2_normalize=True), np.zeros((3, 3)))
    with pytest.raises(IndexError):
        build_B(np.zeros(2), d)


def test_l2_rows_unit_norm(rng):
    d = shortest_path_distances(preset("ntu25"))
    table = rng.normal(size=(d.max + 1, 4))
    b = build_B(table, d, l2_normalize=True)
    np.testing.assert_allclose(np.linalg.norm(b, axis=1), 1.0, atol=1e-12)


def test_table_gradient_counts_pairs():
    d = shortest_path_distances(preset("ntu25"))
    table = np.zeros(d.max + 1)
    g = build_B_backward(table, d, np.ones((25, 25)))
    np.testing.assert_array_equal(g, np.bincount(d.d.ravel(), minlength=d.max + 1))
    # central differences agree with the count
    f = lambda t: float(build_B(t, d).sum())
    assert gradcheck(f, table.copy() + 0.1, g, tol=1e-8).passed


@pytest.mark.parametrize("channels", [None, 3])
def test_l2_backward_gradcheck(rng, channels):
    d = shortest_path_distances(preset("tiny5"))
    shape = (d.max + 1,) if channels is None else (d.max + 1, channels)
    table = rng.normal(size=shape)
    up = rng.normal(size=build_B(table, d, True).shape)
    g = build_B_backward(table, d, up, True)
    assert gradcheck(lambda t: float(np.sum(build_B(t, d, True) * up)), table, g).passed


def test_topo_encoding_table_sized_from_distances():
    d = shortest_path_distances(preset("ntu25"))
    enc = TopoEncoding(d, 8, SHARED)
    assert enc.params["table"].shape == (d.max + 1,)
    assert TopoEncoding(d, 8, FEATURE_WISE).params["table"].shape == (d.max + 1, 8)
    np.testing.assert_array_equal(enc.forward(), 0.0)


@pytest.mark.parametrize("l2", [False, True])
def test_B_equivariant_under_relabeling(rng, l2):
    s = preset("ntu25")
    perm = rng.permutation(25)
    inv = np.argsort(perm)
    relabeled = Skeleton(25, tuple((int(inv[a]), int(inv[b])) for a, b in s.edges), int(inv[s.root]))
    table = rng.normal(size=(shortest_path_distances(s).max + 1,))
    b = build_B(table, shortest_path_distances(s), l2)
    b2 = build_B(table, shortest_path_distances(relabeled), l2)
    assert np.array_equal(b2, b[np.ix_(perm, perm)])


def test_rbar_examples(rng):
    frame = rng.normal(size=(5, 3))
    const = np.repeat(frame[None], 4, axis=0)
    np.testing.assert_allclose(temporal_mean_relative(const), frame[:, None] - frame[None, :], atol=1e-15)
    two = rng.normal(size=(2, 5, 3))
    rel = two[:, :, None] - two[:, None, :]
    np.testing.assert_allclose(temporal_mean_relative(two), (rel[0] + rel[1]) / 2, atol=1e-15)
    with pytest.raises(ShapeError):
        temporal_mean_relative(np.zeros((0, 5, 3)))


@given(st.integers(1, 6), st.integers(1, 7), st.integers(0, 2**31))
def test_rbar_antisymmetric_exact(t, v, seed):
    seq = np.random.default_rng(seed).normal(size=(t, v, 3))
    r = temporal_mean_relative(seq)
    assert np.array_equal(r, -r.transpose(1, 0, 2))


def test_C_translation_invariant_exact(rng):
    # dyadic coordinates and shift: every difference is exact, so the invariance is bitwise
    seq = rng.integers(-64, 64, size=(8, 25, 3)) / 16.0
    shift = np.array([3.5, -1.25, 0.75])
    enc = StatEncoding(6, 16, FEATURE_WISE, np.random.default_rng(0))
    for p in enc.params.values():
        p[...] = rng.normal(size=p.shape)
    c1 = build_C(enc, temporal_mean_relative(seq))
    c2 = build_C(enc, temporal_mean_relative(seq + shift))
    assert np.array_equal(c1, c2)


def test_C_degenerate_mlp_and_diagonal(rng):
    enc = StatEncoding(4, 8, FEATURE_WISE, rng)
    enc.params["b2"][...] = [1.0, 2.0, 3.0, 4.0]
    c = build_C(enc, temporal_mean_relative(rng.normal(size=(3, 5, 3))))
    np.testing.assert_array_equal(c, np.broadcast_to([1.0, 2, 3, 4], (5, 5, 4)))
    for p in enc.params.values():
        p[...] = rng.normal(size=p.shape)
    c = build_C(enc, temporal_mean_relative(rng.normal(size=(3, 5, 3))))
    diag = c[np.arange(5), np.arange(5)]
    assert np.array_equal(diag, np.broadcast_to(diag[0], diag.shape))


def test_feature_wise_generalizes_shared(rng):
    rbar = temporal_mean_relative(rng.normal(size=(4, 5, 3)))
    shared = StatEncoding(6, 8, SHARED, rng)
    fw = StatEncoding(6, 8, FEATURE_WISE, rng)
    shared.params["w2"][...] = rng.normal(size=(8, 1))
    shared.params["b2"][...] = 0.3
    fw.params["w1"][...] = shared.params["w1"]
    fw.params["b1"][...] = shared.params["b1"]
    fw.params["w2"][...] = np.repeat(shared.params["w2"], 6, axis=1)
    fw.params["b2"][...] = 0.3
    np.testing.assert_allclose(fw.forward(rbar), shared.forward(rbar), rtol=0, atol=1e-14)


@pytest.mark.parametrize("mode", [SHARED, FEATURE_WISE])
def test_stat_encoding_gradcheck(rng, mode):
    rbar = temporal_mean_relative(rng.normal(size=(2, 4, 5, 3)))
    enc = StatEncoding(3, 6, mode, rng)
    for p in enc.params.values():
        p[...] = rng.uniform(-1, 1, p.shape)
    up = rng.normal(size=(2, 5, 5, 3))
    enc.forward(rbar)
    enc.backward(up)
    grads = {k: v.copy() for k, v in enc.grads.items()}
    assert gradcheck(lambda _: float(np.sum(enc.forward(rbar) * up)), enc.params, grads).passed


def test_stat_output_layer_starts_at_zero(rng):
    enc = StatEncoding(4, 8, FEATURE_WISE, rng)
    np.testing.assert_array_equal(build_C(enc, temporal_mean_relative(rng.normal(size=(3, 5, 3)))), 0.0)
