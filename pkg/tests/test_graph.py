import numpy as np
import pytest

from blockgcn.errors import TopologyError, UnknownPresetError
from blockgcn.graph import (PRESETS, Skeleton, bone_adjacency, graph_distances, level_difference_distances,
                            load_skeleton, preset, shortest_path_distances)


def floyd_warshall(v, edges):
    d = np.full((v, v), np.inf)
    np.fill_diagonal(d, 0)
    for a, b in edges:
        d[a, b] = d[b, a] = 1
    for k in range(v):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d


def random_connected(rng, v):
    edges = {(int(rng.integers(i)), i) for i in range(1, v)}   # random tree
    for _ in range(int(rng.integers(0, v))):
        a, b = sorted(int(x) for x in rng.choice(v, 2, replace=False))
        edges.add((a, b))
    perm = rng.permutation(v)
    return Skeleton(v, tuple((int(perm[a]), int(perm[b])) for a, b in edges))


def path(v):
    return Skeleton(v, tuple((i, i + 1) for i in range(v - 1)))


def test_examples():
    assert shortest_path_distances(path(4)).d[0, 3] == 3
    star = Skeleton(5, ((0, 1), (0, 2), (0, 3), (0, 4)))
    assert shortest_path_distances(star).d[1, 2] == 2
    assert level_difference_distances(path(4)).d[1, 3] == 2
    assert level_difference_distances(star).d[1, 2] == 0


def test_floyd_warshall_oracle_1000_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        s = random_connected(rng, int(rng.integers(1, 13)))
        d = shortest_path_distances(s).d
        np.testing.assert_array_equal(d, floyd_warshall(s.num_joints, s.edges))
        assert d.max(initial=0) < s.num_joints


def test_distance_invariants():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = random_connected(rng, int(rng.integers(2, 13)))
        for kind in ("shortest_path", "level_difference"):
            d = graph_distances(s, kind).d
            assert (d == d.T).all() and (np.diag(d) == 0).all()
        d = shortest_path_distances(s).d
        assert (d[:, :, None] <= d[:, None, :] + d.T[None, :, :]).all()


def test_level_distances_are_depth_differences():
    rng = np.random.default_rng(4)
    for _ in range(100):
        s = random_connected(rng, int(rng.integers(1, 13)))
        root = int(rng.integers(s.num_joints))
        depth = floyd_warshall(s.num_joints, s.edges)[root]
        expect = np.abs(depth[:, None] - depth[None, :])
        np.testing.assert_array_equal(level_difference_distances(s, root).d, expect)


def test_ntu_level_distance_matches_bfs_oracle():
    s = preset("ntu25")
    depth = floyd_warshall(25, s.edges)[s.root]
    np.testing.assert_array_equal(level_difference_distances(s).d, np.abs(depth[:, None] - depth[None, :]))


def test_tree_max_distance_is_diameter():
    s = preset("ntu25")
    d = shortest_path_distances(s)
    assert d.max == int(floyd_warshall(25, s.edges).max())


def test_disconnected_graph_is_rejected():
    s = Skeleton(4, ((0, 1), (2, 3)))
    with pytest.raises(TopologyError):
        shortest_path_distances(s)
    with pytest.raises(TopologyError):
        level_difference_distances(s)


@pytest.mark.parametrize("edges", [((0, 0),), ((0, 1), (1, 0)), ((0, 5),)])
def test_invalid_edges(edges):
    with pytest.raises(TopologyError):
        Skeleton(3, edges)


def test_bone_adjacency():
    np.testing.assert_array_equal(bone_adjacency(path(3)), [[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    s = preset("ntu25")
    a = bone_adjacency(s)
    degree = np.bincount(np.ravel(s.edges), minlength=25)
    np.testing.assert_array_equal(a.sum(axis=1), degree + 1)
    ring = Skeleton(6, tuple((i, (i + 1) % 6) for i in range(6)))
    n = bone_adjacency(ring, normalize=True)
    np.testing.assert_allclose(n[n > 0], 1 / 3, atol=1e-15)
    np.testing.assert_allclose(bone_adjacency(s, True), bone_adjacency(s, True).T)


def test_presets():
    tiny = preset("tiny5")
    assert tiny.num_joints == 5 and len(tiny.edges) == 4
    shortest_path_distances(tiny)
    for name, v in (("ntu25", 25), ("nwucla20", 20)):
        s = preset(name)
        assert s.num_joints == v and len(s.edges) == v - 1 and s.is_tree()
        assert s.parent[s.root] == s.root
    with pytest.raises(UnknownPresetError):
        preset("ntu26")
    assert set(PRESETS) == {"ntu25", "tiny5", "nwucla20"}


def test_json_round_trip(tmp_path):
    s = preset("ntu25")
    f = tmp_path / "s.json"
    f.write_text(s.to_json())
    t = load_skeleton(f)
    assert t.edges == s.edges and t.root == s.root and t.num_joints == 25
