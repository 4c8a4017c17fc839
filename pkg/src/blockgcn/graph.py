"""Skeleton graphs, graph distances and bone adjacency matrices."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import TopologyError, UnknownPresetError

PRESETS = ("ntu25", "tiny5", "nwucla20")


@dataclass(frozen=True)
class Skeleton:
    num_joints: int
    edges: tuple[tuple[int, int], ...]
    root: int = 0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        v = self.num_joints
        if v < 1:
            raise TopologyError("skeleton needs at least one joint")
        if not 0 <= self.root < v:
            raise TopologyError(f"root {self.root} outside [0, {v})")
        seen = set()
        for a, b in self.edges:
            if not (0 <= a < v and 0 <= b < v):
                raise TopologyError(f"edge ({a}, {b}) outside [0, {v})")
            if a == b:
                raise TopologyError(f"self-loop at joint {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise TopologyError(f"duplicate edge {key}")
            seen.add(key)

    @cached_property
    def neighbors(self) -> list[list[int]]:
        nbrs = [[] for _ in range(self.num_joints)]
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return nbrs

    @cached_property
    def parent(self) -> np.ndarray:
        """BFS-tree parent of every joint, with ``parent[root] == root``."""
        parent = np.full(self.num_joints, -1, dtype=np.int64)
        parent[self.root] = self.root
        queue = deque([self.root])
        while queue:
            u = queue.popleft()
            for w in self.neighbors[u]:
                if parent[w] < 0:
                    parent[w] = u
                    queue.append(w)
        if (parent < 0).any():
            raise TopologyError(f"joints {np.flatnonzero(parent < 0).tolist()} unreachable from root")
        return parent

    def is_tree(self) -> bool:
        try:
            _ = self.parent
        except TopologyError:
            return False
        return len(self.edges) == self.num_joints - 1

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "num_joints": self.num_joints, "root": self.root,
                           "edges": [list(e) for e in self.edges]})

    @classmethod
    def from_json(cls, text: str) -> "Skeleton":
        doc = json.loads(text)
        try:
            return cls(int(doc["num_joints"]), tuple(tuple(e) for e in doc["edges"]),
                       int(doc.get("root", 0)), doc.get("name", "custom"))
        except KeyError as exc:
            raise TopologyError(f"skeleton document missing field {exc}") from None


@dataclass(frozen=True)
class DistanceMatrix:
    d: np.ndarray = field(repr=False)
    kind: str

    @property
    def max(self) -> int:
        return int(self.d.max())

    @property
    def num_joints(self) -> int:
        return self.d.shape[0]


def _bfs_hops(s: Skeleton, source: int) -> np.ndarray:
    dist = np.full(s.num_joints, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in s.neighbors[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def shortest_path_distances(s: Skeleton) -> DistanceMatrix:
    """All-pairs hop counts by one BFS per joint."""
    d = np.stack([_bfs_hops(s, i) for i in range(s.num_joints)])
    if (d < 0).any():
        i, j = np.argwhere(d < 0)[0]
        raise TopologyError(f"joints {i} and {j} are not connected")
    return DistanceMatrix(d, "shortest_path")


def level_difference_distances(s: Skeleton, root: int | None = None) -> DistanceMatrix:
    """``|depth(i) - depth(j)|`` with depth measured by BFS from ``root``."""
    depth = _bfs_hops(s, s.root if root is None else root)
    if (depth < 0).any():
        raise TopologyError("graph is disconnected")
    return DistanceMatrix(np.abs(depth[:, None] - depth[None, :]), "level_difference")


def graph_distances(s: Skeleton, kind: str = "shortest_path") -> DistanceMatrix:
    if kind == "shortest_path":
        return shortest_path_distances(s)
    if kind == "level_difference":
        return level_difference_distances(s)
    raise ValueError(f"unknown distance kind {kind!r}")


def bone_adjacency(s: Skeleton, normalize: bool = False) -> np.ndarray:
    """0/1 bone matrix plus self-loops, optionally ``D^-1/2 (A + I) D^-1/2``."""
    a = np.eye(s.num_joints)
    for i, j in s.edges:
        a[i, j] = a[j, i] = 1.0
    if normalize:
        inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
        a = inv_sqrt[:, None] * a * inv_sqrt[None, :]
    return a


def preset(name: str) -> Skeleton:
    if name not in PRESETS:
        raise UnknownPresetError(f"unknown skeleton preset {name!r}; choose from {PRESETS}")
    text = resources.files("blockgcn").joinpath("skeletons", f"{name}.json").read_text()
    return Skeleton.from_json(text)


def load_skeleton(path: str | Path) -> Skeleton:
    return Skeleton.from_json(Path(path).read_text())


def resolve_skeleton(name_or_path: str) -> Skeleton:
    """Preset name, or path to a skeleton JSON file."""
    if name_or_path in PRESETS:
        return preset(name_or_path)
    if Path(name_or_path).is_file():
        return load_skeleton(name_or_path)
    return preset(name_or_path)
