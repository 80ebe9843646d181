"""Immutable sparse undirected simple graphs in compressed-row form."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InputError


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph.

    ``neighbors[offsets[i]:offsets[i+1]]`` holds the sorted neighbours of ``i``;
    every undirected edge is stored once in each direction.
    """

    n: int
    offsets: np.ndarray
    neighbors: np.ndarray
    degrees: np.ndarray = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        offsets = np.ascontiguousarray(self.offsets, dtype=np.int64)
        neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int64)
        offsets.setflags(write=False)
        neighbors.setflags(write=False)
        degrees = np.diff(offsets)
        degrees.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "m", int(neighbors.size // 2))

    def neighbors_of(self, v: int) -> np.ndarray:
        return self.neighbors[self.offsets[v]:self.offsets[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.degrees[v])

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.neighbors_of(u)
        k = np.searchsorted(nbrs, v)
        return bool(k < nbrs.size and nbrs[k] == v)

    def edges(self) -> np.ndarray:
        """Undirected edge list as an (m, 2) array with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.degrees)
        mask = src < self.neighbors
        return np.column_stack([src[mask], self.neighbors[mask]])

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.neighbors.size, dtype=np.float64)
        return sp.csr_matrix((data, self.neighbors, self.offsets), shape=(self.n, self.n))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.neighbors, other.neighbors)
        )

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def build_graph(edges: Iterable[tuple[int, int]] | np.ndarray, n: int) -> Graph:
    """Build a simple undirected graph on ``n`` vertices.

    Duplicates, reversed duplicates and self-loops are dropped.
    """
    if n < 0:
        raise InputError(f"vertex count must be non-negative, got {n}")
    arr = np.asarray(edges if isinstance(edges, np.ndarray) else list(edges), dtype=np.int64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InputError(f"edges must be pairs, got array of shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        bad = arr[(arr < 0).any(axis=1) | (arr >= n).any(axis=1)][0]
        raise InputError(f"edge {tuple(int(x) for x in bad)} has an endpoint outside [0, {n})")
    arr = arr[arr[:, 0] != arr[:, 1]]
    both = np.concatenate([arr, arr[:, ::-1]])
    if both.size:
        # unique over (src, dst) keys, sorted by src then dst
        keys = np.unique(both[:, 0] * np.int64(max(n, 1)) + both[:, 1])
        src, dst = np.divmod(keys, np.int64(max(n, 1)))
    else:
        src = dst = np.empty(0, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return Graph(n, offsets, dst)


def induced_subgraph(g: Graph, vertices: np.ndarray) -> Graph:
    """Subgraph induced on ``vertices``; vertex ``vertices[i]`` becomes ``i``."""
    vertices = np.asarray(vertices, dtype=np.int64)
    remap = np.full(g.n, -1, dtype=np.int64)
    remap[vertices] = np.arange(vertices.size)
    e = g.edges()
    e = remap[e]
    e = e[(e >= 0).all(axis=1)]
    return build_graph(e, vertices.size)


def largest_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on the largest connected component.

    Returns the subgraph and ``index_map`` where ``index_map[new] = old``.
    Ties go to the component containing the smallest vertex id.
    """
    if g.n == 0:
        return g, np.empty(0, dtype=np.int64)
    _, comp = connected_components(g.adjacency(), directed=False)
    sizes = np.bincount(comp)
    # component ids are assigned in order of first (smallest) vertex, so argmax breaks ties correctly
    best = int(np.argmax(sizes))
    index_map = np.flatnonzero(comp == best)
    if index_map.size == g.n:
        return g, index_map
    return induced_subgraph(g, index_map), index_map


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return True
    ncomp, _ = connected_components(g.adjacency(), directed=False)
    return ncomp == 1


@dataclass(frozen=True)
class LoadedGraph:
    graph: Graph
    original_ids: np.ndarray
    """``original_ids[v]`` is the id used in the input file for vertex ``v``."""


def load_edge_list(path: str | Path, directed_input: bool = False,
                   largest_cc: bool = False) -> LoadedGraph:
    """Read a whitespace-separated integer edge list.

    Lines starting with ``#`` (and blank lines) are skipped. Vertex ids are
    relabelled densely in increasing order of original id. Directed input is
    symmetrized; since the graph is undirected this only affects duplicate
    handling, which is already a no-op.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise InputError(f"{path}:{lineno}: expected two vertex ids, got {line!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise InputError(f"{path}:{lineno}: cannot parse {line!r}") from None
    arr = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if arr.size and arr.min() < 0:
        raise InputError(f"{path}: negative vertex id")
    ids, dense = np.unique(arr, return_inverse=True)
    g = build_graph(dense.reshape(-1, 2), ids.size)
    if largest_cc:
        g, index_map = largest_component(g)
        ids = ids[index_map]
    return LoadedGraph(g, ids)


def save_edge_list(g: Graph, path: str | Path, original_ids: np.ndarray | None = None) -> None:
    e = g.edges()
    if original_ids is not None:
        e = np.asarray(original_ids)[e]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} m={g.m}\n")
        for u, v in e:
            fh.write(f"{u} {v}\n")


def read_labels(path: str | Path, original_ids: np.ndarray | None = None) -> np.ndarray:
    """Read a ``vertex<TAB>label`` sidecar.

    String labels are mapped to integers in sorted order. When ``original_ids``
    is given, the result is aligned with the dense vertex numbering and any
    vertex absent from the file gets ``-1``.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise InputError(f"{path}:{lineno}: expected 'vertex<TAB>label', got {line!r}")
            try:
                rows.append((int(parts[0]), parts[1]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: cannot parse vertex id in {line!r}") from None
    if not rows:
        return np.empty(0, dtype=np.int64)
    verts = np.array([r[0] for r in rows], dtype=np.int64)
    raw_labels = [r[1] for r in rows]
    try:
        codes = np.array([int(x) for x in raw_labels], dtype=np.int64)
        _, codes = np.unique(codes, return_inverse=True)
    except ValueError:
        _, codes = np.unique(np.array(raw_labels), return_inverse=True)
    if original_ids is None:
        out = np.full(verts.max() + 1, -1, dtype=np.int64)
        out[verts] = codes
        return out
    lookup = dict(zip(verts.tolist(), codes.tolist()))
    return np.array([lookup.get(int(v), -1) for v in original_ids], dtype=np.int64)


def write_labels(path: str | Path, labels: np.ndarray, ids: np.ndarray | None = None,
                 header: str | None = None) -> None:
    labels = np.asarray(labels)
    ids = np.arange(labels.size) if ids is None else np.asarray(ids)
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for v, c in zip(ids, labels):
            fh.write(f"{v}\t{c}\n")
