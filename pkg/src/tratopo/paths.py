"""BFS distance shells around a node and the link-prediction candidate pool."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np

from .graph import Graph

DEFAULT_L_MAX = 3


@dataclass(frozen=True)
class DistanceShells:
    center: int
    shells: dict  # distance -> sorted node array, for 1..l_max
    l_max: int

    def __getitem__(self, dist: int) -> np.ndarray:
        return self.shells[dist]


@dataclass(frozen=True)
class CandidateSets:
    center: int
    negative_pool: np.ndarray
    candidates: np.ndarray
    neighbors: np.ndarray

    def to_dict(self) -> dict:
        return {"center": self.center, "negative_pool": self.negative_pool.tolist(),
                "candidates": self.candidates.tolist(), "neighbors": self.neighbors.tolist()}


def bfs_shells(graph: Graph, center: int, l_max: int = DEFAULT_L_MAX) -> DistanceShells:
    """Nodes at exact hop distance 1..l_max from ``center``."""
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    graph._check(center)
    seen = np.zeros(graph.node_count, dtype=bool)
    seen[center] = True
    frontier = np.array([center], dtype=np.int64)
    shells = {}
    for dist in range(1, l_max + 1):
        if len(frontier):
            nxt = np.concatenate([graph.indices[graph.indptr[v]:graph.indptr[v + 1]] for v in frontier])
            nxt = np.unique(nxt[~seen[nxt]])
            seen[nxt] = True
        else:
            nxt = np.zeros(0, dtype=np.int64)
        shells[dist] = nxt
        frontier = nxt
    return DistanceShells(center, shells, l_max)


def build_candidates(graph: Graph, center: int, l_max: int = DEFAULT_L_MAX) -> CandidateSets:
    """Candidate set: the two outermost shells plus their neighbours, minus the
    center and its first-order neighbours. Negative pool: shells 2..l_max.
    """
    if l_max < 2:
        raise ValueError("l_max must be at least 2")
    sh = bfs_shells(graph, center, l_max)
    outer = np.concatenate([sh[l_max - 1], sh[l_max]])
    parts = [outer] + [graph.indices[graph.indptr[v]:graph.indptr[v + 1]] for v in outer]
    cand = np.unique(np.concatenate(parts)) if len(outer) else np.zeros(0, dtype=np.int64)
    exclude = np.append(sh[1], center)
    cand = cand[~np.isin(cand, exclude)]
    pool = np.unique(np.concatenate([sh[d] for d in range(2, l_max + 1)]))
    return CandidateSets(center, pool, cand, sh[1])


class CandidateCache:
    """Memo of :func:`build_candidates` keyed by (graph fingerprint, node, l_max)."""

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.hits = 0

    def get(self, graph: Graph, center: int, l_max: int = DEFAULT_L_MAX) -> CandidateSets:
        key = (graph.fingerprint, int(center), l_max)
        found = self._store.get(key)
        if found is not None:
            self.hits += 1
            return found
        value = build_candidates(graph, center, l_max)
        with self._lock:
            return self._store.setdefault(key, value)

    def __len__(self):
        return len(self._store)


def dump_candidates(graph: Graph, nodes, l_max: int = DEFAULT_L_MAX) -> str:
    report = {}
    for v in nodes:
        c = build_candidates(graph, int(v), l_max)
        sh = bfs_shells(graph, int(v), l_max)
        report[str(int(v))] = {"shells": {str(d): s.tolist() for d, s in sh.shells.items()}, **c.to_dict()}
    return json.dumps(report, sort_keys=True, indent=1)
