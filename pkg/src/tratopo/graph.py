"""Undirected graph storage, dataset loaders, splits and label noise."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import pickle
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

TRAIN, VAL, TEST = 0, 1, 2


class DatasetFormatError(ValueError):
    """Malformed row in an input file."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


class SchemaError(ValueError):
    pass


def _as_edge_array(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return arr.reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric adjacency in CSR form: ``indices[indptr[v]:indptr[v+1]]`` are
    the sorted neighbours of ``v``. No self-loops, no duplicate entries.
    """

    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "Graph":
        """Build from an iterable of (u, v) pairs; drops self-loops and duplicates."""
        e = _as_edge_array(edges)
        if e.size and (e.min() < 0 or e.max() >= node_count):
            raise IndexError(f"edge endpoint out of range [0, {node_count})")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        key = np.unique(both[:, 0] * node_count + both[:, 1])
        rows, cols = key // node_count, key % node_count
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(np.cumsum(indptr), cols.astype(np.int64))

    @classmethod
    def empty(cls, node_count: int) -> "Graph":
        return cls(np.zeros(node_count + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))

    @property
    def node_count(self) -> int:
        return len(self.indptr) - 1

    @property
    def edge_count(self) -> int:
        """Undirected edges, each counted once."""
        return len(self.indices) // 2

    def neighbors(self, v: int) -> np.ndarray:
        self._check(v)
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        self._check(v)
        return int(self.indptr[v + 1] - self.indptr[v])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return bool(i < len(nb) and nb[i] == v)

    def edges(self) -> np.ndarray:
        """(E, 2) array of undirected edges with u < v, lexicographically sorted."""
        rows = np.repeat(np.arange(self.node_count, dtype=np.int64), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def to_scipy(self) -> sp.csr_matrix:
        n = self.node_count
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(n, n))

    def add_edges(self, edges) -> "Graph":
        e = _as_edge_array(edges)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        return Graph.from_edges(self.node_count, np.concatenate([self.edges(), e]))

    def remove_edges(self, edges) -> "Graph":
        e = _as_edge_array(edges)
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        n = self.node_count
        cur = self.edges()
        lo, hi = np.minimum(e[:, 0], e[:, 1]), np.maximum(e[:, 0], e[:, 1])
        drop = np.isin(cur[:, 0] * n + cur[:, 1], lo * n + hi)
        return Graph.from_edges(n, cur[~drop])

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.node_count).tobytes())
        h.update(self.indices.astype("<i8").tobytes())
        h.update(self.indptr.astype("<i8").tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return np.array_equal(self.indptr, other.indptr) and np.array_equal(self.indices, other.indices)

    __hash__ = None

    def to_json(self) -> str:
        adj = {str(v): self.neighbors(v).tolist() for v in range(self.node_count)}
        return json.dumps({"node_count": self.node_count, "adjacency": adj}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        obj = json.loads(text)
        edges = [(int(u), v) for u, nbs in obj["adjacency"].items() for v in nbs]
        return cls.from_edges(obj["node_count"], edges)

    def _check(self, v):
        if not 0 <= v < self.node_count:
            raise IndexError(f"node {v} out of range [0, {self.node_count})")


@dataclass(frozen=True)
class NodeLabelStore:
    true_labels: np.ndarray
    manual_labels: np.ndarray
    class_count: int
    auto_labels: np.ndarray | None = None
    inferred_labels: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.true_labels)
        for name in ("true_labels", "manual_labels", "auto_labels", "inferred_labels"):
            arr = getattr(self, name)
            if arr is None:
                continue
            if len(arr) != n:
                raise ValueError(f"{name} has length {len(arr)}, expected {n}")
            if n and (arr.min() < 0 or arr.max() >= self.class_count):
                raise ValueError(f"{name} has labels outside [0, {self.class_count})")

    @classmethod
    def from_true(cls, labels, class_count: int | None = None) -> "NodeLabelStore":
        z = np.asarray(labels, dtype=np.int64)
        k = int(z.max()) + 1 if class_count is None else class_count
        return cls(z, z.copy(), k)

    def with_(self, **changes) -> "NodeLabelStore":
        return replace(self, **changes)


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray | sp.csr_matrix
    labels: NodeLabelStore
    node_ids: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    dropped: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.graph, self.features, self.labels))


def load_citation_dataset(content_path, cites_path) -> Dataset:
    """Read a Cora/Citeseer-style ``.content`` + ``.cites`` pair.

    Node ids are densified in file order, classes indexed by first appearance.
    Citations that cannot form a new edge are dropped and
    counted per reason in ``Dataset.dropped``.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids: dict[str, int] = {}
    classes: dict[str, int] = {}
    rows, labels = [], []
    width = None
    with content_path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2:
                parts = line.split()
            if len(parts) < 2:
                raise DatasetFormatError(content_path, lineno, "expected id, features, label")
            node, feats, label = parts[0], parts[1:-1], parts[-1]
            if width is None:
                width = len(feats)
            elif len(feats) != width:
                raise SchemaError(f"{content_path}:{lineno}: {len(feats)} features, expected {width}")
            if node in ids:
                raise DatasetFormatError(content_path, lineno, f"duplicate node id {node!r}")
            try:
                rows.append(np.array(feats, dtype=np.float64))
            except ValueError as exc:
                raise DatasetFormatError(content_path, lineno, str(exc)) from None
            ids[node] = len(ids)
            labels.append(classes.setdefault(label, len(classes)))

    edges, unknown = [], 0
    with cites_path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetFormatError(cites_path, lineno, "expected 'cited<TAB>citing'")
            a, b = (ids.get(p) for p in parts)
            if a is None or b is None:
                unknown += 1
                continue
            edges.append((a, b))

    n = len(ids)
    e = _as_edge_array(edges)
    self_loops = int(np.sum(e[:, 0] == e[:, 1]))
    graph = Graph.from_edges(n, e)
    duplicates = len(e) - self_loops - graph.edge_count
    dropped = {"unknown": unknown, "self_loops": self_loops, "duplicates": duplicates}
    if any(dropped.values()):
        log.info("dropped citations from %s: %s", cites_path.name, dropped)
    x = np.vstack(rows) if rows else np.zeros((0, 0))
    store = NodeLabelStore.from_true(labels, len(classes))
    return Dataset(graph, sp.csr_matrix(x), store, list(ids), list(classes), dropped)


def load_csv_dataset(edges_csv, features_csv, labels_csv) -> Dataset:
    """Generic loader: ``src,dst`` edge list, one feature row per node, one label per node.

    Each file starts with a header row, which is skipped.
    """

    def rows(path):
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), 1):
                if lineno == 1 or not row:
                    continue
                yield lineno, row

    feats = []
    for lineno, row in rows(features_csv):
        try:
            feats.append([float(v) for v in row])
        except ValueError as exc:
            raise DatasetFormatError(features_csv, lineno, str(exc)) from None
        if len(feats[-1]) != len(feats[0]):
            raise SchemaError(f"{features_csv}:{lineno}: inconsistent feature width")
    n = len(feats)
    raw_labels = [row[-1].strip() for _, row in rows(labels_csv)]
    if len(raw_labels) != n:
        raise SchemaError(f"{labels_csv}: {len(raw_labels)} labels for {n} nodes")
    classes: dict[str, int] = {}
    labels = [classes.setdefault(c, len(classes)) for c in raw_labels]
    edges = []
    for lineno, row in rows(edges_csv):
        try:
            edges.append((int(row[0]), int(row[1])))
        except (ValueError, IndexError):
            raise DatasetFormatError(edges_csv, lineno, "expected integer src,dst") from None
    e = _as_edge_array(edges)
    ok = (e >= 0).all(axis=1) & (e < n).all(axis=1)
    graph = Graph.from_edges(n, e[ok])
    store = NodeLabelStore.from_true(labels, len(classes))
    return Dataset(graph, sp.csr_matrix(np.array(feats).reshape(n, -1)), store,
                   [str(i) for i in range(n)], list(classes), {"unknown": int((~ok).sum())})


PLANETOID_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")
_PICKLE_ALLOWED = {
    ("numpy", "ndarray"), ("numpy", "dtype"), ("numpy.core.multiarray", "_reconstruct"),
    ("numpy._core.multiarray", "_reconstruct"), ("scipy.sparse.csr", "csr_matrix"),
    ("scipy.sparse._csr", "csr_matrix"), ("scipy.sparse", "csr_matrix"),
    ("collections", "defaultdict"), ("__builtin__", "list"), ("builtins", "list"),
}


class _ArrayUnpickler(pickle.Unpickler):
    """Refuses every global except the array and container types these files use."""

    def find_class(self, module, name):
        if (module, name) not in _PICKLE_ALLOWED:
            raise pickle.UnpicklingError(f"refusing to load {module}.{name}")
        module = {"__builtin__": "builtins", "scipy.sparse.csr": "scipy.sparse",
                  "scipy.sparse._csr": "scipy.sparse"}.get(module, module)
        return super().find_class(module, name)


def load_planetoid_dataset(directory, name: str) -> Dataset:
    """Read the ``ind.<name>.*`` pickles used by the public GCN benchmark splits.

    Test rows are reordered into index order as in the reference loader. Ids
    missing from the test index (isolated Citeseer papers) get zero features
    and class 0; their count is reported as ``dropped["unlabeled"]``.
    """
    directory = Path(directory)
    parts = {}
    for part in PLANETOID_PARTS:
        path = directory / f"ind.{name}.{part}"
        try:
            with path.open("rb") as fh:
                parts[part] = _ArrayUnpickler(fh, encoding="latin1").load()
        except (pickle.UnpicklingError, EOFError) as exc:
            raise DatasetFormatError(path, 0, str(exc)) from None
    test_index = np.loadtxt(directory / f"ind.{name}.test.index", dtype=np.int64, ndmin=1)
    order = np.sort(test_index)
    lo, hi = order[0], order[-1]
    # tx row i first lands at sorted position i, then moves to test_index[i]
    tx, ty = sp.lil_matrix((hi - lo + 1, parts["tx"].shape[1])), np.zeros((hi - lo + 1, parts["ty"].shape[1]))
    tx[order - lo] = parts["tx"]
    ty[order - lo] = parts["ty"]
    x = sp.vstack([parts["allx"], tx]).tolil()
    y = np.vstack([parts["ally"], ty])
    x[test_index] = x[order]
    y[test_index] = y[order]
    n = x.shape[0]
    adjacency = parts["graph"]
    edges = [(u, v) for u, nbs in adjacency.items() for v in nbs]
    e = _as_edge_array(edges)
    e = e[(e < n).all(axis=1)]
    self_loops = int(np.sum(e[:, 0] == e[:, 1]))
    graph = Graph.from_edges(n, e)
    unlabeled = int((y.sum(axis=1) == 0).sum())
    store = NodeLabelStore.from_true(y.argmax(axis=1), y.shape[1])
    dropped = {"self_loops": self_loops, "unlabeled": unlabeled}
    return Dataset(graph, sp.csr_matrix(x), store, [str(i) for i in range(n)],
                   [str(c) for c in range(y.shape[1])], dropped)


@dataclass(frozen=True)
class SplitAssignment:
    roles: np.ndarray

    @property
    def train(self) -> np.ndarray:
        return np.flatnonzero(self.roles == TRAIN)

    @property
    def val(self) -> np.ndarray:
        return np.flatnonzero(self.roles == VAL)

    @property
    def test(self) -> np.ndarray:
        return np.flatnonzero(self.roles == TEST)


def split_nodes(node_count: int, ratios: Sequence[float] = (0.1, 0.2, 0.7), seed: int = 0) -> SplitAssignment:
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative fractions summing to 1, got {ratios}")
    n_train = int(round(ratios[0] * node_count))
    n_val = min(int(round(ratios[1] * node_count)), node_count - n_train)
    perm = np.random.default_rng(seed).permutation(node_count)
    roles = np.full(node_count, TEST, dtype=np.int8)
    roles[perm[:n_train]] = TRAIN
    roles[perm[n_train:n_train + n_val]] = VAL
    return SplitAssignment(roles)


def noise_budget(rate: float, n: int) -> int:
    # the epsilon keeps e.g. 0.29 * 100 from flooring to 28
    return int(math.floor(rate * n + 1e-9))


def inject_label_noise(labels: NodeLabelStore, rate: float, seed: int = 0) -> NodeLabelStore:
    """Replace ``floor(rate * N)`` manual labels with a different class drawn uniformly."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must lie in [0, 1], got {rate}")
    z = labels.true_labels
    k = labels.class_count
    count = noise_budget(rate, len(z))
    if count and k < 2:
        raise ValueError("label noise needs at least two classes")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(z), size=count, replace=False)
    y = z.copy()
    y[idx] = (z[idx] + rng.integers(1, k, size=count)) % k if count else y[idx]
    return labels.with_(manual_labels=y)


def edge_homophily_ratio(graph: Graph, labels) -> float:
    e = graph.edges()
    if len(e) == 0:
        raise ValueError("edge homophily is undefined on an edgeless graph")
    z = np.asarray(labels)
    return float(np.mean(z[e[:, 0]] == z[e[:, 1]]))


class SubgraphMap(NamedTuple):
    to_old: np.ndarray  # new id -> old id
    to_new: dict


def induced_subgraph(graph: Graph, nodes: Iterable[int]) -> tuple[Graph, SubgraphMap]:
    """Subgraph on ``nodes`` (sorted, deduplicated) plus the id maps both ways."""
    keep = np.unique(np.fromiter(nodes, dtype=np.int64))
    if len(keep) == 0:
        raise ValueError("cannot induce a subgraph on an empty node set")
    if keep[0] < 0 or keep[-1] >= graph.node_count:
        raise IndexError("subgraph node out of range")
    remap = np.full(graph.node_count, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    starts, ends = graph.indptr[keep], graph.indptr[keep + 1]
    src = np.repeat(np.arange(len(keep)), ends - starts)
    dst = remap[np.concatenate([graph.indices[s:e] for s, e in zip(starts, ends)])] if len(src) else np.zeros(0, np.int64)
    ok = dst >= 0
    sub = Graph.from_edges(len(keep), np.stack([src[ok], dst[ok]], axis=1))
    return sub, SubgraphMap(keep, {int(o): i for i, o in enumerate(keep)})


def row_normalize(x):
    """Scale feature rows to unit L1 norm; all-zero rows stay zero."""
    if sp.issparse(x):
        s = np.asarray(abs(x).sum(axis=1)).ravel()
        s[s == 0] = 1.0
        return sp.csr_matrix(sp.diags(1.0 / s) @ x)
    s = np.abs(x).sum(axis=1, keepdims=True)
    s[s == 0] = 1.0
    return x / s
