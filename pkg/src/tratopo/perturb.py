"""Topological perturbation scenarios applied to the graph seen at test time."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .graph import Graph, NodeLabelStore, noise_budget

SCENARIOS = ("clean", "random", "sparse", "attack")


@dataclass(frozen=True)
class PerturbationResult:
    graph: Graph
    added: np.ndarray
    removed: np.ndarray
    impacted: np.ndarray
    scenario: str = ""
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        both = set(map(tuple, self.added.tolist())) & set(map(tuple, self.removed.tolist()))
        if both:
            raise ValueError(f"edges both added and removed: {sorted(both)[:5]}")

    def manifest(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "params": self.params,
            "node_count": self.graph.node_count,
            "added": self.added.tolist(),
            "removed": self.removed.tolist(),
            "impacted": self.impacted.tolist(),
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, sort_keys=True)


def replay(graph: Graph, manifest: dict) -> PerturbationResult:
    """Re-apply a saved manifest to the original graph."""
    if manifest["node_count"] != graph.node_count:
        raise ValueError("manifest was recorded on a graph of different size")
    added = np.asarray(manifest["added"], dtype=np.int64).reshape(-1, 2)
    removed = np.asarray(manifest["removed"], dtype=np.int64).reshape(-1, 2)
    g = graph.remove_edges(removed).add_edges(added)
    return PerturbationResult(g, added, removed, np.asarray(manifest["impacted"], dtype=np.int64),
                              manifest["scenario"], manifest["seed"], manifest["params"])


def load_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _endpoints(*edge_sets) -> np.ndarray:
    parts = [e.ravel() for e in edge_sets if len(e)]
    return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)


def identity(graph: Graph, scenario: str = "clean", seed: int = 0) -> PerturbationResult:
    z = np.zeros((0, 2), dtype=np.int64)
    return PerturbationResult(graph, z, z, np.zeros(0, dtype=np.int64), scenario, seed)


def random_perturbation(graph: Graph, rate: float, seed: int = 0) -> PerturbationResult:
    """Insert ``floor(rate * E)`` uniformly random edges that are not already present."""
    if rate < 0:
        raise ValueError("perturbation rate must be non-negative")
    n = graph.node_count
    want = noise_budget(rate, graph.edge_count)
    free = n * (n - 1) // 2 - graph.edge_count
    if want > free:
        raise ValueError(f"cannot add {want} edges: only {free} non-edges remain")
    rng = np.random.default_rng(seed)
    existing = set((graph.edges()[:, 0] * n + graph.edges()[:, 1]).tolist())
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < want:
        batch = rng.integers(0, n, size=(2 * (want - len(chosen)) + 8, 2))
        for u, v in batch.tolist():
            if u == v:
                continue
            key = min(u, v) * n + max(u, v)
            if key in existing or key in seen:
                continue
            seen.add(key)
            chosen.append(key)
            if len(chosen) == want:
                break
    keys = np.array(chosen, dtype=np.int64)
    added = np.stack([keys // n, keys % n], axis=1) if want else np.zeros((0, 2), dtype=np.int64)
    return PerturbationResult(graph.add_edges(added), added, np.zeros((0, 2), dtype=np.int64),
                              _endpoints(added), "random", seed, {"rate": rate})


def sparsify(graph: Graph, drop_rate: float, seed: int = 0) -> PerturbationResult:
    """Remove ``floor(drop_rate * E)`` edges chosen uniformly at random."""
    if not 0.0 <= drop_rate <= 1.0:
        raise ValueError("drop_rate must lie in [0, 1]")
    edges = graph.edges()
    k = noise_budget(drop_rate, len(edges))
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(edges), size=k, replace=False))
    removed = edges[pick]
    return PerturbationResult(graph.remove_edges(removed), np.zeros((0, 2), dtype=np.int64), removed,
                              _endpoints(removed), "sparse", seed, {"drop_rate": drop_rate})


class AttackStrategy(Protocol):
    def __call__(self, graph: Graph, labels: np.ndarray, target: int, budget: int,
                 rng: np.random.Generator, taken: set) -> list[tuple[int, int]]: ...


def heterophilous_injection(graph, labels, target, budget, rng, taken):
    """Connect ``target`` to ``budget`` random nodes whose true label differs from its own."""
    pool = np.flatnonzero(labels != labels[target])
    if len(pool) == 0:
        raise ValueError(f"no node with a label different from target {target}")
    nbrs = set(graph.neighbors(target).tolist())
    pool = [int(v) for v in rng.permutation(pool)
            if int(v) not in nbrs and (min(target, v), max(target, v)) not in taken]
    if len(pool) < budget:
        raise ValueError(f"target {target}: only {len(pool)} heterophilous partners for budget {budget}")
    return [(min(target, v), max(target, v)) for v in pool[:budget]]


def targeted_attack(graph: Graph, labels: NodeLabelStore | np.ndarray, targets, budget_per_target: int,
                    seed: int = 0, strategy: AttackStrategy = heterophilous_injection) -> PerturbationResult:
    """Per-target edge injection; the impacted set is the target set."""
    if budget_per_target < 0:
        raise ValueError("budget must be non-negative")
    z = labels.true_labels if isinstance(labels, NodeLabelStore) else np.asarray(labels)
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    if budget_per_target == 0 or len(targets) == 0:
        return identity(graph, "attack", seed)
    rng = np.random.default_rng(seed)
    taken: set = set()
    for t in targets.tolist():
        taken.update(strategy(graph, z, t, budget_per_target, rng, taken))
    added = np.array(sorted(taken), dtype=np.int64).reshape(-1, 2)
    return PerturbationResult(graph.add_edges(added), added, np.zeros((0, 2), dtype=np.int64), targets,
                              "attack", seed, {"budget": budget_per_target, "targets": len(targets)})


def choose_targets(test_nodes, fraction: float, seed: int) -> np.ndarray:
    test_nodes = np.asarray(test_nodes)
    k = max(1, noise_budget(fraction, len(test_nodes)))
    return np.sort(np.random.default_rng(seed).choice(test_nodes, size=k, replace=False))


def perturb(graph: Graph, scenario: str, seed: int, *, labels=None, test_nodes=None,
            rate: float = 0.5, drop_rate: float = 0.5, budget: int = 5,
            target_fraction: float = 0.1) -> PerturbationResult:
    """Dispatch one named scenario with its default magnitude."""
    if scenario == "clean":
        return identity(graph, "clean", seed)
    if scenario == "random":
        return random_perturbation(graph, rate, seed)
    if scenario == "sparse":
        return sparsify(graph, drop_rate, seed)
    if scenario == "attack":
        if labels is None or test_nodes is None:
            raise ValueError("attack scenario needs labels and test nodes")
        targets = choose_targets(test_nodes, target_fraction, seed)
        return targeted_attack(graph, labels, targets, budget, seed)
    raise ValueError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
