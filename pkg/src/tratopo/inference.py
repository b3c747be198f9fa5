"""Bayesian label transition with topology-based resampling.

Each transition computes, for every node, the posterior over latent classes
``P̄(z | v) · φ[z, y_a]`` and takes its argmax. Nodes whose label changed since
the previous transition, or disagrees with the classifier's own label, are
*uncertain*; those are relabelled from their neighbours by a topology sampler.
Uncertain nodes with fewer than ``min_degree`` neighbours first get extra
edges proposed by random-walk link prediction.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .gcn import GcnClassifier
from .graph import Graph
from .linkpred import LinkPredConfig, predict_links
from .paths import CandidateCache

log = logging.getLogger(__name__)

VARIANTS = ("lindt", "rwr", "pgr", "combine")
SAMPLERS = ("uniform", "majority", "degree_weighted")
ALPHA_MIN, ALPHA_MAX = 1e-3, 1e3


@dataclass
class TransitionState:
    phi: np.ndarray
    alpha: np.ndarray
    t: int = 0


@dataclass(frozen=True)
class InferenceConfig:
    transitions: int = 100
    warmup_steps: int = 40
    retrain_interval: int = 60
    sampler: str = "uniform"
    variant: str = "combine"
    linkpred: LinkPredConfig = field(default_factory=LinkPredConfig)
    initial_alpha: float = 1.0
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.transitions < 0 or self.warmup_steps < 0:
            raise ValueError("transitions and warmup_steps must be non-negative")
        if self.retrain_interval < 1:
            raise ValueError("retrain_interval must be >= 1")
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.initial_alpha <= 0:
            raise ValueError("initial_alpha must be positive")


def class_counts(labels, k: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=k)


def warmup_matrix(train_probs: np.ndarray, manual_labels, k: int | None = None) -> np.ndarray:
    """Transition matrix from (predicted class, manual label) pairs, +1 smoothed."""
    k = k or train_probs.shape[1]
    pred = np.asarray(train_probs).argmax(axis=1)
    counts = np.ones((k, k))
    np.add.at(counts, (pred, np.asarray(manual_labels, dtype=np.int64)), 1.0)
    return counts / counts.sum(axis=1, keepdims=True)


def transit_labels(probs: np.ndarray, phi: np.ndarray, auto_labels):
    """Vectorised posterior ``P̄ ⊙ φ[:, y_a]``; returns (labels, posterior, fallback mask).

    Rows whose posterior is all zero fall back to the argmax of ``P̄``.
    """
    post = probs * phi[:, np.asarray(auto_labels)].T
    total = post.sum(axis=1, keepdims=True)
    fallback = total[:, 0] <= 0
    post = np.where(fallback[:, None], probs, post / np.where(total > 0, total, 1.0))
    return post.argmax(axis=1), post, fallback


def transit_label(p_row, phi, auto_label: int):
    z, post, fallback = transit_labels(np.asarray(p_row, dtype=float)[None, :], np.asarray(phi), [auto_label])
    if fallback[0]:
        log.warning("all-zero posterior; falling back to argmax of the class distribution")
    return int(z[0]), post[0]


def update_alpha(alpha_prev, counts_t, counts_prev) -> np.ndarray:
    alpha_prev = np.asarray(alpha_prev, dtype=float)
    ct, cp = np.asarray(counts_t, dtype=float), np.asarray(counts_prev, dtype=float)
    ok = (ct > 0) & (cp > 0)
    ratio = np.divide(ct, cp, out=np.ones_like(ct), where=ok)
    return np.clip(alpha_prev * ratio, ALPHA_MIN, ALPHA_MAX)


def update_phi(alpha, inferred, auto_labels, k: int | None = None) -> np.ndarray:
    """Posterior mean of each row of φ under a symmetric Dirichlet(α_k) prior."""
    alpha = np.asarray(alpha, dtype=float)
    k = k or len(alpha)
    counts = np.zeros((k, k))
    np.add.at(counts, (np.asarray(inferred, dtype=np.int64), np.asarray(auto_labels, dtype=np.int64)), 1.0)
    return (counts + alpha[:, None]) / (counts.sum(axis=1, keepdims=True) + k * alpha[:, None])


def _neighbor_labels(graph: Graph, node: int, labels) -> tuple[np.ndarray, np.ndarray]:
    nb = graph.neighbors(node)
    if len(nb) == 0:
        raise ValueError(f"node {node} has no neighbours to sample from")
    return nb, np.asarray(labels)[nb]


def sample_uniform(graph: Graph, node: int, labels, rng: np.random.Generator) -> int:
    """Draw a neighbour's label; class k comes up with its share among neighbours."""
    _, lab = _neighbor_labels(graph, node, labels)
    return int(lab[rng.integers(len(lab))])


def sample_majority(graph: Graph, node: int, labels) -> int:
    _, lab = _neighbor_labels(graph, node, labels)
    return int(np.bincount(lab).argmax())


def sample_degree_weighted(graph: Graph, node: int, labels) -> int:
    nb, lab = _neighbor_labels(graph, node, labels)
    return int(np.bincount(lab, weights=graph.degrees[nb].astype(float)).argmax())


def _sample(graph, node, labels, sampler, seed, t):
    if sampler == "uniform":
        return sample_uniform(graph, node, labels, np.random.default_rng([seed, t, node]))
    if sampler == "majority":
        return sample_majority(graph, node, labels)
    return sample_degree_weighted(graph, node, labels)


def check_stochastic(state: TransitionState, probs: np.ndarray, atol: float = 1e-9) -> None:
    if np.any(state.phi < 0) or not np.allclose(state.phi.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise AssertionError(f"phi rows not stochastic at t={state.t}")
    if np.any(state.alpha < ALPHA_MIN) or np.any(state.alpha > ALPHA_MAX):
        raise AssertionError(f"alpha out of bounds at t={state.t}")
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, rtol=0, atol=atol):
        raise AssertionError(f"class distribution rows not stochastic at t={state.t}")


@dataclass
class InferenceResult:
    labels: np.ndarray
    state: TransitionState
    probs: np.ndarray
    auto_labels: np.ndarray
    graph: Graph
    trace: list
    linkpred_trace: list


def _link_edges(work: Graph, nodes, cfg: InferenceConfig, cache: CandidateCache, lp_trace):
    lp = cfg.linkpred

    def one(v):
        local: list = []
        found = predict_links(work, v, cache.get(work, v, lp.l_max), lp, cfg.variant, local)
        return v, found, local

    if cfg.threads > 1 and len(nodes) > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(one, nodes))
    else:
        results = [one(v) for v in nodes]
    edges = []
    for v, found, local in results:
        lp_trace.extend(local)
        edges.extend((min(v, u), max(v, u)) for u in found)
    return edges


def tratopo_infer(graph: Graph, classifier: GcnClassifier | None, probs: np.ndarray, auto_labels,
                  warmup_phi: np.ndarray, cfg: InferenceConfig = InferenceConfig(), *,
                  truth=None, eval_nodes=None, strict: bool = False) -> InferenceResult:
    """Run ``cfg.transitions`` label transitions on ``graph``.

    ``probs``/``auto_labels`` are the classifier's outputs on ``graph``;
    ``warmup_phi`` comes from :func:`warmup_matrix` on the training nodes.
    Edges proposed by link prediction live only in the returned working graph.
    With ``strict=True`` every transition asserts the stochastic invariants.
    """
    n, k = probs.shape
    if len(auto_labels) != n or graph.node_count != n:
        raise ValueError("classifier outputs do not match the graph size")
    if warmup_phi.shape != (k, k):
        raise ValueError(f"warm-up matrix must be {k}x{k}")
    probs = np.array(probs, dtype=float)
    y_a = np.asarray(auto_labels).copy()
    state = TransitionState(update_phi(np.full(k, cfg.initial_alpha), y_a, y_a, k),
                            np.full(k, cfg.initial_alpha), 0)
    prev = y_a.copy()
    work = graph
    cache = CandidateCache()
    trace, lp_trace = [], []
    min_deg = cfg.linkpred.min_degree

    for t in range(1, cfg.transitions + 1):
        phi_use = warmup_phi if t < cfg.warmup_steps else state.phi
        z, post, fallback = transit_labels(probs, phi_use, y_a)
        uncertain = (z != prev) | (z != y_a)

        gated = np.zeros(0, dtype=np.int64)
        added = 0
        if cfg.variant != "lindt":
            gated = np.flatnonzero(uncertain & (work.degrees < min_deg))
            if len(gated):
                edges = _link_edges(work, gated.tolist(), cfg, cache, lp_trace)
                before = work.edge_count
                if edges:
                    work = work.add_edges(edges)
                added = work.edge_count - before

        new = z.copy()
        resampled = np.flatnonzero(uncertain & (work.degrees > 0))
        for v in resampled.tolist():
            new[v] = _sample(work, v, z, cfg.sampler, cfg.seed, t)

        alpha = update_alpha(state.alpha, class_counts(new, k), class_counts(prev, k))
        state = TransitionState(update_phi(alpha, new, y_a, k), alpha, t)
        probs[resampled] = post[resampled]
        prev = new

        if classifier is not None and t % cfg.retrain_interval == 0:
            fit = classifier.fit(work, new, np.arange(n))
            probs, y_a = fit.probs.copy(), fit.auto_labels.copy()

        if strict:
            check_stochastic(state, probs)
        rec = {"t": t, "uncertain": int(uncertain.sum()), "gated": gated.tolist(),
               "resampled": int(len(resampled)), "edges_added": int(added), "fallback": int(fallback.sum()),
               "alpha": state.alpha.tolist(), "phi_checksum": float(np.sum(state.phi * np.arange(1, k * k + 1).reshape(k, k)))}
        if truth is not None:
            idx = np.arange(n) if eval_nodes is None else np.asarray(eval_nodes)
            rec["accuracy"] = float(np.mean(new[idx] == np.asarray(truth)[idx])) if len(idx) else None
        trace.append(rec)

    counts = [r["uncertain"] for r in trace[-10:]]
    if any(b > a for a, b in zip(counts, counts[1:])):
        log.warning("uncertain-node count rose during the last transitions: %s", counts)
    return InferenceResult(prev, state, probs, y_a, work, trace, lp_trace)


def write_trace(path, trace: list) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def default_threads() -> int:
    return max(1, int(os.environ.get("TRATOPO_THREADS", "1")))
