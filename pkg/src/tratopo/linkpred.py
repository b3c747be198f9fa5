"""Random-walk link prediction around a low-degree seed node.

Scores come from a random walk with restart at the seed and a global
PageRank, both computed on the subgraph induced by the seed's BFS
neighbourhood. Candidates are ranked by the combined score.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .graph import Graph, induced_subgraph
from .paths import CandidateSets

SCORERS = ("rwr", "pgr", "combine")
COMBINE_RULES = ("sum", "product", "max")


@dataclass(frozen=True)
class LinkPredConfig:
    restart_prob: float = 0.15
    teleport: float = 0.15
    tolerance: float = 1e-6
    max_iterations: int = 100
    top_k: int = 10
    min_degree: int = 3
    l_max: int = 3
    combine_rule: str = "sum"

    def __post_init__(self):
        for name in ("restart_prob", "teleport"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.combine_rule not in COMBINE_RULES:
            raise ValueError(f"combine_rule must be one of {COMBINE_RULES}")

    @property
    def damping(self) -> float:
        """Continuation probability of the PageRank walk."""
        return 1.0 - self.teleport


def _transition(sub: Graph):
    """Row-stochastic transition (transposed) and the dangling-node mask."""
    deg = sub.degrees.astype(float)
    dangling = deg == 0
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=~dangling)
    pt = (sp.diags(inv) @ sub.to_scipy()).T.tocsr()
    return pt, dangling


def pagerank(sub: Graph, cfg: LinkPredConfig = LinkPredConfig(), stats: dict | None = None) -> np.ndarray:
    """Probability-form PageRank with uniform teleport; dangling mass spread uniformly."""
    n = sub.node_count
    if n == 0:
        raise ValueError("pagerank on an empty graph")
    pt, dangling = _transition(sub)
    d = cfg.damping
    x = np.full(n, 1.0 / n)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        nxt = d * (pt @ x) + (d * x[dangling].sum() + 1.0 - d) / n
        delta = np.abs(nxt - x).sum()
        x = nxt
        if delta < cfg.tolerance:
            break
    if stats is not None:
        stats["pagerank_iterations"] = it
    return x / x.sum()


def rwr(sub: Graph, seed: int, cfg: LinkPredConfig = LinkPredConfig(), stats: dict | None = None) -> np.ndarray:
    """Stationary vector of ``r = a e_seed + (1 - a) Wᵀ r``; dangling mass returns to the seed."""
    n = sub.node_count
    if not 0 <= seed < n:
        raise IndexError(f"seed {seed} not in subgraph of {n} nodes")
    pt, dangling = _transition(sub)
    a = cfg.restart_prob
    e = np.zeros(n)
    e[seed] = 1.0
    r = e.copy()
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        nxt = (1.0 - a) * (pt @ r + r[dangling].sum() * e) + a * e
        delta = np.abs(nxt - r).sum()
        r = nxt
        if delta < cfg.tolerance:
            break
    if stats is not None:
        stats["rwr_iterations"] = it
    return r / r.sum()


def combine_scores(first: Mapping[int, float], second: Mapping[int, float], rule: str = "sum") -> dict:
    if set(first) != set(second):
        raise KeyError("score maps cover different nodes")
    if rule == "sum":
        op = lambda a, b: a + b
    elif rule == "product":
        op = lambda a, b: a * b
    elif rule == "max":
        op = max
    else:
        raise ValueError(f"unknown combine rule {rule!r}")
    return {k: op(first[k], second[k]) for k in first}


TIE_DECIMALS = 12


def rank(scores: Mapping[int, float]) -> list[int]:
    """Keys by descending score, ascending node id on ties.

    Scores equal to ``TIE_DECIMALS`` places count as tied, so structurally
    symmetric nodes order by id whatever the floating-point summation order.
    """
    return sorted(scores, key=lambda k: (-round(scores[k], TIE_DECIMALS), k))


def predict_links(graph: Graph, seed: int, candidates: CandidateSets, cfg: LinkPredConfig = LinkPredConfig(),
                  scorer: str = "combine", trace: list | None = None) -> list[int]:
    """Top-k candidate nodes to connect to ``seed``, best first.

    Scoring runs on the subgraph over the seed, its neighbours, the negative
    pool and the candidate set; only members of the candidate set are returned.
    """
    if scorer not in SCORERS:
        raise ValueError(f"scorer must be one of {SCORERS}")
    if len(candidates.candidates) == 0:
        return []
    scope = np.concatenate([[seed], graph.neighbors(seed), candidates.negative_pool, candidates.candidates])
    sub, idmap = induced_subgraph(graph, scope)
    stats: dict = {}
    keys = idmap.to_old.tolist()
    local_seed = idmap.to_new[int(seed)]
    maps = []
    if scorer in ("rwr", "combine"):
        maps.append(dict(zip(keys, rwr(sub, local_seed, cfg, stats).tolist())))
    if scorer in ("pgr", "combine"):
        maps.append(dict(zip(keys, pagerank(sub, cfg, stats).tolist())))
    scores = combine_scores(*maps, rule=cfg.combine_rule) if len(maps) == 2 else maps[0]
    allowed = set(candidates.candidates.tolist())
    ranked = [k for k in rank(scores) if k in allowed][: cfg.top_k]
    if trace is not None:
        trace.append({"seed": int(seed), "subgraph_nodes": sub.node_count, "subgraph_edges": sub.edge_count,
                      **stats, "scores": {str(k): scores[k] for k in ranked}, "predicted": ranked})
    return ranked


def write_trace(path, trace: list, cfg: LinkPredConfig) -> None:
    with open(path, "w") as fh:
        json.dump({"config": asdict(cfg), "seeds": trace}, fh, indent=1)
