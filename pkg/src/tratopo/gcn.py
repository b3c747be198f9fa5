"""Two-layer graph convolution classifier written directly against numpy/scipy.

Forward pass: ``softmax(Â · relu(Â · X · W1) · W2)`` with
``Â = D̃^-1/2 (A + I) D̃^-1/2``. Gradients are derived by hand; the test
suite checks them against central finite differences.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import Graph

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
PROB_FLOOR = 1e-12


class NumericError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    hidden_units: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 0 or self.hidden_units < 1:
            raise ValueError(f"invalid TrainConfig: {self}")


@dataclass
class GcnParams:
    w1: np.ndarray
    w2: np.ndarray
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0

    @property
    def shapes(self):
        return self.w1.shape, self.w2.shape

    def copy(self) -> "GcnParams":
        return GcnParams(self.w1.copy(), self.w2.copy(), [a.copy() for a in self.m],
                         [a.copy() for a in self.v], self.step)


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(d: int, hidden: int, k: int, seed: int) -> GcnParams:
    rng = np.random.default_rng(seed)
    return GcnParams(glorot(d, hidden, rng), glorot(hidden, k, rng))


def normalize_adjacency(graph: Graph) -> sp.csr_matrix:
    a = graph.to_scipy() + sp.identity(graph.node_count, format="csr")
    d = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = sp.diags(1.0 / np.sqrt(d))
    out = (inv_sqrt @ a @ inv_sqrt).tocsr()
    out.sort_indices()
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def propagate_features(adj, x):
    """``Â · X``, the input to the first layer. Stays sparse for sparse X."""
    ax = adj @ x
    return ax.tocsr() if sp.issparse(ax) else ax


def _forward(adj, ax, params: GcnParams):
    with np.errstate(over="ignore", invalid="ignore"):  # reported below as NumericError
        z1 = _dense(ax @ params.w1)
        h1 = np.maximum(z1, 0.0)
        z2 = adj @ (h1 @ params.w2)
    if not np.all(np.isfinite(z2)):
        raise NumericError("non-finite logits in forward pass")
    return z1, h1, z2


def forward(adj, x, params: GcnParams, ax=None) -> np.ndarray:
    """Row-stochastic class distribution for every node."""
    if ax is None:
        ax = propagate_features(adj, x)
    return softmax(_forward(adj, ax, params)[2])


def _mask_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if len(idx) == 0:
        raise ValueError("mask selects no nodes")
    if idx.max() >= n:
        raise IndexError("mask index out of range")
    return idx


def cross_entropy(dist: np.ndarray, labels, mask) -> float:
    idx = _mask_index(mask, len(dist))
    p = dist[idx, np.asarray(labels)[idx]]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def loss(adj, x, params: GcnParams, labels, mask, ax=None) -> float:
    """Masked mean cross-entropy computed from logits via log-sum-exp."""
    if ax is None:
        ax = propagate_features(adj, x)
    idx = _mask_index(mask, adj.shape[0])
    logp = log_softmax(_forward(adj, ax, params)[2])
    return float(-np.mean(logp[idx, np.asarray(labels)[idx]]))


def gradients(adj, x, params: GcnParams, labels, mask, ax=None):
    """Analytic gradients of :func:`loss` w.r.t. ``(W1, W2)``; also returns the loss."""
    if ax is None:
        ax = propagate_features(adj, x)
    idx = _mask_index(mask, adj.shape[0])
    y = np.asarray(labels)[idx]
    z1, h1, z2 = _forward(adj, ax, params)
    logp = log_softmax(z2)
    value = float(-np.mean(logp[idx, y]))

    dz2 = np.zeros_like(z2)
    dz2[idx] = np.exp(logp[idx])
    dz2[idx, y] -= 1.0
    dz2 /= len(idx)
    g = adj.T @ dz2
    dw2 = h1.T @ g
    dz1 = (g @ params.w2.T) * (z1 > 0)
    dw1 = _dense(ax.T @ dz1)
    return (dw1, dw2), value


def adam_step(params: GcnParams, grads, cfg: TrainConfig) -> None:
    if not params.m:
        params.m = [np.zeros_like(params.w1), np.zeros_like(params.w2)]
        params.v = [np.zeros_like(params.w1), np.zeros_like(params.w2)]
    params.step += 1
    t = params.step
    for i, (w, g) in enumerate(zip((params.w1, params.w2), grads)):
        params.m[i] = cfg.beta1 * params.m[i] + (1 - cfg.beta1) * g
        params.v[i] = cfg.beta2 * params.v[i] + (1 - cfg.beta2) * g * g
        mhat = params.m[i] / (1 - cfg.beta1 ** t)
        vhat = params.v[i] / (1 - cfg.beta2 ** t)
        w -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)


@dataclass
class TrainResult:
    params: GcnParams
    probs: np.ndarray
    auto_labels: np.ndarray
    losses: list


def train(graph: Graph, x, labels, train_idx, cfg: TrainConfig | None = None,
          class_count: int | None = None, adj=None, init: GcnParams | None = None) -> TrainResult:
    """Full-batch Adam on the masked cross-entropy for ``cfg.epochs`` epochs.

    Starts from seeded Glorot weights, or from a copy of ``init`` (fresh Adam
    moments) when fine-tuning. Returns the final parameters, the distribution
    over the whole graph and its argmax labels.
    """
    cfg = cfg or TrainConfig()
    labels = np.asarray(labels)
    k = class_count or int(labels.max()) + 1
    adj = normalize_adjacency(graph) if adj is None else adj
    ax = propagate_features(adj, x)
    if init is None:
        params = init_params(x.shape[1], cfg.hidden_units, k, cfg.seed)
    else:
        params = GcnParams(init.w1.copy(), init.w2.copy())
    losses = []
    for epoch in range(cfg.epochs):
        grads, value = gradients(adj, x, params, labels, train_idx, ax=ax)
        if not np.isfinite(value):
            raise NumericError(f"training diverged at epoch {epoch}: loss={value}")
        losses.append(value)
        adam_step(params, grads, cfg)
    probs = forward(adj, x, params, ax=ax)
    return TrainResult(params, probs, probs.argmax(axis=1), losses)


def accuracy(predicted, truth, mask=None) -> float:
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if mask is not None:
        idx = _mask_index(mask, len(truth))
        predicted, truth = predicted[idx], truth[idx]
    if len(truth) == 0:
        raise ValueError("accuracy over an empty node set")
    return float(np.mean(predicted == truth))


def normalized_entropy(dist: np.ndarray) -> np.ndarray:
    p = np.clip(dist, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return h / np.log(dist.shape[1])


def avg_normalized_entropy(dist: np.ndarray, mask) -> float:
    idx = _mask_index(mask, len(dist))
    return float(np.clip(normalized_entropy(dist[idx]).mean(), 0.0, 1.0))


def save_checkpoint(path, params: GcnParams, seed: int, epochs: int) -> None:
    meta = {"version": CHECKPOINT_VERSION, "seed": seed, "epochs": epochs,
            "step": params.step, "shapes": [list(s) for s in params.shapes]}
    arrays = {"w1": params.w1, "w2": params.w2}
    if params.m:
        arrays.update(m1=params.m[0], m2=params.m[1], v1=params.v[0], v2=params.v[1])
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path) -> tuple[GcnParams, dict]:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        params = GcnParams(data["w1"].copy(), data["w2"].copy(), step=meta["step"])
        if "m1" in data:
            params.m = [data["m1"].copy(), data["m2"].copy()]
            params.v = [data["v1"].copy(), data["v2"].copy()]
    return params, meta


def export_distribution_csv(path, dist: np.ndarray, node_ids=None) -> None:
    node_ids = range(len(dist)) if node_ids is None else node_ids
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id"] + [f"p_{j}" for j in range(dist.shape[1])])
        for nid, row in zip(node_ids, dist):
            w.writerow([nid] + [repr(float(v)) for v in row])


class GcnClassifier:
    """Fixed features and hyper-parameters; refits on whatever topology it is given.

    With ``warm_start`` (the default) each fit continues from the current
    weights, so periodic refits during inference fine-tune rather than restart.
    """

    def __init__(self, features, class_count: int, cfg: TrainConfig | None = None,
                 params: GcnParams | None = None, warm_start: bool = True):
        self.features = features
        self.class_count = class_count
        self.cfg = cfg or TrainConfig()
        self.params = params
        self.warm_start = warm_start
        self.fits = 0

    def fit(self, graph: Graph, labels, train_idx) -> TrainResult:
        """Train on ``graph``; continues from the current weights when warm-starting."""
        init = self.params if self.warm_start else None
        result = train(graph, self.features, labels, train_idx, self.cfg, self.class_count, init=init)
        self.params = result.params
        self.fits += 1
        return result

    def predict(self, graph: Graph) -> np.ndarray:
        if self.params is None:
            raise RuntimeError("classifier has not been fitted")
        return forward(normalize_adjacency(graph), self.features, self.params)
