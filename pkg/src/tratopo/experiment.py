"""Dataset -> train -> perturb -> infer -> evaluate, across variants and seeds."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import gcn
from .graph import (Dataset, inject_label_noise, load_citation_dataset, load_csv_dataset, load_planetoid_dataset,
                    row_normalize, split_nodes)
from .inference import InferenceConfig, default_threads, tratopo_infer, warmup_matrix
from .linkpred import LinkPredConfig
from .perturb import SCENARIOS, perturb

log = logging.getLogger(__name__)

VARIANT_ORDER = ("original", "lindt", "rwr", "pgr", "combine")
REPORT_COLUMNS = ("variant", "scenario", "acc_mean", "acc_std", "ent_mean", "ent_std", "seconds",
                  "test_acc_mean", "test_ent_mean", "n_seeds", "n_failed")
DEFAULT_DATA_DIR = Path(__file__).resolve().parents[2] / "data"


@dataclass
class ExperimentConfig:
    dataset: str = "cora"
    content_path: str | None = None
    cites_path: str | None = None
    data_dir: str | None = None
    split: tuple = (0.1, 0.2, 0.7)
    noise_rate: float = 0.1
    normalize_features: bool = True
    scenario: str = "random"
    rate: float = 0.5
    drop_rate: float = 0.5
    budget: int = 5
    target_fraction: float = 0.1
    variants: tuple = ("original", "combine")
    seeds: tuple = (0, 1, 2, 3, 4)
    train: gcn.TrainConfig = field(default_factory=gcn.TrainConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    timing: bool = False
    threads: int | None = None

    def __post_init__(self):
        if not self.variants or not self.seeds:
            raise ValueError("variants and seeds must be non-empty")
        bad = set(self.variants) - set(VARIANT_ORDER)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for path in (self.content_path, self.cites_path):
            if path is not None and not Path(path).exists():
                raise FileNotFoundError(f"dataset file not found: {path}")
        self.split = tuple(self.split)
        self.variants = tuple(self.variants)
        self.seeds = tuple(int(s) for s in self.seeds)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "train" in obj:
            obj["train"] = gcn.TrainConfig(**obj["train"])
        if "inference" in obj:
            inf = dict(obj["inference"])
            if "linkpred" in inf:
                inf["linkpred"] = LinkPredConfig(**inf["linkpred"])
            obj["inference"] = InferenceConfig(**inf)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if str(path).endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            return cls.from_dict(tomllib.loads(text))
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return asdict(self)


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.content_path and cfg.cites_path:
        return load_citation_dataset(cfg.content_path, cfg.cites_path)
    root = Path(cfg.data_dir) if cfg.data_dir else DEFAULT_DATA_DIR
    d = root / cfg.dataset
    if (d / f"{cfg.dataset}.content").exists():
        return load_citation_dataset(d / f"{cfg.dataset}.content", d / f"{cfg.dataset}.cites")
    if (d / f"ind.{cfg.dataset}.graph").exists():
        return load_planetoid_dataset(d, cfg.dataset)
    if (d / "edges.csv").exists():
        return load_csv_dataset(d / "edges.csv", d / "features.csv", d / "labels.csv")
    raise FileNotFoundError(f"no dataset files for {cfg.dataset!r} under {root} (see scripts/fetch_data.py)")


@dataclass
class CellResult:
    variant: str
    seed: int
    scenario: str
    accuracy: float | None = None
    entropy: float | None = None
    test_accuracy: float | None = None
    test_entropy: float | None = None
    n_eval: int = 0
    seconds: float | None = None
    transitions: int = 0
    edges_added: int = 0
    final_uncertain: int | None = None
    error: str | None = None


@dataclass
class MetricsReport:
    scenario: str
    cells: list
    config: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for variant in VARIANT_ORDER:
            cells = [c for c in self.cells if c.variant == variant]
            if not cells:
                continue
            ok = [c for c in cells if c.error is None]
            acc = np.array([c.accuracy for c in ok], dtype=float)
            ent = np.array([c.entropy for c in ok], dtype=float)

            def stat(a, f):
                return float(f(a)) if len(a) else None

            secs = [c.seconds for c in ok if c.seconds is not None]
            out.append({
                "variant": variant,
                "scenario": self.scenario,
                "acc_mean": stat(acc, np.mean),
                "acc_std": stat(acc, np.std),
                "ent_mean": stat(ent, np.mean),
                "ent_std": stat(ent, np.std),
                "seconds": float(np.mean(secs)) if secs else None,
                "test_acc_mean": stat(np.array([c.test_accuracy for c in ok], dtype=float), np.mean),
                "test_ent_mean": stat(np.array([c.test_entropy for c in ok], dtype=float), np.mean),
                "n_seeds": len(ok),
                "n_failed": len(cells) - len(ok),
            })
        return out

    def summary(self, variant: str) -> dict | None:
        return next((r for r in self.rows() if r["variant"] == variant), None)


def seed_setup(cfg: ExperimentConfig, ds: Dataset, seed: int):
    """Split and noisy labels for one seed; every entry point derives them the same way."""
    split = split_nodes(ds.graph.node_count, cfg.split, seed)
    return split, inject_label_noise(ds.labels, cfg.noise_rate, seed)


def eval_population(scenario: str, impacted, test_nodes) -> np.ndarray:
    """Impacted test nodes; all test nodes when nothing was impacted or the graph is clean."""
    nodes = np.intersect1d(impacted, test_nodes) if scenario != "clean" else np.asarray(test_nodes)
    return nodes if len(nodes) else np.asarray(test_nodes)


def _seed_cells(cfg: ExperimentConfig, ds: Dataset, x, seed: int) -> list[CellResult]:
    graph = ds.graph
    k = ds.labels.class_count
    split, labels = seed_setup(cfg, ds, seed)
    truth = labels.true_labels
    tcfg = replace(cfg.train, seed=seed)
    t0 = time.perf_counter()
    try:
        base = gcn.train(graph, x, labels.manual_labels, split.train, tcfg, k)
        warm = warmup_matrix(base.probs[split.train], labels.manual_labels[split.train], k)
        pert = perturb(graph, cfg.scenario, seed, labels=labels, test_nodes=split.test, rate=cfg.rate,
                       drop_rate=cfg.drop_rate, budget=cfg.budget, target_fraction=cfg.target_fraction)
        test_probs = gcn.forward(gcn.normalize_adjacency(pert.graph), x, base.params)
    except Exception as exc:  # noqa: BLE001 - a failed stage marks every cell of this seed
        log.exception("seed %d failed before inference", seed)
        return [CellResult(v, seed, cfg.scenario, error=f"{type(exc).__name__}: {exc}") for v in cfg.variants]
    prep = time.perf_counter() - t0
    y_a = test_probs.argmax(axis=1)

    eval_nodes = eval_population(cfg.scenario, pert.impacted, split.test)

    cells = []
    for variant in cfg.variants:
        t1 = time.perf_counter()
        cell = CellResult(variant, seed, cfg.scenario, n_eval=int(len(eval_nodes)))
        try:
            if variant == "original":
                pred, probs = y_a, test_probs
            else:
                icfg = replace(cfg.inference, variant=variant, seed=seed)
                clf = gcn.GcnClassifier(x, k, tcfg, params=base.params)
                res = tratopo_infer(pert.graph, clf, test_probs, y_a, warm, icfg)
                pred, probs = res.labels, res.probs
                cell.transitions = len(res.trace)
                cell.edges_added = res.graph.edge_count - pert.graph.edge_count
                cell.final_uncertain = res.trace[-1]["uncertain"] if res.trace else 0
            cell.accuracy = gcn.accuracy(pred, truth, eval_nodes)
            cell.entropy = gcn.avg_normalized_entropy(probs, eval_nodes)
            cell.test_accuracy = gcn.accuracy(pred, truth, split.test)
            cell.test_entropy = gcn.avg_normalized_entropy(probs, split.test)
        except Exception as exc:  # noqa: BLE001
            log.exception("cell (%s, %d) failed", variant, seed)
            cell.error = f"{type(exc).__name__}: {exc}"
        if cfg.timing:
            cell.seconds = prep + time.perf_counter() - t1
        cells.append(cell)
    return cells


def run_experiment(cfg: ExperimentConfig, dataset: Dataset | None = None) -> MetricsReport:
    ds = dataset or load_dataset(cfg)
    x = row_normalize(ds.features) if cfg.normalize_features else ds.features
    threads = cfg.threads or default_threads()
    if threads > 1 and len(cfg.seeds) > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_seed = list(pool.map(lambda s: _seed_cells(cfg, ds, x, s), cfg.seeds))
    else:
        per_seed = [_seed_cells(cfg, ds, x, s) for s in cfg.seeds]
    order = {v: i for i, v in enumerate(VARIANT_ORDER)}
    cells = sorted((c for group in per_seed for c in group), key=lambda c: (order[c.variant], c.seed))
    # thread counts are execution settings, not part of the experiment's identity
    cfg_dict = cfg.to_dict()
    cfg_dict.pop("threads", None)
    cfg_dict["inference"].pop("threads", None)
    return MetricsReport(cfg.scenario, cells, cfg_dict)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render_report(report: MetricsReport, fmt: str = "csv") -> str:
    rows = report.rows()
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in REPORT_COLUMNS])
        return buf.getvalue()
    if fmt == "json":
        obj = {"columns": list(REPORT_COLUMNS), "rows": rows,
               "cells": [asdict(c) for c in report.cells], "config": report.config}
        return json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if fmt in ("markdown", "md"):
        lines = ["| " + " | ".join(REPORT_COLUMNS) + " |", "|" + "---|" * len(REPORT_COLUMNS)]
        for r in rows:
            cells = []
            for c in REPORT_COLUMNS:
                v = r[c]
                cells.append(f"{100 * v:.2f}" if isinstance(v, float) and c not in ("seconds",) else _fmt(v))
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: MetricsReport, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or {".json": "json", ".md": "markdown"}.get(path.suffix, "csv")
    path.write_text(render_report(report, fmt))
    return path


def parse_csv_report(text: str) -> list[dict]:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in r.items():
            if k in ("variant", "scenario"):
                parsed[k] = v
            elif v == "":
                parsed[k] = None
            elif k in ("n_seeds", "n_failed"):
                parsed[k] = int(v)
            else:
                parsed[k] = float(v)
        rows.append(parsed)
    return rows
