"""Acceptance criteria. Each test records a PASS/FAIL line (see conftest) and then asserts.

The Cora runs share a session cache: one 5-seed sweep per scenario serves
every criterion that reads it.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from tratopo import gcn, linkpred
from tratopo.experiment import ExperimentConfig, emit_report, run_experiment, seed_setup
from tratopo.graph import row_normalize
from tratopo.inference import InferenceConfig, sample_degree_weighted, sample_majority, tratopo_infer, warmup_matrix
from tratopo.linkpred import LinkPredConfig, pagerank, rwr
from tratopo.paths import bfs_shells
from tratopo.perturb import perturb

from conftest import random_graph
from test_gcn import finite_diff, rel_err
from test_inference import mc_freq, neighborhood
from test_linkpred import pagerank_oracle, rwr_oracle
from test_paths import floyd_warshall, shells_from_distances

SEEDS = (0, 1, 2, 3, 4)
ALL = ("original", "lindt", "rwr", "pgr", "combine")
SCENARIO_ARGS = {"random": {"rate": 0.5}, "sparse": {"drop_rate": 0.7}, "attack": {}}

pytestmark = pytest.mark.slow


class Runs:
    def __init__(self, dataset):
        self.dataset = dataset
        self.cache = {}
        self.seconds = {}

    def get(self, scenario, variants=ALL, min_degree=3):
        key = (scenario, variants, min_degree)
        if key not in self.cache:
            cfg = ExperimentConfig(scenario=scenario, seeds=SEEDS, variants=variants, threads=1,
                                   inference=InferenceConfig(linkpred=LinkPredConfig(min_degree=min_degree)),
                                   **SCENARIO_ARGS[scenario])
            t0 = time.perf_counter()
            self.cache[key] = run_experiment(cfg, self.dataset)
            self.seconds[key] = time.perf_counter() - t0
        return self.cache[key]


@pytest.fixture(scope="session")
def runs(cora):
    return Runs(cora)


def test_c01_walks_and_shells_match_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 41))
        g = random_graph(rng, n, float(rng.uniform(0.02, 0.4)))
        s = int(rng.integers(n))
        worst = max(worst, np.abs(pagerank(g) - pagerank_oracle(g)).max(), np.abs(rwr(g, s) - rwr_oracle(g, s)).max())
    shells_ok = True
    for _ in range(200):
        n = int(rng.integers(1, 51))
        g = random_graph(rng, n, float(rng.uniform(0.02, 0.3)))
        d = floyd_warshall(g)
        c, l_max = int(rng.integers(n)), int(rng.integers(1, 6))
        got = {l: s.tolist() for l, s in bfs_shells(g, c, l_max).shells.items()}
        shells_ok &= got == shells_from_distances(d[c], c, l_max)
    secs = time.perf_counter() - t0
    ok = worst < 1e-5 and shells_ok and secs < 30
    verdict(1, "oracle equivalence", ok, f"max walk L-inf err {worst:.2e}, shells {'match' if shells_ok else 'DIFFER'}, {secs:.1f}s")
    assert ok


def test_c02_gradient_check(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, 5, 0.5)
        adj = gcn.normalize_adjacency(g)
        x = rng.normal(size=(5, 4))
        params = gcn.init_params(4, 6, 3, seed)
        y = rng.integers(0, 3, 5)
        mask = rng.random(5) < 0.7
        mask[0] = True
        (d1, d2), _ = gcn.gradients(adj, x, params, y, mask)
        worst = max(worst, rel_err(d1, finite_diff(adj, x, params, y, mask, "w1")),
                    rel_err(d2, finite_diff(adj, x, params, y, mask, "w2")))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-4 and secs < 10
    verdict(2, "gradient check", ok, f"max relative error {worst:.2e}, {secs:.2f}s")
    assert ok


def test_c03_stochastic_invariants_during_cora_run(cora, verdict, monkeypatch):
    walk_err = []

    def checked(fn):
        def wrapper(*a, **kw):
            out = fn(*a, **kw)
            walk_err.append(abs(out.sum() - 1.0))
            return out
        return wrapper

    monkeypatch.setattr(linkpred, "pagerank", checked(linkpred.pagerank))
    monkeypatch.setattr(linkpred, "rwr", checked(linkpred.rwr))
    cfg = ExperimentConfig(scenario="sparse", drop_rate=0.7, seeds=(0,))
    x = row_normalize(cora.features)
    split, labels = seed_setup(cfg, cora, 0)
    k = labels.class_count
    base = gcn.train(cora.graph, x, labels.manual_labels, split.train, replace(cfg.train, seed=0), k)
    pert = perturb(cora.graph, "sparse", 0, drop_rate=0.7)
    probs = gcn.forward(gcn.normalize_adjacency(pert.graph), x, base.params)
    detail, ok = "", True
    try:
        res = tratopo_infer(pert.graph, gcn.GcnClassifier(x, k, cfg.train, params=base.params), probs,
                            probs.argmax(axis=1), warmup_matrix(base.probs[split.train], labels.manual_labels[split.train], k),
                            InferenceConfig(variant="combine", seed=0), strict=True)
        detail = f"{len(res.trace)} transitions checked, {len(walk_err)} walk maps, max walk sum err {max(walk_err, default=0):.1e}"
    except AssertionError as exc:
        ok, detail = False, str(exc)
    ok = ok and len(walk_err) > 0 and max(walk_err) <= 1e-6
    verdict(3, "stochastic-object invariants", ok, detail)
    assert ok


def test_c04_clean_training(cora, verdict):
    cfg = ExperimentConfig(seeds=(0,))
    split, labels = seed_setup(cfg, cora, 0)
    t0 = time.perf_counter()
    res = gcn.train(cora.graph, row_normalize(cora.features), labels.manual_labels, split.train, cfg.train,
                    labels.class_count)
    secs = time.perf_counter() - t0
    acc = gcn.accuracy(res.auto_labels, labels.true_labels, split.test)
    ok = acc >= 0.75 and cfg.train.epochs <= 200 and secs <= 120
    verdict(4, "clean training", ok, f"test accuracy {acc:.4f} after {cfg.train.epochs} epochs, {secs:.1f}s")
    assert ok


def _acc(report, variant):
    return report.summary(variant)["acc_mean"]


def test_c05_random_perturbation_delta(runs, verdict):
    report = runs.get("random", ("original", "rwr", "pgr", "combine"))
    secs = runs.seconds[("random", ("original", "rwr", "pgr", "combine"), 3)]
    delta = _acc(report, "combine") - _acc(report, "original")
    ok = delta >= 0.10
    verdict(5, "robustness delta (random)", ok,
            f"combine {_acc(report, 'combine'):.4f} - original {_acc(report, 'original'):.4f} = {delta:+.4f} "
            f"(need >= +0.10), sweep {secs:.0f}s")
    assert ok


def test_c06_sparse_combine_vs_lindt(runs, verdict):
    report = runs.get("sparse")
    delta = _acc(report, "combine") - _acc(report, "lindt")
    ok = delta >= -0.005
    verdict(6, "sparse-graph advantage", ok,
            f"combine {_acc(report, 'combine'):.4f} - lindt {_acc(report, 'lindt'):.4f} = {delta:+.4f}")
    assert ok


def test_c07_ablation_coherence(runs, verdict):
    worst, lines, complete = np.inf, [], True
    for scenario in ("random", "sparse", "attack"):
        report = runs.get(scenario) if scenario == "sparse" else runs.get(scenario, ("original", "rwr", "pgr", "combine"))
        base = _acc(report, "original")
        for v in ("rwr", "pgr", "combine"):
            row = report.summary(v)
            complete &= row["n_failed"] == 0 and row["n_seeds"] == len(SEEDS)
            worst = min(worst, row["acc_mean"] - base)
            lines.append(f"{scenario}/{v} {row['acc_mean'] - base:+.4f}")
    ok = complete and worst >= -0.01
    verdict(7, "ablation coherence", ok, f"worst gap vs original {worst:+.4f}; " + ", ".join(lines))
    assert ok


def test_c08_threshold_sweep(runs, verdict):
    accs = {}
    for m in (3, 4, 5, 7):
        report = runs.get("sparse") if m == 3 else runs.get("sparse", ("combine",), m)
        accs[m] = _acc(report, "combine")
    spread = max(accs.values()) - min(accs.values())
    ok = spread <= 0.01
    verdict(8, "threshold sweep", ok, f"spread {spread:.4f}; " + ", ".join(f"m={m}: {a:.4f}" for m, a in accs.items()))
    assert ok


def test_c09_determinism_across_thread_counts(cora, tmp_path, verdict, monkeypatch):
    base = ExperimentConfig(scenario="sparse", drop_rate=0.7, seeds=(0, 1), variants=("original", "combine"))
    outputs = []
    for i, (threads, inner, env) in enumerate([(1, 1, "1"), (2, 3, "4"), (1, 1, "1")]):
        monkeypatch.setenv("TRATOPO_THREADS", env)
        cfg = replace(base, threads=threads, inference=replace(base.inference, threads=inner))
        report = run_experiment(cfg, cora)
        files = [emit_report(report, tmp_path / f"r{i}.{ext}") for ext in ("csv", "json", "md")]
        outputs.append([f.read_bytes() for f in files])
    ok = outputs[0] == outputs[1] == outputs[2]
    verdict(9, "determinism", ok, "csv/json/markdown byte-identical across 3 runs with 1/2 seed threads and 1/3 link threads"
            if ok else "reports differ")
    assert ok


def test_c10_sampler_correctness(verdict):
    freq = mc_freq([1, 1, 2], 3)
    err = max(abs(freq[1] - 2 / 3), abs(freq[2] - 1 / 3))
    bal = mc_freq([0, 1, 0, 1], 2, seed=1)
    err = max(err, abs(bal[0] - 0.5))
    rng = np.random.default_rng(99)
    maj_ok = deg_ok = True
    for _ in range(1000):
        m = int(rng.integers(1, 8))
        labels = rng.integers(0, 5, m).tolist()
        degrees = rng.integers(1, 6, m).tolist()
        g, lab = neighborhood(labels, degrees)
        counts, totals = {}, {}
        for c, d in zip(labels, degrees):
            counts[c] = counts.get(c, 0) + 1
            totals[c] = totals.get(c, 0) + d
        maj_ok &= sample_majority(g, 0, lab) == min(c for c in counts if counts[c] == max(counts.values()))
        deg_ok &= sample_degree_weighted(g, 0, lab) == min(c for c in totals if totals[c] == max(totals.values()))
    ok = err <= 0.01 and maj_ok and deg_ok
    verdict(10, "sampler correctness", ok, f"max frequency error {err:.4f} over 1e5 draws; majority "
            f"{'ok' if maj_ok else 'MISMATCH'}, degree-weighted {'ok' if deg_ok else 'MISMATCH'} on 1000 neighbourhoods")
    assert ok
