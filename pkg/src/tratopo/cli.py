"""Command-line entry point: ``tratopo <load|train|perturb|infer|eval|experiment>``.

Every subcommand reads an optional JSON/TOML config (same keys as
``ExperimentConfig``) and lets flags override individual fields.

Exit codes:
    0  success
    1  unexpected failure
    2  usage or configuration error (bad flag, bad key, missing file)
    3  malformed dataset file
    4  numerical failure (non-finite loss or logits)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import gcn
from .experiment import (ExperimentConfig, emit_report, eval_population, load_dataset, render_report,
                         run_experiment, seed_setup)
from .graph import DatasetFormatError, SchemaError, edge_homophily_ratio, row_normalize
from .inference import default_threads, tratopo_infer, warmup_matrix, write_trace
from .perturb import load_manifest, perturb, replay

log = logging.getLogger("tratopo")

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _csv_list(cast):
    return lambda text: tuple(cast(v) for v in text.split(",") if v.strip())


# flag dest -> (section, key); section None means a top-level ExperimentConfig field
OVERRIDES = {
    "dataset": (None, "dataset"), "data_dir": (None, "data_dir"), "content": (None, "content_path"),
    "cites": (None, "cites_path"), "split": (None, "split"), "noise_rate": (None, "noise_rate"),
    "scenario": (None, "scenario"), "rate": (None, "rate"), "drop_rate": (None, "drop_rate"),
    "budget": (None, "budget"), "target_fraction": (None, "target_fraction"),
    "variants": (None, "variants"), "seeds": (None, "seeds"), "threads": (None, "threads"),
    "epochs": ("train", "epochs"), "lr": ("train", "learning_rate"), "hidden": ("train", "hidden_units"),
    "transitions": ("inference", "transitions"), "warmup_steps": ("inference", "warmup_steps"),
    "retrain_interval": ("inference", "retrain_interval"), "sampler": ("inference", "sampler"),
    "min_degree": ("linkpred", "min_degree"), "top_k": ("linkpred", "top_k"), "l_max": ("linkpred", "l_max"),
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config")
    g.add_argument("--config", help="JSON or TOML file with ExperimentConfig fields")
    g.add_argument("--dataset")
    g.add_argument("--data-dir")
    g.add_argument("--content", help="path to a .content file")
    g.add_argument("--cites", help="path to a .cites file")
    g.add_argument("--split", type=_csv_list(float), help="train,val,test ratios")
    g.add_argument("--noise-rate", type=float)
    g.add_argument("--scenario", choices=("clean", "random", "sparse", "attack"))
    g.add_argument("--rate", type=float, help="random scenario: inserted edges per existing edge")
    g.add_argument("--drop-rate", type=float, help="sparse scenario: fraction of edges removed")
    g.add_argument("--budget", type=int, help="attack scenario: edges per target")
    g.add_argument("--target-fraction", type=float)
    g.add_argument("--variants", type=_csv_list(str), help="comma list of original,lindt,rwr,pgr,combine")
    g.add_argument("--seeds", type=_csv_list(int), help="comma list of integer seeds")
    g.add_argument("--threads", type=int, help="worker threads (default: $TRATOPO_THREADS or 1)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--hidden", type=int)
    g.add_argument("--transitions", type=int)
    g.add_argument("--warmup-steps", type=int)
    g.add_argument("--retrain-interval", type=int)
    g.add_argument("--sampler", choices=("uniform", "majority", "degree_weighted"))
    g.add_argument("--min-degree", type=int)
    g.add_argument("--top-k", type=int)
    g.add_argument("--l-max", type=int)


def _read_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # python < 3.11
                import tomli as tomllib
            obj = tomllib.loads(text)
        else:
            obj = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "seeds" not in obj:
        raise ConfigError(f"{path}: 'seeds' is required in a config file")
    if not (obj.get("data_dir") or (obj.get("content_path") and obj.get("cites_path"))):
        raise ConfigError(f"{path}: give 'data_dir' or both 'content_path' and 'cites_path'")
    return obj


def build_config(args) -> ExperimentConfig:
    obj = _read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, (section, key) in OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            obj[key] = value
        elif section == "linkpred":
            obj.setdefault("inference", {}).setdefault("linkpred", {})[key] = value
        else:
            obj.setdefault(section, {})[key] = value
    if getattr(args, "timing", False):
        obj["timing"] = True
    try:
        return ExperimentConfig.from_dict(obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _features(cfg, ds):
    return row_normalize(ds.features) if cfg.normalize_features else ds.features


def _seed(args, cfg) -> int:
    return cfg.seeds[0] if args.seed is None else args.seed


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_load(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(cfg)
    g = ds.graph
    _emit({"nodes": g.node_count, "edges": g.edge_count, "features": ds.features.shape[1],
           "classes": ds.labels.class_count, "mean_degree": float(g.degrees.mean()),
           "isolated": int((g.degrees == 0).sum()), "dropped_lines": ds.dropped,
           "edge_homophily": edge_homophily_ratio(g, ds.labels.true_labels) if g.edge_count else None,
           "fingerprint": g.fingerprint}, args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(cfg)
    seed = _seed(args, cfg)
    split, labels = seed_setup(cfg, ds, seed)
    tcfg = replace(cfg.train, seed=seed)
    res = gcn.train(ds.graph, _features(cfg, ds), labels.manual_labels, split.train, tcfg, labels.class_count)
    gcn.save_checkpoint(args.out, res.params, seed, tcfg.epochs)
    if args.probs:
        gcn.export_distribution_csv(args.probs, res.probs, ds.node_ids)
    _emit({"seed": seed, "checkpoint": str(args.out), "final_loss": res.losses[-1] if res.losses else None,
           "test_accuracy": gcn.accuracy(res.auto_labels, labels.true_labels, split.test),
           "test_entropy": gcn.avg_normalized_entropy(res.probs, split.test)}, None)
    return EXIT_OK


def cmd_perturb(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(cfg)
    seed = _seed(args, cfg)
    split, labels = seed_setup(cfg, ds, seed)
    res = perturb(ds.graph, cfg.scenario, seed, labels=labels, test_nodes=split.test, rate=cfg.rate,
                  drop_rate=cfg.drop_rate, budget=cfg.budget, target_fraction=cfg.target_fraction)
    res.save(args.out)
    _emit({"scenario": res.scenario, "seed": seed, "added": len(res.added), "removed": len(res.removed),
           "impacted": len(res.impacted), "manifest": str(args.out)}, None)
    return EXIT_OK


def _load_step_inputs(args):
    cfg = build_config(args)
    ds = load_dataset(cfg)
    params, meta = gcn.load_checkpoint(args.checkpoint)
    seed = meta["seed"] if args.seed is None else args.seed
    split, labels = seed_setup(cfg, ds, seed)
    pert = replay(ds.graph, load_manifest(args.manifest))
    return cfg, ds, params, seed, split, labels, pert


def cmd_infer(args) -> int:
    cfg, ds, params, seed, split, labels, pert = _load_step_inputs(args)
    x = _features(cfg, ds)
    k = labels.class_count
    base = gcn.forward(gcn.normalize_adjacency(ds.graph), x, params)
    warm = warmup_matrix(base[split.train], labels.manual_labels[split.train], k)
    probs = gcn.forward(gcn.normalize_adjacency(pert.graph), x, params)
    tcfg = replace(cfg.train, seed=seed)
    icfg = replace(cfg.inference, variant=args.variant, seed=seed, threads=cfg.threads or default_threads())
    res = tratopo_infer(pert.graph, gcn.GcnClassifier(x, k, tcfg, params=params), probs, probs.argmax(axis=1),
                        warm, icfg, truth=labels.true_labels,
                        eval_nodes=eval_population(pert.scenario, pert.impacted, split.test), strict=args.strict)
    np.savez(args.out, labels=res.labels, probs=res.probs, auto_labels=res.auto_labels,
             added_edges=np.asarray(sorted(set(map(tuple, res.graph.edges().tolist()))
                                           - set(map(tuple, pert.graph.edges().tolist()))), dtype=np.int64))
    if args.trace:
        write_trace(args.trace, res.trace)
    _emit({"variant": args.variant, "seed": seed, "transitions": len(res.trace),
           "edges_added": res.graph.edge_count - pert.graph.edge_count, "result": str(args.out)}, None)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg, ds, params, seed, split, labels, pert = _load_step_inputs(args)
    if args.result:
        with np.load(args.result) as data:
            pred, probs = data["labels"], data["probs"]
        variant = "inferred"
    else:
        probs = gcn.forward(gcn.normalize_adjacency(pert.graph), _features(cfg, ds), params)
        pred, variant = probs.argmax(axis=1), "original"
    nodes = eval_population(pert.scenario, pert.impacted, split.test)
    truth = labels.true_labels
    _emit({"variant": variant, "scenario": pert.scenario, "seed": seed, "n_eval": int(len(nodes)),
           "accuracy": gcn.accuracy(pred, truth, nodes), "entropy": gcn.avg_normalized_entropy(probs, nodes),
           "test_accuracy": gcn.accuracy(pred, truth, split.test),
           "test_entropy": gcn.avg_normalized_entropy(probs, split.test)}, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = build_config(args)
    report = run_experiment(cfg)
    if args.out:
        emit_report(report, args.out, args.format)
        log.info("report written to %s", args.out)
    else:
        sys.stdout.write(render_report(report, args.format or "markdown"))
    failed = sum(c.error is not None for c in report.cells)
    if failed:
        log.warning("%d of %d cells failed; see the json report for messages", failed, len(report.cells))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tratopo", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="load a dataset and print summary statistics")
    _add_config_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("train", help="train the GCN on the clean graph with noisy labels")
    _add_config_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--probs", help="also export the class distribution as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("perturb", help="perturb the graph and save a replayable manifest")
    _add_config_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="manifest path (.json)")
    p.set_defaults(func=cmd_perturb)

    for name, func, helptext in (("infer", cmd_infer, "run label transition on a perturbed graph"),
                                 ("eval", cmd_eval, "accuracy and entropy over impacted test nodes")):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        p.add_argument("--seed", type=int, help="defaults to the checkpoint's seed")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--manifest", required=True)
        p.set_defaults(func=func)
    infer_p, eval_p = sub.choices["infer"], sub.choices["eval"]
    infer_p.add_argument("--variant", default="combine", choices=("lindt", "rwr", "pgr", "combine"))
    infer_p.add_argument("--out", required=True, help="result path (.npz)")
    infer_p.add_argument("--trace", help="per-transition trace (JSON lines)")
    infer_p.add_argument("--strict", action="store_true", help="assert stochastic invariants every transition")
    eval_p.add_argument("--result", help="output of `infer`; omit to score the raw classifier")
    eval_p.add_argument("--out")

    p = sub.add_parser("experiment", help="full pipeline over variants and seeds")
    _add_config_flags(p)
    p.add_argument("--out", help="report path; format follows the suffix unless --format is given")
    p.add_argument("--format", choices=("csv", "json", "markdown"))
    p.add_argument("--timing", action="store_true", help="fill the seconds column (makes reports non-reproducible)")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DatasetFormatError, SchemaError) as exc:
        log.error("data format error: %s", exc)
        return EXIT_DATA
    except gcn.NumericError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (ConfigError, FileNotFoundError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except Exception:  # noqa: BLE001
        log.exception("unexpected failure")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
