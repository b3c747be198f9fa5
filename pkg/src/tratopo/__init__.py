"""Label transition with topology-aware resampling for GCNs on perturbed graphs."""

from .gcn import GcnClassifier, TrainConfig, train
from .graph import Dataset, Graph, NodeLabelStore, load_citation_dataset, split_nodes
from .inference import InferenceConfig, tratopo_infer
from .linkpred import LinkPredConfig, pagerank, predict_links, rwr
from .paths import bfs_shells, build_candidates
from .perturb import PerturbationResult, perturb

__version__ = "0.1.0"

__all__ = [
    "Dataset", "GcnClassifier", "Graph", "InferenceConfig", "LinkPredConfig", "NodeLabelStore",
    "PerturbationResult", "TrainConfig", "bfs_shells", "build_candidates", "load_citation_dataset",
    "pagerank", "perturb", "predict_links", "rwr", "split_nodes", "train", "tratopo_infer",
]
