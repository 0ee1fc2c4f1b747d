"""Context-aware heterogeneous graph embeddings for link prediction."""
__version__ = "0.1.0"

from .context import ContextSubgraph, pair_context, node_context, estimate_contexts_per_node
from .features import EmbeddingTable, generate_walks, train_skipgram
from .graph import EdgeSplit, HeteroGraph, load_edgelist, split_edges
from .model import SliceModel, forward
from .train import TrainConfig, SamplerConfig, run_pretraining, run_finetuning
from .evaluate import auroc, micro_f1, choose_threshold, mine_metapaths

__all__ = ["ContextSubgraph", "pair_context", "node_context", "estimate_contexts_per_node",
           "EmbeddingTable", "generate_walks", "train_skipgram", "EdgeSplit", "HeteroGraph",
           "load_edgelist", "split_edges", "SliceModel", "forward", "TrainConfig",
           "SamplerConfig", "run_pretraining", "run_finetuning", "auroc", "micro_f1",
           "choose_threshold", "mine_metapaths"]
