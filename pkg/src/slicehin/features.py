"""Global node features: uniform random walks + skip-gram with negative sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import GraphFormatError


@dataclass
class EmbeddingTable:
    """``(N + 1) x d`` node vectors; the last row is reserved for MASK."""

    matrix: np.ndarray
    loss_history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("embedding matrix has non-finite entries")

    @property
    def num_nodes(self):
        return self.matrix.shape[0] - 1

    @property
    def dim(self):
        return self.matrix.shape[1]

    @property
    def mask_id(self):
        return self.num_nodes


@dataclass
class WalkCorpus:
    walks: list
    window: int = 10
    negatives_per_target: int = 5


def generate_walks(g, walks_per_node=10, walk_length=80, rng=None):
    """``walks_per_node`` uniform walks of ``walk_length`` nodes from every node.

    Walks stop early at nodes without neighbours.
    """
    if walk_length < 1:
        raise ValueError("walk_length must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    starts = np.tile(np.arange(g.num_nodes, dtype=np.int64), walks_per_node)
    uniforms = rng.random((len(starts), max(walk_length - 1, 0)))
    raw = kernels.uniform_walks(g.indptr, g.indices, starts, walk_length, uniforms)
    return WalkCorpus(walks=[row[row >= 0].tolist() for row in np.asarray(raw)])


def _pairs(walks, window):
    centers, contexts = [], []
    for walk in walks:
        n = len(walk)
        for i, c in enumerate(walk):
            for j in range(max(0, i - window), min(n, i + window + 1)):
                if j != i:
                    centers.append(c)
                    contexts.append(walk[j])
    return np.asarray(centers, dtype=np.int64), np.asarray(contexts, dtype=np.int64)


def _softplus(x):
    return np.logaddexp(0.0, x)


def sgns_loss(w_in, w_out, centers, contexts, negatives):
    """Total negative-sampling loss without updating anything."""
    pos = np.einsum("ij,ij->i", w_in[centers], w_out[contexts])
    neg = np.einsum("ij,ikj->ik", w_in[centers], w_out[negatives])
    keep = negatives != contexts[:, None]
    return float(_softplus(-pos).sum() + (_softplus(neg) * keep).sum())


def train_skipgram(corpus, num_nodes, d=128, epochs=1, lr=0.025, rng=None, block_size=65536):
    """Train skip-gram vectors with plain SGD on the negative-sampling objective.

    Negatives are drawn from the corpus unigram distribution raised to 0.75.
    ``loss_history`` on the result holds the mean per-pair loss before
    training followed by one entry per epoch.
    """
    if not corpus.walks:
        raise ValueError("empty walk corpus")
    rng = np.random.default_rng() if rng is None else rng
    w_in = rng.uniform(-0.5 / d, 0.5 / d, size=(num_nodes, d))
    w_out = np.zeros((num_nodes, d))
    centers, contexts = _pairs(corpus.walks, corpus.window)
    k = corpus.negatives_per_target

    counts = np.bincount(np.concatenate([np.asarray(w, dtype=np.int64) for w in corpus.walks]),
                         minlength=num_nodes).astype(np.float64)
    probs = counts ** 0.75
    probs /= probs.sum()
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0

    def draw(n):
        return np.searchsorted(cdf, rng.random((n, k)), side="right").astype(np.int64)

    history = []
    if len(centers):
        probe = rng.permutation(len(centers))[:block_size]
        history.append(sgns_loss(w_in, w_out, centers[probe], contexts[probe], draw(len(probe)))
                       / len(probe))
    for epoch in range(epochs):
        order = rng.permutation(len(centers))
        total = 0.0
        for start in range(0, len(order), block_size):
            idx = order[start:start + block_size]
            total += kernels.sgns_block(w_in, w_out, centers[idx], contexts[idx], draw(len(idx)), lr)
            if not math.isfinite(total):
                raise FloatingPointError(
                    f"skip-gram loss became non-finite in epoch {epoch + 1} (lr={lr}, d={d})")
        history.append(total / max(len(order), 1))

    table = np.vstack([w_in, np.zeros((1, d))])
    return EmbeddingTable(table, loss_history=history)


def save_embeddings(path, table, node_names):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v, name in enumerate(node_names):
            fh.write(name + "\t" + "\t".join(repr(float(x)) for x in table.matrix[v]) + "\n")


def load_embeddings(path, node_names, dim=None):
    """Read ``token<TAB>v1..vd`` rows; every node must be covered, widths must agree."""
    index = {name: i for i, name in enumerate(node_names)}
    rows = {}
    width = dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            tok, *vals = line.split("\t")
            if width is None:
                width = len(vals)
            if len(vals) != width:
                raise GraphFormatError(f"{path}:{lineno}: expected {width} values, got {len(vals)}")
            if tok not in index:
                raise GraphFormatError(f"{path}:{lineno}: unknown node {tok!r}")
            try:
                rows[index[tok]] = [float(x) for x in vals]
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric value") from None
    missing = [node_names[i] for i in range(len(node_names)) if i not in rows]
    if missing:
        raise GraphFormatError(f"{path}: missing embeddings for {missing[:5]}")
    mat = np.zeros((len(node_names) + 1, width or 0))
    for i, vec in rows.items():
        mat[i] = vec
    return EmbeddingTable(mat)
