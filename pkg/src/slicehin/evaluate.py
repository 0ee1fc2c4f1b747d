"""Link-prediction scoring, metrics, and interpretation of association matrices."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .context import RANDOM_WALK, pair_context
from .model import forward, similarity


@dataclass
class PredictionRecord:
    u: int
    v: int
    label: int
    score: float
    best_context: object = None


@dataclass
class Metapath:
    type_sequence: tuple
    support: int
    mean_attention: float

    @property
    def name(self):
        seq = self.type_sequence
        return "".join(seq) if all(len(t) == 1 for t in seq) else "-".join(seq)


def context_similarity(model, ctx):
    """sigma(h_u . h_v) on the concatenated final rows of the two anchors."""
    res = forward(ctx, model)
    i, j = ctx.anchor_positions()
    return similarity(res.final[i], res.final[j])


def score_pair(model, g, u, v, n_contexts=10, rng=None, label=-1, strategy=RANDOM_WALK,
               max_size=6):
    """Best similarity over ``n_contexts`` sampled pair contexts."""
    if n_contexts < 1:
        raise ValueError("n_contexts must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    best, best_ctx = -1.0, None
    for _ in range(n_contexts):
        ctx = pair_context(g, u, v, strategy, max_size, rng, skip_direct=True)
        s = context_similarity(model, ctx)
        if s > best:
            best, best_ctx = s, ctx
    return PredictionRecord(u, v, int(label), best, best_ctx)


def pair_seed(seed, index):
    """Independent, order-free generator for the ``index``-th scored pair."""
    return np.random.default_rng([int(seed), int(index)])


def score_pairs(model, g, rows, n_contexts=10, seed=0, strategy=RANDOM_WALK, max_size=6,
                threads=1):
    """Score labelled ``(u, rel, v, label)`` rows; results do not depend on ``threads``."""
    def one(i):
        u, _, v, label = rows[i]
        return score_pair(model, g, u, v, n_contexts, pair_seed(seed, i), label, strategy, max_size)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(len(rows))))
    return [one(i) for i in range(len(rows))]


def _arrays(records):
    if not records:
        raise ValueError("no records")
    scores = np.array([r.score for r in records], dtype=np.float64)
    labels = np.array([r.label for r in records], dtype=np.int64)
    return scores, labels


def micro_f1(records, threshold):
    """Micro-averaged F1 over both classes with ``score >= threshold`` predicted positive.

    For single-label binary predictions this equals accuracy.
    """
    scores, labels = _arrays(records)
    pred = (scores >= threshold).astype(np.int64)
    tp = int(np.sum(pred == labels))
    fp = fn = len(labels) - tp
    return 2 * tp / (2 * tp + fp + fn)


def auroc(records):
    """Area under the ROC curve via the rank statistic, ties averaged."""
    scores, labels = _arrays(records)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both positive and negative records")
    ranks = rankdata(scores)
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def choose_threshold(records):
    """Threshold maximising micro-F1 over all distinct scores (ties: the lowest)."""
    scores, _ = _arrays(records)
    candidates = np.unique(scores)
    # One candidate above every score covers the all-negative prediction.
    candidates = np.append(candidates, np.nextafter(candidates[-1], np.inf))
    best_t, best_f = candidates[0], -1.0
    for t in candidates:
        f = micro_f1(records, t)
        if f > best_f:
            best_t, best_f = t, f
    return float(best_t)


def score_histogram(records, bins=20):
    """Per-label counts of scores over ``bins`` equal-width bins on [0, 1]."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    scores, labels = _arrays(records)
    edges = np.linspace(0.0, 1.0, bins + 1)
    rows = []
    for label in (0, 1):
        counts, _ = np.histogram(scores[labels == label], bins=edges)
        for b in range(bins):
            rows.append((float(edges[b]), float(edges[b + 1]), label, int(counts[b])))
    return rows


def export_score_distributions(records, path, bins=20):
    rows = score_histogram(records, bins)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "label", "count"])
        for lo, hi, label, count in rows:
            w.writerow([f"{lo:.6f}", f"{hi:.6f}", label, count])
    return rows


def extract_association(model, ctx, normalize=True):
    """Head-averaged association matrix per layer, min-max scaled when ``normalize``."""
    mats = forward(ctx, model).assoc.mean(axis=1)
    if not normalize:
        return mats
    out = np.empty_like(mats)
    for k, m in enumerate(mats):
        lo, hi = m.min(), m.max()
        out[k] = np.ones_like(m) if hi - lo == 0 else (m - lo) / (hi - lo)
    return out


def _greedy_anchor_path(g, ctx, A):
    nodes = ctx.nodes
    u_pos, v_pos = ctx.anchor_positions()
    anchors = {(min(ctx.anchor), max(ctx.anchor))}
    cur, path, seen = v_pos, [v_pos], {v_pos}
    for _ in range(len(nodes)):
        if cur == u_pos:
            return path
        cands = [j for j in range(len(nodes)) if j not in seen
                 and g.has_edge(nodes[cur], nodes[j])
                 and (min(nodes[cur], nodes[j]), max(nodes[cur], nodes[j])) not in anchors]
        if not cands:
            return None
        cur = max(cands, key=lambda j: (A[cur, j], -j))
        path.append(cur)
        seen.add(cur)
    return path if cur == u_pos else None


def mine_metapaths(model, g, relation, contexts, k=10):
    """Rank type sequences of attention-guided anchor-to-anchor paths.

    For each context the walk starts at the second anchor and repeatedly moves
    to the unvisited, graph-adjacent context node with the largest final-layer
    head-averaged association, until the first anchor is reached. The direct
    anchor link is never used. Returns ``(metapaths, skipped)``.
    """
    support = defaultdict(int)
    attn = defaultdict(float)
    skipped = 0
    for ctx in contexts:
        if ctx.anchor is None:
            raise ValueError("mine_metapaths needs anchored pair contexts")
        u, v = ctx.anchor
        if g.has_edge(u, v) and relation not in g.relations_between(u, v):
            raise ValueError(f"anchor pair ({u}, {v}) is linked but not by relation {relation}")
        A = forward(ctx, model).assoc[-1].mean(axis=0)
        path = _greedy_anchor_path(g, ctx, A)
        if path is None:
            skipped += 1
            continue
        seq = tuple(g.type_name(ctx.nodes[p]) for p in reversed(path))
        u_pos, v_pos = ctx.anchor_positions()
        support[seq] += 1
        attn[seq] += float(A[u_pos, v_pos])
    ranked = sorted(support, key=lambda s: (-support[s], -attn[s] / support[s], s))
    paths = [Metapath(s, support[s], attn[s] / support[s]) for s in ranked[:k]]
    return paths, skipped


def write_predictions(path, records, threshold):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "label", "score", "threshold_decision"])
        for r in records:
            w.writerow([r.u, r.v, r.label, repr(float(r.score)), int(r.score >= threshold)])


def write_metapaths(path, metapaths):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "type_sequence", "support", "mean_attention"])
        for i, m in enumerate(metapaths, 1):
            w.writerow([i, m.name, m.support, f"{m.mean_attention:.6f}"])
