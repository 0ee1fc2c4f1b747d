"""Context subgraph sampling and masking."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .graph import bfs_shortest_path

SHORTEST_PATH = "shortest_path"
RANDOM_WALK = "random_walk"
NODE_CONTEXT = "node_context"
STRATEGIES = (SHORTEST_PATH, RANDOM_WALK, NODE_CONTEXT)


@dataclass(frozen=True)
class ContextSubgraph:
    """A small set of distinct nodes; the order is only an indexing convenience."""

    nodes: tuple
    anchor: tuple | None = None
    mask_pos: int | None = None
    strategy: str = NODE_CONTEXT

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if self.anchor is not None:
            object.__setattr__(self, "anchor", (int(self.anchor[0]), int(self.anchor[1])))

    def __len__(self):
        return len(self.nodes)

    def anchor_positions(self):
        if self.anchor is None:
            raise ValueError("context has no anchor pair")
        u, v = self.anchor
        try:
            return self.nodes.index(u), self.nodes.index(v)
        except ValueError:
            raise ValueError(f"anchors {self.anchor} are not both in context {self.nodes}") from None

    def permuted(self, perm):
        """Reorder nodes so that new position ``i`` holds old position ``perm[i]``."""
        perm = list(perm)
        mask_pos = None if self.mask_pos is None else perm.index(self.mask_pos)
        return replace(self, nodes=tuple(self.nodes[p] for p in perm), mask_pos=mask_pos)

    def to_json(self):
        return json.dumps({"nodes": list(self.nodes),
                           "anchor": None if self.anchor is None else list(self.anchor),
                           "strategy": self.strategy, "mask_pos": self.mask_pos},
                          sort_keys=True)

    @classmethod
    def from_json(cls, line):
        obj = json.loads(line)
        anchor = obj.get("anchor")
        return cls(nodes=tuple(obj["nodes"]), anchor=None if anchor is None else tuple(anchor),
                   mask_pos=obj.get("mask_pos"), strategy=obj.get("strategy", NODE_CONTEXT))


def _dedup(seq):
    return tuple(dict.fromkeys(int(x) for x in seq))


def validate_context(ctx, num_nodes, max_size=None, mask_id=None):
    """Raise ``ValueError`` if ``ctx`` breaks the context invariants."""
    if not ctx.nodes:
        raise ValueError("empty context")
    if max_size is not None and len(ctx.nodes) > max_size:
        raise ValueError(f"context has {len(ctx.nodes)} nodes > {max_size}")
    if len(set(ctx.nodes)) != len(ctx.nodes):
        raise ValueError(f"duplicate nodes in context {ctx.nodes}")
    limit = num_nodes + (1 if mask_id is not None else 0)
    if any(not 0 <= n < limit for n in ctx.nodes):
        raise ValueError(f"invalid node id in context {ctx.nodes}")
    if ctx.anchor is not None:
        ctx.anchor_positions()
        if ctx.mask_pos is not None and ctx.nodes[ctx.mask_pos] in ctx.anchor:
            raise ValueError("mask position falls on an anchor")


def pair_context_shortest(g, u, v, max_size=6, skip_direct=False):
    """Context made of one shortest ``u``-``v`` path, or ``None``.

    ``skip_direct`` ignores the direct ``u``-``v`` link so that a training
    pair's own edge cannot serve as its context.
    """
    if max_size < 2:
        raise ValueError("max_size must be >= 2")
    path = bfs_shortest_path(g, u, v, max_len=max_size - 1,
                             skip_edge=(u, v) if skip_direct else None)
    if path is None:
        return None
    return ContextSubgraph(nodes=_dedup(path), anchor=(u, v), strategy=SHORTEST_PATH)


def pair_context_random(g, u, v, max_hops=5, rng=None, retries=20, skip_direct=False):
    """Context from a uniform random walk ``u -> v`` of at most ``max_hops`` steps.

    The walk is accepted the first time it reaches ``v``. After ``retries``
    misses it falls back to :func:`pair_context_shortest`.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    for _ in range(retries):
        walk = [u]
        cur = u
        for _ in range(max_hops):
            nbrs = g.neighbors(cur)
            if skip_direct and cur == u:
                nbrs = nbrs[nbrs != v]
            if len(nbrs) == 0:
                break
            cur = int(nbrs[rng.integers(len(nbrs))])
            walk.append(cur)
            if cur == v:
                return ContextSubgraph(nodes=_dedup(walk), anchor=(u, v), strategy=RANDOM_WALK)
    return pair_context_shortest(g, u, v, max_size=max_hops + 1, skip_direct=skip_direct)


def node_context(g, v, max_size=6, rng=None):
    """Deduplicated uniform random walk of ``max_size - 1`` steps from ``v``."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    walk = [v]
    cur = v
    for _ in range(max_size - 1):
        nbrs = g.neighbors(cur)
        if len(nbrs) == 0:
            break
        cur = int(nbrs[rng.integers(len(nbrs))])
        walk.append(cur)
    return ContextSubgraph(nodes=_dedup(walk), strategy=NODE_CONTEXT)


def walk_union_context(g, u, v, max_size=6, rng=None):
    """Union of a short walk from each endpoint; used when no path joins them."""
    rng = np.random.default_rng() if rng is None else rng
    a = node_context(g, u, max_size - max_size // 2, rng).nodes
    b = node_context(g, v, max_size // 2, rng).nodes
    return ContextSubgraph(nodes=_dedup(a + b), anchor=(u, v), strategy=RANDOM_WALK)


def pair_context(g, u, v, strategy=RANDOM_WALK, max_size=6, rng=None, skip_direct=False):
    """Context for a node pair, always containing both anchors."""
    rng = np.random.default_rng() if rng is None else rng
    if strategy == SHORTEST_PATH:
        ctx = pair_context_shortest(g, u, v, max_size, skip_direct=skip_direct)
    elif strategy == RANDOM_WALK:
        ctx = pair_context_random(g, u, v, max_size - 1, rng, skip_direct=skip_direct)
    else:
        raise ValueError(f"unknown pair strategy {strategy!r}")
    if ctx is None:
        ctx = walk_union_context(g, u, v, max_size, rng)
    return ctx


def mask_random_node(ctx, rng=None, mask_id=None):
    """Replace one uniformly chosen non-anchor slot by ``mask_id``.

    Returns ``(masked_ctx, target)`` where ``target`` is the hidden node id.
    """
    if mask_id is None:
        raise ValueError("mask_id is required")
    rng = np.random.default_rng() if rng is None else rng
    candidates = list(range(len(ctx.nodes)))
    if ctx.anchor is not None:
        candidates = [i for i in candidates if ctx.nodes[i] not in ctx.anchor]
        if not candidates:
            raise ValueError("every context node is an anchor; nothing to mask")
    pos = candidates[int(rng.integers(len(candidates)))]
    nodes = list(ctx.nodes)
    target = nodes[pos]
    nodes[pos] = mask_id
    return replace(ctx, nodes=tuple(nodes), mask_pos=pos), target


def sample_pretraining_contexts(g, contexts_per_node=1, max_size=6, rng=None):
    rng = np.random.default_rng() if rng is None else rng
    return [node_context(g, v, max_size, rng)
            for v in range(g.num_nodes) for _ in range(contexts_per_node)]


def estimate_contexts_per_node(num_edges, num_nodes, train_ratio):
    """Contexts per node needed to cover the training edges: ``ratio * |E| / N``."""
    if num_nodes <= 0:
        raise ValueError("num_nodes must be positive")
    return train_ratio * num_edges / num_nodes


def dump_contexts(path, contexts):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ctx in contexts:
            fh.write(ctx.to_json() + "\n")


def load_contexts(path):
    with open(path, encoding="utf-8") as fh:
        return [ContextSubgraph.from_json(line) for line in fh if line.strip()]
