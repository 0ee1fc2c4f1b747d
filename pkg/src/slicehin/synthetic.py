"""Small synthetic heterogeneous graphs with planted structure."""
from __future__ import annotations

import itertools

import numpy as np

from .graph import HeteroGraph


def planted_two_block(n=200, width=3, p_near=0.9, p_far=0.003, p_out=0.002, rng=None):
    """Two equal communities with local structure inside each.

    Inside a block nodes sit on a ring; pairs within ``width`` ring steps link
    with probability ``p_near``, other same-block pairs with ``p_far``, and
    cross-block pairs with ``p_out``. Two node types ('a', 'b') alternate and
    relations are named after the endpoint types. Returns ``(graph, block)``.
    """
    rng = np.random.default_rng() if rng is None else rng
    half = n // 2
    block = (np.arange(n) >= half).astype(np.int64)
    node_type = np.arange(n) % 2
    rel_of = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 2}
    edges = []
    for u, v in itertools.combinations(range(n), 2):
        if block[u] != block[v]:
            p = p_out
        else:
            gap = abs(u - v)
            p = p_near if min(gap, half - gap) <= width else p_far
        if rng.random() < p:
            edges.append((u, rel_of[(node_type[u], node_type[v])], v))
    g = HeteroGraph.build(n, edges, node_type=node_type, node_names=[f"n{i}" for i in range(n)],
                          type_names=["a", "b"], relation_names=["a-a", "a-b", "b-b"])
    return g, block


def academic_graph(n_authors=40, n_papers=60, n_venues=4, n_topics=6, authors_per_paper=(2, 3),
                   n_groups=8, rng=None):
    """Authors (A), papers (P), venues (C) and topics (T).

    Papers draw their authors from one research group; two authors are linked
    by ``coauthor`` exactly when they share a paper, so shared papers are the
    only systematic author-author connection. Venues and topics are assigned
    uniformly at random, independent of groups.
    """
    rng = np.random.default_rng() if rng is None else rng
    names, types = [], []

    def add(prefix, t, count):
        start = len(names)
        names.extend(f"{prefix}{i}" for i in range(count))
        types.extend([t] * count)
        return list(range(start, start + count))

    authors = add("a", 0, n_authors)
    papers = add("p", 1, n_papers)
    venues = add("c", 2, n_venues)
    topics = add("t", 3, n_topics)
    groups = np.array_split(np.array(authors), n_groups)
    WRITES, AT, ON, CO = 0, 1, 2, 3
    edges, co = [], set()
    for i, p in enumerate(papers):
        group = groups[i % n_groups]
        k = int(rng.integers(authors_per_paper[0], authors_per_paper[1] + 1))
        team = sorted(int(a) for a in rng.choice(group, size=min(k, len(group)), replace=False))
        edges.extend((a, WRITES, p) for a in team)
        edges.append((p, AT, venues[int(rng.integers(n_venues))]))
        edges.append((p, ON, topics[int(rng.integers(n_topics))]))
        co.update(itertools.combinations(team, 2))
    edges.extend((a, CO, b) for a, b in sorted(co))
    g = HeteroGraph.build(len(names), edges, node_type=np.array(types), node_names=names,
                          type_names=["A", "P", "C", "T"],
                          relation_names=["writes", "published_at", "has_topic", "coauthor"])
    return g


def toy_six():
    """Six typed nodes on a path: user-item-tag-item-user-tag."""
    types = [0, 1, 2, 1, 0, 2]
    edges = [(0, 0, 1), (1, 1, 2), (3, 1, 2), (4, 0, 3), (4, 2, 5)]
    return HeteroGraph.build(6, edges, node_type=np.array(types),
                             node_names=["u0", "i1", "t2", "i3", "u4", "t5"],
                             type_names=["U", "I", "T"], relation_names=["buys", "tagged", "likes"])
