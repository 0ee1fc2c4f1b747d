import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slicehin.context import (ContextSubgraph, dump_contexts, estimate_contexts_per_node,
                              load_contexts, mask_random_node, node_context, pair_context,
                              pair_context_random, pair_context_shortest,
                              sample_pretraining_contexts, validate_context)
from slicehin.graph import HeteroGraph, bfs_shortest_path

from conftest import path_graph, random_graph

TRIANGLE = HeteroGraph.build(3, [(0, 0, 1), (1, 0, 2), (0, 0, 2)])


def test_shortest_on_path():
    ctx = pair_context_shortest(path_graph(3), 0, 2, 6)
    assert ctx.nodes == (0, 1, 2) and ctx.anchor == (0, 2)


def test_disconnected_pair_has_no_context():
    g = HeteroGraph.build(4, [(0, 0, 1), (2, 0, 3)])
    assert pair_context_shortest(g, 0, 3, 6) is None
    assert pair_context_random(g, 0, 3, 5, np.random.default_rng(0)) is None
    ctx = pair_context(g, 0, 3, rng=np.random.default_rng(0))
    assert set(ctx.anchor) <= set(ctx.nodes) and len(ctx) <= 6


def test_shortest_size_matches_distance_oracle():
    rng = np.random.default_rng(5)
    g = random_graph(20, 0.15, rng)
    # Independent distances by repeated frontier expansion.
    adj = [set(g.neighbors(v).tolist()) for v in range(20)]
    for u, v in itertools.combinations(range(20), 2):
        dist, seen, frontier = 0, {u}, {u}
        while v not in seen and frontier:
            frontier = {y for x in frontier for y in adj[x]} - seen
            seen |= frontier
            dist += 1
        if v not in seen or dist > 5:
            continue
        ctx = pair_context_shortest(g, u, v, 6)
        assert len(ctx) == dist + 1


def test_star_pair_only_walk():
    star = HeteroGraph.build(3, [(2, 0, 0), (2, 0, 1)])  # center 2, leaves 0 and 1
    for seed in range(20):
        ctx = pair_context_random(star, 0, 1, max_hops=2, rng=np.random.default_rng(seed))
        assert set(ctx.nodes) == {0, 1, 2}


def test_random_context_is_seeded(rng):
    g = random_graph(30, 0.15, rng)
    a = pair_context(g, 0, 7, rng=np.random.default_rng(11))
    b = pair_context(g, 0, 7, rng=np.random.default_rng(11))
    assert a == b


def _triangle_size_distribution(max_hops=2):
    # Exact law of the accepted walk: enumerate every walk, condition on hitting v.
    hit = {}
    for steps in itertools.product(range(2), repeat=max_hops):
        walk, cur, p = [0], 0, Fraction(1)
        for s in steps:
            nbrs = sorted({0, 1, 2} - {cur})
            cur = nbrs[s]
            p /= len(nbrs)
            walk.append(cur)
            if cur == 1:
                break
        if cur == 1:
            key = tuple(walk)
            hit[key] = p  # repeated prefixes collapse onto one walk
    total = sum(hit.values())
    sizes = {}
    for walk, p in hit.items():
        sizes[len(set(walk))] = sizes.get(len(set(walk)), 0) + p / total
    return sizes


def test_triangle_walks():
    law = _triangle_size_distribution()
    assert set(law) == {2, 3}
    rng = np.random.default_rng(0)
    sizes = []
    for _ in range(1000):
        ctx = pair_context(TRIANGLE, 0, 1, max_size=3, rng=rng)
        assert {0, 1} <= set(ctx.nodes)
        sizes.append(len(ctx))
    assert set(sizes) == {2, 3}
    freq2 = sizes.count(2) / 1000
    assert abs(freq2 - float(law[2])) < 0.05


def test_skip_direct_avoids_own_edge():
    rng = np.random.default_rng(0)
    for _ in range(200):
        ctx = pair_context(TRIANGLE, 0, 1, max_size=3, rng=rng, skip_direct=True)
        assert ctx.nodes == (0, 2, 1)


def test_isolated_node_context():
    g = HeteroGraph.build(3, [(0, 0, 1)])
    assert node_context(g, 2, 6, np.random.default_rng(0)).nodes == (2,)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6), max_size=st.integers(2, 6))
def test_context_invariants(seed, max_size):
    rng = np.random.default_rng(seed)
    g = random_graph(15, 0.2, rng)
    u, v = map(int, rng.choice(15, size=2, replace=False))
    for strategy in ("shortest_path", "random_walk"):
        ctx = pair_context(g, u, v, strategy, max_size, rng)
        validate_context(ctx, g.num_nodes, max_size)
        assert ctx.anchor == (u, v)
    validate_context(node_context(g, u, max_size, rng), g.num_nodes, max_size)


def test_random_contexts_are_connected_walks(rng):
    g = random_graph(25, 0.15, rng)
    for _ in range(100):
        u, v = map(int, rng.choice(25, size=2, replace=False))
        ctx = pair_context_random(g, u, v, 5, rng)
        if ctx is None:
            assert bfs_shortest_path(g, u, v, max_len=5) is None
            continue
        # every node must be reachable from u inside the context
        inside = set(ctx.nodes)
        seen, stack = {u}, [u]
        while stack:
            x = stack.pop()
            for y in g.neighbors(x):
                if int(y) in inside and int(y) not in seen:
                    seen.add(int(y))
                    stack.append(int(y))
        assert seen == inside


def test_mask_three_node_context():
    ctx = ContextSubgraph((0, 1, 2))
    options = {((9, 1, 2), 0), ((0, 9, 2), 1), ((0, 1, 9), 2)}
    for seed in range(10):
        masked, target = mask_random_node(ctx, np.random.default_rng(seed), 9)
        assert (masked.nodes, target) in options
        assert masked.nodes[masked.mask_pos] == 9
        again, t2 = mask_random_node(ctx, np.random.default_rng(seed), 9)
        assert (again, t2) == (masked, target)


def test_mask_singleton():
    masked, target = mask_random_node(ContextSubgraph((4,)), np.random.default_rng(0), 9)
    assert masked.nodes == (9,) and target == 4


def test_mask_uniformity():
    ctx = ContextSubgraph((0, 1, 2, 3, 4))
    rng = np.random.default_rng(0)
    counts = np.bincount([mask_random_node(ctx, rng, 5)[0].mask_pos for _ in range(10_000)],
                         minlength=5)
    assert np.all(np.abs(counts / 10_000 - 0.2) <= 0.02)


def test_mask_skips_anchors():
    ctx = ContextSubgraph((0, 1, 2, 3), anchor=(0, 3))
    rng = np.random.default_rng(0)
    targets = {mask_random_node(ctx, rng, 9)[1] for _ in range(100)}
    assert targets == {1, 2}
    with pytest.raises(ValueError):
        mask_random_node(ContextSubgraph((0, 1), anchor=(0, 1)), rng, 9)


@pytest.mark.parametrize("args,expected,tol", [
    ((835330, 2000, 0.6), 250.60, 0.0),
    ((100, 100, 1.0), 1.0, 0.0),
    ((129811, 10099, 0.6), 7.71, 0.005),
])
def test_estimate_contexts_per_node(args, expected, tol):
    value = estimate_contexts_per_node(*args)
    assert round(value, 2) == pytest.approx(expected, abs=tol)


def test_estimate_rejects_empty_graph():
    with pytest.raises(ValueError):
        estimate_contexts_per_node(10, 0, 0.6)


def test_jsonl_round_trip(tmp_path, rng):
    g = random_graph(20, 0.2, rng)
    ctxs = sample_pretraining_contexts(g, 2, 6, rng)
    ctxs.append(mask_random_node(pair_context(g, 0, 5, rng=rng), rng, 20)[0])
    dump_contexts(tmp_path / "c.jsonl", ctxs)
    assert load_contexts(tmp_path / "c.jsonl") == ctxs


def test_permuted_tracks_mask():
    ctx = ContextSubgraph((3, 4, 9), mask_pos=2)
    p = ctx.permuted([2, 0, 1])
    assert p.nodes == (9, 3, 4) and p.mask_pos == 0
