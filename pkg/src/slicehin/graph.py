"""Heterogeneous graph storage, TSV I/O, edge splits and negative sampling."""
from __future__ import annotations

import os
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TYPE = "node"


class GraphFormatError(ValueError):
    """Raised for malformed edge, type, id-map or split files."""


class NegativeSamplingError(RuntimeError):
    """Raised when no admissible corrupted endpoint can be found."""


@dataclass
class HeteroGraph:
    """Typed, undirected-traversal view of a heterogeneous edge list.

    Edges keep their direction and relation label, but adjacency lists each
    edge under both endpoints. Build instances with :meth:`build`.
    """

    num_nodes: int
    node_type: np.ndarray
    edges: list
    node_names: list
    type_names: list
    relation_names: list
    adjacency: list = field(repr=False, default_factory=list)
    indptr: np.ndarray = field(repr=False, default=None)
    indices: np.ndarray = field(repr=False, default=None)
    _pairs: set = field(repr=False, default_factory=set)

    @classmethod
    def build(cls, num_nodes, edges, node_type=None, node_names=None,
              type_names=None, relation_names=None):
        edges = [(int(s), int(r), int(d)) for s, r, d in edges]
        seen = set()
        unique = []
        for e in edges:
            if e in seen:
                continue
            seen.add(e)
            unique.append(e)
        if len(unique) < len(edges):
            warnings.warn(f"dropped {len(edges) - len(unique)} duplicate edges", stacklevel=2)
        for s, _, d in unique:
            if not (0 <= s < num_nodes and 0 <= d < num_nodes):
                raise ValueError(f"edge ({s}, {d}) references a node outside 0..{num_nodes - 1}")

        if node_type is None:
            node_type = np.zeros(num_nodes, dtype=np.int64)
            type_names = type_names or [DEFAULT_TYPE]
        node_type = np.asarray(node_type, dtype=np.int64)
        if node_type.shape != (num_nodes,):
            raise ValueError("node_type must assign a type to every node")
        if type_names is None:
            type_names = [f"t{i}" for i in range(int(node_type.max(initial=-1)) + 1)] or [DEFAULT_TYPE]
        if relation_names is None:
            relation_names = [f"r{i}" for i in range(max((r for _, r, _ in unique), default=-1) + 1)]
        if node_names is None:
            node_names = [str(i) for i in range(num_nodes)]

        adjacency = [[] for _ in range(num_nodes)]
        pairs = set()
        for s, r, d in unique:
            adjacency[s].append((d, r))
            if d != s:
                adjacency[d].append((s, r))
            pairs.add((min(s, d), max(s, d)))
        for lst in adjacency:
            lst.sort()

        # CSR over distinct neighbours, ascending; walks and BFS use this view.
        nbrs = [sorted({n for n, _ in lst}) for lst in adjacency]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(n) for n in nbrs])
        indices = np.fromiter((n for lst in nbrs for n in lst), dtype=np.int64, count=int(indptr[-1]))

        return cls(num_nodes=num_nodes, node_type=node_type, edges=unique,
                   node_names=list(node_names), type_names=list(type_names),
                   relation_names=list(relation_names), adjacency=adjacency,
                   indptr=indptr, indices=indices, _pairs=pairs)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def num_relations(self):
        return len(self.relation_names)

    def neighbors(self, v):
        """Distinct neighbour ids of ``v`` in ascending order."""
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v):
        return int(self.indptr[v + 1] - self.indptr[v])

    def has_edge(self, u, v):
        """True if any relation links ``u`` and ``v`` in either direction."""
        return (min(u, v), max(u, v)) in self._pairs

    def relations_between(self, u, v):
        return sorted({r for n, r in self.adjacency[u] if n == v})

    def type_name(self, v):
        return self.type_names[int(self.node_type[v])]

    def subgraph_with_edges(self, edges):
        """Same node set and vocabularies, restricted to ``edges``."""
        return HeteroGraph.build(self.num_nodes, [(s, r, d) for s, r, d, *_ in edges],
                                 node_type=self.node_type, node_names=self.node_names,
                                 type_names=self.type_names, relation_names=self.relation_names)


@dataclass
class EdgeSplit:
    train_pos: list
    dev: list
    test: list

    def check_disjoint(self):
        def pairs(rows):
            return {(min(s, d), max(s, d)) for s, _, d, *_ in rows}

        a, b, c = pairs(self.train_pos), pairs(self.dev), pairs(self.test)
        return not (a & b or a & c or b & c)


def _read_tsv(path, ncols, what):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != ncols:
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {ncols} tab-separated {what} fields, got {len(parts)}")
            rows.append((lineno, parts))
    return rows


def load_edgelist(path, node_types=None):
    """Load ``src<TAB>rel<TAB>dst`` lines into a :class:`HeteroGraph`.

    Tokens are mapped to dense ids in first-seen order. ``node_types`` is an
    optional ``node<TAB>type`` file; without it every node gets one type.
    """
    node_ids, rel_ids = {}, {}
    edges = []
    for _, (s, r, d) in _read_tsv(path, 3, "edge"):
        for tok in (s, d):
            node_ids.setdefault(tok, len(node_ids))
        rel_ids.setdefault(r, len(rel_ids))
        edges.append((node_ids[s], rel_ids[r], node_ids[d]))
    node_names = list(node_ids)
    node_type = type_names = None
    if node_types is not None:
        node_type, type_names = _load_types(node_types, node_ids)
    return HeteroGraph.build(len(node_ids), edges, node_type=node_type, node_names=node_names,
                             type_names=type_names, relation_names=list(rel_ids))


def _load_types(path, node_ids, type_ids=None):
    type_ids = dict(type_ids or {})
    node_type = np.full(len(node_ids), -1, dtype=np.int64)
    for lineno, (tok, typ) in _read_tsv(path, 2, "node-type"):
        if tok not in node_ids:
            raise GraphFormatError(f"{path}:{lineno}: node {tok!r} does not appear in the edge list")
        node_type[node_ids[tok]] = type_ids.setdefault(typ, len(type_ids))
    missing = np.flatnonzero(node_type < 0)
    if missing.size:
        names = list(node_ids)
        raise GraphFormatError(f"{path}: no type for node(s) {[names[i] for i in missing[:5]]}")
    return node_type, list(type_ids)


def _read_idmap(path):
    out = {}
    for lineno, (tok, idx) in _read_tsv(path, 2, "id-map"):
        try:
            out[tok] = int(idx)
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: id {idx!r} is not an integer") from None
    if sorted(out.values()) != list(range(len(out))):
        raise GraphFormatError(f"{path}: ids are not a dense 0..n-1 range")
    return out


def _write_idmap(path, names):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, tok in enumerate(names):
            fh.write(f"{tok}\t{i}\n")


def save_graph(g, directory):
    """Write edges, node types and the three id maps under ``directory``."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "edges.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for s, r, d in g.edges:
            fh.write(f"{g.node_names[s]}\t{g.relation_names[r]}\t{g.node_names[d]}\n")
    with open(os.path.join(directory, "node_types.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for v in range(g.num_nodes):
            fh.write(f"{g.node_names[v]}\t{g.type_name(v)}\n")
    _write_idmap(os.path.join(directory, "node_ids.tsv"), g.node_names)
    _write_idmap(os.path.join(directory, "relation_ids.tsv"), g.relation_names)
    _write_idmap(os.path.join(directory, "type_ids.tsv"), g.type_names)


def load_graph(directory):
    """Inverse of :func:`save_graph`; ids follow the stored id maps."""
    node_ids = _read_idmap(os.path.join(directory, "node_ids.tsv"))
    rel_ids = _read_idmap(os.path.join(directory, "relation_ids.tsv"))
    type_ids = _read_idmap(os.path.join(directory, "type_ids.tsv"))
    edges = []
    path = os.path.join(directory, "edges.tsv")
    for lineno, (s, r, d) in _read_tsv(path, 3, "edge"):
        try:
            edges.append((node_ids[s], rel_ids[r], node_ids[d]))
        except KeyError as exc:
            raise GraphFormatError(f"{path}:{lineno}: unknown token {exc.args[0]!r}") from None
    node_type, _ = _load_types(os.path.join(directory, "node_types.tsv"), node_ids, type_ids)
    by_id = lambda m: [t for t, _ in sorted(m.items(), key=lambda kv: kv[1])]  # noqa: E731
    return HeteroGraph.build(len(node_ids), edges, node_type=node_type, node_names=by_id(node_ids),
                             type_names=by_id(type_ids), relation_names=by_id(rel_ids))


def write_split(path, g, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, r, d, label in rows:
            fh.write(f"{g.node_names[s]}\t{g.relation_names[r]}\t{g.node_names[d]}\t{label}\n")


def read_split(path, g):
    node_ids = {t: i for i, t in enumerate(g.node_names)}
    rel_ids = {t: i for i, t in enumerate(g.relation_names)}
    rows = []
    for lineno, (s, r, d, label) in _read_tsv(path, 4, "split"):
        if label not in ("0", "1"):
            raise GraphFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
        try:
            rows.append((node_ids[s], rel_ids[r], node_ids[d], int(label)))
        except KeyError as exc:
            raise GraphFormatError(f"{path}:{lineno}: unknown token {exc.args[0]!r}") from None
    return rows


def sample_negative_edges(g, positives, ratio=2, rng=None, exclude=(), type_constrained=False,
                          max_retries=100):
    """Corrupt the destination of each positive ``ratio`` times.

    A candidate ``v'`` is rejected if it equals ``u``, if ``(u, v')`` is an
    edge of ``g`` (either direction), or if the unordered pair was already
    sampled or appears in ``exclude``. With ``type_constrained`` the
    replacement is drawn among nodes sharing the original destination's type.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    taken = {(min(s, d), max(s, d)) for s, _, d, *_ in exclude}
    by_type = None
    if type_constrained:
        by_type = {t: np.flatnonzero(g.node_type == t) for t in np.unique(g.node_type)}
    out = []
    for u, r, v, *_ in positives:
        pool = by_type[int(g.node_type[v])] if by_type is not None else None
        for _ in range(ratio):
            for _ in range(max_retries):
                cand = int(pool[rng.integers(len(pool))]) if pool is not None else int(rng.integers(g.num_nodes))
                key = (min(u, cand), max(u, cand))
                if cand == u or key in g._pairs or key in taken:
                    continue
                taken.add(key)
                out.append((u, r, cand, 0))
                break
            else:
                raise NegativeSamplingError(
                    f"no non-edge found for pair ({g.node_names[u]}, {g.node_names[v]}) "
                    f"after {max_retries} draws")
    return out


def split_edges(g, train_frac=0.6, dev_frac=0.1, rng=None, dev_test_negative_ratio=1,
                type_constrained=False):
    """Random split of edges by unordered node pair, with labelled dev/test negatives."""
    if not (0 < train_frac < 1 and 0 <= dev_frac < 1 and train_frac + dev_frac <= 1):
        raise ValueError("invalid split fractions")
    rng = np.random.default_rng() if rng is None else rng
    groups = {}
    for s, r, d in g.edges:
        groups.setdefault((min(s, d), max(s, d)), []).append((s, r, d, 1))
    keys = sorted(groups)
    order = rng.permutation(len(keys))
    n_train = int(round(train_frac * len(keys)))
    n_dev = int(round(dev_frac * len(keys)))
    pick = lambda idx: [e for i in idx for e in groups[keys[i]]]  # noqa: E731
    train = pick(order[:n_train])
    dev_pos = pick(order[n_train:n_train + n_dev])
    test_pos = pick(order[n_train + n_dev:])
    dev_neg = sample_negative_edges(g, dev_pos, dev_test_negative_ratio, rng,
                                    type_constrained=type_constrained) if dev_pos else []
    test_neg = sample_negative_edges(g, test_pos, dev_test_negative_ratio, rng, exclude=dev_neg,
                                     type_constrained=type_constrained) if test_pos else []
    return EdgeSplit(train_pos=train, dev=dev_pos + dev_neg, test=test_pos + test_neg)


def bfs_shortest_path(g, u, v, max_len=None, skip_edge=None):
    """One shortest undirected path ``u .. v`` or ``None``.

    Neighbours are expanded in ascending id order and the first discovery
    wins, so ties resolve deterministically. ``max_len`` bounds the number of
    hops. ``skip_edge`` is an unordered pair whose direct link is ignored.
    """
    if u == v:
        return [u]
    skip = None if skip_edge is None else (min(skip_edge), max(skip_edge))
    parent = {u: -1}
    frontier = deque([(u, 0)])
    while frontier:
        x, dist = frontier.popleft()
        if max_len is not None and dist >= max_len:
            continue
        for y in g.neighbors(x):
            y = int(y)
            if y in parent or (skip is not None and (min(x, y), max(x, y)) == skip):
                continue
            parent[y] = x
            if y == v:
                path = [v]
                while path[-1] != u:
                    path.append(parent[path[-1]])
                return path[::-1]
            frontier.append((y, dist + 1))
    return None
