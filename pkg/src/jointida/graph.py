"""Graph types and Markov-equivalence-class machinery.

Nodes are integers ``1..p`` everywhere. A directed edge is an ordered pair
``(i, j)`` meaning ``i -> j``; undirected edges are stored as sorted pairs.
All types are immutable; the operations below are pure functions.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple

from .exceptions import (
    CycleError,
    GraphFormatError,
    NoConsistentExtensionError,
)


def _check_nodes(num_nodes: int, nodes: Iterable[int]) -> None:
    if num_nodes < 1:
        raise GraphFormatError(f"num_nodes must be positive, got {num_nodes}")
    for v in nodes:
        if not (1 <= v <= num_nodes):
            raise GraphFormatError(f"node {v} out of range 1..{num_nodes}")


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over nodes ``1..num_nodes``."""

    num_nodes: int
    edges: frozenset[tuple[int, int]]

    def __init__(self, num_nodes: int, edges: Iterable[tuple[int, int]]):
        edges = frozenset((int(i), int(j)) for i, j in edges)
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "edges", edges)
        _check_nodes(self.num_nodes, (v for e in edges for v in e))
        pairs = set()
        for i, j in edges:
            if i == j:
                raise GraphFormatError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise GraphFormatError(f"more than one edge between {i} and {j}")
            pairs.add(key)
        topological_order(self)  # raises CycleError on a cycle


@dataclass(frozen=True)
class WeightedDag:
    """A :class:`Dag` together with a nonzero real weight per edge."""

    dag: Dag
    weights: dict[tuple[int, int], float] = field(hash=False)

    def __init__(self, dag: Dag, weights: dict[tuple[int, int], float]):
        weights = {(int(i), int(j)): float(w) for (i, j), w in weights.items()}
        object.__setattr__(self, "dag", dag)
        object.__setattr__(self, "weights", weights)
        if set(weights) != set(dag.edges):
            raise GraphFormatError("weights must be defined exactly for the DAG edges")
        for (i, j), w in weights.items():
            if w == 0.0:
                raise GraphFormatError(f"zero weight on edge {i} -> {j}")

    @property
    def num_nodes(self) -> int:
        return self.dag.num_nodes


@dataclass(frozen=True)
class Pdag:
    """Partially directed graph: a set of directed plus a set of undirected edges.

    A CPDAG is a ``Pdag`` whose directed part is exactly the compelled edges of
    a Markov equivalence class; validity is only established operationally
    (round-trip through :func:`dag_to_cpdag` / :func:`enumerate_equivalence_class`).
    """

    num_nodes: int
    directed_edges: frozenset[tuple[int, int]]
    undirected_edges: frozenset[tuple[int, int]]

    def __init__(
        self,
        num_nodes: int,
        directed_edges: Iterable[tuple[int, int]] = (),
        undirected_edges: Iterable[tuple[int, int]] = (),
    ):
        directed = frozenset((int(i), int(j)) for i, j in directed_edges)
        undirected = frozenset(
            (min(int(i), int(j)), max(int(i), int(j))) for i, j in undirected_edges
        )
        object.__setattr__(self, "num_nodes", int(num_nodes))
        object.__setattr__(self, "directed_edges", directed)
        object.__setattr__(self, "undirected_edges", undirected)
        _check_nodes(
            self.num_nodes,
            (v for e in directed | undirected for v in e),
        )
        pairs = set()
        for i, j in directed:
            if i == j:
                raise GraphFormatError(f"self-loop at node {i}")
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise GraphFormatError(f"more than one edge between {i} and {j}")
            pairs.add(key)
        for key in undirected:
            if key[0] == key[1]:
                raise GraphFormatError(f"self-loop at node {key[0]}")
            if key in pairs:
                raise GraphFormatError(
                    f"edge between {key[0]} and {key[1]} is both directed and undirected"
                )
            pairs.add(key)


class UndirectedComponent(NamedTuple):
    """Connected component of an undirected part, carrying original node labels."""

    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]


# ---------------------------------------------------------------------------
# adjacency helpers

def _children_map(g: Dag) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {v: [] for v in range(1, g.num_nodes + 1)}
    for i, j in g.edges:
        out[i].append(j)
    return out


def skeleton_adjacency(g: Dag | Pdag) -> dict[int, set[int]]:
    """Adjacency sets of the skeleton (all edges made undirected)."""
    adj: dict[int, set[int]] = {v: set() for v in range(1, g.num_nodes + 1)}
    if isinstance(g, Dag):
        edge_iter: Iterable[tuple[int, int]] = g.edges
    else:
        edge_iter = list(g.directed_edges) + list(g.undirected_edges)
    for i, j in edge_iter:
        adj[i].add(j)
        adj[j].add(i)
    return adj


def parents(g: Dag | Pdag, v: int) -> set[int]:
    """All nodes ``u`` with a directed edge ``u -> v`` (directed part only)."""
    if not (1 <= v <= g.num_nodes):
        raise GraphFormatError(f"node {v} out of range 1..{g.num_nodes}")
    edges = g.edges if isinstance(g, Dag) else g.directed_edges
    return {i for i, j in edges if j == v}


def _descendants(g: Dag, v: int) -> set[int]:
    children = _children_map(g)
    seen = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for w in children[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def non_descendants(g: Dag, v: int) -> set[int]:
    """Nodes with no directed path from ``v``, excluding ``v`` itself."""
    if not (1 <= v <= g.num_nodes):
        raise GraphFormatError(f"node {v} out of range 1..{g.num_nodes}")
    return set(range(1, g.num_nodes + 1)) - _descendants(g, v)


def topological_order(g: Dag) -> list[int]:
    """Causal ordering of the nodes, lowest index first among the available."""
    indegree = {v: 0 for v in range(1, g.num_nodes + 1)}
    children = _children_map(g)
    for _, j in g.edges:
        indegree[j] += 1
    heap = [v for v, d in indegree.items() if d == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for w in children[v]:
            indegree[w] -= 1
            if indegree[w] == 0:
                heapq.heappush(heap, w)
    if len(order) != g.num_nodes:
        stuck = sorted(v for v, d in indegree.items() if d > 0)
        raise CycleError(f"directed cycle through nodes {stuck}")
    return order


def v_structures(g: Dag | Pdag) -> set[tuple[int, int, int]]:
    """Colliders ``a -> b <- c`` with ``a, c`` non-adjacent, as triples ``(a, b, c)``, ``a < c``.

    For a :class:`Pdag`, only the directed part contributes arrowheads.
    """
    edges = g.edges if isinstance(g, Dag) else g.directed_edges
    adj = skeleton_adjacency(g)
    into: dict[int, list[int]] = {v: [] for v in range(1, g.num_nodes + 1)}
    for i, j in edges:
        into[j].append(i)
    out = set()
    for b, tails in into.items():
        for a, c in combinations(sorted(tails), 2):
            if c not in adj[a]:
                out.add((a, b, c))
    return out


# ---------------------------------------------------------------------------
# orientation rules

def _has_directed_path(directed: set[tuple[int, int]], src: int, dst: int) -> bool:
    children: dict[int, list[int]] = {}
    for i, j in directed:
        children.setdefault(i, []).append(j)
    seen = {src}
    stack = [src]
    while stack:
        u = stack.pop()
        if u == dst:
            return True
        for w in children.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def meek_closure(
    num_nodes: int,
    directed: Iterable[tuple[int, int]],
    undirected: Iterable[tuple[int, int]],
) -> tuple[set[tuple[int, int]], set[tuple[int, int]]]:
    """Close a PDAG under orientation rules R1-R3.

    R1: a -> b - c with a, c non-adjacent orients b -> c.
    R2: a -> c -> b with a - b orients a -> b.
    R3: a - b, a - c, a - d, c -> b, d -> b with c, d non-adjacent orients a -> b.

    An orientation that would create a directed cycle is skipped; this can only
    happen for inconsistent sample inputs, never when closing the pattern of a
    DAG.  Returns the new (directed, undirected) edge sets.
    """
    directed = set(directed)
    undirected = {(min(i, j), max(i, j)) for i, j in undirected}
    adj: dict[int, set[int]] = {v: set() for v in range(1, num_nodes + 1)}
    for i, j in list(directed) + list(undirected):
        adj[i].add(j)
        adj[j].add(i)

    def orient(x: int, y: int) -> bool:
        pair = (min(x, y), max(x, y))
        if pair not in undirected:
            return False  # already oriented by an earlier rule in this sweep
        if _has_directed_path(directed, y, x):
            return False
        undirected.discard(pair)
        directed.add((x, y))
        return True

    changed = True
    while changed:
        changed = False
        # R1
        for a, b in sorted(directed):
            for c in sorted(adj[b]):
                if c != a and c not in adj[a] and (min(b, c), max(b, c)) in undirected:
                    changed |= orient(b, c)
        # R2
        for x, y in sorted(undirected):
            for a, b in ((x, y), (y, x)):
                if any((a, z) in directed and (z, b) in directed for z in sorted(adj[a])):
                    if orient(a, b):
                        changed = True
                    break
        # R3
        for x, y in sorted(undirected):
            for a, b in ((x, y), (y, x)):
                cands = [
                    c
                    for c in sorted(adj[a])
                    if (min(a, c), max(a, c)) in undirected and (c, b) in directed
                ]
                if any(d not in adj[c] for c, d in combinations(cands, 2)):
                    if orient(a, b):
                        changed = True
                    break
    return directed, undirected


def dag_to_cpdag(g: Dag) -> Pdag:
    """Completed PDAG of ``g``'s Markov equivalence class.

    Same skeleton and colliders as ``g``; compelled edges directed, reversible
    edges undirected.
    """
    compelled: set[tuple[int, int]] = set()
    for a, b, c in v_structures(g):
        compelled.add((a, b))
        compelled.add((c, b))
    undirected = {
        (min(i, j), max(i, j)) for i, j in g.edges if (i, j) not in compelled
    }
    directed, undirected = meek_closure(g.num_nodes, compelled, undirected)
    return Pdag(g.num_nodes, directed, undirected)


# ---------------------------------------------------------------------------
# equivalence-class enumeration

def _orient_checked(
    x: int,
    y: int,
    directed: set[tuple[int, int]],
    undirected: set[tuple[int, int]],
    adj: dict[int, set[int]],
    allowed: set[tuple[int, int, int]],
) -> bool:
    """Orient x -> y, failing if it closes a cycle or creates a collider at y
    that is not among the ``allowed`` triples.

    A pair that is already directed counts as success iff the direction agrees.
    """
    pair = (min(x, y), max(x, y))
    if pair not in undirected:
        return (x, y) in directed
    if _has_directed_path(directed, y, x):
        return False
    for d, head in directed:
        if head == y and d != x and d not in adj[x]:
            if (min(d, x), y, max(d, x)) not in allowed:
                return False
    undirected.discard(pair)
    directed.add((x, y))
    return True


def _closure_checked(directed, undirected, adj, allowed) -> bool:
    """R1-R2 closure where every forced orientation must pass the checks;
    returns False when the branch is inconsistent.  (R3 is omitted: it only
    adds pruning, and the surrounding branch-and-check search is exhaustive.)"""
    changed = True
    while changed:
        before = len(undirected)
        for a, b in sorted(directed):
            for c in sorted(adj[b]):
                if c != a and c not in adj[a] and (min(b, c), max(b, c)) in undirected:
                    if not _orient_checked(b, c, directed, undirected, adj, allowed):
                        return False
        for x, y in sorted(undirected):
            if (x, y) not in undirected:
                continue
            for a, b in ((x, y), (y, x)):
                if any((a, z) in directed and (z, b) in directed for z in sorted(adj[a])):
                    if not _orient_checked(a, b, directed, undirected, adj, allowed):
                        return False
                    break
        changed = len(undirected) < before
    return True


def enumerate_equivalence_class(c: Pdag) -> list[Dag]:
    """All DAGs sharing ``c``'s skeleton and colliders, each exactly once.

    Recursive edge orientation with rule closure after every choice; branch
    order is deterministic (lexicographically smallest undirected edge first,
    low-to-high orientation first).  Raises
    :class:`~jointida.exceptions.NoConsistentExtensionError` when ``c`` admits
    no extension, which signals an invalid input graph.
    """
    adj = skeleton_adjacency(c)
    allowed = v_structures(c)
    out: list[Dag] = []

    def extend(directed: set[tuple[int, int]], undirected: set[tuple[int, int]]):
        if not undirected:
            out.append(Dag(c.num_nodes, directed))
            return
        x, y = min(undirected)
        for a, b in ((x, y), (y, x)):
            d2, u2 = set(directed), set(undirected)
            if _orient_checked(a, b, d2, u2, adj, allowed) and _closure_checked(
                d2, u2, adj, allowed
            ):
                extend(d2, u2)

    base_d = set(c.directed_edges)
    base_u = set(c.undirected_edges)
    if _closure_checked(base_d, base_u, adj, allowed):
        extend(base_d, base_u)
    if not out:
        raise NoConsistentExtensionError(
            "graph admits no consistent extension; not a valid CPDAG"
        )
    return out


def undirected_components(c: Pdag) -> list[UndirectedComponent]:
    """Connected components of the undirected part, singletons included.

    Components partition ``1..num_nodes`` and are sorted by smallest member.
    """
    adj: dict[int, set[int]] = {v: set() for v in range(1, c.num_nodes + 1)}
    for i, j in c.undirected_edges:
        adj[i].add(j)
        adj[j].add(i)
    seen: set[int] = set()
    comps: list[UndirectedComponent] = []
    for start in range(1, c.num_nodes + 1):
        if start in seen:
            continue
        stack = [start]
        nodes = {start}
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in nodes:
                    nodes.add(w)
                    stack.append(w)
        seen |= nodes
        edges = frozenset(e for e in c.undirected_edges if e[0] in nodes)
        comps.append(UndirectedComponent(tuple(sorted(nodes)), edges))
    return comps


def _locally_valid_sibling_subsets(c: Pdag, v: int) -> list[frozenset[int]]:
    """Subsets S of v's undirected neighbours that can be oriented into v
    without creating a new collider at v, in deterministic order."""
    adj = skeleton_adjacency(c)
    dir_parents = parents(c, v)
    siblings = sorted(
        u for u in adj[v] if (min(u, v), max(u, v)) in c.undirected_edges
    )
    out: list[frozenset[int]] = []
    for r in range(len(siblings) + 1):
        for combo in combinations(siblings, r):
            S = set(combo)
            ok = all(
                w in adj[u]
                for u in S
                for w in (S | dir_parents)
                if w != u
            )
            if ok:
                out.append(frozenset(S))
    return out


def locally_valid_parent_sets(c: Pdag, v: int) -> set[frozenset[int]]:
    """Parent sets of ``v`` obtainable by orienting only its incident
    undirected edges without creating a new collider at ``v``, each united
    with ``v``'s already-directed parents."""
    if not (1 <= v <= c.num_nodes):
        raise GraphFormatError(f"node {v} out of range 1..{c.num_nodes}")
    dir_parents = frozenset(parents(c, v))
    return {S | dir_parents for S in _locally_valid_sibling_subsets(c, v)}


def is_chordal(g: Pdag | UndirectedComponent) -> bool:
    """Chordality of an undirected graph via maximum-cardinality search.

    For a :class:`Pdag`, only the undirected edges are considered.
    """
    if isinstance(g, UndirectedComponent):
        nodes = list(g.nodes)
        edges = g.edges
    else:
        nodes = list(range(1, g.num_nodes + 1))
        edges = g.undirected_edges
    adj: dict[int, set[int]] = {v: set() for v in nodes}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    weight = {v: 0 for v in nodes}
    unvisited = set(nodes)
    order: list[int] = []
    while unvisited:
        v = min(unvisited, key=lambda u: (-weight[u], u))
        order.append(v)
        unvisited.discard(v)
        for w in adj[v] & unvisited:
            weight[w] += 1
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [u for u in adj[v] if pos[u] < pos[v]]
        for u, w in combinations(earlier, 2):
            if w not in adj[u]:
                return False
    return True


# ---------------------------------------------------------------------------
# text format
#
# First non-comment line:  p <num_nodes>
# Then one edge per line:  i -> j [w]   (directed, weight defaults to 1.0)
#                          i -- j      (undirected)
# '#' starts a comment; tokens are whitespace-separated.

def _parse_graph_lines(text: str):
    num_nodes = None
    directed: dict[tuple[int, int], float | None] = {}
    undirected: set[tuple[int, int]] = set()
    pairs: set[tuple[int, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if num_nodes is None:
            if len(tok) != 2 or tok[0] != "p":
                raise GraphFormatError(
                    f"line {lineno}: expected 'p <num_nodes>' header, got {line!r}"
                )
            num_nodes = int(tok[1])
            continue
        if len(tok) >= 3 and tok[1] == "->":
            i, j = int(tok[0]), int(tok[2])
            w = float(tok[3]) if len(tok) == 4 else None
            if len(tok) > 4:
                raise GraphFormatError(f"line {lineno}: trailing tokens in {line!r}")
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise GraphFormatError(
                    f"line {lineno}: more than one edge between {i} and {j}"
                )
            pairs.add(key)
            directed[(i, j)] = w
        elif len(tok) == 3 and tok[1] == "--":
            i, j = int(tok[0]), int(tok[2])
            key = (min(i, j), max(i, j))
            if key in pairs:
                raise GraphFormatError(
                    f"line {lineno}: more than one edge between {i} and {j}"
                )
            pairs.add(key)
            undirected.add(key)
        else:
            raise GraphFormatError(f"line {lineno}: cannot parse {line!r}")
    if num_nodes is None:
        raise GraphFormatError("missing 'p <num_nodes>' header")
    return num_nodes, directed, undirected


def weighted_dag_from_text(text: str) -> WeightedDag:
    num_nodes, directed, undirected = _parse_graph_lines(text)
    if undirected:
        raise GraphFormatError("undirected edges not allowed in a weighted DAG")
    weights = {e: (1.0 if w is None else w) for e, w in directed.items()}
    return WeightedDag(Dag(num_nodes, directed.keys()), weights)


def dag_from_text(text: str) -> Dag:
    return weighted_dag_from_text(text).dag


def pdag_from_text(text: str) -> Pdag:
    num_nodes, directed, undirected = _parse_graph_lines(text)
    if any(w is not None for w in directed.values()):
        raise GraphFormatError("weights not allowed in a partially directed graph")
    return Pdag(num_nodes, directed.keys(), undirected)


def weighted_dag_to_text(g: WeightedDag) -> str:
    lines = [f"p {g.num_nodes}"]
    for i, j in sorted(g.dag.edges):
        lines.append(f"{i} -> {j} {g.weights[(i, j)]!r}")
    return "\n".join(lines) + "\n"


def pdag_to_text(g: Pdag) -> str:
    lines = [f"p {g.num_nodes}"]
    for i, j in sorted(g.directed_edges):
        lines.append(f"{i} -> {j}")
    for i, j in sorted(g.undirected_edges):
        lines.append(f"{i} -- {j}")
    return "\n".join(lines) + "\n"
