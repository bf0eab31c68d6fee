"""Clique-tree construction and exact message passing.

Construction: moralise, triangulate with a greedy elimination heuristic,
keep the maximal cliques, and join them with a maximum-weight spanning tree
on separator sizes.  Every tie is broken deterministically so that trees
(and every size statistic derived from them) are reproducible.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AbsInferError
from .factor import Factor, OpMeter, product, sum_onto
from .model import Evidence, Network, evidence_indicator
from .partition import JointDomain

HEURISTICS = ("min-fill", "min-degree")


@dataclass(frozen=True)
class CliqueTree:
    clusters: tuple[tuple[int, ...], ...]
    edges: tuple[tuple[int, int], ...]
    assignment: tuple[int, ...]
    cards: tuple[int, ...]
    _adj: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        adj = [[] for _ in self.clusters]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(n)) for n in adj))

    def __len__(self):
        return len(self.clusters)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self._adj[node]

    def separator(self, a: int, b: int) -> tuple[int, ...]:
        return tuple(sorted(set(self.clusters[a]) & set(self.clusters[b])))

    def domain(self, node: int) -> JointDomain:
        return JointDomain.of(self.clusters[node], self.cards)

    def sep_domain(self, a: int, b: int) -> JointDomain:
        return JointDomain.of(self.separator(a, b), self.cards)

    def directed_edges(self) -> list[tuple[int, int]]:
        return sorted([(a, b) for a, b in self.edges] + [(b, a) for a, b in self.edges])

    def with_cards(self, cards: Sequence[int]) -> "CliqueTree":
        """Same structure over variables with different domain sizes."""
        return CliqueTree(self.clusters, self.edges, self.assignment, tuple(cards))

    def subtree_order(self, start: int, exclude: int | None) -> list[tuple[int, int]]:
        """(node, parent) pairs of the subtree at ``start`` away from ``exclude``, BFS order."""
        out = []
        queue = deque([(start, exclude)])
        while queue:
            node, parent = queue.popleft()
            out.append((node, parent))
            for n in self._adj[node]:
                if n != parent:
                    queue.append((n, node))
        return out


def moral_graph(net: Network) -> list[set[int]]:
    adj = [set() for _ in net.variables]
    for cpt in net.cpts:
        fam = cpt.family
        for a, b in itertools.combinations(fam, 2):
            adj[a].add(b)
            adj[b].add(a)
    return adj


def elimination_cliques(adj: list[set[int]], heuristic: str = "min-fill"):
    """Greedy elimination; returns the order and the clique formed at each step."""
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}; expected one of {HEURISTICS}")
    adj = [set(a) for a in adj]
    remaining = set(range(len(adj)))
    order, cliques = [], []
    while remaining:
        def cost(v):
            nb = adj[v]
            if heuristic == "min-degree":
                return len(nb)
            return sum(1 for a, b in itertools.combinations(sorted(nb), 2) if b not in adj[a])

        v = min(remaining, key=lambda u: (cost(u), u))
        nb = adj[v]
        cliques.append(tuple(sorted(nb | {v})))
        for a, b in itertools.combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for u in nb:
            adj[u].discard(v)
        remaining.discard(v)
        order.append(v)
    return order, cliques


def build_clique_tree(net: Network, heuristic: str = "min-fill") -> CliqueTree:
    _, raw = elimination_cliques(moral_graph(net), heuristic)
    sets = [frozenset(c) for c in raw]
    maximal = {c for c in sets if not any(c < other for other in sets)}
    clusters = sorted(tuple(sorted(c)) for c in maximal)

    # Kruskal on separator size, heaviest first, ties by node pair
    candidates = sorted(
        (-len(set(a) & set(b)), i, j)
        for (i, a), (j, b) in itertools.combinations(enumerate(clusters), 2)
    )
    root = list(range(len(clusters)))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    edges = []
    for _, i, j in candidates:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[max(ri, rj)] = min(ri, rj)
            edges.append((i, j))

    assignment = []
    for cpt in net.cpts:
        fam = set(cpt.family)
        assignment.append(next(k for k, c in enumerate(clusters) if fam <= set(c)))
    tree = CliqueTree(tuple(clusters), tuple(sorted(edges)), tuple(assignment), net.cards)
    check_clique_tree(tree, net)
    return tree


def check_clique_tree(tree: CliqueTree, net: Network) -> None:
    """Raise if running intersection or family containment fails."""
    if len(tree.edges) != len(tree) - 1:
        raise AbsInferError("clique tree is not a spanning tree")
    for var in range(len(net)):
        holders = {k for k, c in enumerate(tree.clusters) if var in c}
        if not holders:
            raise AbsInferError(f"variable {var} is in no cluster")
        start = min(holders)
        seen = {start}
        stack = [start]
        while stack:
            node = stack.pop()
            for n in tree.neighbors(node):
                if n in holders and n not in seen:
                    seen.add(n)
                    stack.append(n)
        if seen != holders:
            raise AbsInferError(f"running intersection fails for variable {var}")
    for cpt in net.cpts:
        if not set(cpt.family) <= set(tree.clusters[tree.assignment[cpt.child]]):
            raise AbsInferError(f"family of {cpt.child} is not inside its assigned cluster")


def attach_evidence(tree: CliqueTree, net: Network, ev: Evidence) -> list[Factor]:
    """Clique factors: assigned CPTs times indicators of assigned evidence variables."""
    out = []
    for node in range(len(tree)):
        dom = tree.domain(node)
        parts = []
        for cpt in net.cpts:
            if tree.assignment[cpt.child] != node:
                continue
            fam_dom = JointDomain.of(cpt.family, net.cards)
            parts.append(Factor(fam_dom, _to_scope_order(cpt.table, cpt.family)))
            if cpt.child in ev:
                ind = evidence_indicator(cpt.child, ev, net.variables[cpt.child].size)
                parts.append(Factor(JointDomain.of([cpt.child], net.cards), ind))
        out.append(product(dom, parts))
    return out


def _to_scope_order(table: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    return np.transpose(table, np.argsort(axes))


def compute_message(
    tree: CliqueTree,
    factors: Sequence[Factor],
    frm: int,
    to: int,
    incoming: Mapping[tuple[int, int], Factor],
    meter: OpMeter | None = None,
    rescale: bool = True,
) -> Factor:
    """Sum over the cluster of ``frm`` minus the separator of its factor times incoming messages."""
    dom = tree.domain(frm)
    inbound = [incoming[(n, frm)] for n in tree.neighbors(frm) if n != to]
    prod = product(dom, [factors[frm]] + inbound)
    if meter is not None:
        meter.add("multiply_add", dom.size * (len(inbound) + 1))
    msg = sum_onto(prod, tree.separator(frm, to))
    return msg.rescaled() if rescale else msg


def _messages_toward(tree, factors, target, exclude, messages, meter, rescale):
    """Fill ``messages`` with every message inside the subtree at ``target`` pointing at it."""
    order = tree.subtree_order(target, exclude)
    for node, parent in reversed(order):
        if parent is None or parent == exclude or (node, parent) in messages:
            continue
        messages[(node, parent)] = compute_message(tree, factors, node, parent, messages, meter, rescale)


def likelihood(
    tree: CliqueTree,
    factors: Sequence[Factor],
    meter: OpMeter | None = None,
    rescale: bool = True,
    edge: tuple[int, int] | None = None,
) -> float:
    """log P(e) from the two messages across one edge (the first, by default)."""
    if not tree.edges:
        if meter is not None:
            meter.add("multiply_add", factors[0].scope.size)
        return factors[0].log_total()
    a, b = edge if edge is not None else tree.edges[0]
    messages = {}
    _messages_toward(tree, factors, a, b, messages, meter, rescale)
    _messages_toward(tree, factors, b, a, messages, meter, rescale)
    messages[(a, b)] = compute_message(tree, factors, a, b, messages, meter, rescale)
    messages[(b, a)] = compute_message(tree, factors, b, a, messages, meter, rescale)
    f_ab, f_ba = messages[(a, b)], messages[(b, a)]
    if meter is not None:
        meter.add("multiply_add", f_ab.scope.size)
    total = float(np.dot(f_ab.flat, f_ba.flat))
    if total == 0.0 or math.isinf(f_ab.log_scale) or math.isinf(f_ba.log_scale):
        return -math.inf
    return math.log(total) + f_ab.log_scale + f_ba.log_scale


@dataclass
class Calibration:
    messages: dict[tuple[int, int], Factor]
    posteriors: list[Factor]

    def log_likelihoods(self) -> list[float]:
        return [p.log_total() for p in self.posteriors]


def calibrate(
    tree: CliqueTree,
    factors: Sequence[Factor],
    root: int = 0,
    meter: OpMeter | None = None,
    rescale: bool = True,
) -> Calibration:
    """Inward pass to ``root``, outward pass back; posteriors P(e, c_l) per clique."""
    order = tree.subtree_order(root, None)
    messages: dict[tuple[int, int], Factor] = {}
    for node, parent in reversed(order):
        if parent is not None:
            messages[(node, parent)] = compute_message(tree, factors, node, parent, messages, meter, rescale)
    for node, parent in order:
        if parent is not None:
            messages[(parent, node)] = compute_message(tree, factors, parent, node, messages, meter, rescale)
    posteriors = []
    for node in range(len(tree)):
        inbound = [messages[(n, node)] for n in tree.neighbors(node)]
        posteriors.append(product(tree.domain(node), [factors[node]] + inbound))
    return Calibration(messages, posteriors)


def network_likelihood(net: Network, ev: Evidence, heuristic: str = "min-fill", meter=None) -> float:
    tree = build_clique_tree(net, heuristic)
    return likelihood(tree, attach_evidence(tree, net, ev), meter)
