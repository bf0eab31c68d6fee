"""Message-specific abstraction on a clique tree.

Each clique gets the coarsest partition that is safe for its factor, and
each directed edge ``l -> m`` gets a partition of the separator built by
combining the clique partition with the partitions of the other incoming
messages and marginalising onto the separator.  Messages are then computed
one value per non-zero block: products are evaluated at a representative
of each block of the combined partition and sums add each distinct block
value times its multiplicity.  Zero blocks are never evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .factor import Factor, OpMeter
from .jointree import CliqueTree
from .model import Evidence, Network
from .partition import (
    JointDomain,
    Partition,
    coarsest_safe_for,
    combine_onto,
    evidence_partition,
    marginalize,
    refine,
)

ROUTES = ("factor", "combine")


def clique_abstraction(factor: Factor, tolerance: float = 0.0) -> Partition:
    """Coarsest safe partition of a clique factor; zero entries form the zero block."""
    return coarsest_safe_for(factor.flat, tolerance)


def clique_abstraction_by_parts(
    tree: CliqueTree, net: Network, ev: Evidence, node: int, tolerance: float = 0.0
) -> Partition:
    """Combine safe partitions of each assigned CPT with the evidence partitions.

    Finer than or equal to :func:`clique_abstraction` on the assembled factor.
    """
    dom = tree.domain(node)
    parts = []
    for cpt in net.cpts:
        if tree.assignment[cpt.child] != node:
            continue
        fam = JointDomain.of(cpt.family, net.cards)
        table = np.transpose(cpt.table, np.argsort(cpt.family))
        parts.append((coarsest_safe_for(table, tolerance), fam))
        if cpt.child in ev:
            one = JointDomain.of([cpt.child], net.cards)
            parts.append((evidence_partition(net.variables[cpt.child].size, ev[cpt.child]), one))
    if not parts:
        parts.append((Partition.from_labels(np.zeros(dom.size, dtype=np.int64)), dom))
    return combine_onto(dom, parts)


@dataclass(eq=False)
class AbstractedCliqueTree:
    base: CliqueTree
    clique_partitions: list[Partition]
    separator_partitions: dict[tuple[int, int], Partition]
    _combined: dict = field(default_factory=dict, repr=False)

    def incoming_parts(self, node: int, exclude: int | None = None):
        t = self.base
        return [
            (self.separator_partitions[(n, node)], t.sep_domain(n, node))
            for n in t.neighbors(node)
            if n != exclude
        ]

    def combined(self, node: int, exclude: int | None = None) -> Partition:
        """Clique partition combined with the incoming partitions (all but ``exclude``)."""
        key = (node, exclude)
        if key not in self._combined:
            dom = self.base.domain(node)
            parts = [(self.clique_partitions[node], dom)] + self.incoming_parts(node, exclude)
            self._combined[key] = combine_onto(dom, parts)
        return self._combined[key]

    def posterior_partition(self, node: int) -> Partition:
        return self.combined(node, None)


def _all_zero(p: Partition) -> bool:
    return p.num_blocks == 1 and p.zero_block == 0


def propagate_abstractions(
    tree: CliqueTree, clique_partitions: Sequence[Partition], meter: OpMeter | None = None
) -> AbstractedCliqueTree:
    """Directed separator partitions by the two-pass schedule used for messages."""
    atree = AbstractedCliqueTree(tree, list(clique_partitions), {})
    order = tree.subtree_order(0, None)
    schedule = [(n, p) for n, p in reversed(order) if p is not None]
    schedule += [(p, n) for n, p in order if p is not None]
    for frm, to in schedule:
        comb = atree.combined(frm, to)
        part, _ = marginalize(comb, tree.domain(frm), tree.separator(frm, to))
        if meter is not None:
            meter.add("partition_touch", tree.domain(frm).size)
        atree.separator_partitions[(frm, to)] = part
    return atree


def abstract_clique_tree(
    tree: CliqueTree, factors: Sequence[Factor], tolerance: float = 0.0, meter: OpMeter | None = None
) -> AbstractedCliqueTree:
    return propagate_abstractions(tree, [clique_abstraction(f, tolerance) for f in factors], meter)


@dataclass(eq=False)
class AbstractMessage:
    """One value per block of ``partition``; the zero block's entry is always 0."""

    scope: JointDomain
    partition: Partition
    values: np.ndarray
    log_scale: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.log_scale == -math.inf

    def expanded(self) -> np.ndarray:
        """Concrete table over the separator (test/debug use)."""
        if self.is_zero:
            return np.zeros(self.scope.size)
        return self.values[self.partition.block_of] * math.exp(self.log_scale)


def _zero_message(scope: JointDomain, part: Partition) -> AbstractMessage:
    return AbstractMessage(scope, part, np.zeros(part.num_blocks), -math.inf)


def _rescale(scope, part, values, log_scale) -> AbstractMessage:
    peak = float(values.max()) if values.size else 0.0
    if peak == 0.0 or log_scale == -math.inf:
        return _zero_message(scope, part)
    return AbstractMessage(scope, part, values / peak, log_scale + math.log(peak))


def _block_products(atree, factors, node, partition, inbound, meter):
    """Value of factor times inbound messages at each non-zero block's representative.

    Returns (block ids, values, log_scale).
    """
    dom = atree.base.domain(node)
    ids = np.array(partition.nonzero_block_ids(), dtype=np.int64)
    reps = partition.representatives()[ids]
    vals = factors[node].flat[reps].copy()
    log_scale = factors[node].log_scale
    for msg in inbound:
        proj = dom.project(msg.scope)
        vals *= msg.values[msg.partition.block_of[proj[reps]]]
        log_scale += msg.log_scale
    if meter is not None:
        # one product per inbound message; the add is charged by the caller
        meter.add("multiply_add", len(ids) * len(inbound))
    return ids, vals, log_scale


def compute_abstract_message(atree, factors, frm, to, incoming, meter=None) -> AbstractMessage:
    tree = atree.base
    sep_dom = tree.sep_domain(frm, to)
    out_part = atree.separator_partitions[(frm, to)]
    inbound = [incoming[(n, frm)] for n in tree.neighbors(frm) if n != to]
    if _all_zero(out_part) or any(m.is_zero for m in inbound):
        return _zero_message(sep_dom, out_part)
    comb = atree.combined(frm, to)
    ids, vals, log_scale = _block_products(atree, factors, frm, comb, inbound, meter)
    dom = tree.domain(frm)
    proj = dom.project(sep_dom)
    out_block = out_part.block_of[proj]
    # only concrete values whose separator part is its block's representative
    rep_of = out_part.representatives()
    take = (proj == rep_of[out_block]) & ~comb.zero_mask
    dense = np.full(comb.num_blocks, -1, dtype=np.int64)
    dense[ids] = np.arange(len(ids))
    key = out_block[take] * comb.num_blocks + comb.block_of[take]
    pairs, counts = np.unique(key, return_counts=True)
    out_ids = pairs // comb.num_blocks
    contrib = counts * vals[dense[pairs % comb.num_blocks]]
    values = np.zeros(out_part.num_blocks)
    np.add.at(values, out_ids, contrib)
    if out_part.zero_block is not None:
        values[out_part.zero_block] = 0.0
    if meter is not None:
        meter.add("multiply_add", len(pairs))
    return _rescale(sep_dom, out_part, values, log_scale)


def _message(atree, factors, frm, to, cache, meter):
    """Memoised message ``frm -> to``, computed with an explicit stack."""
    tree = atree.base
    stack = [(frm, to)]
    while stack:
        a, b = stack[-1]
        if (a, b) in cache:
            stack.pop()
            continue
        if _all_zero(atree.separator_partitions[(a, b)]):
            cache[(a, b)] = _zero_message(tree.sep_domain(a, b), atree.separator_partitions[(a, b)])
            stack.pop()
            continue
        missing = [(n, a) for n in tree.neighbors(a) if n != b and (n, a) not in cache]
        if missing:
            stack.extend(missing)
            continue
        cache[(a, b)] = compute_abstract_message(atree, factors, a, b, cache, meter)
        stack.pop()
    return cache[(frm, to)]


def all_messages(
    atree: AbstractedCliqueTree, factors: Sequence[Factor], meter: OpMeter | None = None
) -> dict[tuple[int, int], AbstractMessage]:
    """Every directed abstract message, keyed by (from, to)."""
    cache: dict = {}
    for a, b in atree.base.directed_edges():
        _message(atree, factors, a, b, cache, meter)
    return cache


def abstracted_likelihood(
    atree: AbstractedCliqueTree, factors: Sequence[Factor], meter: OpMeter | None = None
) -> float:
    """log P(e) computed over abstract values only."""
    tree = atree.base
    if not tree.edges:
        part = atree.clique_partitions[0]
        ids, vals, log_scale = _block_products(atree, factors, 0, part, [], meter)
        if meter is not None:
            meter.add("multiply_add", len(ids))
        total = float(np.dot(vals, part.block_sizes()[ids]))
        return -math.inf if total == 0.0 or log_scale == -math.inf else math.log(total) + log_scale
    a, b = tree.edges[0]
    cache: dict = {}
    f_ab = _message(atree, factors, a, b, cache, meter)
    f_ba = _message(atree, factors, b, a, cache, meter)
    if f_ab.is_zero or f_ba.is_zero:
        return -math.inf
    joint = refine(f_ab.partition, f_ba.partition)
    ids = np.array(joint.nonzero_block_ids(), dtype=np.int64)
    reps = joint.representatives()[ids]
    vals = f_ab.values[f_ab.partition.block_of[reps]] * f_ba.values[f_ba.partition.block_of[reps]]
    if meter is not None:
        meter.add("multiply_add", len(ids))
    total = float(np.dot(vals, joint.block_sizes()[ids]))
    if total == 0.0:
        return -math.inf
    return math.log(total) + f_ab.log_scale + f_ba.log_scale


@dataclass(eq=False)
class AbstractPosterior:
    """P(e, c_l) stored once per block of the clique's posterior partition."""

    scope: JointDomain
    partition: Partition
    values: np.ndarray
    log_scale: float

    def expanded(self) -> np.ndarray:
        if self.log_scale == -math.inf:
            return np.zeros(self.scope.size)
        return self.values[self.partition.block_of] * math.exp(self.log_scale)

    def log_total(self) -> float:
        total = float(np.dot(self.values, self.partition.block_sizes()))
        if total == 0.0 or self.log_scale == -math.inf:
            return -math.inf
        return math.log(total) + self.log_scale


def abstracted_posteriors(
    atree: AbstractedCliqueTree, factors: Sequence[Factor], meter: OpMeter | None = None
) -> list[AbstractPosterior]:
    tree = atree.base
    cache: dict = {}
    out = []
    for node in range(len(tree)):
        inbound = [_message(atree, factors, n, node, cache, meter) for n in tree.neighbors(node)]
        part = atree.posterior_partition(node)
        values = np.zeros(part.num_blocks)
        log_scale = -math.inf
        if not any(m.is_zero for m in inbound):
            ids, vals, log_scale = _block_products(atree, factors, node, part, inbound, meter)
            values[ids] = vals
        out.append(AbstractPosterior(tree.domain(node), part, values, log_scale))
    return out


@dataclass
class SeparatorSaving:
    frm: int
    to: int
    variables: tuple[int, ...]
    size: int
    blocks: int

    @property
    def ratio(self) -> float:
        return self.blocks / self.size


@dataclass
class SavingsReport:
    separators: list[SeparatorSaving]
    clique_sizes: list[int]
    clique_blocks: list[int]

    @property
    def total_original(self) -> int:
        return sum(self.clique_sizes)

    @property
    def total_abstracted(self) -> int:
        return sum(self.clique_blocks)


def savings_report(tree: CliqueTree, atree: AbstractedCliqueTree) -> SavingsReport:
    seps = []
    for a, b in tree.directed_edges():
        part = atree.separator_partitions[(a, b)]
        seps.append(SeparatorSaving(a, b, tree.separator(a, b), tree.sep_domain(a, b).size, part.num_blocks))
    sizes = [tree.domain(n).size for n in range(len(tree))]
    blocks = [atree.posterior_partition(n).num_blocks for n in range(len(tree))]
    return SavingsReport(seps, sizes, blocks)
