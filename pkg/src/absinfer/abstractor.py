"""Network-level value abstraction with respect to fixed evidence.

Three phases:

1. discard: generalised arc consistency over the zero patterns of the CPTs,
   seeded by the evidence, removes values that cannot occur with it;
2. abstract: leaves to roots, each variable's partition is the tight
   refinement of what its children demand, and it in turn demands the
   coarsest cautious partition of each of its parents;
3. construct tables: abstracted CPTs over the non-zero blocks.

Discarded values sit in the zero block of every partition and have no
abstract value of their own, so abstracted CPT rows sum to the retained
probability mass rather than to one.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CautiousnessViolation, ImpossibleEvidence
from .factor import OpMeter
from .model import Cpt, Evidence, Network, Variable, topological_order
from .partition import Partition, coarsest, evidence_partition, refine_all

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SupportSets:
    """Boolean mask per variable of the values that survive the discard phase."""

    masks: tuple[np.ndarray, ...]

    def __getitem__(self, var: int) -> np.ndarray:
        return self.masks[var]

    def __len__(self):
        return len(self.masks)

    def values(self, var: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.masks[var])]

    @classmethod
    def full(cls, net: Network) -> "SupportSets":
        return cls(tuple(np.ones(v.size, dtype=bool) for v in net.variables))


def _along(mask: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = len(mask)
    return mask.reshape(shape)


def discard(net: Network, ev: Evidence, meter: OpMeter | None = None) -> SupportSets:
    """Arc-consistency fixpoint treating each CPT as one n-ary constraint "entry > 0"."""
    masks = []
    for v in net.variables:
        m = np.ones(v.size, dtype=bool)
        if v.id in ev:
            m[:] = False
            m[sorted(ev[v.id])] = True
        masks.append(m)
    touching = [[] for _ in net.variables]
    for cpt in net.cpts:
        for v in cpt.family:
            touching[v].append(cpt.child)
    positive = [cpt.table > 0 for cpt in net.cpts]
    queue = deque(range(len(net)))
    queued = set(queue)
    while queue:
        c = queue.popleft()
        queued.discard(c)
        fam = net.cpts[c].family
        allowed = positive[c]
        for k, v in enumerate(fam):
            allowed = allowed & _along(masks[v], k, len(fam))
        if meter is not None:
            meter.add("discard_touch", allowed.size)
        for k, v in enumerate(fam):
            others = tuple(a for a in range(len(fam)) if a != k)
            supported = allowed.any(axis=others) if others else allowed
            new = masks[v] & supported
            if not np.array_equal(new, masks[v]):
                masks[v] = new
                if not new.any():
                    raise ImpossibleEvidence(v)
                for other in touching[v]:
                    if other != c and other not in queued:
                        queue.append(other)
                        queued.add(other)
    for m in masks:
        m.setflags(write=False)
    return SupportSets(tuple(masks))


def _block_mass(table: np.ndarray, members: Sequence[np.ndarray]) -> np.ndarray:
    """Sum the child axis over each block, always adding in ascending member order.

    A block that holds every positive entry of a row gets mass exactly 1:
    rows are distributions, and summing them in floating point would
    otherwise split parent values whose rows differ only by rounding.
    """
    positive = table > 0
    cols = []
    for block in members:
        acc = table[..., block[0]].copy()
        for x in block[1:]:
            acc += table[..., x]
        outside = np.ones(table.shape[-1], dtype=bool)
        outside[block] = False
        acc[~positive[..., outside].any(axis=-1)] = 1.0
        cols.append(acc)
    return np.stack(cols, axis=-1)


def _group_rows(rows: np.ndarray, tolerance: float) -> np.ndarray:
    if tolerance <= 0.0:
        _, labels = np.unique(rows, axis=0, return_inverse=True)
        return labels.ravel()
    reps: list[np.ndarray] = []
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        for k, rep in enumerate(reps):
            if np.allclose(row, rep, rtol=tolerance, atol=0.0):
                labels[i] = k
                break
        else:
            labels[i] = len(reps)
            reps.append(row)
    return labels


def cautious_parent_partitions(
    cpt: Cpt,
    child_partition: Partition,
    supports: SupportSets,
    tolerance: float = 0.0,
    meter: OpMeter | None = None,
) -> list[Partition]:
    """Coarsest per-parent partitions under which the abstracted child row is constant.

    Two supported values of a parent share a block iff, for every supported
    configuration of the other parents, the mass of every non-zero child
    block is the same.  Unsupported parent values go to the zero block.
    """
    if not cpt.parents:
        return []
    sup_idx = [np.flatnonzero(supports[p]) for p in cpt.parents]
    sub = cpt.table[np.ix_(*sup_idx, np.arange(cpt.table.shape[-1]))]
    blocks = child_partition.blocks()
    members = [blocks[b] for b in child_partition.nonzero_block_ids()]
    mass = _block_mass(sub, members)
    if meter is not None:
        meter.add("abstract_touch", sub.size + mass.size * len(cpt.parents))
    out = []
    for j, p in enumerate(cpt.parents):
        rows = np.moveaxis(mass, j, 0).reshape(len(sup_idx[j]), -1)
        labels = np.zeros(supports[p].size, dtype=np.int64)
        labels[sup_idx[j]] = _group_rows(rows, tolerance)
        out.append(Partition.from_labels(labels, ~supports[p]))
    return out


def abstract_phase(
    net: Network,
    ev: Evidence,
    supports: SupportSets,
    tolerance: float = 0.0,
    meter: OpMeter | None = None,
) -> list[Partition]:
    """Per-variable partitions, computed in reverse topological order."""
    demands: list[list[Partition]] = [[coarsest(v.size)] for v in net.variables]
    for var, allowed in ev.items():
        demands[var].append(evidence_partition(net.variables[var].size, allowed))
    partitions: list[Partition | None] = [None] * len(net)
    for v in reversed(topological_order(net)):
        sigma = refine_all(demands[v]).with_zeros(~supports[v])
        partitions[v] = sigma
        cpt = net.cpts[v]
        for p, part in zip(cpt.parents, cautious_parent_partitions(cpt, sigma, supports, tolerance, meter)):
            demands[p].append(part)
    return partitions


@dataclass(frozen=True, eq=False)
class AbstractNetwork:
    """Abstracted network: one abstract value per non-zero block of each partition.

    ``tables[i]`` has shape ``(|Pa_1^a|, ..., |X_i^a|)`` indexed by abstract
    values; ``abstract_values[i][k]`` is the block id of abstract value ``k``.
    """

    original: Network
    partitions: tuple[Partition, ...]
    tables: tuple[np.ndarray, ...]
    supports: SupportSets | None = None

    @property
    def abstract_values(self) -> list[list[int]]:
        return [p.nonzero_block_ids() for p in self.partitions]

    def domain_sizes(self) -> list[int]:
        return [p.num_nonzero_blocks for p in self.partitions]

    def as_network(self) -> Network:
        """The abstracted network as an ordinary :class:`Network` (rows need not sum to 1)."""
        variables = []
        for var, part in zip(self.original.variables, self.partitions):
            blocks = part.blocks()
            labels = tuple(
                "{" + ",".join(var.domain[m] for m in blocks[b]) + "}" for b in part.nonzero_block_ids()
            )
            variables.append(Variable(var.id, var.name, labels))
        cpts = tuple(Cpt(c.child, c.parents, t) for c, t in zip(self.original.cpts, self.tables))
        return Network(tuple(variables), cpts)


def construct_tables(
    net: Network,
    partitions: Sequence[Partition],
    tolerance: float = 0.0,
    supports: SupportSets | None = None,
    meter: OpMeter | None = None,
) -> AbstractNetwork:
    """Fold every CPT onto the abstract values, auditing cautiousness on every row."""
    tables = []
    worst = 0.0
    for cpt in net.cpts:
        child_part = partitions[cpt.child]
        blocks = child_part.blocks()
        members = [blocks[b] for b in child_part.nonzero_block_ids()]
        idx, block_pos, reps = [], [], []
        for p in cpt.parents:
            part = partitions[p]
            live = np.flatnonzero(~part.zero_mask)
            dense = {b: k for k, b in enumerate(part.nonzero_block_ids())}
            pos = np.array([dense[b] for b in part.block_of[live]], dtype=np.int64)
            first = np.full(len(dense), -1, dtype=np.int64)
            for i in range(len(live) - 1, -1, -1):
                first[pos[i]] = i
            idx.append(live)
            block_pos.append(pos)
            reps.append(first)
        sub = cpt.table[np.ix_(*idx, np.arange(cpt.table.shape[-1]))]
        mass = _block_mass(sub, members)
        if meter is not None:
            meter.add("construct_touch", sub.size)
        table = mass[np.ix_(*reps, np.arange(len(members)))] if cpt.parents else mass
        expected = table[np.ix_(*block_pos, np.arange(len(members)))] if cpt.parents else table
        if tolerance <= 0.0:
            if not np.array_equal(expected, mass):
                bad = float(np.max(np.abs(expected - mass)))
                raise CautiousnessViolation(
                    f"abstracted table of {net.variables[cpt.child].name!r} differs across a parent "
                    f"block by {bad!r}"
                )
        else:
            worst = max(worst, float(np.max(np.abs(expected - mass), initial=0.0)))
        tables.append(table)
    if worst > 0.0:
        log.warning("tolerance-mode abstraction is approximate: max table discrepancy %.3g", worst)
    return AbstractNetwork(net, tuple(partitions), tuple(tables), supports)


def value_abstract(
    net: Network,
    ev: Evidence,
    tolerance: float = 0.0,
    meter: OpMeter | None = None,
) -> AbstractNetwork:
    """Safe, cautious abstraction of ``net`` with respect to ``ev``.

    Raises :class:`ImpossibleEvidence` when the discard phase empties a domain.
    """
    supports = discard(net, ev, meter)
    partitions = abstract_phase(net, ev, supports, tolerance, meter)
    return construct_tables(net, partitions, tolerance, supports, meter)
