"""Partitions of finite value domains and the operations on them.

A :class:`Partition` maps each value index of a (possibly joint) domain to
a block id.  Block ids are canonical: blocks are numbered by their smallest
member, so two partitions are equal exactly when their ``block_of`` arrays
are.  One block may be flagged as the zero block, collecting values whose
associated function value is known to be exactly 0.

Joint domains are flattened in C order over variables sorted by id (the
last variable varies fastest), matching the axis order of factor tables.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainMismatch, EmptyDomain, ScopeMismatch


@dataclass(frozen=True, eq=False)
class Partition:
    block_of: np.ndarray
    num_blocks: int
    zero_block: int | None = None

    @classmethod
    def from_labels(cls, labels, zero_mask=None) -> "Partition":
        """Canonical partition grouping values with equal labels.

        Values flagged in ``zero_mask`` are pooled into the zero block no
        matter what their label is.
        """
        labels = np.asarray(labels, dtype=np.int64).ravel()
        if labels.size == 0:
            raise EmptyDomain("cannot partition an empty domain")
        has_zero = zero_mask is not None and bool(np.any(zero_mask))
        if has_zero:
            zero_mask = np.asarray(zero_mask, dtype=bool).ravel()
            labels = np.where(zero_mask, labels.min() - 1, labels)
        uniq, first, inv = np.unique(labels, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty(len(uniq), dtype=np.int64)
        rank[order] = np.arange(len(uniq))
        block_of = rank[inv.ravel()]
        block_of.setflags(write=False)
        zero_block = int(rank[0]) if has_zero else None
        return cls(block_of, len(uniq), zero_block)

    @property
    def domain_size(self) -> int:
        return len(self.block_of)

    @property
    def zero_mask(self) -> np.ndarray:
        if self.zero_block is None:
            return np.zeros(self.domain_size, dtype=bool)
        return self.block_of == self.zero_block

    @property
    def num_nonzero_blocks(self) -> int:
        return self.num_blocks - (self.zero_block is not None)

    def nonzero_block_ids(self) -> list[int]:
        return [b for b in range(self.num_blocks) if b != self.zero_block]

    def blocks(self) -> list[np.ndarray]:
        order = np.argsort(self.block_of, kind="stable")
        bounds = np.cumsum(np.bincount(self.block_of, minlength=self.num_blocks))[:-1]
        return np.split(order, bounds)

    def block_sizes(self) -> np.ndarray:
        return np.bincount(self.block_of, minlength=self.num_blocks)

    def representatives(self) -> np.ndarray:
        """Smallest member of each block, indexed by block id."""
        reps = np.empty(self.num_blocks, dtype=np.int64)
        # reversed assignment leaves the first occurrence in place
        reps[self.block_of[::-1]] = np.arange(self.domain_size - 1, -1, -1)
        return reps

    def is_finest(self) -> bool:
        return self.num_blocks == self.domain_size

    def with_zeros(self, zero_mask) -> "Partition":
        """Same partition with extra values moved into the zero block."""
        mask = self.zero_mask | np.asarray(zero_mask, dtype=bool).ravel()
        return Partition.from_labels(self.block_of, mask)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (
            self.num_blocks == other.num_blocks
            and self.zero_block == other.zero_block
            and np.array_equal(self.block_of, other.block_of)
        )

    def __hash__(self):
        return hash((self.num_blocks, self.zero_block, self.block_of.tobytes()))

    def __str__(self):
        parts = []
        for b, members in enumerate(self.blocks()):
            s = "{" + ",".join(str(int(m)) for m in members) + "}"
            parts.append(s + "*" if b == self.zero_block else s)
        return "|".join(parts)

    def __repr__(self):
        return f"Partition({self})"


def parse_partition(text: str) -> Partition:
    """Inverse of ``str(partition)``."""
    members = {}
    zero = None
    for b, chunk in enumerate(text.split("|")):
        chunk = chunk.strip()
        if chunk.endswith("*"):
            zero = b
            chunk = chunk[:-1]
        for m in chunk.strip("{}").split(","):
            members[int(m)] = b
    labels = [members[i] for i in range(len(members))]
    mask = None if zero is None else [lab == zero for lab in labels]
    return Partition.from_labels(labels, mask)


def from_blocks(blocks: Iterable[Iterable[int]], zero: Iterable[int] = ()) -> Partition:
    """Build a partition from explicit blocks; ``zero`` lists the zero block's members."""
    labels = {}
    for b, block in enumerate(blocks):
        for v in block:
            labels[int(v)] = b
    zero = [int(z) for z in zero]
    for z in zero:
        labels[z] = -1
    n = len(labels)
    if sorted(labels) != list(range(n)):
        raise DomainMismatch("blocks must cover 0..n-1 exactly once")
    arr = np.array([labels[i] for i in range(n)])
    return Partition.from_labels(arr, arr == -1 if zero else None)


def finest(domain_size: int) -> Partition:
    if domain_size < 1:
        raise EmptyDomain(f"domain size must be at least 1, got {domain_size}")
    return Partition.from_labels(np.arange(domain_size))


def coarsest(domain_size: int) -> Partition:
    if domain_size < 1:
        raise EmptyDomain(f"domain size must be at least 1, got {domain_size}")
    return Partition.from_labels(np.zeros(domain_size, dtype=np.int64))


def evidence_partition(domain_size: int, allowed: Iterable[int]) -> Partition:
    """Allowed values form one block; the rest form the zero block."""
    mask = np.ones(domain_size, dtype=bool)
    mask[list(allowed)] = False
    return Partition.from_labels(np.zeros(domain_size, dtype=np.int64), mask)


def _check_same(p1: Partition, p2: Partition):
    if p1.domain_size != p2.domain_size:
        raise DomainMismatch(f"partitions over {p1.domain_size} and {p2.domain_size} values")


def refine(p1: Partition, p2: Partition) -> Partition:
    """Tight refinement: values share a block iff they do in both inputs."""
    _check_same(p1, p2)
    labels = p1.block_of * p2.num_blocks + p2.block_of
    return Partition.from_labels(labels, p1.zero_mask | p2.zero_mask)


def refine_all(parts: Sequence[Partition]) -> Partition:
    return functools.reduce(refine, parts)


def is_finer(p1: Partition, p2: Partition) -> bool:
    """True iff every non-zero block of ``p1`` lies inside a block of ``p2``
    and every zero value of ``p2`` is also zero in ``p1``.

    Knowing a value is impossible counts as finer than any grouping of it,
    which keeps :func:`refine` the meet of this order.
    """
    _check_same(p1, p2)
    z1, z2 = p1.zero_mask, p2.zero_mask
    if (z2 & ~z1).any():
        return False
    live = ~z1
    pairs = np.unique(p1.block_of[live] * p2.num_blocks + p2.block_of[live])
    return len(pairs) == p1.num_nonzero_blocks


# -- joint domains -------------------------------------------------------------


@dataclass(frozen=True)
class JointDomain:
    variables: tuple[int, ...]
    cards: tuple[int, ...]

    def __post_init__(self):
        vs = tuple(int(v) for v in self.variables)
        cs = tuple(int(c) for c in self.cards)
        if len(vs) != len(cs):
            raise ScopeMismatch("variables and cards differ in length")
        if list(vs) != sorted(set(vs)):
            raise ScopeMismatch(f"scope variables must be unique and ascending: {vs}")
        object.__setattr__(self, "variables", vs)
        object.__setattr__(self, "cards", cs)

    @classmethod
    def of(cls, variables: Iterable[int], cards) -> "JointDomain":
        """Scope over ``variables`` with sizes looked up in ``cards`` (indexable by id)."""
        vs = sorted(set(int(v) for v in variables))
        return cls(tuple(vs), tuple(cards[v] for v in vs))

    @property
    def size(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64))

    def card_of(self) -> dict[int, int]:
        return dict(zip(self.variables, self.cards))

    def union(self, other: "JointDomain") -> "JointDomain":
        merged = self.card_of()
        for v, c in zip(other.variables, other.cards):
            if merged.setdefault(v, c) != c:
                raise ScopeMismatch(f"variable {v} has sizes {merged[v]} and {c}")
        vs = sorted(merged)
        return JointDomain(tuple(vs), tuple(merged[v] for v in vs))

    def sub(self, variables: Iterable[int]) -> "JointDomain":
        cards = self.card_of()
        try:
            return JointDomain.of(variables, cards)
        except KeyError as exc:
            raise ScopeMismatch(f"variable {exc} not in scope {self.variables}") from None

    def project(self, sub: "JointDomain") -> np.ndarray:
        """For each flat index of this domain, the flat index of its restriction to ``sub``."""
        return _projection(self, sub)


@functools.lru_cache(maxsize=4096)
def _projection(dom: JointDomain, sub: JointDomain) -> np.ndarray:
    cards = dom.card_of()
    for v, c in zip(sub.variables, sub.cards):
        if cards.get(v) != c:
            raise ScopeMismatch(f"{sub.variables} is not a sub-scope of {dom.variables}")
    idx = np.zeros(dom.cards, dtype=np.int64)
    stride = 1
    for v, c in reversed(list(zip(sub.variables, sub.cards))):
        axis = dom.variables.index(v)
        shape = [1] * len(dom.cards)
        shape[axis] = c
        idx += np.arange(c, dtype=np.int64).reshape(shape) * stride
        stride *= c
    out = idx.ravel()
    out.setflags(write=False)
    return out


def _check_domain(p: Partition, dom: JointDomain):
    if p.domain_size != dom.size:
        raise ScopeMismatch(f"partition over {p.domain_size} values but scope has {dom.size}")


def combine(px: Partition, dom_x: JointDomain, py: Partition, dom_y: JointDomain):
    """Combined abstraction over the union scope; returns ``(partition, scope)``.

    Two joint values share a block iff both projections share blocks; a
    value is zero when either projection is zero.
    """
    _check_domain(px, dom_x)
    _check_domain(py, dom_y)
    dom_z = dom_x.union(dom_y)
    ix = dom_z.project(dom_x)
    iy = dom_z.project(dom_y)
    labels = px.block_of[ix] * py.num_blocks + py.block_of[iy]
    zero = px.zero_mask[ix] | py.zero_mask[iy]
    return Partition.from_labels(labels, zero), dom_z


def combine_onto(dom_z: JointDomain, parts: Sequence[tuple[Partition, JointDomain]]) -> Partition:
    """Combine several partitions whose scopes all lie inside ``dom_z``."""
    labels = np.zeros(dom_z.size, dtype=np.int64)
    zero = np.zeros(dom_z.size, dtype=bool)
    for p, dom in parts:
        _check_domain(p, dom)
        idx = dom_z.project(dom)
        labels = labels * p.num_blocks + p.block_of[idx]
        zero |= p.zero_mask[idx]
        # keep labels small so repeated products cannot overflow
        labels = Partition.from_labels(labels).block_of
    return Partition.from_labels(labels, zero)


def marginalize(p: Partition, dom: JointDomain, onto: Iterable[int]):
    """Abstraction of the summed-out scope; returns ``(partition, scope)``.

    ``y`` and ``y'`` share a block iff ``p(x, y) == p(x, y')`` for every
    ``x``; ``y`` is zero iff ``p(x, y)`` is zero for every ``x``.
    """
    _check_domain(p, dom)
    dom_y = dom.sub(onto)
    y_axes = [dom.variables.index(v) for v in dom_y.variables]
    x_axes = [a for a in range(len(dom.variables)) if a not in y_axes]
    grid = p.block_of.reshape(dom.cards).transpose(y_axes + x_axes).reshape(dom_y.size, -1)
    _, labels = np.unique(grid, axis=0, return_inverse=True)
    zero = None
    if p.zero_block is not None:
        zero = np.all(grid == p.zero_block, axis=1)
    return Partition.from_labels(labels.ravel(), zero), dom_y


def coarsest_safe_for(values, tolerance: float = 0.0) -> Partition:
    """Group entries of a table by equal value; exact zeros form the zero block.

    With ``tolerance > 0`` values ``a``, ``b`` are grouped when
    ``|a - b| <= tolerance * max(|a|, |b|)`` against the first (smallest)
    member of a run of sorted values.  That mode is approximate.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    zero = values == 0.0
    if tolerance <= 0.0:
        _, labels = np.unique(values, return_inverse=True)
        return Partition.from_labels(labels.ravel(), zero)
    order = np.argsort(values, kind="stable")
    labels = np.empty(len(values), dtype=np.int64)
    label = -1
    anchor = None
    for i in order:
        v = values[i]
        if anchor is None or abs(v - anchor) > tolerance * max(abs(v), abs(anchor)):
            label += 1
            anchor = v
        labels[i] = label
    return Partition.from_labels(labels, zero)
