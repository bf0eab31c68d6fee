"""Brute-force references: sum the full joint table directly.

Nothing here shares code with the clique-tree engine.  Every quantity is a
sum over an explicitly materialised joint table, accumulated with
:func:`math.fsum`, so inputs are capped by an :class:`EnumerationBudget`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import BudgetExceeded
from .model import Evidence, Network, joint_size
from .partition import Partition


@dataclass(frozen=True)
class EnumerationBudget:
    max_states: int = 10**7


DEFAULT_BUDGET = EnumerationBudget()


def _broadcast(table: np.ndarray, axes: tuple[int, ...], ndim: int) -> np.ndarray:
    """View ``table`` (axes in the given variable order) against an ``ndim`` joint grid."""
    order = np.argsort(axes)
    t = np.transpose(table, order)
    shape = [1] * ndim
    for ax, size in zip(sorted(axes), t.shape):
        shape[ax] = size
    return t.reshape(shape)


def joint_table(
    net: Network,
    ev: Evidence,
    budget: EnumerationBudget = DEFAULT_BUDGET,
    skip: Iterable[int] = (),
) -> np.ndarray:
    """P(x_1..x_n, e) for every joint assignment, as an array with one axis per variable.

    CPTs of the variables in ``skip`` are left out of the product.
    """
    states = joint_size(net)
    if states > budget.max_states:
        raise BudgetExceeded(f"{states} joint states exceeds budget {budget.max_states}")
    n = len(net)
    skip = set(skip)
    joint = np.ones(net.cards)
    for cpt in net.cpts:
        if cpt.child in skip:
            continue
        joint = joint * _broadcast(cpt.table, cpt.family, n)
    for var, allowed in ev.items():
        ind = np.zeros(net.variables[var].size)
        ind[sorted(allowed)] = 1.0
        joint = joint * _broadcast(ind, (var,), n)
    return joint


def _fsum_rows(mat: np.ndarray) -> np.ndarray:
    return np.array([math.fsum(row) for row in mat])


def enumerate_likelihood(net: Network, ev: Evidence, budget: EnumerationBudget = DEFAULT_BUDGET) -> float:
    return math.fsum(joint_table(net, ev, budget).ravel())


def enumerate_posterior(
    net: Network, ev: Evidence, scope: Iterable[int], budget: EnumerationBudget = DEFAULT_BUDGET
) -> np.ndarray:
    """Table of P(e, scope = s) with axes in ascending variable id order."""
    scope = sorted(set(scope))
    joint = joint_table(net, ev, budget)
    if not scope:
        return np.array(math.fsum(joint.ravel()))
    rest = [a for a in range(len(net)) if a not in scope]
    cards = [net.variables[v].size for v in scope]
    mat = np.transpose(joint, scope + rest).reshape(int(np.prod(cards)), -1)
    return _fsum_rows(mat).reshape(cards)


def _group_close(rows: np.ndarray, rtol: float) -> np.ndarray:
    """Greedy grouping: each row joins the first earlier group it is allclose to."""
    labels = np.empty(len(rows), dtype=np.int64)
    reps: list[np.ndarray] = []
    for i, row in enumerate(rows):
        for k, rep in enumerate(reps):
            if np.allclose(row, rep, rtol=rtol, atol=0.0):
                labels[i] = k
                break
        else:
            labels[i] = len(reps)
            reps.append(row)
    return labels


def maximally_safe_partition(
    net: Network, ev: Evidence, var: int, budget: EnumerationBudget = DEFAULT_BUDGET, rtol: float = 0.0
) -> Partition:
    """Coarsest safe abstraction of ``var``: group values by P(e | var = x).

    Grouping is by exact float equality unless ``rtol`` is positive.
    Values with P(var = x) = 0 have no defined conditional and go to the
    zero block, as do values with P(e, var = x) = 0.
    """
    with_ev = enumerate_posterior(net, ev, [var], budget)
    prior = enumerate_posterior(net, {}, [var], budget)
    ratio = np.zeros_like(with_ev)
    ok = prior > 0
    ratio[ok] = with_ev[ok] / prior[ok]
    if rtol > 0:
        labels = _group_close(ratio.reshape(-1, 1), rtol)
    else:
        _, labels = np.unique(ratio, return_inverse=True)
    return Partition.from_labels(labels.ravel(), ratio == 0.0)


def descendants(net: Network, var: int) -> list[int]:
    children = net.children()
    seen, stack = set(), [var]
    while stack:
        for c in children[stack.pop()]:
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return sorted(seen)


def descendant_safe_partition(
    net: Network,
    ev: Evidence,
    var: int,
    supports,
    budget: EnumerationBudget = DEFAULT_BUDGET,
    rtol: float = 1e-12,
) -> Partition:
    """Coarsest partition of ``var`` that preserves the evidence below it.

    With ``D`` the descendants of ``var`` and ``R`` the other parents of
    ``D``, define ``h(x, r) = e_var(x) * sum_d prod_{d in D} P(d | pa_d) e_d(d)``
    where ``d`` and ``r`` range over the boolean ``supports`` masks.  Two
    supported values share a block iff ``h(x, .)`` and ``h(x', .)`` agree
    within ``rtol`` (products of several CPT entries are summed here in a
    different association than any abstraction would use, so bitwise
    equality would split values that are equal in exact arithmetic);
    unsupported values form the zero block.  This is the per-variable
    quantity a bottom-up abstraction pass is able to preserve.
    """
    desc = descendants(net, var)
    scope = set(desc) | {var}
    for d in desc:
        scope.update(net.cpts[d].parents)
    scope = sorted(scope)
    sub_cards = [net.variables[v].size for v in scope]
    if int(np.prod(sub_cards, dtype=object)) > budget.max_states:
        raise BudgetExceeded("descendant scope too large")
    pos = {v: i for i, v in enumerate(scope)}
    n = len(scope)
    table = np.ones(sub_cards)
    for d in desc:
        cpt = net.cpts[d]
        table = table * _broadcast(cpt.table, tuple(pos[v] for v in cpt.family), n)
    for v in scope:
        mask = np.asarray(supports[v], dtype=float)
        if v in ev:
            ind = np.zeros(net.variables[v].size)
            ind[sorted(ev[v])] = 1.0
            mask = mask * ind if (v == var or v in desc) else mask
        table = table * _broadcast(mask, (pos[v],), n)
    d_axes = [pos[d] for d in desc]
    r_axes = [pos[v] for v in scope if v != var and v not in desc]
    size_x = net.variables[var].size
    t = np.transpose(table, [pos[var]] + r_axes + d_axes)
    size_r = int(np.prod([sub_cards[a] for a in r_axes], dtype=np.int64))
    t = t.reshape(size_x, size_r, -1)
    h = np.array([[math.fsum(cell) for cell in row] for row in t])
    labels = _group_close(h, rtol)
    unsupported = ~np.asarray(supports[var], dtype=bool)
    return Partition.from_labels(labels, unsupported)
