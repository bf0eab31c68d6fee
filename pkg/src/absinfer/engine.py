"""One-call likelihood and posterior computation under each abstraction mode.

Modes:

``none``
    plain clique-tree propagation on the original network;
``value-abstract-only``
    clique-tree propagation on the network returned by value abstraction;
``full``
    value abstraction, then message-level abstraction on its clique tree.

Impossible evidence is a value (``-inf``), never an exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import abstract_propagation as ap
from . import jointree as jt
from .abstractor import AbstractNetwork, value_abstract
from .errors import ImpossibleEvidence
from .factor import OpMeter
from .model import Evidence, Network

MODES = ("full", "value-abstract-only", "none")


@dataclass
class Result:
    mode: str
    loglik: float
    meter: OpMeter = field(default_factory=OpMeter)
    abstract: AbstractNetwork | None = None


def infer(
    net: Network,
    ev: Evidence,
    mode: str = "full",
    heuristic: str = "min-fill",
    tolerance: float = 0.0,
    tree: jt.CliqueTree | None = None,
) -> Result:
    """log P(e) by the requested route; ``tree`` may be a prebuilt tree for ``net``."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    meter = OpMeter()
    if tree is None:
        tree = jt.build_clique_tree(net, heuristic)
    if mode == "none":
        factors = jt.attach_evidence(tree, net, ev)
        return Result(mode, jt.likelihood(tree, factors, meter), meter)
    try:
        anet = value_abstract(net, ev, tolerance, meter)
    except ImpossibleEvidence:
        return Result(mode, -math.inf, meter)
    return Result(mode, abstract_network_loglik(anet, tree, mode, tolerance, meter), meter, anet)


def abstract_network_loglik(
    anet: AbstractNetwork,
    tree: jt.CliqueTree,
    mode: str,
    tolerance: float = 0.0,
    meter: OpMeter | None = None,
    atree: ap.AbstractedCliqueTree | None = None,
) -> float:
    """Likelihood of an abstracted network on the tree of the original.

    The abstracted network has the same DAG, so the original tree is valid
    for it once domain sizes are swapped in.  A precomputed ``atree`` is
    reused instead of re-deriving message abstractions.
    """
    small = anet.as_network()
    atree_base = tree.with_cards(small.cards)
    factors = jt.attach_evidence(atree_base, small, {})
    if mode == "value-abstract-only":
        return jt.likelihood(atree_base, factors, meter)
    if atree is None:
        atree = ap.abstract_clique_tree(atree_base, factors, tolerance, meter)
    return ap.abstracted_likelihood(atree, factors, meter)


def message_abstraction(net: Network, ev: Evidence, tree: jt.CliqueTree, tolerance: float = 0.0, meter=None):
    """Message-level abstraction on the original network; returns (atree, factors)."""
    factors = jt.attach_evidence(tree, net, ev)
    return ap.abstract_clique_tree(tree, factors, tolerance, meter), factors
