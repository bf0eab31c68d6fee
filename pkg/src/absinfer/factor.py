"""Table factors with a log-scale accumulator, plus an operation meter."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .partition import JointDomain


class OpMeter(Counter):
    """Named operation counters (multiply-adds, table touches, ...)."""

    def add(self, name: str, n: int = 1):
        self[name] += int(n)


@dataclass(eq=False)
class Factor:
    """``value(x) = values[x] * exp(log_scale)`` over ``scope``.

    ``values`` has one axis per scope variable, in ascending id order.
    An all-zero factor carries ``log_scale = -inf``.
    """

    scope: JointDomain
    values: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.scope.cards)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def expanded(self, onto: JointDomain) -> np.ndarray:
        """Values broadcast to every flat index of the larger scope ``onto``."""
        return self.flat[onto.project(self.scope)]

    def rescaled(self) -> "Factor":
        """Divide by the max entry, moving it into ``log_scale``."""
        peak = float(self.values.max()) if self.values.size else 0.0
        if peak == 0.0:
            return Factor(self.scope, np.zeros_like(self.values), -math.inf)
        return Factor(self.scope, self.values / peak, self.log_scale + math.log(peak))

    def log_total(self) -> float:
        total = float(self.values.sum())
        if total == 0.0 or self.log_scale == -math.inf:
            return -math.inf
        return math.log(total) + self.log_scale

    def linear(self) -> np.ndarray:
        if self.log_scale == -math.inf:
            return np.zeros_like(self.values)
        return self.values * math.exp(self.log_scale)


def product(onto: JointDomain, factors: Sequence[Factor]) -> Factor:
    """Pointwise product of factors whose scopes lie inside ``onto``."""
    flat = np.ones(onto.size)
    log_scale = 0.0
    for f in factors:
        flat = flat * f.expanded(onto)
        log_scale += f.log_scale
    if math.isnan(log_scale):
        log_scale = -math.inf
    return Factor(onto, flat, log_scale)


def sum_onto(f: Factor, keep: Iterable[int]) -> Factor:
    sub = f.scope.sub(keep)
    drop = tuple(i for i, v in enumerate(f.scope.variables) if v not in sub.variables)
    return Factor(sub, f.values.sum(axis=drop) if drop else f.values.copy(), f.log_scale)
