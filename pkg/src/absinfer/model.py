"""Discrete Bayesian networks: variables, conditional tables, evidence.

Values are referred to by dense 0-based indices everywhere inside the
package; labels only appear when reading or writing files.  A CPT table is
stored as an array of shape ``(|Pa_1|, ..., |Pa_k|, |X|)`` so that its
flattened C-order layout is row-major over parent configurations with the
last listed parent varying fastest, and the child value innermost.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CyclicGraph, ParseError, RowSumViolation, ShapeMismatch

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    domain: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(str(v) for v in self.domain))
        if len(self.domain) < 1:
            raise ShapeMismatch(f"variable {self.name!r} has an empty domain")
        if len(set(self.domain)) != len(self.domain):
            raise ShapeMismatch(f"variable {self.name!r} has duplicate domain labels")

    @property
    def size(self) -> int:
        return len(self.domain)


@dataclass(frozen=True, eq=False)
class Cpt:
    child: int
    parents: tuple[int, ...]
    table: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        arr = np.array(self.table, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "table", arr)

    @property
    def family(self) -> tuple[int, ...]:
        return self.parents + (self.child,)


@dataclass(frozen=True, eq=False)
class Network:
    """A DAG of discrete variables with one CPT per variable.

    ``cpts[i]`` is the table whose child is variable ``i``.  Construction
    checks shapes and the one-CPT-per-variable rule; row sums and
    acyclicity are left to :func:`validate_network` because abstracted
    networks legitimately carry rows that sum to less than one.
    """

    variables: tuple[Variable, ...]
    cpts: tuple[Cpt, ...]
    _by_name: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        variables = tuple(self.variables)
        for i, v in enumerate(variables):
            if v.id != i:
                raise ShapeMismatch(f"variable ids must be dense 0..n-1; got {v.id} at position {i}")
        by_child = {}
        for cpt in self.cpts:
            if not 0 <= cpt.child < len(variables):
                raise ShapeMismatch(f"CPT for unknown variable id {cpt.child}")
            if cpt.child in by_child:
                raise ShapeMismatch(f"variable {variables[cpt.child].name!r} has more than one CPT")
            by_child[cpt.child] = cpt
        missing = [v.name for v in variables if v.id not in by_child]
        if missing:
            raise ShapeMismatch(f"variables without a CPT: {missing}")
        cpts = []
        for i in range(len(variables)):
            cpt = by_child[i]
            for p in cpt.parents:
                if not 0 <= p < len(variables):
                    raise ShapeMismatch(f"CPT of {variables[cpt.child].name!r} names unknown parent {p}")
            if len(set(cpt.parents)) != len(cpt.parents) or cpt.child in cpt.parents:
                raise ShapeMismatch(f"CPT of {variables[cpt.child].name!r} has repeated variables")
            expected = tuple(variables[p].size for p in cpt.parents) + (variables[cpt.child].size,)
            if cpt.table.shape != expected:
                if cpt.table.size == int(np.prod(expected)):
                    cpt = Cpt(cpt.child, cpt.parents, cpt.table.reshape(expected))
                else:
                    raise ShapeMismatch(
                        f"CPT of {variables[cpt.child].name!r} has {cpt.table.size} entries, "
                        f"expected {int(np.prod(expected))}"
                    )
            cpts.append(cpt)
        names = {}
        for v in variables:
            if v.name in names:
                raise ShapeMismatch(f"duplicate variable name {v.name!r}")
            names[v.name] = v.id
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "cpts", tuple(cpts))
        object.__setattr__(self, "_by_name", names)

    def __len__(self):
        return len(self.variables)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.size for v in self.variables)

    def var_id(self, name: str) -> int:
        return self._by_name[name]

    def has_name(self, name: str) -> bool:
        return name in self._by_name

    def children(self) -> list[list[int]]:
        out = [[] for _ in self.variables]
        for cpt in self.cpts:
            for p in cpt.parents:
                out[p].append(cpt.child)
        return out

    def replace_cpts(self, new: Mapping[int, np.ndarray]) -> "Network":
        """Copy of the network with the tables of some children swapped out."""
        cpts = [
            Cpt(c.child, c.parents, new[c.child]) if c.child in new else c for c in self.cpts
        ]
        return Network(self.variables, tuple(cpts))


Evidence = Mapping[int, frozenset]


def make_evidence(net: Network, ev: Mapping[int, Iterable[int]]) -> dict[int, frozenset]:
    """Normalise an id -> values mapping, checking values are in range."""
    out = {}
    for var, values in ev.items():
        var = int(var)
        if not 0 <= var < len(net):
            raise ShapeMismatch(f"evidence on unknown variable id {var}")
        if isinstance(values, (int, np.integer)):
            values = (values,)
        s = frozenset(int(v) for v in values)
        size = net.variables[var].size
        if not s or any(not 0 <= v < size for v in s):
            raise ShapeMismatch(f"evidence subset {sorted(s)} invalid for {net.variables[var].name!r}")
        out[var] = s
    return out


def validate_network(net: Network) -> None:
    """Raise unless every CPT row sums to one and the graph is acyclic."""
    topological_order(net)
    for cpt in net.cpts:
        sums = cpt.table.sum(axis=-1)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if len(bad):
            config = tuple(int(i) for i in bad[0])
            raise RowSumViolation(net.variables[cpt.child].name, config, float(sums[tuple(bad[0])]))


def topological_order(net: Network) -> list[int]:
    """Kahn's algorithm, always releasing the smallest ready id first."""

    indeg = [len(c.parents) for c in net.cpts]
    children = net.children()
    ready = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(ready, c)
    if len(order) != len(net):
        stuck = sorted(net.variables[i].name for i, d in enumerate(indeg) if d > 0)
        raise CyclicGraph(f"parent relation has a cycle through {stuck}")
    return order


def evidence_indicator(var: int, ev: Evidence, size: int) -> np.ndarray:
    """0/1 vector over the values of ``var`` marking those allowed by ``ev``."""
    if var not in ev:
        return np.ones(size)
    out = np.zeros(size)
    out[sorted(ev[var])] = 1.0
    return out


# -- JSON I/O -----------------------------------------------------------------


def network_from_dict(data: Mapping) -> Network:
    try:
        raw_vars = data["variables"]
        raw_cpts = data["cpts"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"network file needs 'variables' and 'cpts': missing {exc}") from None
    variables = []
    ids = {}
    for i, rv in enumerate(raw_vars):
        try:
            name, domain = rv["name"], rv["domain"]
        except (KeyError, TypeError):
            raise ParseError(f"variables[{i}]: expected an object with 'name' and 'domain'") from None
        if name in ids:
            raise ParseError(f"variables[{i}]: duplicate name {name!r}")
        ids[name] = i
        try:
            variables.append(Variable(i, str(name), tuple(domain)))
        except ShapeMismatch as exc:
            raise ParseError(f"variables[{i}]: {exc}") from None
    cpts = []
    for i, rc in enumerate(raw_cpts):
        try:
            child = ids[rc["child"]]
            parents = tuple(ids[p] for p in rc.get("parents", []))
            table = np.asarray(rc["table"], dtype=np.float64)
        except KeyError as exc:
            raise ParseError(f"cpts[{i}]: unknown variable or missing field {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"cpts[{i}]: {exc}") from None
        cpts.append(Cpt(child, parents, table))
    try:
        return Network(tuple(variables), tuple(cpts))
    except ShapeMismatch as exc:
        raise ParseError(str(exc)) from None


def network_to_dict(net: Network) -> dict:
    return {
        "variables": [{"name": v.name, "domain": list(v.domain)} for v in net.variables],
        "cpts": [
            {
                "child": net.variables[c.child].name,
                "parents": [net.variables[p].name for p in c.parents],
                "table": [float(x) for x in c.table.ravel()],
            }
            for c in net.cpts
        ],
    }


def evidence_from_dict(net: Network, data: Mapping) -> dict[int, frozenset]:
    if not isinstance(data, Mapping):
        raise ParseError("evidence file must hold a JSON object")
    out = {}
    for name, value in data.items():
        if not net.has_name(name):
            raise ParseError(f"evidence names unknown variable {name!r}")
        var = net.variables[net.var_id(name)]
        labels = value if isinstance(value, list) else [value]
        if not labels:
            raise ParseError(f"evidence for {name!r} is an empty set")
        idx = []
        for lab in labels:
            lab = str(lab)
            if lab not in var.domain:
                raise ParseError(f"evidence value {lab!r} not in domain of {name!r}")
            idx.append(var.domain.index(lab))
        out[var.id] = frozenset(idx)
    return out


def evidence_to_dict(net: Network, ev: Evidence) -> dict:
    out = {}
    for var in sorted(ev):
        v = net.variables[var]
        labels = [v.domain[i] for i in sorted(ev[var])]
        out[v.name] = labels[0] if len(labels) == 1 else labels
    return out


def load_json(path) -> object:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_network(path) -> Network:
    return network_from_dict(load_json(path))


def load_evidence(path, net: Network) -> dict[int, frozenset]:
    return evidence_from_dict(net, load_json(path))


def dumps(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def joint_size(net: Network, variables: Sequence[int] | None = None) -> int:
    ids = range(len(net)) if variables is None else variables
    return int(np.prod([net.variables[i].size for i in ids], dtype=object))
