"""Pedigrees and linkage likelihoods.

A pedigree problem compiles to a haplotype-level network: for individual
``i`` and locus ``A`` the variables ``A[i,p]``/``A[i,m]`` carry the alleles
inherited from the father and the mother.  Non-founders also get binary
selectors ``S_A[i,p]``/``S_A[i,m]`` recording which grandparental copy was
passed on; along the locus map each selector depends on the same-side
selector at the previous locus, switching with probability theta.  Marker
typings are unordered, so each becomes a yes/no observation variable that
is observed "yes".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import abstract_propagation as ap
from . import jointree as jt
from .abstractor import abstract_phase, construct_tables, discard
from .engine import abstract_network_loglik, infer
from .errors import ImpossibleEvidence, InvalidObservation, InvalidPedigree, InvalidScan, ParseError
from .model import Cpt, Network, Variable

SEXES = ("male", "female", "unknown")
# reference recombination fraction at which reusable abstractions are computed;
# any value strictly inside (0, 0.5) avoids the zero/tie coincidences of the endpoints
REFERENCE_THETA = 0.1234567


@dataclass(frozen=True)
class Individual:
    id: str
    father: str | None = None
    mother: str | None = None
    sex: str = "unknown"

    @property
    def founder(self) -> bool:
        return self.father is None


@dataclass(frozen=True, eq=False)
class Locus:
    name: str
    kind: str
    alleles: tuple[str, ...]
    freqs: tuple[float, ...]
    phenotypes: tuple[str, ...] = ()
    penetrance: np.ndarray | None = None  # (paternal allele, maternal allele, phenotype)

    def __post_init__(self):
        object.__setattr__(self, "alleles", tuple(str(a) for a in self.alleles))
        object.__setattr__(self, "freqs", tuple(float(f) for f in self.freqs))
        object.__setattr__(self, "phenotypes", tuple(str(p) for p in self.phenotypes))
        if self.penetrance is not None:
            n = len(self.alleles)
            pen = np.asarray(self.penetrance, dtype=np.float64).reshape(n, n, len(self.phenotypes))
            object.__setattr__(self, "penetrance", pen)


@dataclass(frozen=True)
class PedigreeProblem:
    individuals: tuple[Individual, ...]
    loci: tuple[Locus, ...]
    theta: tuple[float, ...]
    # (individual, locus) -> (allele, allele) for markers, phenotype label for traits
    observations: Mapping[tuple[str, str], object] = field(default_factory=dict)

    def with_theta(self, theta: Sequence[float]) -> "PedigreeProblem":
        return PedigreeProblem(self.individuals, self.loci, tuple(theta), self.observations)

    def only_locus(self, name: str) -> "PedigreeProblem":
        """Single-locus sub-problem keeping that locus's observations."""
        loci = tuple(l for l in self.loci if l.name == name)
        obs = {k: v for k, v in self.observations.items() if k[1] == name}
        return PedigreeProblem(self.individuals, loci, (), obs)


def validate_problem(problem: PedigreeProblem) -> list[Individual]:
    """Check the problem; return individuals ordered parents-first."""
    if not problem.individuals:
        raise InvalidPedigree("pedigree has no individuals")
    if not problem.loci:
        raise InvalidPedigree("pedigree has no loci")
    by_id = {}
    for ind in problem.individuals:
        if ind.id in by_id:
            raise InvalidPedigree(f"duplicate individual {ind.id!r}")
        if ind.sex not in SEXES:
            raise InvalidPedigree(f"individual {ind.id!r}: sex must be one of {SEXES}")
        if (ind.father is None) != (ind.mother is None):
            raise InvalidPedigree(f"individual {ind.id!r} must have both parents or neither")
        by_id[ind.id] = ind
    for ind in problem.individuals:
        for parent in (ind.father, ind.mother):
            if parent is not None and parent not in by_id:
                raise InvalidPedigree(f"individual {ind.id!r} names unknown parent {parent!r}")
    names = [l.name for l in problem.loci]
    if len(set(names)) != len(names):
        raise InvalidPedigree("duplicate locus names")
    for locus in problem.loci:
        if locus.kind not in ("marker", "trait"):
            raise InvalidPedigree(f"locus {locus.name!r}: kind must be marker or trait")
        if len(locus.freqs) != len(locus.alleles) or abs(sum(locus.freqs) - 1.0) > 1e-9:
            raise InvalidPedigree(f"locus {locus.name!r}: founder frequencies must match alleles and sum to 1")
        if min(locus.freqs) < 0:
            raise InvalidPedigree(f"locus {locus.name!r}: negative frequency")
        if locus.kind == "trait":
            if locus.penetrance is None or not locus.phenotypes:
                raise InvalidPedigree(f"trait locus {locus.name!r} needs phenotypes and a penetrance table")
            if np.any(np.abs(locus.penetrance.sum(axis=-1) - 1.0) > 1e-9):
                raise InvalidPedigree(f"trait locus {locus.name!r}: penetrance rows must sum to 1")
    if len(problem.theta) != len(problem.loci) - 1:
        raise InvalidPedigree(f"need {len(problem.loci) - 1} recombination fractions, got {len(problem.theta)}")
    for t in problem.theta:
        if not 0.0 <= t <= 0.5:
            raise InvalidPedigree(f"recombination fraction {t} outside [0, 0.5]")
    loci = {l.name: l for l in problem.loci}
    for (ind, lname), value in problem.observations.items():
        if ind not in by_id:
            raise InvalidObservation(f"observation for unknown individual {ind!r}")
        if lname not in loci:
            raise InvalidObservation(f"observation for unknown locus {lname!r}")
        locus = loci[lname]
        if locus.kind == "marker":
            if len(value) != 2 or any(a not in locus.alleles for a in value):
                raise InvalidObservation(f"{ind!r} at {lname!r}: typing {value!r} not an allele pair of the locus")
        elif value not in locus.phenotypes:
            raise InvalidObservation(f"{ind!r} at {lname!r}: unknown phenotype {value!r}")

    ordered, placed = [], set()
    pending = list(problem.individuals)
    while pending:
        rest = [i for i in pending if not (i.founder or (i.father in placed and i.mother in placed))]
        ready = [i for i in pending if i not in rest]
        if not ready:
            raise InvalidPedigree(f"cyclic ancestry among {[i.id for i in rest]}")
        for i in ready:
            ordered.append(i)
            placed.add(i.id)
        pending = rest
    return ordered


def selector_table(theta: float) -> np.ndarray:
    return np.array([[1.0 - theta, theta], [theta, 1.0 - theta]])


def transmission_table(n_alleles: int) -> np.ndarray:
    """P(child copy | selector, parent's paternal, parent's maternal)."""
    t = np.zeros((2, n_alleles, n_alleles, n_alleles))
    for a in range(n_alleles):
        for b in range(n_alleles):
            t[0, a, b, a] = 1.0
            t[1, a, b, b] = 1.0
    return t


def typing_table(locus: Locus, pair) -> np.ndarray:
    """P(match | paternal, maternal) with domain (yes, no)."""
    n = len(locus.alleles)
    want = sorted(locus.alleles.index(a) for a in pair)
    t = np.zeros((n, n, 2))
    for a in range(n):
        for b in range(n):
            t[a, b, 0 if sorted((a, b)) == want else 1] = 1.0
    return t


@dataclass(frozen=True, eq=False)
class CompiledPedigree:
    problem: PedigreeProblem
    network: Network
    evidence: dict[int, frozenset]
    names: dict[tuple[str, str, str], int]
    # theta-dependent selector variable id -> index of the locus gap it spans
    selector_cpts: dict[int, int]

    def network_at(self, theta: Sequence[float]) -> Network:
        """Same network with only the selector tables rewritten for new recombination fractions."""
        return self.network.replace_cpts({v: selector_table(theta[k]) for v, k in self.selector_cpts.items()})

    def name_map(self) -> list[dict]:
        return [
            {"individual": i, "locus": l, "role": r, "variable": self.network.variables[v].name}
            for (i, l, r), v in sorted(self.names.items(), key=lambda kv: kv[1])
        ]


def compile_problem(problem: PedigreeProblem) -> CompiledPedigree:
    individuals = validate_problem(problem)
    variables: list[Variable] = []
    cpts: list[Cpt] = []
    names: dict[tuple[str, str, str], int] = {}
    selectors: dict[int, int] = {}
    evidence: dict[int, frozenset] = {}

    def new_var(key, label, domain, parents, table):
        vid = len(variables)
        variables.append(Variable(vid, label, domain))
        cpts.append(Cpt(vid, tuple(parents), table))
        names[key] = vid
        return vid

    for ind in individuals:
        for t, locus in enumerate(problem.loci):
            L, i = locus.name, ind.id
            if not ind.founder:
                for side in ("p", "m"):
                    if t == 0:
                        new_var((i, L, "S_" + side), f"S_{L}[{i},{side}]", ("0", "1"), (), (0.5, 0.5))
                    else:
                        prev = names[(i, problem.loci[t - 1].name, "S_" + side)]
                        vid = new_var(
                            (i, L, "S_" + side),
                            f"S_{L}[{i},{side}]",
                            ("0", "1"),
                            (prev,),
                            selector_table(problem.theta[t - 1]),
                        )
                        selectors[vid] = t - 1
            n = len(locus.alleles)
            for side, parent in (("p", ind.father), ("m", ind.mother)):
                label = f"{L}[{i},{side}]"
                if ind.founder:
                    new_var((i, L, side), label, locus.alleles, (), locus.freqs)
                else:
                    pa = (names[(i, L, "S_" + side)], names[(parent, L, "p")], names[(parent, L, "m")])
                    new_var((i, L, side), label, locus.alleles, pa, transmission_table(n))
            obs = problem.observations.get((ind.id, L))
            if obs is None:
                continue
            hp, hm = names[(i, L, "p")], names[(i, L, "m")]
            if locus.kind == "marker":
                vid = new_var((i, L, "obs"), f"{L}_typed[{i}]", ("yes", "no"), (hp, hm), typing_table(locus, obs))
                evidence[vid] = frozenset({0})
            else:
                vid = new_var((i, L, "obs"), f"{L}_pheno[{i}]", locus.phenotypes, (hp, hm), locus.penetrance)
                evidence[vid] = frozenset({locus.phenotypes.index(obs)})
    net = Network(tuple(variables), tuple(cpts))
    return CompiledPedigree(problem, net, evidence, names, selectors)


def loglik(problem: PedigreeProblem, mode: str = "full", heuristic: str = "min-fill") -> float:
    comp = compile_problem(problem)
    return infer(comp.network, comp.evidence, mode, heuristic).loglik


@dataclass
class ScanResult:
    points: list[tuple[float, float]]
    mode: str
    reuse: bool
    verified: bool | None = None
    max_discrepancy: float = 0.0


def loglik_agree(a: float, b: float, tol: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a))


def scan_theta(
    problem: PedigreeProblem,
    edge_index: int,
    grid: Sequence[float],
    reuse: bool = False,
    mode: str = "full",
    heuristic: str = "min-fill",
    verify_tol: float = 1e-12,
) -> ScanResult:
    """Log-likelihood at each grid value of one recombination fraction.

    The clique tree is built once; only selector tables change per point.
    With ``reuse`` the value and message abstractions are derived once, at
    a reference recombination fraction strictly inside (0, 0.5), and reused
    for every grid point; the last grid point is then recomputed from
    scratch and the discrepancy recorded.
    """
    if len(problem.loci) < 2:
        raise InvalidScan("problem has a single locus: no recombination fraction to scan")
    if not 0 <= edge_index < len(problem.theta):
        raise InvalidScan(f"edge index {edge_index} outside 0..{len(problem.theta) - 1}")
    if not grid:
        raise InvalidScan("empty grid")
    for t in grid:
        if not 0.0 <= t <= 0.5:
            raise InvalidScan(f"theta {t} outside [0, 0.5]")
    comp = compile_problem(problem)
    tree = jt.build_clique_tree(comp.network, heuristic)

    def thetas(value):
        th = list(problem.theta)
        th[edge_index] = value
        return th

    def fresh(value):
        return infer(comp.network_at(thetas(value)), comp.evidence, mode, heuristic, tree=tree).loglik

    if not reuse or mode == "none":
        return ScanResult([(t, fresh(t)) for t in grid], mode, reuse)

    reference = comp.network_at(thetas(REFERENCE_THETA))
    try:
        supports = discard(reference, comp.evidence)
    except ImpossibleEvidence:
        # zeros at the reference are structural, so every grid point is impossible too
        return ScanResult([(t, -math.inf) for t in grid], mode, reuse, True, 0.0)
    partitions = abstract_phase(reference, comp.evidence, supports)
    atree = None
    if mode == "full":
        anet = construct_tables(reference, partitions, supports=supports)
        small = anet.as_network()
        small_tree = tree.with_cards(small.cards)
        atree = ap.abstract_clique_tree(small_tree, jt.attach_evidence(small_tree, small, {}))
    points = []
    for t in grid:
        anet = construct_tables(comp.network_at(thetas(t)), partitions)
        points.append((t, abstract_network_loglik(anet, tree, mode, atree=atree)))
    check = fresh(grid[-1])
    diff = 0.0 if points[-1][1] == check else abs(points[-1][1] - check)
    return ScanResult(points, mode, reuse, loglik_agree(points[-1][1], check, verify_tol), diff)


# -- JSON I/O -----------------------------------------------------------------


def problem_from_dict(data: Mapping) -> PedigreeProblem:
    if not isinstance(data, Mapping):
        raise ParseError("pedigree file must hold a JSON object")
    try:
        raw_loci = data["loci"]
        raw_inds = data["individuals"]
    except KeyError as exc:
        raise ParseError(f"pedigree file is missing field {exc}") from None
    if not raw_inds:
        raise ParseError("empty pedigree: 'individuals' is empty")
    loci = []
    for k, rl in enumerate(raw_loci):
        try:
            pen = rl.get("penetrance")
            loci.append(
                Locus(
                    name=str(rl["name"]),
                    kind=rl.get("kind", "marker"),
                    alleles=tuple(rl["alleles"]),
                    freqs=tuple(rl["freqs"]),
                    phenotypes=tuple(pen["phenotypes"]) if pen else (),
                    penetrance=np.asarray(pen["table"], dtype=np.float64) if pen else None,
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"loci[{k}]: bad or missing field {exc}") from None
    individuals = []
    for k, ri in enumerate(raw_inds):
        try:
            individuals.append(
                Individual(str(ri["id"]), ri.get("father"), ri.get("mother"), ri.get("sex", "unknown"))
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"individuals[{k}]: bad or missing field {exc}") from None
    obs = {}
    for k, ro in enumerate(data.get("observations", [])):
        try:
            key = (str(ro["individual"]), str(ro["locus"]))
            value = ro["value"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"observations[{k}]: missing field {exc}") from None
        if key in obs:
            raise ParseError(f"observations[{k}]: duplicate observation for {key}")
        obs[key] = tuple(str(a) for a in value) if isinstance(value, list) else str(value)
    theta = tuple(float(t) for t in data.get("theta", []))
    return PedigreeProblem(tuple(individuals), tuple(loci), theta, obs)


def problem_to_dict(problem: PedigreeProblem) -> dict:
    loci = []
    for l in problem.loci:
        d = {"name": l.name, "kind": l.kind, "alleles": list(l.alleles), "freqs": list(l.freqs)}
        if l.penetrance is not None:
            d["penetrance"] = {"phenotypes": list(l.phenotypes), "table": [float(x) for x in l.penetrance.ravel()]}
        loci.append(d)
    inds = []
    for i in problem.individuals:
        d = {"id": i.id}
        if not i.founder:
            d["father"], d["mother"] = i.father, i.mother
        d["sex"] = i.sex
        inds.append(d)
    obs = [
        {"individual": i, "locus": l, "value": list(v) if isinstance(v, tuple) else v}
        for (i, l), v in problem.observations.items()
    ]
    return {"loci": loci, "theta": list(problem.theta), "individuals": inds, "observations": obs}
