"""Seeded synthetic inputs: small random networks and textbook examples."""

from __future__ import annotations

import numpy as np

from .model import Cpt, Network, Variable, joint_size


def random_network(
    rng: np.random.Generator,
    max_vars: int = 12,
    max_card: int = 4,
    max_indegree: int = 3,
    zero_frac: float = 0.2,
    max_states: int = 200_000,
) -> Network:
    """Random DAG over ids in topological order with sparse random CPTs.

    Roughly ``zero_frac`` of CPT entries are structural zeros; every row
    keeps at least one positive entry.  Domain sizes are shrunk until the
    joint state space fits in ``max_states`` so brute force stays cheap.
    """
    n = int(rng.integers(2, max_vars + 1))
    cards = [int(c) for c in rng.integers(2, max_card + 1, size=n)]
    while np.prod(cards, dtype=np.int64) > max_states:
        big = int(np.argmax(cards))
        cards[big] -= 1
    variables = tuple(Variable(i, f"X{i}", tuple(str(k) for k in range(cards[i]))) for i in range(n))
    cpts = []
    for i in range(n):
        k = int(rng.integers(0, min(i, max_indegree) + 1))
        parents = tuple(sorted(int(p) for p in rng.choice(i, size=k, replace=False))) if k else ()
        shape = tuple(cards[p] for p in parents) + (cards[i],)
        table = rng.random(shape) + 0.05
        # low-precision entries make exact ties (and hence abstraction) common
        table = np.round(table * 4) / 4 + 0.25
        table[rng.random(shape) < zero_frac] = 0.0
        rows = table.reshape(-1, cards[i])
        for r in rows:
            if not r.any():
                r[rng.integers(cards[i])] = 1.0
        table = rows / rows.sum(axis=1, keepdims=True)
        cpts.append(Cpt(i, parents, table.reshape(shape)))
    return Network(variables, tuple(cpts))


def random_evidence(rng: np.random.Generator, net: Network, max_observed: int = 4) -> dict[int, frozenset]:
    """Point or subset evidence on a few random variables."""
    n = len(net)
    k = int(rng.integers(0, min(max_observed, n) + 1))
    ev = {}
    for var in rng.choice(n, size=k, replace=False):
        size = net.variables[int(var)].size
        m = int(rng.integers(1, size)) if size > 1 else 1
        ev[int(var)] = frozenset(int(v) for v in rng.choice(size, size=m, replace=False))
    return ev


def dice_network(dice_probs=None, bet_probs=(0.5, 0.5)) -> Network:
    """Bet in {odd, even}, Dice in 1..6, Win = yes iff the dice parity matches the bet."""
    dice_probs = np.full(6, 1 / 6) if dice_probs is None else np.asarray(dice_probs, dtype=float)
    win = np.zeros((2, 6, 2))
    for bet in range(2):
        for face in range(6):
            odd = face % 2 == 0  # face index 0 is the value 1
            win[bet, face] = (1.0, 0.0) if odd == (bet == 0) else (0.0, 1.0)
    variables = (
        Variable(0, "Bet", ("odd", "even")),
        Variable(1, "Dice", ("1", "2", "3", "4", "5", "6")),
        Variable(2, "Win", ("yes", "no")),
    )
    cpts = (Cpt(0, (), bet_probs), Cpt(1, (), dice_probs), Cpt(2, (0, 1), win))
    return Network(variables, cpts)


def chain_network(cpts_2x2, prior=(0.5, 0.5)) -> Network:
    """Binary Markov chain X0 -> X1 -> ... with the given transition tables."""
    n = len(cpts_2x2) + 1
    variables = tuple(Variable(i, f"X{i}", ("0", "1")) for i in range(n))
    cpts = [Cpt(0, (), prior)]
    for i, t in enumerate(cpts_2x2, start=1):
        cpts.append(Cpt(i, (i - 1,), t))
    return Network(variables, tuple(cpts))


def equality_network() -> Network:
    """X, Y binary uniform and independent, Z = 1 iff X == Y."""
    variables = (
        Variable(0, "X", ("0", "1")),
        Variable(1, "Y", ("0", "1")),
        Variable(2, "Same", ("no", "yes")),
    )
    same = np.zeros((2, 2, 2))
    for x in range(2):
        for y in range(2):
            same[x, y, int(x == y)] = 1.0
    return Network(variables, (Cpt(0, (), (0.5, 0.5)), Cpt(1, (), (0.5, 0.5)), Cpt(2, (0, 1), same)))


def suite_size_ok(net: Network, budget: int) -> bool:
    return joint_size(net) <= budget


# -- pedigree families ----------------------------------------------------------


def _marker(name: str, n_alleles: int, freqs=None):
    from .pedigree import Locus

    alleles = tuple(f"a{k + 1}" for k in range(n_alleles))
    freqs = tuple([1.0 / n_alleles] * n_alleles) if freqs is None else tuple(freqs)
    return Locus(name, "marker", alleles, freqs)


def dominant_trait(name: str = "D", disease_freq: float = 0.1, penetrance: float = 0.9, phenocopy: float = 0.05):
    """Biallelic trait locus (d, D) with a dominant affected/unaffected model."""
    from .pedigree import Locus

    pen = np.zeros((2, 2, 2))
    for a in range(2):
        for b in range(2):
            p = penetrance if (a == 1 or b == 1) else phenocopy
            pen[a, b] = (p, 1.0 - p)
    return Locus(name, "trait", ("d", "D"), (1.0 - disease_freq, disease_freq), ("affected", "unaffected"), pen)


def trio(n_alleles: int = 2, n_loci: int = 1, theta: float = 0.1, freqs=None):
    """Father, mother, child; the child is typed a1/a2 at every marker."""
    from .pedigree import Individual, PedigreeProblem

    loci = tuple(_marker(f"M{k + 1}", n_alleles, freqs) for k in range(n_loci))
    inds = (
        Individual("father", sex="male"),
        Individual("mother", sex="female"),
        Individual("child", "father", "mother", "female"),
    )
    obs = {("child", l.name): ("a1", "a2") for l in loci}
    return PedigreeProblem(inds, loci, tuple([theta] * (n_loci - 1)), obs)


def three_generation(n_alleles: int = 2, n_loci: int = 2, theta: float = 0.1, with_trait: bool = False):
    """Two grandparent couples, their two children as a couple, and a grandchild.

    Typed individuals only ever show alleles a1 and a2.  With ``with_trait``
    a dominant trait locus is placed first and phenotypes are recorded.
    """
    from .pedigree import Individual, PedigreeProblem

    loci = [_marker(f"M{k + 1}", n_alleles) for k in range(n_loci)]
    if with_trait:
        loci.insert(0, dominant_trait())
    inds = (
        Individual("gf1", sex="male"),
        Individual("gm1", sex="female"),
        Individual("gf2", sex="male"),
        Individual("gm2", sex="female"),
        Individual("father", "gf1", "gm1", "male"),
        Individual("mother", "gf2", "gm2", "female"),
        Individual("child", "father", "mother", "male"),
    )
    obs = {}
    for l in loci:
        if l.kind == "trait":
            obs[("gf1", l.name)] = "affected"
            obs[("father", l.name)] = "affected"
            obs[("child", l.name)] = "affected"
            obs[("mother", l.name)] = "unaffected"
            continue
        obs[("gf1", l.name)] = ("a1", "a1")
        obs[("father", l.name)] = ("a1", "a2")
        obs[("child", l.name)] = ("a1", "a2")
    return PedigreeProblem(inds, tuple(loci), tuple([theta] * (len(loci) - 1)), obs)


def untyped_allele_family(n_alleles: int, structure: str = "trio", n_loci: int = 1, theta: float = 0.1):
    """Marker family where typed individuals show only 2 of ``n_alleles`` alleles."""
    if structure == "trio":
        return trio(n_alleles, n_loci, theta)
    if structure in ("three-generation", "3gen"):
        return three_generation(n_alleles, n_loci, theta)
    raise ValueError(f"unknown pedigree structure {structure!r}")


def nuclear_family(n_children: int = 3, n_loci: int = 2, theta: float = 0.1):
    """Doubly heterozygous father of unknown phase, homozygous mother, typed children.

    Unlike the trio, the likelihood here depends on the recombination
    fractions, so scans over it exercise the selector tables.
    """
    from .pedigree import Individual, PedigreeProblem

    loci = tuple(_marker(f"M{k + 1}", 2) for k in range(n_loci))
    inds = [Individual("father", sex="male"), Individual("mother", sex="female")]
    inds += [Individual(f"child{c + 1}", "father", "mother", "unknown") for c in range(n_children)]
    obs = {}
    for t, l in enumerate(loci):
        obs[("father", l.name)] = ("a1", "a2")
        obs[("mother", l.name)] = ("a1", "a1")
        for c in range(n_children):
            # children alternate so that some look recombinant under either phase
            het = (c + t * (c % 2)) % 2 == 0
            obs[(f"child{c + 1}", l.name)] = ("a1", "a2") if het else ("a1", "a1")
    return PedigreeProblem(tuple(inds), loci, tuple([theta] * (n_loci - 1)), obs)
