"""Command-line entry point: ``absinfer {compile,infer,stats,scan,gen,abstract}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import abstract_propagation as ap
from . import generators, oracle
from . import jointree as jt
from . import pedigree as pd
from .abstractor import value_abstract
from .engine import MODES, infer
from .errors import AbsInferError, BudgetExceeded, ImpossibleEvidence, InvalidScan, ParseError
from .model import dumps, evidence_to_dict, load_evidence, load_json, load_network, network_to_dict


@dataclass
class RunConfig:
    subcommand: str
    order: str = "min-fill"
    tolerance: float = 0.0
    mode: str = "full"
    reuse: bool = False
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.tolerance < 0:
            raise ParseError("--tolerance must be >= 0")


def fmt(x: float) -> str:
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return f"{x:.15g}"


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _load_problem(path) -> pd.PedigreeProblem:
    return pd.problem_from_dict(load_json(path))


# -- subcommands ------------------------------------------------------------------


def cmd_compile(args, cfg: RunConfig) -> int:
    comp = pd.compile_problem(_load_problem(args.pedigree))
    prefix = cfg.out or str(Path(args.pedigree).with_suffix(""))
    Path(prefix + ".network.json").write_text(dumps(network_to_dict(comp.network)), encoding="utf-8")
    Path(prefix + ".evidence.json").write_text(
        dumps(evidence_to_dict(comp.network, comp.evidence)), encoding="utf-8"
    )
    names = {
        "variables": comp.name_map(),
        "selector_cpts": [
            {"variable": comp.network.variables[v].name, "theta_index": k} for v, k in sorted(comp.selector_cpts.items())
        ],
    }
    Path(prefix + ".names.json").write_text(dumps(names), encoding="utf-8")
    sys.stdout.write(f"{len(comp.network)} variables, {len(comp.evidence)} observed -> {prefix}.*.json\n")
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    net = load_network(args.network)
    ev = load_evidence(args.evidence, net) if args.evidence else {}
    tree = jt.build_clique_tree(net, cfg.order)
    lines = [f"mode: {cfg.mode}", f"order: {cfg.order}"]
    start = time.perf_counter()
    res = infer(net, ev, cfg.mode, cfg.order, cfg.tolerance, tree=tree)
    elapsed = time.perf_counter() - start
    lines.append(f"loglik: {fmt(res.loglik)}")
    lines.append(f"multiply_adds: {res.meter['multiply_add']}")
    if args.timing:
        lines.append(f"seconds: {elapsed:.6f}")
    status = 0
    if args.compare:
        for other in MODES:
            if other == cfg.mode:
                continue
            r = infer(net, ev, other, cfg.order, cfg.tolerance, tree=tree)
            lines.append(f"loglik[{other}]: {fmt(r.loglik)}")
            lines.append(f"multiply_adds[{other}]: {r.meter['multiply_add']}")
            same = pd.loglik_agree(res.loglik, r.loglik, 1e-9)
            lines.append(f"agree[{other}]: {'yes' if same else 'no'}")
            if not same and cfg.tolerance == 0:
                status = 3
    if args.oracle:
        try:
            p = oracle.enumerate_likelihood(net, ev)
            lines.append(f"loglik[oracle]: {fmt(math.log(p) if p > 0 else -math.inf)}")
        except BudgetExceeded as exc:
            lines.append(f"loglik[oracle]: skipped ({exc})")
    if args.posteriors:
        factors = jt.attach_evidence(tree, net, ev)
        if cfg.mode == "none":
            tables = [f.linear().ravel() for f in jt.calibrate(tree, factors).posteriors]
        else:
            atree = ap.abstract_clique_tree(tree, factors, cfg.tolerance)
            tables = [p.expanded() for p in ap.abstracted_posteriors(atree, factors)]
        for node, table in enumerate(tables):
            names = " ".join(net.variables[v].name for v in tree.clusters[node])
            lines.append(f"posterior[{node}] ({names}): " + " ".join(fmt(x) for x in table))
    _emit("\n".join(lines) + "\n", cfg.out)
    return status


def stats_rows(net, ev, order: str = "min-fill", tolerance: float = 0.0):
    """Rows of the size report: variables, cliques, directed separators, totals."""
    tree = jt.build_clique_tree(net, order)
    try:
        anet = value_abstract(net, ev, tolerance)
    except ImpossibleEvidence:
        anet = None
    rows = []
    var_sizes = anet.domain_sizes() if anet else [0] * len(net)
    for v, k in zip(net.variables, var_sizes):
        rows.append([v.id, "variable", v.name, v.size, k])
    if anet is not None:
        small = anet.as_network()
        small_tree = tree.with_cards(small.cards)
        atree = ap.abstract_clique_tree(small_tree, jt.attach_evidence(small_tree, small, {}), tolerance)
        report = ap.savings_report(small_tree, atree)
        clique_blocks = report.clique_blocks
        sep_blocks = {(s.frm, s.to): s.blocks for s in report.separators}
    else:
        clique_blocks = [0] * len(tree)
        sep_blocks = {e: 0 for e in tree.directed_edges()}
    for node in range(len(tree)):
        names = " ".join(net.variables[v].name for v in tree.clusters[node])
        rows.append([node, "clique", names, tree.domain(node).size, clique_blocks[node]])
    for a, b in tree.directed_edges():
        names = " ".join(net.variables[v].name for v in tree.separator(a, b))
        rows.append([f"{a}->{b}", "separator", names, tree.sep_domain(a, b).size, sep_blocks[(a, b)]])
    net_orig = sum(r[3] for r in rows if r[1] == "variable")
    net_abs = sum(r[4] for r in rows if r[1] == "variable")
    tree_orig = sum(r[3] for r in rows if r[1] in ("clique", "separator"))
    tree_abs = sum(r[4] for r in rows if r[1] in ("clique", "separator"))
    rows.append(["network", "total", "", net_orig, net_abs])
    rows.append(["tree", "total", "", tree_orig, tree_abs])
    return rows


STATS_HEADER = ["node_id", "kind", "variables", "size_original", "size_abstracted"]


def cmd_stats(args, cfg: RunConfig) -> int:
    net = load_network(args.network)
    ev = load_evidence(args.evidence, net) if args.evidence else {}
    _emit(_csv(stats_rows(net, ev, cfg.order, cfg.tolerance), STATS_HEADER), cfg.out)
    return 0


def parse_grid(text: str) -> list[float]:
    """``start:stop:count`` (inclusive) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(x) for x in np.linspace(float(start), float(stop), int(count))]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise ParseError(f"bad grid {text!r}; use start:stop:count or a comma-separated list") from None


def cmd_scan(args, cfg: RunConfig) -> int:
    problem = _load_problem(args.pedigree)
    grid = parse_grid(args.grid)
    res = pd.scan_theta(problem, args.edge, grid, cfg.reuse, cfg.mode, cfg.order)
    mode = f"{cfg.mode}+reuse" if cfg.reuse else cfg.mode
    rows = []
    for k, (theta, ll) in enumerate(res.points):
        verified = "n/a"
        if res.verified is not None and k == len(res.points) - 1:
            verified = "yes" if res.verified else "no"
        rows.append([fmt(theta), fmt(ll), mode, verified])
    _emit(_csv(rows, ["theta", "loglik", "mode", "verified"]), cfg.out)
    if res.verified is False:
        sys.stderr.write(f"reuse verification failed: discrepancy {res.max_discrepancy!r}\n")
        return 3
    return 0


def cmd_gen(args, cfg: RunConfig) -> int:
    kind = args.kind
    if kind == "random":
        rng = np.random.default_rng(cfg.seed)
        net = generators.random_network(rng)
        ev = generators.random_evidence(rng, net)
        prefix = cfg.out or f"random-{cfg.seed}"
        Path(prefix + ".network.json").write_text(dumps(network_to_dict(net)), encoding="utf-8")
        Path(prefix + ".evidence.json").write_text(dumps(evidence_to_dict(net, ev)), encoding="utf-8")
        return 0
    if kind == "dice":
        net = generators.dice_network()
        prefix = cfg.out or "dice"
        Path(prefix + ".network.json").write_text(dumps(network_to_dict(net)), encoding="utf-8")
        Path(prefix + ".evidence.json").write_text(dumps({"Win": "yes"}), encoding="utf-8")
        return 0
    if kind == "trio":
        problem = generators.trio(args.alleles, args.loci, args.theta)
    elif kind == "three-generation":
        problem = generators.three_generation(args.alleles, args.loci, args.theta, args.trait)
    elif kind == "nuclear":
        problem = generators.nuclear_family(args.children, max(args.loci, 2), args.theta)
    elif kind == "untyped":
        problem = generators.untyped_allele_family(args.alleles, args.structure, args.loci, args.theta)
    else:  # pragma: no cover - argparse restricts choices
        raise ParseError(f"unknown generator {kind!r}")
    _emit(dumps(pd.problem_to_dict(problem)), cfg.out)
    return 0


def cmd_abstract(args, cfg: RunConfig) -> int:
    net = load_network(args.network)
    ev = load_evidence(args.evidence, net) if args.evidence else {}
    try:
        anet = value_abstract(net, ev, cfg.tolerance)
    except ImpossibleEvidence as exc:
        _emit(f"impossible evidence: variable {net.variables[exc.variable].name} has no value left\n", cfg.out)
        return 0
    rows = []
    for v, part, k in zip(net.variables, anet.partitions, anet.domain_sizes()):
        rows.append([v.name, v.size, k, str(part)])
    rows.append(["TOTAL", sum(r[1] for r in rows), sum(r[2] for r in rows), ""])
    _emit(_csv(rows, ["variable", "size_original", "size_abstracted", "partition"]), cfg.out)
    return 0


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", choices=jt.HEURISTICS, default="min-fill", help="elimination heuristic")
    common.add_argument("--tolerance", type=float, default=0.0, help="relative equality tolerance (0 = exact)")
    common.add_argument("--mode", choices=MODES, default="full", help="abstraction mode")
    common.add_argument("--no-abstraction", action="store_true", help="same as --mode none")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output path (or prefix for multi-file outputs)")

    p = argparse.ArgumentParser(prog="absinfer", description=__doc__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("compile", parents=[common], help="pedigree -> network, evidence, name map")
    s.add_argument("pedigree")
    s.set_defaults(func=cmd_compile)

    s = sub.add_parser("infer", parents=[common], help="log-likelihood of evidence")
    s.add_argument("network")
    s.add_argument("evidence", nargs="?")
    s.add_argument("--compare", action="store_true", help="also run the other modes and compare")
    s.add_argument("--oracle", action="store_true", help="cross-check against brute-force enumeration")
    s.add_argument("--posteriors", action="store_true", help="print P(e, c) for every clique")
    s.add_argument("--timing", action="store_true", help="report wall-clock time (not reproducible)")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("stats", parents=[common], help="CSV of domain and clique-tree size reductions")
    s.add_argument("network")
    s.add_argument("evidence", nargs="?")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("scan", parents=[common], help="log-likelihood over a recombination-fraction grid")
    s.add_argument("pedigree")
    s.add_argument("--edge", type=int, default=0, help="index of the adjacent-locus gap to scan")
    s.add_argument("--grid", default="0:0.5:11", help="start:stop:count or comma list")
    s.add_argument("--reuse", action="store_true", help="derive abstractions once and reuse them")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("gen", parents=[common], help="write a synthetic input")
    s.add_argument("kind", choices=["random", "dice", "trio", "three-generation", "nuclear", "untyped"])
    s.add_argument("--alleles", type=int, default=2)
    s.add_argument("--loci", type=int, default=1)
    s.add_argument("--theta", type=float, default=0.1)
    s.add_argument("--children", type=int, default=3, help="children in a nuclear family")
    s.add_argument("--structure", choices=["trio", "three-generation"], default="trio")
    s.add_argument("--trait", action="store_true", help="add a trait locus (three-generation only)")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("abstract", parents=[common], help="per-variable partitions from value abstraction")
    s.add_argument("network")
    s.add_argument("evidence", nargs="?")
    s.set_defaults(func=cmd_abstract)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(
            args.subcommand,
            order=args.order,
            tolerance=args.tolerance,
            mode="none" if args.no_abstraction else args.mode,
            reuse=getattr(args, "reuse", False),
            seed=args.seed,
            out=args.out,
        )
        return args.func(args, cfg)
    except (AbsInferError, OSError) as exc:
        sys.stderr.write(f"absinfer {args.subcommand}: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
