import math

import numpy as np
import pytest

from absinfer import generators, oracle
from absinfer.abstractor import (
    SupportSets,
    cautious_parent_partitions,
    construct_tables,
    discard,
    value_abstract,
)
from absinfer.engine import abstract_network_loglik
from absinfer.errors import ImpossibleEvidence
from absinfer.factor import OpMeter
from absinfer.jointree import build_clique_tree, network_likelihood
from absinfer.model import Cpt, Network, Variable
from absinfer.partition import coarsest, finest, from_blocks, is_finer
from absinfer.pedigree import compile_problem

from conftest import binary, loglik_close

IDENTITY = [[1.0, 0.0], [0.0, 1.0]]


def two_node(table):
    return Network((binary(0, "X"), binary(1, "Y")), (Cpt(0, (), (0.4, 0.6)), Cpt(1, (0,), table)))


def abstract_loglik(net, ev):
    anet = value_abstract(net, ev)
    return abstract_network_loglik(anet, build_clique_tree(net), "value-abstract-only")


class TestDiscard:
    def test_deterministic_inversion(self):
        s = discard(two_node(IDENTITY), {1: frozenset({1})})
        assert s.values(0) == [1]

    def test_no_evidence_keeps_everything(self, dice):
        s = discard(dice, {})
        assert all(m.all() for m in s.masks)

    def test_impossible(self):
        net = two_node([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ImpossibleEvidence) as info:
            discard(net, {1: frozenset({1})})
        assert info.value.variable in (0, 1)

    def test_sound_against_oracle(self, random_suite):
        for net, ev in random_suite[:80]:
            try:
                s = discard(net, ev)
            except ImpossibleEvidence:
                assert oracle.enumerate_likelihood(net, ev) == 0.0
                continue
            for v in range(len(net)):
                post = oracle.enumerate_posterior(net, ev, [v])
                assert (post[~s[v]] == 0).all()


class TestCautiousParents:
    def test_selector_collapses_under_coarsest_child(self):
        n = 3
        table = np.zeros((n, n, 2, n))
        for a in range(n):
            for b in range(n):
                table[a, b, 0, a] = 1.0
                table[a, b, 1, b] = 1.0
        cpt = Cpt(3, (0, 1, 2), table)
        supports = SupportSets(tuple(np.ones(k, dtype=bool) for k in (n, n, 2, n)))
        parts = cautious_parent_partitions(cpt, coarsest(n), supports)
        assert parts == [coarsest(n), coarsest(n), coarsest(2)]

    def test_win_table_gives_parity(self, dice):
        parts = cautious_parent_partitions(dice.cpts[2], finest(2), SupportSets.full(dice))
        assert parts[1] == from_blocks([[0, 2, 4], [1, 3, 5]])
        assert parts[0] == finest(2)

    def test_permutation_stays_finest(self):
        perm = np.eye(3)[[2, 0, 1]]
        net = Network(
            (Variable(0, "X", ("a", "b", "c")), Variable(1, "Y", ("a", "b", "c"))),
            (Cpt(0, (), np.full(3, 1 / 3)), Cpt(1, (0,), perm)),
        )
        assert cautious_parent_partitions(net.cpts[1], finest(3), SupportSets.full(net)) == [finest(3)]

    def test_monotone_in_child_partition(self, random_suite):
        # finer child demands never yield coarser parent partitions
        for net, _ in random_suite[:60]:
            supports = SupportSets.full(net)
            for cpt in net.cpts:
                if not cpt.parents:
                    continue
                k = net.variables[cpt.child].size
                fine = cautious_parent_partitions(cpt, finest(k), supports)
                coarse = cautious_parent_partitions(cpt, coarsest(k), supports)
                assert all(is_finer(f, c) for f, c in zip(fine, coarse))


class TestValueAbstract:
    @pytest.mark.parametrize("faces", [None, (0.1, 0.3, 0.2, 0.15, 0.05, 0.2)])
    def test_dice(self, faces):
        net = generators.dice_network(faces)
        ev = {2: frozenset({0})}
        anet = value_abstract(net, ev)
        assert anet.partitions[1] == from_blocks([[0, 2, 4], [1, 3, 5]])
        assert anet.partitions[0] == finest(2)
        assert abstract_loglik(net, ev) == pytest.approx(math.log(0.5), rel=1e-12)

    def test_no_evidence_is_coarsest(self, random_suite):
        for net, _ in random_suite[:60]:
            anet = value_abstract(net, {})
            assert all(p.num_nonzero_blocks == 1 for p in anet.partitions)
            assert abstract_loglik(net, {}) == pytest.approx(0.0, abs=1e-12)

    def test_untyped_alleles_merge(self):
        comp = compile_problem(generators.trio(n_alleles=8))
        anet = value_abstract(comp.network, comp.evidence)
        for name in ("M1[father,p]", "M1[father,m]", "M1[mother,p]", "M1[mother,m]"):
            part = anet.partitions[comp.network.var_id(name)]
            assert sorted(b.tolist() for b in part.blocks()) == [[0], [1], [2, 3, 4, 5, 6, 7]]

    def test_same_dag(self, dice):
        small = value_abstract(dice, {2: frozenset({0})}).as_network()
        assert [c.parents for c in small.cpts] == [c.parents for c in dice.cpts]

    def test_safety(self, random_suite):
        for net, ev in random_suite:
            want = math.log(p) if (p := oracle.enumerate_likelihood(net, ev)) > 0 else -math.inf
            try:
                got = abstract_loglik(net, ev)
            except ImpossibleEvidence:
                got = -math.inf
            assert loglik_close(got, want), (got, want)

    def test_descendant_safety(self, random_suite):
        # the quantity a bottom-up pass can preserve: evidence at and below each variable
        for net, ev in random_suite:
            try:
                anet = value_abstract(net, ev)
            except ImpossibleEvidence:
                continue
            for v in range(len(net)):
                ref = oracle.descendant_safe_partition(net, ev, v, anet.supports)
                assert is_finer(anet.partitions[v], ref), (v, str(anet.partitions[v]), str(ref))

    def test_evidence_on_coparent_can_coarsen(self):
        # X, Z -> Y.  With Z free, X's rows differ at Z=1; observing Z=0 hides that.
        x, z = Variable(0, "X", ("0", "1")), Variable(1, "Z", ("0", "1"))
        y = Variable(2, "Y", ("0", "1"))
        table = np.array([[[0.5, 0.5], [0.8, 0.2]], [[0.5, 0.5], [0.2, 0.8]]])
        net = Network((x, z, y), (Cpt(0, (), (0.5, 0.5)), Cpt(1, (), (0.5, 0.5)), Cpt(2, (0, 1), table)))
        before = value_abstract(net, {2: frozenset({1})}).partitions[0]
        after = value_abstract(net, {2: frozenset({1}), 1: frozenset({0})}).partitions[0]
        assert before == finest(2)
        assert after == coarsest(2)

    def test_work_is_bounded_by_table_size(self, random_suite):
        for net, ev in random_suite[:80]:
            meter = OpMeter()
            try:
                value_abstract(net, ev, meter=meter)
            except ImpossibleEvidence:
                continue
            entries = sum(c.table.size for c in net.cpts)
            widest = max(net.cards)
            touched = meter["discard_touch"] + meter["abstract_touch"] + meter["construct_touch"]
            assert touched <= 4 * entries * widest


class TestConstructTables:
    def test_coarsest_keeps_retained_mass(self):
        net = two_node([[0.3, 0.7], [0.3, 0.7]])
        anet = construct_tables(net, [coarsest(2), from_blocks([[0]], zero=[1])])
        assert anet.tables[1].shape == (1, 1)
        assert anet.tables[1][0, 0] == 0.3

    def test_finest_is_identity(self, random_suite):
        net, _ = random_suite[0]
        anet = construct_tables(net, [finest(k) for k in net.cards])
        for a, c in zip(anet.tables, net.cpts):
            np.testing.assert_array_equal(a, c.table)

    def test_dice_win_table(self, dice):
        parts = [finest(2), from_blocks([[0, 2, 4], [1, 3, 5]]), finest(2)]
        table = construct_tables(dice, parts).tables[2]
        assert table.shape == (2, 2, 2)
        np.testing.assert_array_equal(table[:, :, 0], [[1, 0], [0, 1]])

    def test_audit_rejects_non_cautious(self, dice):
        from absinfer.errors import CautiousnessViolation

        with pytest.raises(CautiousnessViolation):
            construct_tables(dice, [finest(2), coarsest(6), finest(2)])

    def test_tolerance_mode_only_warns(self, dice, caplog):
        construct_tables(dice, [finest(2), coarsest(6), finest(2)], tolerance=1e-9)
        assert "approximate" in caplog.text


def test_evidence_above_is_not_seen():
    # W -> X with W observed: P(e | X = x) varies with x, but nothing below X
    # constrains it, so the bottom-up pass leaves X coarsest
    net = Network(
        (binary(0, "W"), binary(1, "X")),
        (Cpt(0, (), (0.5, 0.5)), Cpt(1, (0,), [[0.9, 0.1], [0.2, 0.8]])),
    )
    ev = {0: frozenset({0})}
    assert value_abstract(net, ev).partitions[1] == coarsest(2)
    assert oracle.maximally_safe_partition(net, ev, 1) == finest(2)
    assert loglik_close(abstract_loglik(net, ev), math.log(0.5))
