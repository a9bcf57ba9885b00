from __future__ import annotations

import random

import pytest

from qsda_analyzer import engine, lang, oracle, qsda as Q
from qsda_analyzer.datafmla import from_pred
from qsda_analyzer.elastic import elastify
from qsda_analyzer.engine import EngineConfig, analyze, widen_eqsda
from qsda_analyzer.errors import NonTermination
from qsda_analyzer.heap import Alphabet
from qsda_analyzer.qsda import order_leq
from qsda_analyzer.strandout import check_assertion

import support

COUNTER = """
pointer p;
data x;
1: x := 0;
2: while (x < 100) do
  3: x := x + 1;
od;
"""


def _proved(st):
    return all(check_assertion(st.inv[pc], s).proved for pc, s in st.program.assertion_pcs())


def test_loop_free_program_has_no_header_iterations():
    st = support.analysis("add-head")
    assert st.iterations == {} and st.header_iterations() == 0
    assert _proved(st)


def test_init_converges_and_proves():
    st = support.analysis("init")
    assert st.alphabet.y == ("y1",)
    assert 1 <= st.header_iterations() <= 10
    assert _proved(st)


def test_bottom_precondition_stays_bottom():
    p = support.program("init")
    al = Alphabet(lang.desugar_data_vars(p).pointer_vars, ("y1",))
    st = analyze(p, pre=Q.bottom(al))
    assert st.passes == 1
    assert all(Q.is_bottom(a) for a in st.inv.values())


def test_counter_widens_to_unbounded():
    st = analyze(lang.parse(COUNTER, "counter"))
    header = st.inv[2]
    names = st.alphabet.terms
    fs = [f for f in header.finals.values() if not f.is_bottom]
    assert fs
    for f in fs:
        assert f.leq(from_pred(names, "x >= 0"))
        assert not f.leq(from_pred(names, "x <= 1000"))
    # two precise rounds, then widening settles within two more
    assert st.iterations[2] <= EngineConfig().widen_delay + 3


def test_iteration_cap_raises():
    with pytest.raises(NonTermination):
        analyze(lang.parse(COUNTER, "counter"), config=EngineConfig(widen_delay=1000, max_iter=5))


def test_skeleton_bound_raises():
    with pytest.raises(NonTermination):
        analyze(support.program("init"), config=EngineConfig(skeleton_bound=1))


def test_analysis_is_deterministic():
    a = analyze(support.program("sorted-find"))
    b = support.analysis("sorted-find")
    assert a.inv == b.inv and a.iterations == b.iterations


@pytest.mark.parametrize("name", ["init", "sorted-insert", "concat"])
def test_header_iterates_increase(name):
    st = analyze(support.program(name), universals=support.BENCHMARKS[name][0],
                 config=EngineConfig(keep_history=True))
    assert st.history
    for seq in st.history.values():
        for old, new in zip(seq, seq[1:]):
            assert order_leq(old, new)
    assert st.skeletons >= 1


def test_widen_eqsda_laws():
    al = Alphabet(["p", "q"], ["y1"])
    for seed in range(10):
        rng = random.Random(seed)
        a = elastify(oracle.random_qsda(al, rng))
        b = elastify(oracle.random_qsda(al, rng))
        assert widen_eqsda(a, a) == a
        w = widen_eqsda(a, b)
        assert order_leq(b, w) and order_leq(a, w)


def test_default_universals_follow_properties():
    assert engine.default_universals(support.program("sorted-insert")) == ("y1", "y2")
    assert engine.default_universals(support.program("gslist-reverse")) == ()
    assert engine.default_universals(support.program("init"), 3) == ("y1", "y2", "y3")


def test_report_is_versioned():
    rep = support.analysis("init").report()
    assert rep["version"] == 1 and rep["universals"] == ["y1"]
    assert set(rep["pcs"]) == {str(pc) for pc in support.analysis("init").cfg.nodes}


def test_small_sweep_is_sound():
    st = support.analysis("add-tail")
    rep = oracle.soundness_sweep(st.program, st, oracle.OracleConfig(max_nodes=3, data_range=(0, 2)))
    assert rep.ok and rep.initial_heaps > 0 and not rep.errors
