from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from qsda_analyzer import oracle, qsda as Q, strandout
from qsda_analyzer.datafmla import from_pred
from qsda_analyzer.elastic import is_elastic
from qsda_analyzer.errors import InsufficientUniversals
from qsda_analyzer.heap import Alphabet, encode
from qsda_analyzer.lang import PropertySpec
from qsda_analyzer.qsda import minimize
from qsda_analyzer.strandout import Verdict, check_assertion, emit_formula, property_eqsda

import support

PV = ("nil", "head", "key")
SPECS = [
    PropertySpec("List", "head"),
    PropertySpec("Empty", "head"),
    PropertySpec("Last", "head", "key", 0, True),
    PropertySpec("Init", "head", "key", 0, True),
    PropertySpec("Max", "head", "key", 0, True),
    PropertySpec("Gek", "head", "key", 0, True),
    PropertySpec("Sort", "head"),
]
SORT = PropertySpec("Sort", "head")


def _template(spec: PropertySpec, pv=PV) -> Q.Qsda:
    ys = ("y1", "y2")[: strandout.required_universals(spec)]
    return property_eqsda(spec, pv, ys)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_template_is_elastic_minimal_and_self_proving(spec):
    a = _template(spec)
    assert Q.validate(a) == []
    assert is_elastic(a)
    assert minimize(a) == a
    assert check_assertion(a, spec).proved


def test_list_accepts_exactly_chains_from_head():
    a = _template(PropertySpec("List", "head"))
    for h in support.heaps(("head", "key"), 3, (0,)):
        nxt = h.next_map
        v, steps = h.pval_map["head"], 0
        nil = h.pval_map["nil"]
        while v not in (nil, 0) and steps < 10:
            v, steps = nxt[v], steps + 1
        on_chain = v == nil
        assert a.accepts_heap(encode(h)) == on_chain


def test_sort_rejects_unsorted_three_list():
    a = _template(SORT)
    at = {"head": 1, "key": None}
    assert not a.accepts_heap(encode(support.chain([1, 3, 2], at)))
    assert a.accepts_heap(encode(support.chain([1, 2, 2], at)))


def test_gek_accepts_data_equal_to_key():
    spec = PropertySpec("Gek", "head", "key", 0, True)
    a = _template(spec)
    h = support.chain([5, 5, 5], {"head": 1, "key": 2})
    assert a.accepts_heap(encode(h))
    assert not a.accepts_heap(encode(support.chain([5, 4, 5], {"head": 1, "key": 1})))


def test_sort_needs_two_universals():
    with pytest.raises(InsufficientUniversals):
        property_eqsda(SORT, PV, ("y1",))
    res = check_assertion(Q.top(Alphabet(PV, ("y1",))), SORT)
    assert res.verdict is Verdict.UNKNOWN and "universal" in res.reason


def test_bottom_proves_anything_and_top_proves_sort_nothing():
    al = Alphabet(PV, ("y1", "y2"))
    for spec in SPECS:
        assert check_assertion(Q.bottom(al), spec).proved
    assert check_assertion(Q.top(al), SORT).verdict is Verdict.UNKNOWN


def test_sorted_insert_exit_invariant_proves_sort_and_list():
    st_ = support.analysis("sorted-insert")
    specs = [s for _, s in st_.program.assertion_pcs()]
    assert {s.name for s in specs} == {"Sort", "List"}
    for pc, s in st_.program.assertion_pcs():
        assert check_assertion(st_.inv[pc], s).proved


def test_emit_single_path_is_a_shape_formula():
    a = _template(PropertySpec("List", "head"), ("nil", "head"))
    inv = emit_formula(a)
    assert inv.universal_vars == ()
    assert inv.clauses and all(c.formula.is_top for c in inv.clauses)
    assert "→next" in inv.render()


def test_emit_sort_carries_the_order_constraint():
    a = _template(SORT, ("nil", "head"))
    inv = emit_formula(a)
    al = a.alphabet
    le = from_pred(al.terms, "y1 <= y2")
    ordered = [c for c in inv.clauses
               if any(x.rel in ("next+", "next") and x.lhs == "y1" and x.rhs == "y2" and not x.negated
                      for x in c.guard)]
    assert ordered
    assert all(c.formula.leq(le) for c in ordered if not c.formula.is_bottom)
    assert "y1->data" in inv.render()


def test_emit_bottom_has_no_disjunct():
    inv = emit_formula(Q.bottom(Alphabet(PV, ("y1",))))
    assert inv.clauses == []
    assert inv.render().endswith("false")
    assert json.loads(inv.dumps())["clauses"] == []


def test_emitted_json_is_stable():
    a = _template(PropertySpec("Init", "head", "key", 0, True))
    assert emit_formula(a).dumps() == emit_formula(a).dumps()
    d = emit_formula(a).to_json()
    assert d["version"] == 1 and d["universal_vars"] == ["y1"]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_emission_fidelity_small(spec):
    a = _template(spec)
    shapes = [s for n in range(1, 4) for s in oracle.enumerate_shapes(("head", "key"), n)]
    rep = oracle.emission_fidelity(a, emit_formula(a), shapes, range(0, 3))
    assert rep.heaps > 0 and rep.mismatches == 0, rep.disagreements[:3]


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(SPECS))
def test_emitted_formula_matches_acceptance(seed, spec):
    # scalar quantifier enumeration on single heaps, data 0..4
    a = _template(spec)
    inv = emit_formula(a)
    rng = random.Random(seed)
    h = oracle.random_heap(("head", "key"), rng.randint(1, 4), rng, range(0, 5))
    assert a.accepts_heap(encode(h)) == oracle.evaluate_invariant(inv, h)
