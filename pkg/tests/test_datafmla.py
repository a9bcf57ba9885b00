from __future__ import annotations

import itertools

import numpy as np
from hypothesis import given, strategies as st

from qsda_analyzer.datafmla import (
    Constraint, DataFormula, TermSpace, from_pred, sat_assignment_check,
)

N = 3
SPACE = TermSpace(["x", "y", "z"])
X, Y, Z = 0, 1, 2
BOX = range(0, 4)
MODELS = list(itertools.product(BOX, repeat=N))


def f(text: str, space: TermSpace = SPACE) -> DataFormula:
    return from_pred(space, text)


def models(a: DataFormula) -> set[tuple[int, ...]]:
    return {v for v in MODELS if a.satisfied_by(v)}


constraints = st.builds(
    Constraint,
    st.integers(0, N - 1),
    st.sampled_from([1, -1]),
    st.one_of(st.none(), st.integers(0, N - 1)),
    st.sampled_from([1, -1]),
    st.integers(-4, 4),
)
formulas = st.lists(constraints, max_size=4).map(lambda cs: DataFormula.top(N).add(cs))


def boxed(a: DataFormula) -> DataFormula:
    return a.meet(f("x >= 0 && x <= 3 && y >= 0 && y <= 3 && z >= 0 && z <= 3"))


def test_meet_examples():
    phi = f("x - y <= 2")
    assert phi.meet(SPACE.top()) == phi
    assert f("x <= 1").meet(f("x >= 3")).is_bottom
    chained = f("x - y <= 0").meet(f("y - z <= 0"))
    assert chained.leq(f("x - z <= 0"))
    assert all(v[0] <= v[2] for v in models(boxed(chained)))


def test_join_and_widen_examples():
    phi = f("x <= 2 && y >= 1")
    assert SPACE.bottom().join(phi) == phi
    assert SPACE.bottom().leq(phi)
    assert f("x <= 1").join(f("x <= 3")) == f("x <= 3")
    assert f("x <= 1").widen(f("x <= 3")).is_top
    assert f("x <= 3").widen(f("x <= 3")) == f("x <= 3")


def test_widening_chain_stabilizes():
    cur = f("x <= 1")
    steps = 0
    for k in range(2, 50):
        nxt = cur.widen(cur.join(f(f"x <= {k}")))
        steps += 1
        if nxt == cur:
            break
        cur = nxt
    assert steps <= 2 and cur.is_top


def test_project_examples():
    a = f("x == 5 && y <= x")
    assert a.project(X) == f("y <= 5")
    assert SPACE.top().project(X).is_top
    assert SPACE.bottom().project(X).is_bottom


def test_constrain_eq_and_from_pred():
    eq = SPACE.top().constrain_eq(X, Y)
    assert models(eq) == {v for v in MODELS if v[0] == v[1]}
    space = TermSpace(["cur", "key"])
    assert from_pred(space, "cur->data < key->data") == from_pred(space, "cur - key <= -1")


def test_sat_assignment_check():
    space = TermSpace(["y1", "y2", "key"])
    phi = from_pred(space, "y1 <= y2 && y1 < key && y2 >= key")
    assert sat_assignment_check(phi, {"y1": 6, "y2": 9, "key": 8}, space)
    assert not sat_assignment_check(phi, {"y1": 6, "y2": 7, "key": 8}, space)


def test_render_is_canonical():
    assert f("y - x <= 1 && x <= 2").render(SPACE.names) == f("x <= 2 && y - x <= 1").render(SPACE.names)


@given(formulas, formulas)
def test_join_meet_commute(a, b):
    assert a.join(b) == b.join(a)
    assert a.meet(b) == b.meet(a)
    if not a.is_bottom:
        assert np.array_equal(a.join(b).matrix, b.join(a).matrix)


@given(formulas, formulas, formulas)
def test_associativity(a, b, c):
    assert a.join(b).join(c) == a.join(b.join(c))
    assert a.meet(b).meet(c) == a.meet(b.meet(c))


@given(formulas, formulas)
def test_idempotence_and_absorption(a, b):
    assert a.join(a) == a and a.meet(a) == a
    assert a.join(a.meet(b)) == a
    assert a.meet(a.join(b)) == a


@given(formulas, formulas, formulas)
def test_leq_is_a_partial_order_with_bounds(a, b, c):
    assert a.leq(a)
    if a.leq(b) and b.leq(a):
        assert a == b
    if a.leq(b) and b.leq(c):
        assert a.leq(c)
    assert a.leq(a.join(b)) and a.meet(b).leq(a)
    assert a.leq(a.widen(b)) and b.leq(a.widen(b))


@given(formulas, formulas)
def test_leq_is_semantic_implication(a, b):
    a = boxed(a)
    assert a.leq(b) == (models(a) <= models(b))
    assert a.is_bottom == (not models(a))


@given(formulas, st.sampled_from([X, Y, Z]))
def test_project_is_sound(a, t):
    p = a.project(t)
    assert a.leq(p)
    for v in models(a):
        assert p.satisfied_by(v)


@given(formulas, formulas)
def test_meet_and_join_semantics(a, b):
    a, b = boxed(a), boxed(b)
    assert models(a.meet(b)) == models(a) & models(b)
    assert models(a) | models(b) <= models(a.join(b))


@given(st.lists(formulas, min_size=1, max_size=12))
def test_widening_terminates(chain):
    cur = chain[0]
    changes = 0
    for nxt in chain[1:] + chain:
        new = cur.widen(cur.join(nxt))
        if new != cur:
            changes += 1
        cur = new
    # every change relaxes at least one of the 2n x 2n entries to infinity
    assert changes <= (2 * N) ** 2 + 1


def test_raw_matrices_are_made_coherent():
    # one of the two mirrored entries for x - y <= 1 is set
    m = np.full((2 * N, 2 * N), np.inf)
    np.fill_diagonal(m, 0.0)
    m[2 * Y, 2 * X] = 1
    a = DataFormula._from_raw(N, m)
    assert a == f("x - y <= 1")
    bar = np.arange(2 * N) ^ 1
    assert np.array_equal(a.matrix, a.matrix[bar][:, bar].T)


@given(st.lists(st.tuples(st.integers(0, 2 * N - 1), st.integers(0, 2 * N - 1), st.integers(-3, 3)),
                max_size=6))
def test_closure_is_coherent(entries):
    m = np.full((2 * N, 2 * N), np.inf)
    np.fill_diagonal(m, 0.0)
    for i, j, c in entries:
        if i != j:
            m[i, j] = min(m[i, j], c)
    a = DataFormula._from_raw(N, m)
    if not a.is_bottom:
        bar = np.arange(2 * N) ^ 1
        assert np.array_equal(a.matrix, a.matrix[bar][:, bar].T)
