"""Helpers shared by the test modules."""

from __future__ import annotations

import functools
import random

from qsda_analyzer import cli, engine, lang, oracle
from qsda_analyzer.heap import Alphabet, HeapConfig, make_config
from qsda_analyzer.lang import (
    DataAssign, DataCmp, LinExpr, New, NextAssign, NextAssignNil, NextEq, Not, PtrAssign,
    PtrAssignNext, PtrAssignNil, PtrEq, ReachEq, make_assume,
)

# (|Y|, #Iter) per required program; None marks loop-free rows
BENCHMARKS = {
    "init": (1, 4),
    "add-head": (1, None),
    "add-tail": (1, 4),
    "delete-head": (1, None),
    "max": (1, 4),
    "fold-split": (1, 4),
    "concat": (1, 5),
    "sorted-find": (2, 5),
    "sorted-insert": (2, 6),
    "sorted-reverse": (2, 5),
    "gslist-prepend": (0, None),
    "gslist-reverse": (0, 3),
    "gslist-custom-find": (1, 4),
    "gslist-insert-sorted": (2, 6),
}

# every statement form of the abstract transformer table, with variants
STATEMENT_FORMS = {
    "p := nil": [PtrAssignNil("p")],
    "p := q": [PtrAssign("p", "q")],
    "p := q->next": [PtrAssignNext("p", "q"), PtrAssignNext("p", "p")],
    "p->next := nil": [NextAssignNil("p")],
    "p->next := q": [NextAssign("p", "q")],
    "p->data := e": [
        DataAssign("p", LinExpr.of("q", 1)),
        DataAssign("p", LinExpr.of(None, 2)),
        DataAssign("p", LinExpr.of("p", -1)),
    ],
    "assume struct": [
        make_assume(PtrEq("p", "q")),
        make_assume(Not(PtrEq("p", "q"))),
        make_assume(NextEq("p", "q")),
        make_assume(Not(NextEq("p", "q"))),
        make_assume(ReachEq("p", "q")),
        make_assume(Not(ReachEq("p", "q"))),
    ],
    "assume data": [make_assume(DataCmp(LinExpr.of("p"), "<", LinExpr.of("q")))],
    "new p": [New("p")],
}


@functools.lru_cache(maxsize=None)
def program(name: str) -> lang.Program:
    return cli.load_corpus_program(name)


@functools.lru_cache(maxsize=None)
def analysis(name: str) -> engine.AnalysisState:
    p = program(name)
    ny = BENCHMARKS[name][0] if name in BENCHMARKS else None
    return engine.analyze(p, universals=ny)


@functools.lru_cache(maxsize=None)
def heaps(pointer_vars: tuple[str, ...], max_nodes: int, values: tuple[int, ...]) -> tuple[HeapConfig, ...]:
    return tuple(
        h for n in range(1, max_nodes + 1) for h in oracle.enumerate_heaps(pointer_vars, n, values)
    )


def random_qsdas(al: Alphabet, seeds, heaps: int = 24, elastic_every: int = 2):
    """Random valid QSDAs; every ``elastic_every``-th one is elastified."""
    from qsda_analyzer.elastic import elastify

    out = []
    for seed in seeds:
        a = oracle.random_qsda(al, random.Random(seed), heaps=heaps)
        if elastic_every and seed % elastic_every == 1:
            a = elastify(a)
        out.append(a)
    return out


def chain(data, pointers=None, extra: dict[str, int] | None = None) -> HeapConfig:
    """A single list ``1 -> 2 -> ... -> nil``; ``pointers`` maps names to positions."""
    n = len(data)
    nxt = {i: i + 1 for i in range(1, n)}
    if n:
        nxt[n] = n + 1
    nxt[n + 1] = 0
    dm = {i + 1: d for i, d in enumerate(data)}
    dm[n + 1] = 0
    pval = {"nil": n + 1}
    for name, pos in (pointers or {}).items():
        pval[name] = pos if pos is not None else n + 1
    for name, pos in (extra or {}).items():
        pval[name] = pos
    return make_config(0, nxt, dm, pval)


SI_POINTERS = ("head", "cur", "prev", "tmp", "key")


def running_example_heap() -> HeapConfig:
    """The sorted-insert configuration at pc 8, key cell included."""
    from qsda_analyzer.heap import DIRTY

    # head(2) -> prev(6) -> cur(9) -> nil, tmp(8) -> cur, key(8) -> dirty
    nxt = {1: 2, 2: 3, 3: 4, 4: DIRTY, 5: 3, 6: DIRTY}
    data = {1: 2, 2: 6, 3: 9, 4: 0, 5: 8, 6: 8}
    pval = {"nil": 4, "head": 1, "prev": 2, "cur": 3, "tmp": 5, "key": 6}
    return make_config(8, nxt, data, pval, ["nil", "head", "cur", "prev", "tmp", "key"])


def running_example_tree():
    from qsda_analyzer.heap import symbolic_tree

    return symbolic_tree([
        (["nil"], None, [
            (["cur"], "y2", [(["prev"], "y1", [(["head"], None, [])]), (["tmp"], None, [])]),
        ]),
        (["key"], None, []),
    ])


def tree_qsda(al: Alphabet, items):
    """Deterministic QSDA mapping each given symbolic tree to its formula."""
    from qsda_analyzer.qsda import Nfa, determinize

    nfa = Nfa(al)
    for k, (t, phi) in enumerate(items):
        ids: list[int] = []
        for i, n in enumerate(t.nodes):
            if n.is_root:
                letter = al.root
            else:
                letter = al.mask(n.ptrs) | (al.bit[n.uvar] if n.uvar else 0)
            sid = nfa.add([ids[c] for c in n.children], letter, (k, i), final=lambda phi=phi: phi)
            assert sid is not None, "ill-formed tree"
            ids.append(sid)
    return determinize(nfa, "join")[0]


SMALL_ALPHABETS = (
    Alphabet(["p", "q"], ["y1"]),
    Alphabet(["p"], ["y1"]),
    Alphabet(["p", "q"], []),
    Alphabet(["p"], ["y1", "y2"]),
)


def small_qsdas(count: int = 50, max_states: int = 12):
    """Deterministic stream of non-empty random QSDAs with few states."""
    out = []
    seed = 0
    while len(out) < count:
        al = SMALL_ALPHABETS[seed % len(SMALL_ALPHABETS)]
        a = oracle.random_qsda(al, random.Random(seed), max_nodes=4, heaps=3)
        seed += 1
        if 0 < a.num_states <= max_states:
            out.append(a)
    return out


def template_pairs(count: int = 10):
    """(A, B) pairs: B a property template, A built from heaps that B accepts."""
    from qsda_analyzer import strandout
    from qsda_analyzer.heap import encode

    specs = [
        lang.PropertySpec("List", "p"),
        lang.PropertySpec("Sort", "p"),
        lang.PropertySpec("Init", "p", None, 1, True),
        lang.PropertySpec("Gek", "p", "q", 0, True),
        lang.PropertySpec("Max", "p", None, 1, True),
    ]
    out = []
    for k in range(count):
        spec = specs[k % len(specs)]
        ys = ("y1", "y2")[: strandout.required_universals(spec)]
        b = strandout.property_eqsda(spec, ("nil", "p", "q"), ys)
        al = b.alphabet
        rng = random.Random(k)
        pool = [h for h in heaps(("p", "q"), 3, (0, 1, 2)) if b.accepts_heap(encode(h))]
        picked = rng.sample(pool, min(len(pool), 6 + k))
        a = oracle.automaton_from_heaps(al, picked, rng, slack=0, drop=0.0)
        out.append((a, b))
    return out
