"""End-to-end acceptance gate: one test per criterion, each printing a verdict line."""

from __future__ import annotations

import itertools
import json
import random
import time

from conftest import CRITERIA
from qsda_analyzer import cli, lang, oracle, qsda as Q, strandout
from qsda_analyzer.datafmla import Constraint, DataFormula
from qsda_analyzer.elastic import elastify, is_elastic
from qsda_analyzer.heap import Alphabet, HeapConfig, encode
from qsda_analyzer.lang import PropertySpec
from qsda_analyzer.qsda import lattice_join, lattice_meet, minimize, order_leq
from qsda_analyzer.transformers import full_post, post, strengthen

import support


def _record(k: int, title: str, ok: bool, detail: str) -> None:
    CRITERIA[k] = (title, ok, detail)
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title} ({detail})")


# 1 -------------------------------------------------------------------------


def test_c1_benchmark_proofs(tmp_path):
    failures = []
    slowest = 0.0
    for name in cli.REQUIRED:
        ny, table_iter = support.BENCHMARKS[name]
        out = tmp_path / f"{name}.json"
        started = time.perf_counter()
        code = cli.main(["check", name, "--universals", str(ny), "--format", "json", "--out", str(out)])
        took = time.perf_counter() - started
        slowest = max(slowest, took)
        rep = json.loads(out.read_text())
        iters = max(rep["iterations"].values(), default=0)
        if code != 0:
            failures.append(f"{name}: exit {code}")
        if took > 60:
            failures.append(f"{name}: {took:.1f}s")
        if table_iter is not None and iters > 3 * table_iter:
            failures.append(f"{name}: {iters} iterations vs {table_iter}")
        if table_iter is None and iters:
            failures.append(f"{name}: loop-free but iterated")
    _record(1, "benchmark properties proved", not failures,
            f"{len(cli.REQUIRED)} programs, slowest {slowest:.1f}s" + (f"; {failures}" if failures else ""))
    assert not failures


# 2 -------------------------------------------------------------------------


def test_c2_soundness_sweep():
    cfg = oracle.OracleConfig(max_nodes=4, data_range=(0, 3), fuel=200)
    started = time.perf_counter()
    bad = []
    heaps = checked = 0
    for name in cli.REQUIRED:
        st = support.analysis(name)
        rep = oracle.soundness_sweep(st.program, st, cfg)
        heaps += rep.initial_heaps
        checked += rep.checked
        if rep.initial_heaps == 0 or rep.violations:
            bad.append((name, rep.initial_heaps, [v.describe() for v in rep.violations[:2]]))
    took = time.perf_counter() - started
    ok = not bad and took <= 600
    _record(2, "soundness sweep", ok,
            f"{heaps} initial heaps, {checked} configurations, {took:.0f}s" + (f"; {bad}" if bad else ""))
    assert ok


# 3 -------------------------------------------------------------------------


def test_c3_transformer_oracle():
    pool = support.heaps(("p", "q"), 3, (0, 1, 2))
    failures = successors = 0
    forms = 0
    for ny in (1, 2):
        al = Alphabet(["p", "q"], [f"y{i + 1}" for i in range(ny)])
        pres = support.random_qsdas(al, range(30))
        for form, stmts in support.STATEMENT_FORMS.items():
            forms += 1
            for a in pres:
                accepted = [h for h in pool if oracle.naive_accepts(a, h)]
                for s in stmts:
                    outs = (post(a, s), full_post(a, s))
                    for h in accepted:
                        for d in (0, 1, 2) if isinstance(s, lang.New) else (0,):
                            nxt = lang.concrete_step(h, s, 0, d)
                            if not isinstance(nxt, HeapConfig):
                                continue
                            successors += 1
                            failures += sum(not oracle.naive_accepts(o, nxt) for o in outs)
    assert forms == 18 and len(support.STATEMENT_FORMS) == 9
    ok = failures == 0 and successors > 0
    _record(3, "transformer oracle equivalence", ok,
            f"9 forms x 30 seeds x |Y| in {{1,2}}, {successors} successors, {failures} failures")
    assert ok


# 4 -------------------------------------------------------------------------


def test_c4_elastification_laws():
    rng = random.Random(0)
    qs = support.small_qsdas(50)
    not_elastic = lost_trees = sampled = 0
    for a in qs:
        assert a.num_states <= 12
        e = elastify(a)
        not_elastic += not is_elastic(e)
        for t in Q.sample_trees(a, rng, 200):
            if a.run(t) is None:
                continue
            sampled += 1
            lost_trees += e.run(t) is None or not a.formula_of(t).leq(e.formula_of(t))
    pairs = support.template_pairs(10)
    not_least = sum(not (order_leq(a, b) and order_leq(elastify(a), b)) for a, b in pairs)
    ok = not (not_elastic or lost_trees or not_least) and sampled > 0
    _record(4, "elastification laws", ok,
            f"{len(qs)} automata, {sampled} sampled trees, {len(pairs)} template pairs; "
            f"{not_elastic}/{lost_trees}/{not_least} failures")
    assert ok


# 5 -------------------------------------------------------------------------

N = 3
BOX = [Constraint(t, s, None, 0, c) for t in range(N) for s, c in ((1, 3), (-1, 0))]
MODELS = list(itertools.product(range(4), repeat=N))


def _random_formula(rng: random.Random) -> DataFormula:
    cs = []
    for _ in range(rng.randint(0, 4)):
        j = rng.choice([None, *range(N)])
        cs.append(Constraint(rng.randrange(N), rng.choice([1, -1]), j, rng.choice([1, -1]), rng.randint(-4, 4)))
    return DataFormula.top(N).add(cs)


def _models(a: DataFormula) -> set:
    return {v for v in MODELS if a.satisfied_by(v)}


def _lattice_failures(rng: random.Random, triples: int) -> int:
    bad = 0
    for _ in range(triples):
        a, b, c = (_random_formula(rng) for _ in range(3))
        laws = (
            a.join(b) == b.join(a),
            a.meet(b) == b.meet(a),
            a.join(b).join(c) == a.join(b.join(c)),
            a.meet(b).meet(c) == a.meet(b.meet(c)),
            a.join(a) == a and a.meet(a) == a,
            a.join(a.meet(b)) == a and a.meet(a.join(b)) == a,
            a.leq(a.join(b)) and b.leq(a.join(b)),
            a.meet(b).leq(a) and a.meet(b).leq(b),
            a.leq(a.widen(b)) and b.leq(a.widen(b)),
            not (a.leq(b) and b.leq(c)) or a.leq(c),
            not (a.leq(b) and b.leq(a)) or a == b,
        )
        bad += not all(laws)
    return bad


def test_c5_lattice_and_canonicity():
    rng = random.Random(5)
    lattice_bad = _lattice_failures(rng, 10_000)

    semantic_bad = 0
    for _ in range(2_000):
        a = _random_formula(rng).add(BOX)
        b = _random_formula(rng)
        ma, mb = _models(a), _models(b)
        semantic_bad += a.leq(b) != (ma <= mb)
        semantic_bad += a.is_bottom != (not ma)

    al = Alphabet(["p", "q"], ["y1", "y2"])
    trees = 0
    minimize_bad = 0
    for seed in range(10):
        a = oracle.random_qsda(al, random.Random(seed), heaps=12)
        b = oracle.random_qsda(al, random.Random(seed + 50), heaps=12)

        def fin(t, a=a, b=b):
            fa = al.bottom() if t[0] is None else a.final(t[0])
            fb = al.bottom() if t[1] is None else b.final(t[1])
            return fa.join(fb)

        raw, _ = Q.product([a, b], "any", fin)
        m = minimize(raw)
        minimize_bad += minimize(m) != m
        sample = Q.sample_trees(raw, rng, 50) + Q.sample_trees(Q.top(al), rng, 50)
        trees += len(sample)
        minimize_bad += sum(raw.formula_of(t) != m.formula_of(t) for t in sample)

    order_bad = 0
    small = Alphabet(["p", "q"], ["y1"])
    top, bot = Q.top(small), Q.bottom(small)
    for seed in range(50):
        r = random.Random(seed)
        a, b = oracle.random_qsda(small, r), oracle.random_qsda(small, r)
        j, mt = lattice_join(a, b), lattice_meet(a, b)
        order_bad += not all((
            order_leq(bot, a), order_leq(a, top),
            order_leq(a, j), order_leq(b, j),
            order_leq(mt, a), order_leq(mt, b),
            lattice_join(a, a) == a, lattice_meet(a, a) == a,
        ))

    ok = not (lattice_bad or semantic_bad or minimize_bad or order_bad)
    _record(5, "lattice and canonicity", ok,
            f"10000 triples, 2000 semantic pairs over 0..3, {trees} trees, 50 automaton pairs; "
            f"{lattice_bad}/{semantic_bad}/{minimize_bad}/{order_bad} failures")
    assert ok


# 6 -------------------------------------------------------------------------


def _fidelity(a: Q.Qsda, shape_pvs, rng: random.Random) -> tuple[int, int, int]:
    """(heaps, mismatches) over every shape with 1..4 list nodes plus nil, data 0..3."""
    inv = strandout.emit_formula(a)
    shapes = [s for n in range(1, 5) for s in oracle.enumerate_shapes(shape_pvs, n)]
    rep = oracle.emission_fidelity(a, inv, shapes, range(4))
    # the optimized acceptance path must agree with the naive one used above
    scalar_bad = 0
    for _ in range(300):
        s = rng.choice(shapes)
        h = rng.choice(list(oracle.labelings(s, range(4))))
        fast = a.accepts_heap(encode(h))
        scalar_bad += not (fast == oracle.naive_accepts(a, h) == oracle.evaluate_invariant(inv, h))
    return rep.heaps, rep.mismatches, scalar_bad


def test_c6_emission_fidelity():
    rng = random.Random(6)
    pv = ("nil", "head", "cur", "key")
    specs = [PropertySpec("Sort", "head"), PropertySpec("Init", "head", "key", 0, True), PropertySpec("List", "head")]
    results = {}
    for spec in specs:
        ys = ("y1", "y2")[: strandout.required_universals(spec)]
        results[spec.name] = _fidelity(strandout.property_eqsda(spec, pv, ys), pv[1:], rng)
    st = support.analysis("sorted-insert")
    shape_pvs = [v for v in st.alphabet.pv if v != "nil"]
    results["sorted-insert exit"] = _fidelity(st.exit_invariant, shape_pvs, rng)
    ok = all(m == 0 and s == 0 and h > 0 for h, m, s in results.values())
    detail = ", ".join(f"{k}: {h} heaps/{m + s} disagreements" for k, (h, m, s) in results.items())
    _record(6, "formula emission fidelity", ok, detail)
    assert ok


# 7 -------------------------------------------------------------------------


def test_c7_strengthen_keeps_language():
    pool = [encode(h) for h in support.heaps(("p", "q"), 4, (0, 1, 2))]
    bad = accepted = qsdas = 0
    for ny in (1, 2):
        al = Alphabet(["p", "q"], [f"y{i + 1}" for i in range(ny)])
        for seed in range(30):
            rng = random.Random(700 + seed)
            a = oracle.random_qsda(al, rng, max_nodes=4, heaps=24)
            if seed % 2:
                a = elastify(a)
            qsdas += 1
            for y in al.y:
                b = strengthen(a, y)
                for h in pool:
                    x = a.accepts_heap(h)
                    accepted += x
                    bad += x != b.accepts_heap(h)
    ok = bad == 0 and accepted > 0
    _record(7, "strengthen preserves heap language", ok,
            f"{qsdas} automata x {len(pool)} heaps, {accepted} accepted, {bad} disagreements")
    assert ok
