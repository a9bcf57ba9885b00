"""Brute-force validation of the abstract domain.

Everything here works from first principles on concrete configurations:
heaps are enumerated explicitly, automata are run by a direct tree walk and
formulas are evaluated against the raw difference-bound matrix.  Nothing
goes through the optimized acceptance path of :mod:`.qsda`.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import lang
from .heap import DIRTY, NIL, Alphabet, HeapConfig, make_config
from .qsda import Qsda


@dataclass(frozen=True)
class OracleConfig:
    max_nodes: int = 4
    data_range: tuple[int, int] = (0, 3)
    fuel: int = 200
    seed: int = 0
    min_nodes: int = 1

    def __post_init__(self):
        if not 0 <= self.max_nodes <= 6:
            raise ValueError("max_nodes must be within 0..6")
        lo, hi = self.data_range
        if hi < lo or hi - lo + 1 > 5:
            raise ValueError("data range must hold between 1 and 5 values")

    @property
    def values(self) -> range:
        return range(self.data_range[0], self.data_range[1] + 1)


# --------------------------------------------------------------------------
# naive acceptance


def _tree_of(c: HeapConfig) -> tuple[dict[int, list[int]], dict[int, set[str]]]:
    kids: dict[int, list[int]] = {loc: [] for loc in c.locs}
    for a, b in c.next:
        kids[b].append(a)
    names: dict[int, set[str]] = {loc: set() for loc in c.locs}
    for p, v in c.pval:
        names[v].add(p)
    return kids, names


def formula_holds(m: np.ndarray | None, values: Sequence[int]) -> bool:
    """Check ``V_j - V_i <= m[i, j]`` with ``V_2t = x_t`` and ``V_2t+1 = -x_t``."""
    if m is None:
        return False
    v = np.empty(2 * len(values))
    v[0::2] = values
    v[1::2] = [-x for x in values]
    diff = v[None, :] - v[:, None]
    return bool(np.all(diff <= m))


def naive_formula(a: Qsda, c: HeapConfig, where: dict[int, str]) -> tuple[np.ndarray | None, bool]:
    """Run ``a`` on the valuation of ``c`` placing ``where[loc]`` on ``loc``."""
    al = a.alphabet
    kids, names = _tree_of(c)
    typ: dict[int, int] = {}

    def run(loc: int) -> int | None:
        sub = []
        acc = 0
        for ch in kids[loc]:
            s = run(ch)
            if s is None:
                return None
            sub.append((typ[ch], s))
            acc |= typ[ch]
        sub.sort()
        if loc == DIRTY:
            letter = al.root
        else:
            letter = 0
            for n in names[loc]:
                letter |= al.bit[n]
            if loc in where:
                letter |= al.bit[where[loc]]
        typ[loc] = acc | (0 if loc == DIRTY else letter)
        return a.rules.get((tuple(s for _, s in sub), letter))

    s = run(DIRTY)
    if s is None or s not in a.finals:
        return None, False
    f = a.finals[s]
    return (None if f.is_bottom else f.matrix), True


def _values(al: Alphabet, c: HeapConfig, where: dict[int, str]) -> list[int]:
    data = c.data_map
    pv = c.pval_map
    out = [0] * len(al.terms)
    for name, t in al.term_of.items():
        if name in pv:
            out[t] = data.get(pv[name], 0)
    for loc, y in where.items():
        out[al.term_of[y]] = data.get(loc, 0)
    return out


def placements(c: HeapConfig, ys: Sequence[str]) -> Iterator[dict[int, str]]:
    slots = [loc for loc in c.locs if loc != DIRTY]
    for perm in itertools.permutations(slots, len(ys)):
        yield dict(zip(perm, ys))


def naive_accepts(a: Qsda, c: HeapConfig) -> bool:
    """Every valuation of ``c`` is accepted (vacuous with too few nodes)."""
    al = a.alphabet
    for where in placements(c, al.y):
        m, ok = naive_formula(a, c, where)
        if not ok or m is None or not formula_holds(m, _values(al, c, where)):
            return False
    return True


# --------------------------------------------------------------------------
# heap enumeration


def enumerate_shapes(pointer_vars: Sequence[str], n: int, fixed_nil: Sequence[str] = (),
                     allow_dirty: bool = True) -> Iterator[HeapConfig]:
    """All canonical heaps with exactly ``n`` non-nil nodes, data all zero.

    Pointers in ``fixed_nil`` are pinned to nil.  Location 1 is nil.
    """
    order = [NIL, *[p for p in pointer_vars if p != NIL]]
    free = [p for p in order if p != NIL and p not in fixed_nil]
    nodes = list(range(2, n + 2))
    targets = [1, *nodes] + ([DIRTY] if allow_dirty else [])
    seen: set[HeapConfig] = set()
    for succ in itertools.product(targets, repeat=n):
        nxt = {1: DIRTY, **dict(zip(nodes, succ))}
        if not _acyclic(nxt):
            continue
        for place in itertools.product([1, *nodes], repeat=len(free)):
            pval = {p: 1 for p in order}
            pval.update(zip(free, place))
            c = make_config(0, nxt, {loc: 0 for loc in nxt}, pval, order)
            if len(c.locs) != n + 2 or c in seen:
                continue
            seen.add(c)
            yield c


def _acyclic(nxt: dict[int, int]) -> bool:
    for start in nxt:
        v, steps = start, 0
        while v != DIRTY:
            v = nxt[v]
            steps += 1
            if steps > len(nxt):
                return False
    return True


def labelings(c: HeapConfig, values: Sequence[int]) -> Iterator[HeapConfig]:
    nil = c.pval_map[NIL]
    locs = [loc for loc in c.locs if loc not in (DIRTY, nil)]
    order = [p for p, _ in c.pval]
    for vals in itertools.product(values, repeat=len(locs)):
        data = {nil: 0, **dict(zip(locs, vals))}
        yield make_config(c.pc, c.next_map, data, c.pval_map, order)


def enumerate_heaps(pointer_vars: Sequence[str], n: int, values: Sequence[int],
                    fixed_nil: Sequence[str] = (), allow_dirty: bool = True) -> Iterator[HeapConfig]:
    for shape in enumerate_shapes(pointer_vars, n, fixed_nil, allow_dirty):
        yield from labelings(shape, values)


def with_cells(c: HeapConfig, cells: Sequence[str], values: Sequence[int],
               order: Sequence[str]) -> Iterator[HeapConfig]:
    """Add a private cell (dirty next field) for each data variable."""
    nxt, data, pval = c.next_map, c.data_map, c.pval_map
    base = max(c.locs) + 1
    locs = list(range(base, base + len(cells)))
    for vals in itertools.product(values, repeat=len(cells)):
        n2 = {**nxt, **{loc: DIRTY for loc in locs}}
        d2 = {**data, **dict(zip(locs, vals))}
        p2 = {**pval, **dict(zip(cells, locs))}
        yield make_config(c.pc, n2, d2, p2, order)


def enumerate_initial_heaps(p: lang.Program, pre: Qsda, cfg: OracleConfig) -> Iterator[HeapConfig]:
    """Heaps with ``min_nodes..max_nodes`` list nodes satisfying the precondition.

    Candidates pin pointers that no precondition mentions to nil, forbid
    dangling next fields and give every data variable its own cell (not
    counted in the node budget); membership is decided by naive acceptance.
    """
    p = lang.desugar_data_vars(p)
    anchors = {s.anchor for s in p.preconditions}
    anchors |= {s.key for s in p.preconditions if s.name == "Last" and s.key}
    ptrs = [v for v in p.pointer_vars if v not in p.cells]
    fixed = [v for v in ptrs if v not in anchors]
    order = [NIL, *[v for v in p.pointer_vars if v != NIL]]
    for n in range(max(cfg.min_nodes, 1), cfg.max_nodes + 1):
        for base in enumerate_heaps(ptrs, n, cfg.values, fixed, allow_dirty=False):
            for c in with_cells(base, p.cells, cfg.values, order):
                if naive_accepts(pre, c):
                    yield c


# --------------------------------------------------------------------------
# soundness sweep


@dataclass
class Violation:
    pc: int
    config: HeapConfig
    initial: HeapConfig

    def describe(self) -> str:
        return f"pc {self.pc}: {self.config.describe()} (from {self.initial.describe()})"


@dataclass
class SweepReport:
    initial_heaps: int = 0
    checked: int = 0
    violations: list[Violation] = field(default_factory=list)
    errors: list[tuple[HeapConfig, str, list]] = field(default_factory=list)
    exhausted: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {
            "initial_heaps": self.initial_heaps,
            "checked": self.checked,
            "violations": [
                {"pc": v.pc, "config": v.config.describe(), "initial": v.initial.describe()}
                for v in self.violations
            ],
            "errors": [
                {"initial": c.describe(), "reason": r, "trace": [f"{pc}: {x.describe()}" for pc, x in t]}
                for c, r, t in self.errors
            ],
            "fuel_exhausted": self.exhausted,
        }


def soundness_sweep(p: lang.Program, state, cfg: OracleConfig, pre: Qsda | None = None,
                    limit: int = 50) -> SweepReport:
    """Check every concretely reachable configuration against the invariants.

    ``state`` is an :class:`~.engine.AnalysisState` (or anything with an
    ``inv`` map and a ``program``).  Violations are capped at ``limit``.
    """
    prog = getattr(state, "program", p)
    pre = pre if pre is not None else state.inv[state.cfg.entry]
    report = SweepReport()
    done: set[tuple[int, HeapConfig]] = set()
    graph = lang.build_cfg(prog)
    for init in enumerate_initial_heaps(prog, pre, cfg):
        report.initial_heaps += 1
        res = lang.run_concrete(prog, init, cfg.fuel, tuple(cfg.values), graph)
        report.exhausted |= res.exhausted
        for trace, err in res.errors:
            if len(report.errors) < limit:
                report.errors.append((init, err.reason, trace))
        for pc, c in res:
            if (pc, c) in done:
                continue
            done.add((pc, c))
            report.checked += 1
            inv = state.inv.get(pc)
            if inv is None or not naive_accepts(inv, c):
                if len(report.violations) < limit:
                    report.violations.append(Violation(pc, c, init))
    return report


# --------------------------------------------------------------------------
# random automata


def _symbolic_key(c: HeapConfig, where: dict[int, str]):
    """Canonical nested signature of a valuation's symbolic tree."""
    kids, names = _tree_of(c)

    def sig(loc: int):
        label = tuple(sorted(names[loc])) + ((where[loc],) if loc in where else ())
        return (label, tuple(sorted(sig(ch) for ch in kids[loc])))

    return sig(DIRTY)


def automaton_from_heaps(al: Alphabet, heaps: Sequence[HeapConfig], rng: random.Random,
                         slack: int = 1, drop: float = 0.3) -> Qsda:
    """A valid QSDA accepting at least the given heaps.

    Each symbolic tree seen in a valuation gets the octagon hull of its data
    points, weakened by random slack and dropped constraints.
    """
    from .datafmla import DataFormula

    points: dict = {}
    for c in heaps:
        for where in placements(c, al.y):
            key = _symbolic_key(c, where)
            points.setdefault(key, []).append(_values(al, c, where))
    types: list[int] = []
    rules: dict = {}
    finals: dict = {}
    n = len(al.terms)

    def build(sig, is_root: bool) -> tuple[int, int]:
        label, children = sig
        sub = sorted((build(ch, False) for ch in children), key=lambda x: x[1])
        letter = al.root if is_root else al.mask(label)
        acc = (0 if is_root else letter)
        for s, t in sub:
            acc |= t
        key = (tuple(s for s, _ in sub), letter)
        if key not in rules:
            rules[key] = len(types)
            types.append(acc)
        return rules[key], acc

    for sig, pts in points.items():
        s, _ = build(sig, True)
        m = None
        for pt in pts:
            v = np.empty(2 * n)
            v[0::2] = pt
            v[1::2] = [-x for x in pt]
            d = v[None, :] - v[:, None]
            m = d if m is None else np.maximum(m, d)
        for i in range(2 * n):
            for j in range(2 * n):
                if i == j:
                    continue
                if rng.random() < drop:
                    m[i, j] = np.inf
                else:
                    m[i, j] += rng.randint(0, slack)
        f = DataFormula._from_raw(n, m)
        finals[s] = f if s not in finals else finals[s].join(f)
    return Qsda(al, types, rules, finals)


def random_qsda(al: Alphabet, rng: random.Random, max_nodes: int = 3, heaps: int = 4,
                values: Sequence[int] = (0, 1, 2)) -> Qsda:
    """Random valid QSDA seeded by a few random heaps (canonical numbering)."""
    from .qsda import minimize

    pool = []
    for _ in range(heaps):
        n = rng.randint(max(1, len(al.y) - 1), max_nodes)
        pool.append(random_heap(al.pv, n, rng, values))
    return minimize(automaton_from_heaps(al, pool, rng))


def random_heap(pointer_vars: Sequence[str], n: int, rng: random.Random,
                values: Sequence[int] = (0, 1, 2)) -> HeapConfig:
    """Random acyclic heap with ``n`` nodes; unreachable nodes are collected."""
    order = [NIL, *[p for p in pointer_vars if p != NIL]]
    nodes = list(range(2, n + 2))
    nxt = {1: DIRTY}
    for i, v in enumerate(nodes):
        # only point to earlier nodes, so the heap stays acyclic
        nxt[v] = rng.choice([1, DIRTY, *nodes[:i]])
    data = {1: 0, **{v: rng.choice(list(values)) for v in nodes}}
    pval = {p: rng.choice([1, *nodes]) for p in order}
    pval[NIL] = 1
    return make_config(0, nxt, data, pval, order)


# --------------------------------------------------------------------------
# emitted formulas


def _reach(nxt: dict[int, int], a: int, b: int, strict: bool) -> bool:
    v = nxt.get(a, DIRTY) if strict else a
    if strict and a == DIRTY:
        return False
    while True:
        if v == b:
            return True
        if v == DIRTY:
            return False
        v = nxt[v]


def _atom_holds(atom, nxt: dict[int, int], env: dict[str, int | None]) -> bool:
    if atom.rel == "unbound":
        return env.get(atom.lhs) is None
    a = env.get(atom.lhs)
    b = DIRTY if atom.rhs == "dirty" else env.get(atom.rhs)
    if a is None or b is None:
        val = False
    elif atom.rel == "next":
        val = a != DIRTY and nxt[a] == b
    elif atom.rel == "next+":
        val = a != DIRTY and _reach(nxt, a, b, strict=True)
    else:
        val = _reach(nxt, a, b, strict=False)
    return val != atom.negated


def branching_nodes(c: HeapConfig) -> list[int]:
    """Non-root nodes with two or more predecessors and no pointer variable."""
    indeg: dict[int, int] = {}
    for a, b in c.next:
        indeg[b] = indeg.get(b, 0) + 1
    named = {v for _, v in c.pval}
    return [loc for loc in c.locs if loc != DIRTY and indeg.get(loc, 0) >= 2 and loc not in named]


def evaluate_invariant(inv, c: HeapConfig) -> bool:
    """Evaluate an emitted invariant by enumerating every quantifier."""
    al = inv.alphabet
    nxt = c.next_map
    pv = c.pval_map
    branch = branching_nodes(c)
    k = len(inv.branch_vars)
    if len(branch) > k:
        return False
    base = {p: pv[p] for p in al.pv}
    for slots in itertools.permutations(range(k), len(branch)):
        env_b = dict(base)
        for b in inv.branch_vars:
            env_b[b] = None
        for slot, node in zip(slots, branch):
            env_b[inv.branch_vars[slot]] = node
        if _forall_y(inv, c, nxt, env_b):
            return True
    return False


def _forall_y(inv, c: HeapConfig, nxt, env_b) -> bool:
    al = inv.alphabet
    for where in placements(c, inv.universal_vars):
        env = dict(env_b)
        for loc, y in where.items():
            env[y] = loc
        vals = _values(al, c, where)
        some = False
        for cl in inv.clauses:
            if all(_atom_holds(a, nxt, env) for a in cl.guard):
                some = True
                m = None if cl.formula.is_bottom else cl.formula.matrix
                if not formula_holds(m, vals):
                    return False
        if not some:
            return False
    return True


# --------------------------------------------------------------------------
# bulk emission fidelity
#
# A shape fixes everything but the data, and both the automaton run and the
# guards of an emitted invariant are data independent.  So each shape is
# walked once per placement and the data checks run for every data vector
# at once.


_RELS = ("next", "next+", "next*")


@dataclass
class FidelityReport:
    shapes: int = 0
    heaps: int = 0
    accepted: int = 0
    mismatches: int = 0
    # (heap, accepted, invariant holds), capped
    disagreements: list[tuple[HeapConfig, bool, bool]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.mismatches == 0


def _holds_rows(m: np.ndarray | None, vals: np.ndarray) -> np.ndarray:
    """Vectorized :func:`formula_holds` over the rows of ``vals``."""
    if m is None:
        return np.zeros(len(vals), bool)
    v = np.empty((len(vals), 2 * vals.shape[1]))
    v[:, 0::2] = vals
    v[:, 1::2] = -vals
    diff = v[:, None, :] - v[:, :, None]
    return np.all(diff <= m[None], axis=(1, 2))


class _CompiledInvariant:
    def __init__(self, inv):
        self.inv = inv
        al = inv.alphabet
        self.vars = [*al.pv, *inv.branch_vars, *inv.universal_vars, "dirty"]
        index = {v: i for i, v in enumerate(self.vars)}
        rows = []
        for ci, cl in enumerate(inv.clauses):
            for a in cl.guard:
                rel = 3 if a.rel == "unbound" else _RELS.index(a.rel)
                rows.append((ci, rel, index[a.lhs], index.get(a.rhs, 0), a.negated))
        arr = np.array(rows, dtype=int).reshape(-1, 5)
        self.atom_clause, self.atom_rel = arr[:, 0], arr[:, 1]
        self.atom_lhs, self.atom_rhs, self.atom_neg = arr[:, 2], arr[:, 3], arr[:, 4].astype(bool)
        self.n_clauses = len(inv.clauses)
        # atoms are grouped by clause; remember where each group starts
        sizes = np.bincount(self.atom_clause, minlength=self.n_clauses)
        self.nonempty = np.nonzero(sizes)[0]
        self.starts = (np.cumsum(sizes) - sizes)[self.nonempty]
        self.matrices = [None if c.formula.is_bottom else c.formula.matrix for c in inv.clauses]

    def holding(self, rel: np.ndarray, env: np.ndarray, unbound: int) -> np.ndarray:
        """``(placements, clauses)`` truth table of the guards."""
        lhs = env[:, self.atom_lhs]
        rhs = env[:, self.atom_rhs]
        val = np.where(self.atom_rel[None] == 3, lhs == unbound,
                       rel[np.minimum(self.atom_rel, 2)[None], lhs, rhs])
        val = val != self.atom_neg[None]
        out = np.ones((env.shape[0], self.n_clauses), bool)
        if len(self.nonempty):
            out[:, self.nonempty] = np.logical_and.reduceat(val, self.starts, axis=1)
        return out


def _relations(c: HeapConfig, locs: list[int]) -> np.ndarray:
    """next / next+ / next* over ``locs + [dirty, unbound]``; unbound relates to nothing."""
    nxt = c.next_map
    k = len(locs) + 2
    pos = {loc: i for i, loc in enumerate(locs)}
    pos[DIRTY] = k - 2
    rel = np.zeros((3, k, k), bool)
    for loc in locs:
        i = pos[loc]
        rel[2, i, i] = True
        v, first = nxt[loc], True
        while True:
            j = pos[v]
            if first:
                rel[0, i, j] = True
                first = False
            rel[1, i, j] = rel[2, i, j] = True
            if v == DIRTY:
                break
            v = nxt[v]
    rel[2, k - 2, k - 2] = True
    return rel


def emission_fidelity(a: Qsda, inv, shapes: Sequence[HeapConfig], values: Sequence[int],
                      limit: int = 20) -> FidelityReport:
    """Compare ``a``'s heap acceptance with the emitted ``inv`` on every data labelling of ``shapes``.

    Acceptance is the naive tree walk of this module; the invariant is
    evaluated by enumerating its branch and universal variables.
    """
    al = a.alphabet
    comp = _CompiledInvariant(inv)
    rep = FidelityReport()
    for c in shapes:
        rep.shapes += 1
        nil = c.pval_map[NIL]
        locs = sorted(loc for loc in c.locs if loc != DIRTY)
        free = [loc for loc in locs if loc != nil]
        col = {loc: i for i, loc in enumerate(locs)}
        grid = np.array(list(itertools.product(values, repeat=len(free))), dtype=float).reshape(-1, len(free))
        data = np.zeros((len(grid), len(locs)))
        for i, loc in enumerate(free):
            data[:, col[loc]] = grid[:, i]
        rep.heaps += len(grid)
        wheres = list(placements(c, al.y))
        pv = c.pval_map
        term_locs = []
        for where in wheres:
            tl = [0] * len(al.terms)
            for name, t in al.term_of.items():
                if name in pv:
                    tl[t] = col[pv[name]]
            for loc, y in where.items():
                tl[al.term_of[y]] = col[loc]
            term_locs.append(tl)
        cache: dict[tuple[int, int], np.ndarray] = {}

        def holds(pi: int, m) -> np.ndarray:
            key = (pi, id(m))
            if key not in cache:
                cache[key] = _holds_rows(m, data[:, term_locs[pi]])
            return cache[key]

        accept = np.ones(len(grid), bool)
        for pi, where in enumerate(wheres):
            m, ok = naive_formula(a, c, where)
            if not ok or m is None:
                accept[:] = False
                break
            accept &= holds(pi, m)
        truth = _invariant_rows(comp, c, locs, wheres, holds, len(grid))
        rep.accepted += int(accept.sum())
        bad = np.nonzero(accept != truth)[0]
        rep.mismatches += len(bad)
        for row in bad[: max(0, limit - len(rep.disagreements))]:
            d = {nil: 0, **dict(zip(free, (int(x) for x in grid[row])))}
            order = [p for p, _ in c.pval]
            rep.disagreements.append(
                (make_config(c.pc, c.next_map, d, pv, order), bool(accept[row]), bool(truth[row])))
    return rep


def _invariant_rows(comp: _CompiledInvariant, c: HeapConfig, locs, wheres, holds, rows: int) -> np.ndarray:
    inv = comp.inv
    al = inv.alphabet
    rel = _relations(c, locs)
    k = len(locs)
    dirty, unbound = k, k + 1
    pos = {loc: i for i, loc in enumerate(locs)}
    pv = c.pval_map
    branch = branching_nodes(c)
    nb = len(inv.branch_vars)
    out = np.zeros(rows, bool)
    if len(branch) > nb:
        return out
    nv = len(comp.vars)
    yidx = {y: i for i, y in enumerate(comp.vars)}
    base = np.full(nv, unbound)
    for i, p in enumerate(al.pv):
        base[i] = pos[pv[p]]
    base[nv - 1] = dirty
    for slots in itertools.permutations(range(nb), len(branch)):
        env_b = base.copy()
        for slot, node in zip(slots, branch):
            env_b[len(al.pv) + slot] = pos[node]
        env = np.tile(env_b, (len(wheres), 1))
        for pi, where in enumerate(wheres):
            for loc, y in where.items():
                env[pi, yidx[y]] = pos[loc]
        table = comp.holding(rel, env, unbound) if len(wheres) else np.zeros((0, comp.n_clauses), bool)
        if not table.any(axis=1).all():
            continue
        ok = np.ones(rows, bool)
        for pi in range(len(wheres)):
            for ci in np.nonzero(table[pi])[0]:
                ok &= holds(pi, comp.matrices[ci])
                if not ok.any():
                    break
        out |= ok
        if out.all():
            break
    return out
