"""Abstract post-conditions on automata, one construction per statement form.

Every construction reads the post-state tree ``t'`` and guesses a run of the
input automaton on a pre-state tree ``t`` that the statement maps to ``t'``.
The resulting nondeterministic automaton is determinized (joining formulas
of the guessed runs) and minimized.  Garbage collection is part of the
concrete semantics, so the constructions also guess the subtrees that
disappeared because they became unreachable.
"""

from __future__ import annotations

import itertools
import time
from typing import Callable

from . import lang
from .datafmla import DataFormula, LinearAtom, atom_constraints
from .errors import InexpressiblePredicate, UnsupportedStmt
from .heap import NIL, Alphabet
from .qsda import Nfa, Qsda, bottom, determinize, lattice_join, minimize, product

DROP = object()


# --------------------------------------------------------------------------
# observers: small deterministic automata over t' used in products


class LabelObserver:
    """Tracks the letter of the node holding pointer ``p``."""

    def __init__(self, alphabet: Alphabet, p: str):
        self.alphabet = alphabet
        self.pb = alphabet.bit[p]

    def step(self, children: tuple, letter: int):
        al = self.alphabet
        acc = 0
        label = None
        for t, l in children:
            acc |= t
            if l is not None:
                label = l
        if letter & al.root:
            return (acc, label)
        if letter & self.pb:
            label = letter
        return (acc | letter, label)

    def type_of(self, s) -> int:
        return s[0]


class NextObserver:
    """Decides ``p->next == q``: q's node is the tree parent of p's node."""

    def __init__(self, alphabet: Alphabet, p: str, q: str):
        self.alphabet = alphabet
        self.pb = alphabet.bit[p]
        self.qb = alphabet.bit[q]

    def step(self, children: tuple, letter: int):
        acc = 0
        ok = False
        top_child = False
        for t, top, good in children:
            acc |= t
            ok = ok or good
            top_child = top_child or top
        if letter & self.alphabet.root:
            return (acc, False, ok)
        if letter & self.qb and top_child:
            ok = True
        return (acc | letter, bool(letter & self.pb), ok)

    def type_of(self, s) -> int:
        return s[0]


class ReachObserver:
    """Decides ``p->*next == q``: q's node is an ancestor-or-self of p's."""

    def __init__(self, alphabet: Alphabet, p: str, q: str):
        self.alphabet = alphabet
        self.pb = alphabet.bit[p]
        self.qb = alphabet.bit[q]

    def step(self, children: tuple, letter: int):
        acc = 0
        ok = False
        for t, good in children:
            acc |= t
            ok = ok or good
        if letter & self.alphabet.root:
            return (acc, ok)
        acc |= letter
        if letter & self.qb and acc & self.pb:
            ok = True
        return (acc, ok)

    def type_of(self, s) -> int:
        return s[0]


# --------------------------------------------------------------------------
# helpers


def garbage_states(a: Qsda, pb: int, yb: int = 0) -> set[int]:
    """States of subtrees that vanish once pointer ``p`` leaves them.

    Such a subtree is the leaf holding only ``p`` plus the chain of blank
    unary nodes above it.  With ``yb`` set the chain may also carry that
    universal variable once (used by ``new``, where the pre-state placement
    of ``y`` is guessed).
    """
    out: set[int] = set()
    frontier = []
    for letter in {pb, pb | yb}:
        s = a.rules.get(((), letter))
        if s is not None and s not in out:
            out.add(s)
            frontier.append(s)
    while frontier:
        s = frontier.pop()
        letters = [0]
        if yb and not a.types[s] & yb:
            letters.append(yb)
        for letter in letters:
            t = a.rules.get(((s,), letter))
            if t is not None and t not in out:
                out.add(t)
                frontier.append(t)
    return out


def _top_flags(a: Qsda, bit: int) -> list[set[bool]]:
    """For each state, whether its producing letters carry ``bit``."""
    flags: list[set[bool]] = [set() for _ in range(a.num_states)]
    for (kids, letter), t in a.rules.items():
        flags[t].add(bool(letter & bit))
    return flags


def _finish_with_label(
    a: Qsda,
    nfa: Nfa,
    det: Qsda,
    macros: list[frozenset],
    p: str,
    source_state: Callable[[object], int],
    update: Callable[[DataFormula, int], DataFormula],
) -> Qsda:
    """Attach formulas that depend on the post-state label of ``p``."""
    obs = LabelObserver(a.alphabet, p)
    cache: dict = {}

    def fin(t):
        key = (t[0], t[1][1])
        hit = cache.get(key)
        if hit is None:
            label = t[1][1]
            hit = a.alphabet.bottom()
            for m in macros[t[0]]:
                hit = hit.join(update(a.final(source_state(nfa.keys[m])), label))
            cache[key] = hit
        return hit

    prod, _ = product([det, obs], "all", fin)
    return minimize(prod)


def _colocated_update(al: Alphabet, p: str, label: int, phi: DataFormula) -> DataFormula:
    """Forget ``p->data`` and equate it with every variable sharing its node."""
    tp = al.term(p)
    phi = phi.project(tp)
    if label is None or label & al.nil:
        return phi
    for name in al.names_of(label):
        if name != p:
            phi = phi.constrain_eq(tp, al.term(name))
    return phi


# --------------------------------------------------------------------------
# p := q  (q may be nil)


def post_assign(a: Qsda, p: str, q: str) -> Qsda:
    al = a.alphabet
    if p == q:
        return a
    pb, qb = al.bit[p], al.bit[q]
    garbage = garbage_states(a, pb)
    nfa = Nfa(al)
    ids = []
    for s, t in enumerate(a.types):
        ids.append(nfa.state(s, (t & ~pb) | (pb if t & qb else 0)))
    for (kids, letter), s in a.rules.items():
        if letter & al.root:
            new_letter = letter
        else:
            new_letter = (letter & ~pb) | (pb if letter & qb else 0)
        options = [[ids[c], DROP] if c in garbage else [ids[c]] for c in kids]
        for choice in itertools.product(*options):
            nfa.add([c for c in choice if c is not DROP], new_letter, s)
    det, macros = determinize(nfa, "join")

    def update(phi, label):
        if q == NIL:
            return phi.project(al.term(p))
        return _colocated_update(al, p, label, phi)

    return _finish_with_label(a, nfa, det, macros, p, lambda k: k, update)


# --------------------------------------------------------------------------
# p := q->next


def post_load_next(a: Qsda, p: str, q: str) -> Qsda:
    if p == q:
        return post_advance(a, p)
    al = a.alphabet
    pb, qb = al.bit[p], al.bit[q]
    garbage = garbage_states(a, pb)
    topq = _top_flags(a, qb)
    nfa = Nfa(al)

    def nid(s: int, top: bool) -> int:
        t = a.types[s]
        inside = bool(t & qb) and not top
        return nfa.state((s, top), (t & ~pb) | (pb if inside else 0))

    for (kids, letter), s in a.rules.items():
        is_root = bool(letter & al.root)
        options = []
        for c in kids:
            opts = [(nid(c, tq), tq) for tq in sorted(topq[c])]
            if c in garbage:
                opts.append((DROP, False))
            options.append(opts)
        for choice in itertools.product(*options):
            n_top = sum(1 for _, tq in choice if tq)
            if is_root:
                if n_top:
                    continue
                new_letter = letter
            else:
                new_letter = (letter & ~pb) | (pb if n_top else 0)
            target = (s, False) if is_root else (s, bool(letter & qb))
            nfa.add([c for c, _ in choice if c is not DROP], new_letter, target)
    det, macros = determinize(nfa, "join")
    return _finish_with_label(
        a, nfa, det, macros, p, lambda k: k[0],
        lambda phi, label: _colocated_update(al, p, label, phi),
    )


def post_advance(a: Qsda, p: str) -> Qsda:
    """``p := p->next``: p moves to the parent of its node."""
    al = a.alphabet
    pb = al.bit[p]
    topp = _top_flags(a, pb)
    leaf = a.rules.get(((), pb))
    nfa = Nfa(al)

    def nid(s: int, top: bool) -> int:
        t = a.types[s]
        inside = bool(t & pb) and not top
        return nfa.state((s, top), (t & ~pb) | (pb if inside else 0))

    for (kids, letter), s in a.rules.items():
        is_root = bool(letter & al.root)
        options = []
        for c in kids:
            opts = [(nid(c, tp), tp) for tp in sorted(topp[c])]
            if c == leaf:
                opts.append((DROP, True))
            options.append(opts)
        for choice in itertools.product(*options):
            n_top = sum(1 for _, tp in choice if tp)
            if is_root:
                if n_top:
                    continue
                new_letter = letter
                target = (s, False)
            else:
                new_letter = (letter & ~pb) | (pb if n_top else 0)
                target = (s, bool(letter & pb))
            nfa.add([c for c, _ in choice if c is not DROP], new_letter, target)
    det, macros = determinize(nfa, "join")
    return _finish_with_label(
        a, nfa, det, macros, p, lambda k: k[0],
        lambda phi, label: _colocated_update(al, p, label, phi),
    )


# --------------------------------------------------------------------------
# p->next := q  (q may be nil)


def post_store_next(a: Qsda, p: str, q: str) -> Qsda:
    """Move the subtree rooted at p's node below q's node.

    NFA states over ``t'``: ``N`` (pre and post subtrees agree), ``E`` (the
    moved subtree with state ``g`` sits here in ``t'`` but not yet in ``t``)
    and ``H`` (the moved subtree was here in ``t`` but is gone in ``t'``).
    Where it left, a chain of blank nodes above it may have been collected.
    """
    al = a.alphabet
    pb, qb = al.bit[p], al.bit[q]
    types = a.types
    movable = sorted({t for (k, l), t in a.rules.items() if l & pb and not types[t] & al.nil})
    topp = _top_flags(a, pb)
    # insertion points: the moved state itself or blank chains above it
    sinks: dict[int, list[int]] = {}
    for g in movable:
        h = g
        seen = set()
        while h is not None and h not in seen:
            seen.add(h)
            sinks.setdefault(h, []).append(g)
            h = a.rules.get(((h,), 0))
    nfa = Nfa(al)

    def n_id(s: int, top: bool) -> int:
        return nfa.state(("N", s, top), types[s])

    def e_id(s: int, g: int) -> int:
        return nfa.state(("E", s, g), types[s] | types[g])

    def h_id(s: int, g: int) -> int:
        return nfa.state(("H", s, g), types[s] & ~types[g])

    def child_options(c: int):
        opts = [("N", n_id(c, tp), tp, None) for tp in sorted(topp[c])]
        tc = types[c]
        if tc & qb and not tc & pb:
            for g in movable:
                if not types[g] & tc:
                    opts.append(("E", e_id(c, g), False, g))
        if tc & pb and not tc & qb:
            for g in movable:
                if types[g] & tc == types[g] and types[g] != tc:
                    opts.append(("H", h_id(c, g), False, g))
        for g in sinks.get(c, ()):
            opts.append(("S", None, False, g))
        return opts

    opt_cache: dict[int, list] = {}

    for (kids, letter), s in a.rules.items():
        is_root = bool(letter & al.root)
        at_v = not is_root and bool(letter & qb)
        per_child = []
        for c in kids:
            if c not in opt_cache:
                opt_cache[c] = child_options(c)
            per_child.append(opt_cache[c])
        sources = [None]
        if at_v:
            sources += movable

        def walk(i, chosen, extra, hole, n_top):
            if i == len(per_child):
                yield chosen, extra, hole, n_top
                return
            for kind, nid, tp, g in per_child[i]:
                if kind == "E":
                    if extra is not None or (hole is not None and hole != g):
                        continue
                    yield from walk(i + 1, chosen + [nid], g, hole, n_top)
                elif kind in ("H", "S"):
                    if hole is not None or (extra is not None and extra != g):
                        continue
                    nxt = chosen if kind == "S" else chosen + [nid]
                    yield from walk(i + 1, nxt, extra, g, n_top)
                else:
                    yield from walk(i + 1, chosen + [nid], extra, hole, n_top + tp)

        for chosen, extra, hole, n_top in walk(0, [], None, None, 0):
            for src in sources:
                if src is not None:
                    if extra is not None or (hole is not None and hole != src):
                        continue
                if at_v:
                    if n_top + (src is not None) != 1:
                        continue
                elif n_top:
                    continue
                pend_extra = extra if extra is not None else src
                kids2 = chosen + ([n_id(src, True)] if src is not None else [])
                if pend_extra is not None and hole is not None:
                    target = ("N", s, bool(letter & pb)) if not is_root else ("N", s, False)
                elif pend_extra is not None:
                    if is_root:
                        continue
                    target = ("E", s, pend_extra)
                elif hole is not None:
                    if is_root:
                        continue
                    target = ("H", s, hole)
                else:
                    target = ("N", s, bool(letter & pb)) if not is_root else ("N", s, False)
                nfa.add(kids2, letter, target, final=(lambda s=s: a.final(s)))
    det, _ = determinize(nfa, "join")
    return minimize(det)


# --------------------------------------------------------------------------
# new p


def post_new(a: Qsda, p: str) -> Qsda:
    """Allocate a fresh node for ``p`` below the root.

    For each universal variable ``y`` there is a variant in which ``y`` sits
    on the fresh node; its pre-state position is guessed anywhere and its
    datum forgotten.
    """
    al = a.alphabet
    pb = al.bit[p]
    tp = al.term(p)
    roots = a.root_states()
    nfa = Nfa(al)
    for yname in (None, *al.y):
        yb = al.bit[yname] if yname else 0
        ty = al.term(yname) if yname else None
        garbage = garbage_states(a, pb, yb)
        ids = {s: nfa.state((s, yb), t & ~pb & ~yb)
               for s, t in enumerate(a.types) if s not in roots}
        fresh = nfa.add([], pb | yb, ("new", yb))

        def final(s, ty=ty):
            phi = a.final(s).project(tp)
            if ty is not None:
                phi = phi.project(ty).constrain_eq(tp, ty)
            return phi

        for (kids, letter), s in a.rules.items():
            is_root = bool(letter & al.root)
            new_letter = letter if is_root else letter & ~pb & ~yb
            options = [[ids[c], DROP] if c in garbage else [ids[c]] for c in kids]
            for choice in itertools.product(*options):
                chosen = [c for c in choice if c is not DROP]
                if is_root:
                    chosen.append(fresh)
                    nfa.add(chosen, new_letter, (s, yb), final=(lambda s=s, f=final: f(s)))
                else:
                    nfa.add(chosen, new_letter, (s, yb))
    det, _ = determinize(nfa, "join")
    return minimize(det)


# --------------------------------------------------------------------------
# p->data := e


def post_data_assign(a: Qsda, p: str, expr: lang.LinExpr) -> Qsda:
    al = a.alphabet
    src, off = expr.as_term_offset()
    u = al.term(src) if src is not None else None
    if src == NIL:
        raise InexpressiblePredicate("nil has no data field")

    def update(phi: DataFormula, label) -> DataFormula:
        if label is None or label & al.nil:
            return al.bottom()
        targets = [al.term(n) for n in al.names_of(label)]
        if u is not None and u in targets:
            phi = phi.shift(u, off)
            for v in targets:
                if v != u:
                    phi = phi.assign_term(v, u, 0)
            return phi
        phi = phi.project(*targets)
        for v in targets:
            phi = phi.assign_term(v, u, off)
        return phi

    obs = LabelObserver(al, p)
    prod, _ = product([a, obs], "all", lambda t: update(a.final(t[0]), t[1][1]))
    return minimize(prod)


# --------------------------------------------------------------------------
# assume


def filter_eq(a: Qsda, p: str, q: str, positive: bool) -> Qsda:
    """Keep runs where p and q share a node (or never do, when negative)."""
    al = a.alphabet
    if p == q:
        return a if positive else bottom(al)
    pb, qb = al.bit[p], al.bit[q]
    both = pb | qb
    rules = {}
    for key, t in a.rules.items():
        hit = key[1] & both
        if positive and hit and hit != both:
            continue
        if not positive and hit == both:
            continue
        rules[key] = t
    return minimize(Qsda(al, a.types, rules, dict(a.finals)))


def filter_observer(a: Qsda, obs, positive: bool) -> Qsda:
    bottom_f = a.alphabet.bottom()

    def fin(t):
        ok = t[1][-1]
        return a.final(t[0]) if ok == positive else bottom_f

    prod, _ = product([a, obs], "all", fin)
    return minimize(prod)


def meet_data(a: Qsda, psi: DataFormula) -> Qsda:
    finals = {s: f.meet(psi) for s, f in a.finals.items()}
    return minimize(Qsda(a.alphabet, a.types, dict(a.rules), finals))


def _data_alternatives(al: Alphabet, atom: lang.DataCmp, positive: bool) -> list[DataFormula]:
    cmp = atom if positive else atom.negate()
    diff = cmp.lhs.minus(cmp.rhs)
    coefs = []
    for name, k in diff.coefs:
        t = al.term(name)
        if t is None:
            raise InexpressiblePredicate(f"{name} has no data field")
        coefs.append((t, k))
    lin = LinearAtom(tuple(sorted(coefs)), diff.const, cmp.op)
    return [al.top().add(conj) for conj in atom_constraints(lin)]


def guard_cases(al: Alphabet, pred: lang.Pred) -> list[tuple[list, DataFormula]]:
    """Split a guard into (structural literals, data formula) alternatives.

    Every data atom also contributes ``x != nil`` for each pointer it reads:
    a short-circuit evaluation that reaches the atom dereferences them, and
    a dereference of nil is a memory error rather than a successor state.
    """
    out = []
    for conj in lang.dnf(pred):
        structs = []
        datas: list[list[DataFormula]] = []
        for atom, positive in conj:
            if isinstance(atom, lang.DataCmp):
                datas.append(_data_alternatives(al, atom, positive))
                for name in atom.lhs.names() + atom.rhs.names():
                    structs.append((lang.PtrEq(name, NIL), False))
            else:
                structs.append((atom, positive))
        for pick in itertools.product(*datas):
            psi = al.top()
            for f in pick:
                psi = psi.meet(f)
            if not psi.is_bottom:
                out.append((list(dict.fromkeys(structs)), psi))
    return out


def apply_struct(a: Qsda, atom, positive: bool) -> Qsda:
    al = a.alphabet
    if isinstance(atom, lang.PtrEq):
        return filter_eq(a, atom.p, atom.q, positive)
    if isinstance(atom, lang.NextEq):
        return filter_observer(a, NextObserver(al, atom.p, atom.q), positive)
    if isinstance(atom, lang.ReachEq):
        return filter_observer(a, ReachObserver(al, atom.p, atom.q), positive)
    raise UnsupportedStmt(f"unknown structural atom {atom!r}")


def post_assume(a: Qsda, pred: lang.Pred) -> Qsda:
    al = a.alphabet
    result = None
    for structs, psi in guard_cases(al, pred):
        b = a
        for atom, positive in structs:
            b = apply_struct(b, atom, positive)
            if not b.rules:
                break
        if b.rules and not psi.is_top:
            b = meet_data(b, psi)
        result = b if result is None else lattice_join(result, b)
    return bottom(al) if result is None else result


# --------------------------------------------------------------------------
# dispatch


def post(a: Qsda, s, trace: list | None = None) -> Qsda:
    """Abstract post-condition of one simple statement."""
    started = time.perf_counter()
    if not a.rules and not isinstance(s, (lang.If, lang.While)):
        out, case = a, "bottom"
    elif isinstance(s, lang.Skip):
        out, case = a, "skip"
    elif isinstance(s, lang.PtrAssignNil):
        out, case = post_assign(a, s.p, NIL), "assign"
    elif isinstance(s, lang.PtrAssign):
        out, case = post_assign(a, s.p, s.q), "assign"
    elif isinstance(s, lang.PtrAssignNext):
        out, case = post_load_next(a, s.p, s.q), "load-next"
    elif isinstance(s, lang.NextAssignNil):
        out, case = post_store_next(a, s.p, NIL), "store-next"
    elif isinstance(s, lang.NextAssign):
        out, case = post_store_next(a, s.p, s.q), "store-next"
    elif isinstance(s, lang.DataAssign):
        out, case = post_data_assign(a, s.p, s.expr), "data-assign"
    elif isinstance(s, lang.New):
        out, case = post_new(a, s.p), "new"
    elif isinstance(s, lang.Assume):
        out, case = post_assume(a, s.pred), "assume"
    else:
        raise UnsupportedStmt(f"composite statement {type(s).__name__} has no direct transformer")
    if trace is not None:
        trace.append({
            "stmt": lang.render_stmt(s),
            "case": case,
            "in_states": a.num_states,
            "out_states": out.num_states,
            "seconds": round(time.perf_counter() - started, 4),
        })
    return out


class _Erased:
    """View of an automaton over letters with one universal variable removed."""

    def __init__(self, inner: Qsda, yb: int):
        self.inner = inner
        self.yb = yb
        self.alphabet = inner.alphabet
        self.root = inner.alphabet.root

    def step(self, children: tuple, letter: int):
        kids = tuple(sorted(children, key=self.inner.types.__getitem__))
        if not letter & self.root:
            letter &= ~self.yb
        return self.inner.rules.get((kids, letter))

    def type_of(self, s) -> int:
        return self.inner.types[s]

    def final(self, s) -> DataFormula:
        return self.inner.final(s)


def _placements(kids: tuple, letter: int, yb: int, seen: dict[int, set]):
    """Yield ``(label at y, per-child labels)`` for the runs through one rule.

    A child key of None means y is not placed in that subtree; y occurs
    once, so at most one child (or the node itself) carries a label.
    """
    none = (None,) * len(kids)
    if letter & yb:
        if all(None in seen[k] for k in kids):
            yield letter, none
        return
    if all(None in seen[k] for k in kids):
        yield None, none
    for i, k in enumerate(kids):
        if not all(None in seen[o] for j, o in enumerate(kids) if j != i):
            continue
        for c in seen[k]:
            if c is not None:
                yield c, none[:i] + (c,) + none[i + 1:]


def strengthen(a: Qsda, y: str, colocate: bool = True) -> Qsda:
    """Meet each tree's formula with what holds for every placement of ``y``.

    With ``colocate`` the data equalities between ``y`` and the pointers
    sharing its node are added before ``y`` is projected away.  They follow
    from the tree itself, so the heap language is unchanged either way.
    """
    al = a.alphabet
    if not a.rules:
        return a
    yb = al.bit[y]
    ty = al.term(y)
    nfa = Nfa(al)
    nfa.full = al.full & ~yb
    # runs carry the label of y's node (None until y is placed) so that the
    # implicit equalities between y and its neighbours survive projection
    seen: dict[int, set] = {s: set() for s in range(a.num_states)}
    todo = True
    while todo:
        todo = False
        for (kids, letter), s in a.rules.items():
            if letter & al.root:
                continue
            for c, _ in _placements(kids, letter, yb, seen):
                if c not in seen[s]:
                    seen[s].add(c)
                    todo = True
    ids = {(s, c): nfa.state((s, c), t & ~yb) for s, t in enumerate(a.types) for c in seen[s]}

    def tree_final(s: int, c) -> DataFormula:
        phi = a.final(s)
        if colocate and c is not None and not c & al.nil:
            for name in al.names_of(c):
                if name != y:
                    phi = phi.constrain_eq(ty, al.term(name))
        return phi.project(ty)

    for (kids, letter), s in a.rules.items():
        new_letter = letter if letter & al.root else letter & ~yb
        for c, kid_keys in _placements(kids, letter, yb, seen):
            nfa.add([ids[k] for k in zip(kids, kid_keys)], new_letter, (s, c),
                    final=(lambda s=s, c=c: tree_final(s, c)))
    erased, _ = determinize(nfa, "meet")
    view = _Erased(erased, yb)
    prod, _ = product([a, view], "all", lambda t: a.final(t[0]).meet(view.final(t[1])))
    return minimize(prod)


def full_post(a: Qsda, s, trace: list | None = None) -> Qsda:
    out = post(a, s, trace)
    for y in a.alphabet.y:
        out = strengthen(out, y)
    return out
