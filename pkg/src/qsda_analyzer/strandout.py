"""Property templates, assertion checking and quantified-formula emission.

Templates are lazy deterministic automata whose state is the type of the
subtree, the ancestor relation between a few tracked variables and the set
of tracked variables sitting on the nil node.  Blank nodes never change that
state, so every template is elastic by construction.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

from .datafmla import DataFormula, LinearAtom, atom_constraints
from .errors import InsufficientUniversals
from .heap import NIL, Alphabet
from .lang import Program, PropertySpec, desugar_data_vars
from .qsda import Qsda, materialize, minimize, order_leq, product

DIRTY_NAME = "dirty"
UNBOUND = "⊥"


# --------------------------------------------------------------------------
# tracked-relation automata


class TrackedAutomaton:
    """Lazy automaton deciding a property from ancestor facts.

    ``pairs`` lists (u, v) for which the state records whether v's node is an
    ancestor-or-self of u's node; ``at_nil`` lists variables whose presence
    on the nil node is recorded.  ``decide`` maps the final facts to a data
    formula.
    """

    def __init__(self, alphabet: Alphabet, pairs, at_nil, decide: Callable):
        self.alphabet = alphabet
        bit = alphabet.bit
        self.pairs = tuple((bit[u], bit[v]) for u, v in pairs)
        self.pair_names = tuple(pairs)
        self.nil_mask = alphabet.mask(at_nil)
        self.decide = decide
        self._finals: dict = {}

    def step(self, children: tuple, letter: int):
        al = self.alphabet
        below = 0
        flags = 0
        nilset = 0
        for t, f, n, _ in children:
            below |= t
            flags |= f
            nilset |= n
        if letter & al.root:
            return (below, flags, nilset, True)
        here = letter | below
        for i, (u, v) in enumerate(self.pairs):
            if letter & v and here & u:
                flags |= 1 << i
        if letter & al.nil:
            nilset = letter & self.nil_mask
        return (here, flags, nilset, False)

    def type_of(self, s) -> int:
        return s[0]

    def facts(self, s) -> "Facts":
        return Facts(self, s[1], s[2])

    def final(self, s) -> DataFormula:
        hit = self._finals.get(s)
        if hit is None:
            hit = self.decide(self.facts(s))
            self._finals[s] = hit
        return hit


@dataclass
class Facts:
    owner: TrackedAutomaton
    flags: int
    nilset: int

    def anc(self, u: str, v: str) -> bool:
        """v's node is an ancestor-or-self of u's node."""
        return bool(self.flags >> self.owner.pair_names.index((u, v)) & 1)

    def at_nil(self, name: str) -> bool:
        return bool(self.nilset & self.owner.alphabet.bit[name])


def _bound(al: Alphabet, y: str, spec: PropertySpec, op: str) -> DataFormula:
    """``y->data OP key + offset`` as an octagon."""
    coefs = [(al.term(y), 1)]
    if spec.key is not None:
        coefs.append((al.term(spec.key), -1))
    atom = LinearAtom(tuple(coefs), -spec.offset, op)
    (conj,) = atom_constraints(atom)
    return al.top().add(conj)


def _cmp(al: Alphabet, a: str, b: str) -> DataFormula:
    """``a->data <= b->data``."""
    atom = LinearAtom(((al.term(a), 1), (al.term(b), -1)), 0, "<=")
    (conj,) = atom_constraints(atom)
    return al.top().add(conj)


# each builder returns (pairs, at_nil, decide)
def _list(al, spec):
    p = spec.anchor
    return [(p, NIL)], [], lambda f: al.top() if f.anc(p, NIL) else al.bottom()


def _empty(al, spec):
    p = spec.anchor
    return [], [p], lambda f: al.top() if f.at_nil(p) else al.bottom()


def _last(al, spec):
    p, r = spec.anchor, spec.key
    if p == r:
        return [(p, NIL)], [p], lambda f: al.top() if f.at_nil(p) else al.bottom()

    def decide(f):
        both_nil = f.at_nil(p) and f.at_nil(r)
        on_list = not f.at_nil(r) and f.anc(p, r) and f.anc(r, NIL)
        return al.top() if both_nil or on_list else al.bottom()

    return [(p, r), (r, NIL)], [p, r], decide


def _bounded(op: str):
    def build(al, spec):
        p = spec.anchor
        ys = al.y
        clauses = {y: _bound(al, y, spec, op) for y in ys}

        def decide(f):
            out = al.top()
            for y in ys:
                if f.anc(p, y) and not f.at_nil(y):
                    out = out.meet(clauses[y])
            return out

        return [(p, y) for y in ys], list(ys), decide

    return build


def _sort(al, spec):
    p = spec.anchor
    ys = al.y
    ordered = [(a, b) for a in ys for b in ys if a != b]
    clauses = {(a, b): _cmp(al, a, b) for a, b in ordered}

    def decide(f):
        out = al.top()
        for a, b in ordered:
            if f.anc(p, a) and f.anc(a, b) and not f.at_nil(b):
                out = out.meet(clauses[(a, b)])
        return out

    return [(p, y) for y in ys] + ordered, list(ys), decide


@dataclass(frozen=True)
class Template:
    build: Callable
    universals: int
    keyed: bool = False


TEMPLATES: dict[str, Template] = {
    "List": Template(_list, 0),
    "Empty": Template(_empty, 0),
    "Last": Template(_last, 0, keyed=True),
    "Init": Template(_bounded("=="), 1, keyed=True),
    "Max": Template(_bounded("<="), 1, keyed=True),
    "Gek": Template(_bounded(">="), 1, keyed=True),
    "Sort": Template(_sort, 2),
}


def required_universals(spec: PropertySpec) -> int:
    return TEMPLATES[spec.name].universals


def property_automaton(alphabet: Alphabet, spec: PropertySpec) -> TrackedAutomaton:
    tpl = TEMPLATES[spec.name]
    if len(alphabet.y) < tpl.universals:
        raise InsufficientUniversals(
            f"{spec.render()} needs {tpl.universals} universal variables, got {len(alphabet.y)}"
        )
    if spec.name == "Last" and spec.key is None:
        raise InsufficientUniversals("Last needs a second pointer argument")
    pairs, at_nil, decide = tpl.build(alphabet, spec)
    return TrackedAutomaton(alphabet, pairs, at_nil, decide)


@lru_cache(maxsize=256)
def property_eqsda(spec: PropertySpec, pointer_vars: tuple[str, ...], universals: tuple[str, ...]) -> Qsda:
    """Explicit minimized template automaton (small alphabets only)."""
    al = Alphabet(pointer_vars, universals)
    lazy = property_automaton(al, spec)
    return minimize(materialize(lazy, al))


class Verdict(enum.Enum):
    PROVED = "Proved"
    UNKNOWN = "Unknown"


@dataclass
class CheckResult:
    spec: PropertySpec
    verdict: Verdict
    reason: str = ""

    @property
    def proved(self) -> bool:
        return self.verdict is Verdict.PROVED


def check_assertion(inv: Qsda, spec: PropertySpec) -> CheckResult:
    """Proved when ``inv`` is below the template in the formula-tree order."""
    try:
        lazy = property_automaton(inv.alphabet, spec)
    except InsufficientUniversals as e:
        return CheckResult(spec, Verdict.UNKNOWN, str(e))
    if order_leq(inv, lazy):
        return CheckResult(spec, Verdict.PROVED)
    return CheckResult(spec, Verdict.UNKNOWN, "invariant not below the property automaton")


# --------------------------------------------------------------------------
# preconditions


class InitialShape:
    """Entry heaps: anchors on lists ending in nil, other pointers at nil.

    Data variables own private cells: leaves directly below the root, whose
    next field is dirty.
    """

    def __init__(self, alphabet: Alphabet, anchors, cells=()):
        self.alphabet = alphabet
        self.anchors = alphabet.mask(anchors)
        self.cells = alphabet.mask(cells)
        self.others = alphabet.ptr_mask & ~self.anchors & ~self.cells & ~alphabet.nil

    def letters(self) -> list[int]:
        al = self.alphabet
        ys = [0] + [al.bit[y] for y in al.y]
        out = []
        anchor_bits = [b for b in (al.bit[n] for n in al.pv) if b & self.anchors]
        for r in range(len(anchor_bits) + 1):
            for combo in itertools.combinations(anchor_bits, r):
                a = sum(combo)
                for y in ys:
                    out.append(a | y)
                    out.append(al.nil | self.others | a | y)
        for c in al.pv:
            if al.bit[c] & self.cells:
                out.extend(al.bit[c] | y for y in ys)
        return sorted(set(out))

    def step(self, children: tuple, letter: int):
        al = self.alphabet
        if letter & al.root:
            lists = [t for t, kind in children if kind == "list"]
            if len(lists) == 1 and lists[0] & al.nil and all(k != "root" for _, k in children):
                return (al.full, "root")
            return None
        if letter & self.cells:
            return None if children else (letter, "cell")
        acc = letter
        for t, kind in children:
            if kind != "list":
                return None
            acc |= t
        return (acc, "list")

    def type_of(self, s) -> int:
        return s[0]

    def final(self, s) -> DataFormula:
        return self.alphabet.top()


def _anchors(specs) -> set[str]:
    out = {s.anchor for s in specs}
    out |= {s.key for s in specs if s.name == "Last" and s.key}
    return out - {NIL}


def precondition(alphabet: Alphabet, specs, cells=()) -> Qsda:
    """Meet of the initial shape with every precondition template."""
    shape = InitialShape(alphabet, sorted(_anchors(specs) - set(cells)), cells)
    base = minimize(materialize(shape, alphabet, shape.letters()))
    lazies = [property_automaton(alphabet, s) for s in specs]

    def fin(t):
        f = base.final(t[0])
        for lz, st in zip(lazies, t[1:]):
            f = f.meet(lz.final(st))
        return f

    prod, _ = product([base, *lazies], "all", fin)
    return minimize(prod)


def program_precondition(p: Program, universals) -> Qsda:
    p = desugar_data_vars(p)
    return precondition(Alphabet(p.pointer_vars, universals), p.preconditions, p.cells)


# --------------------------------------------------------------------------
# formula emission


@dataclass(frozen=True)
class Atom:
    """``lhs REL rhs`` with REL one of next, next+, next*; ``negated`` flips it.

    ``rhs`` may be ``dirty`` (the next field is undefined).  The special
    relation ``unbound`` states that a branch variable names no node.
    """

    rel: str
    lhs: str
    rhs: str = ""
    negated: bool = False

    def render(self) -> str:
        if self.rel == "unbound":
            return f"{self.lhs} = {UNBOUND}"
        body = f"{self.lhs} →{self.rel} {self.rhs}"
        return f"¬({body})" if self.negated else f"({body})"

    def to_json(self) -> dict:
        return {"rel": self.rel, "lhs": self.lhs, "rhs": self.rhs, "negated": self.negated}


@dataclass
class Clause:
    guard: tuple[Atom, ...]
    formula: DataFormula
    root_state: int

    def render_guard(self) -> str:
        if not self.guard:
            return "true"
        return "(" + " ∧ ".join(a.render() for a in self.guard) + ")"


@dataclass
class QuantifiedInvariant:
    """``∃B. ∀Y. (∧ (guard ⇒ formula)) ∧ (∨ guard)``.

    Branch variables are bound to the branching nodes that hold no pointer
    variable, one variable per node and every such node bound; variables
    left over are bound to nothing and every guard states which ones.
    """

    alphabet: Alphabet
    branch_vars: tuple[str, ...]
    universal_vars: tuple[str, ...]
    clauses: list[Clause] = field(default_factory=list)

    def render(self) -> str:
        al = self.alphabet
        names = al.terms.names
        head = ""
        if self.branch_vars:
            head += "∃" + ",".join(self.branch_vars) + ". "
        if self.universal_vars:
            head += "∀" + ",".join(self.universal_vars) + ". "
        if not self.clauses:
            return head + "false"
        impl = [f"({c.render_guard()} ⇒ {_render_data(c.formula, names)})" for c in self.clauses]
        disj = " ∨ ".join(c.render_guard() for c in self.clauses)
        return head + "(" + " ∧\n  ".join(impl) + " ∧\n  (" + disj + "))"

    def to_json(self) -> dict:
        names = self.alphabet.terms.names
        return {
            "version": 1,
            "pointer_vars": list(self.alphabet.pv),
            "branch_vars": list(self.branch_vars),
            "universal_vars": list(self.universal_vars),
            "clauses": [
                {
                    "guard": [a.to_json() for a in c.guard],
                    "formula": _render_data(c.formula, names),
                    "constraints": [
                        [x.i, x.si, x.j, x.sj, x.c] for x in c.formula.constraints()
                    ],
                    "unsat": c.formula.is_bottom,
                }
                for c in self.clauses
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, ensure_ascii=False)


def _render_data(f: DataFormula, names) -> str:
    text = f.render([_data_name(n) for n in names])
    return text


def _data_name(n: str) -> str:
    return f"{n}->data"


@dataclass
class _Deriv:
    letter: int
    kids: tuple["_Deriv", ...]
    state: int
    loops: bool


def _derivations(a: Qsda, limit: int) -> dict[int, list[_Deriv]]:
    """All derivations of each state, with blank self-loops folded away."""
    loops = {kids[0] for (kids, l), t in a.rules.items() if l == 0 and kids == (t,)}
    by_target: dict[int, list] = {}
    for (kids, l), t in a.rules.items():
        if l == 0 and kids == (t,):
            continue
        by_target.setdefault(t, []).append((kids, l))
    memo: dict[int, list[_Deriv]] = {}
    total = [0]

    def go(s: int, stack: frozenset) -> list[_Deriv]:
        if s in memo:
            return memo[s]
        out = []
        for kids, l in sorted(by_target.get(s, [])):
            if any(k in stack for k in kids):
                continue
            for combo in itertools.product(*(go(k, stack | {s}) for k in kids)):
                out.append(_Deriv(l, combo, s, s in loops))
                total[0] += 1
                if total[0] > limit:
                    raise RuntimeError("too many derivations to emit a formula")
        memo[s] = out
        return out

    return {s: go(s, frozenset()) for s in sorted(a.finals)}


def emit_formula(a: Qsda, limit: int = 200000) -> QuantifiedInvariant:
    """Quantified invariant equivalent to ``a`` over heaps (``a`` elastic)."""
    al = a.alphabet
    derivs = _derivations(a, limit)
    prepared = []
    kmax = 0
    for s in sorted(derivs):
        f = a.finals[s]
        if f.is_bottom:
            continue
        for d in derivs[s]:
            nodes, nb = _flatten(al, d)
            kmax = max(kmax, nb)
            prepared.append((nodes, nb, f, s))
    branch = tuple(f"b{i + 1}" for i in range(kmax))
    clauses = [Clause(_guard(nodes, nb, branch), f, s) for nodes, nb, f, s in prepared]
    return QuantifiedInvariant(al, branch, al.y, clauses)


@dataclass
class _SNode:
    names: list[str]
    parent: int | None  # None: child of the root
    loops: bool


def _flatten(al: Alphabet, root: _Deriv) -> tuple[list[_SNode], int]:
    nodes: list[_SNode] = []
    nb = 0

    def visit(d: _Deriv, parent: int | None) -> None:
        nonlocal nb
        idx = len(nodes)
        names = al.names_of(d.letter)
        node = _SNode(names, parent, d.loops)
        nodes.append(node)
        if len(d.kids) > 1 and not d.letter & al.ptr_mask:
            nb += 1
            node.names = [f"b{nb}"] + names
        for k in d.kids:
            visit(k, idx)

    for k in root.kids:
        visit(k, None)
    return nodes, nb


def _guard(nodes: list[_SNode], nb: int, branch: tuple[str, ...]) -> tuple[Atom, ...]:
    atoms: list[Atom] = []
    reps = [n.names[0] for n in nodes]
    for n in nodes:
        for other in n.names[1:]:
            atoms.append(Atom("next*", n.names[0], other))
            atoms.append(Atom("next*", other, n.names[0]))
    for i, n in enumerate(nodes):
        rel = "next+" if n.loops else "next"
        if n.parent is None:
            if NIL not in n.names:
                atoms.append(Atom(rel, reps[i], DIRTY_NAME))
        else:
            atoms.append(Atom(rel, reps[i], reps[n.parent]))

    def ancestors(i: int) -> set[int]:
        out = set()
        p = nodes[i].parent
        while p is not None:
            out.add(p)
            p = nodes[p].parent
        return out

    anc = [ancestors(i) for i in range(len(nodes))]
    for i, j in itertools.combinations(range(len(nodes)), 2):
        if j in anc[i] or i in anc[j]:
            continue
        atoms.append(Atom("next*", reps[i], reps[j], negated=True))
        atoms.append(Atom("next*", reps[j], reps[i], negated=True))
    for b in branch[nb:]:
        atoms.append(Atom("unbound", b))
    return tuple(atoms)
