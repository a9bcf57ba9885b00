"""Quantified skinny-tree data automata.

A :class:`Qsda` is a bottom-up deterministic automaton over symbolic trees.
Letters and state types are bit masks from :class:`~.heap.Alphabet`.  A rule
maps ``(children, letter)`` to a state where ``children`` is ordered by the
children's types; since sibling types are pairwise disjoint and non-empty
this order is total, so a tuple stands for a multiset of children.

Missing rules reject.  Only states reached through the root letter carry a
final formula; every other state maps to false.
"""

from __future__ import annotations

import heapq
import itertools
import json
from collections import defaultdict, deque
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .datafmla import DataFormula
from .errors import TypeClashInPowerset
from .heap import Alphabet, LabelledTree, ValuationTree, valuations

SERIAL_VERSION = 1

RuleKey = tuple[tuple[int, ...], int]


class Qsda:
    """Explicit deterministic automaton; treat instances as immutable."""

    def __init__(
        self,
        alphabet: Alphabet,
        types: Sequence[int],
        rules: dict[RuleKey, int],
        finals: dict[int, DataFormula],
    ):
        self.alphabet = alphabet
        self.types = tuple(types)
        self.rules = rules
        self.finals = finals
        self._index: dict[int, list[RuleKey]] | None = None
        self._key = None

    # basic structure ----------------------------------------------------
    @property
    def num_states(self) -> int:
        return len(self.types)

    def __len__(self) -> int:
        return len(self.types)

    def type_of(self, s: int) -> int:
        return self.types[s]

    def step(self, children: tuple, letter: int):
        return self.rules.get((children, letter))

    def final(self, s: int) -> DataFormula:
        f = self.finals.get(s)
        return self.alphabet.bottom() if f is None else f

    def by_child(self) -> dict[int, list[RuleKey]]:
        if self._index is None:
            idx: dict[int, list[RuleKey]] = defaultdict(list)
            for key in self.rules:
                for c in key[0]:
                    idx[c].append(key)
            self._index = dict(idx)
        return self._index

    def leaf_rules(self) -> list[RuleKey]:
        return [k for k in self.rules if not k[0]]

    def root_states(self) -> set[int]:
        root = self.alphabet.root
        return {t for (c, a), t in self.rules.items() if a & root}

    # identity -----------------------------------------------------------
    def canonical_key(self):
        if self._key is None:
            self._key = (
                self.alphabet,
                self.types,
                tuple(sorted(self.rules.items())),
                tuple(sorted((s, f._key) for s, f in self.finals.items())),
            )
        return self._key

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Qsda) and self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def __repr__(self) -> str:
        return f"Qsda(states={self.num_states}, rules={len(self.rules)})"

    @property
    def elastic(self) -> bool:
        """Every unary rule on the blank letter is a self-loop."""
        return all(kids[0] == t for (kids, l), t in self.rules.items() if l == 0 and len(kids) == 1)

    def skeleton_key(self):
        """Structure without formulas (used to match states across iterates)."""
        return (self.types, tuple(sorted(self.rules.items())), tuple(sorted(self.finals)))

    # running ------------------------------------------------------------
    def run(self, t: LabelledTree) -> int | None:
        """Bottom-up run; None means reject."""
        letters = t.letters(self.alphabet)
        states: list[int] = []
        types = self.types
        for i, node in enumerate(t.nodes):
            kids = []
            for c in node.children:
                s = states[c]
                if s is None:
                    return None
                kids.append(s)
            kids.sort(key=types.__getitem__)
            s = self.rules.get((tuple(kids), letters[i]))
            if s is None:
                return None
            states.append(s)
        return states[-1]

    def formula_of(self, t: LabelledTree) -> DataFormula:
        s = self.run(t)
        if s is None:
            return self.alphabet.bottom()
        return self.final(s)

    def accepts_valuation(self, vt: ValuationTree) -> bool:
        f = self.formula_of(vt)
        if f.is_bottom:
            return False
        return f.satisfied_by(vt.env(self.alphabet))

    def accepts_heap(self, h: LabelledTree) -> bool:
        """All valuation trees accepted (vacuous when there are none)."""
        ys = self.alphabet.y
        slots = sum(1 for n in h.nodes if not n.is_root)
        if slots < len(ys):
            return True
        return all(self.accepts_valuation(vt) for vt in valuations(h, ys))

    # serialization ------------------------------------------------------
    def to_json(self) -> dict:
        a = self.alphabet
        return {
            "version": SERIAL_VERSION,
            "pointer_vars": list(a.pv),
            "universals": list(a.y),
            "elastic": self.elastic,
            "types": [a.names_of(t) for t in self.types],
            "rules": [
                {"children": list(c), "letter": a.letter_str(l), "mask": l, "target": t}
                for (c, l), t in sorted(self.rules.items())
            ],
            "finals": {
                str(s): {
                    "formula": f.render(a.terms.names),
                    "matrix": None if f.is_bottom else _matrix_json(f.matrix),
                }
                for s, f in sorted(self.finals.items())
            },
        }

    @staticmethod
    def from_json(d: dict) -> "Qsda":
        if d.get("version") != SERIAL_VERSION:
            raise ValueError(f"unsupported serialization version {d.get('version')}")
        a = Alphabet(d["pointer_vars"], d["universals"])
        types = [a.mask(ns) for ns in d["types"]]
        rules = {(tuple(r["children"]), r["mask"]): r["target"] for r in d["rules"]}
        n = len(a.terms)
        finals = {}
        for s, fd in d["finals"].items():
            if fd["matrix"] is None:
                finals[int(s)] = DataFormula.bottom(n)
            else:
                m = np.array([[np.inf if v is None else v for v in row] for row in fd["matrix"]], float)
                finals[int(s)] = DataFormula(n, m)
        return Qsda(a, types, rules, finals)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    def to_dot(self, name: str = "qsda") -> str:
        a = self.alphabet
        lines = [f"digraph {name} {{", "  rankdir=BT;", "  node [shape=ellipse];",
                 f'  graph [elastic="{str(self.elastic).lower()}"];']
        for s, t in enumerate(self.types):
            label = f"q{s}\\n{{{','.join(a.names_of(t))}}}"
            if s in self.finals:
                label += "\\n" + self.finals[s].render(a.terms.names)
                lines.append(f'  q{s} [label="{label}", shape=doublecircle];')
            else:
                lines.append(f'  q{s} [label="{label}"];')
        for i, ((kids, letter), t) in enumerate(sorted(self.rules.items())):
            lines.append(f'  r{i} [shape=point];')
            lines.append(f'  r{i} -> q{t} [label="{a.letter_str(letter)}"];')
            for c in kids:
                lines.append(f"  q{c} -> r{i} [arrowhead=none];")
        lines.append("}")
        return "\n".join(lines)


def _matrix_json(m: np.ndarray) -> list:
    return [[None if np.isinf(v) else int(v) for v in row] for row in m]


# --------------------------------------------------------------------------
# validation


def validate(a: Qsda) -> list[str]:
    """Return every violated type/shape invariant (empty list when valid)."""
    al = a.alphabet
    problems = []
    roots = a.root_states()
    for (kids, letter), t in a.rules.items():
        if not al.valid_letter(letter):
            problems.append(f"bad letter {letter}")
            continue
        acc = 0 if letter & al.root else letter
        for c in kids:
            tc = a.types[c]
            if tc == 0:
                problems.append(f"child q{c} has empty type")
            if acc & tc:
                problems.append(f"overlapping types at rule into q{t}")
            acc |= tc
            if c in roots:
                problems.append(f"root state q{c} used as a child")
        if list(kids) != sorted(kids, key=lambda c: a.types[c]):
            problems.append(f"children of rule into q{t} not in type order")
        if acc != a.types[t]:
            problems.append(f"type of q{t} is not the union of its inputs")
        if not kids and not (letter & al.ptr_mask):
            problems.append(f"leaf rule into q{t} without pointers")
        if letter & al.root:
            if a.types[t] != al.full:
                problems.append(f"root state q{t} has partial type")
        elif t in roots:
            problems.append(f"root state q{t} also reached by a non-root letter")
        for c in kids:
            if a.types[c] & al.nil and not (letter & al.root):
                problems.append(f"nil subtree q{c} below a non-root node")
    for s in a.finals:
        if s not in roots:
            problems.append(f"final formula on non-root state q{s}")
    return problems


# --------------------------------------------------------------------------
# nondeterministic automata


class Nfa:
    """Nondeterministic rules over hashable state keys.

    State types are derived from the rules; an inconsistent derivation means
    a construction bug and raises.  Rules that cannot occur in a well-formed
    symbolic tree (leaf without pointers, nil subtree below a non-root node)
    are dropped silently so constructions can be written generously.
    """

    def __init__(self, alphabet: Alphabet):
        self.alphabet = alphabet
        self.ids: dict[Hashable, int] = {}
        self.keys: list[Hashable] = []
        self.types: list[int] = []
        self.rules: dict[RuleKey, set[int]] = defaultdict(set)
        self.finals: dict[int, DataFormula] = {}
        self.root_ids: set[int] = set()
        # type required at the root; constructions over erased letters lower it
        self.full = alphabet.full

    def state(self, key: Hashable, type_mask: int) -> int:
        sid = self.ids.get(key)
        if sid is None:
            sid = len(self.keys)
            self.ids[key] = sid
            self.keys.append(key)
            self.types.append(type_mask)
        elif self.types[sid] != type_mask:
            raise TypeClashInPowerset(
                f"state {key!r} derived with types {self.types[sid]} and {type_mask}"
            )
        return sid

    def add(self, children: Iterable[int], letter: int, target_key: Hashable,
            final: Callable[[], DataFormula] | None = None) -> int | None:
        al = self.alphabet
        kids = sorted(children, key=self.types.__getitem__)
        is_root = bool(letter & al.root)
        acc = 0 if is_root else letter
        for c in kids:
            tc = self.types[c]
            if acc & tc or tc == 0:
                return None
            if tc & al.nil and not is_root:
                return None
            acc |= tc
        if not kids and not (letter & al.ptr_mask):
            return None
        if is_root and acc != self.full:
            return None
        t = self.state(target_key, acc)
        self.rules[(tuple(kids), letter)].add(t)
        if is_root:
            self.root_ids.add(t)
            if final is not None and t not in self.finals:
                self.finals[t] = final()
        return t

    @staticmethod
    def from_qsda(a: Qsda) -> "Nfa":
        n = Nfa(a.alphabet)
        n.keys = list(range(a.num_states))
        n.ids = {i: i for i in n.keys}
        n.types = list(a.types)
        for k, t in a.rules.items():
            n.rules[k].add(t)
        n.finals = dict(a.finals)
        n.root_ids = a.root_states()
        return n


def determinize(
    nfa: Nfa,
    combine: str = "join",
    closure: Callable[[frozenset], frozenset] | None = None,
    blank_loop: bool = False,
    stats: dict | None = None,
) -> tuple[Qsda, list[frozenset]]:
    """Reachable-subset construction.

    ``combine`` chooses how member formulas merge.  ``closure`` post-processes
    each image set and ``blank_loop`` turns unary blank rules into self-loops
    (both used by elastification).  Returns the automaton and the member set
    of each of its states.
    """
    al = nfa.alphabet
    index: dict[int, list[RuleKey]] = defaultdict(list)
    for key in nfa.rules:
        for c in key[0]:
            index[c].append(key)
    has_blank = {c for (kids, l) in nfa.rules if l == 0 and len(kids) == 1 for c in kids}

    macro_id: dict[frozenset, int] = {}
    macros: list[frozenset] = []
    mtypes: list[int] = []
    processed_with: dict[int, list[int]] = defaultdict(list)
    rules: dict[RuleKey, int] = {}
    tried: set[RuleKey] = set()
    queue: deque[int] = deque()

    def intern(members: frozenset) -> int:
        mid = macro_id.get(members)
        if mid is None:
            ts = {nfa.types[s] for s in members}
            if len(ts) != 1:
                raise TypeClashInPowerset(f"members with types {sorted(ts)}")
            mid = len(macros)
            macro_id[members] = mid
            macros.append(members)
            mtypes.append(ts.pop())
            queue.append(mid)
        return mid

    def image(kids: tuple[int, ...], letter: int) -> frozenset:
        if blank_loop and letter == 0 and len(kids) == 1:
            if macros[kids[0]] & has_blank:
                return macros[kids[0]]
            return frozenset()
        out: set[int] = set()
        for combo in itertools.product(*(macros[k] for k in kids)):
            t = nfa.rules.get((combo, letter))
            if t:
                out |= t
        res = frozenset(out)
        if closure is not None and res:
            res = closure(res)
        return res

    def consider(kids: tuple[int, ...], letter: int) -> None:
        key = (kids, letter)
        if key in tried:
            return
        tried.add(key)
        img = image(kids, letter)
        if img:
            rules[key] = intern(img)

    for kids, letter in list(nfa.rules):
        if not kids:
            consider((), letter)
    while queue:
        m = queue.popleft()
        for s in macros[m]:
            processed_with[s].append(m)
        for s in macros[m]:
            for kids, letter in index.get(s, ()):
                pos = kids.index(s)
                pools = [processed_with[c] if j != pos else (m,) for j, c in enumerate(kids)]
                for combo in itertools.product(*pools):
                    consider(tuple(combo), letter)

    finals: dict[int, DataFormula] = {}
    bottom = al.bottom()
    for (kids, letter), t in rules.items():
        if letter & al.root and t not in finals:
            fs = [nfa.finals.get(s, bottom) for s in macros[t]]
            f = fs[0]
            for g in fs[1:]:
                f = f.join(g) if combine == "join" else f.meet(g)
            finals[t] = f
    if stats is not None:
        stats["nfa_states"] = len(nfa.types)
        stats["macro_states"] = len(macros)
        stats["max_macro"] = max((len(m) for m in macros), default=0)
    return Qsda(al, mtypes, rules, finals), macros


# --------------------------------------------------------------------------
# products


def product(
    components: Sequence,
    mode: str,
    finals: Callable[[tuple], DataFormula | None],
    stop: Callable[[tuple], bool] | None = None,
) -> tuple[Qsda, list[tuple]] | None:
    """Synchronous product exploring only reachable state tuples.

    ``mode`` is ``"all"`` (every component must move), ``"left"`` (the first
    must move, others may be stuck, shown as None) or ``"any"`` (at least one
    moves).  Components are explicit :class:`Qsda` objects or lazy automata
    exposing ``step``/``type_of``; only explicit ones drive exploration (the
    first one alone unless mode is ``"any"``).  ``finals`` gives the formula
    of each root tuple; ``stop`` aborts early (returning None) when it holds
    for a root tuple.
    """
    al = components[0].alphabet
    drivers = [k for k, c in enumerate(components) if isinstance(c, Qsda)]
    if mode != "any":
        drivers = [0]
    ncomp = len(components)
    pid: dict[tuple, int] = {}
    pstates: list[tuple] = []
    ptypes: list[int] = []
    members: list[dict] = [defaultdict(list) for _ in range(ncomp)]
    rules: dict[RuleKey, int] = {}
    tried: set[RuleKey] = set()
    queue: deque[int] = deque()
    root_finals: dict[int, DataFormula] = {}
    root = al.root

    def consider(kids: tuple[int, ...], letter: int) -> bool:
        key = (kids, letter)
        if key in tried:
            return True
        tried.add(key)
        tgt = []
        for k, comp in enumerate(components):
            sub = tuple(pstates[c][k] for c in kids)
            if any(x is None for x in sub):
                tgt.append(None)
            else:
                tgt.append(comp.step(sub, letter))
        tgt_t = tuple(tgt)
        if mode == "all" and any(x is None for x in tgt_t):
            return True
        if mode == "left" and tgt_t[0] is None:
            return True
        if all(x is None for x in tgt_t):
            return True
        p = pid.get(tgt_t)
        if p is None:
            p = len(pstates)
            pid[tgt_t] = p
            pstates.append(tgt_t)
            k0 = next(k for k, x in enumerate(tgt_t) if x is not None)
            ptypes.append(components[k0].type_of(tgt_t[k0]))
            queue.append(p)
            if letter & root:
                f = finals(tgt_t)
                root_finals[p] = al.bottom() if f is None else f
                if stop is not None and stop(tgt_t):
                    return False
        rules[key] = p
        return True

    for k in drivers:
        for kids, letter in components[k].leaf_rules():
            if not consider((), letter):
                return None
    while queue:
        p = queue.popleft()
        tup = pstates[p]
        for k in range(ncomp):
            if tup[k] is not None:
                members[k][tup[k]].append(p)
        for k in drivers:
            x = tup[k]
            if x is None:
                continue
            comp = components[k]
            for kids, letter in comp.by_child().get(x, ()):
                pos = kids.index(x)
                pools = [members[k][c] if j != pos else (p,) for j, c in enumerate(kids)]
                for combo in itertools.product(*pools):
                    if not consider(tuple(combo), letter):
                        return None
    return Qsda(al, ptypes, rules, root_finals), pstates


def lattice_join(a: Qsda, b: Qsda) -> Qsda:
    """Per-tree join of formulas; a tree run by only one side keeps its formula."""
    bottom = a.alphabet.bottom()

    def fin(t):
        fa = bottom if t[0] is None else a.final(t[0])
        fb = bottom if t[1] is None else b.final(t[1])
        return fa.join(fb)

    q, _ = product([a, b], "any", fin)
    return minimize(q)


def lattice_meet(a: Qsda, b: Qsda) -> Qsda:
    q, _ = product([a, b], "all", lambda t: a.final(t[0]).meet(b.final(t[1])))
    return minimize(q)


def order_leq(a: Qsda, b) -> bool:
    """Formula-tree order: every tree's formula under ``a`` implies the one under ``b``.

    ``b`` may be a lazy automaton.  Trees rejected by ``b`` count as false.
    """
    bottom = a.alphabet.bottom()

    def fb(x):
        return bottom if x is None else b.final(x)

    def bad(t) -> bool:
        return not a.final(t[0]).leq(fb(t[1]))

    if not a.rules:
        return True
    res = product([a, b], "left", lambda t: None, stop=bad)
    return res is not None


# --------------------------------------------------------------------------
# minimization


def trim(a: Qsda) -> Qsda:
    """Drop root states with false formulas and states that cannot reach one."""
    useful = {s for s, f in a.finals.items() if not f.is_bottom}
    by_target: dict[int, list[RuleKey]] = defaultdict(list)
    for key, t in a.rules.items():
        by_target[t].append(key)
    stack = list(useful)
    while stack:
        t = stack.pop()
        for kids, _ in by_target[t]:
            for c in kids:
                if c not in useful:
                    useful.add(c)
                    stack.append(c)
    order = sorted(useful)
    ren = {s: i for i, s in enumerate(order)}
    rules = {
        (tuple(ren[c] for c in kids), l): ren[t]
        for (kids, l), t in a.rules.items()
        if t in useful
    }
    finals = {ren[s]: f for s, f in a.finals.items() if s in useful}
    return Qsda(a.alphabet, [a.types[s] for s in order], rules, finals)


def minimize(a: Qsda) -> Qsda:
    """Trim, merge equivalent states (Moore refinement) and renumber canonically."""
    a = trim(a)
    n = a.num_states
    if n == 0:
        return a
    roots = a.root_states()
    init_key = {}
    block = []
    for s in range(n):
        f = a.finals.get(s)
        k = (a.types[s], s in roots, None if f is None else f._key)
        block.append(init_key.setdefault(k, len(init_key)))
    contexts: list[list[tuple[int, int, tuple[int, ...]]]] = [[] for _ in range(n)]
    items = list(a.rules.items())
    for idx, ((kids, letter), t) in enumerate(items):
        for pos, c in enumerate(kids):
            contexts[c].append((idx, pos))
    nblocks = len(init_key)
    while True:
        sigs: dict = {}
        new_block = []
        for s in range(n):
            ctx = []
            for idx, pos in contexts[s]:
                (kids, letter), t = items[idx]
                ctx.append(
                    (letter, pos, tuple(block[c] for j, c in enumerate(kids) if j != pos), block[t])
                )
            ctx.sort()
            sig = (block[s], tuple(ctx))
            new_block.append(sigs.setdefault(sig, len(sigs)))
        block = new_block
        if len(sigs) == nblocks:
            break
        nblocks = len(sigs)
    types = [0] * nblocks
    finals = {}
    for s in range(n):
        types[block[s]] = a.types[s]
        if s in a.finals:
            finals[block[s]] = a.finals[s]
    rules = {}
    for (kids, letter), t in items:
        rules[(tuple(block[c] for c in kids), letter)] = block[t]
    return canonicalize(Qsda(a.alphabet, types, rules, finals))


def canonicalize(a: Qsda) -> Qsda:
    """Renumber states in order of their least defining rule.

    A rule becomes available once all its children are numbered; rules are
    taken smallest-first by (numbered children, letter), and the target of a
    rule gets the next id the first time it is taken.  Isomorphic automata
    therefore get identical tables.
    """
    pending = {}
    waiting: dict[int, list[RuleKey]] = defaultdict(list)
    heap: list = []
    for key, t in a.rules.items():
        kids = key[0]
        pending[key] = len(kids)
        for c in kids:
            waiting[c].append(key)
        if not kids:
            heapq.heappush(heap, ((), key[1], key))
    canon: dict[int, int] = {}
    while heap:
        _, _, key = heapq.heappop(heap)
        t = a.rules[key]
        if t in canon:
            continue
        canon[t] = len(canon)
        for k2 in waiting.get(t, ()):
            pending[k2] -= 1
            if pending[k2] == 0:
                heapq.heappush(heap, (tuple(canon[c] for c in k2[0]), k2[1], k2))
    types = [0] * len(canon)
    for s, c in canon.items():
        types[c] = a.types[s]
    rules = {
        (tuple(canon[c] for c in kids), l): canon[t]
        for (kids, l), t in a.rules.items()
        if t in canon and all(c in canon for c in kids)
    }
    finals = {canon[s]: f for s, f in a.finals.items() if s in canon}
    return Qsda(a.alphabet, types, rules, finals)


# --------------------------------------------------------------------------
# lazy automata and materialization


def materialize(lazy, alphabet: Alphabet, letters: Sequence[int] | None = None,
                max_states: int = 20000) -> Qsda:
    """Explore a lazy automaton over all well-formed symbolic trees.

    Child combinations are enumerated among the discovered states, so this is
    only meant for small alphabets (templates and tests).
    """
    al = alphabet
    if letters is None:
        letters = all_letters(al)
    nonroot = [l for l in letters if not l & al.root]
    states: dict[Hashable, int] = {}
    keys: list[Hashable] = []
    types: list[int] = []
    rules: dict[RuleKey, int] = {}
    finals: dict[int, DataFormula] = {}
    queue: deque[int] = deque()
    processed: list[int] = []

    def add(kids: tuple[int, ...], letter: int) -> None:
        key = (kids, letter)
        if key in rules:
            return
        t = lazy.step(tuple(keys[c] for c in kids), letter)
        if t is None:
            return
        sid = states.get(t)
        if sid is None:
            sid = len(keys)
            if sid >= max_states:
                raise RuntimeError("materialization exceeded its state budget")
            states[t] = sid
            keys.append(t)
            types.append(lazy.type_of(t))
            queue.append(sid)
            if letter & al.root:
                f = lazy.final(t)
                finals[sid] = al.bottom() if f is None else f
        rules[key] = sid

    def combos(seed: int, pool: list[int]):
        """Sets of pool states plus ``seed`` with pairwise disjoint types."""
        out = []

        def go(i: int, chosen: list[int], used: int) -> None:
            out.append(tuple(chosen))
            for j in range(i, len(pool)):
                s = pool[j]
                if types[s] & used:
                    continue
                go(j + 1, chosen + [s], used | types[s])

        go(0, [seed], types[seed])
        return out

    for l in nonroot:
        if l & al.ptr_mask:
            add((), l)
    while queue:
        s = queue.popleft()
        if s in finals:
            continue
        processed.append(s)
        pool = [p for p in processed if p != s and not types[p] & types[s]]
        for group in combos(s, pool):
            kids = tuple(sorted(group, key=types.__getitem__))
            used = 0
            for c in kids:
                used |= types[c]
            has_nil = bool(used & al.nil)
            if used == al.full:
                add(kids, al.root)
            if has_nil:
                continue
            for l in nonroot:
                if not l & used:
                    add(kids, l)
    return Qsda(al, types, rules, finals)


def all_letters(al: Alphabet) -> list[int]:
    out = []
    for ptrs in range(al.ptr_mask + 1):
        out.append(ptrs)
        for y in al.y:
            out.append(ptrs | al.bit[y])
    return out


class TopAutomaton:
    """Lazy automaton mapping every well-formed tree to ``true``."""

    def __init__(self, alphabet: Alphabet):
        self.alphabet = alphabet
        self._top = alphabet.top()

    def step(self, children: tuple, letter: int):
        al = self.alphabet
        if letter & al.root:
            acc = 0
            for c in children:
                acc |= c[0]
            return (al.full, True) if acc == al.full else None
        acc = letter
        for c in children:
            acc |= c[0]
        return (acc, False)

    def type_of(self, s) -> int:
        return s[0]

    def final(self, s) -> DataFormula:
        return self._top


def top(alphabet: Alphabet) -> Qsda:
    return minimize(materialize(TopAutomaton(alphabet), alphabet))


def bottom(alphabet: Alphabet) -> Qsda:
    return Qsda(alphabet, [], {}, {})


def is_bottom(a: Qsda) -> bool:
    return all(f.is_bottom for f in a.finals.values())


def size(a: Qsda) -> int:
    return a.num_states


def sample_trees(a: Qsda, rng, count: int, max_depth: int = 4) -> list[LabelledTree]:
    """Random accepted symbolic trees obtained by unfolding rules top-down."""
    from .heap import Node, SymbolicTree

    by_target: dict[int, list[RuleKey]] = defaultdict(list)
    for key, t in a.rules.items():
        by_target[t].append(key)
    # shortest derivation depth for each state, so deep unfoldings can stop
    depth = {}
    changed = True
    while changed:
        changed = False
        for (kids, l), t in a.rules.items():
            if all(c in depth for c in kids):
                d = 1 + max((depth[c] for c in kids), default=0)
                if d < depth.get(t, 1 << 30):
                    depth[t] = d
                    changed = True
    roots = sorted(s for s, f in a.finals.items() if not f.is_bottom and s in depth)
    if not roots:
        return []
    al = a.alphabet
    out = []
    for _ in range(count):
        nodes: list[Node] = []

        def build(s: int, budget: int) -> int:
            opts = by_target[s]
            if budget <= 0:
                best = min(max((depth[c] for c in k[0]), default=0) for k in opts)
                opts = [k for k in opts if max((depth[c] for c in k[0]), default=0) == best]
            kids, letter = opts[rng.randrange(len(opts))]
            ids = tuple(build(c, budget - 1) for c in kids)
            if letter & al.root:
                nodes.append(Node(frozenset(), None, None, ids, True))
            else:
                ptrs = frozenset(n for n in al.pv if letter & al.bit[n])
                ys = [n for n in al.y if letter & al.bit[n]]
                nodes.append(Node(ptrs, ys[0] if ys else None, None, ids))
            return len(nodes) - 1

        build(roots[rng.randrange(len(roots))], max_depth)
        out.append(SymbolicTree(tuple(nodes)))
    return out
