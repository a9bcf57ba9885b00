"""Heap configurations and the labelled trees that automata read.

Heaps are encoded by reversing ``next`` edges: the dirty location becomes the
root, the node pointed to by ``nil`` hangs directly below it, and every list
turns into a path growing away from the root.  Trees are stored as flat node
arrays in post-order so a bottom-up automaton run is a single loop.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

from .datafmla import DataFormula, TermSpace
from .errors import EmptyStream

DIRTY = 0
NIL = "nil"


class Alphabet:
    """Bit layout of letters ``(pointer set, universal variable, root flag)``.

    Pointer variables occupy the low bits (``nil`` is bit 0), universal
    variables follow, and the root flag sits above them.  The same masks
    double as automaton state types.
    """

    def __init__(self, pointer_vars: Sequence[str], universals: Sequence[str] = ()):
        pv = list(pointer_vars)
        if NIL in pv:
            pv.remove(NIL)
        self.pv: tuple[str, ...] = (NIL, *pv)
        self.y: tuple[str, ...] = tuple(universals)
        self.names = self.pv + self.y
        self.bit = {n: 1 << i for i, n in enumerate(self.names)}
        self.nptr = len(self.pv)
        self.ptr_mask = (1 << self.nptr) - 1
        self.full = (1 << len(self.names)) - 1
        self.y_mask = self.full & ~self.ptr_mask
        self.root = 1 << len(self.names)
        self.nil = 1
        # nil carries no data term
        self.terms = TermSpace(self.names[1:])
        self.term_of = {n: i for i, n in enumerate(self.names[1:])}

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and (self.pv, self.y) == (other.pv, other.y)

    def __hash__(self) -> int:
        return hash((self.pv, self.y))

    def __repr__(self) -> str:
        return f"Alphabet(pv={list(self.pv)}, y={list(self.y)})"

    def with_universals(self, universals: Sequence[str]) -> "Alphabet":
        return Alphabet(self.pv, universals)

    def mask(self, names) -> int:
        m = 0
        for n in names:
            m |= self.bit[n]
        return m

    def names_of(self, mask: int) -> list[str]:
        return [n for n in self.names if mask & self.bit[n]]

    def term(self, name: str) -> int | None:
        return self.term_of.get(name)

    def terms_of(self, mask: int) -> list[int]:
        return [self.term_of[n] for n in self.names[1:] if mask & self.bit[n]]

    def top(self) -> DataFormula:
        return self.terms.top()

    def bottom(self) -> DataFormula:
        return self.terms.bottom()

    def letter_str(self, letter: int) -> str:
        if letter & self.root:
            return "$"
        ptrs = [n for n in self.pv if letter & self.bit[n]]
        ys = [n for n in self.y if letter & self.bit[n]]
        body = "{" + ",".join(ptrs) + "}"
        return f"({body},{ys[0] if ys else '-'})"

    def valid_letter(self, letter: int) -> bool:
        if letter & self.root:
            return letter == self.root
        yb = letter & self.y_mask
        return yb & (yb - 1) == 0


# --------------------------------------------------------------------------
# concrete heaps


@dataclass(frozen=True)
class HeapConfig:
    """A program state: locations, ``next``/``data`` maps and pointer values.

    Location ``0`` is dirty.  Instances are canonicalised by :func:`make_config`
    so isomorphic heaps compare equal.
    """

    pc: int
    locs: tuple[int, ...]
    next: tuple[tuple[int, int], ...]
    data: tuple[tuple[int, int], ...]
    pval: tuple[tuple[str, int], ...]

    @property
    def next_map(self) -> dict[int, int]:
        return dict(self.next)

    @property
    def data_map(self) -> dict[int, int]:
        return dict(self.data)

    @property
    def pval_map(self) -> dict[str, int]:
        return dict(self.pval)

    def with_pc(self, pc: int) -> "HeapConfig":
        return HeapConfig(pc, self.locs, self.next, self.data, self.pval)

    def describe(self) -> str:
        nxt = self.next_map
        data = self.data_map
        pv = self.pval_map
        parts = []
        for loc in self.locs:
            if loc == DIRTY:
                continue
            names = ",".join(sorted(p for p, v in pv.items() if v == loc))
            tgt = nxt.get(loc)
            tgt_s = "$" if tgt == DIRTY else str(tgt)
            parts.append(f"{loc}[{names}]d={data.get(loc, 0)}->{tgt_s}")
        return f"pc={self.pc} " + " ".join(parts)


def make_config(
    pc: int,
    next_map: Mapping[int, int],
    data_map: Mapping[int, int],
    pval: Mapping[str, int],
    pointer_order: Sequence[str] | None = None,
) -> HeapConfig:
    """Build a canonical configuration, dropping unreachable locations.

    Locations are renumbered by a deterministic walk from the pointer
    variables so that isomorphic heaps get identical encodings.
    """
    order = list(pointer_order) if pointer_order is not None else sorted(pval)
    ren: dict[int, int] = {DIRTY: DIRTY}
    for p in order:
        v = pval[p]
        while v != DIRTY and v not in ren:
            ren[v] = len(ren)
            v = next_map[v]
    locs = tuple(sorted(ren.values()))
    nxt = tuple(sorted((ren[a], ren[b]) for a, b in next_map.items() if a in ren))
    data = tuple(sorted((ren[a], int(d)) for a, d in data_map.items() if a in ren and a != DIRTY))
    pv = tuple((p, ren[pval[p]]) for p in order)
    return HeapConfig(pc, locs, nxt, data, pv)


def check_config(c: HeapConfig) -> list[str]:
    """Return the list of violated well-formedness conditions (empty if fine)."""
    problems = []
    nxt = c.next_map
    pv = c.pval_map
    if DIRTY in nxt:
        problems.append("dirty has a successor")
    if NIL in pv and nxt.get(pv[NIL]) != DIRTY:
        problems.append("nil does not point to dirty")
    for loc in c.locs:
        seen = set()
        v = loc
        while v != DIRTY:
            if v in seen:
                problems.append("cycle")
                return problems
            seen.add(v)
            if v not in nxt:
                problems.append(f"location {v} has no next")
                return problems
            v = nxt[v]
    reach = set()
    for p, v in pv.items():
        while v != DIRTY and v not in reach:
            reach.add(v)
            v = nxt[v]
    extra = set(c.locs) - reach - {DIRTY}
    if extra:
        problems.append(f"garbage {sorted(extra)}")
    return problems


# --------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Node:
    ptrs: frozenset[str]
    uvar: str | None
    datum: int | None
    children: tuple[int, ...]
    is_root: bool = False


@dataclass(frozen=True)
class LabelledTree:
    """Flat post-order tree; the last node is the root."""

    nodes: tuple[Node, ...]

    @property
    def root(self) -> int:
        return len(self.nodes) - 1

    def __len__(self) -> int:
        return len(self.nodes)

    def branching_nodes(self) -> int:
        return sum(1 for n in self.nodes if len(n.children) > 1)

    def letters(self, alphabet: Alphabet) -> list[int]:
        out = []
        for n in self.nodes:
            if n.is_root:
                out.append(alphabet.root)
                continue
            m = alphabet.mask(n.ptrs)
            if n.uvar is not None:
                m |= alphabet.bit[n.uvar]
            out.append(m)
        return out

    def node_of(self, var: str) -> int | None:
        for i, n in enumerate(self.nodes):
            if var in n.ptrs or n.uvar == var:
                return i
        return None

    def to_dot(self, name: str = "tree") -> str:
        lines = [f"digraph {name} {{", "  node [shape=box];"]
        for i, n in enumerate(self.nodes):
            if n.is_root:
                label = "$"
            else:
                ptrs = ",".join(sorted(n.ptrs))
                label = f"{{{ptrs}}}|{n.uvar or '-'}|{'' if n.datum is None else n.datum}"
            lines.append(f'  n{i} [label="{label}"];')
            for c in n.children:
                lines.append(f"  n{i} -> n{c};")
        lines.append("}")
        return "\n".join(lines)


class HeapSkinnyTree(LabelledTree):
    """Reversed-edge encoding of a heap; nodes carry pointer sets and data."""


class SymbolicTree(LabelledTree):
    """Pointer sets plus universal-variable placements, no data."""


class ValuationTree(LabelledTree):
    """A heap skinny-tree whose nodes also carry universal variables."""

    def symbolic(self) -> SymbolicTree:
        return SymbolicTree(
            tuple(Node(n.ptrs, n.uvar, None, n.children, n.is_root) for n in self.nodes)
        )

    def heap_tree(self) -> HeapSkinnyTree:
        return HeapSkinnyTree(
            tuple(Node(n.ptrs, None, n.datum, n.children, n.is_root) for n in self.nodes)
        )

    def env(self, alphabet: Alphabet) -> list[int]:
        """Data value of every term (pointer and universal variables)."""
        values = [0] * len(alphabet.terms)
        for n in self.nodes:
            if n.is_root:
                continue
            for p in n.ptrs:
                t = alphabet.term_of.get(p)
                if t is not None:
                    values[t] = n.datum or 0
            if n.uvar is not None:
                values[alphabet.term_of[n.uvar]] = n.datum or 0
        return values


@dataclass(frozen=True)
class FormulaTree:
    tree: SymbolicTree
    formula: DataFormula


def _subtree_signature(nodes: list[Node], i: int, memo: dict[int, tuple]) -> tuple:
    if i in memo:
        return memo[i]
    n = nodes[i]
    sig = (
        tuple(sorted(n.ptrs)),
        n.uvar or "",
        tuple(sorted(_subtree_signature(nodes, c, memo) for c in n.children)),
    )
    memo[i] = sig
    return sig


def _rebuild(kind, nodes: list[Node], root: int) -> LabelledTree:
    """Re-lay out ``nodes`` in canonical post-order starting at ``root``."""
    memo: dict[int, tuple] = {}
    out: list[Node] = []

    def visit(i: int) -> int:
        n = nodes[i]
        kids = sorted(n.children, key=lambda c: _subtree_signature(nodes, c, memo))
        new_kids = tuple(visit(c) for c in kids)
        out.append(Node(n.ptrs, n.uvar, n.datum, new_kids, n.is_root))
        return len(out) - 1

    visit(root)
    return kind(tuple(out))


def encode(c: HeapConfig) -> HeapSkinnyTree:
    """Reverse the ``next`` edges of a configuration into a skinny tree."""
    pv = c.pval_map
    data = c.data_map
    index = {loc: i for i, loc in enumerate(c.locs)}
    ptrs: dict[int, set[str]] = {loc: set() for loc in c.locs}
    for p, v in pv.items():
        ptrs[v].add(p)
    children: dict[int, list[int]] = {loc: [] for loc in c.locs}
    for a, b in c.next:
        children[b].append(a)
    nodes = [
        Node(
            frozenset(ptrs[loc]),
            None,
            None if loc == DIRTY else data.get(loc, 0),
            tuple(index[ch] for ch in children[loc]),
            loc == DIRTY,
        )
        for loc in c.locs
    ]
    return _rebuild(HeapSkinnyTree, nodes, index[DIRTY])


def decode(t: LabelledTree, pc: int = 0, pointer_order: Sequence[str] | None = None) -> HeapConfig:
    """Inverse of :func:`encode` up to location renaming."""
    nxt: dict[int, int] = {}
    data: dict[int, int] = {}
    pval: dict[str, int] = {}
    loc_of = {t.root: DIRTY}
    counter = itertools.count(1)
    for i in reversed(range(len(t.nodes))):
        n = t.nodes[i]
        if i not in loc_of:
            loc_of[i] = next(counter)
        for ch in n.children:
            loc_of[ch] = next(counter)
            nxt[loc_of[ch]] = loc_of[i]
        if not n.is_root:
            data[loc_of[i]] = n.datum or 0
            for p in n.ptrs:
                pval[p] = loc_of[i]
    return make_config(pc, nxt, data, pval, pointer_order)


def valuations(h: LabelledTree, universals: Sequence[str]) -> Iterator[ValuationTree]:
    """All injective placements of the universal variables on non-root nodes."""
    slots = [i for i, n in enumerate(h.nodes) if not n.is_root]
    if len(slots) < len(universals):
        raise EmptyStream(f"{len(slots)} nodes cannot host {len(universals)} universals")
    for placement in itertools.permutations(slots, len(universals)):
        where = dict(zip(placement, universals))
        yield ValuationTree(
            tuple(
                Node(n.ptrs, where.get(i), n.datum, n.children, n.is_root)
                for i, n in enumerate(h.nodes)
            )
        )


def count_valuations(h: LabelledTree, k: int) -> int:
    n = sum(1 for nd in h.nodes if not nd.is_root)
    out = 1
    for i in range(k):
        out *= n - i
    return max(out, 0)


def symbolic_tree(spec, universals: Sequence[str] = ()) -> SymbolicTree:
    """Build a symbolic tree from nested ``(ptrs, uvar, [children])`` tuples.

    The outermost element lists the children of the root.  Used by tests and
    templates to write small trees by hand.
    """
    nodes: list[Node] = []

    def visit(item) -> int:
        ptrs, uvar, kids = item
        ids = tuple(visit(k) for k in kids)
        nodes.append(Node(frozenset(ptrs), uvar, None, ids))
        return len(nodes) - 1

    roots = tuple(visit(k) for k in spec)
    nodes.append(Node(frozenset(), None, None, roots, True))
    return _rebuild(SymbolicTree, nodes, len(nodes) - 1)
