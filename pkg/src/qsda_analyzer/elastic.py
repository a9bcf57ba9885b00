"""Elastic automata: blank unary rules are self-loops.

Elastic automata cannot count blank nodes between labelled ones, which is
what makes the set of skeletons finite for fixed variables.
"""

from __future__ import annotations

from .qsda import Nfa, Qsda, determinize, lattice_join, minimize

BLANK = 0


def blank_successors(a: Qsda) -> dict[int, int]:
    return {kids[0]: t for (kids, l), t in a.rules.items() if l == BLANK and len(kids) == 1}


def is_elastic(a: Qsda) -> bool:
    return all(s == t for s, t in blank_successors(a).items())


def elastify(a: Qsda) -> Qsda:
    """Least elastic automaton above ``a`` in the formula-tree order."""
    succ = blank_successors(a)
    memo: dict[frozenset, frozenset] = {}

    def closure(members: frozenset) -> frozenset:
        hit = memo.get(members)
        if hit is not None:
            return hit
        out = set(members)
        frontier = list(members)
        while frontier:
            s = frontier.pop()
            t = succ.get(s)
            if t is not None and t not in out:
                out.add(t)
                frontier.append(t)
        res = frozenset(out)
        memo[members] = res
        return res

    det, _ = determinize(Nfa.from_qsda(a), "join", closure=closure, blank_loop=True)
    return minimize(det)


def ejoin(a: Qsda, b: Qsda) -> Qsda:
    return elastify(lattice_join(a, b))
