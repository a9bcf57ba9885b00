"""Octagon data formulas over a fixed set of data terms.

A formula is either bottom (false) or a tightly closed difference-bound
matrix.  Term ``i`` owns rows ``2i`` (its positive form) and ``2i + 1`` (its
negated form); entry ``m[a, b]`` bounds ``V_b - V_a``.  Because every
non-bottom value is kept in integer tight closure, two equivalent formulas
have identical matrices, so equality and hashing are structural.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InexpressiblePredicate

INF = np.inf


def _bar(a: int) -> int:
    return a ^ 1


class TermSpace:
    """Names of the data terms a formula may mention, in a fixed order."""

    __slots__ = ("names", "index")

    def __init__(self, names: Sequence[str]):
        self.names = tuple(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        if len(self.index) != len(self.names):
            raise ValueError("duplicate term name")

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TermSpace) and other.names == self.names

    def __hash__(self) -> int:
        return hash(self.names)

    def __repr__(self) -> str:
        return f"TermSpace({list(self.names)})"

    def top(self) -> "DataFormula":
        return DataFormula.top(len(self))

    def bottom(self) -> "DataFormula":
        return DataFormula.bottom(len(self))


def _close(m: np.ndarray) -> np.ndarray | None:
    """Integer tight closure in place; None when the system is infeasible."""
    size = m.shape[0]
    idx = np.arange(size)
    bar = idx ^ 1
    # m[i, j] and m[bar j, bar i] bound the same difference; keep the tighter
    np.minimum(m, m[bar][:, bar].T, out=m)
    for k in range(size):
        np.minimum(m, m[:, k : k + 1] + m[k : k + 1, :], out=m)
    if (np.diagonal(m) < 0).any():
        return None
    unary = np.floor(m[idx, bar] / 2.0) * 2.0
    m[idx, bar] = unary
    if (unary + m[bar, idx] < 0).any():
        return None
    half = unary / 2.0
    # m[a, b] <= (m[a, abar] + m[bbar, b]) / 2
    np.minimum(m, half[:, None] + half[bar][None, :], out=m)
    np.fill_diagonal(m, 0.0)
    m += 0.0
    return m


class DataFormula:
    """Immutable octagon; ``None`` matrix means bottom."""

    __slots__ = ("n", "_m", "_key", "_hash")

    def __init__(self, n: int, m: np.ndarray | None):
        self.n = n
        if m is not None:
            m.setflags(write=False)
        self._m = m
        self._key = None if m is None else m.tobytes()
        self._hash = hash((n, self._key))

    # construction -------------------------------------------------------
    @staticmethod
    def top(n: int) -> "DataFormula":
        m = np.full((2 * n, 2 * n), INF)
        np.fill_diagonal(m, 0.0)
        return DataFormula(n, m)

    @staticmethod
    def bottom(n: int) -> "DataFormula":
        return DataFormula(n, None)

    @staticmethod
    def _from_raw(n: int, m: np.ndarray) -> "DataFormula":
        closed = _close(m)
        return DataFormula(n, closed)

    @property
    def matrix(self) -> np.ndarray | None:
        return self._m

    @property
    def is_bottom(self) -> bool:
        return self._m is None

    @property
    def is_top(self) -> bool:
        if self._m is None:
            return False
        off = self._m[~np.eye(2 * self.n, dtype=bool)]
        return bool(np.isinf(off).all())

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DataFormula)
            and self.n == other.n
            and self._key == other._key
        )

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"DataFormula({self.render()})"

    # lattice ------------------------------------------------------------
    def meet(self, other: "DataFormula") -> "DataFormula":
        if self._m is None:
            return self
        if other._m is None:
            return other
        if self._key == other._key:
            return self
        return DataFormula._from_raw(self.n, np.minimum(self._m, other._m))

    def join(self, other: "DataFormula") -> "DataFormula":
        if self._m is None:
            return other
        if other._m is None:
            return self
        if self._key == other._key:
            return self
        return DataFormula(self.n, np.maximum(self._m, other._m))

    def leq(self, other: "DataFormula") -> bool:
        if self._m is None:
            return True
        if other._m is None:
            return False
        return bool((self._m <= other._m).all())

    def widen(self, other: "DataFormula") -> "DataFormula":
        """Keep the bounds of ``self`` that ``other`` respects, drop the rest."""
        if self._m is None:
            return other
        if other._m is None:
            return self
        m = np.where(other._m <= self._m, self._m, INF)
        return DataFormula._from_raw(self.n, m)

    # term operations ----------------------------------------------------
    def project(self, *terms: int) -> "DataFormula":
        """Existentially quantify the given terms away."""
        if self._m is None or not terms:
            return self
        m = self._m.copy()
        for t in terms:
            rows = [2 * t, 2 * t + 1]
            m[rows, :] = INF
            m[:, rows] = INF
        np.fill_diagonal(m, 0.0)
        return DataFormula(self.n, m)

    def add(self, constraints: Iterable["Constraint"]) -> "DataFormula":
        if self._m is None:
            return self
        m = self._m.copy()
        touched = False
        for c in constraints:
            if c.i < 0:
                return DataFormula.bottom(self.n)
            for a, b, bound in c.entries():
                if bound < m[a, b]:
                    m[a, b] = bound
                    touched = True
        if not touched:
            return self
        return DataFormula._from_raw(self.n, m)

    def constrain_eq(self, t1: int, t2: int) -> "DataFormula":
        if t1 == t2:
            return self
        return self.add(
            [Constraint(t1, 1, t2, -1, 0), Constraint(t2, 1, t1, -1, 0)]
        )

    def assign_term(self, target: int, source: int | None, offset: int = 0) -> "DataFormula":
        """``target := source + offset`` (``source`` None means a constant)."""
        if self._m is None:
            return self
        if source == target:
            return self.shift(target, offset)
        out = self.project(target)
        if source is None:
            return out.add(
                [Constraint(target, 1, None, 0, offset), Constraint(target, -1, None, 0, -offset)]
            )
        return out.add(
            [
                Constraint(target, 1, source, -1, offset),
                Constraint(source, 1, target, -1, -offset),
            ]
        )

    def shift(self, t: int, c: int) -> "DataFormula":
        """``t := t + c``."""
        if self._m is None or c == 0:
            return self
        m = self._m.copy()
        p, q = 2 * t, 2 * t + 1
        # V_p grows by c, V_q shrinks by c.
        m[:, p] += c
        m[p, :] -= c
        m[:, q] -= c
        m[q, :] += c
        m[p, p] = m[q, q] = 0.0
        return DataFormula._from_raw(self.n, m)

    def rename(self, mapping: Mapping[int, int], n: int | None = None) -> "DataFormula":
        """Move term ``i`` to ``mapping[i]`` in a (possibly different) space."""
        n = self.n if n is None else n
        if self._m is None:
            return DataFormula.bottom(n)
        m = np.full((2 * n, 2 * n), INF)
        np.fill_diagonal(m, 0.0)
        src = []
        dst = []
        for i, j in mapping.items():
            src += [2 * i, 2 * i + 1]
            dst += [2 * j, 2 * j + 1]
        m[np.ix_(dst, dst)] = self._m[np.ix_(src, src)]
        np.fill_diagonal(m, 0.0)
        return DataFormula(n, m)

    # evaluation ---------------------------------------------------------
    def satisfied_by(self, values: Sequence[int]) -> bool:
        if self._m is None:
            return False
        v = np.empty(2 * self.n)
        v[0::2] = values
        v[1::2] = np.negative(values)
        return bool(((v[None, :] - v[:, None]) <= self._m).all())

    def constraints(self) -> list["Constraint"]:
        """Non-trivial finite bounds, one per unordered term pair/sign."""
        if self._m is None:
            return []
        out = []
        m = self._m
        for i in range(self.n):
            hi = m[2 * i + 1, 2 * i]
            lo = m[2 * i, 2 * i + 1]
            if np.isfinite(hi):
                out.append(Constraint(i, 1, None, 0, int(hi) // 2))
            if np.isfinite(lo):
                out.append(Constraint(i, -1, None, 0, int(lo) // 2))
        for i in range(self.n):
            for j in range(i + 1, self.n):
                for si in (1, -1):
                    for sj in (1, -1):
                        c = Constraint(i, si, j, sj, 0)
                        a, b, _ = c.entries()[0]
                        if np.isfinite(m[a, b]):
                            out.append(Constraint(i, si, j, sj, int(m[a, b])))
        return out

    def render(self, names: Sequence[str] | None = None) -> str:
        if self._m is None:
            return "false"
        names = names or [f"t{i}" for i in range(self.n)]
        atoms = []
        seen_eq = set()
        cons = self.constraints()
        index = {(c.i, c.si, c.j, c.sj): c.c for c in cons}
        for c in cons:
            if c.j is not None and c.si == 1 and c.sj == -1:
                back = index.get((c.i, -1, c.j, 1))
                if back is not None and back == -c.c and c.c == 0:
                    seen_eq.add((c.i, c.j))
                    atoms.append(f"{names[c.i]} = {names[c.j]}")
                    continue
            if c.j is not None and c.si == -1 and c.sj == 1 and (c.i, c.j) in seen_eq:
                continue
            atoms.append(c.render(names))
        return " && ".join(atoms) if atoms else "true"


@dataclass(frozen=True)
class Constraint:
    """``si * x_i + sj * x_j <= c`` (unary when ``j`` is None)."""

    i: int
    si: int
    j: int | None
    sj: int
    c: int

    def entries(self) -> list[tuple[int, int, float]]:
        if self.j is None or self.sj == 0:
            # 2 * si * x_i <= 2c
            if self.si == 1:
                return [(2 * self.i + 1, 2 * self.i, 2.0 * self.c)]
            return [(2 * self.i, 2 * self.i + 1, 2.0 * self.c)]
        if self.i == self.j:
            if self.si + self.sj == 0:
                return [] if self.c >= 0 else [(2 * self.i, 2 * self.i, -1.0)]
            return Constraint(self.i, self.si, None, 0, self.c // 2).entries()
        # V_b - V_a <= c with V_b = si*x_i and V_a = -sj*x_j
        b = 2 * self.i if self.si == 1 else 2 * self.i + 1
        a = 2 * self.j + 1 if self.sj == 1 else 2 * self.j
        return [(a, b, float(self.c)), (_bar(b), _bar(a), float(self.c))]

    def holds(self, values: Sequence[int]) -> bool:
        lhs = self.si * values[self.i]
        if self.j is not None:
            lhs += self.sj * values[self.j]
        return lhs <= self.c

    def render(self, names: Sequence[str]) -> str:
        def term(s: int, t: int, first: bool) -> str:
            if s == 1:
                return names[t] if first else f" + {names[t]}"
            return f"-{names[t]}" if first else f" - {names[t]}"

        lhs = term(self.si, self.i, True)
        if self.j is not None:
            lhs += term(self.sj, self.j, False)
        return f"{lhs} <= {self.c}"


FALSE = Constraint(-1, 0, None, 0, -1)

# --------------------------------------------------------------------------
# linear atoms -> octagon constraints

_ATOM_RE = re.compile(r"^(.*?)(<=|>=|==|!=|<|>|=)(.*)$")


@dataclass(frozen=True)
class LinearAtom:
    """``sum(coef * term) + const  OP  0`` over term indices."""

    coefs: tuple[tuple[int, int], ...]
    const: int
    op: str  # one of <=, <, >=, >, ==

    def negate(self) -> "LinearAtom":
        flip = {"<=": ">", "<": ">=", ">=": "<", ">": "<=", "==": "!="}
        if self.op == "!=":
            return LinearAtom(self.coefs, self.const, "==")
        return LinearAtom(self.coefs, self.const, flip[self.op])

    def holds(self, values: Sequence[int]) -> bool:
        s = sum(k * values[t] for t, k in self.coefs) + self.const
        return {
            "<=": s <= 0,
            "<": s < 0,
            ">=": s >= 0,
            ">": s > 0,
            "==": s == 0,
            "!=": s != 0,
        }[self.op]


def atom_constraints(atom: LinearAtom) -> list[list[Constraint]]:
    """Octagon constraints for an atom as a disjunction of conjunctions.

    Integer strictness is tightened (``e < 0`` becomes ``e <= -1``).
    Disequalities yield two disjuncts.
    """
    coefs = [(t, k) for t, k in atom.coefs if k != 0]
    if len(coefs) > 2 or any(abs(k) != 1 for _, k in coefs):
        raise InexpressiblePredicate(f"not an octagon atom: {atom}")

    def le(sign: int, bound: int) -> list[Constraint]:
        # sign * (sum coefs) <= bound
        if not coefs:
            return [] if 0 <= bound else [FALSE]
        (i, ki), *rest = coefs
        if rest:
            (j, kj), = rest
            return [Constraint(i, sign * ki, j, sign * kj, bound)]
        return [Constraint(i, sign * ki, None, 0, bound)]

    c = atom.const
    if atom.op == "<=":
        return [le(1, -c)]
    if atom.op == "<":
        return [le(1, -c - 1)]
    if atom.op == ">=":
        return [le(-1, c)]
    if atom.op == ">":
        return [le(-1, c - 1)]
    if atom.op == "==":
        return [le(1, -c) + le(-1, c)]
    return [le(1, -c - 1), le(-1, c - 1)]


def from_atoms(n: int, atoms: Iterable[LinearAtom]) -> DataFormula:
    """Conjunction of atoms; disequalities are rejected here."""
    out = DataFormula.top(n)
    for atom in atoms:
        alts = atom_constraints(atom)
        if len(alts) != 1:
            raise InexpressiblePredicate("disequality is not convex")
        out = out.add(alts[0])
    return out


def from_pred(space: TermSpace, text: str) -> DataFormula:
    """Parse a conjunction like ``"x - y <= 3 && z > 1"`` over named terms."""
    out = space.top()
    for part in text.split("&&"):
        part = part.strip()
        if not part or part == "true":
            continue
        atom = parse_linear_atom(space, part)
        alts = atom_constraints(atom)
        if len(alts) != 1:
            raise InexpressiblePredicate(f"disequality is not convex: {part}")
        out = out.add(alts[0])
    return out


def _linear(space: TermSpace, text: str) -> tuple[dict[int, int], int]:
    text = text.replace(" ", "")
    if not text:
        raise InexpressiblePredicate("empty side")
    if text[0] not in "+-":
        text = "+" + text
    coefs: dict[int, int] = {}
    const = 0
    for sign, body in re.findall(r"([+-])([^+-]+)", text):
        s = 1 if sign == "+" else -1
        if body.isdigit():
            const += s * int(body)
            continue
        if body not in space.index:
            raise InexpressiblePredicate(f"unknown data term {body!r}")
        t = space.index[body]
        coefs[t] = coefs.get(t, 0) + s
    return coefs, const


def parse_linear_atom(space: TermSpace, text: str) -> LinearAtom:
    # drop field selectors first so the arrow is not read as a comparison
    m = _ATOM_RE.match(re.sub(r"\s*->\s*data\b", "", text))
    if not m:
        raise InexpressiblePredicate(f"no comparison in {text!r}")
    lhs, op, rhs = m.groups()
    op = "==" if op == "=" else op
    lc, lk = _linear(space, lhs)
    rc, rk = _linear(space, rhs)
    coefs = dict(lc)
    for t, k in rc.items():
        coefs[t] = coefs.get(t, 0) - k
    return LinearAtom(tuple(sorted((t, k) for t, k in coefs.items() if k)), lk - rk, op)


def sat_assignment_check(a: DataFormula, env: Mapping[str, int], space: TermSpace) -> bool:
    """Evaluate ``a`` under a named environment; unnamed terms default to 0."""
    unknown = set(env) - set(space.index)
    if unknown:
        raise InexpressiblePredicate(f"unknown data terms {sorted(unknown)}")
    return a.satisfied_by([env.get(n, 0) for n in space.names])
