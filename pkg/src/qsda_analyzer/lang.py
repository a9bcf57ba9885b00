"""The list-manipulating toy language: parser, desugaring, CFG and interpreter."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

from . import errors
from .heap import DIRTY, NIL, HeapConfig, make_config

# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class LinExpr:
    """``sum(coef * name->data) + const``; names are pointer or data variables."""

    coefs: tuple[tuple[str, int], ...] = ()
    const: int = 0

    @staticmethod
    def of(name: str | None = None, const: int = 0) -> "LinExpr":
        return LinExpr(((name, 1),) if name else (), const)

    def names(self) -> list[str]:
        return [n for n, _ in self.coefs]

    def minus(self, other: "LinExpr") -> "LinExpr":
        acc: dict[str, int] = dict(self.coefs)
        for n, k in other.coefs:
            acc[n] = acc.get(n, 0) - k
        return LinExpr(tuple(sorted((n, k) for n, k in acc.items() if k)), self.const - other.const)

    def as_term_offset(self) -> tuple[str | None, int]:
        """Split into ``(term, offset)``; only single unit terms qualify."""
        if not self.coefs:
            return None, self.const
        if len(self.coefs) == 1 and self.coefs[0][1] == 1:
            return self.coefs[0][0], self.const
        raise errors.InexpressiblePredicate(f"data expression too complex: {self.render()}")

    def render(self, data_vars: Sequence[str] = ()) -> str:
        parts = []
        for n, k in self.coefs:
            t = n if n in data_vars else f"{n}->data"
            if k == 1:
                parts.append(("+", t))
            elif k == -1:
                parts.append(("-", t))
            else:
                parts.append(("+" if k > 0 else "-", f"{abs(k)}*{t}"))
        if self.const or not parts:
            parts.append(("+" if self.const >= 0 else "-", str(abs(self.const))))
        out = ""
        for i, (s, t) in enumerate(parts):
            if i == 0:
                out = t if s == "+" else f"-{t}"
            else:
                out += f" {s} {t}"
        return out


# predicates


@dataclass(frozen=True)
class BoolConst:
    value: bool


@dataclass(frozen=True)
class PtrEq:
    """``p == q``."""

    p: str
    q: str


@dataclass(frozen=True)
class NextEq:
    """``p->next == q``."""

    p: str
    q: str


@dataclass(frozen=True)
class ReachEq:
    """``p->*next == q``: q is reachable from p in zero or more steps."""

    p: str
    q: str


@dataclass(frozen=True)
class DataCmp:
    lhs: LinExpr
    op: str
    rhs: LinExpr

    def negate(self) -> "DataCmp":
        flip = {"<=": ">", "<": ">=", ">=": "<", ">": "<=", "==": "!=", "!=": "=="}
        return DataCmp(self.lhs, flip[self.op], self.rhs)


@dataclass(frozen=True)
class Not:
    arg: "Pred"


@dataclass(frozen=True)
class And:
    args: tuple["Pred", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Pred", ...]


Pred = Union[BoolConst, PtrEq, NextEq, ReachEq, DataCmp, Not, And, Or]
StructAtom = Union[PtrEq, NextEq, ReachEq]


def is_structural(pred: Pred) -> bool:
    if isinstance(pred, (PtrEq, NextEq, ReachEq, BoolConst)):
        return True
    if isinstance(pred, DataCmp):
        return False
    if isinstance(pred, Not):
        return is_structural(pred.arg)
    return all(is_structural(a) for a in pred.args)


def is_data(pred: Pred) -> bool:
    if isinstance(pred, (DataCmp, BoolConst)):
        return True
    if isinstance(pred, (PtrEq, NextEq, ReachEq)):
        return False
    if isinstance(pred, Not):
        return is_data(pred.arg)
    return all(is_data(a) for a in pred.args)


def negate(pred: Pred) -> Pred:
    """Logical negation pushed to the atoms (negation normal form)."""
    if isinstance(pred, BoolConst):
        return BoolConst(not pred.value)
    if isinstance(pred, Not):
        return nnf(pred.arg)
    if isinstance(pred, And):
        return Or(tuple(negate(a) for a in pred.args))
    if isinstance(pred, Or):
        return And(tuple(negate(a) for a in pred.args))
    if isinstance(pred, DataCmp):
        return pred.negate()
    return Not(pred)


def nnf(pred: Pred) -> Pred:
    if isinstance(pred, Not):
        return negate(pred.arg)
    if isinstance(pred, And):
        return And(tuple(nnf(a) for a in pred.args))
    if isinstance(pred, Or):
        return Or(tuple(nnf(a) for a in pred.args))
    return pred


Literal = tuple[Pred, bool]


def dnf(pred: Pred) -> list[list[Literal]]:
    """Disjunctive normal form as lists of ``(atom, polarity)`` literals.

    Data disequalities stay as single literals; the transformer splits them.
    Constant-false disjuncts are dropped.
    """
    pred = nnf(pred)

    def go(p: Pred) -> list[list[Literal]]:
        if isinstance(p, BoolConst):
            return [[]] if p.value else []
        if isinstance(p, Not):
            return [[(p.arg, False)]]
        if isinstance(p, Or):
            out: list[list[Literal]] = []
            for a in p.args:
                out.extend(go(a))
            return out
        if isinstance(p, And):
            out = [[]]
            for a in p.args:
                out = [x + y for x in out for y in go(a)]
            return out
        return [[(p, True)]]

    return go(pred)


def render_pred(pred: Pred, data_vars: Sequence[str] = ()) -> str:
    if isinstance(pred, BoolConst):
        return "true" if pred.value else "false"
    if isinstance(pred, PtrEq):
        return f"{pred.p} == {pred.q}"
    if isinstance(pred, NextEq):
        return f"{pred.p}->next == {pred.q}"
    if isinstance(pred, ReachEq):
        return f"{pred.p}->*next == {pred.q}"
    if isinstance(pred, DataCmp):
        return f"{pred.lhs.render(data_vars)} {pred.op} {pred.rhs.render(data_vars)}"
    if isinstance(pred, Not):
        inner = pred.arg
        if isinstance(inner, PtrEq):
            return f"{inner.p} != {inner.q}"
        return f"!({render_pred(inner, data_vars)})"
    sep = " && " if isinstance(pred, And) else " || "
    return "(" + sep.join(render_pred(a, data_vars) for a in pred.args) + ")"


# statements


@dataclass(frozen=True)
class PtrAssignNil:
    p: str


@dataclass(frozen=True)
class PtrAssign:
    p: str
    q: str


@dataclass(frozen=True)
class PtrAssignNext:
    p: str
    q: str


@dataclass(frozen=True)
class NextAssignNil:
    p: str


@dataclass(frozen=True)
class NextAssign:
    p: str
    q: str


@dataclass(frozen=True)
class DataAssign:
    p: str
    expr: LinExpr


@dataclass(frozen=True)
class New:
    p: str


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assume:
    """Guard edge; :class:`AssumeStruct`/:class:`AssumeData` are the pure forms."""

    pred: Pred


@dataclass(frozen=True)
class AssumeStruct(Assume):
    pass


@dataclass(frozen=True)
class AssumeData(Assume):
    pass


@dataclass(frozen=True)
class If:
    cond: Pred
    then: tuple[tuple[int, "Stmt"], ...]
    orelse: tuple[tuple[int, "Stmt"], ...]


@dataclass(frozen=True)
class While:
    cond: Pred
    body: tuple[tuple[int, "Stmt"], ...]


Stmt = Union[
    PtrAssignNil, PtrAssign, PtrAssignNext, NextAssignNil, NextAssign,
    DataAssign, New, Skip, Assume, If, While,
]


def make_assume(pred: Pred) -> Assume:
    if is_structural(pred):
        return AssumeStruct(pred)
    if is_data(pred):
        return AssumeData(pred)
    return Assume(pred)


def render_stmt(s: Stmt, data_vars: Sequence[str] = ()) -> str:
    if isinstance(s, PtrAssignNil):
        return f"{s.p} := nil"
    if isinstance(s, PtrAssign):
        return f"{s.p} := {s.q}"
    if isinstance(s, PtrAssignNext):
        return f"{s.p} := {s.q}->next"
    if isinstance(s, NextAssignNil):
        return f"{s.p}->next := nil"
    if isinstance(s, NextAssign):
        return f"{s.p}->next := {s.q}"
    if isinstance(s, DataAssign):
        lhs = s.p if s.p in data_vars else f"{s.p}->data"
        return f"{lhs} := {s.expr.render(data_vars)}"
    if isinstance(s, New):
        return f"new {s.p}"
    if isinstance(s, Skip):
        return "skip"
    if isinstance(s, Assume):
        return f"assume({render_pred(s.pred, data_vars)})"
    raise errors.UnsupportedStmt(type(s).__name__)


# --------------------------------------------------------------------------
# programs


@dataclass(frozen=True)
class PropertySpec:
    """A named property template with an anchor pointer and optional key.

    ``key`` is a data term name (pointer or data variable) and ``offset`` a
    constant added to it; ``key=None`` means the constant ``offset`` itself.
    """

    name: str
    anchor: str
    key: str | None = None
    offset: int = 0
    has_key: bool = False

    def render(self) -> str:
        if not self.has_key:
            return f"{self.name}({self.anchor})"
        if self.key is None:
            k = str(self.offset)
        elif self.offset:
            k = f"{self.key} {'+' if self.offset > 0 else '-'} {abs(self.offset)}"
        else:
            k = self.key
        return f"{self.name}({self.anchor}, {k})"


END = 0  # assertion pc meaning "program exit"


@dataclass(frozen=True)
class Program:
    pointer_vars: tuple[str, ...]
    data_vars: tuple[str, ...]
    stmts: tuple[tuple[int, Stmt], ...]
    preconditions: tuple[PropertySpec, ...] = ()
    assertions: tuple[tuple[int, PropertySpec], ...] = ()
    name: str = "program"
    # data variables already lowered to pointers at private cells
    cells: tuple[str, ...] = ()

    @property
    def num_pcs(self) -> int:
        return sum(1 for _ in iter_pcs(self.stmts))

    @property
    def exit_pc(self) -> int:
        return self.num_pcs + 1

    def assertion_pcs(self) -> list[tuple[int, PropertySpec]]:
        return [(self.exit_pc if pc == END else pc, spec) for pc, spec in self.assertions]

    def pretty(self) -> str:
        dv = self.data_vars or self.cells
        lines = ["pointer " + ", ".join(p for p in self.pointer_vars if p != NIL and p not in dv) + ";"]
        if dv:
            lines.append("data " + ", ".join(dv) + ";")
        for spec in self.preconditions:
            lines.append(f"@pre {spec.render()}")
        _pretty_block(self.stmts, dv, 0, lines)
        for pc, spec in self.assertions:
            lines.append(f"@assert {'end' if pc == END else pc} {spec.render()}")
        return "\n".join(lines) + "\n"


def _pretty_block(block, dv, depth, lines):
    ind = "  " * depth
    for pc, s in block:
        if isinstance(s, While):
            lines.append(f"{ind}{pc}: while ({render_pred(s.cond, dv)}) do")
            _pretty_block(s.body, dv, depth + 1, lines)
            lines.append(f"{ind}od;")
        elif isinstance(s, If):
            lines.append(f"{ind}{pc}: if ({render_pred(s.cond, dv)}) then")
            _pretty_block(s.then, dv, depth + 1, lines)
            if s.orelse:
                lines.append(f"{ind}else")
                _pretty_block(s.orelse, dv, depth + 1, lines)
            lines.append(f"{ind}fi;")
        else:
            lines.append(f"{ind}{pc}: {render_stmt(s, dv)};")


def iter_pcs(block) -> Iterator[tuple[int, Stmt]]:
    for pc, s in block:
        yield pc, s
        if isinstance(s, While):
            yield from iter_pcs(s.body)
        elif isinstance(s, If):
            yield from iter_pcs(s.then)
            yield from iter_pcs(s.orelse)


# --------------------------------------------------------------------------
# lexer / parser

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|->\*|->|→\*|→|==|!=|<=|>=|&&|\|\||[<>=!¬∧∨();,:+\-@*])
    """,
    re.VERBOSE,
)

_SYM_ALIASES = {"→": "->", "→*": "->*", "∧": "&&", "∨": "||", "¬": "!", "and": "&&", "or": "||", "not": "!"}
KEYWORDS = {
    "pointer", "data", "while", "do", "od", "if", "then", "else", "fi", "new",
    "skip", "assume", "nil", "next", "true", "false",
}
PROPERTY_NAMES = ("List", "Init", "Sort", "Max", "Gek", "Last", "Empty")
_KEYED = {"Init", "Max", "Gek", "Last"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(text: str) -> list[_Tok]:
    toks = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise errors.SyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                if kind == "ident" and s in ("and", "or", "not"):
                    kind, s = "sym", _SYM_ALIASES[s]
                elif kind == "sym":
                    s = _SYM_ALIASES.get(s, s)
                toks.append(_Tok(kind, s, line, col))
        if kind != "nl":
            col += len(m.group())
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _lex(text)
        self.i = 0
        self.pointers: list[str] = []
        self.datavars: list[str] = []
        self.pc = 0
        self.pres: list[PropertySpec] = []
        self.asserts: list[tuple[int, PropertySpec]] = []

    # helpers -------------------------------------------------------------
    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, expected: Sequence[str] = ()) -> errors.SyntaxError:
        t = self.tok
        return errors.SyntaxError(msg, t.line, t.col, tuple(expected))

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("sym", "ident")

    def eat(self, text: str) -> _Tok:
        if not self.at(text):
            got = self.tok.text or "end of input"
            raise self.error(f"unexpected {got!r}", [repr(text)])
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "ident" or (t.text in KEYWORDS and t.text != "nil"):
            raise self.error(f"unexpected {t.text or 'end of input'!r}", [what])
        self.i += 1
        return t.text

    def pointer(self) -> str:
        t = self.tok
        name = self.ident("pointer variable")
        if name != NIL and name not in self.pointers:
            if name in self.datavars:
                raise errors.SyntaxError(f"{name!r} is a data variable", t.line, t.col, ("pointer variable",))
            raise errors.UseOfUndeclaredVar(f"{t.line}:{t.col}: undeclared pointer variable {name!r}")
        return name

    # program -------------------------------------------------------------
    def program(self, name: str) -> Program:
        self.annotations()
        self.declarations()
        self.annotations()
        body = self.block(("eof",))
        self.annotations()
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}", ["statement"])
        return Program(
            (NIL, *self.pointers),
            tuple(self.datavars),
            tuple(body),
            tuple(self.pres),
            tuple(self.asserts),
            name,
        )

    def declarations(self) -> None:
        seen = set()
        for kw, dest in (("pointer", self.pointers), ("data", self.datavars)):
            if not self.accept(kw):
                continue
            while True:
                t = self.tok
                name = self.ident(f"{kw} variable name")
                if name == NIL or name in seen:
                    raise errors.DuplicatePointerVar(f"{t.line}:{t.col}: duplicate variable {name!r}")
                seen.add(name)
                dest.append(name)
                if not self.accept(","):
                    break
            self.eat(";")

    def annotations(self) -> None:
        while self.at("@"):
            self.i += 1
            kind = self.ident("pre or assert")
            if kind == "pre":
                self.pres.append(self.prop())
            elif kind == "assert":
                if self.accept("end"):
                    pc = END
                elif self.tok.kind == "num":
                    pc = int(self.tok.text)
                    self.i += 1
                else:
                    raise self.error("bad assertion location", ["end", "program counter"])
                self.asserts.append((pc, self.prop()))
            else:
                raise errors.SyntaxError(f"unknown annotation @{kind}", self.toks[self.i - 1].line,
                                         self.toks[self.i - 1].col, ("@pre", "@assert"))

    def prop(self) -> PropertySpec:
        t = self.tok
        name = self.ident("property name")
        if name not in PROPERTY_NAMES:
            raise errors.SyntaxError(f"unknown property {name!r}", t.line, t.col, PROPERTY_NAMES)
        self.eat("(")
        anchor = self.pointer()
        key, offset, has_key = None, 0, False
        if self.accept(","):
            has_key = True
            expr = self.linexpr()
            if len(expr.coefs) > 1 or (expr.coefs and expr.coefs[0][1] != 1):
                raise self.error("property key must be a term plus a constant")
            key = expr.coefs[0][0] if expr.coefs else None
            offset = expr.const
        self.eat(")")
        return PropertySpec(name, anchor, key, offset, has_key)

    # statements ----------------------------------------------------------
    def block(self, stop: Sequence[str]) -> list[tuple[int, Stmt]]:
        out = []
        while True:
            self.annotations()
            t = self.tok
            if t.kind == "eof" or (t.kind == "ident" and t.text in stop):
                break
            out.append(self.pc_stmt())
        if not out:
            raise self.error("expected at least one statement", ["statement"])
        return out

    def pc_stmt(self) -> tuple[int, Stmt]:
        self.pc += 1
        pc = self.pc
        if self.tok.kind == "num" and self.peek().text == ":":
            t = self.tok
            if int(t.text) != pc:
                raise errors.SyntaxError(f"label {t.text} out of sequence", t.line, t.col, (str(pc),))
            self.i += 2
        s = self.stmt()
        self.accept(";")
        return pc, s

    def stmt(self) -> Stmt:
        t = self.tok
        if self.accept("skip"):
            return Skip()
        if self.accept("new"):
            return New(self.pointer())
        if self.accept("assume"):
            self.eat("(")
            p = self.pred()
            self.eat(")")
            return make_assume(p)
        if self.accept("while"):
            cond = self.pred()
            self.eat("do")
            body = self.block(("od",))
            self.eat("od")
            return While(cond, tuple(body))
        if self.accept("if"):
            cond = self.pred()
            self.eat("then")
            then = self.block(("else", "fi"))
            orelse: list = []
            if self.accept("else"):
                orelse = self.block(("fi",))
            self.eat("fi")
            return If(cond, tuple(then), tuple(orelse))
        if t.kind != "ident":
            raise self.error(f"unexpected {t.text or 'end of input'!r}", ["statement"])
        name = t.text
        if name in self.datavars:
            self.i += 1
            self.eat(":=")
            return DataAssign(name, self.linexpr())
        p = self.pointer()
        if p == NIL:
            raise errors.SyntaxError("cannot assign to nil", t.line, t.col)
        if self.accept("->"):
            field_tok = self.tok
            if self.accept("next"):
                self.eat(":=")
                if self.accept("nil"):
                    return NextAssignNil(p)
                return NextAssign(p, self.pointer())
            if self.accept("data"):
                self.eat(":=")
                return DataAssign(p, self.linexpr())
            raise errors.SyntaxError("unexpected field", field_tok.line, field_tok.col, ("next", "data"))
        self.eat(":=")
        if self.accept("nil"):
            return PtrAssignNil(p)
        q = self.pointer()
        if self.accept("->"):
            self.eat("next")
            return PtrAssignNext(p, q)
        return PtrAssign(p, q)

    # expressions ---------------------------------------------------------
    def linexpr(self) -> LinExpr:
        coefs: dict[str, int] = {}
        const = 0
        sign = -1 if self.accept("-") else 1
        while True:
            t = self.tok
            if t.kind == "num":
                self.i += 1
                const += sign * int(t.text)
            else:
                name = self.ident("data term")
                if name in self.datavars:
                    pass
                elif name in self.pointers:
                    self.eat("->")
                    self.eat("data")
                else:
                    raise errors.UseOfUndeclaredVar(f"{t.line}:{t.col}: undeclared variable {name!r}")
                coefs[name] = coefs.get(name, 0) + sign
            if self.accept("+"):
                sign = 1
            elif self.accept("-"):
                sign = -1
            else:
                break
        return LinExpr(tuple(sorted((n, k) for n, k in coefs.items() if k)), const)

    def pred(self) -> Pred:
        args = [self.conj()]
        while self.accept("||"):
            args.append(self.conj())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conj(self) -> Pred:
        args = [self.unary()]
        while self.accept("&&"):
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self) -> Pred:
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("("):
            p = self.pred()
            self.eat(")")
            return p
        if self.accept("true"):
            return BoolConst(True)
        if self.accept("false"):
            return BoolConst(False)
        return self.atom()

    def _ptr_operand(self):
        """Try ``p``, ``p->next`` or ``p->*next``; return None to backtrack."""
        t = self.tok
        if t.kind != "ident" or not (t.text == NIL or t.text in self.pointers):
            return None
        nxt = self.peek()
        if nxt.text == "->" and self.peek(2).text == "next":
            self.i += 3
            return ("next", t.text)
        if nxt.text == "->*":
            self.i += 1
            self.eat("->*")
            self.eat("next")
            return ("reach", t.text)
        if nxt.text == "->":
            return None
        self.i += 1
        return ("ptr", t.text)

    def atom(self) -> Pred:
        start = self.i
        lhs = self._ptr_operand()
        if lhs is not None and self.tok.text in ("==", "!="):
            op = self.tok.text
            self.i += 1
            rhs = self._ptr_operand()
            if rhs is not None and rhs[0] == "ptr" and self.tok.text not in ("+", "-", "->"):
                atom = _struct_atom(lhs, rhs[1])
            elif rhs is not None and lhs[0] == "ptr" and rhs[0] != "ptr":
                atom = _struct_atom(rhs, lhs[1])
            else:
                raise self.error("malformed structural comparison", ["pointer variable"])
            return atom if op == "==" else Not(atom)
        self.i = start
        t = self.tok
        left = self.linexpr()
        op = self.tok.text
        if op not in ("<", "<=", ">", ">=", "==", "!=", "="):
            raise self.error(f"unexpected {op or 'end of input'!r}", ["comparison operator"])
        self.i += 1
        right = self.linexpr()
        del t
        return DataCmp(left, "==" if op == "=" else op, right)


def _struct_atom(lhs, q: str) -> Pred:
    kind, p = lhs
    if kind == "ptr":
        return PtrEq(p, q)
    if kind == "next":
        return NextEq(p, q)
    return ReachEq(p, q)


def parse(text: str, name: str = "program") -> Program:
    """Parse program text with ``@pre``/``@assert`` annotations."""
    return _Parser(text).program(name)


# --------------------------------------------------------------------------
# desugaring


def desugar_data_vars(p: Program) -> Program:
    """Turn each data variable into a pointer to a private cell.

    The cell exists from the start (a node whose next field is dirty), so
    preconditions may relate list data to data variables.  Program counters
    are unchanged.
    """
    if not p.data_vars:
        return p
    return Program(
        p.pointer_vars + p.data_vars, (), p.stmts, p.preconditions, p.assertions, p.name,
        p.cells + p.data_vars,
    )


# --------------------------------------------------------------------------
# control-flow graph


@dataclass(frozen=True)
class Cfg:
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, Stmt, int], ...]
    loop_headers: frozenset[int]
    entry: int
    exit: int

    def succs(self, pc: int) -> list[tuple[Stmt, int]]:
        return [(s, d) for a, s, d in self.edges if a == pc]

    def preds(self, pc: int) -> list[tuple[int, Stmt]]:
        return [(a, s) for a, s, d in self.edges if d == pc]

    def reverse_postorder(self) -> list[int]:
        seen: set[int] = set()
        order: list[int] = []
        adj: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, _, d in self.edges:
            adj[a].append(d)

        def dfs(n: int) -> None:
            seen.add(n)
            for m in adj[n]:
                if m not in seen:
                    dfs(m)
            order.append(n)

        dfs(self.entry)
        for n in self.nodes:
            if n not in seen:
                dfs(n)
        return order[::-1]


def build_cfg(p: Program) -> Cfg:
    edges: list[tuple[int, Stmt, int]] = []
    headers: set[int] = set()
    exit_pc = p.exit_pc

    def lower(block, cont: int) -> int:
        """Emit edges for ``block`` falling through to ``cont``; return entry pc."""
        for idx, (pc, s) in enumerate(block):
            nxt = block[idx + 1][0] if idx + 1 < len(block) else cont
            if isinstance(s, While):
                headers.add(pc)
                first = lower(s.body, pc)
                edges.append((pc, make_assume(s.cond), first))
                edges.append((pc, make_assume(negate(s.cond)), nxt))
            elif isinstance(s, If):
                first = lower(s.then, nxt)
                edges.append((pc, make_assume(s.cond), first))
                other = lower(s.orelse, nxt) if s.orelse else nxt
                edges.append((pc, make_assume(negate(s.cond)), other))
            else:
                edges.append((pc, s, nxt))
        return block[0][0]

    entry = lower(p.stmts, exit_pc)
    nodes = tuple(range(1, exit_pc + 1))
    edges.sort(key=lambda e: (e[0], e[2]))
    return Cfg(nodes, tuple(edges), frozenset(headers), entry, exit_pc)


# --------------------------------------------------------------------------
# concrete semantics


@dataclass(frozen=True)
class Error:
    reason: str


@dataclass(frozen=True)
class _Blocked:
    def __repr__(self) -> str:
        return "Blocked"


Blocked = _Blocked()


class _MemError(Exception):
    pass


class _State:
    """Mutable scratch copy of a configuration used while executing a step."""

    def __init__(self, c: HeapConfig):
        self.next = c.next_map
        self.data = c.data_map
        self.pval = c.pval_map
        self.order = [p for p, _ in c.pval]

    def loc(self, p: str) -> int:
        return self.pval[p]

    def deref(self, p: str) -> int:
        v = self.pval[p]
        if v == DIRTY or v == self.pval.get(NIL):
            raise _MemError(f"dereference of {p} at nil")
        return v

    def value(self, e: LinExpr) -> int:
        return sum(k * self.data[self.deref(n)] for n, k in e.coefs) + e.const

    def reaches(self, a: int, b: int) -> bool:
        while a != DIRTY:
            if a == b:
                return True
            a = self.next[a]
        return a == b

    def fresh(self) -> int:
        return max([*self.next, DIRTY]) + 1

    def freeze(self, pc: int) -> HeapConfig:
        return make_config(pc, self.next, self.data, self.pval, self.order)


def eval_pred(c: HeapConfig, pred: Pred) -> bool:
    """Short-circuit evaluation; raises on data dereference of nil."""
    st = _State(c)
    return _eval(st, pred)


def _eval(st: _State, pred: Pred) -> bool:
    if isinstance(pred, BoolConst):
        return pred.value
    if isinstance(pred, PtrEq):
        return st.loc(pred.p) == st.loc(pred.q)
    if isinstance(pred, NextEq):
        v = st.loc(pred.p)
        return v != DIRTY and st.next.get(v) == st.loc(pred.q)
    if isinstance(pred, ReachEq):
        return st.reaches(st.loc(pred.p), st.loc(pred.q))
    if isinstance(pred, DataCmp):
        diff = st.value(pred.lhs) - st.value(pred.rhs)
        return {
            "<": diff < 0, "<=": diff <= 0, ">": diff > 0,
            ">=": diff >= 0, "==": diff == 0, "!=": diff != 0,
        }[pred.op]
    if isinstance(pred, Not):
        return not _eval(st, pred.arg)
    if isinstance(pred, And):
        return all(_eval(st, a) for a in pred.args)
    return any(_eval(st, a) for a in pred.args)


StepResult = Union[HeapConfig, Error, _Blocked]


def concrete_step(c: HeapConfig, s: Stmt, pc: int | None = None, fresh_datum: int = 0) -> StepResult:
    """Execute one simple statement; ``pc`` is the resulting program counter."""
    pc = c.pc if pc is None else pc
    st = _State(c)
    try:
        if isinstance(s, Skip):
            pass
        elif isinstance(s, PtrAssignNil):
            st.pval[s.p] = st.loc(NIL)
        elif isinstance(s, PtrAssign):
            st.pval[s.p] = st.loc(s.q)
        elif isinstance(s, PtrAssignNext):
            w = st.next[st.deref(s.q)]
            if w == DIRTY:
                return Error(f"{s.q}->next is dirty")
            st.pval[s.p] = w
        elif isinstance(s, (NextAssign, NextAssignNil)):
            v = st.deref(s.p)
            tgt = st.loc(NIL if isinstance(s, NextAssignNil) else s.q)
            if st.reaches(tgt, v):
                return Error(f"{s.p}->next assignment creates a cycle")
            st.next[v] = tgt
        elif isinstance(s, DataAssign):
            v = st.deref(s.p)
            st.data[v] = st.value(s.expr)
        elif isinstance(s, New):
            v = st.fresh()
            st.next[v] = DIRTY
            st.data[v] = fresh_datum
            st.pval[s.p] = v
        elif isinstance(s, Assume):
            if not _eval(st, s.pred):
                return Blocked
        else:
            raise errors.UnsupportedStmt(type(s).__name__)
    except _MemError as e:
        return Error(str(e))
    return st.freeze(pc)


@dataclass
class RunResult:
    visited: set[tuple[int, HeapConfig]] = field(default_factory=set)
    errors: list[tuple[list[tuple[int, HeapConfig]], Error]] = field(default_factory=list)
    exhausted: bool = False

    def __iter__(self):
        return iter(sorted(self.visited, key=lambda x: (x[0], x[1].describe())))

    def __len__(self) -> int:
        return len(self.visited)


def run_concrete(
    p: Program,
    init: HeapConfig,
    fuel: int,
    fresh_values: Sequence[int] = (0,),
    cfg: Cfg | None = None,
) -> RunResult:
    """Depth-first enumeration of reachable configurations within ``fuel`` steps.

    ``new`` branches over ``fresh_values`` for the datum of the fresh node.
    Configurations are deduplicated, so revisiting a state does not re-explore.
    """
    cfg = cfg or build_cfg(p)
    out = RunResult()
    start = init.with_pc(cfg.entry) if init.pc != cfg.entry else init
    best: dict[HeapConfig, int] = {}
    stack = [(start, fuel, ((start.pc, start),))]
    while stack:
        c, left, trace = stack.pop()
        out.visited.add((c.pc, c))
        if best.get(c, -1) >= left:
            continue
        best[c] = left
        if left == 0:
            if cfg.succs(c.pc):
                out.exhausted = True
            continue
        for s, dst in cfg.succs(c.pc):
            choices = fresh_values if isinstance(s, New) else (0,)
            for d in choices:
                r = concrete_step(c, s, dst, d)
                if isinstance(r, Error):
                    out.errors.append((list(trace), r))
                elif r is not Blocked:
                    stack.append((r, left - 1, trace + ((dst, r),)))
    return out
