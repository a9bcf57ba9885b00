"""Fixpoint iteration over the control-flow graph.

Non-header merge points use the plain lattice join.  Loop headers hold
elastic automata: incoming values are elastified before joining and, after
a few precise rounds, formulas are widened state by state.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

from . import lang
from .elastic import ejoin, elastify
from .errors import AnalyzerError, NonTermination
from .heap import Alphabet
from .qsda import Qsda, bottom, is_bottom, lattice_join, minimize, product
from .strandout import precondition, required_universals
from .transformers import full_post, strengthen


@dataclass
class EngineConfig:
    widen_delay: int = 2
    max_iter: int = 100
    strengthen_after_join: bool = False
    trace: bool = False
    # keep every value each loop header takes (for inspection and tests)
    keep_history: bool = False
    # distinct elastic skeletons tolerated at loop headers
    skeleton_bound: int = 100_000


@dataclass
class AnalysisState:
    program: lang.Program
    cfg: lang.Cfg
    alphabet: Alphabet
    config: EngineConfig
    inv: dict[int, Qsda] = field(default_factory=dict)
    # times each loop header was taken off the worklist
    iterations: dict[int, int] = field(default_factory=dict)
    passes: int = 0
    max_size: int = 0
    seconds: float = 0.0
    skeletons: int = 0
    trace: list[dict] = field(default_factory=list)
    history: dict[int, list[Qsda]] = field(default_factory=dict)

    def at(self, pc: int) -> Qsda:
        return self.inv.get(pc) or bottom(self.alphabet)

    @property
    def exit_invariant(self) -> Qsda:
        return self.at(self.cfg.exit)

    def header_iterations(self) -> int:
        return max(self.iterations.values(), default=0)

    def report(self) -> dict:
        al = self.alphabet
        return {
            "version": 1,
            "program": self.program.name,
            "pointer_vars": list(al.pv),
            "universals": list(al.y),
            "passes": self.passes,
            "iterations": {str(k): v for k, v in sorted(self.iterations.items())},
            "max_size": self.max_size,
            "seconds": round(self.seconds, 3),
            "pcs": {
                str(pc): {
                    "states": a.num_states,
                    "rules": len(a.rules),
                    "formulas": sorted({f.render(al.terms.names) for f in a.finals.values()}),
                }
                for pc, a in sorted(self.inv.items())
            },
            "trace": self.trace,
        }


def default_universals(p: lang.Program, count: int | None = None) -> tuple[str, ...]:
    """Universal variable names; the count defaults to what the properties need."""
    if count is None:
        specs = [*p.preconditions, *(s for _, s in p.assertions)]
        count = max((required_universals(s) for s in specs), default=0)
    return tuple(f"y{i + 1}" for i in range(count))


def widen_eqsda(old: Qsda, new: Qsda) -> Qsda:
    """Join elastically, then widen each root formula against its old partners."""
    joined = ejoin(old, new)
    partners: dict[int, list] = {}
    res = product([joined, old], "left", lambda t: None)
    if res is None:
        return joined
    prod, pstates = res
    for j, o in pstates:
        if j in joined.finals:
            partners.setdefault(j, [])
            if o is not None:
                partners[j].append(o)
    al = joined.alphabet
    finals = {}
    for j, f in joined.finals.items():
        base = al.bottom()
        for o in partners.get(j, ()):
            base = base.join(old.final(o))
        finals[j] = base.widen(f)
    return minimize(Qsda(al, joined.types, dict(joined.rules), finals))


def analyze(p: lang.Program, pre: Qsda | None = None, universals=None,
            config: EngineConfig | None = None) -> AnalysisState:
    """Compute per-pc invariants of a (desugared) program."""
    config = config or EngineConfig()
    prog = lang.desugar_data_vars(p)
    ys = universals if isinstance(universals, tuple) else default_universals(prog, universals)
    al = Alphabet(prog.pointer_vars, ys)
    if pre is None:
        pre = precondition(al, prog.preconditions, prog.cells)
    cfg = lang.build_cfg(prog)
    state = AnalysisState(prog, cfg, al, config)
    started = time.perf_counter()
    headers = cfg.loop_headers
    rank = {pc: i for i, pc in enumerate(cfg.reverse_postorder())}
    visits: dict[int, int] = {}
    skeletons: set = set()

    entry_val = elastify(pre) if cfg.entry in headers else pre
    state.inv[cfg.entry] = entry_val
    state.max_size = entry_val.num_states
    queue = [(rank[cfg.entry], cfg.entry)]
    queued = {cfg.entry}
    while queue:
        _, pc = heapq.heappop(queue)
        queued.discard(pc)
        state.passes += 1
        if pc in headers:
            state.iterations[pc] = state.iterations.get(pc, 0) + 1
        src = state.inv[pc]
        for stmt, dst in cfg.succs(pc):
            try:
                out = full_post(src, stmt, state.trace if config.trace else None)
            except AnalyzerError as e:
                raise type(e)(f"pc {pc}: {e}") from e
            state.max_size = max(state.max_size, out.num_states)
            old = state.inv.get(dst)
            if old is None and is_bottom(out):
                # unvisited pcs already read as bottom
                continue
            if dst in headers:
                visits[dst] = visits.get(dst, 0) + 1
                if visits[dst] > config.max_iter:
                    raise NonTermination(f"loop header {dst} exceeded {config.max_iter} iterations")
                if old is None:
                    new = elastify(out)
                elif visits[dst] > config.widen_delay:
                    new = widen_eqsda(old, out)
                else:
                    new = ejoin(old, out)
                skeletons.add(new.skeleton_key())
                if len(skeletons) > config.skeleton_bound:
                    raise NonTermination(f"more than {config.skeleton_bound} elastic skeletons")
            else:
                new = out if old is None else lattice_join(old, out)
                if old is not None and config.strengthen_after_join:
                    for y in al.y:
                        new = strengthen(new, y)
            state.max_size = max(state.max_size, new.num_states)
            if old is not None and new == old:
                continue
            state.inv[dst] = new
            if config.keep_history and dst in headers:
                state.history.setdefault(dst, []).append(new)
            if dst not in queued:
                heapq.heappush(queue, (rank[dst], dst))
                queued.add(dst)
    for pc in cfg.nodes:
        state.inv.setdefault(pc, bottom(al))
    state.skeletons = len(skeletons)
    state.seconds = time.perf_counter() - started
    return state
