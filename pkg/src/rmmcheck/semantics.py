"""Operational semantics with per-address and per-thread FIFO store buffers.

A store is issued into the per-address queue of its thread, nondeterministically
advances into the thread's all-addresses queue, and from there commits to
memory. Loads prefer the newest buffered store of the own thread to the same
address (early read) over memory. ``scfence`` executes only with all own
buffers empty; ``fence a1,..,an`` is issued once the listed per-address queues
are empty and retires through the all-addresses queue, ordering it against
stores. The SC restriction commits every store/fence atomically at its issue.

States are immutable values; cloning is structural sharing over tuples.
All functions here are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .syntax import (
    Assert,
    Expr,
    Fence,
    Load,
    LocalAssign,
    Program,
    ScFence,
    Store,
    Thread,
    eval_expr,
    format_instruction,
    validate,
)

DEFAULT_BUFFER_BOUND = 3


class InvalidChoice(Exception):
    """A transition was applied that is not enabled in the given state."""


class InvalidProgram(Exception):
    """Operation requires a program that validates cleanly."""


# ---------------------------------------------------------------------------
# Public action / computation values
# ---------------------------------------------------------------------------

ISSUE = "issue"
STORE = "store"
LOAD = "load"
LOCAL = "local"
SCFENCE = "scfence"
FENCE = "fence"


@dataclass(frozen=True)
class Action:
    thread: str
    kind: str  # issue | store | load | local | scfence | fence
    addr: Optional[int] = None
    value: Optional[int] = None
    addrs: Optional[tuple[int, ...]] = None

    def __str__(self) -> str:
        if self.kind in (STORE, LOAD):
            return f"{self.thread}:{self.kind}[{self.addr}]={self.value}"
        if self.kind == FENCE:
            return f"{self.thread}:fence[{','.join(map(str, self.addrs or ()))}]"
        return f"{self.thread}:{self.kind}"

    def to_json(self) -> dict:
        out: dict = {"thread": self.thread, "kind": self.kind}
        if self.addr is not None:
            out["addr"] = self.addr
        if self.value is not None:
            out["value"] = self.value
        if self.addrs is not None:
            out["addrs"] = list(self.addrs)
        return out


@dataclass(frozen=True)
class Computation:
    """A recorded sequence of actions.

    ``issue_of`` aligns with ``actions``: for each store/fence commit it holds
    the index of the matching issue action, ``None`` elsewhere. The pairing is
    a per-thread order-preserving bijection between issues and commits.
    """

    actions: tuple[Action, ...]
    issue_of: tuple[Optional[int], ...]

    def __len__(self) -> int:
        return len(self.actions)

    def __str__(self) -> str:
        return " . ".join(str(a) for a in self.actions)

    def to_json(self) -> dict:
        return {
            "actions": [a.to_json() for a in self.actions],
            "issue_index": list(self.issue_of),
        }


@dataclass(frozen=True)
class PendingStore:
    addr: int
    value: int


@dataclass(frozen=True)
class PendingFence:
    addrs: tuple[int, ...]


# ---------------------------------------------------------------------------
# Compiled program representation
# ---------------------------------------------------------------------------
#
# The exploration-heavy modules step millions of states, so the program is
# compiled once: labels resolved, registers mapped to slots, expressions
# closed over slot tuples. A compiled state is a plain nested tuple
#
#   (pcs, regs, mem, buf1, buf2)
#
# pcs:  label per thread
# regs: value tuple per thread
# mem:  value per address
# buf1: per thread, tuple of (addr, entries) sorted by addr, non-empty only;
#       entries are (value, tag) oldest first
# buf2: per thread, tuple of entries oldest first;
#       ("st", addr, value, tag) or ("fe", addrs, tag)
#
# Tags carry the recorded index of the issue action so commits can be paired;
# they are stripped for state identity.


class CInst:
    __slots__ = ("kind", "dest", "addr_fn", "val_fn", "arg_fns", "next", "src")

    def __init__(self, kind, dest, addr_fn, val_fn, arg_fns, next_label, src):
        self.kind = kind
        self.dest = dest
        self.addr_fn = addr_fn
        self.val_fn = val_fn
        self.arg_fns = arg_fns
        self.next = next_label
        self.src = src


def _compile_expr(expr: Expr, slots: dict[str, int], domain: int) -> Callable:
    from .syntax import BinOp, Const, Not, Reg

    if isinstance(expr, Const):
        v = expr.value % domain
        return lambda r: v
    if isinstance(expr, Reg):
        i = slots[expr.name]
        return lambda r: r[i]
    if isinstance(expr, Not):
        f = _compile_expr(expr.operand, slots, domain)
        return lambda r: 1 if f(r) == 0 else 0
    if isinstance(expr, BinOp):
        fa = _compile_expr(expr.left, slots, domain)
        fb = _compile_expr(expr.right, slots, domain)
        op = expr.op
        if op == "+":
            return lambda r: (fa(r) + fb(r)) % domain
        if op == "-":
            return lambda r: (fa(r) - fb(r)) % domain
        if op == "*":
            return lambda r: (fa(r) * fb(r)) % domain
        if op == "=":
            return lambda r: 1 if fa(r) == fb(r) else 0
        if op == "!=":
            return lambda r: 1 if fa(r) != fb(r) else 0
        if op == "<":
            return lambda r: 1 if fa(r) < fb(r) else 0
        if op == "<=":
            return lambda r: 1 if fa(r) <= fb(r) else 0
    raise TypeError(f"not an expression node: {expr!r}")


class CompiledProgram:
    __slots__ = ("program", "names", "nthreads", "domain", "code", "init_pcs", "slots")

    def __init__(self, program: Program):
        self.program = program
        self.names = tuple(t.name for t in program.threads)
        self.nthreads = len(program.threads)
        self.domain = program.domain_size
        self.slots = []
        self.code = []
        for t in program.threads:
            slots = {r: i for i, r in enumerate(t.registers)}
            self.slots.append(slots)
            by_label: dict[str, list[CInst]] = {}
            for li in t.instructions:
                ci = self._compile_inst(li, slots)
                by_label.setdefault(li.label, []).append(ci)
            self.code.append({k: tuple(v) for k, v in by_label.items()})
        self.init_pcs = tuple(t.init_label for t in program.threads)

    def _compile_inst(self, li, slots) -> CInst:
        inst = li.instruction
        d = self.domain
        if isinstance(inst, Load):
            return CInst("load", slots[inst.dest], _compile_expr(inst.addr, slots, d),
                         None, None, li.next, li)
        if isinstance(inst, Store):
            return CInst("store", None, _compile_expr(inst.addr, slots, d),
                         _compile_expr(inst.value, slots, d), None, li.next, li)
        if isinstance(inst, LocalAssign):
            return CInst("local", slots[inst.dest], None,
                         _compile_expr(inst.expr, slots, d), None, li.next, li)
        if isinstance(inst, Assert):
            return CInst("assert", None, None,
                         _compile_expr(inst.expr, slots, d), None, li.next, li)
        if isinstance(inst, ScFence):
            return CInst("scfence", None, None, None, None, li.next, li)
        if isinstance(inst, Fence):
            return CInst("fence", None, None, None,
                         tuple(_compile_expr(a, slots, d) for a in inst.addrs), li.next, li)
        raise TypeError(f"not an instruction: {inst!r}")


_compile_cache: dict[Program, CompiledProgram] = {}


def compiled(program: Program) -> CompiledProgram:
    cp = _compile_cache.get(program)
    if cp is None:
        cp = CompiledProgram(program)
        _compile_cache[program] = cp
    return cp


def initial_cstate(cp: CompiledProgram):
    regs = tuple(tuple(0 for _ in cp.slots[t]) for t in range(cp.nthreads))
    mem = tuple(0 for _ in range(cp.domain))
    buf1 = tuple(() for _ in range(cp.nthreads))
    buf2 = tuple(() for _ in range(cp.nthreads))
    return (cp.init_pcs, regs, mem, buf1, buf2)


def strip_tags(cstate):
    """State with pairing tags removed: the identity used for state equality."""
    pcs, regs, mem, buf1, buf2 = cstate
    b1 = tuple(
        tuple((a, tuple(v for v, _tag in es)) for a, es in bt) for bt in buf1
    )
    b2 = tuple(
        tuple(e[:-1] for e in bt) for bt in buf2
    )
    return (pcs, regs, mem, b1, b2)


def buffers_empty(cstate) -> bool:
    return all(not b for b in cstate[3]) and all(not b for b in cstate[4])


# -- small buffer helpers ----------------------------------------------------


def _b1_entries(bt, addr):
    for a, es in bt:
        if a == addr:
            return es
    return ()


def _b1_push(bt, addr, entry):
    out = []
    placed = False
    for a, es in bt:
        if a == addr:
            out.append((a, es + (entry,)))
            placed = True
        else:
            out.append((a, es))
    if not placed:
        out.append((addr, (entry,)))
        out.sort()
    return tuple(out)


def _b1_pop(bt, addr):
    out = []
    popped = None
    for a, es in bt:
        if a == addr:
            popped = es[0]
            if len(es) > 1:
                out.append((a, es[1:]))
        else:
            out.append((a, es))
    return popped, tuple(out)


# ---------------------------------------------------------------------------
# Transition enumeration over compiled states
# ---------------------------------------------------------------------------
#
# Action codes mirror the public Action, thread by index:
#   ("issue", t) ("store", t, a, v, tag) ("load", t, a, v)
#   ("local", t) ("scfence", t) ("fence", t, addrs, tag)
# A successor is (rule, codes, new_cstate); codes is empty for the internal
# advance step. Enumeration order: threads in declaration order, rules in a
# fixed order, buffer entries oldest first, same-label instructions in
# declaration order.

RULE_EARLY1 = "early-read-buffer"
RULE_EARLY2 = "early-read-queue"
RULE_READMEM = "read-memory"
RULE_ISSUE_ST = "issue-store"
RULE_ADVANCE = "advance"
RULE_COMMIT_ST = "commit-store"
RULE_SCFENCE = "scfence"
RULE_ISSUE_FE = "issue-fence"
RULE_COMMIT_FE = "commit-fence"
RULE_LOCAL = "local-assign"
RULE_ASSERT = "assert"


def successors(cp: CompiledProgram, cstate, bound: int, next_index: int):
    if bound == 0:
        # no buffering possible: stores commit at their issue, which is the
        # SC restriction
        return sc_successors(cp, cstate, next_index)
    pcs, regs, mem, buf1, buf2 = cstate
    out = []
    for t in range(cp.nthreads):
        insts = cp.code[t].get(pcs[t], ())
        rt = regs[t]
        b1t = buf1[t]
        b2t = buf2[t]

        # loads: newest per-address entry, else newest queue entry, else memory
        for ci in insts:
            if ci.kind != "load":
                continue
            a = ci.addr_fn(rt)
            es = _b1_entries(b1t, a)
            if es:
                rule, v = RULE_EARLY1, es[-1][0]
            else:
                v = None
                for e in reversed(b2t):
                    if e[0] == "st" and e[1] == a:
                        v = e[2]
                        break
                if v is not None:
                    rule = RULE_EARLY2
                else:
                    rule, v = RULE_READMEM, mem[a]
            nregs = _set2(regs, t, _set1(rt, ci.dest, v))
            npcs = _set1(pcs, t, ci.next)
            out.append((rule, (("load", t, a, v),), (npcs, nregs, mem, buf1, buf2)))

        for ci in insts:
            if ci.kind != "store":
                continue
            a = ci.addr_fn(rt)
            if len(_b1_entries(b1t, a)) >= bound:
                continue
            v = ci.val_fn(rt)
            nb1 = _set2(buf1, t, _b1_push(b1t, a, (v, next_index)))
            npcs = _set1(pcs, t, ci.next)
            out.append((RULE_ISSUE_ST, (("issue", t),), (npcs, regs, mem, nb1, buf2)))

        if b1t and len(b2t) < bound:
            for a, es in b1t:
                entry, nb1t = _b1_pop(b1t, a)
                v, tag = entry
                nb1 = _set2(buf1, t, nb1t)
                nb2 = _set2(buf2, t, b2t + (("st", a, v, tag),))
                out.append((RULE_ADVANCE, (), (pcs, regs, mem, nb1, nb2)))

        if b2t:
            head = b2t[0]
            nb2 = _set2(buf2, t, b2t[1:])
            if head[0] == "st":
                _, a, v, tag = head
                nmem = _set1(mem, a, v)
                out.append((RULE_COMMIT_ST, (("store", t, a, v, tag),),
                            (pcs, regs, nmem, buf1, nb2)))
            else:
                _, addrs, tag = head
                out.append((RULE_COMMIT_FE, (("fence", t, addrs, tag),),
                            (pcs, regs, mem, buf1, nb2)))

        for ci in insts:
            if ci.kind == "scfence" and not b1t and not b2t:
                npcs = _set1(pcs, t, ci.next)
                out.append((RULE_SCFENCE, (("scfence", t),), (npcs, regs, mem, buf1, buf2)))

        for ci in insts:
            if ci.kind != "fence":
                continue
            addrs = tuple(f(rt) for f in ci.arg_fns)
            if len(b2t) >= bound:
                continue
            if any(_b1_entries(b1t, a) for a in addrs):
                continue
            nb2 = _set2(buf2, t, b2t + (("fe", addrs, next_index),))
            npcs = _set1(pcs, t, ci.next)
            out.append((RULE_ISSUE_FE, (("issue", t),), (npcs, regs, mem, buf1, nb2)))

        for ci in insts:
            if ci.kind == "local":
                v = ci.val_fn(rt)
                nregs = _set2(regs, t, _set1(rt, ci.dest, v))
                npcs = _set1(pcs, t, ci.next)
                out.append((RULE_LOCAL, (("local", t),), (npcs, nregs, mem, buf1, buf2)))
            elif ci.kind == "assert":
                if ci.val_fn(rt) != 0:
                    npcs = _set1(pcs, t, ci.next)
                    out.append((RULE_ASSERT, (("local", t),), (npcs, regs, mem, buf1, buf2)))
    return out


def sc_successors(cp: CompiledProgram, cstate, next_index: int):
    """The SC restriction: stores and fences commit atomically at their issue.

    Exposed states always have empty buffers; a store yields the action pair
    issue,store and a fence the pair issue,fence.
    """
    pcs, regs, mem, buf1, buf2 = cstate
    out = []
    for t in range(cp.nthreads):
        insts = cp.code[t].get(pcs[t], ())
        rt = regs[t]
        for ci in insts:
            if ci.kind != "load":
                continue
            a = ci.addr_fn(rt)
            v = mem[a]
            nregs = _set2(regs, t, _set1(rt, ci.dest, v))
            npcs = _set1(pcs, t, ci.next)
            out.append((RULE_READMEM, (("load", t, a, v),), (npcs, nregs, mem, buf1, buf2)))
        for ci in insts:
            if ci.kind != "store":
                continue
            a = ci.addr_fn(rt)
            v = ci.val_fn(rt)
            nmem = _set1(mem, a, v)
            npcs = _set1(pcs, t, ci.next)
            out.append((RULE_ISSUE_ST,
                        (("issue", t), ("store", t, a, v, next_index)),
                        (npcs, regs, nmem, buf1, buf2)))
        for ci in insts:
            if ci.kind == "scfence":
                npcs = _set1(pcs, t, ci.next)
                out.append((RULE_SCFENCE, (("scfence", t),), (npcs, regs, mem, buf1, buf2)))
        for ci in insts:
            if ci.kind == "fence":
                addrs = tuple(f(rt) for f in ci.arg_fns)
                npcs = _set1(pcs, t, ci.next)
                out.append((RULE_ISSUE_FE,
                            (("issue", t), ("fence", t, addrs, next_index)),
                            (npcs, regs, mem, buf1, buf2)))
        for ci in insts:
            if ci.kind == "local":
                v = ci.val_fn(rt)
                nregs = _set2(regs, t, _set1(rt, ci.dest, v))
                npcs = _set1(pcs, t, ci.next)
                out.append((RULE_LOCAL, (("local", t),), (npcs, nregs, mem, buf1, buf2)))
            elif ci.kind == "assert":
                if ci.val_fn(rt) != 0:
                    npcs = _set1(pcs, t, ci.next)
                    out.append((RULE_ASSERT, (("local", t),), (npcs, regs, mem, buf1, buf2)))
    return out


def _set1(tup, i, v):
    return tup[:i] + (v,) + tup[i + 1:]


def _set2(tup, i, v):
    return tup[:i] + (v,) + tup[i + 1:]


def decode_action(cp: CompiledProgram, code) -> Action:
    kind = code[0]
    t = cp.names[code[1]]
    if kind == "store":
        return Action(t, STORE, addr=code[2], value=code[3])
    if kind == "load":
        return Action(t, LOAD, addr=code[2], value=code[3])
    if kind == "fence":
        return Action(t, FENCE, addrs=code[2])
    if kind == "issue":
        return Action(t, ISSUE)
    if kind == "local":
        return Action(t, LOCAL)
    if kind == "scfence":
        return Action(t, SCFENCE)
    raise ValueError(f"unknown action code {code!r}")


def record(cp: CompiledProgram, codes, actions: list, issue_of: list) -> None:
    """Append decoded actions for one transition, tracking issue pairing."""
    for code in codes:
        idx = len(actions)
        actions.append(decode_action(cp, code))
        if code[0] in ("store", "fence"):
            issue_of.append(code[-1])
        else:
            issue_of.append(None)


# ---------------------------------------------------------------------------
# Public state and transition API
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MachineState:
    """Program counters, valuation and buffer content; an immutable value.

    Equality and hashing ignore internal pairing tags: two states reached by
    different schedules compare equal when pc, valuation and buffers agree.
    """

    cp: CompiledProgram = field(repr=False)
    cstate: tuple = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, MachineState):
            return NotImplemented
        return (self.cp.program == other.cp.program
                and strip_tags(self.cstate) == strip_tags(other.cstate))

    def __hash__(self):
        return hash(strip_tags(self.cstate))

    @property
    def pc(self) -> dict[str, str]:
        return dict(zip(self.cp.names, self.cstate[0]))

    @property
    def val(self) -> dict:
        """Valuation: int addresses and (thread, register) pairs as keys."""
        out: dict = {}
        _, regs, mem, _, _ = self.cstate
        for a, v in enumerate(mem):
            out[a] = v
        for t, name in enumerate(self.cp.names):
            for r, slot in self.cp.slots[t].items():
                out[(name, r)] = regs[t][slot]
        return out

    def buf1(self, thread: str, addr: int) -> tuple[int, ...]:
        t = self.cp.names.index(thread)
        return tuple(v for v, _ in _b1_entries(self.cstate[3][t], addr))

    def buf2(self, thread: str):
        t = self.cp.names.index(thread)
        out = []
        for e in self.cstate[4][t]:
            if e[0] == "st":
                out.append(PendingStore(addr=e[1], value=e[2]))
            else:
                out.append(PendingFence(addrs=e[1]))
        return tuple(out)

    @property
    def buffers_empty(self) -> bool:
        return buffers_empty(self.cstate)

    def describe(self) -> str:
        parts = [f"pc={self.pc}"]
        mem = {a: v for a, v in enumerate(self.cstate[2]) if v}
        parts.append(f"mem={mem}")
        for t, name in enumerate(self.cp.names):
            regs = {r: self.cstate[1][t][s] for r, s in self.cp.slots[t].items()}
            if regs:
                parts.append(f"{name}.regs={regs}")
            for a, es in self.cstate[3][t]:
                parts.append(f"{name}.buf[{a}]={[v for v, _ in es]}")
            if self.cstate[4][t]:
                parts.append(f"{name}.queue={[e[:-1] for e in self.cstate[4][t]]}")
        return " ".join(parts)


@dataclass(frozen=True)
class Transition:
    rule: str
    actions: tuple[Action, ...]
    successor: MachineState

    @property
    def is_internal(self) -> bool:
        return not self.actions

    def __str__(self) -> str:
        if self.is_internal:
            return f"<{self.rule}>"
        return f"<{self.rule}: {' . '.join(map(str, self.actions))}>"


def _require_valid(program: Program) -> None:
    diags = validate(program)
    if diags:
        raise InvalidProgram("; ".join(d.message for d in diags))


def initial_state(program: Program) -> MachineState:
    """Initial state: init labels, everything 0, all buffers empty."""
    _require_valid(program)
    cp = compiled(program)
    return MachineState(cp, initial_cstate(cp))


def enabled_transitions(
    program: Program, state: MachineState, buffer_bound: int = DEFAULT_BUFFER_BOUND
) -> list[Transition]:
    """All transitions enabled in ``state``, in deterministic order.

    An empty list means termination or deadlock. Internal advance steps are
    exposed as transitions with no actions.
    """
    cp = compiled(program)
    out = []
    for rule, codes, nst in successors(cp, state.cstate, buffer_bound, 0):
        acts = tuple(decode_action(cp, c) for c in codes)
        out.append(Transition(rule, acts, MachineState(cp, nst)))
    return out


def sc_enabled_transitions(program: Program, state: MachineState) -> list[Transition]:
    """Transitions of the SC restriction; every exposed state has empty buffers."""
    cp = compiled(program)
    out = []
    for rule, codes, nst in sc_successors(cp, state.cstate, 0):
        acts = tuple(decode_action(cp, c) for c in codes)
        out.append(Transition(rule, acts, MachineState(cp, nst)))
    return out


def apply(program: Program, state: MachineState, choice: Transition,
          buffer_bound: int = DEFAULT_BUFFER_BOUND) -> MachineState:
    """Apply a transition previously obtained from enabled_transitions."""
    if choice.is_internal:
        candidates = enabled_transitions(program, state, buffer_bound)
    else:
        sc_like = len(choice.actions) > 1
        candidates = (sc_enabled_transitions(program, state) if sc_like
                      else enabled_transitions(program, state, buffer_bound))
    for tr in candidates:
        if tr.rule == choice.rule and tr.actions == choice.actions \
                and tr.successor == choice.successor:
            return tr.successor
    raise InvalidChoice(f"transition {choice} is not enabled")


@dataclass(frozen=True)
class StuckReport:
    """A schedule index had no matching enabled transition."""

    prefix: Computation
    state: MachineState
    index: int
    reason: str

    def __str__(self) -> str:
        return f"stuck at schedule index {self.index}: {self.reason}"


def explain_blocked(program: Program, state: MachineState,
                    buffer_bound: int = DEFAULT_BUFFER_BOUND) -> list[str]:
    """Why each instruction at the current labels is not enabled (for reports)."""
    cp = compiled(program)
    pcs, regs, mem, buf1, buf2 = state.cstate
    reasons = []
    for t in range(cp.nthreads):
        name = cp.names[t]
        insts = cp.code[t].get(pcs[t], ())
        if not insts:
            reasons.append(f"{name}: label {pcs[t]!r} is terminal (thread completed)")
            continue
        rt = regs[t]
        for ci in insts:
            what = format_instruction(ci.src.instruction)
            if ci.kind == "assert" and ci.val_fn(rt) == 0:
                reasons.append(f"{name}: '{what}' blocked, expression evaluates to 0")
            elif ci.kind == "scfence" and (buf1[t] or buf2[t]):
                reasons.append(f"{name}: '{what}' blocked, buffers not empty")
            elif ci.kind == "fence":
                addrs = tuple(f(rt) for f in ci.arg_fns)
                busy = [a for a in addrs if _b1_entries(buf1[t], a)]
                if busy:
                    reasons.append(
                        f"{name}: '{what}' blocked, per-address buffer not empty for {busy}")
                elif len(buf2[t]) >= buffer_bound:
                    reasons.append(f"{name}: '{what}' blocked, queue at bound {buffer_bound}")
            elif ci.kind == "store":
                a = ci.addr_fn(rt)
                if len(_b1_entries(buf1[t], a)) >= buffer_bound:
                    reasons.append(
                        f"{name}: '{what}' blocked, buffer for address {a} at bound {buffer_bound}")
    return reasons


def run(program: Program, schedule: list[int], sc: bool = False,
        buffer_bound: int = DEFAULT_BUFFER_BOUND):
    """Replay a schedule of choice indices; internal advances are taken but
    not recorded. Returns a Computation, or a StuckReport at the first index
    with no matching enabled transition."""
    comp, state, stuck = replay(program, schedule, sc=sc, buffer_bound=buffer_bound)
    if stuck is not None:
        return stuck
    return comp


def replay(program: Program, schedule: list[int], sc: bool = False,
           buffer_bound: int = DEFAULT_BUFFER_BOUND):
    """Like run, but always returns (computation, final_state, stuck_or_none)."""
    _require_valid(program)
    cp = compiled(program)
    cstate = initial_cstate(cp)
    actions: list[Action] = []
    issue_of: list[Optional[int]] = []
    for k, idx in enumerate(schedule):
        if sc:
            succs = sc_successors(cp, cstate, len(actions))
        else:
            succs = successors(cp, cstate, buffer_bound, len(actions))
        if not 0 <= idx < len(succs):
            prefix = Computation(tuple(actions), tuple(issue_of))
            state = MachineState(cp, cstate)
            why = explain_blocked(program, state, buffer_bound)
            reason = f"choice {idx} out of range ({len(succs)} enabled)"
            if why:
                reason += "; " + "; ".join(why)
            return prefix, state, StuckReport(prefix, state, k, reason)
        _, codes, cstate = succs[idx]
        record(cp, codes, actions, issue_of)
    comp = Computation(tuple(actions), tuple(issue_of))
    return comp, MachineState(cp, cstate), None
