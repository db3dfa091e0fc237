"""Reduction of robustness to SC-reachability by source-to-source rewriting.

An attack picks an attacker thread, one of its store instructions to delay,
and a store or load instruction to act as the attacker's last own action.
The rewritten program simulates the delayed computation under SC: the
attacker keeps the delayed value in auxiliary state, helpers run normally
until a global flag is raised and afterwards only take steps whose address
already carries a high enough access level (so every step extends a
happens-before chain from the attacker's last action). A helper access to the
delayed address completes the cycle and lets the attacker set the success
flag; the original program is robust iff no attack reaches it.

Two attacker encodings: the general one keeps one buffered value per address
in auxiliary memory (works with fences); the optimized one, for fence-free
programs, keeps the single delayed value in a register.

Auxiliary address layout over an extended domain: for base size N, address
x's buffered value lives at N+x (shifted by +1 so that 0 means absent),
its access level at 2N+x, the chain flag at 3N and the success flag at 3N+1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .oracle import PreconditionViolated, fence_free
from .syntax import (
    Assert,
    BinOp,
    Const,
    Expr,
    Fence,
    Instruction,
    LabeledInstruction,
    Load,
    LocalAssign,
    Program,
    Reg,
    ScFence,
    Store,
    Thread,
    validate,
)

SIZE_FACTOR = 6
SIZE_SLACK = 40

LEVEL_NONE = 0
LEVEL_LOAD = 1
LEVEL_STORE = 2


class InvalidAttack(Exception):
    pass


class InstrumentationError(Exception):
    pass


@dataclass(frozen=True)
class Attack:
    """(attacker thread, store instruction to delay, last own instruction).

    Instructions are identified by their index in the thread's instruction
    list; the last instruction must be a store or a load.
    """

    attacker: str
    stinst: int
    lastinst: int

    def to_json(self) -> dict:
        return {"attacker": self.attacker, "stinst": self.stinst, "lastinst": self.lastinst}


def check_attack(program: Program, attack: Attack) -> tuple[LabeledInstruction, LabeledInstruction]:
    try:
        thread = program.thread(attack.attacker)
    except KeyError:
        raise InvalidAttack(f"no thread named {attack.attacker!r}")
    n = len(thread.instructions)
    if not (0 <= attack.stinst < n and 0 <= attack.lastinst < n):
        raise InvalidAttack(f"instruction index out of range for {attack.attacker!r}")
    st = thread.instructions[attack.stinst]
    last = thread.instructions[attack.lastinst]
    if not isinstance(st.instruction, Store):
        raise InvalidAttack(f"{attack.attacker}:{st.label} is not a store")
    if not isinstance(last.instruction, (Store, Load)):
        raise InvalidAttack(f"{attack.attacker}:{last.label} is not a store or load")
    return st, last


def enumerate_attacks(program: Program) -> list[Attack]:
    """All attack triples: per thread, stores x (stores + loads), in
    instruction order."""
    out = []
    for t in program.threads:
        store_idx = [i for i, li in enumerate(t.instructions)
                     if isinstance(li.instruction, Store)]
        last_idx = [i for i, li in enumerate(t.instructions)
                    if isinstance(li.instruction, (Store, Load))]
        for si in store_idx:
            for li in last_idx:
                out.append(Attack(t.name, si, li))
    return out


# ---------------------------------------------------------------------------
# Extended address space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AddressLayout:
    """Arithmetic mapping of auxiliary addresses over the extended domain."""

    base_size: int

    @property
    def domain_size(self) -> int:
        return 3 * self.base_size + 2

    @property
    def hb(self) -> int:
        return 3 * self.base_size

    @property
    def suc(self) -> int:
        return 3 * self.base_size + 1

    def delayed(self, addr: Expr) -> Expr:
        return _offset(self.base_size, addr, self.base_size)

    def level(self, addr: Expr) -> Expr:
        return _offset(2 * self.base_size, addr, self.base_size)

    def encode_value(self, value: Expr) -> Expr:
        # buffered values are shifted by +1 so that 0 means "no buffered value"
        if isinstance(value, Const):
            return Const(value.value + 1)
        return BinOp("+", value, Const(1))

    def to_json(self) -> dict:
        n = self.base_size
        return {
            "base": [0, n],
            "delayed_value": [n, 2 * n],
            "access_level": [2 * n, 3 * n],
            "hb": self.hb,
            "suc": self.suc,
            "levels": {"none": LEVEL_NONE, "load": LEVEL_LOAD, "store": LEVEL_STORE},
            "domain_size": self.domain_size,
        }


def _offset(base: int, addr: Expr, n: int) -> Expr:
    if isinstance(addr, Const) and 0 <= addr.value < n:
        return Const(base + addr.value)
    return BinOp("+", Const(base), addr)


def uses_delayed_range(program: Program, layout: AddressLayout) -> bool:
    """Whether any address expression targets the buffered-value range."""
    lo, hi = layout.base_size, 2 * layout.base_size

    def hits(e: Expr) -> bool:
        if isinstance(e, Const):
            return lo <= e.value < hi
        if isinstance(e, BinOp) and e.op == "+" and isinstance(e.left, Const):
            return e.left.value == lo
        return False

    for t in program.threads:
        for li in t.instructions:
            inst = li.instruction
            addr_exprs: tuple[Expr, ...] = ()
            if isinstance(inst, Load):
                addr_exprs = (inst.addr,)
            elif isinstance(inst, Store):
                addr_exprs = (inst.addr,)
            elif isinstance(inst, Fence):
                addr_exprs = inst.addrs
            if any(hits(e) for e in addr_exprs):
                return True
    return False


# ---------------------------------------------------------------------------
# Name allocation
# ---------------------------------------------------------------------------


class _Names:
    """Fresh labels and registers that cannot collide with the originals.

    Copies live at ``<prefix>c_<label>``, generated labels at ``<prefix>f<n>``
    and the wait label at ``<prefix>w``; no original label starts with the
    prefix.
    """

    def __init__(self, thread: Thread):
        prefix = "x_"
        names = {li.label for li in thread.instructions}
        names.add(thread.init_label)
        names.update(li.next for li in thread.instructions)
        while any(s.startswith(prefix) for s in names):
            prefix = "x" + prefix
        self.prefix = prefix
        self.counter = 0
        self.wait = prefix + "w"
        self._regs = set(thread.registers)

    def copy(self, label: str) -> str:
        return f"{self.prefix}c_{label}"

    def fresh(self) -> str:
        self.counter += 1
        return f"{self.prefix}f{self.counter}"

    def reg(self, hint: str) -> str:
        name = hint
        while name in self._regs:
            name = "x" + name
        self._regs.add(name)
        return name


def _chain(label: str, names: _Names, steps: list[Instruction], target: str):
    """Emit a straight-line block from ``label`` through fresh labels to
    ``target``."""
    out = []
    cur = label
    for k, inst in enumerate(steps):
        nxt = target if k == len(steps) - 1 else names.fresh()
        out.append(LabeledInstruction(cur, inst, nxt))
        cur = nxt
    return out


# ---------------------------------------------------------------------------
# Attacker translations
# ---------------------------------------------------------------------------


def _wait_block(names: _Names, layout: AddressLayout, aaddr: str, atmp: str):
    # block until some helper raised the access level of the delayed address,
    # then report success
    return _chain(names.wait, names, [
        Load(atmp, layout.level(Reg(aaddr))),
        Assert(BinOp("!=", Reg(atmp), Const(0))),
        Store(Const(layout.suc), Const(1)),
    ], names.fresh())


def instrument_attacker_locality(thread: Thread, attack: Attack,
                                 layout: AddressLayout):
    """Attacker body for the general encoding: buffered values per address.

    Phase 1 is the unchanged original code. At the chosen store the attacker
    may divert into the copy, parking the value at the address's buffered
    slot. In the copy, stores either commit (no pending fence, no buffered
    value at their address) or update the buffered slot; loads prefer the
    buffered slot; a fence either sets the pending-fence flag or asserts all
    its slots empty; an scfence has no translation and blocks. The last
    instruction commits, raises the chain flag, publishes its access level
    and enters the wait block.
    """
    st_li, last_li = _check_fragment(thread, attack)
    names = _Names(thread)
    aaddr = names.reg("aaddr")
    afence = names.reg("afence")
    atmp = names.reg("atmp")
    out: list[LabeledInstruction] = list(thread.instructions)

    st = st_li.instruction
    out += _chain(st_li.label, names, [
        Store(layout.delayed(st.addr), layout.encode_value(st.value)),
        LocalAssign(aaddr, st.addr),
    ], names.copy(st_li.next))

    last = last_li.instruction
    if isinstance(last, Load):
        out += _chain(names.copy(last_li.label), names, [
            Load(atmp, layout.delayed(last.addr)),
            Assert(BinOp("=", Reg(atmp), Const(0))),
            Store(Const(layout.hb), Const(1)),
            Store(layout.level(last.addr), Const(LEVEL_LOAD)),
        ], names.wait)
    else:
        out += _chain(names.copy(last_li.label), names, [
            Assert(BinOp("=", Reg(afence), Const(0))),
            Load(atmp, layout.delayed(last.addr)),
            Assert(BinOp("=", Reg(atmp), Const(0))),
            Store(last.addr, last.value),
            Store(Const(layout.hb), Const(1)),
            Store(layout.level(last.addr), Const(LEVEL_STORE)),
        ], names.wait)

    for li in thread.instructions:
        inst = li.instruction
        src, dst = names.copy(li.label), names.copy(li.next)
        if isinstance(inst, Store):
            out += _chain(src, names, [
                Assert(BinOp("=", Reg(afence), Const(0))),
                Load(atmp, layout.delayed(inst.addr)),
                Assert(BinOp("=", Reg(atmp), Const(0))),
                Store(inst.addr, inst.value),
            ], dst)
            out += _chain(src, names, [
                Store(layout.delayed(inst.addr), layout.encode_value(inst.value)),
            ], dst)
        elif isinstance(inst, Load):
            out += _chain(src, names, [
                Load(atmp, layout.delayed(inst.addr)),
                Assert(BinOp("=", Reg(atmp), Const(0))),
                Load(inst.dest, inst.addr),
            ], dst)
            out += _chain(src, names, [
                Load(atmp, layout.delayed(inst.addr)),
                Assert(BinOp("!=", Reg(atmp), Const(0))),
                LocalAssign(inst.dest, BinOp("-", Reg(atmp), Const(1))),
            ], dst)
        elif isinstance(inst, (LocalAssign, Assert)):
            out.append(LabeledInstruction(src, inst, dst))
        elif isinstance(inst, ScFence):
            pass  # no translation: the copy deadlocks at an scfence
        elif isinstance(inst, Fence):
            out += _chain(src, names, [LocalAssign(afence, Const(1))], dst)
            steps: list[Instruction] = []
            for a in inst.addrs:
                steps.append(Load(atmp, layout.delayed(a)))
                steps.append(Assert(BinOp("=", Reg(atmp), Const(0))))
            out += _chain(src, names, steps, dst)
    out += _wait_block(names, layout, aaddr, atmp)
    return out, (aaddr, afence, atmp)


def instrument_attacker_singularity(thread: Thread, attack: Attack,
                                    layout: AddressLayout):
    """Attacker body for the fence-free encoding: one delayed store.

    The delayed value lives in a register; copy stores and the last
    instruction are simply disabled at the delayed address, copy loads of it
    read the register.
    """
    st_li, last_li = _check_fragment(thread, attack)
    names = _Names(thread)
    aaddr = names.reg("aaddr")
    aval = names.reg("aval")
    atmp = names.reg("atmp")
    out: list[LabeledInstruction] = list(thread.instructions)

    st = st_li.instruction
    out += _chain(st_li.label, names, [
        LocalAssign(aval, st.value),
        LocalAssign(aaddr, st.addr),
    ], names.copy(st_li.next))

    last = last_li.instruction
    if isinstance(last, Load):
        out += _chain(names.copy(last_li.label), names, [
            Assert(BinOp("!=", Reg(aaddr), last.addr)),
            Store(Const(layout.hb), Const(1)),
            Store(layout.level(last.addr), Const(LEVEL_LOAD)),
        ], names.wait)
    else:
        out += _chain(names.copy(last_li.label), names, [
            Assert(BinOp("!=", Reg(aaddr), last.addr)),
            Store(last.addr, last.value),
            Store(Const(layout.hb), Const(1)),
            Store(layout.level(last.addr), Const(LEVEL_STORE)),
        ], names.wait)

    for li in thread.instructions:
        inst = li.instruction
        src, dst = names.copy(li.label), names.copy(li.next)
        if isinstance(inst, Store):
            out += _chain(src, names, [
                Assert(BinOp("!=", Reg(aaddr), inst.addr)),
                Store(inst.addr, inst.value),
            ], dst)
        elif isinstance(inst, Load):
            out += _chain(src, names, [
                Assert(BinOp("!=", Reg(aaddr), inst.addr)),
                Load(inst.dest, inst.addr),
            ], dst)
            out += _chain(src, names, [
                Assert(BinOp("=", Reg(aaddr), inst.addr)),
                LocalAssign(inst.dest, Reg(aval)),
            ], dst)
        elif isinstance(inst, (LocalAssign, Assert)):
            out.append(LabeledInstruction(src, inst, dst))
        elif isinstance(inst, ScFence):
            pass
        elif isinstance(inst, Fence):
            raise PreconditionViolated("singularity instrumentation needs a fence-free program")
    out += _wait_block(names, layout, aaddr, atmp)
    return out, (aaddr, aval, atmp)


def _check_fragment(thread: Thread, attack: Attack):
    if attack.attacker != thread.name:
        raise InvalidAttack(f"attack names {attack.attacker!r}, thread is {thread.name!r}")
    n = len(thread.instructions)
    if not (0 <= attack.stinst < n and 0 <= attack.lastinst < n):
        raise InvalidAttack("instruction index out of range")
    st_li = thread.instructions[attack.stinst]
    last_li = thread.instructions[attack.lastinst]
    if not isinstance(st_li.instruction, Store):
        raise InvalidAttack("the delayed instruction must be a store")
    if not isinstance(last_li.instruction, (Store, Load)):
        raise InvalidAttack("the last instruction must be a store or a load")
    return st_li, last_li


# ---------------------------------------------------------------------------
# Helper translation
# ---------------------------------------------------------------------------


def instrument_helper(thread: Thread, layout: AddressLayout) -> Thread:
    """Helpers run their original code while the chain flag is down; after it
    is raised they may only continue in a copy entered at a load whose address
    has store level or a store whose address has at least load level, and the
    copy maintains the access levels (store sets store level, load raises to
    at least load level)."""
    names = _Names(thread)
    haddr = names.reg("haddr")
    htmp = names.reg("htmp")
    out: list[LabeledInstruction] = []
    for li in thread.instructions:
        inst = li.instruction
        out += _chain(li.label, names, [
            Load(htmp, Const(layout.hb)),
            Assert(BinOp("=", Reg(htmp), Const(0))),
            inst,
        ], li.next)
    for li in thread.instructions:
        inst = li.instruction
        if isinstance(inst, Load):
            out += _chain(li.label, names, [
                Load(htmp, layout.level(inst.addr)),
                Assert(BinOp("=", Reg(htmp), Const(LEVEL_STORE))),
                Load(inst.dest, inst.addr),
            ], names.copy(li.next))
        elif isinstance(inst, Store):
            out += _chain(li.label, names, [
                Load(htmp, layout.level(inst.addr)),
                Assert(BinOp("<=", Const(LEVEL_LOAD), Reg(htmp))),
                Store(inst.addr, inst.value),
                Store(layout.level(inst.addr), Const(LEVEL_STORE)),
            ], names.copy(li.next))
    for li in thread.instructions:
        inst = li.instruction
        src, dst = names.copy(li.label), names.copy(li.next)
        if isinstance(inst, Store):
            out += _chain(src, names, [
                Store(inst.addr, inst.value),
                Store(layout.level(inst.addr), Const(LEVEL_STORE)),
            ], dst)
        elif isinstance(inst, Load):
            # cache the address: the load may overwrite a register it uses
            out += _chain(src, names, [
                LocalAssign(haddr, inst.addr),
                Load(inst.dest, Reg(haddr)),
                Load(htmp, layout.level(Reg(haddr))),
                Store(layout.level(Reg(haddr)),
                      BinOp("+", Reg(htmp),
                            BinOp("=", Reg(htmp), Const(0)))),
            ], dst)
        else:
            out.append(LabeledInstruction(src, inst, dst))
    return Thread(
        name=thread.name,
        registers=thread.registers + (haddr, htmp),
        init_label=thread.init_label,
        instructions=tuple(out),
    )


# ---------------------------------------------------------------------------
# Whole-program instrumentation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InstrumentedProgram:
    program: Program
    attack: Attack
    mode: str
    layout: AddressLayout
    source_instructions: int
    instrumented_instructions: int

    @property
    def size_ratio(self) -> float:
        return self.instrumented_instructions / max(1, self.source_instructions)

    def manifest(self) -> dict:
        return {
            "attack": self.attack.to_json(),
            "mode": self.mode,
            "address_map": self.layout.to_json(),
            "size_ratio": round(self.size_ratio, 3),
            "source_instructions": self.source_instructions,
            "instrumented_instructions": self.instrumented_instructions,
        }


def instrument_program(program: Program, attack: Attack, mode: str) -> InstrumentedProgram:
    """Rewrite the program for one attack; success-flag reachability under SC
    witnesses a feasible attack. mode is "locality" or "singularity"; the
    latter requires a fence-free program."""
    if mode not in ("locality", "singularity"):
        raise ValueError(f"unknown mode {mode!r}")
    diags = validate(program)
    if diags:
        raise InstrumentationError("; ".join(d.message for d in diags))
    check_attack(program, attack)
    if mode == "singularity" and not fence_free(program):
        raise PreconditionViolated("singularity instrumentation needs a fence-free program")
    layout = AddressLayout(program.domain_size)
    threads = []
    for t in program.threads:
        if t.name == attack.attacker:
            if mode == "locality":
                body, extra = instrument_attacker_locality(t, attack, layout)
            else:
                body, extra = instrument_attacker_singularity(t, attack, layout)
            threads.append(Thread(
                name=t.name,
                registers=t.registers + tuple(extra),
                init_label=t.init_label,
                instructions=tuple(body),
            ))
        else:
            threads.append(instrument_helper(t, layout))
    out = Program(
        name=f"{program.name}_a{attack.stinst}_{attack.lastinst}_{mode}",
        threads=tuple(threads),
        domain_size=layout.domain_size,
    )
    diags = validate(out)
    if diags:
        raise InstrumentationError(
            "instrumented program does not validate: "
            + "; ".join(d.message for d in diags)
        )
    source_n = sum(len(t.instructions) for t in program.threads)
    instr_n = sum(len(t.instructions) for t in out.threads)
    if instr_n > SIZE_FACTOR * source_n + SIZE_SLACK:
        raise InstrumentationError(
            f"instrumented size {instr_n} exceeds {SIZE_FACTOR}x{source_n}+{SIZE_SLACK}"
        )
    return InstrumentedProgram(
        program=out,
        attack=attack,
        mode=mode,
        layout=layout,
        source_instructions=source_n,
        instrumented_instructions=instr_n,
    )
