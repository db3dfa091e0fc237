"""AST, parser, validator and pretty-printer for the assembly-like input language.

A program is a set of named threads over a shared memory. Addresses and data
values are drawn from the same finite domain 0..domain_size-1, with 0 the
initialization value. Thread code is a set of labelled instructions
``l1: inst; goto l2;`` where several instructions may share a label
(nondeterministic choice). A label with no instructions is terminal and means
thread completion.

Expressions are closed terms over registers and integer constants with
wrap-around arithmetic modulo domain_size; comparisons yield 1/0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

BINARY_OPS = ("+", "-", "*", "=", "!=", "<", "<=")
_CMP_OPS = ("=", "!=", "<", "<=")


@dataclass(frozen=True)
class Expr:
    """Base class for expression nodes."""

    def registers(self) -> frozenset[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: int

    def registers(self) -> frozenset[str]:
        return frozenset()


@dataclass(frozen=True)
class Reg(Expr):
    name: str

    def registers(self) -> frozenset[str]:
        return frozenset((self.name,))


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def registers(self) -> frozenset[str]:
        return self.left.registers() | self.right.registers()


@dataclass(frozen=True)
class Not(Expr):
    operand: Expr

    def registers(self) -> frozenset[str]:
        return self.operand.registers()


def eval_expr(expr: Expr, regs, domain_size: int) -> int:
    """Evaluate ``expr`` under the register valuation ``regs`` (a mapping).

    Total: arithmetic wraps modulo domain_size, comparisons yield 1/0.
    """
    if isinstance(expr, Const):
        return expr.value % domain_size
    if isinstance(expr, Reg):
        return regs[expr.name] % domain_size
    if isinstance(expr, Not):
        return 1 if eval_expr(expr.operand, regs, domain_size) == 0 else 0
    if isinstance(expr, BinOp):
        a = eval_expr(expr.left, regs, domain_size)
        b = eval_expr(expr.right, regs, domain_size)
        op = expr.op
        if op == "+":
            return (a + b) % domain_size
        if op == "-":
            return (a - b) % domain_size
        if op == "*":
            return (a * b) % domain_size
        if op == "=":
            return 1 if a == b else 0
        if op == "!=":
            return 1 if a != b else 0
        if op == "<":
            return 1 if a < b else 0
        if op == "<=":
            return 1 if a <= b else 0
    raise TypeError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# Instructions and program structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Instruction:
    """Base class for instructions."""

    def registers(self) -> frozenset[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Load(Instruction):
    dest: str
    addr: Expr

    def registers(self) -> frozenset[str]:
        return self.addr.registers() | {self.dest}


@dataclass(frozen=True)
class Store(Instruction):
    addr: Expr
    value: Expr

    def registers(self) -> frozenset[str]:
        return self.addr.registers() | self.value.registers()


@dataclass(frozen=True)
class LocalAssign(Instruction):
    dest: str
    expr: Expr

    def registers(self) -> frozenset[str]:
        return self.expr.registers() | {self.dest}


@dataclass(frozen=True)
class Assert(Instruction):
    expr: Expr

    def registers(self) -> frozenset[str]:
        return self.expr.registers()


@dataclass(frozen=True)
class ScFence(Instruction):
    def registers(self) -> frozenset[str]:
        return frozenset()


@dataclass(frozen=True)
class Fence(Instruction):
    addrs: tuple[Expr, ...]

    def registers(self) -> frozenset[str]:
        out: frozenset[str] = frozenset()
        for a in self.addrs:
            out |= a.registers()
        return out


@dataclass(frozen=True)
class LabeledInstruction:
    label: str
    instruction: Instruction
    next: str


@dataclass(frozen=True)
class Thread:
    name: str
    registers: tuple[str, ...]
    init_label: str
    instructions: tuple[LabeledInstruction, ...]

    def labels(self) -> frozenset[str]:
        """Labels that carry at least one instruction."""
        return frozenset(li.label for li in self.instructions)


@dataclass(frozen=True)
class Program:
    name: str
    threads: tuple[Thread, ...]
    domain_size: int

    def thread(self, name: str) -> Thread:
        for t in self.threads:
            if t.name == name:
                return t
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    thread: str | None
    label: str | None
    rule: str
    message: str

    def to_json(self) -> dict:
        return {
            "thread": self.thread,
            "label": self.label,
            "rule": self.rule,
            "message": self.message,
        }


def validate(program: Program) -> list[Diagnostic]:
    """Check program invariants; an empty list means the program is well formed.

    Undefined goto targets are terminal labels (thread completion) and are
    not diagnosed.
    """
    diags: list[Diagnostic] = []
    if program.domain_size < 1:
        diags.append(
            Diagnostic(None, None, "domain-size", "domain size must be at least 1")
        )
    seen_threads: set[str] = set()
    for t in program.threads:
        if t.name in seen_threads:
            diags.append(
                Diagnostic(t.name, None, "duplicate-thread", f"thread {t.name!r} declared twice")
            )
        seen_threads.add(t.name)
        declared = set(t.registers)
        dup_regs = [r for i, r in enumerate(t.registers) if r in t.registers[:i]]
        for r in dup_regs:
            diags.append(
                Diagnostic(t.name, None, "duplicate-register", f"register {r!r} declared twice")
            )
        if t.instructions and t.init_label not in t.labels():
            diags.append(
                Diagnostic(
                    t.name,
                    t.init_label,
                    "undefined-init",
                    f"init label {t.init_label!r} has no instruction",
                )
            )
        for li in t.instructions:
            for r in sorted(li.instruction.registers()):
                if r not in declared:
                    diags.append(
                        Diagnostic(
                            t.name,
                            li.label,
                            "undeclared-register",
                            f"register {r!r} not declared by thread {t.name!r}",
                        )
                    )
            if isinstance(li.instruction, Fence) and not li.instruction.addrs:
                diags.append(
                    Diagnostic(t.name, li.label, "empty-fence", "fence needs at least one address")
                )
    return diags


# ---------------------------------------------------------------------------
# Tokenizer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "program", "domain", "thread", "regs", "init", "begin", "end",
    "goto", "mem", "assert", "scfence", "fence",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct><-|<=|!=|[<=+\-*!:;,()\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int" | "ident" | keyword | punctuation | "eof"
    text: str
    line: int
    col: int


class ParseError(Exception):
    """Malformed input, with position and the set of tokens that were expected."""

    def __init__(self, message: str, line: int, col: int, expected: tuple[str, ...] = ()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        where = f"line {line}, column {col}"
        exp = f" (expected {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}: {message}{exp}")


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(value)
        else:
            tok_kind = kind
            if kind == "ident" and value in KEYWORDS:
                tok_kind = value
            elif kind == "punct":
                tok_kind = value
            tokens.append(Token(tok_kind, value, line, col))
            col += len(value)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent)
# ---------------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    def take(self, kind: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(
                f"unexpected {tok.kind!r}" if tok.kind != "eof" else "unexpected end of input",
                tok.line,
                tok.col,
                expected=(kind,),
            )
        self.pos += 1
        return tok

    def ident(self) -> str:
        return self.take("ident").text

    # program := "program" ident ["domain" int] thread*
    def program(self) -> Program:
        self.take("program")
        name = self.ident()
        domain = 2
        if self.at("domain"):
            self.take("domain")
            tok = self.take("int")
            domain = int(tok.text)
            if domain < 1:
                raise ParseError("domain size must be positive", tok.line, tok.col)
        threads = []
        while self.at("thread"):
            threads.append(self.thread())
        self.take("eof")
        return Program(name=name, threads=tuple(threads), domain_size=domain)

    # thread := "thread" ident "regs" ident* "init" ident "begin" linst* "end"
    def thread(self) -> Thread:
        self.take("thread")
        name = self.ident()
        self.take("regs")
        regs = []
        while self.at("ident"):
            regs.append(self.ident())
        self.take("init")
        init = self.ident()
        self.take("begin")
        insts = []
        while not self.at("end"):
            insts.append(self.labeled_instruction())
        self.take("end")
        return Thread(
            name=name, registers=tuple(regs), init_label=init, instructions=tuple(insts)
        )

    # linst := ident ":" inst ";" "goto" ident ";"
    def labeled_instruction(self) -> LabeledInstruction:
        label = self.ident()
        self.take(":")
        inst = self.instruction()
        self.take(";")
        self.take("goto")
        nxt = self.ident()
        self.take(";")
        return LabeledInstruction(label=label, instruction=inst, next=nxt)

    def instruction(self) -> Instruction:
        tok = self.peek()
        if tok.kind == "assert":
            self.take("assert")
            return Assert(self.expr())
        if tok.kind == "scfence":
            self.take("scfence")
            return ScFence()
        if tok.kind == "fence":
            self.take("fence")
            addrs = []
            if not self.at(";"):
                addrs.append(self.expr())
                while self.at(","):
                    self.take(",")
                    addrs.append(self.expr())
            return Fence(addrs=tuple(addrs))
        if tok.kind == "mem":
            # store: mem[e1] <- e2
            self.take("mem")
            self.take("[")
            addr = self.expr()
            self.take("]")
            self.take("<-")
            value = self.expr()
            return Store(addr=addr, value=value)
        if tok.kind == "ident":
            # load (r <- mem[e]) or local assignment (r <- e)
            dest = self.ident()
            self.take("<-")
            if self.at("mem"):
                self.take("mem")
                self.take("[")
                addr = self.expr()
                self.take("]")
                return Load(dest=dest, addr=addr)
            return LocalAssign(dest=dest, expr=self.expr())
        raise ParseError(
            f"unexpected {tok.kind!r}",
            tok.line,
            tok.col,
            expected=("ident", "mem", "assert", "scfence", "fence"),
        )

    # expr  := sum (cmp-op sum)?
    # sum   := prod (("+"|"-") prod)*
    # prod  := atom ("*" atom)*
    # atom  := int | ident | "(" expr ")" | "!" atom
    def expr(self) -> Expr:
        left = self.sum()
        tok = self.peek()
        if tok.kind in _CMP_OPS:
            self.take(tok.kind)
            right = self.sum()
            return BinOp(op=tok.kind, left=left, right=right)
        return left

    def sum(self) -> Expr:
        node = self.prod()
        while self.peek().kind in ("+", "-"):
            op = self.take(self.peek().kind).kind
            node = BinOp(op=op, left=node, right=self.prod())
        return node

    def prod(self) -> Expr:
        node = self.atom()
        while self.at("*"):
            self.take("*")
            node = BinOp(op="*", left=node, right=self.atom())
        return node

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.take("int")
            return Const(int(tok.text))
        if tok.kind == "ident":
            return Reg(self.ident())
        if tok.kind == "(":
            self.take("(")
            node = self.expr()
            self.take(")")
            return node
        if tok.kind == "!":
            self.take("!")
            return Not(self.atom())
        raise ParseError(
            f"unexpected {tok.kind!r}",
            tok.line,
            tok.col,
            expected=("int", "ident", "(", "!"),
        )


def parse_program(text: str) -> Program:
    """Parse source text into a Program. Raises ParseError on malformed input."""
    return _Parser(_tokenize(text)).program()


# ---------------------------------------------------------------------------
# Pretty-printer
# ---------------------------------------------------------------------------

_PREC = {"=": 1, "!=": 1, "<": 1, "<=": 1, "+": 2, "-": 2, "*": 3}


def format_expr(expr: Expr, parent_prec: int = 0) -> str:
    if isinstance(expr, Const):
        return str(expr.value)
    if isinstance(expr, Reg):
        return expr.name
    if isinstance(expr, Not):
        return "!" + format_expr(expr.operand, 4)
    if isinstance(expr, BinOp):
        prec = _PREC[expr.op]
        # left-associative chains reprint without parens; right operands at
        # equal precedence keep them so the tree round-trips; comparisons are
        # non-associative, so a comparison operand always keeps its parens
        left = format_expr(expr.left, prec if expr.op in _CMP_OPS else prec - 1)
        right = format_expr(expr.right, prec)
        s = f"{left} {expr.op} {right}"
        return f"({s})" if prec <= parent_prec else s
    raise TypeError(f"not an expression node: {expr!r}")


def format_instruction(inst: Instruction) -> str:
    if isinstance(inst, Load):
        return f"{inst.dest} <- mem[{format_expr(inst.addr)}]"
    if isinstance(inst, Store):
        return f"mem[{format_expr(inst.addr)}] <- {format_expr(inst.value)}"
    if isinstance(inst, LocalAssign):
        return f"{inst.dest} <- {format_expr(inst.expr)}"
    if isinstance(inst, Assert):
        return f"assert {format_expr(inst.expr)}"
    if isinstance(inst, ScFence):
        return "scfence"
    if isinstance(inst, Fence):
        return "fence " + ", ".join(format_expr(a) for a in inst.addrs)
    raise TypeError(f"not an instruction: {inst!r}")


def pretty_print(program: Program) -> str:
    """Render a Program as source text; parse_program(pretty_print(p)) == p."""
    lines = [f"program {program.name} domain {program.domain_size}"]
    for t in program.threads:
        lines.append("")
        lines.append(f"thread {t.name}")
        lines.append("  regs " + " ".join(t.registers) if t.registers else "  regs")
        lines.append(f"  init {t.init_label}")
        lines.append("  begin")
        for li in t.instructions:
            lines.append(f"    {li.label}: {format_instruction(li.instruction)}; goto {li.next};")
        lines.append("  end")
    return "\n".join(lines) + "\n"
