import random

import pytest

from rmmcheck import (
    Assert,
    BinOp,
    Const,
    Fence,
    LabeledInstruction,
    Load,
    LocalAssign,
    Not,
    ParseError,
    Program,
    Reg,
    ScFence,
    Store,
    Thread,
    parse_program,
    pretty_print,
    validate,
)
from rmmcheck.syntax import eval_expr


def test_parse_message_passing(mp):
    assert [t.name for t in mp.threads] == ["t_w", "t_r"]
    assert sum(len(t.instructions) for t in mp.threads) == 6
    assert mp.domain_size == 4
    writer = mp.thread("t_w")
    assert writer.registers == ()
    assert isinstance(writer.instructions[0].instruction, Store)
    reader = mp.thread("t_r")
    assert isinstance(reader.instructions[0].instruction, Load)
    assert isinstance(reader.instructions[1].instruction, Assert)


def test_parse_empty_thread_body():
    p = parse_program("program empty domain 2\nthread t\n regs\n init l\n begin end\n")
    assert len(p.threads[0].instructions) == 0
    assert validate(p) == []


def test_undeclared_register_is_a_validation_diagnostic():
    src = """
program bad domain 2
thread t
  regs
  init l0
  begin
    l0: r <- mem[0]; goto l1;
  end
"""
    p = parse_program(src)  # parses fine
    diags = validate(p)
    assert len(diags) == 1
    assert diags[0].rule == "undeclared-register"
    assert diags[0].thread == "t" and diags[0].label == "l0"


def test_validate_message_passing_clean(mp):
    assert validate(mp) == []


def test_empty_fence_diagnostic():
    p = Program(
        name="f",
        threads=(Thread("t", (), "l0",
                        (LabeledInstruction("l0", Fence(()), "l1"),)),),
        domain_size=2,
    )
    diags = validate(p)
    assert [d.rule for d in diags] == ["empty-fence"]


def test_duplicate_thread_diagnostic(mp):
    p = Program(name="dup", threads=mp.threads + (mp.threads[0],), domain_size=4)
    assert "duplicate-thread" in [d.rule for d in validate(p)]


def test_diagnostic_json_shape(mp):
    p = Program(name="dup", threads=mp.threads + (mp.threads[0],), domain_size=4)
    j = validate(p)[0].to_json()
    assert set(j) == {"thread", "label", "rule", "message"}


def test_parse_error_position_and_expected():
    with pytest.raises(ParseError) as e:
        parse_program("program p domain 2\nthread t\n regs\n init l\n begin\n  l0 mem[0] <- 1; goto l1;\n end")
    assert e.value.line == 6
    assert ":" in e.value.expected


def test_roundtrip_message_passing(mp):
    assert parse_program(pretty_print(mp)) == mp


def test_single_instruction_thread_prints_single_body_line():
    src = "program one domain 2\nthread t\n regs\n init l0\n begin\n l0: scfence; goto l1;\n end\n"
    p = parse_program(src)
    body = [ln for ln in pretty_print(p).splitlines() if ": " in ln]
    assert len(body) == 1
    assert parse_program(pretty_print(p)) == p


def test_roundtrip_instrumented_program(mp):
    from rmmcheck import Attack, instrument_program

    ip = instrument_program(mp, Attack("t_w", 0, 2), "locality")
    text = pretty_print(ip.program)
    again = parse_program(text)
    assert again == ip.program
    assert validate(again) == []


def _random_expr(rng, regs, depth=0):
    kind = rng.randrange(6 if depth < 3 else 2)
    if kind == 0 or not regs:
        return Const(rng.randrange(8))
    if kind == 1:
        return Reg(rng.choice(regs))
    if kind == 2:
        return Not(_random_expr(rng, regs, depth + 1))
    op = rng.choice(["+", "-", "*", "=", "!=", "<", "<="])
    return BinOp(op, _random_expr(rng, regs, depth + 1),
                 _random_expr(rng, regs, depth + 1))


def _random_program(rng):
    threads = []
    for t in range(rng.randrange(1, 4)):
        regs = tuple(f"r{i}" for i in range(rng.randrange(0, 3)))
        labels = [f"l{t}_{i}" for i in range(rng.randrange(1, 6))]
        insts = []
        for lab in labels:
            kind = rng.randrange(6)
            if kind == 0 and regs:
                inst = Load(rng.choice(regs), _random_expr(rng, list(regs)))
            elif kind == 1:
                inst = Store(_random_expr(rng, list(regs)), _random_expr(rng, list(regs)))
            elif kind == 2 and regs:
                inst = LocalAssign(rng.choice(regs), _random_expr(rng, list(regs)))
            elif kind == 3:
                inst = Assert(_random_expr(rng, list(regs)))
            elif kind == 4:
                inst = ScFence()
            else:
                inst = Fence(tuple(_random_expr(rng, list(regs))
                                   for _ in range(rng.randrange(1, 3))))
            insts.append(LabeledInstruction(lab, inst, rng.choice(labels + ["fin"])))
        threads.append(Thread(f"t{t}", regs, labels[0], tuple(insts)))
    return Program("fuzz", tuple(threads), rng.randrange(2, 9))


def test_roundtrip_random_programs():
    rng = random.Random(1234)
    for _ in range(150):
        p = _random_program(rng)
        assert parse_program(pretty_print(p)) == p


def test_validation_soundness_expressions_total():
    # a clean program's expressions evaluate inside the domain under any
    # register valuation
    rng = random.Random(99)
    checked = 0
    for _ in range(80):
        p = _random_program(rng)
        if validate(p):
            continue
        for t in p.threads:
            for li in t.instructions:
                exprs = []
                inst = li.instruction
                if isinstance(inst, Load):
                    exprs.append(inst.addr)
                elif isinstance(inst, Store):
                    exprs += [inst.addr, inst.value]
                elif isinstance(inst, LocalAssign):
                    exprs.append(inst.expr)
                elif isinstance(inst, Assert):
                    exprs.append(inst.expr)
                elif isinstance(inst, Fence):
                    exprs += list(inst.addrs)
                for e in exprs:
                    for _ in range(5):
                        regs = {r: rng.randrange(p.domain_size) for r in t.registers}
                        v = eval_expr(e, regs, p.domain_size)
                        assert 0 <= v < p.domain_size
                        checked += 1
    assert checked > 100
