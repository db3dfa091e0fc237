import pytest

from rmmcheck import (
    Action,
    Computation,
    InvalidChoice,
    StuckReport,
    apply,
    enabled_transitions,
    initial_state,
    parse_program,
    run,
    sc_enabled_transitions,
)
from rmmcheck.oracle import ExplorationConfig, enumerate_computations, schedule_realizing
from rmmcheck.semantics import FENCE, ISSUE, LOAD, STORE

D1, D2, FLAG = 1, 2, 3


def tau_prime_actions():
    # issue(d1) issue(d2) st(d2) issue(flag) st(flag) ld(flag) assert ld(d1) st(d1)
    w, r = "t_w", "t_r"
    return [
        Action(w, ISSUE), Action(w, ISSUE), Action(w, STORE, addr=D2, value=1),
        Action(w, ISSUE), Action(w, STORE, addr=FLAG, value=1),
        Action(r, LOAD, addr=FLAG, value=1), Action(r, "local"),
        Action(r, LOAD, addr=D1, value=0), Action(w, STORE, addr=D1, value=1),
    ]


def test_initial_state(mp):
    s = initial_state(mp)
    assert s.pc == {"t_w": "l0", "t_r": "lx"}
    assert all(v == 0 for v in s.val.values())
    assert s.buffers_empty


def test_initial_state_empty_program():
    p = parse_program("program none domain 1\n")
    s = initial_state(p)
    assert s.pc == {}
    assert list(s.val.keys()) == [0]


def test_initial_transitions_exactly_two(mp):
    # writer can only issue its first store; the reader reads the flag from
    # memory (value 0); nothing is buffered, so no internal advance
    ts = enabled_transitions(mp, initial_state(mp))
    assert len(ts) == 2
    assert ts[0].rule == "issue-store"
    assert ts[0].actions == (Action("t_w", ISSUE),)
    assert ts[1].rule == "read-memory"
    assert ts[1].actions == (Action("t_r", LOAD, addr=FLAG, value=0),)
    assert not any(t.is_internal for t in ts)


def test_early_read_after_own_issue():
    src = """
program er domain 3
thread t
  regs r
  init l0
  begin
    l0: mem[1] <- 2; goto l1;
    l1: r <- mem[1]; goto l2;
  end
"""
    p = parse_program(src)
    s = initial_state(p)
    s = apply(p, s, enabled_transitions(p, s)[0])  # issue the store
    loads = [t for t in enabled_transitions(p, s) if t.actions and t.actions[0].kind == LOAD]
    assert loads[0].rule == "early-read-buffer"
    assert loads[0].actions[0].value == 2


def test_fence_not_enabled_with_pending_same_address_store():
    src = """
program f domain 3
thread t
  regs
  init l0
  begin
    l0: mem[1] <- 1; goto l1;
    l1: fence 1; goto l2;
  end
"""
    p = parse_program(src)
    s = initial_state(p)
    s = apply(p, s, enabled_transitions(p, s)[0])  # store 1 sits in its buffer
    assert s.buf1("t", 1) == (1,)
    rules = {t.rule for t in enabled_transitions(p, s)}
    assert "issue-fence" not in rules
    assert "advance" in rules
    # after advancing, the per-address buffer is empty and the fence can issue
    adv = [t for t in enabled_transitions(p, s) if t.is_internal][0]
    s2 = apply(p, s, adv)
    assert "issue-fence" in {t.rule for t in enabled_transitions(p, s2)}


def test_apply_rejects_transitions_from_other_states(mp):
    s = initial_state(mp)
    t = enabled_transitions(mp, s)[0]
    s2 = t.successor
    with pytest.raises(InvalidChoice):
        apply(mp, s2, t)


def test_apply_mirrors_enabled_rows(mp):
    s = initial_state(mp)
    for t in enabled_transitions(mp, s):
        assert apply(mp, s, t) == t.successor


def test_run_realizes_known_computation(mp):
    sched = schedule_realizing(mp, tau_prime_actions(), ExplorationConfig(2, 14))
    assert sched is not None
    comp = run(mp, sched)
    assert isinstance(comp, Computation)
    assert list(comp.actions) == tau_prime_actions()
    assert len(comp) == 9
    # pairing: the last store (d1) pairs with the first issue
    assert comp.issue_of[8] == 0
    assert comp.issue_of[2] == 1 and comp.issue_of[4] == 3


def test_run_empty_schedule(mp):
    comp = run(mp, [])
    assert isinstance(comp, Computation)
    assert comp.actions == ()


def test_run_stuck_reports_position_and_reason():
    src = """
program s domain 2
thread t
  regs
  init l0
  begin
    l0: mem[1] <- 1; goto l1;
    l1: scfence; goto l2;
  end
"""
    p = parse_program(src)
    # issue the store, then ask for a 'scfence' transition that cannot exist
    res = run(p, [0, 5])
    assert isinstance(res, StuckReport)
    assert res.index == 1
    assert "scfence" in res.reason and "buffers not empty" in res.reason
    assert len(res.prefix.actions) == 1


def test_sc_writer_run_is_deterministic_bundles(mp):
    # under the SC restriction the writer alone contributes
    # issue.store(d1) issue.store(d2) issue.store(flag)
    comp = run(mp, [0, 0, 0], sc=True)
    kinds = [(a.thread, a.kind, a.addr) for a in comp.actions]
    assert kinds == [
        ("t_w", ISSUE, None), ("t_w", STORE, D1),
        ("t_w", ISSUE, None), ("t_w", STORE, D2),
        ("t_w", ISSUE, None), ("t_w", STORE, FLAG),
    ]


def test_sc_states_have_empty_buffers(mp):
    s = initial_state(mp)
    frontier = [s]
    seen = 0
    while frontier and seen < 200:
        s = frontier.pop()
        seen += 1
        assert s.buffers_empty
        frontier.extend(t.successor for t in sc_enabled_transitions(mp, s))


def test_sc_reader_never_sees_flag_without_data(mp):
    # exhaustive SC enumeration: flag=1 with d1=0 is unobservable
    for comp in enumerate_computations(mp, ExplorationConfig(3, 24, "sc")):
        saw_flag = False
        for a in comp.actions:
            if a.thread == "t_r" and a.kind == LOAD:
                if a.addr == FLAG and a.value == 1:
                    saw_flag = True
                if a.addr == D1 and saw_flag:
                    assert a.value == 1


def test_per_address_fifo_and_pairing_invariants():
    src = """
program two domain 4
thread t
  regs
  init l0
  begin
    l0: mem[1] <- 1; goto l1;
    l1: mem[1] <- 2; goto l2;
    l2: mem[2] <- 3; goto l3;
  end
thread u
  regs r
  init m0
  begin
    m0: r <- mem[1]; goto m1;
  end
"""
    p = parse_program(src)
    n = 0
    for comp in enumerate_computations(p, ExplorationConfig(3, 12)):
        n += 1
        # same-address stores of one thread commit in issue order
        commits = [(i, a) for i, a in enumerate(comp.actions)
                   if a.kind == STORE and a.thread == "t" and a.addr == 1]
        assert [a.value for _, a in commits] == [1, 2]
        assert comp.issue_of[commits[0][0]] < comp.issue_of[commits[1][0]]
        # pairing is a same-thread bijection
        issues = [i for i, a in enumerate(comp.actions) if a.kind == ISSUE]
        paired = [j for j in comp.issue_of if j is not None]
        assert sorted(paired) == issues
        for i, j in enumerate(comp.issue_of):
            if j is not None:
                assert comp.actions[i].thread == comp.actions[j].thread
    assert n > 5


def test_single_thread_program_appears_sequentially_consistent():
    # load results of a sequential program coincide with its SC results
    src = """
program seq domain 4
thread t
  regs r
  init l0
  begin
    l0: mem[1] <- 2; goto l1;
    l1: r <- mem[1]; goto l2;
    l2: mem[2] <- r; goto l3;
    l3: r <- mem[2]; goto l4;
  end
"""
    p = parse_program(src)

    def load_results(mode):
        out = set()
        for comp in enumerate_computations(p, ExplorationConfig(3, 16, mode)):
            out.add(tuple((a.addr, a.value) for a in comp.actions if a.kind == LOAD))
        return out

    relaxed, sc = load_results("relaxed"), load_results("sc")
    assert relaxed == sc == {((1, 2), (2, 2))}


def test_buffer_bound_zero_behaves_like_sc(mp):
    relaxed = [c.actions for c in enumerate_computations(mp, ExplorationConfig(0, 14))]
    sc = [c.actions for c in enumerate_computations(mp, ExplorationConfig(0, 14, "sc"))]
    assert relaxed == sc


def test_computation_json_shape(mp):
    comp = run(mp, [0, 0, 0], sc=True)
    j = comp.to_json()
    assert len(j["actions"]) == 6
    assert j["issue_index"][1] == 0
    assert j["actions"][1] == {"thread": "t_w", "kind": "store", "addr": 1, "value": 1}
