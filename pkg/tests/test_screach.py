import pytest

from rmmcheck import (
    Attack,
    BudgetExhausted,
    Program,
    ReachLimits,
    ReachQuery,
    check_robustness,
    enumerate_attacks,
    instrument_program,
    parse_program,
    por_reduce,
    reachable,
)
from rmmcheck import semantics as sem
from rmmcheck.oracle import ExplorationConfig, NotFoundWithinBounds, ViolationReport


def test_instrumented_mp_reaches_success(mp):
    ip = instrument_program(mp, Attack("t_w", 0, 2), "singularity")
    res = reachable(ReachQuery(ip.program, ip.layout.suc))
    assert res.reachable
    assert res.witness is not None


def test_instrumented_fenced_mp_never_reaches_success(mp_fenced):
    for attack in enumerate_attacks(mp_fenced):
        ip = instrument_program(mp_fenced, attack, "locality")
        res = reachable(ReachQuery(ip.program, ip.layout.suc))
        assert not res.reachable, f"attack {attack} unexpectedly feasible"


def test_unreachable_goal_visits_every_state(mp):
    # address 0 is never written; the search then visits the full SC space.
    # Count it independently with a plain walk over the SC transitions.
    q = ReachQuery(mp, 0)
    res = reachable(q)
    assert not res.reachable
    cp = sem.compiled(mp)
    from rmmcheck.screach import _canonical

    seen = {_canonical(cp, sem.initial_cstate(cp))}
    todo = [sem.initial_cstate(cp)]
    while todo:
        st = todo.pop()
        for _, _, nst in sem.sc_successors(cp, st, 0):
            k = _canonical(cp, nst)
            if k not in seen:
                seen.add(k)
                todo.append(nst)
    assert res.stats.states_visited == len(seen)


def test_witness_replays_to_goal(mp):
    ip = instrument_program(mp, Attack("t_w", 0, 2), "singularity")
    res = reachable(ReachQuery(ip.program, ip.layout.suc))
    comp, state, stuck = sem.replay(ip.program, res.witness_schedule, sc=True)
    assert stuck is None
    assert state.val[ip.layout.suc] != 0


def test_reachable_deterministic(mp):
    ip = instrument_program(mp, Attack("t_w", 0, 2), "locality")
    q = ReachQuery(ip.program, ip.layout.suc)
    a, b = reachable(q), reachable(q)
    assert a.witness_schedule == b.witness_schedule
    assert a.stats.states_visited == b.stats.states_visited


def test_por_agrees_and_visits_no_more(corpus):
    for name in ("mp", "dekker_nofence", "lockfree_stack"):
        p = corpus[name]
        mode = "singularity" if name != "lockfree_stack" else "locality"
        for attack in enumerate_attacks(p):
            ip = instrument_program(p, attack, mode)
            q = ReachQuery(ip.program, ip.layout.suc)
            full, red = reachable(q), por_reduce(q)
            assert full.reachable == red.reachable
            assert red.stats.states_visited <= full.stats.states_visited


def test_check_robustness_mp(mp):
    v = check_robustness(mp)
    assert v.robust is False and v.mode == "singularity"
    # the first feasible attack delays the first data store, with the flag
    # store as the last own action
    assert v.feasible_attack == Attack("t_w", 0, 2)
    st_li = mp.thread("t_w").instructions[v.feasible_attack.stinst]
    last_li = mp.thread("t_w").instructions[v.feasible_attack.lastinst]
    assert st_li.instruction.addr.value == 1
    assert last_li.instruction.addr.value == 3
    assert v.exit_code == 1


def test_check_robustness_fenced_mp(mp_fenced):
    v = check_robustness(mp_fenced)
    assert v.robust is True and v.mode == "locality"
    assert len(v.attack_results) == 9
    assert v.exit_code == 0


def test_check_robustness_single_thread(mp):
    v = check_robustness(Program("w", (mp.threads[0],), 4))
    assert v.robust is True
    assert all(not r.reachable for r in v.attack_results)
    assert v.feasible_attack is None


def test_check_robustness_oracle_mode(mp, mp_fenced):
    v = check_robustness(mp, mode="oracle", oracle_cfg=ExplorationConfig(2, 14))
    assert v.robust is False
    assert isinstance(v.oracle_result, ViolationReport)
    assert tuple(v.oracle_result.cost) == (4, 2, 9)
    w = check_robustness(mp_fenced, mode="oracle", oracle_cfg=ExplorationConfig(3, 20))
    assert w.robust is True
    assert isinstance(w.oracle_result, NotFoundWithinBounds)


def test_budget_exhaustion_is_unknown(mp):
    v = check_robustness(mp, limits=ReachLimits(max_states=5))
    assert v.robust is None
    assert v.exit_code == 2
    with pytest.raises(BudgetExhausted):
        ip = instrument_program(mp, Attack("t_w", 0, 2), "locality")
        reachable(ReachQuery(ip.program, ip.layout.suc, ReachLimits(max_states=5)))


def test_all_attacks_reports_everything(mp):
    v = check_robustness(mp, all_attacks=True)
    assert len(v.attack_results) == 9
    assert any(r.reachable for r in v.attack_results)


def test_parallel_jobs_same_verdict(mp):
    a = check_robustness(mp, all_attacks=True, jobs=1)
    b = check_robustness(mp, all_attacks=True, jobs=2)
    assert a.robust == b.robust
    assert a.feasible_attack == b.feasible_attack
    assert [r.reachable for r in a.attack_results] == [r.reachable for r in b.attack_results]
