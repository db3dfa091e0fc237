import pytest

from rmmcheck import (
    Action,
    NoDecomposition,
    NotFoundWithinBounds,
    PreconditionViolated,
    Program,
    Thread,
    ViolationReport,
    build_trace,
    check_locality,
    check_singularity,
    cost,
    find_minimal_violation,
    find_violation,
    hb_through,
    is_witness,
    parse_program,
    sc_trace_set,
    traces_equal,
)
from rmmcheck.oracle import ExplorationConfig, ExplorationStats, enumerate_computations
from rmmcheck.semantics import ISSUE, LOAD, STORE
from rmmcheck.traces import CostTriple, canonical_key, delayed_commits, is_cyclic

from test_traces import expected_mp_violation_trace, tau, tau_prime

CFG = ExplorationConfig(buffer_bound=2, max_actions=14)

# a fence-bearing shape on which only one delayed store cannot close the
# cycle: the per-address fence forces the second store to be delayed with
# the first
NO_SINGULARITY = """
program no_singularity domain 5
thread t1
  regs r1
  init l0
  begin
    l0: mem[1] <- 1; goto l1;
    l1: fence 1; goto l2;
    l2: mem[2] <- 1; goto l3;
    l3: r1 <- mem[3]; goto l4;
  end
thread t2
  regs r2
  init m0
  begin
    m0: mem[3] <- 1; goto m1;
    m1: scfence; goto m2;
    m2: r2 <- mem[1]; goto m3;
  end
"""


def writer_only(mp):
    return Program(name="writer", threads=(mp.threads[0],), domain_size=4)


def test_writer_only_sc_has_exactly_one_computation(mp):
    comps = list(enumerate_computations(writer_only(mp), ExplorationConfig(2, 14, "sc")))
    assert len(comps) == 1
    assert len(comps[0].actions) == 6


def test_relaxed_stream_contains_both_running_computations(mp):
    want = {tuple(tau(mp).actions), tuple(tau_prime(mp).actions)}
    got = {tuple(c.actions) for c in enumerate_computations(mp, CFG)}
    assert want <= got


def test_bound_zero_collapses_to_sc(mp):
    relaxed = [c.actions for c in enumerate_computations(mp, ExplorationConfig(0, 14))]
    sc = [c.actions for c in enumerate_computations(mp, ExplorationConfig(0, 14, "sc"))]
    assert relaxed == sc


def test_enumeration_is_deterministic(mp):
    a = [c.actions for c in enumerate_computations(mp, CFG)]
    b = [c.actions for c in enumerate_computations(mp, CFG)]
    assert a == b


def test_find_violation_mp_trace_is_the_expected_graph(mp):
    rep = find_violation(mp, CFG)
    assert isinstance(rep, ViolationReport)
    assert traces_equal(rep.trace, expected_mp_violation_trace())


def test_find_violation_fenced_mp_absent(mp_fenced):
    for bound in (1, 2, 3):
        res = find_violation(mp_fenced, ExplorationConfig(bound, 20))
        assert isinstance(res, NotFoundWithinBounds)
        assert not res.truncated


def test_find_violation_single_thread_absent(mp):
    res = find_violation(writer_only(mp), ExplorationConfig(3, 14))
    assert isinstance(res, NotFoundWithinBounds)


def test_minimal_violation_mp_cost(mp):
    rep = find_minimal_violation(mp, CFG)
    assert isinstance(rep, ViolationReport)
    assert rep.cost == CostTriple(4, 2, 9)
    assert rep.cost < CostTriple(6, 3, 9)
    assert rep.bounded_minimal
    assert tuple(rep.computation.actions) == tuple(tau_prime(mp).actions)


def test_minimal_violation_robust_program_absent(mp_fenced):
    assert isinstance(find_minimal_violation(mp_fenced, ExplorationConfig(2, 14)),
                      NotFoundWithinBounds)


def test_minimal_violation_dekker_single_delayed_store(corpus):
    rep = find_minimal_violation(corpus["dekker_nofence"], CFG)
    assert isinstance(rep, ViolationReport)
    assert rep.delayed_store_count == 1
    assert len(rep.delaying_threads) == 1


def test_check_singularity_mp(mp):
    verdict = check_singularity(mp, CFG)
    assert verdict.holds and not verdict.vacuous
    # the witness delays only the first data store
    delayed = delayed_commits(verdict.witness.computation)
    assert [verdict.witness.computation.actions[i].addr for i in delayed] == [1]


def test_check_singularity_vacuous_on_robust_program(corpus):
    verdict = check_singularity(corpus["dekker_fenced"], CFG)
    assert verdict.holds and verdict.vacuous


def test_check_singularity_dekker(corpus):
    verdict = check_singularity(corpus["dekker_nofence"], CFG)
    assert verdict.holds
    assert verdict.witness.delayed_store_count == 1


def test_check_singularity_requires_fence_free(mp_fenced):
    with pytest.raises(PreconditionViolated):
        check_singularity(mp_fenced, CFG)


def test_check_locality_mp_and_robust(mp, mp_fenced):
    assert check_locality(mp, CFG).holds
    fenced = check_locality(mp_fenced, ExplorationConfig(2, 20))
    assert fenced.holds and fenced.vacuous


def test_check_locality_fence_bearing_violation():
    p = parse_program(NO_SINGULARITY)
    verdict = check_locality(p, ExplorationConfig(2, 16))
    assert verdict.holds and not verdict.vacuous
    assert len(verdict.witness.delaying_threads) == 1
    # the cycle here needs the fence-coupled pair delayed together
    assert verdict.witness.delayed_store_count >= 2
    with pytest.raises(PreconditionViolated):
        check_singularity(p, ExplorationConfig(2, 16))


def test_is_witness_on_running_example(mp):
    w = is_witness(tau_prime(mp))
    assert w.holds
    assert dict(w.conditions) == {c: True for c in ("W1", "W2", "W3", "W4", "W5")}
    # split at the first delayed store: issue 0, last overtaken action is the
    # flag commit at 4, delayed commit at 8
    assert (w.issue_index, w.last_action_index, w.store_index) == (0, 4, 8)


def test_is_witness_no_decomposition_for_sc(mp):
    from rmmcheck import run

    comp = run(mp, [0, 0, 0, 0, 0, 0], sc=True)
    with pytest.raises(NoDecomposition):
        is_witness(comp)


def test_is_witness_rejects_doubly_delayed_shape(mp):
    w = is_witness(tau(mp))
    assert not w.holds
    conds = dict(w.conditions)
    assert conds["W3"] is False  # another delayed store before the split commit


def test_sc_trace_set(mp):
    traces = sc_trace_set(mp, ExplorationConfig(2, 24))
    assert all(not is_cyclic(t) for t in traces.traces)
    singleton = sc_trace_set(writer_only(mp), ExplorationConfig(2, 24))
    assert len(singleton.traces) == 1


def test_lemma1_agreement_and_cost_sanity(mp):
    scs = sc_trace_set(mp, CFG)
    for comp in enumerate_computations(mp, CFG):
        t = build_trace(comp)
        assert is_cyclic(t) == (t not in scs)
        c = cost(comp)
        if c.delays == 0 and c.reorders == 0:
            assert canonical_key(t) in scs.keys


def test_overtake_pairs_imply_cycle_in_minimal_violation(mp):
    # every overtaken own action of the minimal violation closes a
    # happens-before cycle through the actions in between
    rep = find_minimal_violation(mp, CFG)
    comp = rep.computation
    for i in delayed_commits(comp):
        isu = comp.issue_of[i]
        window = [j for j in range(isu + 1, i)
                  if comp.actions[j].thread == comp.actions[i].thread]
        for j in window:
            if comp.actions[j].kind == ISSUE:
                continue
            # the overtaken action happens before the commit through the
            # intermediaries, closing the cycle with program order
            assert hb_through(comp, j, i)


def test_truncation_reported():
    src = """
program loop domain 2
thread t
  regs
  init l0
  begin
    l0: mem[1] <- 1; goto l0;
  end
"""
    p = parse_program(src)
    stats = ExplorationStats()
    comps = list(enumerate_computations(p, ExplorationConfig(1, 6), stats))
    assert stats.truncated
    res = find_violation(p, ExplorationConfig(1, 6))
    assert isinstance(res, NotFoundWithinBounds) and res.truncated
