"""Explicit-state SC-reachability and the robustness verdict built on it.

``reachable`` answers whether a designated address can become non-zero under
the SC restriction, by breadth-first exploration of the full (finite) state
graph with canonicalized seen-states; the witness is a shortest schedule.
``por_reduce`` answers the same query on an ample-set reduction: at states
where some thread can only take register-local steps, only that thread is
expanded, falling back to full expansion when the reduced step would close
into an already-visited state. ``check_robustness`` ties it to the attack
enumeration: a program is not robust exactly when some instrumented attack
reaches the success flag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

from . import semantics as sem
from .semantics import Computation, Program
from .instrument import Attack, InstrumentedProgram, enumerate_attacks, instrument_program
from .oracle import (
    ExplorationConfig,
    NotFoundWithinBounds,
    ViolationReport,
    fence_free,
    find_minimal_violation,
)


class BudgetExhausted(Exception):
    def __init__(self, message: str, stats: "ReachStats"):
        super().__init__(message)
        self.stats = stats


@dataclass(frozen=True)
class ReachLimits:
    max_states: int = 2_000_000
    max_seconds: Optional[float] = None


@dataclass(frozen=True)
class ReachQuery:
    program: Program
    goal_addr: int
    limits: ReachLimits = ReachLimits()

    def __post_init__(self):
        if not 0 <= self.goal_addr < self.program.domain_size:
            raise ValueError(f"goal address {self.goal_addr} outside domain")


@dataclass
class ReachStats:
    states_visited: int = 0
    transitions: int = 0
    peak_frontier: int = 0

    def to_json(self) -> dict:
        return {
            "states_visited": self.states_visited,
            "transitions": self.transitions,
            "peak_frontier": self.peak_frontier,
        }


@dataclass
class ReachResult:
    reachable: bool
    witness_schedule: Optional[list[int]]
    witness: Optional[Computation]
    stats: ReachStats

    def to_json(self) -> dict:
        return {
            "reachable": self.reachable,
            "witness_schedule": self.witness_schedule,
            "stats": self.stats.to_json(),
        }


def _canonical(cp: sem.CompiledProgram, cstate):
    """SC state identity: registers of terminated threads are irrelevant."""
    pcs, regs, mem, _, _ = cstate
    creg = tuple(
        (0,) * len(regs[t]) if pcs[t] not in cp.code[t] else regs[t]
        for t in range(cp.nthreads)
    )
    return (pcs, creg, mem)


def _bfs(query: ReachQuery, reduced: bool) -> ReachResult:
    from collections import deque

    sem._require_valid(query.program)
    cp = sem.compiled(query.program)
    goal = query.goal_addr
    limits = query.limits
    deadline = None
    if limits.max_seconds is not None:
        deadline = time.monotonic() + limits.max_seconds
    stats = ReachStats()
    init = sem.initial_cstate(cp)
    seen = {_canonical(cp, init)}
    # parents: canonical -> (parent canonical, choice index); schedules replay
    # through sc successor lists
    parents: dict = {_canonical(cp, init): None}
    queue = deque([init])
    stats.states_visited = 1
    goal_state = None
    if init[2][goal] != 0:
        goal_state = _canonical(cp, init)
    while queue:
        stats.peak_frontier = max(stats.peak_frontier, len(queue))
        cstate = queue.popleft()
        succs = sem.sc_successors(cp, cstate, 0)
        expand = succs
        if reduced and succs:
            expand = _ample(cp, cstate, succs, seen)
        here = _canonical(cp, cstate)
        for idx, (_, _, nst) in enumerate(expand):
            stats.transitions += 1
            key = _canonical(cp, nst)
            if key in seen:
                continue
            seen.add(key)
            parents[key] = (here, idx if not reduced else _index_of(succs, expand, idx))
            stats.states_visited += 1
            if stats.states_visited > limits.max_states:
                raise BudgetExhausted(f"state budget {limits.max_states} hit", stats)
            if deadline is not None and time.monotonic() > deadline:
                raise BudgetExhausted(f"time budget {limits.max_seconds}s hit", stats)
            if goal_state is None and nst[2][goal] != 0:
                goal_state = key
            queue.append(nst)
    if goal_state is None:
        return ReachResult(False, None, None, stats)
    schedule: list[int] = []
    cur = goal_state
    while parents[cur] is not None:
        prev, idx = parents[cur]
        schedule.append(idx)
        cur = prev
    schedule.reverse()
    comp, _, stuck = sem.replay(query.program, schedule, sc=True)
    if stuck is not None:
        raise AssertionError("witness schedule failed to replay")
    return ReachResult(True, schedule, comp, stats)


def _index_of(full, expand, idx):
    if expand is full:
        return idx
    return full.index(expand[idx])


def _ample(cp, cstate, succs, seen):
    """A single thread's transitions when they are all register-local (no
    memory effect, commuting with every other thread); keep the full set when
    the reduced step only revisits known states, so no transition is ignored
    around cycles."""
    by_thread: dict[int, list] = {}
    for s in succs:
        t = s[1][0][1]
        by_thread.setdefault(t, []).append(s)
    for t in sorted(by_thread):
        group = by_thread[t]
        if all(s[0] in (sem.RULE_LOCAL, sem.RULE_ASSERT) for s in group):
            if any(_canonical(cp, s[2]) not in seen for s in group):
                return group
    return succs


def reachable(query: ReachQuery) -> ReachResult:
    """Exact SC-reachability of ``val(goal_addr) != 0``; full-graph BFS,
    witness is a shortest schedule."""
    return _bfs(query, reduced=False)


def por_reduce(query: ReachQuery) -> ReachResult:
    """Same answer as ``reachable`` over an ample-set reduced state graph."""
    return _bfs(query, reduced=True)


# ---------------------------------------------------------------------------
# Robustness verdict
# ---------------------------------------------------------------------------


@dataclass
class AttackResult:
    attack: Attack
    mode: str
    reachable: bool
    states_visited: int
    size_ratio: float
    witness_schedule: Optional[list[int]] = None

    def to_json(self) -> dict:
        return {
            "attack": self.attack.to_json(),
            "mode": self.mode,
            "reachable": self.reachable,
            "states_visited": self.states_visited,
            "size_ratio": round(self.size_ratio, 3),
            "witness_schedule": self.witness_schedule,
        }


@dataclass
class RobustnessVerdict:
    program_name: str
    mode: str
    robust: Optional[bool]  # None: unknown (budget exhausted)
    feasible_attack: Optional[Attack] = None
    witness: Optional[Computation] = None
    witness_schedule: Optional[list[int]] = None
    attack_results: list[AttackResult] = field(default_factory=list)
    oracle_result: object = None
    note: str = ""

    @property
    def exit_code(self) -> int:
        if self.robust is None:
            return 2
        return 0 if self.robust else 1

    def to_json(self) -> dict:
        out = {
            "program": self.program_name,
            "mode": self.mode,
            "robust": self.robust,
            "note": self.note,
            "attacks": [r.to_json() for r in self.attack_results],
        }
        if self.feasible_attack is not None:
            out["feasible_attack"] = self.feasible_attack.to_json()
            out["witness_schedule"] = self.witness_schedule
        if self.oracle_result is not None:
            out["oracle"] = self.oracle_result.to_json()
        return out


def check_attack_feasible(program: Program, attack: Attack, mode: str,
                          limits: ReachLimits = ReachLimits(),
                          use_por: bool = False) -> tuple[AttackResult, InstrumentedProgram, ReachResult]:
    ip = instrument_program(program, attack, mode)
    query = ReachQuery(ip.program, ip.layout.suc, limits)
    res = por_reduce(query) if use_por else reachable(query)
    return (
        AttackResult(
            attack=attack,
            mode=mode,
            reachable=res.reachable,
            states_visited=res.stats.states_visited,
            size_ratio=ip.size_ratio,
            witness_schedule=res.witness_schedule,
        ),
        ip,
        res,
    )


def check_robustness(program: Program, mode: str = "auto",
                     oracle_cfg: Optional[ExplorationConfig] = None,
                     limits: ReachLimits = ReachLimits(),
                     all_attacks: bool = False,
                     use_por: bool = False,
                     jobs: int = 1) -> RobustnessVerdict:
    """Not robust iff some attack's instrumented program reaches the success
    flag under SC. mode: auto (singularity when fence-free, else locality),
    locality, singularity, or oracle (bounded enumeration of the buffered
    semantics; the verdict is then relative to the bounds)."""
    sem._require_valid(program)
    if mode == "auto":
        mode = "singularity" if fence_free(program) else "locality"
    if mode == "oracle":
        cfg = oracle_cfg or ExplorationConfig()
        res = find_minimal_violation(program, cfg)
        if isinstance(res, ViolationReport):
            return RobustnessVerdict(
                program_name=program.name, mode=mode, robust=False,
                oracle_result=res,
                note=f"bounded-minimal violation, cost {tuple(res.cost)} "
                     f"(bound {cfg.buffer_bound}, max actions {cfg.max_actions})",
            )
        assert isinstance(res, NotFoundWithinBounds)
        note = (f"no violation within bounds (bound {cfg.buffer_bound}, "
                f"max actions {cfg.max_actions})")
        if res.truncated:
            note += "; search space truncated"
        return RobustnessVerdict(program_name=program.name, mode=mode,
                                 robust=True, oracle_result=res, note=note)

    attacks = enumerate_attacks(program)
    verdict = RobustnessVerdict(program_name=program.name, mode=mode, robust=True)
    if not attacks:
        verdict.note = "no attacks: no store instruction to delay"
        return verdict
    try:
        if jobs > 1:
            results = _parallel_attacks(program, attacks, mode, limits, use_por, jobs)
        else:
            results = (check_attack_feasible(program, a, mode, limits, use_por)
                       for a in attacks)
        for ar, ip, res in results:
            verdict.attack_results.append(ar)
            if ar.reachable and verdict.feasible_attack is None:
                verdict.robust = False
                verdict.feasible_attack = ar.attack
                verdict.witness = res.witness
                verdict.witness_schedule = res.witness_schedule
                if not all_attacks:
                    break
    except BudgetExhausted as e:
        verdict.robust = None
        verdict.note = f"unknown: {e}"
    return verdict


def _parallel_attacks(program, attacks, mode, limits, use_por, jobs):
    from concurrent.futures import ProcessPoolExecutor

    args = [(program, a, mode, limits, use_por) for a in attacks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # ordered map keeps the verdict independent of worker count
        yield from pool.map(_attack_task, args)


def _attack_task(arg):
    program, attack, mode, limits, use_por = arg
    return check_attack_feasible(program, attack, mode, limits, use_por)
