"""Bounded exhaustive exploration of the buffered and SC semantics.

Ground truth for robustness at small scale: enumerate every maximal
computation within a buffer bound and an action budget, detect cyclic traces,
search for cost-minimal violations, and check the single-delaying-thread /
single-delayed-store normal forms and the witness shape on found violations.

Enumeration is exact and deterministic: depth-first over the transition
system, cross-thread orderings of internal advance steps canonicalized (they
commute), duplicate (state, prefix) nodes suppressed, each completed
computation reported exactly once.
"""

from __future__ import annotations

import hashlib
import heapq
import pickle
from dataclasses import dataclass, field
from typing import Iterator, Optional

from . import semantics as sem
from .semantics import Action, Computation, Program
from . import traces as tr
from .traces import CostTriple, Trace


class PreconditionViolated(Exception):
    pass


class NoDecomposition(Exception):
    """No delayed store: the computation has no attacker-shaped split."""


@dataclass
class ExplorationConfig:
    buffer_bound: int = 3
    max_actions: int = 24
    mode: str = "relaxed"  # relaxed | sc


@dataclass
class ExplorationStats:
    computations: int = 0
    nodes: int = 0
    truncated: bool = False


@dataclass(frozen=True)
class NotFoundWithinBounds:
    computations_examined: int
    truncated: bool

    def to_json(self) -> dict:
        return {
            "found": False,
            "computations_examined": self.computations_examined,
            "truncated": self.truncated,
        }


@dataclass(frozen=True)
class ViolationReport:
    computation: Computation
    trace: Trace
    cycle: tuple
    cost: CostTriple
    delaying_threads: frozenset[str]
    delayed_store_count: int
    bounded_minimal: bool = False

    def to_json(self) -> dict:
        return {
            "found": True,
            "computation": self.computation.to_json(),
            "trace": self.trace.to_json(),
            "cycle": [list(k) for k in self.cycle],
            "cost": list(self.cost),
            "delaying_threads": sorted(self.delaying_threads),
            "delayed_store_count": self.delayed_store_count,
            "bounded_minimal": self.bounded_minimal,
        }


def _digest(key) -> bytes:
    return hashlib.blake2b(pickle.dumps(key, protocol=4), digest_size=16).digest()


def _succs(cp, cstate, cfg: ExplorationConfig, next_index: int):
    if cfg.mode == "sc":
        return sem.sc_successors(cp, cstate, next_index)
    return sem.successors(cp, cstate, cfg.buffer_bound, next_index)


def _to_computation(cp, codes) -> Computation:
    actions: list[Action] = []
    issue_of: list[Optional[int]] = []
    sem.record(cp, codes, actions, issue_of)
    return Computation(tuple(actions), tuple(issue_of))


def _enumerate_codes(cp, cfg: ExplorationConfig, stats: ExplorationStats):
    """DFS over action-code prefixes; yields each maximal computation's codes
    exactly once.

    Internal advance steps commute with every transition of other threads, so
    the search only schedules an advance directly after a transition of the
    same thread; every computation has exactly this normal form. Remaining
    duplicate placements collapse on a (state, prefix) memo; pairing tags are
    a function of (state, prefix) and stay in the key.
    """
    seen: set[bytes] = set()
    # node: (cstate, codes, thread of the last transition)
    stack = [(sem.initial_cstate(cp), (), -1)]
    while stack:
        cstate, codes, last_t = stack.pop()
        key = _digest((cstate, codes, last_t))
        if key in seen:
            continue
        seen.add(key)
        stats.nodes += 1
        succs = _succs(cp, cstate, cfg, len(codes))
        if not succs:
            stats.computations += 1
            yield codes
            continue
        children = []
        for rule, acodes, nst in succs:
            if rule == sem.RULE_ADVANCE:
                t = _advancing_thread(cstate, nst)
                if t != last_t:
                    continue
                children.append((nst, codes, t))
            else:
                if len(codes) + len(acodes) > cfg.max_actions:
                    stats.truncated = True
                    continue
                children.append((nst, codes + acodes, acodes[0][1]))
        stack.extend(reversed(children))


def enumerate_computations(
    program: Program, cfg: ExplorationConfig, stats: Optional[ExplorationStats] = None
) -> Iterator[Computation]:
    """All maximal computations within bounds, each exactly once, DFS order.

    A computation is maximal when no transition is enabled in its final state
    (buffers are then necessarily empty). ``stats.truncated`` reports whether
    the action budget cut any path.
    """
    sem._require_valid(program)
    cp = sem.compiled(program)
    if stats is None:
        stats = ExplorationStats()
    for codes in _enumerate_codes(cp, cfg, stats):
        yield _to_computation(cp, codes)


def _advancing_thread(cstate, nstate) -> int:
    for t, (old, new) in enumerate(zip(cstate[4], nstate[4])):
        if len(new) > len(old):
            return t
    raise AssertionError("advance without queue growth")


# ---------------------------------------------------------------------------
# Violation search
# ---------------------------------------------------------------------------


def _codes_cyclic(codes) -> bool:
    """Happens-before cyclicity straight off action codes.

    Same graph as traces.build_trace over the decoded computation (pinned by
    a differential test), on integer node ids and without object churn. A
    computation in which no store or fence overtakes an own action has every
    edge pointing forward in commit order, hence an acyclic trace: bail out
    early.
    """
    n = len(codes)
    commit_of = {}
    delayed = False
    for i in range(n):
        c = codes[i]
        if c[0] in ("store", "fence"):
            isu = c[-1]
            commit_of[isu] = i
            if not delayed:
                t = c[1]
                for j in range(isu + 1, i):
                    if codes[j][1] == t:
                        delayed = True
                        break
    if not delayed:
        return False
    # nodes dated at the issue; commits share the issue's node
    node_of = [-1] * n
    prev_of_thread: dict[int, int] = {}
    edges: list[list[int]] = []
    nid = 0
    for i in range(n):
        c = codes[i]
        kind = c[0]
        if kind in ("store", "fence"):
            node_of[i] = node_of[c[-1]]
            continue
        node_of[i] = nid
        edges.append([])
        t = c[1]
        p = prev_of_thread.get(t)
        if p is not None:
            edges[p].append(nid)  # po chain
        prev_of_thread[t] = nid
        nid += 1
    st_list: dict[int, list[int]] = {}
    st_pos: dict[int, int] = {}
    for i in range(n):
        c = codes[i]
        if c[0] == "store":
            lst = st_list.setdefault(c[2], [])
            st_pos[node_of[i]] = len(lst)
            lst.append(node_of[i])
    for addr, lst in st_list.items():
        for u, v in zip(lst, lst[1:]):
            edges[u].append(v)  # st chain
    for i in range(n):
        c = codes[i]
        if c[0] != "load":
            continue
        t, a = c[1], c[2]
        src_node = -1
        for j in range(i - 1, -1, -1):
            b = codes[j]
            if b[0] == "issue" and b[1] == t:
                ci = commit_of.get(j)
                if ci is not None and ci > i and codes[ci][0] == "store" \
                        and codes[ci][2] == a:
                    src_node = node_of[j]
                    break
        if src_node < 0:
            for j in range(i - 1, -1, -1):
                b = codes[j]
                if b[0] == "store" and b[2] == a:
                    src_node = node_of[j]
                    break
        lst = st_list.get(a, ())
        me = node_of[i]
        if src_node >= 0:
            edges[src_node].append(me)  # src
            for v in lst[st_pos[src_node] + 1:]:
                edges[me].append(v)  # cf past the source store
        elif lst:
            edges[me].append(lst[0])  # cf: initial value vs first store
    color = [0] * nid
    for start in range(nid):
        if color[start]:
            continue
        stack = [(start, 0)]
        color[start] = 1
        while stack:
            v, k = stack[-1]
            if k < len(edges[v]):
                stack[-1] = (v, k + 1)
                w = edges[v][k]
                if color[w] == 1:
                    return True
                if color[w] == 0:
                    color[w] = 1
                    stack.append((w, 0))
            else:
                color[v] = 2
                stack.pop()
    return False


def _report(c: Computation, bounded_minimal: bool = False) -> Optional[ViolationReport]:
    trace = tr.build_trace(c)
    cycle = tr.find_cycle(trace)
    if cycle is None:
        return None
    return ViolationReport(
        computation=c,
        trace=trace,
        cycle=tuple(tuple(k) for k in cycle),
        cost=tr.cost(c),
        delaying_threads=tr.delaying_threads(c),
        delayed_store_count=tr.delayed_store_count(c),
        bounded_minimal=bounded_minimal,
    )


def violations(program: Program, cfg: ExplorationConfig,
               stats: Optional[ExplorationStats] = None) -> Iterator[ViolationReport]:
    """Cyclic-trace computations in enumeration order."""
    sem._require_valid(program)
    cp = sem.compiled(program)
    if stats is None:
        stats = ExplorationStats()
    for codes in _enumerate_codes(cp, cfg, stats):
        if _codes_cyclic(codes):
            rep = _report(_to_computation(cp, codes))
            assert rep is not None
            yield rep


def find_violation(program: Program, cfg: ExplorationConfig):
    """First violation in enumeration order, or NotFoundWithinBounds."""
    stats = ExplorationStats()
    for rep in violations(program, cfg, stats):
        return rep
    return NotFoundWithinBounds(stats.computations, stats.truncated)


def find_minimal_violation(program: Program, cfg: ExplorationConfig):
    """A violation of lexicographically least (delays, reorders, length).

    Best-first search keyed by the cost of the prefix, which is a monotone
    lower bound, so the first cyclic maximal computation popped is minimal
    within bounds (ties broken by enumeration order). Minimality is relative
    to the bounded search space: the report is flagged bounded-minimal.
    """
    sem._require_valid(program)
    cp = sem.compiled(program)
    seen: set[bytes] = set()
    counter = 0
    examined = 0
    truncated = False
    # entry: (delays, reorders, length, counter, cstate, codes, last_adv, inflight)
    # inflight: per thread, tuple of issue tags of issued-but-uncommitted
    # stores/fences, oldest first; drives the incremental cost bound
    init_inflight = tuple(() for _ in range(cp.nthreads))
    heap = [(0, 0, 0, 0, sem.initial_cstate(cp), (), -1, init_inflight)]
    while heap:
        delays, reorders, length, _, cstate, codes, last_t, inflight = heapq.heappop(heap)
        key = _digest((cstate, codes, last_t))
        if key in seen:
            continue
        seen.add(key)
        succs = _succs(cp, cstate, cfg, len(codes))
        if not succs:
            examined += 1
            if _codes_cyclic(codes):
                rep = _report(_to_computation(cp, codes), bounded_minimal=True)
                assert rep is not None
                return rep
            continue
        for rule, acodes, nst in succs:
            if rule == sem.RULE_ADVANCE:
                t = _advancing_thread(cstate, nst)
                if t != last_t:
                    continue
                counter += 1
                heapq.heappush(heap, (delays, reorders, length, counter,
                                      nst, codes, t, inflight))
                continue
            if len(codes) + len(acodes) > cfg.max_actions:
                truncated = True
                continue
            nd, nr, ninf = delays, reorders, inflight
            for off, code in enumerate(acodes):
                kind, t = code[0], code[1]
                fl = ninf[t]
                if kind == "issue":
                    nd += len(fl)
                    ninf = ninf[:t] + (fl + (length + off,),) + ninf[t + 1:]
                elif kind in ("store", "fence"):
                    tag = code[-1]
                    pos = fl.index(tag)
                    nd += len(fl) - 1
                    nr += pos
                    ninf = ninf[:t] + (fl[:pos] + fl[pos + 1:],) + ninf[t + 1:]
                else:
                    nd += len(fl)
            counter += 1
            heapq.heappush(heap, (nd, nr, length + len(acodes), counter,
                                  nst, codes + acodes, acodes[0][1], ninf))
    return NotFoundWithinBounds(examined, truncated)


# ---------------------------------------------------------------------------
# Normal-form property checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropertyVerdict:
    name: str
    holds: bool
    vacuous: bool
    witness: Optional[ViolationReport]
    violations_examined: int
    truncated: bool

    def to_json(self) -> dict:
        return {
            "property": self.name,
            "holds": self.holds,
            "vacuous": self.vacuous,
            "witness": self.witness.to_json() if self.witness else None,
            "violations_examined": self.violations_examined,
            "truncated": self.truncated,
        }


def fence_free(program: Program) -> bool:
    from .syntax import Fence

    return not any(
        isinstance(li.instruction, Fence)
        for t in program.threads
        for li in t.instructions
    )


def _check_normal_form(program, cfg, name, predicate) -> PropertyVerdict:
    stats = ExplorationStats()
    examined = 0
    for rep in violations(program, cfg, stats):
        examined += 1
        if predicate(rep):
            return PropertyVerdict(name, True, False, rep, examined, stats.truncated)
    return PropertyVerdict(name, examined == 0, examined == 0, None, examined,
                           stats.truncated)


def check_locality(program: Program, cfg: ExplorationConfig) -> PropertyVerdict:
    """Within bounds: no violation, or some violation delays in one thread only."""
    return _check_normal_form(
        program, cfg, "locality", lambda rep: len(rep.delaying_threads) == 1
    )


def check_singularity(program: Program, cfg: ExplorationConfig) -> PropertyVerdict:
    """Within bounds: no violation, or some violation delays exactly one store.

    Only defined for programs without address fences (scfence is allowed).
    """
    if not fence_free(program):
        raise PreconditionViolated("singularity requires a fence-free program")
    return _check_normal_form(
        program, cfg, "singularity", lambda rep: rep.delayed_store_count == 1
    )


# ---------------------------------------------------------------------------
# Witness shape
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WitnessVerdict:
    holds: bool
    conditions: tuple  # ((name, bool), ...) for W1..W5
    issue_index: int
    last_action_index: int
    store_index: int

    def to_json(self) -> dict:
        return {
            "holds": self.holds,
            "conditions": {k: v for k, v in self.conditions},
            "decomposition": {
                "issue": self.issue_index,
                "last_action": self.last_action_index,
                "store": self.store_index,
            },
        }


def is_witness(c: Computation) -> WitnessVerdict:
    """Check the attacker-shaped decomposition of a violating computation.

    The computation splits at the first delayed store: its issue, the last
    own action it overtakes, and the commit. Conditions: (W1) only that
    thread delays; (W2) no own actions between the last overtaken action and
    the commit; (W3) no other delayed action before the commit; (W4) every
    action from there to the commit is happens-before reachable from the last
    overtaken action through the actions in between; (W5) after the commit
    only delayed own stores/fences remain.
    """
    delayed = tr.delayed_commits(c)
    stores = [i for i in delayed if c.actions[i].kind == sem.STORE]
    if not stores:
        raise NoDecomposition("no delayed store to split at")
    st_idx = min(stores, key=lambda i: c.issue_of[i])
    isu_idx = c.issue_of[st_idx]
    attacker = c.actions[st_idx].thread
    window = tr.commit_window(c, st_idx)
    a_idx = window[-1]

    w1 = tr.delaying_threads(c) == frozenset((attacker,))
    w2 = not any(
        c.actions[j].thread == attacker for j in range(a_idx + 1, st_idx)
    )
    w3 = not any(k < st_idx for k in delayed if k != st_idx)
    w4 = all(tr.hb_through(c, a_idx, y) for y in range(a_idx + 1, st_idx + 1))
    w5 = all(
        c.actions[k].kind in (sem.STORE, sem.FENCE)
        and c.actions[k].thread == attacker
        and k in delayed
        for k in range(st_idx + 1, len(c.actions))
    )
    conds = (("W1", w1), ("W2", w2), ("W3", w3), ("W4", w4), ("W5", w5))
    return WitnessVerdict(
        holds=all(v for _, v in conds),
        conditions=conds,
        issue_index=isu_idx,
        last_action_index=a_idx,
        store_index=st_idx,
    )


# ---------------------------------------------------------------------------
# SC trace set and schedule utilities
# ---------------------------------------------------------------------------


@dataclass
class SCTraceSet:
    traces: list[Trace]
    keys: set
    truncated: bool

    def __contains__(self, trace: Trace) -> bool:
        return tr.canonical_key(trace) in self.keys


def sc_trace_set(program: Program, cfg: ExplorationConfig) -> SCTraceSet:
    """Deduplicated traces of all maximal SC computations within bounds."""
    stats = ExplorationStats()
    sc_cfg = ExplorationConfig(cfg.buffer_bound, cfg.max_actions, "sc")
    out = SCTraceSet([], set(), False)
    for c in enumerate_computations(program, sc_cfg, stats):
        t = tr.build_trace(c)
        k = tr.canonical_key(t)
        if k not in out.keys:
            out.keys.add(k)
            out.traces.append(t)
    out.truncated = stats.truncated
    return out


def schedule_realizing(program: Program, target: list[Action],
                       cfg: ExplorationConfig) -> Optional[list[int]]:
    """A schedule whose recorded actions are exactly ``target`` and whose
    final state has empty buffers, or None. Internal advances are scheduled
    as needed and do not count toward the target."""
    sem._require_valid(program)
    cp = sem.compiled(program)
    stack = [(sem.initial_cstate(cp), (), 0)]
    seen: set[bytes] = set()
    while stack:
        cstate, sched, k = stack.pop()
        key = _digest((sem.strip_tags(cstate), k))
        if key in seen:
            continue
        seen.add(key)
        if k == len(target) and sem.buffers_empty(cstate):
            return list(sched)
        succs = _succs(cp, cstate, cfg, k)
        for idx in range(len(succs) - 1, -1, -1):
            _, acodes, nst = succs[idx]
            kk = k
            ok = True
            for code in acodes:
                if kk >= len(target) or sem.decode_action(cp, code) != target[kk]:
                    ok = False
                    break
                kk += 1
            if ok:
                stack.append((nst, sched + (idx,), kk))
    return None


def adjacent_swaps(program: Program, c: Computation,
                   cfg: ExplorationConfig) -> list[tuple[int, Computation]]:
    """Realizable computations obtained by swapping adjacent hb-independent
    actions of different threads; each has a trace equal to c's."""
    rel = tr._Relations(c)
    out = []
    for i in range(len(c.actions) - 1):
        a, b = c.actions[i], c.actions[i + 1]
        if a.thread == b.thread:
            continue
        u, v = rel.node_of[i], rel.node_of[i + 1]
        if rel.related(u, v) or rel.related(v, u):
            continue
        swapped = list(c.actions)
        swapped[i], swapped[i + 1] = swapped[i + 1], swapped[i]
        sched = schedule_realizing(program, swapped, cfg)
        if sched is None:
            continue
        res = sem.run(program, sched)
        if isinstance(res, Computation):
            out.append((i, res))
    return out
