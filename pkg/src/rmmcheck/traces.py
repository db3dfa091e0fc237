"""Happens-before traces of computations.

The trace of a computation is a directed graph over its actions where the
issue of a store/fence and the commit are one node, dated at the issue. Edges:
program order per thread, store order per address (commit order to memory),
the source relation from a store to the loads reading it, and the derived
conflict relation from a load to the stores that overwrite the value it read.
A computation has an SC-equivalent trace exactly when its trace is acyclic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from .semantics import Action, Computation, FENCE, ISSUE, LOAD, LOCAL, SCFENCE, STORE

PO = "po"
ST = "st"
SRC = "src"
CF = "cf"


class IncomparableTraces(Exception):
    """Traces whose node key sets differ cannot be compared."""


class CostTriple(NamedTuple):
    """Degree of relaxation of a computation, compared lexicographically."""

    delays: int
    reorders: int
    length: int


@dataclass(frozen=True)
class TraceNode:
    thread: str
    index: int  # position in the thread's program-order sequence
    kind: str
    addr: Optional[int] = None
    value: Optional[int] = None
    addrs: Optional[tuple[int, ...]] = None

    @property
    def key(self) -> tuple[str, int]:
        return (self.thread, self.index)

    def __str__(self) -> str:
        if self.kind in (STORE, LOAD):
            return f"{self.thread}.{self.index}:{self.kind}[{self.addr}]={self.value}"
        if self.kind == FENCE:
            return f"{self.thread}.{self.index}:fence[{','.join(map(str, self.addrs or ()))}]"
        return f"{self.thread}.{self.index}:{self.kind}"


@dataclass(frozen=True)
class Trace:
    nodes: tuple[TraceNode, ...]
    edges: frozenset  # of (from_key, to_key, label)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "thread": n.thread,
                    "index": n.index,
                    "kind": n.kind,
                    "addr": n.addr,
                    "value": n.value,
                    "addrs": list(n.addrs) if n.addrs is not None else None,
                }
                for n in self.nodes
            ],
            "edges": sorted(
                ([list(a), list(b), lab] for a, b, lab in self.edges),
                key=str,
            ),
        }

    def to_dot(self, cycle: Optional[list] = None) -> str:
        cyc = {tuple(k) for k in (cycle or ())}
        lines = ["digraph trace {", "  rankdir=TB;", "  node [shape=box];"]
        threads: dict[str, list[TraceNode]] = {}
        for n in self.nodes:
            threads.setdefault(n.thread, []).append(n)
        for i, (t, nodes) in enumerate(sorted(threads.items())):
            lines.append(f'  subgraph cluster_{i} {{ label="{t}";')
            for n in sorted(nodes, key=lambda n: n.index):
                style = ' style=filled fillcolor="#f4c7c3"' if n.key in cyc else ""
                lines.append(f'    "{n.thread}.{n.index}" [label="{n}"{style}];')
            lines.append("  }")
        colors = {PO: "black", ST: "blue", SRC: "darkgreen", CF: "red"}
        for a, b, lab in sorted(self.edges, key=str):
            lines.append(
                f'  "{a[0]}.{a[1]}" -> "{b[0]}.{b[1]}" '
                f'[label="{lab}", color={colors[lab]}];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def canonical_key(trace: Trace):
    """Hashable identity of a trace for set membership."""
    return (frozenset(trace.nodes), trace.edges)


# ---------------------------------------------------------------------------
# Node construction
# ---------------------------------------------------------------------------


def _nodes_of(c: Computation):
    """Per-action node mapping; stores/fences are dated at their issue.

    Returns (node_of: list aligned with actions, per_thread: dict of node
    sequences). Requires every issue to be paired with a commit.
    """
    actions = c.actions
    commit_of: dict[int, int] = {}
    for i, isu in enumerate(c.issue_of):
        if isu is not None:
            commit_of[isu] = i
    counters: dict[str, int] = {}
    node_of: list[Optional[TraceNode]] = [None] * len(actions)
    per_thread: dict[str, list[TraceNode]] = {}
    for i, a in enumerate(actions):
        t = a.thread
        if a.kind in (LOAD, LOCAL, SCFENCE):
            n = TraceNode(t, counters.get(t, 0), a.kind, a.addr, a.value, a.addrs)
        elif a.kind == ISSUE:
            ci = commit_of.get(i)
            if ci is None:
                raise ValueError(f"issue at index {i} has no matching commit")
            cm = actions[ci]
            n = TraceNode(t, counters.get(t, 0), cm.kind, cm.addr, cm.value, cm.addrs)
        else:  # store/fence commit shares the node created at its issue
            node_of[i] = node_of[c.issue_of[i]]
            continue
        counters[t] = counters.get(t, 0) + 1
        node_of[i] = n
        per_thread.setdefault(t, []).append(n)
    return node_of, per_thread


def program_order(c: Computation) -> dict[str, list[TraceNode]]:
    """Per-thread node sequences in issue order."""
    _, per_thread = _nodes_of(c)
    return per_thread


def _store_order(c: Computation, node_of) -> dict[int, list[TraceNode]]:
    order: dict[int, list[TraceNode]] = {}
    for i, a in enumerate(c.actions):
        if a.kind == STORE:
            order.setdefault(a.addr, []).append(node_of[i])
    return order


def _src_indices(c: Computation) -> dict[int, int]:
    """For each load action index, the action index its value came from.

    Early read: the newest same-thread store to the address that is issued
    before the load and commits after it (index of the issue). Otherwise the
    newest earlier commit to the address. Absent if the load reads the
    initial value.
    """
    actions = c.actions
    commit_of: dict[int, int] = {}
    for i, isu in enumerate(c.issue_of):
        if isu is not None:
            commit_of[isu] = i
    src: dict[int, int] = {}
    for i, a in enumerate(actions):
        if a.kind != LOAD:
            continue
        found = None
        for j in range(i - 1, -1, -1):
            b = actions[j]
            if b.kind != ISSUE or b.thread != a.thread:
                continue
            ci = commit_of.get(j)
            if ci is None or ci < i:
                continue
            cm = actions[ci]
            if cm.kind == STORE and cm.addr == a.addr:
                found = j
                break
        if found is None:
            for j in range(i - 1, -1, -1):
                b = actions[j]
                if b.kind == STORE and b.addr == a.addr:
                    found = j
                    break
        if found is not None:
            src[i] = found
    return src


def source_function(c: Computation) -> dict[TraceNode, TraceNode]:
    """Partial map from load nodes to the store nodes they read from."""
    node_of, _ = _nodes_of(c)
    return {node_of[i]: node_of[j] for i, j in _src_indices(c).items()}


def build_trace(c: Computation) -> Trace:
    """The happens-before trace of a completed computation.

    Program order and store order are emitted as successor chains; the
    conflict relation follows the full store order.
    """
    node_of, per_thread = _nodes_of(c)
    edges = set()
    for seq in per_thread.values():
        for u, v in zip(seq, seq[1:]):
            edges.add((u.key, v.key, PO))
    st_order = _store_order(c, node_of)
    for seq in st_order.values():
        for u, v in zip(seq, seq[1:]):
            edges.add((u.key, v.key, ST))
    src_idx = _src_indices(c)
    for li, sj in src_idx.items():
        edges.add((node_of[sj].key, node_of[li].key, SRC))
    # conflict: a load precedes every store that overwrites the value it read
    for i, a in enumerate(c.actions):
        if a.kind != LOAD:
            continue
        stores = st_order.get(a.addr, [])
        if not stores:
            continue
        sj = src_idx.get(i)
        if sj is None:
            edges.add((node_of[i].key, stores[0].key, CF))
        else:
            src_node = node_of[sj]
            pos = stores.index(src_node)
            for later in stores[pos + 1:]:
                edges.add((node_of[i].key, later.key, CF))
    nodes = [n for seq in per_thread.values() for n in seq]
    nodes.sort(key=lambda n: n.key)
    return Trace(nodes=tuple(nodes), edges=frozenset(edges))


# ---------------------------------------------------------------------------
# Cycle detection
# ---------------------------------------------------------------------------


def find_cycle(trace: Trace) -> Optional[list[tuple[str, int]]]:
    """A directed cycle as a list of node keys, or None. Iterative DFS."""
    adj: dict = {}
    for a, b, _ in trace.edges:
        adj.setdefault(a, []).append(b)
    for v in adj.values():
        v.sort()
    color: dict = {}
    parent: dict = {}
    for start in sorted(adj):
        if color.get(start):
            continue
        stack = [(start, iter(adj.get(start, ())))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = 2
                stack.pop()
                continue
            if color.get(nxt) == 1:
                cycle = [nxt]
                cur = node
                while cur != nxt:
                    cycle.append(cur)
                    cur = parent[cur]
                cycle.reverse()
                return cycle
            if not color.get(nxt):
                color[nxt] = 1
                parent[nxt] = node
                stack.append((nxt, iter(adj.get(nxt, ()))))
    return None


def is_cyclic(trace: Trace) -> bool:
    return find_cycle(trace) is not None


def traces_equal(t1: Trace, t2: Trace) -> bool:
    """Labelled-graph equality over (thread, index)-keyed nodes."""
    k1 = {n.key for n in t1.nodes}
    k2 = {n.key for n in t2.nodes}
    if k1 != k2:
        raise IncomparableTraces(
            f"node key sets differ: {sorted(k1 ^ k2)} not shared"
        )
    return frozenset(t1.nodes) == frozenset(t2.nodes) and t1.edges == t2.edges


# ---------------------------------------------------------------------------
# Happens-before-through
# ---------------------------------------------------------------------------


class _Relations:
    """Direct happens-before relations between trace nodes of one computation."""

    def __init__(self, c: Computation):
        self.node_of, _ = _nodes_of(c)
        self.st_pos: dict = {}
        for addr, seq in _store_order(c, self.node_of).items():
            for p, n in enumerate(seq):
                self.st_pos[n.key] = (addr, p)
        self.src_edges = set()
        self.cf_edges = set()
        trace = build_trace(c)
        for a, b, lab in trace.edges:
            if lab == SRC:
                self.src_edges.add((a, b))
            elif lab == CF:
                self.cf_edges.add((a, b))

    def related(self, u: TraceNode, v: TraceNode) -> bool:
        # po+ (issue-dated order), src, st, or cf
        if u.thread == v.thread and u.index < v.index:
            return True
        if (u.key, v.key) in self.src_edges or (u.key, v.key) in self.cf_edges:
            return True
        su, sv = self.st_pos.get(u.key), self.st_pos.get(v.key)
        if su and sv and su[0] == sv[0] and su[1] < sv[1]:
            return True
        return False


def hb_through(c: Computation, i: int, j: int) -> bool:
    """Does action i happen before action j through the actions between them?

    True iff a chain x=a0,..,a_{n+1}=y exists whose intermediaries form a
    subsequence of the actions strictly between i and j, consecutive elements
    related by po+ (issue-dated), src, st, or cf. Stores/fences are usually
    addressed at their commit index; either index denotes the same node.
    """
    if not 0 <= i < j < len(c.actions):
        raise IndexError(f"need 0 <= {i} < {j} < {len(c.actions)}")
    rel = _Relations(c)
    x = rel.node_of[i]
    y = rel.node_of[j]
    if rel.related(x, y):
        return True
    reachable: list[TraceNode] = []
    for p in range(i + 1, j):
        n = rel.node_of[p]
        if rel.related(x, n) or any(rel.related(m, n) for m in reachable):
            reachable.append(n)
    return any(rel.related(m, y) for m in reachable)


# ---------------------------------------------------------------------------
# Cost
# ---------------------------------------------------------------------------


def commit_window(c: Computation, i: int) -> list[int]:
    """Same-thread action indices strictly between the issue of commit i and i."""
    isu = c.issue_of[i]
    t = c.actions[i].thread
    return [j for j in range(isu + 1, i) if c.actions[j].thread == t]


def delayed_commits(c: Computation) -> list[int]:
    """Indices of store/fence commits overtaken by at least one own action."""
    out = []
    for i, a in enumerate(c.actions):
        if a.kind in (STORE, FENCE) and c.issue_of[i] is not None:
            if commit_window(c, i):
                out.append(i)
    return out


def delayed_store_count(c: Computation) -> int:
    return sum(1 for i in delayed_commits(c) if c.actions[i].kind == STORE)


def delaying_threads(c: Computation) -> frozenset[str]:
    return frozenset(c.actions[i].thread for i in delayed_commits(c))


def cost(c: Computation) -> CostTriple:
    """(delays, reorders, length): own actions overtaken by each store/fence,
    fully overtaken own stores/fences, and the number of actions."""
    delays = 0
    reorders = 0
    for i, a in enumerate(c.actions):
        if a.kind not in (STORE, FENCE) or c.issue_of[i] is None:
            continue
        isu = c.issue_of[i]
        window = commit_window(c, i)
        delays += len(window)
        for j in window:
            b = c.actions[j]
            if b.kind in (STORE, FENCE) and c.issue_of[j] is not None \
                    and c.issue_of[j] > isu:
                reorders += 1
    return CostTriple(delays, reorders, len(c.actions))
