"""Command-line front end.

Subcommands: ``check`` (robustness verdict, exit 0 robust / 1 not robust /
2 unknown or error), ``simulate`` (replay a schedule), ``instrument`` (write
the rewritten program for one attack), ``properties`` (normal-form and
witness checks on the bounded oracle), ``report`` (corpus summary with CSV
and figures). Reports with ``--json`` are reproducible: the result payload
depends only on the input and configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from . import oracle as orc
from . import screach as rch
from . import semantics as sem
from . import traces as trc
from .instrument import Attack, InvalidAttack, enumerate_attacks, instrument_program
from .oracle import ExplorationConfig, NotFoundWithinBounds, PreconditionViolated, ViolationReport
from .syntax import Load, ParseError, Program, Store, parse_program, pretty_print, validate


def _load_program(path: str) -> Program:
    text = Path(path).read_text()
    program = parse_program(text)
    diags = validate(program)
    if diags:
        msgs = "\n".join(f"  {d.thread}:{d.label}: [{d.rule}] {d.message}" for d in diags)
        raise SystemExit(f"error: {path} does not validate:\n{msgs}")
    return program


def _input_hash(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _emit(args, subcommand: str, config: dict, result: dict, started: float,
          path: str) -> None:
    if getattr(args, "json", False):
        payload = {
            "tool": {"name": "rmmcheck", "version": __version__},
            "subcommand": subcommand,
            "input": path,
            "input_hash": _input_hash(path),
            "config": config,
            "result": result,
            "timing_seconds": round(time.monotonic() - started, 3),
        }
        print(json.dumps(payload, sort_keys=True))


def _schedule_arg(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _resolve_attack(program: Program, spec: str) -> Attack:
    parts = spec.split(":")
    if len(parts) != 3:
        raise SystemExit("error: --attack takes THREAD:STORE_LABEL:LAST_LABEL "
                         "(labels may be #index)")
    tname, st_spec, last_spec = parts
    try:
        thread = program.thread(tname)
    except KeyError:
        raise SystemExit(f"error: no thread named {tname!r}")

    def resolve(spec: str, kinds, what: str) -> int:
        if spec.startswith("#"):
            idx = int(spec[1:])
            if not 0 <= idx < len(thread.instructions):
                raise SystemExit(f"error: {what} index {idx} out of range")
            return idx
        matches = [i for i, li in enumerate(thread.instructions)
                   if li.label == spec and isinstance(li.instruction, kinds)]
        if not matches:
            raise SystemExit(f"error: no {what} instruction at label {spec!r} in {tname}")
        if len(matches) > 1:
            raise SystemExit(f"error: label {spec!r} is ambiguous in {tname}; "
                             f"use #index (candidates {matches})")
        return matches[0]

    return Attack(
        attacker=tname,
        stinst=resolve(st_spec, (Store,), "store"),
        lastinst=resolve(last_spec, (Store, Load), "store-or-load"),
    )


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    started = time.monotonic()
    program = _load_program(args.file)
    cfg = ExplorationConfig(buffer_bound=args.buffer_bound, max_actions=args.max_actions)
    limits = rch.ReachLimits(max_states=args.max_states)
    verdict = rch.check_robustness(
        program, mode=args.mode, oracle_cfg=cfg, limits=limits,
        all_attacks=args.all_attacks, use_por=args.use_por, jobs=args.jobs,
    )
    if args.emit_dot and verdict.robust is False:
        outdir = Path(args.emit_dot)
        outdir.mkdir(parents=True, exist_ok=True)
        trace, cycle = _violating_trace(verdict)
        if trace is not None:
            dot = outdir / f"{program.name}.dot"
            dot.write_text(trace.to_dot(cycle))
            if not args.json:
                print(f"wrote {dot}")
    config = {
        "mode": args.mode, "buffer_bound": args.buffer_bound,
        "max_actions": args.max_actions, "all_attacks": args.all_attacks,
        "use_por": args.use_por,
    }
    _emit(args, "check", config, verdict.to_json(), started, args.file)
    if not args.json:
        _print_verdict(verdict)
    return verdict.exit_code


def _violating_trace(verdict):
    if isinstance(verdict.oracle_result, ViolationReport):
        return verdict.oracle_result.trace, verdict.oracle_result.cycle
    if verdict.witness is not None:
        # SC witness of the instrumented program: acyclic by construction,
        # drawn for inspection of the feasible attack
        return trc.build_trace(verdict.witness), None
    return None, None


def _print_verdict(v) -> None:
    if v.robust is None:
        print(f"{v.program_name}: UNKNOWN ({v.note})")
        return
    word = "ROBUST" if v.robust else "NOT ROBUST"
    print(f"{v.program_name}: {word} [{v.mode}] {v.note}")
    if v.feasible_attack is not None:
        a = v.feasible_attack
        print(f"  feasible attack: thread {a.attacker}, "
              f"store #{a.stinst}, last #{a.lastinst}")
        if v.witness_schedule is not None:
            print(f"  SC witness schedule: {v.witness_schedule}")
    if isinstance(v.oracle_result, ViolationReport):
        rep = v.oracle_result
        print(f"  violation cost {tuple(rep.cost)}, "
              f"delaying threads {sorted(rep.delaying_threads)}, "
              f"{rep.delayed_store_count} delayed store(s)")
        print(f"  computation: {rep.computation}")
    for ar in v.attack_results:
        mark = "feasible" if ar.reachable else "unreachable"
        print(f"    attack {ar.attack.attacker}#{ar.attack.stinst}->"
              f"#{ar.attack.lastinst}: {mark}, {ar.states_visited} states")


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    started = time.monotonic()
    program = _load_program(args.file)
    if args.schedule is not None:
        schedule = args.schedule
    else:
        schedule = _greedy_schedule(program, args.sc, args.buffer_bound, args.max_steps)
    comp, state, stuck = sem.replay(program, schedule, sc=args.sc,
                                    buffer_bound=args.buffer_bound)
    result: dict = {
        "schedule": list(schedule),
        "computation": comp.to_json(),
        "final_state": state.describe(),
        "stuck": str(stuck) if stuck else None,
    }
    complete = stuck is None and state.buffers_empty
    if complete:
        trace = trc.build_trace(comp)
        cycle = trc.find_cycle(trace)
        result["trace"] = trace.to_json()
        result["cost"] = list(trc.cost(comp))
        result["cyclic"] = cycle is not None
    config = {"sc": args.sc, "buffer_bound": args.buffer_bound}
    _emit(args, "simulate", config, result, started, args.file)
    if not args.json:
        for i, a in enumerate(comp.actions):
            print(f"  {i:3d}  {a}")
        print(f"final: {state.describe()}")
        if stuck:
            print(stuck)
        elif complete:
            print(f"cost: {tuple(trc.cost(comp))}  cyclic: {result['cyclic']}")
        else:
            print("buffers not drained: partial computation, no trace/cost")
    return 0 if stuck is None else 2


def _greedy_schedule(program, sc, bound, max_steps) -> list[int]:
    cp = sem.compiled(program)
    cstate = sem.initial_cstate(cp)
    n = 0
    out = []
    while len(out) < max_steps:
        succs = (sem.sc_successors(cp, cstate, n) if sc
                 else sem.successors(cp, cstate, bound, n))
        if not succs:
            break
        out.append(0)
        _, codes, cstate = succs[0]
        n += len(codes)
    return out


# ---------------------------------------------------------------------------
# instrument
# ---------------------------------------------------------------------------


def cmd_instrument(args) -> int:
    started = time.monotonic()
    program = _load_program(args.file)
    attack = _resolve_attack(program, args.attack)
    try:
        ip = instrument_program(program, attack, args.mode)
    except (InvalidAttack, PreconditionViolated) as e:
        raise SystemExit(f"error: {e}")
    out = Path(args.output)
    out.write_text(pretty_print(ip.program))
    manifest_path = out.with_suffix(out.suffix + ".manifest.json")
    manifest_path.write_text(json.dumps(ip.manifest(), indent=2, sort_keys=True) + "\n")
    _emit(args, "instrument", {"attack": args.attack, "mode": args.mode},
          ip.manifest(), started, args.file)
    if not args.json:
        print(f"wrote {out} and {manifest_path} "
              f"({ip.instrumented_instructions} instructions, "
              f"ratio {ip.size_ratio:.2f})")
    return 0


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


def cmd_properties(args) -> int:
    started = time.monotonic()
    program = _load_program(args.file)
    cfg = ExplorationConfig(buffer_bound=args.buffer_bound, max_actions=args.max_actions)
    result: dict = {}
    loc = orc.check_locality(program, cfg)
    result["locality"] = loc.to_json()
    if orc.fence_free(program):
        sing = orc.check_singularity(program, cfg)
        result["singularity"] = sing.to_json()
    else:
        result["singularity"] = None
    minimal = orc.find_minimal_violation(program, cfg)
    if isinstance(minimal, ViolationReport):
        result["minimal_violation"] = minimal.to_json()
        try:
            w = orc.is_witness(minimal.computation)
            result["witness"] = w.to_json()
        except orc.NoDecomposition as e:
            result["witness"] = {"holds": False, "error": str(e)}
    else:
        result["minimal_violation"] = minimal.to_json()
        result["witness"] = None
    config = {"buffer_bound": args.buffer_bound, "max_actions": args.max_actions}
    _emit(args, "properties", config, result, started, args.file)
    if not args.json:
        _print_properties(program.name, result)
    return 0


def _print_properties(name: str, result: dict) -> None:
    loc = result["locality"]
    print(f"{name}:")
    print(f"  locality: {'holds' if loc['holds'] else 'FAILS'}"
          f"{' (vacuous: no violation within bounds)' if loc['vacuous'] else ''}")
    sing = result["singularity"]
    if sing is None:
        print("  singularity: skipped (program has fences)")
    else:
        print(f"  singularity: {'holds' if sing['holds'] else 'FAILS'}"
              f"{' (vacuous)' if sing['vacuous'] else ''}")
    mv = result["minimal_violation"]
    if mv and mv.get("found"):
        print(f"  bounded-minimal violation: cost {tuple(mv['cost'])}, "
              f"{mv['delayed_store_count']} delayed store(s)")
        w = result["witness"]
        conds = w.get("conditions", {})
        print(f"  witness shape: {'holds' if w['holds'] else 'FAILS'} "
              + " ".join(f"{k}={'ok' if v else 'NO'}" for k, v in conds.items()))
    else:
        print("  no violation within bounds")


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    from . import report as rep

    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in args.files:
        t0 = time.monotonic()
        program = _load_program(path)
        cfg = ExplorationConfig(buffer_bound=args.buffer_bound,
                                max_actions=args.max_actions)
        verdict = rch.check_robustness(program, mode="auto", all_attacks=True,
                                       jobs=args.jobs)
        states_full = sum(a.states_visited for a in verdict.attack_results)
        por_verdict = rch.check_robustness(program, mode=verdict.mode,
                                           all_attacks=True, use_por=True,
                                           jobs=args.jobs)
        states_por = sum(a.states_visited for a in por_verdict.attack_results)
        row = {
            "program": program.name,
            "file": path,
            "threads": len(program.threads),
            "instructions": sum(len(t.instructions) for t in program.threads),
            "mode": verdict.mode,
            "robust": verdict.robust,
            "attacks": len(verdict.attack_results),
            "feasible_attack": (
                f"{verdict.feasible_attack.attacker}"
                f"#{verdict.feasible_attack.stinst}->#{verdict.feasible_attack.lastinst}"
                if verdict.feasible_attack else ""
            ),
            "states_full": states_full,
            "states_por": states_por,
        }
        if verdict.robust is False:
            minimal = orc.find_minimal_violation(program, cfg)
            if isinstance(minimal, ViolationReport):
                row["oracle_cost"] = "/".join(map(str, minimal.cost))
                rep.trace_figure(
                    minimal.trace, outdir / f"{program.name}_trace.png",
                    cycle=minimal.cycle,
                    title=f"{program.name}: violating trace, cost {tuple(minimal.cost)}",
                )
                (outdir / f"{program.name}_trace.dot").write_text(
                    minimal.trace.to_dot(list(minimal.cycle)))
        row["seconds"] = round(time.monotonic() - t0, 2)
        rows.append(row)
        print(f"{program.name}: robust={row['robust']} mode={row['mode']} "
              f"states {states_full}/{states_por} ({row['seconds']}s)")
    rep.write_csv(rows, outdir / "report.csv")
    rep.states_figure(rows, outdir / "states.png")
    print(f"wrote {outdir / 'report.csv'} and figures")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rmmcheck",
        description="Robustness checking for store-buffered relaxed memory "
                    "via SC-reachability of instrumented programs",
    )
    ap.add_argument("--version", action="version", version=f"rmmcheck {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, oracle_opts=True):
        if oracle_opts:
            p.add_argument("--buffer-bound", type=int, default=3,
                           help="per-queue buffer bound for the oracle (default 3)")
            p.add_argument("--max-actions", type=int, default=24,
                           help="action budget for the oracle (default 24)")
        p.add_argument("--json", action="store_true", help="emit one JSON object")

    p = sub.add_parser("check", help="decide robustness")
    p.add_argument("file")
    p.add_argument("--mode", choices=["auto", "locality", "singularity", "oracle"],
                   default="auto")
    p.add_argument("--all-attacks", action="store_true",
                   help="report every attack instead of stopping at the first feasible")
    p.add_argument("--use-por", action="store_true",
                   help="use the reduced SC search for attack queries")
    p.add_argument("--emit-dot", metavar="DIR",
                   help="write the violating trace as DOT on NOT ROBUST")
    p.add_argument("--max-states", type=int, default=2_000_000)
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="replay a schedule")
    p.add_argument("file")
    p.add_argument("--schedule", type=_schedule_arg,
                   help="comma/space separated choice indices")
    p.add_argument("--sc", action="store_true", help="SC restriction")
    p.add_argument("--max-steps", type=int, default=200,
                   help="greedy run length when no schedule is given")
    common(p, oracle_opts=False)
    p.add_argument("--buffer-bound", type=int, default=3)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("instrument", help="write the rewritten program for one attack")
    p.add_argument("file")
    p.add_argument("--attack", required=True,
                   help="THREAD:STORE_LABEL:LAST_LABEL (labels may be #index)")
    p.add_argument("--mode", choices=["locality", "singularity"], default="locality")
    p.add_argument("-o", "--output", required=True)
    common(p, oracle_opts=False)
    p.set_defaults(func=cmd_instrument)

    p = sub.add_parser("properties", help="normal-form and witness checks (bounded oracle)")
    p.add_argument("file")
    common(p)
    p.set_defaults(func=cmd_properties)

    p = sub.add_parser("report", help="corpus summary: CSV table and figures")
    p.add_argument("files", nargs="+")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    except rch.BudgetExhausted as e:
        print(f"budget exhausted: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
