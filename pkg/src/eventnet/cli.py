"""Command-line driver: compile, simulate, verify, optimize, report.

Program, topology and scenario arguments accept a file path or ``corpus:NAME``
for the bundled case studies (firewall, learning, auth, bandwidth, ids).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus
from .ets import ETSError, build_ets, check_finite_complete, check_loop_free, check_unique_config, event_set_family
from .flowopt import (FlowOptError, brute_force_optimal, compile_tables, naive_count, optimize, random_configs,
                      rule_count, tables_agree)
from .nes import NESError, build_nes
from .netcore import NetcoreError, NetworkTrace, Topology
from .simulator import SimulationError, simulate
from .snetkat import SNetKATError, parse, project_config
from .verifier import check_trace

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _read(arg: str, kind: str, cap: int) -> str:
    if arg.startswith("corpus:"):
        name = arg.split(":", 1)[1]
        if name not in corpus.PROGRAMS:
            raise UsageError(f"unknown corpus entry {name!r}")
        return {"program": corpus.program_source, "topology": lambda n, c: corpus.topology_source(n),
                "scenario": corpus.scenario_source}[kind](name, cap)
    path = Path(arg)
    if not path.exists():
        raise UsageError(f"{kind} file not found: {arg}")
    return path.read_text(encoding="utf-8")


def _state(text):
    if text is None:
        return None
    try:
        return tuple(int(x) for x in text.strip("[]").split(",") if x.strip())
    except ValueError:
        raise UsageError(f"bad --initial-state {text!r}")


class Compiled:
    def __init__(self, program_arg, topology_arg, initial_state=None, cap=corpus.DEFAULT_CAP):
        t0 = time.perf_counter()
        self.topo = Topology.parse(_read(topology_arg, "topology", cap))
        self.program = parse(_read(program_arg, "program", cap), self.topo.addr_env())
        self.ets = build_ets(self.program, self.topo, _state(initial_state))
        self.nes = build_nes(self.ets)
        self.tables = compile_tables(self.nes, self.topo, self.program)
        self.seconds = time.perf_counter() - t0

    def summary(self) -> dict:
        trie, wild = optimize(self.tables.rule_sets())
        return {
            "vertices": len(self.ets.vertices),
            "edges": len(self.ets.edges),
            "events": len(self.nes.events),
            "configurations": len(self.nes.ids),
            "rules_before": self.tables.rule_count(),
            "rules_after": len(wild),
        }


def _compile(args) -> Compiled:
    return Compiled(args.program, args.topology, args.initial_state, args.cap)


def cmd_compile(args) -> int:
    c = _compile(args)
    s = c.summary()
    print(f"compiled in {c.seconds:.4f} s")
    for k, v in s.items():
        print(f"{k}: {v}")
    for d in c.ets.diagnostics:
        print(f"diagnostic: {d}")
    bad = []
    for X, C in c.nes.g.items():
        k = next(v for v, lab in c.ets.vertices.items() if lab == C)
        bad += tables_agree(project_config(c.program, k), C)
    if bad:
        print(f"table check failed on {len(bad)} probes", file=sys.stderr)
        return EXIT_FAIL
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ets.txt").write_text(c.ets.dump() + "\n")
        (out / "nes.txt").write_text(c.nes.dump() + "\n")
        (out / "tables.txt").write_text(c.tables.dump() + "\n")
    return EXIT_OK


def cmd_ets(args) -> int:
    topo = Topology.parse(_read(args.topology, "topology", args.cap))
    p = parse(_read(args.program, "program", args.cap), topo.addr_env())
    T = build_ets(p, topo, _state(args.initial_state))
    print(T.dump())
    F = event_set_family(T) if check_loop_free(T) else {}
    for check in (check_loop_free(T), check_unique_config(F), check_finite_complete(F)):
        if not check:
            print(f"check failed: {check.message}")
            return EXIT_FAIL
    return EXIT_OK


def cmd_nes(args) -> int:
    c = _compile(args)
    print(c.nes.dump())
    local = c.nes.is_locally_determined()
    print(f"locally-determined: {'yes' if local else 'no'}")
    return EXIT_OK if local else EXIT_FAIL


def _seeds(args):
    return range(args.seed, args.seed + args.seeds)


def cmd_simulate(args) -> int:
    c = _compile(args)
    scenario = _read(args.scenario, "scenario", args.cap)
    out = Path(args.out_dir) if args.out_dir else None
    runs = []
    failures = 0
    for seed in _seeds(args):
        trace, stats = simulate(c.nes, c.topo, scenario, seed, args.mode,
                                broadcast=args.ctrl_broadcast == "on", delay_ms=args.delay,
                                max_steps=args.max_steps)
        verdict = check_trace(trace, c.nes) if args.mode == "nes" else None
        ok = verdict.accepted if verdict is not None else None
        failures += ok is False or not stats.complete
        pattern = "".join("+" if x else "-" for x in stats.ping_pattern())
        print(f"seed {seed}: steps={stats.steps} trace={len(trace)} pings={pattern or '-'} "
              f"incorrectly-dropped={stats.incorrectly_dropped} complete={stats.complete}"
              + (f" verdict={'accept' if ok else 'reject'}" if verdict is not None else ""))
        runs.append({"seed": seed, "mode": args.mode, "delay": args.delay, "pings": pattern,
                     "steps": stats.steps, "complete": stats.complete, "accepted": ok,
                     "incorrectly_dropped": stats.incorrectly_dropped,
                     "delivered": sum(stats.deliveries.values())})
        if args.out:
            Path(args.out).write_text(trace.dump())
        if out:
            out.mkdir(parents=True, exist_ok=True)
            (out / f"trace-{args.mode}-{seed}.txt").write_text(trace.dump())
    if out and runs:
        report = {"program": args.program, **c.summary(), "runs": runs}
        (out / "run.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    return EXIT_FAIL if failures else EXIT_OK


def cmd_verify(args) -> int:
    c = _compile(args)
    path = Path(args.trace)
    if not path.exists():
        raise UsageError(f"trace file not found: {args.trace}")
    ntr = NetworkTrace.parse(path.read_text())
    v = check_trace(ntr, c.nes)
    print(v.render())
    return EXIT_OK if v else EXIT_FAIL


def cmd_optimize(args) -> int:
    if args.random:
        rng = np.random.default_rng(args.seed)
        vals = []
        for _ in range(args.random):
            cfgs = random_configs(rng, args.configs, args.rules, args.universe)
            trie, _ = optimize(cfgs)
            vals.append(1 - rule_count(trie) / naive_count(cfgs))
        print(f"instances: {args.random}")
        print(f"mean savings: {np.mean(vals):.3f}")
        return EXIT_OK
    c = _compile(args)
    sets = c.tables.rule_sets()
    trie, wild = optimize(sets)
    print(f"rules before: {naive_count(sets)}")
    print(f"rules after: {len(wild)}")
    print("leaf assignment: " + " ".join("-" if i is None else str(i) for i in trie.order))
    if len(sets) <= 8 and args.exact:
        print(f"optimum: {brute_force_optimal(sets)}")
    if args.dump:
        for mask, r in wild:
            print(f"  [{mask or '-'}] {r}")
    return EXIT_OK


def cmd_corpus(args) -> int:
    """Compile and simulate every case study; one run directory per program."""
    out = Path(args.out_dir or "runs")
    failures = 0
    for name in corpus.PROGRAMS:
        c = Compiled(f"corpus:{name}", f"corpus:{name}", cap=args.cap)
        scenario = corpus.scenario_source(name, args.cap)
        runs = []
        for mode in ("nes", "uncoordinated"):
            for seed in _seeds(args):
                trace, stats = simulate(c.nes, c.topo, scenario, seed, mode,
                                        broadcast=args.ctrl_broadcast == "on", delay_ms=args.delay,
                                        max_steps=args.max_steps)
                ok = bool(check_trace(trace, c.nes)) if mode == "nes" else None
                failures += ok is False
                runs.append({"seed": seed, "mode": mode, "delay": args.delay,
                             "pings": "".join("+" if x else "-" for x in stats.ping_pattern()),
                             "steps": stats.steps, "complete": stats.complete, "accepted": ok,
                             "incorrectly_dropped": stats.incorrectly_dropped,
                             "delivered": sum(stats.deliveries.values())})
        d = out / name
        d.mkdir(parents=True, exist_ok=True)
        (d / "run.json").write_text(json.dumps({"program": name, **c.summary(), "runs": runs},
                                               indent=1, sort_keys=True) + "\n")
        print(f"{name}: {len(runs)} runs -> {d}")
    return EXIT_FAIL if failures else EXIT_OK


def cmd_sweep(args) -> int:
    """Uncoordinated delay sweep on one program; writes a run directory."""
    c = _compile(args)
    scenario = _read(args.scenario, "scenario", args.cap)
    runs = []
    for delay in args.delays:
        for seed in _seeds(args):
            _, stats = simulate(c.nes, c.topo, scenario, seed, "uncoordinated", delay_ms=delay,
                                max_steps=args.max_steps)
            runs.append({"seed": seed, "mode": "uncoordinated", "delay": delay,
                         "pings": "".join("+" if x else "-" for x in stats.ping_pattern()),
                         "steps": stats.steps, "complete": stats.complete, "accepted": None,
                         "incorrectly_dropped": stats.incorrectly_dropped,
                         "delivered": sum(stats.deliveries.values())})
    out = Path(args.out_dir or "sweep")
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(json.dumps({"program": args.program, **c.summary(), "runs": runs},
                                             indent=1, sort_keys=True) + "\n")
    print(f"{len(runs)} runs -> {out}")
    return EXIT_OK


def aggregate(run_dirs) -> tuple:
    """Text table and CSV text from run.json files."""
    reports = []
    for d in run_dirs:
        p = Path(d) / "run.json"
        if not p.exists():
            raise UsageError(f"no run.json in {d}")
        reports.append(json.loads(p.read_text()))
    lines = []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["program", "mode", "delay", "runs", "accepted", "incorrectly_dropped", "delivered"])
    if reports:
        lines.append(f"{'program':<28} {'V':>3} {'E':>3} {'ev':>3} {'rules':>11} {'mode':<14} "
                     f"{'delay':>6} {'runs':>4} {'ok':>4} {'dropped':>8}")
    for rep in reports:
        groups = {}
        for r in rep["runs"]:
            groups.setdefault((r["mode"], r["delay"]), []).append(r)
        for (mode, delay), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            ok = sum(1 for r in rs if r["accepted"])
            dropped = sum(r["incorrectly_dropped"] or 0 for r in rs)
            delivered = sum(r["delivered"] for r in rs)
            rules = f"{rep['rules_before']}->{rep['rules_after']}"
            lines.append(f"{rep['program']:<28} {rep['vertices']:>3} {rep['edges']:>3} {rep['events']:>3} "
                         f"{rules:>11} {mode:<14} {delay:>6} {len(rs):>4} "
                         f"{ok if mode == 'nes' else '-':>4} {dropped:>8}")
            writer.writerow([rep["program"], mode, delay, len(rs), ok if mode == "nes" else "",
                             dropped, delivered])
    return "\n".join(lines), buf.getvalue()


def cmd_report(args) -> int:
    text, csv_text = aggregate(args.run_dirs)
    if text:
        print(text)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    return EXIT_OK


def _common(p, scenario=False):
    p.add_argument("program")
    p.add_argument("topology")
    if scenario:
        p.add_argument("scenario")
    p.add_argument("--initial-state", help="comma-separated initial state vector")
    p.add_argument("--cap", type=int, default=corpus.DEFAULT_CAP, help="bandwidth-cap n for corpus:bandwidth")


def _run_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--mode", choices=("nes", "uncoordinated"), default="nes")
    p.add_argument("--delay", type=float, default=0, help="uncoordinated push delay in ms")
    p.add_argument("--ctrl-broadcast", choices=("on", "off"), default="off")
    p.add_argument("--max-steps", type=int, default=200_000)
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eventnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="program -> ETS -> NES -> guarded tables")
    _common(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("ets", help="dump the transition system")
    p.add_argument("action", choices=("dump",))
    _common(p)
    p.set_defaults(func=cmd_ets)

    p = sub.add_parser("nes", help="dump the event structure")
    p.add_argument("action", choices=("dump",))
    _common(p)
    p.set_defaults(func=cmd_nes)

    p = sub.add_parser("simulate", help="run a scenario and check the traces")
    _common(p, scenario=True)
    _run_flags(p)
    p.add_argument("--out", help="write the (last) trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check a trace file against a program")
    p.add_argument("trace")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("optimize", help="trie-based rule sharing")
    p.add_argument("program", nargs="?")
    p.add_argument("topology", nargs="?")
    p.add_argument("--initial-state")
    p.add_argument("--cap", type=int, default=corpus.DEFAULT_CAP)
    p.add_argument("--exact", action="store_true", help="also report the brute-force optimum")
    p.add_argument("--dump", action="store_true", help="print the wildcard rules")
    p.add_argument("--random", type=int, default=0, help="instead run N random instances")
    p.add_argument("--configs", type=int, default=64)
    p.add_argument("--rules", type=int, default=20)
    p.add_argument("--universe", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("corpus", help="compile and simulate every case study")
    p.add_argument("--cap", type=int, default=corpus.DEFAULT_CAP)
    _run_flags(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("sweep", help="uncoordinated delay sweep")
    _common(p, scenario=True)
    _run_flags(p)
    p.add_argument("--delays", type=float, nargs="+", default=[d * 500.0 for d in range(11)])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("run_dirs", nargs="*")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.command == "optimize" and not args.random and not (args.program and args.topology):
        print("optimize needs a program and topology, or --random N", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SNetKATError, NetcoreError, ETSError, NESError, FlowOptError, SimulationError) as e:
        print(f"error: {e}", file=sys.stderr)
        witness = getattr(e, "witness", None)
        if witness is not None:
            print(f"witness: {_fmt_witness(witness)}", file=sys.stderr)
        return EXIT_FAIL


def _fmt_witness(w) -> str:
    if isinstance(w, (set, frozenset)):
        return "{" + ", ".join(sorted(str(x) for x in w)) + "}"
    if isinstance(w, (tuple, list)):
        return "(" + ", ".join(_fmt_witness(x) for x in w) + ")"
    return str(w)


if __name__ == "__main__":
    sys.exit(main())
