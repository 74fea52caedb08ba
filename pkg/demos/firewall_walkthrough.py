"""Stateful firewall, end to end.

H1 may talk to H4 at any time. Replies from H4 are dropped until H1's first
packet reaches s4, at which point the firewall opens. The script compiles the
program, shows each stage, then runs the same ping scenario with the
event-driven runtime and with uncoordinated per-switch swaps.
"""

from eventnet import corpus
from eventnet.ets import build_ets
from eventnet.flowopt import compile_tables, optimize
from eventnet.nes import build_nes
from eventnet.simulator import simulate
from eventnet.verifier import check_trace

case = corpus.load("firewall")
print("program:")
print(case.source)

ets = build_ets(case.program, case.topology)
print("transition system:")
print(ets.dump())

nes = build_nes(ets)
print("\nevent structure:")
print(nes.dump())

tables = compile_tables(nes, case.topology, case.program)
trie, wild = optimize(tables.rule_sets())
print(f"\nguarded rules: {tables.rule_count()} naive, {len(wild)} after sharing")
for mask, rule in wild:
    print(f"  [{mask or '-'}] {rule}")

print("\nscenario: ping H4->H1, ping H1->H4, ping H4->H1")
for mode, delay in (("nes", 0), ("uncoordinated", 1000)):
    trace, stats = simulate(nes, case.topology, case.scenario, seed=1, mode=mode, delay_ms=delay)
    pattern = "".join("+" if ok else "-" for ok in stats.ping_pattern())
    verdict = check_trace(trace, nes)
    print(f"\n{mode}: pings {pattern}, incorrectly dropped {stats.incorrectly_dropped}")
    print("  " + verdict.render().replace("\n", "\n  "))
