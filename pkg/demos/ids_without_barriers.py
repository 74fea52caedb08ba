"""Where the event-driven runtime and the trace checker part ways.

The IDS scenario normally waits for the network to go quiet between pings.
Without those barriers an H2 request can leave s4 before s4 hears about H1,
and still arrive at s2 after the H1 event in the recorded trace. The checker
takes that arrival as the occurrence of the second event (it matches, and
both configurations forward it), so a later packet that s4 still handled
with the older configuration is out of step. The runtime never fired the event there because s2
had not yet heard of H1.
"""

from eventnet import corpus
from eventnet.ets import build_ets
from eventnet.nes import build_nes
from eventnet.simulator import simulate
from eventnet.verifier import check_trace

case = corpus.load("ids")
nes = build_nes(build_ets(case.program, case.topology))
no_barriers = "".join(line + "\n" for line in case.scenario.splitlines() if line != "barrier")

rejected = []
for seed in range(40):
    trace, _ = simulate(nes, case.topology, no_barriers, seed=seed)
    verdict = check_trace(trace, nes)
    if not verdict:
        rejected.append((seed, verdict))
print(f"without barriers: {len(rejected)} of 40 seeds rejected")
if rejected:
    seed, verdict = rejected[0]
    print(f"\nseed {seed}:")
    print(verdict.render())

ok = sum(bool(check_trace(simulate(nes, case.topology, case.scenario, seed=s)[0], nes)) for s in range(40))
print(f"\nwith barriers: {ok} of 40 seeds accepted")
