"""Controller broadcast on a ring.

The event fires at H2's switch. Packets only travel along one half of the
ring, so without the controller rebroadcasting, switches on the far half
never hear about it. With broadcast on they all learn it within a few steps.
"""

from eventnet.ets import build_ets
from eventnet.nes import build_nes
from eventnet.netcore import Topology
from eventnet.simulator import init, ring, run
from eventnet.snetkat import parse

print(f"{'diameter':>8} {'switches':>8} {'off':>6} {'on':>6}")
for d in range(1, 7):
    prog, topo_text, scenario = ring(d)
    topo = Topology.parse(topo_text)
    nes = build_nes(build_ets(parse(prog, topo.addr_env()), topo))
    (event,) = nes.events
    times = []
    for broadcast in (False, True):
        _, stats = run(init(nes, topo, scenario, seed=0, broadcast=broadcast))
        times.append(stats.learning_time(event, list(topo.switches)))
    print(f"{d:>8} {len(topo.switches):>8} {times[0]:>6} {times[1]:>6}")
