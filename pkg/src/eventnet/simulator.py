"""Seeded interleaving simulator for switches, hosts and the controller.

Three modes share one engine:

* ``nes``: switches keep local event-sets, packets carry a version tag and a
  digest of the events they have heard about.
* ``uncoordinated``: switches forward with whatever configuration the
  controller last pushed; pushes lag behind events.
* ``atomic``: a reference network where every event takes effect everywhere
  at once. It is only used to tell which packets a correct network delivers.
"""

from __future__ import annotations

import random
import re
from collections import Counter, deque
from dataclasses import dataclass, field

from .flowopt import compile_tables, guard_matches, optimize
from .nes import NES, set_str
from .netcore import LocatedPacket, Location, NetworkTrace, Packet, Topology, matches, outputs

MODES = ("nes", "uncoordinated", "atomic")

# Uncoordinated pushes: fixed controller latency, then the requested delay.
# Scenario delays are given in milliseconds and scaled to scheduler steps.
CONTROLLER_LATENCY_STEPS = 16
STEPS_PER_MS = 0.01
SWAP_JITTER_STEPS = 8
DEFAULT_MAX_STEPS = 200_000

INF = float("inf")


class SimulationError(RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


# -- scenarios ----------------------------------------------------------------


@dataclass(frozen=True)
class Command:
    kind: str  # inject, ping, barrier, sleep
    host: str = ""
    fields: tuple = ()
    n: int = 0


def parse_scenario(text: str, topo: Topology) -> list:
    env = topo.addr_env()
    cmds = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if m := re.fullmatch(r"inject\s+(\w+)\s*\{(.*)\}", line):
            host = _host(topo, m.group(1), lineno)
            fields = []
            for kv in filter(None, (x.strip() for x in m.group(2).split(","))):
                k, _, v = kv.partition("=")
                v = v.strip()
                if v in env:
                    v = env[v]
                elif not v.isdigit():
                    raise SimulationError(f"line {lineno}: bad field value {kv!r}")
                fields.append((k.strip(), int(v)))
            cmds.append(Command("inject", host, tuple(sorted(fields))))
        elif m := re.fullmatch(r"ping\s+(\w+)\s+(\w+)", line):
            src, dst = _host(topo, m.group(1), lineno), _host(topo, m.group(2), lineno)
            fields = (("echo", 1), ("ip_dst", topo.host_addr[dst]), ("ip_src", topo.host_addr[src]))
            cmds.append(Command("ping", src, fields))
        elif line == "barrier":
            cmds.append(Command("barrier"))
        elif m := re.fullmatch(r"sleep\s+(\d+)", line):
            cmds.append(Command("sleep", n=int(m.group(1))))
        else:
            raise SimulationError(f"line {lineno}: cannot parse {raw!r}")
    return cmds


def _host(topo, name, lineno):
    if name not in topo.hosts:
        raise SimulationError(f"line {lineno}: unknown host {name}")
    return name


# -- state --------------------------------------------------------------------


@dataclass(frozen=True)
class SimPacket:
    pkt: Packet
    version: int | None  # None until the ingress switch tags it
    digest: int
    parent: int | None  # trace index of the previous hop
    origin: tuple  # (command index, generation); replies bump the generation


@dataclass
class SwitchState:
    n: int
    qin: dict
    qout: dict
    E: frozenset = frozenset()


@dataclass
class PingResult:
    cmd: int
    src: str
    dst: str
    ok: bool = False


@dataclass
class Stats:
    pings: list = field(default_factory=list)
    delivered: Counter = field(default_factory=Counter)  # (ingress host, receiving host)
    dropped: Counter = field(default_factory=Counter)  # (ingress host, ip_dst)
    deliveries: Counter = field(default_factory=Counter)  # (cmd, generation, host)
    learned: dict = field(default_factory=dict)  # switch -> {event: step}
    steps: int = 0
    complete: bool = True
    incorrectly_dropped: int | None = None

    def ping_pattern(self) -> list:
        return [p.ok for p in self.pings]

    def learning_time(self, event, switches) -> float:
        return max(self.learned.get(sw, {}).get(event, INF) for sw in switches)


@dataclass
class SimState:
    nes: NES
    topo: Topology
    cmds: list
    mode: str
    rng: random.Random
    switches: dict
    outbox: dict  # host -> deque of SimPacket
    tables: dict  # version -> rules, nes and atomic modes
    broadcast: bool = False
    delay_steps: int = 0
    Q: deque = field(default_factory=deque)
    R: frozenset = frozenset()
    X: frozenset = frozenset()  # atomic mode global event-set
    pc: int = 0
    pc_since: int = 0
    clock: int = 0
    swaps: list = field(default_factory=list)  # (due, sw, event-set), uncoordinated
    reported: dict = field(default_factory=dict)
    lps: list = field(default_factory=list)
    parents: list = field(default_factory=list)
    stats: Stats = field(default_factory=Stats)


def _versioned_tables(N: NES, topo: Topology) -> dict:
    """Per-version rule lists, read back out of the wildcard-guarded tables."""
    guarded = compile_tables(N, topo)
    ids = sorted(guarded.configs)
    trie, wild = optimize([guarded.configs[i].rules for i in ids])
    leaf_of = {cfg: pos for pos, cfg in enumerate(trie.order) if cfg is not None}
    tables = {}
    for i in ids:
        tag = leaf_of[ids.index(i)]
        tables[i] = [r for mask, r in wild if guard_matches(mask, tag, trie.k)]
        if frozenset(tables[i]) != guarded.configs[i].rules:
            raise SimulationError(f"wildcard tables disagree with configuration {i}")
    return tables


def init(N: NES, topo: Topology, scenario, seed: int = 0, mode: str = "nes",
         broadcast: bool = False, delay_steps: int = 0) -> SimState:
    if mode not in MODES:
        raise SimulationError(f"unknown mode {mode!r}")
    if mode == "nes":
        local = N.is_locally_determined()
        if not local:
            raise SimulationError("NES is not locally determined: " + local.message, local.witness)
    cmds = parse_scenario(scenario, topo) if isinstance(scenario, str) else list(scenario)
    switches = {sw: SwitchState(sw, {p: deque() for p in sorted(ports)}, {p: deque() for p in sorted(ports)})
                for sw, ports in sorted(topo.switches.items())}
    tables = _versioned_tables(N, topo)
    s = SimState(N, topo, cmds, mode, random.Random(seed), switches,
                 {h: deque() for h in sorted(topo.hosts)}, tables,
                 broadcast=broadcast, delay_steps=delay_steps)
    s.reported = {sw: set() for sw in switches}
    return s


def ctrl_broadcast_toggle(s: SimState, on: bool) -> SimState:
    if s.mode != "nes":
        raise SimulationError("controller broadcast only applies in nes mode")
    s.broadcast = on
    return s


# -- steps --------------------------------------------------------------------


def _quiet(s: SimState) -> bool:
    if any(s.outbox.values()):
        return False
    return not any(q for st in s.switches.values() for q in (*st.qin.values(), *st.qout.values()))


def _scenario_ready(s: SimState) -> bool:
    if s.pc >= len(s.cmds):
        return False
    cmd = s.cmds[s.pc]
    if cmd.kind == "barrier":
        return _quiet(s)
    if cmd.kind == "sleep":
        return s.clock >= s.pc_since + cmd.n
    return True


def applicable(s: SimState) -> list:
    acts = []
    if _scenario_ready(s):
        acts.append(("scenario",))
    acts += [("in", h) for h, q in s.outbox.items() if q]
    for sw, st in s.switches.items():
        acts += [("switch", sw, p) for p, q in st.qin.items() if q]
        acts += [("out", sw, p) for p, q in st.qout.items() if q]
    if s.Q:
        acts.append(("recv",))
    if s.broadcast and s.mode == "nes":
        acts += [("send", sw) for sw, st in s.switches.items() if not s.R <= st.E]
    return acts


def _learn(s: SimState, sw: int, events):
    seen = s.stats.learned.setdefault(sw, {})
    for e in events:
        seen.setdefault(e, s.clock)


def _set_E(s: SimState, st: SwitchState, E: frozenset):
    if E != st.E:
        if E not in s.nes.ids:
            raise SimulationError(f"switch {st.n} reached {set_str(E)}, not an event-set")
        _learn(s, st.n, E - st.E)
        st.E = E


def _record(s: SimState, lp: LocatedPacket, parent) -> int:
    s.lps.append(lp)
    s.parents.append(parent)
    return len(s.lps) - 1


def _first_match(s: SimState, X: frozenset, lp: LocatedPacket):
    cands = [e for e in s.nes.enabled_events(X) if matches(lp, e)]
    return min(cands, key=s.nes.index.__getitem__) if cands else None


def _switch(s: SimState, sw: int, port: int):
    N = s.nes
    st = s.switches[sw]
    sp = st.qin[port].popleft()
    lp = LocatedPacket(sw, port, sp.pkt)
    version, digest = sp.version, sp.digest
    if s.mode == "nes":
        if version is None:
            version, digest = N.ids[st.E], N.encode(st.E)
        _set_E(s, st, st.E | N.decode(digest))
        e = _first_match(s, st.E, lp)
        if e is not None:
            _set_E(s, st, st.E | {e})
            s.Q.append(e)
        digest |= N.encode(st.E)
        rules = s.tables[version]
    elif s.mode == "atomic":
        if version is None:
            version = N.ids[s.X]
        e = _first_match(s, s.X, lp)
        if e is not None:
            s.X = s.X | {e}
            for other in s.switches:
                _learn(s, other, {e})
        rules = s.tables[version]
    else:
        e = _first_match(s, st.E, lp)
        if e is not None and e not in s.reported[sw]:
            s.reported[sw].add(e)
            s.Q.append(e)
        rules = s.tables[N.ids[st.E]]
    idx = _record(s, lp, sp.parent)
    outs = outputs(rules, lp)
    if not outs:
        s.stats.dropped[(_ingress_host(s, sp), sp.pkt.get("ip_dst"))] += 1
    for out_port, pkt in outs:
        child = SimPacket(pkt, version, digest, idx, sp.origin)
        assert child.version == version
        st.qout[out_port].append(child)


def _ingress_host(s: SimState, sp: SimPacket) -> str:
    cmd, gen = sp.origin
    host = s.cmds[cmd].host
    if gen % 2 == 1:
        host = s.topo.host_by_addr(dict(s.cmds[cmd].fields).get("ip_dst")) or host
    return host


def _out(s: SimState, sw: int, port: int):
    st = s.switches[sw]
    sp = st.qout[port].popleft()
    here = Location(sw, port)
    dst = s.topo.links.get(here)
    if dst is not None:
        s.switches[dst.sw].qin[dst.pt].append(sp)
        return
    host = s.topo.host_at(here)
    if host is None:
        s.stats.dropped[(_ingress_host(s, sp), sp.pkt.get("ip_dst"))] += 1
        return
    _deliver(s, host, sp)


def _deliver(s: SimState, host: str, sp: SimPacket):
    stats = s.stats
    cmd, gen = sp.origin
    stats.deliveries[(cmd, gen, host)] += 1
    stats.delivered[(_ingress_host(s, sp), host)] += 1
    addr = s.topo.host_addr[host]
    if sp.pkt.get("ip_dst") != addr:
        return
    echo = sp.pkt.get("echo")
    if echo == 1:
        reply = Packet({"ip_src": addr, "ip_dst": sp.pkt.get("ip_src"), "echo": 2})
        s.outbox[host].append(SimPacket(reply, None, 0, None, (cmd, gen + 1)))
    elif echo == 2:
        for p in stats.pings:
            if p.cmd == cmd and p.src == host:
                p.ok = True


def _scenario(s: SimState):
    cmd = s.cmds[s.pc]
    if cmd.kind in ("inject", "ping"):
        s.outbox[cmd.host].append(SimPacket(Packet(dict(cmd.fields)), None, 0, None, (s.pc, 0)))
        if cmd.kind == "ping":
            dst = s.topo.host_by_addr(dict(cmd.fields)["ip_dst"])
            s.stats.pings.append(PingResult(s.pc, cmd.host, dst))
    s.pc += 1
    s.pc_since = s.clock


def _in(s: SimState, host: str):
    sp = s.outbox[host].popleft()
    loc = s.topo.hosts[host]
    s.switches[loc.sw].qin[loc.pt].append(sp)


def _recv(s: SimState):
    e = s.Q.popleft()
    if s.mode == "uncoordinated":
        if e in s.R or (s.R | {e}) not in s.nes.ids:
            return
        s.R = s.R | {e}
        base = s.clock + CONTROLLER_LATENCY_STEPS + s.delay_steps
        for sw in sorted(s.switches):
            s.swaps.append((base + s.rng.randint(0, SWAP_JITTER_STEPS), sw, s.R))
        s.swaps.sort(key=lambda x: (x[0], x[1]))
    else:
        s.R = s.R | {e}


def _send(s: SimState, sw: int):
    st = s.switches[sw]
    _set_E(s, st, st.E | s.R)


def _apply_swaps(s: SimState):
    while s.swaps and s.swaps[0][0] <= s.clock:
        _, sw, X = s.swaps.pop(0)
        st = s.switches[sw]
        if st.E < X:
            _set_E(s, st, X)


def _check_queue_consistency(s: SimState):
    if s.mode == "nes" and not s.nes.con(set(s.Q) | s.R):
        raise SimulationError(f"Q u R inconsistent at step {s.clock}", (tuple(s.Q), s.R))


def step(s: SimState, act: tuple | None = None) -> bool:
    """Apply one rule, chosen by the scheduler unless ``act`` is given.

    Returns False when nothing can happen.
    """
    _apply_swaps(s)
    acts = applicable(s)
    if act is not None:
        if act not in acts:
            raise SimulationError(f"{act} is not applicable")
        acts = [act]
    if not acts:
        pending = [x[0] for x in s.swaps]
        if s.pc < len(s.cmds) and s.cmds[s.pc].kind == "sleep":
            pending.append(s.pc_since + s.cmds[s.pc].n)
        if not pending:
            return False
        s.clock = max(s.clock, min(pending))
        return True
    act = s.rng.choice(acts)
    kind = act[0]
    if kind == "scenario":
        _scenario(s)
    elif kind == "in":
        _in(s, act[1])
    elif kind == "switch":
        _switch(s, act[1], act[2])
    elif kind == "out":
        _out(s, act[1], act[2])
    elif kind == "recv":
        _recv(s)
    elif kind == "send":
        _send(s, act[1])
    s.clock += 1
    s.stats.steps += 1
    _check_queue_consistency(s)
    return True


def trace_of(s: SimState) -> NetworkTrace:
    """Network trace with one root-to-leaf index path per packet copy."""
    children = {}
    for i, p in enumerate(s.parents):
        if p is not None:
            children.setdefault(p, []).append(i)
    paths = []
    for i, p in enumerate(s.parents):
        if i in children:
            continue
        path = [i]
        while s.parents[path[-1]] is not None:
            path.append(s.parents[path[-1]])
        paths.append(tuple(reversed(path)))
    paths.sort()
    return NetworkTrace(tuple(s.lps), tuple(paths))


def run(s: SimState, max_steps: int = DEFAULT_MAX_STEPS):
    while s.stats.steps < max_steps:
        if not step(s):
            break
    else:
        s.stats.complete = not applicable(s) and not s.swaps
    return trace_of(s), s.stats


def run_uncoordinated(s: SimState, delay_steps: int, max_steps: int = DEFAULT_MAX_STEPS):
    if s.mode != "uncoordinated":
        raise SimulationError("run_uncoordinated needs a state built in uncoordinated mode")
    s.delay_steps = delay_steps
    return run(s, max_steps)


def delay_to_steps(delay_ms: float) -> int:
    return int(round(delay_ms * STEPS_PER_MS))


def incorrectly_dropped(reference: Stats, actual: Stats) -> int:
    """Deliveries the reference network made that the actual run missed."""
    return sum(max(0, n - actual.deliveries[k]) for k, n in reference.deliveries.items())


def simulate(N: NES, topo: Topology, scenario, seed: int = 0, mode: str = "nes",
             broadcast: bool = False, delay_ms: float = 0, max_steps: int = DEFAULT_MAX_STEPS):
    """Run one scenario and compare deliveries with the atomic reference."""
    s = init(N, topo, scenario, seed, mode, broadcast, delay_to_steps(delay_ms))
    trace, stats = run(s, max_steps)
    ref = init(N, topo, scenario, seed, "atomic")
    _, ref_stats = run(ref, max_steps)
    stats.incorrectly_dropped = incorrectly_dropped(ref_stats, stats)
    return trace, stats


# -- ring generator -----------------------------------------------------------


def ring(diameter: int):
    """Ring of 2*diameter switches with hosts at opposite switches.

    Returns (program source, topology text, scenario text). H1 pings H2 along
    one half of the ring; the event fires where the request reaches H2's switch,
    so switches on the other half only learn it from the controller.
    """
    if diameter < 1:
        raise ValueError("diameter must be at least 1")
    n = 2 * diameter
    far = diameter + 1
    topo = []
    for i in range(1, n + 1):
        topo.append(f"switch {i} ports 1,2,3")
    topo += ["host H1 at 1:3", f"host H2 at {far}:3"]
    for i in range(1, n + 1):
        j = i % n + 1
        topo += [f"link {i}:1 -> {j}:2", f"link {j}:2 -> {i}:1"]
    fwd = []
    for i in range(1, far):
        link = f"({i}:1)->({i + 1}:2)"
        if i + 1 == far:
            link += "-><state<-[1]>"
        fwd.append(f"pt<-1; {link}")
    back = [f"pt<-2; ({i}:2)->({i - 1}:1)" for i in range(far, 1, -1)]
    prog = (f"pt=3 & ip_dst=H2; {'; '.join(fwd)}; pt<-3\n"
            f"+ pt=3 & ip_dst=H1; {'; '.join(back)}; pt<-3\n")
    scenario = "ping H1 H2\nbarrier\nping H1 H2\nbarrier\n"
    return prog, "\n".join(topo) + "\n", scenario
