"""Packets, locations, topologies, configurations and network traces."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

RESERVED_FIELDS = ("version", "digest")


class NetcoreError(ValueError):
    pass


# -- packets and literals -----------------------------------------------------


class Packet:
    """Immutable header record: a finite map from field name to natural."""

    __slots__ = ("_items", "_hash")

    def __init__(self, fields: Mapping[str, int] | Iterable[tuple[str, int]] = ()):
        items = dict(fields)
        for f, v in items.items():
            if not isinstance(v, int) or v < 0:
                raise NetcoreError(f"field {f} must be a natural, got {v!r}")
        self._items = tuple(sorted(items.items()))
        self._hash = hash(self._items)

    def get(self, f, default=None):
        for k, v in self._items:
            if k == f:
                return v
        return default

    def set(self, **updates) -> "Packet":
        d = dict(self._items)
        d.update(updates)
        return Packet(d)

    def update(self, writes: Iterable[tuple[str, int]]) -> "Packet":
        d = dict(self._items)
        d.update(writes)
        return Packet(d)

    def strip(self, names=RESERVED_FIELDS) -> "Packet":
        return Packet((k, v) for k, v in self._items if k not in names)

    def items(self):
        return self._items

    def as_dict(self):
        return dict(self._items)

    def __eq__(self, other):
        return isinstance(other, Packet) and self._items == other._items

    def __lt__(self, other):
        return self._items < other._items

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "{" + ",".join(f"{k}={v}" for k, v in self._items) + "}"


class Literal(NamedTuple):
    """One conjunct ``field = value`` (positive) or ``field != value``."""

    field: str
    positive: bool
    value: int

    def holds(self, pkt: Packet) -> bool:
        v = pkt.get(self.field)
        if v is None:
            return False
        return (v == self.value) == self.positive

    def __str__(self):
        return f"{self.field}{'=' if self.positive else '!='}{self.value}"


Conj = frozenset  # frozenset[Literal]

TRUE_CONJ: frozenset = frozenset()


def conj_satisfiable(conj: Iterable[Literal]) -> bool:
    eq: dict[str, int] = {}
    neq: dict[str, set] = {}
    for lit in conj:
        if lit.positive:
            if eq.setdefault(lit.field, lit.value) != lit.value:
                return False
        else:
            neq.setdefault(lit.field, set()).add(lit.value)
    return all(eq[f] not in vals for f, vals in neq.items() if f in eq)


def conj_normalize(conj: Iterable[Literal]) -> frozenset:
    """Drop inequalities implied by an equality on the same field."""
    conj = frozenset(conj)
    eq = {lit.field: lit.value for lit in conj if lit.positive}
    return frozenset(
        lit for lit in conj
        if lit.positive or lit.field not in eq or eq[lit.field] == lit.value
    )


def conj_forget(conj: Iterable[Literal], f: str) -> frozenset:
    return frozenset(lit for lit in conj if lit.field != f)


def conj_holds(conj: Iterable[Literal], pkt: Packet) -> bool:
    return all(lit.holds(pkt) for lit in conj)


def conj_str(conj: Iterable[Literal]) -> str:
    lits = sorted(conj)
    return " & ".join(str(lit) for lit in lits) if lits else "true"


# -- locations and topology ---------------------------------------------------


class Location(NamedTuple):
    sw: int
    pt: int

    def __str__(self):
        return f"{self.sw}:{self.pt}"


@dataclass(frozen=True, order=True)
class LocatedPacket:
    sw: int
    pt: int
    pkt: Packet = field(compare=True)

    @property
    def loc(self) -> Location:
        return Location(self.sw, self.pt)

    def __repr__(self):
        return f"{self.sw}:{self.pt}{self.pkt!r}"


@dataclass(frozen=True)
class Event:
    """Arrival of a packet satisfying ``phi`` at ``sw:pt``."""

    phi: frozenset
    sw: int
    pt: int
    eid: str = ""

    def sort_key(self):
        return (self.sw, self.pt, self.eid, sorted(self.phi))

    def __str__(self):
        tag = f"_{self.eid}" if self.eid else ""
        return f"({conj_str(self.phi)}, {self.sw}:{self.pt}){tag}"


def matches(lp: LocatedPacket, e: Event, universe: Iterable[str] | None = None) -> bool:
    if universe is not None:
        known = set(universe)
        bad = [lit.field for lit in e.phi if lit.field not in known]
        if bad:
            raise NetcoreError(f"event references undeclared field(s) {bad}")
    return lp.sw == e.sw and lp.pt == e.pt and conj_holds(e.phi, lp.pkt)


_LOC = r"(\d+):(\d+)"


@dataclass
class Topology:
    switches: dict = field(default_factory=dict)  # sw -> frozenset of ports
    hosts: dict = field(default_factory=dict)  # name -> Location
    host_addr: dict = field(default_factory=dict)  # name -> address
    links: dict = field(default_factory=dict)  # Location -> Location
    fields: tuple = ("ip_src", "ip_dst", "echo")

    @classmethod
    def parse(cls, text: str) -> "Topology":
        topo = cls()
        declared = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if m := re.fullmatch(r"switch\s+(\d+)\s+ports\s+([\d,\s]+)", line):
                ports = frozenset(int(p) for p in m.group(2).replace(" ", "").split(",") if p)
                topo.switches[int(m.group(1))] = ports
            elif m := re.fullmatch(rf"host\s+(\w+)\s+at\s+{_LOC}(?:\s+addr\s+(\d+))?", line):
                name = m.group(1)
                topo.hosts[name] = Location(int(m.group(2)), int(m.group(3)))
                if m.group(4) is not None:
                    topo.host_addr[name] = int(m.group(4))
                else:
                    digits = re.sub(r"\D", "", name)
                    if not digits:
                        raise NetcoreError(f"line {lineno}: host {name} needs an addr")
                    topo.host_addr[name] = int(digits)
            elif m := re.fullmatch(rf"link\s+{_LOC}\s*->\s*{_LOC}", line):
                a, b = Location(int(m.group(1)), int(m.group(2))), Location(int(m.group(3)), int(m.group(4)))
                topo.links[a] = b
            elif m := re.fullmatch(r"fields?\s+([\w,\s]+)", line):
                declared += [f for f in re.split(r"[,\s]+", m.group(1)) if f]
            else:
                raise NetcoreError(f"line {lineno}: cannot parse {raw!r}")
        if declared:
            topo.fields = tuple(declared)
        topo.validate()
        return topo

    def validate(self):
        for a, b in self.links.items():
            for loc in (a, b):
                if loc.pt not in self.switches.get(loc.sw, ()):
                    raise NetcoreError(f"link endpoint {loc} is not a switch port")
        linked = set(self.links) | set(self.links.values())
        for name, loc in self.hosts.items():
            if loc.pt not in self.switches.get(loc.sw, ()):
                raise NetcoreError(f"host {name} attached to unknown port {loc}")
            if loc in linked:
                raise NetcoreError(f"host {name} attached to a linked port {loc}")

    def dump(self) -> str:
        out = [f"fields {','.join(self.fields)}"]
        out += [f"switch {s} ports {','.join(map(str, sorted(p)))}" for s, p in sorted(self.switches.items())]
        out += [f"host {h} at {loc} addr {self.host_addr[h]}" for h, loc in sorted(self.hosts.items())]
        out += [f"link {a} -> {b}" for a, b in sorted(self.links.items())]
        return "\n".join(out) + "\n"

    def has_location(self, sw, pt) -> bool:
        return pt in self.switches.get(sw, ())

    def host_at(self, loc) -> str | None:
        for name, hloc in self.hosts.items():
            if hloc == loc:
                return name
        return None

    def is_host_location(self, sw, pt) -> bool:
        return Location(sw, pt) in set(self.hosts.values())

    def addr_env(self) -> dict:
        return dict(self.host_addr)

    def host_by_addr(self, addr) -> str | None:
        for name, a in self.host_addr.items():
            if a == addr:
                return name
        return None


# -- configurations -----------------------------------------------------------


@dataclass(frozen=True)
class Rule:
    """Match-action rule; identity ignores the priority."""

    sw: int
    in_port: int
    match: frozenset
    writes: tuple
    out_port: int
    priority: int = field(default=0, compare=False)

    def fires(self, lp: LocatedPacket) -> bool:
        return lp.sw == self.sw and lp.pt == self.in_port and conj_holds(self.match, lp.pkt)

    def sort_key(self):
        return (self.sw, self.in_port, sorted(self.match), self.writes, self.out_port)

    def __str__(self):
        w = "".join(f"{f}<-{v}; " for f, v in self.writes)
        return f"sw={self.sw} in={self.in_port} [{conj_str(self.match)}] -> {w}out {self.out_port}"


def outputs(rules: Iterable[Rule], lp: LocatedPacket) -> list:
    """(out port, packet) pairs produced by every rule that fires on ``lp``."""
    outs = {(r.out_port, lp.pkt.update(r.writes)) for r in rules if r.fires(lp)}
    return sorted(outs, key=lambda o: (o[0], o[1]))


@dataclass(frozen=True, eq=False)
class Configuration:
    """Per-switch rule tables over a topology.

    All rules whose match holds fire, and their outputs are unioned (NetKAT
    ``+``). The induced relation on located packets also crosses links.
    """

    topo: Topology
    rules: frozenset
    cid: int = 0
    name: str = ""

    def __eq__(self, other):
        return isinstance(other, Configuration) and self.rules == other.rules

    def __hash__(self):
        return hash(self.rules)

    def table(self, sw) -> list:
        return sorted((r for r in self.rules if r.sw == sw), key=lambda r: r.priority)

    def forward(self, lp: LocatedPacket):
        """One hop at ``lp.sw``: returns (link successors, host deliveries)."""
        if not self.topo.has_location(lp.sw, lp.pt):
            raise NetcoreError(f"unknown location {lp.sw}:{lp.pt}")
        succs, delivered = set(), set()
        for port, out in outputs(self.rules, lp):
            here = Location(lp.sw, port)
            if here in self.topo.links:
                dst = self.topo.links[here]
                succs.add(LocatedPacket(dst.sw, dst.pt, out))
            else:
                host = self.topo.host_at(here)
                if host is not None:
                    delivered.add((host, out))
        return sorted(succs), sorted(delivered, key=lambda hp: (hp[0], hp[1]))

    def relates(self, a: LocatedPacket, b: LocatedPacket) -> bool:
        return b in self.forward(a)[0]

    def dump(self) -> str:
        lines = [f"config {self.cid} {self.name}".rstrip()]
        for r in sorted(self.rules, key=Rule.sort_key):
            lines.append("  " + str(r))
        return "\n".join(lines)


def apply_config(C: Configuration, lp: LocatedPacket) -> set:
    return set(C.forward(lp)[0])


def default_bound(topo: Topology) -> int:
    return max(2, 2 * len(topo.links))


def packet_traces(C: Configuration, lp0: LocatedPacket, bound: int | None = None) -> set:
    """All maximal packet traces from ``lp0`` (a host ingress) of length <= bound."""
    if bound is None:
        bound = default_bound(C.topo)
    if bound <= 0:
        raise NetcoreError("bound must be positive")
    if not C.topo.is_host_location(lp0.sw, lp0.pt):
        raise NetcoreError(f"{lp0.sw}:{lp0.pt} is not a host location")
    out = set()
    stack = [(lp0,)]
    while stack:
        tr = stack.pop()
        succs = apply_config(C, tr[-1])
        if not succs:
            out.add(tr)
            continue
        if len(tr) >= bound:
            raise NetcoreError(f"trace exceeds bound {bound}; forwarding loop?")
        for s in sorted(succs):
            stack.append(tr + (s,))
    return out


def in_traces(C: Configuration, seq) -> bool:
    """Membership of a (maximal) packet trace in Traces(C), by stepping."""
    if not seq or not C.topo.is_host_location(seq[0].sw, seq[0].pt):
        return False
    for a, b in zip(seq, seq[1:]):
        if not C.relates(a, b):
            return False
    return not C.forward(seq[-1])[0]


# -- network traces -----------------------------------------------------------


@dataclass(frozen=True)
class NetworkTrace:
    lps: tuple = ()
    trees: tuple = ()  # tuple of strictly increasing index tuples

    def __len__(self):
        return len(self.lps)

    def packet_trace(self, t) -> tuple:
        return tuple(self.lps[k] for k in t)

    def trees_through(self, k) -> list:
        return [t for t in self.trees if k in t]

    def dump(self) -> str:
        member = {i: [] for i in range(len(self.lps))}
        for ti, t in enumerate(self.trees):
            for k in t:
                member.setdefault(k, []).append(ti)
        lines = []
        for i, lp in enumerate(self.lps):
            tids = ",".join(map(str, member[i])) or "-"
            lines.append(f"{i} {tids} {lp.sw}:{lp.pt} {lp.pkt!r}")
        lines.append("trees")
        for ti, t in enumerate(self.trees):
            lines.append(f"t{ti}: " + " ".join(map(str, t)))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "NetworkTrace":
        lps, trees, in_trees = [], [], False
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "trees":
                in_trees = True
                continue
            if in_trees:
                m = re.fullmatch(r"t\d+:\s*([\d\s]*)", line)
                if not m:
                    raise NetcoreError(f"bad tree line {line!r}")
                trees.append(tuple(int(x) for x in m.group(1).split()))
                continue
            m = re.fullmatch(r"(\d+)\s+(\S+)\s+(\d+):(\d+)\s+\{(.*)\}", line)
            if not m or int(m.group(1)) != len(lps):
                raise NetcoreError(f"bad trace line {line!r}")
            fields = {}
            for kv in filter(None, m.group(5).split(",")):
                k, v = kv.split("=")
                fields[k.strip()] = int(v)
            lps.append(LocatedPacket(int(m.group(3)), int(m.group(4)), Packet(fields)))
        return cls(tuple(lps), tuple(trees))


def is_network_trace(ntr: NetworkTrace, configs: Iterable[Configuration]) -> bool:
    configs = list(configs)
    n = len(ntr.lps)
    covered = set()
    parent: dict[int, int] = {}
    roots = set()
    for t in ntr.trees:
        if not t or any(k < 0 or k >= n for k in t):
            return False
        if any(a >= b for a, b in zip(t, t[1:])):
            return False
        covered.update(t)
        first = ntr.lps[t[0]]
        if not configs or not configs[0].topo.is_host_location(first.sw, first.pt):
            return False
        pt = ntr.packet_trace(t)
        if not any(all(C.relates(a, b) for a, b in zip(pt, pt[1:])) for C in configs):
            return False
        roots.add(t[0])
        for a, b in zip(t, t[1:]):
            if parent.setdefault(b, a) != a:
                return False
    if covered != set(range(n)):
        return False
    return not (roots & set(parent))


class HappensBefore:
    """Least partial order generated by per-switch and per-tree index order."""

    def __init__(self, ntr: NetworkTrace):
        n = len(ntr.lps)
        succ = [set() for _ in range(n)]
        last_at: dict[int, int] = {}
        for i, lp in enumerate(ntr.lps):
            if lp.sw in last_at:
                succ[last_at[lp.sw]].add(i)
            last_at[lp.sw] = i
        for t in ntr.trees:
            for a, b in zip(t, t[1:]):
                succ[a].add(b)
        reach = [0] * n
        for i in range(n - 1, -1, -1):
            bits = 0
            for j in succ[i]:
                bits |= (1 << j) | reach[j]
            reach[i] = bits
        self._reach = reach
        self.n = n

    def precedes(self, i, j) -> bool:
        return bool(self._reach[i] >> j & 1)

    def pairs(self) -> set:
        return {(i, j) for i in range(self.n) for j in range(self.n) if self.precedes(i, j)}


def happens_before(ntr: NetworkTrace) -> HappensBefore:
    return HappensBefore(ntr)
