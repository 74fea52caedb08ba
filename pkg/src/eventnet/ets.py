"""Event-driven transition systems and the checks needed before NES conversion."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .flowopt import compile_config
from .netcore import Event, Topology
from .snetkat import EventEdge, Node, extract_edges, project_config, state_space, state_width

PATH_CAP = 100_000


class ETSError(ValueError):
    pass


@dataclass
class Check:
    """Outcome of a static check; ``witness`` explains a rejection."""

    ok: bool
    witness: object = None
    message: str = ""

    def __bool__(self):
        return self.ok


@dataclass
class ETS:
    vertices: dict  # vertex (state vector) -> configuration label
    edges: list  # EventEdge, src/dst are vertex keys
    v0: object
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if self.v0 not in self.vertices:
            raise ETSError("initial vertex missing")
        for e in self.edges:
            if e.src not in self.vertices or e.dst not in self.vertices:
                raise ETSError(f"edge {e} leaves the vertex set")

    @property
    def events(self) -> set:
        return {e.event for e in self.edges}

    def out_edges(self, v) -> list:
        return [e for e in self.edges if e.src == v]

    def dump(self) -> str:
        lines = [f"v0 = {_vname(self.v0)}"]
        lines += [f"vertex {_vname(v)}" for v in sorted(self.vertices, key=repr)]
        lines += [f"edge {_vname(e.src)} --{e.event}--> {_vname(e.dst)}"
                  for e in sorted(self.edges, key=lambda e: (repr(e.src), e.event.sort_key()))]
        return "\n".join(lines)


def _vname(v):
    return str(list(v)) if isinstance(v, tuple) else str(v)


def _reaches(edges, a, b) -> bool:
    stack, seen = [a], {a}
    while stack:
        v = stack.pop()
        if v == b:
            return True
        for e in edges:
            if e.src == v and e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return False


def _rename(edges) -> list:
    """Give each edge its event id; copies that can chain on one path get ``@src``."""
    groups: dict = {}
    for e in edges:
        key = (e.event.phi, e.event.sw, e.event.pt, e.event.eid)
        groups.setdefault(key, []).append(e)
    out = []
    for group in groups.values():
        chained = any(_reaches(edges, a.dst, b.src) for a in group for b in group if a is not b)
        for e in group:
            eid = f"{e.event.eid}@{list(e.src)}" if chained else e.event.eid
            ev = Event(e.event.phi, e.event.sw, e.event.pt, eid)
            out.append(EventEdge(e.src, ev, e.dst))
    return out


def build_ets(p: Node, topo: Topology, k0=None) -> ETS:
    """ETS of a program: vertices are reachable state vectors with their tables."""
    k0 = tuple(k0) if k0 is not None else (0,) * state_width(p)
    space = state_space(p, k0)
    diagnostics = []
    raw = []
    for k in sorted(space.reachable):
        for e in sorted(extract_edges(p, k)[0], key=lambda e: (e.event.sort_key(), e.dst)):
            if e.src == e.dst:
                diagnostics.append(f"dropped self-loop edge {e}")
            else:
                raw.append(e)
    vertices = {}
    for k in sorted(space.reachable):
        vertices[k] = compile_config(project_config(p, k), topo, name=str(list(k)), diagnostics=diagnostics)
    return ETS(vertices, _rename(raw), k0, diagnostics)


def check_loop_free(T: ETS) -> Check:
    color: dict = {}
    stack_path: list = []

    def dfs(v):
        color[v] = 1
        stack_path.append(v)
        for e in T.out_edges(v):
            if color.get(e.dst) == 1:
                i = stack_path.index(e.dst)
                return stack_path[i:] + [e.dst]
            if e.dst not in color:
                cyc = dfs(e.dst)
                if cyc:
                    return cyc
        stack_path.pop()
        color[v] = 2
        return None

    for v in sorted(T.vertices, key=repr):
        if v not in color:
            cyc = dfs(v)
            if cyc:
                return Check(False, cyc, "ETS has a cycle: " + " -> ".join(map(_vname, cyc)))
    return Check(True)


@dataclass
class FamilyEntry:
    labels: list  # distinct configuration labels of terminal vertices
    vertices: set
    witness: tuple  # one path (edges) realising the set


def event_set_family(T: ETS, cap: int = PATH_CAP) -> dict:
    """All event sets E(p) for paths p from v0, with their terminal configurations."""
    fam: dict = {}
    count = 0
    stack = [(T.v0, frozenset(), ())]
    while stack:
        v, events, path = stack.pop()
        count += 1
        if count > cap:
            raise ETSError(f"more than {cap} paths; ETS too large")
        entry = fam.setdefault(events, FamilyEntry([], set(), path))
        entry.vertices.add(v)
        label = T.vertices[v]
        if not any(label == other for other in entry.labels):
            entry.labels.append(label)
        for e in T.out_edges(v):
            stack.append((e.dst, events | {e.event}, path + (e,)))
    return fam


def check_unique_config(F: dict) -> Check:
    for X in sorted(F, key=lambda s: (len(s), sorted(e.sort_key() for e in s))):
        if len(F[X].labels) > 1:
            return Check(False, X, f"event set {_sstr(X)} reaches {len(F[X].labels)} configurations")
    return Check(True)


def _sstr(X):
    return "{" + ", ".join(str(e) for e in sorted(X, key=Event.sort_key)) + "}"


def check_finite_complete(F: dict) -> Check:
    """Pairwise check: bounded pairs must have their union in the family."""
    sets = sorted(F, key=lambda s: (len(s), sorted(e.sort_key() for e in s)))
    for a, b in itertools.combinations(sets, 2):
        u = a | b
        if u in F:
            continue
        bound = next((c for c in sets if u <= c), None)
        if bound is not None:
            return Check(False, (a, b, bound),
                         f"{_sstr(a)} and {_sstr(b)} are bounded by {_sstr(bound)} but their union is missing")
    return Check(True)


def check_finite_complete_subfamilies(F: dict, max_size: int = 3) -> Check:
    """Same condition checked on every subfamily of up to ``max_size`` sets."""
    sets = list(F)
    for size in range(2, max_size + 1):
        for group in itertools.combinations(sets, size):
            u = frozenset().union(*group)
            if u not in F and any(u <= c for c in sets):
                return Check(False, group, "unbounded union missing")
    return Check(True)
