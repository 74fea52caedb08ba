"""Rule-table compilation and trie-based sharing of rules across configurations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .netcore import (
    Configuration,
    Literal,
    LocatedPacket,
    Packet,
    Rule,
    Topology,
    conj_forget,
    conj_normalize,
    conj_satisfiable,
)
from .snetkat import (
    STAR_CAP,
    Assign,
    Bool,
    Eq,
    Link,
    Node,
    Seq,
    Star,
    StateEq,
    StateLink,
    Union,
    And,
    Or,
    Not,
    eval_policy,
    has_state,
    is_test,
    walk,
)

EXACT_MATCHING_LIMIT = 16


class FlowOptError(ValueError):
    pass


# -- symbolic hop compiler ----------------------------------------------------
#
# A path state is (sw, pt, seg_in, conj, writes, rules): the packet sits at the
# concrete location sw:pt, entered the current switch on port seg_in, the
# packet that arrived there satisfies conj, and writes holds field updates made
# since arrival.  rules are the per-hop rules emitted along the path so far.


def _push_not(a):
    match a:
        case Bool(v):
            return Bool(not v)
        case Not(x):
            return x
        case And(l, r):
            return Or(Not(l), Not(r))
        case Or(l, r):
            return And(Not(l), Not(r))
    return None


def _test_lit(st, f, positive, n):
    sw, pt, seg_in, conj, writes, rules = st
    wd = dict(writes)
    if f in wd:
        return [st] if (wd[f] == n) == positive else []
    c = conj | {Literal(f, positive, n)}
    if not conj_satisfiable(c):
        return []
    return [(sw, pt, seg_in, conj_normalize(c), writes, rules)]


def _sym(p, st, cap):
    sw, pt, seg_in, conj, writes, rules = st
    match p:
        case Bool(v):
            return [st] if v else []
        case Eq("sw", n):
            return [st] if sw == n else []
        case Eq("pt", n):
            return [st] if pt == n else []
        case Not(Eq("sw", n)):
            return [st] if sw != n else []
        case Not(Eq("pt", n)):
            return [st] if pt != n else []
        case Eq(f, n):
            return _test_lit(st, f, True, n)
        case Not(Eq(f, n)):
            return _test_lit(st, f, False, n)
        case Not(x):
            return _sym(_push_not(x), st, cap)
        case Assign("pt", n):
            return [(sw, n, seg_in, conj, writes, rules)]
        case Assign(f, n):
            wd = dict(writes)
            wd[f] = n
            return [(sw, pt, seg_in, conj, tuple(sorted(wd.items())), rules)]
        case Link(a, b, c, d):
            if (sw, pt) != (a, b):
                return []
            rule = Rule(sw, seg_in, conj, writes, pt)
            nxt = conj
            for f, v in writes:
                nxt = conj_forget(nxt, f) | {Literal(f, True, v)}
            return [(c, d, d, frozenset(nxt), (), rules + (rule,))]
        case Union(l, r) | Or(l, r):
            return _sym(l, st, cap) + _sym(r, st, cap)
        case Seq(l, r) | And(l, r):
            out = []
            for mid in _sym(l, st, cap):
                out += _sym(r, mid, cap)
            return out
        case Star(x):
            seen, frontier = {st}, [st]
            for _ in range(cap):
                nxt = []
                for s in frontier:
                    nxt += [y for y in _sym(x, s, cap) if y not in seen]
                if not nxt:
                    return sorted(seen, key=repr)
                seen.update(nxt)
                frontier = list(dict.fromkeys(nxt))
            raise FlowOptError(f"star did not converge within {cap} iterations")
        case StateEq() | StateLink():
            raise FlowOptError("compile a projected (state-free) program")
    raise FlowOptError(f"unknown node {p!r}")


def compile_config(p: Node, topo: Topology, cid: int = 0, name: str = "",
                   diagnostics: list | None = None) -> Configuration:
    """Compile a state-free program into per-hop rule tables.

    Only paths that end at a host-attached port produce rules.
    """
    if has_state(p):
        raise FlowOptError("compile a projected (state-free) program")
    ordered: dict[Rule, int] = {}
    for host, loc in sorted(topo.hosts.items()):
        start = (loc.sw, loc.pt, loc.pt, frozenset(), (), ())
        for sw, pt, seg_in, conj, writes, rules in _sym(p, start, STAR_CAP):
            if topo.is_host_location(sw, pt):
                for r in rules + (Rule(sw, seg_in, conj, writes, pt),):
                    ordered.setdefault(r, len(ordered))
            elif diagnostics is not None:
                diagnostics.append(f"path from {host} ends at {sw}:{pt} with no link and no host")
    rules = frozenset(Rule(r.sw, r.in_port, r.match, r.writes, r.out_port, prio)
                      for r, prio in ordered.items())
    return Configuration(topo, rules, cid, name)


def probe_packets(p: Node, topo: Topology) -> list:
    """Probe headers over declared fields: constants seen in p, host addrs, and a fresh value."""
    consts: dict[str, set] = {f: set() for f in topo.fields}
    for n in walk(p):
        if isinstance(n, (Eq, Assign)) and n.field in consts:
            consts[n.field].add(n.value)
    out = []
    for f in topo.fields:
        vals = consts[f] | set(topo.host_addr.values())
        consts[f] = sorted(vals | {max(vals, default=0) + 1})
    names = [f for f in topo.fields if f != "echo"] or list(topo.fields)
    for combo in itertools.product(*[consts[f] for f in names]):
        out.append(Packet(dict(zip(names, combo))))
    return out


def table_walk(C: Configuration, lp: LocatedPacket, bound: int = 64) -> set:
    """Deliveries reachable hop by hop, as (final located packet, hops)."""
    out, stack = set(), [(lp, ())]
    while stack:
        cur, hops = stack.pop()
        if len(hops) > bound:
            raise FlowOptError("table walk exceeded bound")
        succs, delivered = C.forward(cur)
        for host, pkt in delivered:
            loc = C.topo.hosts[host]
            out.add((LocatedPacket(loc.sw, loc.pt, pkt), hops))
        for s in succs:
            stack.append((s, hops + (s,)))
    return out


def policy_deliveries(p: Node, topo: Topology, lp: LocatedPacket) -> set:
    return {(fin, hops) for fin, hops in eval_policy(p, lp) if topo.is_host_location(fin.sw, fin.pt)}


def tables_agree(p: Node, C: Configuration) -> list:
    """Probe-based comparison of table evaluation with the program; returns mismatches."""
    bad = []
    for host, loc in sorted(C.topo.hosts.items()):
        for pkt in probe_packets(p, C.topo):
            lp = LocatedPacket(loc.sw, loc.pt, pkt)
            a, b = table_walk(C, lp), policy_deliveries(p, C.topo, lp)
            if a != b:
                bad.append((lp, a, b))
    return bad


# -- guarded tables -----------------------------------------------------------


@dataclass
class GuardedTables:
    """Rule tables keyed by configuration id (the version tag)."""

    configs: dict  # id -> Configuration

    def rule_count(self) -> int:
        return sum(len(C.rules) for C in self.configs.values())

    def rule_sets(self) -> list:
        return [self.configs[i].rules for i in sorted(self.configs)]

    def dump(self) -> str:
        return "\n".join(self.configs[i].dump() for i in sorted(self.configs))


def compile_tables(nes, topo: Topology | None = None, p: Node | None = None) -> GuardedTables:
    """Guarded tables for every event-set of ``nes``; guards are the ids."""
    configs = {}
    for X, i in nes.ids.items():
        C = nes.g[X]
        configs[i] = Configuration(C.topo if topo is None else topo, C.rules, i, C.name)
    return GuardedTables(configs)


# -- trie heuristic -----------------------------------------------------------


@dataclass
class TrieNode:
    mask: str
    rules: frozenset
    real: bool
    leaf: int | None = None  # input configuration index at a leaf
    children: tuple = ()


@dataclass
class Trie:
    k: int
    order: list  # leaf id -> input index (None for padding)
    root: TrieNode
    configs: list = field(default_factory=list)

    def nodes(self):
        stack = [(self.root, None)]
        while stack:
            node, parent = stack.pop()
            yield node, parent
            for c in node.children:
                stack.append((c, node))


def _bits(i, k):
    return format(i, f"0{k}b") if k else ""


def _pad(configs):
    configs = [frozenset(c) for c in configs]
    k = math.ceil(math.log2(len(configs))) if len(configs) > 1 else 0
    full = frozenset().union(*configs) if configs else frozenset()
    return k, configs + [full] * (2 ** k - len(configs))


def build_trie(configs, order) -> Trie:
    """Trie whose leaf ``j`` holds configuration ``order[j]`` (None = padding)."""
    k, padded = _pad(configs)
    n = len(configs)
    if len(order) != 2 ** k:
        raise FlowOptError("order must cover 2**k leaves")
    full = frozenset().union(*padded)
    level = []
    for j, idx in enumerate(order):
        rules = padded[idx] if idx is not None else full
        level.append(TrieNode(_bits(j, k), rules, idx is not None, idx))
    depth = k
    while len(level) > 1:
        depth -= 1
        nxt = []
        for j in range(0, len(level), 2):
            a, b = level[j], level[j + 1]
            mask = a.mask[:depth] + "*" * (k - depth)
            nxt.append(TrieNode(mask, a.rules & b.rules, a.real or b.real, None, (a, b)))
        level = nxt
    return Trie(k, list(order), level[0], [frozenset(c) for c in configs])


def _pair_nodes(nodes):
    """Pair nodes maximising the summed intersection sizes."""
    m = len(nodes)
    if m <= EXACT_MATCHING_LIMIT:
        g = nx.Graph()
        g.add_nodes_from(range(m))
        for i, j in itertools.combinations(range(m), 2):
            g.add_edge(i, j, weight=len(nodes[i][1] & nodes[j][1]) + 1)
        matching = nx.max_weight_matching(g, maxcardinality=True)
        pairs = [tuple(sorted(e)) for e in matching]
    else:
        cand = sorted(((len(nodes[i][1] & nodes[j][1]), -i, -j) for i, j in itertools.combinations(range(m), 2)),
                      reverse=True)
        used, pairs = set(), []
        for _w, i, j in cand:
            i, j = -i, -j
            if i not in used and j not in used:
                used |= {i, j}
                pairs.append((i, j))
    return sorted(pairs)


def trie_assign(configs) -> list:
    """Leaf order built bottom-up by greedy level-wise pairing."""
    k, padded = _pad(configs)
    n = len(configs)
    nodes = [((i if i < n else None,), padded[i]) for i in range(len(padded))]
    while len(nodes) > 1:
        nodes = [(nodes[i][0] + nodes[j][0], nodes[i][1] & nodes[j][1]) for i, j in _pair_nodes(nodes)]
    return list(nodes[0][0])


def emit_wildcard_rules(trie: Trie) -> list:
    """(mask, rule) pairs: each rule once, at the highest node holding it."""
    out = []
    for node, parent in trie.nodes():
        if not node.real:
            continue
        extra = node.rules - (parent.rules if parent is not None else frozenset())
        out += [(node.mask, r) for r in extra]
    return sorted(out, key=lambda mr: (mr[0], repr(mr[1])))


def rule_count(trie: Trie) -> int:
    return len(emit_wildcard_rules(trie))


def naive_count(configs) -> int:
    return sum(len(c) for c in configs)


def guard_matches(mask: str, leaf_id: int, k: int) -> bool:
    bits = _bits(leaf_id, k)
    return all(m in ("*", b) for m, b in zip(mask, bits))


def expand_leaf(trie: Trie, wildcard_rules, leaf_id: int) -> frozenset:
    return frozenset(r for mask, r in wildcard_rules if guard_matches(mask, leaf_id, trie.k))


def optimize(configs):
    """Heuristic trie plus its wildcard rules for the given rule sets."""
    order = trie_assign(configs)
    trie = build_trie(configs, order)
    return trie, emit_wildcard_rules(trie)


def brute_force_optimal(configs, limit: int = 8) -> int:
    """Minimal rule count over all leaf orders (exhaustive)."""
    if len(configs) > limit:
        raise FlowOptError(f"brute force limited to {limit} configurations")
    k, padded = _pad(configs)
    n = len(configs)
    slots = list(range(n)) + [None] * (2 ** k - n)
    best = None
    seen = set()
    for perm in itertools.permutations(slots):
        if perm in seen:
            continue
        seen.add(perm)
        c = rule_count(build_trie(configs, list(perm)))
        best = c if best is None else min(best, c)
    return best


def random_configs(rng: np.random.Generator, n_configs=64, n_rules=20, universe=40) -> list:
    """Uniformly random ``n_rules``-subsets of a ``universe``-sized rule pool."""
    return [frozenset(int(x) for x in rng.choice(universe, size=n_rules, replace=False))
            for _ in range(n_configs)]


def savings(configs) -> float:
    trie, _ = optimize(configs)
    return 1.0 - rule_count(trie) / naive_count(configs)
