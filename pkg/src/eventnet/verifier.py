"""Correctness of network traces against event-driven consistent updates.

``check_trace`` is the fast path used by the tooling. ``brute_force_oracle``
re-derives the same verdict from first principles on small traces and is kept
deliberately naive so the two can be compared.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field

from .netcore import (Configuration, LocatedPacket, NetworkTrace, Packet, default_bound,
                      happens_before, in_traces, matches, packet_traces)
from .nes import NES, set_key

ORACLE_MAX_LPS = 12
ORACLE_MAX_EVENTS = 4


class VerifierError(ValueError):
    pass


@dataclass(frozen=True)
class UpdateSequence:
    """``C0 -e0-> C1 -e1-> ... -en-> Cn+1`` over the event universe.

    ``quiet`` lists the events that may not match after the last occurrence;
    it defaults to the whole universe.
    """

    configs: tuple
    events: tuple
    universe: frozenset
    quiet: frozenset | None = None

    def __post_init__(self):
        if len(self.configs) != len(self.events) + 1:
            raise VerifierError("need exactly one more configuration than events")
        if not set(self.events) <= set(self.universe):
            raise VerifierError("update events must come from the universe")

    @property
    def tail_events(self) -> frozenset:
        return frozenset(self.universe if self.quiet is None else self.quiet)


@dataclass
class Verdict:
    accepted: bool
    clause: str | None = None  # FO, a, b, c on rejection
    indices: tuple = ()
    sequence: tuple = ()
    fo: tuple = ()
    assignment: dict = field(default_factory=dict)  # tree index -> configuration index
    message: str = ""

    def __bool__(self):
        return self.accepted

    def render(self) -> str:
        lines = [f"verdict: {'accept' if self.accepted else 'reject'}"]
        if self.sequence:
            lines.append("sequence: " + " ".join(str(e) for e in self.sequence))
        if self.fo:
            lines.append("first-occurrences: " + " ".join(map(str, self.fo)))
        if self.assignment:
            lines.append("assignment: " + " ".join(f"t{t}=C{c}" for t, c in sorted(self.assignment.items())))
        if not self.accepted:
            lines.append(f"clause: {self.clause}")
            lines.append("indices: " + " ".join(map(str, self.indices)))
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines)


class _Membership:
    """Caches Traces(C) membership of each tree's packet trace."""

    def __init__(self, ntr: NetworkTrace):
        self.ntr = ntr
        self._cache: dict = {}

    def __call__(self, ti: int, C: Configuration) -> bool:
        key = (ti, id(C))
        if key not in self._cache:
            self._cache[key] = in_traces(C, self.ntr.packet_trace(self.ntr.trees[ti]))
        return self._cache[key]


def _first_occurrences(ntr, U, member):
    """Returns (indices, None) or (None, (reason, index))."""
    ks = []
    prev = -1
    for i, e in enumerate(U.events):
        k = next((j for j in range(prev + 1, len(ntr.lps)) if matches(ntr.lps[j], e)), None)
        if k is None:
            return None, (f"e{i} never occurs after index {prev}", prev)
        through = [ti for ti, t in enumerate(ntr.trees) if k in t]
        if not any(member(ti, U.configs[i]) for ti in through):
            return None, (f"occurrence of e{i} at {k} is not processed by C{i}", k)
        ks.append(k)
        prev = k
    tail = U.tail_events
    for j in range(prev + 1, len(ntr.lps)):
        if any(matches(ntr.lps[j], e) for e in tail):
            return None, (f"index {j} matches an event after the last occurrence", j)
    return tuple(ks), None


def first_occurrences(ntr: NetworkTrace, U: UpdateSequence):
    ks, _ = _first_occurrences(ntr, U, _Membership(ntr))
    return ks


def check_ecu(ntr: NetworkTrace, U: UpdateSequence, _member=None, _hb=None) -> Verdict:
    member = _member or _Membership(ntr)
    ks, why = _first_occurrences(ntr, U, member)
    if ks is None:
        return Verdict(False, "FO", (why[1],), tuple(U.events), message=why[0])
    hb = _hb or happens_before(ntr)
    last = len(U.configs) - 1
    order = sorted(range(len(ntr.trees)), key=lambda ti: ntr.trees[ti])
    assignment = {}
    for ti in order:
        t = ntr.trees[ti]
        mask = sum(1 << j for j in t)
        lo, hi = 0, last
        for i, k in enumerate(ks):
            if all(hb.precedes(j, k) for j in t):
                hi = min(hi, i)
            if hb._reach[k] & mask == mask:
                lo = max(lo, i + 1)
        members = [c for c in range(last + 1) if member(ti, U.configs[c])]
        fits = [c for c in members if lo <= c <= hi]
        if fits:
            assignment[ti] = fits[0]
            continue
        if not members:
            clause, msg = "a", "packet trace fits no configuration of the update"
        elif not any(c <= hi for c in members):
            clause, msg = "b", f"packet trace precedes e{hi} but needs a later configuration"
        else:
            clause, msg = "c", f"packet trace follows e{lo - 1} but needs an earlier configuration"
        return Verdict(False, clause, t, tuple(U.events), ks, message=msg)
    return Verdict(True, None, (), tuple(U.events), ks, assignment)


def update_for(N: NES, seq) -> UpdateSequence:
    prefixes = [frozenset(seq[:i]) for i in range(len(seq) + 1)]
    configs = tuple(N.config(X) for X in prefixes)
    return UpdateSequence(configs, tuple(seq), N.events, frozenset(N.enabled_events(prefixes[-1])))


def check_trace(ntr: NetworkTrace, N: NES) -> Verdict:
    """Accept iff some sequence allowed by ``N`` makes the trace a correct update.

    The empty sequence covers the event-free case. After the last event only
    events enabled at the final event-set are forbidden from matching.
    """
    member = _Membership(ntr)
    hb = happens_before(ntr)
    seqs = sorted(N.allowed_sequences(len(N.events)),
                  key=lambda s: (len(s), [e.sort_key() for e in s]))
    best = None
    for seq in seqs:
        v = check_ecu(ntr, update_for(N, seq), member, hb)
        if v:
            return v
        if best is None or (len(v.fo), v.clause != "FO") > (len(best.fo), best.clause != "FO"):
            best = v
    return best


# -- brute-force oracle -------------------------------------------------------


def _naive_hb(ntr):
    n = len(ntr.lps)
    rel = set()
    for i in range(n):
        for j in range(i + 1, n):
            if ntr.lps[i].sw == ntr.lps[j].sw:
                rel.add((i, j))
    for t in ntr.trees:
        for a in range(len(t)):
            for b in range(a + 1, len(t)):
                rel.add((t[a], t[b]))
    changed = True
    while changed:
        changed = False
        for (a, b) in list(rel):
            for (c, d) in list(rel):
                if b == c and (a, d) not in rel:
                    rel.add((a, d))
                    changed = True
    return rel


def _in_traces_enum(C, pt):
    first = pt[0]
    if not C.topo.is_host_location(first.sw, first.pt):
        return False
    bound = max(default_bound(C.topo), len(pt))
    return tuple(pt) in packet_traces(C, first, bound)


def brute_force_oracle(ntr: NetworkTrace, N: NES) -> Verdict:
    """Exhaustive evaluation of trace correctness for small instances."""
    if len(ntr.lps) > ORACLE_MAX_LPS or len(N.events) > ORACLE_MAX_EVENTS:
        raise VerifierError("instance exceeds oracle bounds")
    fam = set(N.family)
    hb = _naive_hb(ntr)
    L = len(ntr.lps)
    pts = [ntr.packet_trace(t) for t in ntr.trees]
    member_cache = {}

    def member(ti, C):
        key = (ti, id(C))
        if key not in member_cache:
            member_cache[key] = _in_traces_enum(C, pts[ti])
        return member_cache[key]

    events = sorted(N.events, key=lambda e: e.sort_key())
    for r in range(len(events) + 1):
        for seq in itertools.permutations(events, r):
            if not all(frozenset(seq[:i]) in fam for i in range(r + 1)):
                continue
            X = frozenset(seq)
            configs = [N.family[frozenset(seq[:i])] for i in range(r + 1)]
            quiet = [e for e in events if e not in X and X | {e} in fam]
            fos = []
            for ks in itertools.combinations(range(L), r):
                ok = True
                for i, k in enumerate(ks):
                    lo = ks[i - 1] if i else -1
                    if not matches(ntr.lps[k], seq[i]):
                        ok = False
                    elif any(matches(ntr.lps[j], seq[i]) for j in range(lo + 1, k)):
                        ok = False
                    elif not any(k in t and member(ti, configs[i]) for ti, t in enumerate(ntr.trees)):
                        ok = False
                    if not ok:
                        break
                last = ks[-1] if ks else -1
                if ok and any(matches(ntr.lps[j], e) for j in range(last + 1, L) for e in quiet):
                    ok = False
                if ok:
                    fos.append(ks)
            if len(fos) > 1:
                raise VerifierError(f"first occurrences not unique: {fos}")
            if not fos:
                continue
            ks = fos[0]
            assignment = {}
            for ti, t in enumerate(ntr.trees):
                choice = None
                for c in range(r + 1):
                    if not member(ti, configs[c]):
                        continue
                    good = True
                    for i, k in enumerate(ks):
                        if all((j, k) in hb for j in t) and not c <= i:
                            good = False
                        if all((k, j) in hb for j in t) and not c >= i + 1:
                            good = False
                    if good:
                        choice = c
                        break
                if choice is None:
                    break
                assignment[ti] = choice
            else:
                return Verdict(True, None, (), seq, ks, assignment)
    return Verdict(False, "oracle", message="no allowed sequence works")


# -- random traces ------------------------------------------------------------


def random_trace(N: NES, topo, rng: random.Random, max_lps: int = ORACLE_MAX_LPS,
                 max_packets: int = 4) -> NetworkTrace:
    """Interleave packet trees drawn from random event-set configurations."""
    hosts = sorted(topo.hosts)
    event_sets = sorted(N.event_sets(), key=set_key)
    trees = []
    total = 0
    for _ in range(rng.randint(0, max_packets)):
        src, dst = rng.choice(hosts), rng.choice(hosts)
        loc = topo.hosts[src]
        pkt = Packet({"ip_src": topo.host_addr[src], "ip_dst": topo.host_addr[dst],
                      "echo": rng.choice((0, 1))})
        C = N.config(rng.choice(event_sets))
        paths = sorted(packet_traces(C, LocatedPacket(loc.sw, loc.pt, pkt)))
        nodes = {}
        for path in paths:
            for depth in range(len(path)):
                nodes.setdefault(path[:depth + 1], None)
        if total + len(nodes) > max_lps:
            break
        total += len(nodes)
        trees.append((paths, list(nodes)))
    return interleave(trees, rng)


def interleave(trees, rng: random.Random) -> NetworkTrace:
    """Random linear extension of a list of (root-to-leaf paths, prefix nodes)."""
    pending = [set(nodes) for _, nodes in trees]
    placed: dict = {}
    lps = []
    while any(pending):
        ready = [(ti, n) for ti, ns in enumerate(pending) for n in ns
                 if len(n) == 1 or (ti, n[:-1]) in placed]
        ready.sort(key=lambda x: (x[0], len(x[1]), x[1]))
        ti, n = rng.choice(ready)
        pending[ti].discard(n)
        placed[(ti, n)] = len(lps)
        lps.append(n[-1])
    out = []
    for ti, (paths, _) in enumerate(trees):
        for path in paths:
            out.append(tuple(placed[(ti, path[:d + 1])] for d in range(len(path))))
    return NetworkTrace(tuple(lps), tuple(out))
