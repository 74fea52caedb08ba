"""Network event structures built from a validated ETS.

Consistency and enabling are stored extensionally over the finite family of
event sets, which is all we need for loop-free programs.
"""

from __future__ import annotations

import itertools
from collections import deque

from .ets import (ETS, Check, check_finite_complete, check_loop_free, check_unique_config,
                  event_set_family)
from .netcore import Event

MIN_INCONSISTENT_CAP = 200_000


class NESError(ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def set_key(X):
    return (len(X), sorted(e.sort_key() for e in X))


def set_str(X) -> str:
    return "{" + ", ".join(str(e) for e in sorted(X, key=Event.sort_key)) + "}"


class NES:
    """Event structure ``(E, con, |-)`` with a configuration map ``g``.

    ``family`` maps each event set to its configuration. ``con(X)`` holds when X
    fits inside some member; ``X |- e`` holds when X is consistent and some member
    containing e has all its other events in X.
    """

    def __init__(self, family: dict, events=None):
        if frozenset() not in family:
            raise NESError("family must contain the empty event set")
        self.family = {frozenset(X): C for X, C in family.items()}
        self.events = frozenset(events) if events is not None else frozenset().union(*self.family)
        stray = frozenset().union(*self.family) - self.events
        if stray:
            raise NESError(f"family mentions unknown events {set_str(stray)}")
        self.event_list = sorted(self.events, key=Event.sort_key)
        self.index = {e: i for i, e in enumerate(self.event_list)}
        self._members = sorted(self.family, key=set_key)
        self._sets = self._bfs()
        self.ids = {X: i for i, X in enumerate(self._sets)}
        self.g = {X: self.family.get(X) for X in self._sets}

    # relations

    def con(self, X) -> bool:
        X = frozenset(X)
        return any(X <= F for F in self._members)

    def enables(self, X, e) -> bool:
        X = frozenset(X)
        if not self.con(X):
            return False
        return any(e in F and F - {e} <= X for F in self._members)

    def enabled_events(self, X) -> set:
        X = frozenset(X)
        if X not in self.ids:
            raise NESError(f"{set_str(X)} is not an event-set")
        return self._enabled(X)

    def _enabled(self, X) -> set:
        return {e for e in self.events - X if self.enables(X, e) and self.con(X | {e})}

    def _bfs(self) -> list:
        order, seen = [frozenset()], {frozenset()}
        queue = deque(order)
        while queue:
            X = queue.popleft()
            for e in sorted(self._enabled(X), key=Event.sort_key):
                Y = X | {e}
                if Y not in seen:
                    seen.add(Y)
                    order.append(Y)
                    queue.append(Y)
        return order

    # derived views

    def event_sets(self) -> set:
        return set(self._sets)

    def config(self, X):
        return self.g[frozenset(X)]

    def encode(self, X) -> int:
        return sum(1 << self.index[e] for e in X)

    def decode(self, mask: int) -> frozenset:
        return frozenset(e for e, i in self.index.items() if mask >> i & 1)

    def allowed_sequences(self, maxlen: int | None = None) -> set:
        """Event sequences of length at most ``maxlen`` allowed by the structure."""
        maxlen = len(self.events) if maxlen is None else maxlen
        out = set()
        stack = [()]
        while stack:
            seq = stack.pop()
            out.add(seq)
            if len(seq) >= maxlen:
                continue
            X = frozenset(seq)
            for e in self._enabled(X):
                stack.append(seq + (e,))
        return out

    def minimally_inconsistent(self, cap: int = MIN_INCONSISTENT_CAP) -> list:
        """Inconsistent sets whose proper subsets are all consistent."""
        found = []
        level = {frozenset()}
        work = 0
        while level:
            nxt = set()
            for X in level:
                for e in self.event_list:
                    if e in X or (X and self.index[e] < max(self.index[x] for x in X)):
                        continue
                    Y = X | {e}
                    work += 1
                    if work > cap:
                        raise NESError(f"locality check exceeded {cap} candidate sets")
                    if not all(Y - {y} in level for y in Y):
                        continue
                    if self.con(Y):
                        nxt.add(Y)
                    else:
                        found.append(Y)
            level = nxt
        return sorted(found, key=set_key)

    def is_locally_determined(self):
        for X in self.minimally_inconsistent():
            if len({e.sw for e in X}) > 1:
                return Check(False, X, f"inconsistent set {set_str(X)} spans switches "
                                       f"{sorted({e.sw for e in X})}")
        return Check(True)

    def axioms_hold(self) -> bool:
        """con is subset-closed and |- is superset-closed over consistent sets."""
        for F in self._members:
            for r in range(len(F)):
                for Y in itertools.combinations(F, r):
                    if not self.con(Y):
                        return False
        consistent = set()
        for F in self._members:
            for r in range(len(F) + 1):
                consistent.update(frozenset(Y) for Y in itertools.combinations(F, r))
        for X in consistent:
            for e in self.events:
                if self.enables(X, e):
                    if any(not self.enables(Y, e) for Y in consistent if X <= Y):
                        return False
        return True

    def dump(self) -> str:
        lines = ["events"]
        lines += [f"  e{i} {e}" for i, e in enumerate(self.event_list)]
        lines.append("event-sets")
        for X in self._sets:
            C = self.g[X]
            name = getattr(C, "name", None) or str(C)
            lines.append(f"  id {self.ids[X]}: {set_str(X)} -> {name}")
        return "\n".join(lines)


def build_nes(T: ETS) -> NES:
    """Check the conversion conditions and build the NES, or raise with a witness."""
    loop = check_loop_free(T)
    if not loop:
        raise NESError(loop.message, loop.witness)
    F = event_set_family(T)
    for check in (check_unique_config(F), check_finite_complete(F)):
        if not check:
            raise NESError(check.message, check.witness)
    N = NES({X: entry.labels[0] for X, entry in F.items()}, events=T.events)
    if N.event_sets() != set(F):
        extra = N.event_sets() ^ set(F)
        raise NESError("event-sets differ from the ETS family", extra)
    return N
