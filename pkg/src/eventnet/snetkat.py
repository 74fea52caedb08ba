"""Stateful NetKAT: syntax, parser, projection to NetKAT, event-edge extraction."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import NamedTuple

from .netcore import (
    TRUE_CONJ,
    Event,
    Literal,
    LocatedPacket,
    conj_forget,
    conj_normalize,
    conj_satisfiable,
)

STAR_CAP = 64


class SNetKATError(ValueError):
    pass


class ParseError(SNetKATError):
    def __init__(self, msg, line, col):
        super().__init__(f"{line}:{col}: {msg}")
        self.line, self.col = line, col


# -- abstract syntax ----------------------------------------------------------


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Bool(Node):
    value: bool


@dataclass(frozen=True)
class Eq(Node):
    field: str  # includes "sw" and "pt"
    value: int


@dataclass(frozen=True)
class StateEq(Node):
    index: int
    value: int


@dataclass(frozen=True)
class And(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Or(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Not(Node):
    arg: Node


@dataclass(frozen=True)
class Assign(Node):
    field: str
    value: int


@dataclass(frozen=True)
class Union(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Seq(Node):
    left: Node
    right: Node


@dataclass(frozen=True)
class Star(Node):
    arg: Node


@dataclass(frozen=True)
class Link(Node):
    s1: int
    p1: int
    s2: int
    p2: int


@dataclass(frozen=True)
class StateLink(Node):
    s1: int
    p1: int
    s2: int
    p2: int
    assigns: tuple  # ((index, value), ...)
    tag: str = ""


TRUE, FALSE = Bool(True), Bool(False)
TEST_TYPES = (Bool, Eq, StateEq, And, Or, Not)


def is_test(p: Node) -> bool:
    return isinstance(p, TEST_TYPES)


def walk(p: Node):
    yield p
    for attr in ("left", "right", "arg"):
        child = getattr(p, attr, None)
        if child is not None:
            yield from walk(child)


def has_state(p: Node) -> bool:
    return any(isinstance(n, (StateEq, StateLink)) for n in walk(p))


def state_links(p: Node) -> list:
    return [n for n in walk(p) if isinstance(n, StateLink)]


def state_width(p: Node) -> int:
    idx = [n.index for n in walk(p) if isinstance(n, StateEq)]
    idx += [m for n in walk(p) if isinstance(n, StateLink) for m, _ in n.assigns]
    return max(idx) + 1 if idx else 0


def conj(*tests):
    out = tests[0]
    for t in tests[1:]:
        out = And(out, t)
    return out


def union(*ps):
    out = ps[0]
    for p in ps[1:]:
        out = Union(out, p)
    return out


def seq(*ps):
    out = ps[0]
    for p in ps[1:]:
        out = Seq(out, p)
    return out


# -- parser -------------------------------------------------------------------

_UNICODE = {"≠": "!=", "∧": "&", "∨": "|", "¬": "!", "←": "<-", "↣": "->", "⟨": "<", "⟩": ">"}
_TOKEN = re.compile(r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op><-|->|!=|[()\[\]:,<>=!&|+;*]))")


class _Tok(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text):
    for u, a in _UNICODE.items():
        text = text.replace(u, a)
    toks = []
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        if text.startswith("#", pos):
            nl = text.find("\n", pos)
            pos = len(text) if nl < 0 else nl
            continue
        m = _TOKEN.match(text, pos)
        line = max(i for i, s in enumerate(line_starts) if s <= pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", line + 1, pos - line_starts[line] + 1)
        start = m.start(m.lastgroup)
        line = max(i for i, s in enumerate(line_starts) if s <= start)
        toks.append(_Tok(m.lastgroup, m.group(m.lastgroup), line + 1, start - line_starts[line] + 1))
        pos = m.end()
    end_line = len(line_starts)
    toks.append(_Tok("eof", "", end_line, len(text) - line_starts[-1] + 1))
    return toks


class _Parser:
    def __init__(self, text, env):
        self.toks = _tokenize(text)
        self.i = 0
        self.env = env
        self.n_links = 0

    @property
    def cur(self):
        return self.toks[self.i]

    def error(self, msg, tok=None):
        tok = tok or self.cur
        raise ParseError(msg, tok.line, tok.col)

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def accept(self, text):
        if self.cur.kind != "eof" and self.cur.text == text and self.cur.kind in ("op", "id"):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            self.error(f"expected {text!r}, found {self.cur.text or 'end of input'!r}")

    def number(self):
        tok = self.cur
        if tok.kind == "num":
            self.i += 1
            return int(tok.text)
        if tok.kind == "id" and tok.text not in ("true", "false", "state", "sw", "pt"):
            self.i += 1
            if tok.text in self.env:
                return self.env[tok.text]
            if m := re.fullmatch(r"[A-Za-z]+(\d+)", tok.text):
                return int(m.group(1))
            self.error(f"unknown constant {tok.text!r}", tok)
        self.error("expected a number")

    def parse(self):
        if self.cur.kind == "eof":
            self.error("empty program")
        p = self.sum()
        if self.cur.kind != "eof":
            self.error(f"unexpected {self.cur.text!r}")
        return p

    def sum(self):
        p = self.seq()
        while self.accept("+"):
            p = Union(p, self.seq())
        return p

    def seq(self):
        p = self.disj()
        while self.accept(";"):
            p = Seq(p, self.disj())
        return p

    def _need_test(self, p, tok, op):
        if not is_test(p):
            self.error(f"operand of {op!r} must be a test", tok)
        return p

    def disj(self):
        tok = self.cur
        p = self.conj()
        while self.cur.text == "|":
            op = self.cur
            self.i += 1
            q = self.conj()
            p = Or(self._need_test(p, tok, "|"), self._need_test(q, op, "|"))
        return p

    def conj(self):
        tok = self.cur
        p = self.neg()
        while self.cur.text == "&":
            op = self.cur
            self.i += 1
            q = self.neg()
            p = And(self._need_test(p, tok, "&"), self._need_test(q, op, "&"))
        return p

    def neg(self):
        if self.cur.text == "!" and self.cur.kind == "op":
            tok = self.cur
            self.i += 1
            return Not(self._need_test(self.neg(), tok, "!"))
        return self.post()

    def post(self):
        p = self.atom()
        while self.accept("*"):
            p = Star(p)
        return p

    def atom(self):
        tok = self.cur
        if tok.text == "(" and self.peek(1).kind == "num" and self.peek(2).text == ":":
            return self.link()
        if self.accept("("):
            p = self.sum()
            self.expect(")")
            return p
        if tok.kind != "id":
            self.error(f"unexpected {tok.text or 'end of input'!r}")
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if tok.text == "state":
            return self.state_test()
        self.i += 1
        name = tok.text
        if self.accept("<-"):
            if name == "sw":
                self.error("sw is not assignable", tok)
            return Assign(name, self.number())
        if self.accept("="):
            return Eq(name, self.number())
        if self.accept("!="):
            return Not(Eq(name, self.number()))
        self.error(f"expected '=', '!=' or '<-' after {name!r}")

    def state_test(self):
        self.expect("state")
        if self.accept("("):
            m = self.number()
            self.expect(")")
            if self.accept("="):
                return StateEq(m, self.number())
            if self.accept("!="):
                return Not(StateEq(m, self.number()))
            self.error("expected '=' or '!=' after state(m)")
        negate = False
        if self.accept("!="):
            negate = True
        else:
            self.expect("=")
        vec = self.vector()
        t = conj(*[StateEq(i, v) for i, v in enumerate(vec)])
        return Not(t) if negate else t

    def vector(self):
        self.expect("[")
        vals = [self.number()]
        while self.accept(","):
            vals.append(self.number())
        self.expect("]")
        return vals

    def loc(self):
        self.expect("(")
        a = self.number()
        self.expect(":")
        b = self.number()
        self.expect(")")
        return a, b

    def link(self):
        s1, p1 = self.loc()
        self.expect("->")
        s2, p2 = self.loc()
        if self.cur.text == "<" or (self.cur.text == "->" and self.peek(1).text == "<"):
            self.accept("->")
            self.expect("<")
            assigns = [self.state_assign()]
            while self.accept(","):
                assigns.append(self.state_assign())
            self.expect(">")
            flat = tuple(a for group in assigns for a in group)
            tag = f"L{self.n_links}"
            self.n_links += 1
            return StateLink(s1, p1, s2, p2, flat, tag)
        return Link(s1, p1, s2, p2)

    def state_assign(self):
        self.expect("state")
        if self.accept("("):
            m = self.number()
            self.expect(")")
            self.expect("<-")
            return [(m, self.number())]
        self.expect("<-")
        return list(enumerate(self.vector()))


def parse(text: str, env: dict | None = None) -> Node:
    """Parse Stateful NetKAT source. ``env`` maps symbolic constants (e.g. H4)."""
    return _Parser(text, env or {}).parse()


# -- pretty printer -----------------------------------------------------------

_PREC = {Union: 0, Seq: 1, Or: 2, And: 3, Not: 4, Star: 5}


def _prec(p):
    return _PREC.get(type(p), 6)


def pretty(p: Node) -> str:
    def wrap(q, level):
        s = pretty(q)
        return f"({s})" if _prec(q) < level else s

    match p:
        case Bool(v):
            return "true" if v else "false"
        case Eq(f, n):
            return f"{f}={n}"
        case StateEq(m, n):
            return f"state({m})={n}"
        case Assign(f, n):
            return f"{f}<-{n}"
        case Link(a, b, c, d):
            return f"({a}:{b})->({c}:{d})"
        case StateLink(a, b, c, d, assigns, _):
            inner = ",".join(f"state({m})<-{n}" for m, n in assigns)
            return f"({a}:{b})->({c}:{d})<{inner}>"
        case Not(a):
            return "!" + wrap(a, 4)
        case Star(a):
            return wrap(a, 5) + "*"
        case Union(l, r) | Seq(l, r) | Or(l, r) | And(l, r):
            lvl = _PREC[type(p)]
            op = {Union: " + ", Seq: "; ", Or: " | ", And: " & "}[type(p)]
            return wrap(l, lvl) + op + wrap(r, lvl + 1)
    raise SNetKATError(f"not a program node: {p!r}")


# -- projection to a state-free program ---------------------------------------


def project_config(p: Node, k) -> Node:
    """The plain NetKAT program selected by state vector ``k``."""
    k = tuple(k)

    def go(q):
        match q:
            case StateEq(m, n):
                if m >= len(k):
                    raise SNetKATError(f"state index {m} out of range for {list(k)}")
                return TRUE if k[m] == n else FALSE
            case StateLink(a, b, c, d, assigns, _):
                for m, _n in assigns:
                    if m >= len(k):
                        raise SNetKATError(f"state index {m} out of range for {list(k)}")
                return Link(a, b, c, d)
            case Not(a):
                return Not(go(a))
            case Star(a):
                return Star(go(a))
            case Union(l, r):
                return Union(go(l), go(r))
            case Seq(l, r):
                return Seq(go(l), go(r))
            case And(l, r):
                return And(go(l), go(r))
            case Or(l, r):
                return Or(go(l), go(r))
        return q

    return go(p)


# -- concrete NetKAT semantics ------------------------------------------------


def eval_test(a: Node, lp: LocatedPacket) -> bool:
    match a:
        case Bool(v):
            return v
        case Eq("sw", n):
            return lp.sw == n
        case Eq("pt", n):
            return lp.pt == n
        case Eq(f, n):
            return lp.pkt.get(f) == n
        case And(l, r):
            return eval_test(l, lp) and eval_test(r, lp)
        case Or(l, r):
            return eval_test(l, lp) or eval_test(r, lp)
        case Not(x):
            return not eval_test(x, lp)
        case StateEq():
            raise SNetKATError("eval_policy needs a state-free program; project it first")
    raise SNetKATError(f"not a test: {a!r}")


def _eval(p, item, cap):
    lp, hops = item
    if is_test(p):
        return {item} if eval_test(p, lp) else set()
    match p:
        case Assign("pt", n):
            return {(LocatedPacket(lp.sw, n, lp.pkt), hops)}
        case Assign(f, n):
            return {(LocatedPacket(lp.sw, lp.pt, lp.pkt.set(**{f: n})), hops)}
        case Link(a, b, c, d):
            if (lp.sw, lp.pt) != (a, b):
                return set()
            moved = LocatedPacket(c, d, lp.pkt)
            return {(moved, hops + (moved,))}
        case Union(l, r):
            return _eval(l, item, cap) | _eval(r, item, cap)
        case Seq(l, r):
            out = set()
            for mid in _eval(l, item, cap):
                out |= _eval(r, mid, cap)
            return out
        case Star(x):
            seen = {item}
            frontier = {item}
            for _ in range(cap):
                nxt = set()
                for it in frontier:
                    nxt |= _eval(x, it, cap)
                frontier = nxt - seen
                if not frontier:
                    return seen
                seen |= frontier
            raise SNetKATError(f"star did not converge within {cap} iterations")
        case StateLink():
            raise SNetKATError("eval_policy needs a state-free program; project it first")
    raise SNetKATError(f"unknown node {p!r}")


def eval_policy(p: Node, lp: LocatedPacket, cap: int = STAR_CAP) -> set:
    """Standard NetKAT denotation on one located packet.

    Returns a set of ``(final located packet, hops)`` where ``hops`` lists the
    arrival after every link traversal.
    """
    return _eval(p, (lp, ()), cap)


# -- event-edge extraction ----------------------------------------------------


@dataclass(frozen=True)
class EventEdge:
    src: tuple
    event: Event
    dst: tuple

    def __str__(self):
        return f"{list(self.src)} --{self.event}--> {list(self.dst)}"


def _lit(phi, f, positive, n):
    c = phi | {Literal(f, positive, n)}
    if not conj_satisfiable(c):
        return frozenset(), frozenset()
    return frozenset(), frozenset({conj_normalize(c)})


def _neg(a):
    """Push a negation one level down, per the normalisation rules."""
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


def _extract(p, k, phi, cap):
    match p:
        case Bool(True):
            return frozenset(), frozenset({phi})
        case Bool(False):
            return frozenset(), frozenset()
        case Eq("sw" | "pt", _):
            return frozenset(), frozenset({phi})
        case Eq(f, n):
            return _lit(phi, f, True, n)
        case StateEq(m, n):
            return _extract(TRUE if k[m] == n else FALSE, k, phi, cap)
        case Not(Eq("sw" | "pt", _)):
            return frozenset(), frozenset({phi})
        case Not(Eq(f, n)):
            return _lit(phi, f, False, n)
        case Not(StateEq(m, n)):
            return _extract(TRUE if k[m] != n else FALSE, k, phi, cap)
        case Not(x):
            return _extract(_neg(x), k, phi, cap)
        case Assign("pt", _):
            return frozenset(), frozenset({phi})
        case Assign(f, n):
            return frozenset(), frozenset({conj_forget(phi, f) | {Literal(f, True, n)}})
        case Union(l, r) | Or(l, r):
            d1, p1 = _extract(l, k, phi, cap)
            d2, p2 = _extract(r, k, phi, cap)
            return d1 | d2, p1 | p2
        case Seq(l, r) | And(l, r):
            d, ps = _extract(l, k, phi, cap)
            out_p = frozenset()
            for y in ps:
                d2, p2 = _extract(r, k, y, cap)
                d, out_p = d | d2, out_p | p2
            return d, out_p
        case Star(x):
            d, seen, frontier = frozenset(), {phi}, {phi}
            for _ in range(cap):
                nxt = set()
                for y in frontier:
                    d2, p2 = _extract(x, k, y, cap)
                    d |= d2
                    nxt |= p2
                frontier = nxt - seen
                if not frontier:
                    return d, frozenset(seen)
                seen |= frontier
            raise SNetKATError(f"star fixpoint not reached within {cap} iterations")
        case Link():
            return frozenset(), frozenset({phi})
        case StateLink(_a, _b, s2, p2, assigns, tag):
            dst = list(k)
            for m, n in assigns:
                dst[m] = n
            edge = EventEdge(tuple(k), Event(phi, s2, p2, tag), tuple(dst))
            return frozenset({edge}), frozenset({phi})
    raise SNetKATError(f"unknown node {p!r}")


def extract_edges(p: Node, k, phi=TRUE_CONJ, cap: int = STAR_CAP):
    """Event edges leaving state ``k`` and the final test conjunctions."""
    k = tuple(k)
    phi = frozenset(phi)
    if not conj_satisfiable(phi):
        raise SNetKATError("initial conjunction is unsatisfiable")
    width = state_width(p)
    if width > len(k):
        raise SNetKATError(f"state index {width - 1} out of range for {list(k)}")
    return _extract(p, k, phi, cap)


# -- state space --------------------------------------------------------------


class StateSpace(NamedTuple):
    vectors: frozenset
    reachable: frozenset


def state_space(p: Node, k0=None) -> StateSpace:
    width = state_width(p)
    if k0 is None:
        k0 = (0,) * width
    k0 = tuple(k0)
    if len(k0) < width:
        raise SNetKATError(f"initial state {list(k0)} shorter than program width {width}")
    values = [{v} for v in k0]
    for n in walk(p):
        if isinstance(n, StateEq):
            values[n.index].add(n.value)
        elif isinstance(n, StateLink):
            for m, v in n.assigns:
                values[m].add(v)
    vectors = frozenset(itertools.product(*[sorted(vs) for vs in values]))
    reach, frontier = {k0}, [k0]
    while frontier:
        k = frontier.pop()
        for e in extract_edges(p, k)[0]:
            if e.dst not in reach:
                reach.add(e.dst)
                frontier.append(e.dst)
    return StateSpace(vectors, frozenset(reach))
