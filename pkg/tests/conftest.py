import functools

import pytest

from eventnet import corpus
from eventnet.ets import ETS, build_ets
from eventnet.flowopt import compile_tables
from eventnet.netcore import Event, Literal, Topology
from eventnet.nes import build_nes
from eventnet.snetkat import EventEdge, parse

ACCEPTANCE_LINES: dict = {}

# Two exclusive events at different switches: whichever of H1 or H2 hears
# from H4 first wins. Not locally determined.
SPLIT_RACE_SOURCE = """\
pt=2 & ip_dst=H1; pt<-1; (state=[0]; (4:1)->(1:1)-><state<-[1]> + state!=[0]; (4:1)->(1:1)); pt<-2
+ pt=2 & ip_dst=H2; pt<-3; (state=[0]; (4:3)->(2:1)-><state<-[2]> + state!=[0]; (4:3)->(2:1)); pt<-2
+ pt=2 & ip_dst=H4; pt<-1; ((1:1)->(4:1) + (2:1)->(4:3)); pt<-2
"""

# The same race decided at s4, where both events arrive. Locally determined.
LOCAL_RACE_SOURCE = """\
pt=2 & ip_dst=H4; pt<-1;
  (state=[0]; ((1:1)->(4:1)-><state<-[1]> + (2:1)->(4:3)-><state<-[2]>)
   + state!=[0]; ((1:1)->(4:1) + (2:1)->(4:3))); pt<-2
+ pt=2 & ip_dst=H1; pt<-1; (4:1)->(1:1); pt<-2
+ pt=2 & ip_dst=H2; pt<-3; (4:3)->(2:1); pt<-2
"""


def ev(eid, sw=1, pt=1, dst=None):
    phi = frozenset({Literal("ip_dst", True, dst)}) if dst is not None else frozenset()
    return Event(phi, sw, pt, eid)


def diamond_gap_ets():
    """v0 -e1-> a -e4-> b -e3-> c and v0 -e3-> d.

    {e1} and {e3} are both below {e1, e4, e3} yet {e1, e3} is never reached.
    """
    e1, e3, e4 = ev("e1", 1, 1), ev("e3", 3, 1), ev("e4", 4, 1)
    edges = [EventEdge("v0", e1, "a"), EventEdge("a", e4, "b"), EventEdge("b", e3, "c"),
             EventEdge("v0", e3, "d")]
    return ETS({v: v.upper() for v in ("v0", "a", "b", "c", "d")}, edges, "v0"), (e1, e3, e4)


def three_hosts():
    return Topology.parse(corpus.read_data("three_hosts.topo"))


class Program:
    def __init__(self, source, topo):
        self.topo = topo
        self.program = parse(source, topo.addr_env())
        self.ets = build_ets(self.program, topo)
        self.nes = build_nes(self.ets)


class Case:
    def __init__(self, name, cap=corpus.DEFAULT_CAP):
        cs = corpus.load(name, cap)
        self.name = name
        self.topo = cs.topology
        self.program = cs.program
        self.scenario = cs.scenario
        self.ets = build_ets(self.program, self.topo)
        self.nes = build_nes(self.ets)
        self.tables = compile_tables(self.nes, self.topo, self.program)

    def config(self, *state):
        return self.ets.vertices[tuple(state)]


@functools.lru_cache(maxsize=None)
def case(name, cap=corpus.DEFAULT_CAP) -> Case:
    return Case(name, cap)


@pytest.fixture
def firewall():
    return case("firewall")


@pytest.fixture
def learning():
    return case("learning")


@pytest.fixture
def auth():
    return case("auth")


@pytest.fixture
def ids():
    return case("ids")


@pytest.fixture
def bandwidth():
    return case("bandwidth")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
