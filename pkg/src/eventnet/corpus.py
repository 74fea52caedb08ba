"""Case-study programs, topologies and scenarios shipped with the package."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .netcore import Topology
from .snetkat import parse

PROGRAMS = ("firewall", "learning", "auth", "bandwidth", "ids")

_TOPOLOGY = {
    "firewall": "two_hosts",
    "learning": "three_hosts",
    "auth": "four_hosts",
    "bandwidth": "two_hosts",
    "ids": "four_hosts",
}

DEFAULT_CAP = 10


def read_data(name: str) -> str:
    return resources.files("eventnet.data").joinpath(name).read_text(encoding="utf-8")


def bandwidth_source(n: int = DEFAULT_CAP) -> str:
    """Bandwidth cap: H1 may send n+1 packets to H4, and replies stop after n."""
    arms = [f"state=[{i}]; (1:1)->(4:1)-><state<-[{i + 1}]>" for i in range(n + 1)]
    arms.append(f"state=[{n + 1}]; (1:1)->(4:1)")
    body = "\n    + ".join(arms)
    return (f"# Bandwidth cap with n={n}.\n"
            f"pt=2 & ip_dst=H4; pt<-1; (\n      {body}\n  ); pt<-2\n"
            f"+ pt=2 & ip_dst=H1; state!=[{n + 1}]; pt<-1; (4:1)->(1:1); pt<-2\n")


def bandwidth_scenario(pings: int = DEFAULT_CAP + 2) -> str:
    return "".join("ping H1 H4\nbarrier\n" for _ in range(pings))


def program_source(name: str, cap: int = DEFAULT_CAP) -> str:
    if name == "bandwidth":
        return bandwidth_source(cap)
    return read_data(f"{name}.snk")


def topology_source(name: str) -> str:
    return read_data(f"{_TOPOLOGY[name]}.topo")


def scenario_source(name: str, cap: int = DEFAULT_CAP) -> str:
    if name == "bandwidth":
        return bandwidth_scenario(cap + 2)
    return read_data(f"{name}.scn")


@dataclass
class CaseStudy:
    name: str
    source: str
    topology: Topology
    scenario: str

    @property
    def program(self):
        return parse(self.source, self.topology.addr_env())


def load(name: str, cap: int = DEFAULT_CAP) -> CaseStudy:
    if name not in PROGRAMS:
        raise KeyError(f"unknown case study {name!r}; choose from {', '.join(PROGRAMS)}")
    topo = Topology.parse(topology_source(name))
    return CaseStudy(name, program_source(name, cap), topo, scenario_source(name, cap))
