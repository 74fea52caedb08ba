import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import case
from eventnet.netcore import (Configuration, Event, Literal, LocatedPacket, NetcoreError,
                              NetworkTrace, Packet, Rule, Topology, apply_config, happens_before,
                              in_traces, is_network_trace, matches, packet_traces)
from eventnet.snetkat import eval_policy, project_config
from eventnet.verifier import random_trace


def pkt(**kw):
    return Packet(kw)


def lp(sw, pt, **kw):
    return LocatedPacket(sw, pt, pkt(**kw))


def dst4_event():
    return Event(frozenset({Literal("ip_dst", True, 4)}), 4, 1)


# -- apply_config -------------------------------------------------------------


def test_firewall_outgoing_crosses_the_link(firewall):
    # located packets are switch arrivals, so the host-facing ingress 1:2 is
    # where H1's traffic enters; the link 1:1 -> 4:1 carries it to s4
    out = apply_config(firewall.config(0), lp(1, 2, ip_dst=4, ip_src=1, echo=1))
    assert out == {lp(4, 1, ip_dst=4, ip_src=1, echo=1)}


def test_no_matching_rule_drops(firewall):
    assert apply_config(firewall.config(0), lp(4, 2, ip_dst=1, ip_src=4, echo=1)) == set()


def test_learning_switch_floods_in_initial_state(learning):
    start = lp(4, 2, ip_dst=1, ip_src=4, echo=1)
    got = apply_config(learning.config(0), start)
    # oracle: first hop of each result of the projected program
    projected = project_config(learning.program, (0,))
    expected = {hops[0] for _, hops in eval_policy(projected, start) if hops}
    assert got == expected
    assert {(x.sw, x.pt) for x in got} == {(1, 1), (2, 1)}


def test_apply_config_unknown_location(firewall):
    with pytest.raises(NetcoreError):
        apply_config(firewall.config(0), lp(9, 9, ip_dst=4))


def test_apply_config_is_a_function(auth):
    C = auth.config(1)
    start = lp(4, 2, ip_dst=2, ip_src=4, echo=1)
    assert apply_config(C, start) == apply_config(C, start)


# -- packet traces ------------------------------------------------------------


def test_firewall_outgoing_trace_reaches_h4(firewall):
    start = lp(1, 2, ip_dst=4, ip_src=1, echo=1)
    traces = packet_traces(firewall.config(0), start)
    assert traces == {(start, lp(4, 1, ip_dst=4, ip_src=1, echo=1))}


def test_dropped_packet_gives_singleton_trace(firewall):
    start = lp(4, 2, ip_dst=1, ip_src=4, echo=1)
    assert packet_traces(firewall.config(0), start) == {(start,)}


def test_flood_gives_two_branch_traces(learning):
    start = lp(4, 2, ip_dst=1, ip_src=4, echo=1)
    traces = packet_traces(learning.config(0), start)
    assert len(traces) == 2
    assert {t[-1].sw for t in traces} == {1, 2}


def test_packet_traces_errors(firewall):
    C = firewall.config(0)
    with pytest.raises(NetcoreError):
        packet_traces(C, lp(1, 2, ip_dst=4), bound=0)
    with pytest.raises(NetcoreError):
        packet_traces(C, lp(4, 1, ip_dst=4))


def test_packet_traces_reports_loops():
    topo = Topology.parse("switch 1 ports 1,2\nswitch 2 ports 1,2\nhost A at 1:2 addr 1\n"
                          "link 1:1 -> 2:1\nlink 2:1 -> 1:1\n")
    rules = frozenset({Rule(1, 2, frozenset(), (), 1), Rule(2, 1, frozenset(), (), 1),
                       Rule(1, 1, frozenset(), (), 1)})
    with pytest.raises(NetcoreError, match="bound"):
        packet_traces(Configuration(topo, rules), lp(1, 2, ip_dst=1), bound=6)


def test_in_traces_requires_maximal_host_trace(firewall):
    C = firewall.config(0)
    a = lp(1, 2, ip_dst=4, ip_src=1, echo=1)
    b = lp(4, 1, ip_dst=4, ip_src=1, echo=1)
    assert in_traces(C, (a, b))
    assert not in_traces(C, (a,))
    assert not in_traces(C, (b,))


# -- network traces -----------------------------------------------------------


def _ping_trace(firewall):
    a = lp(1, 2, ip_dst=4, ip_src=1, echo=1)
    t = sorted(packet_traces(firewall.config(0), a))[0]
    return NetworkTrace(t, (tuple(range(len(t))),))


def test_empty_trace_is_a_network_trace(firewall):
    assert is_network_trace(NetworkTrace(), [firewall.config(0)])


def test_complete_ping_trace_is_a_network_trace(firewall):
    assert is_network_trace(_ping_trace(firewall), [firewall.config(0)])


def test_uncovered_index_breaks_condition_one(firewall):
    ntr = _ping_trace(firewall)
    broken = NetworkTrace(ntr.lps + (lp(4, 2, ip_dst=1),), ntr.trees)
    assert not is_network_trace(broken, [firewall.config(0)])


def test_tree_must_start_at_host_and_increase(firewall):
    ntr = _ping_trace(firewall)
    assert not is_network_trace(NetworkTrace(ntr.lps, ((1, 0),)), [firewall.config(0)])
    assert not is_network_trace(NetworkTrace(ntr.lps[1:], ((0,),)), [firewall.config(0)])


def test_trace_file_round_trip(firewall):
    ntr = _ping_trace(firewall)
    assert NetworkTrace.parse(ntr.dump()) == ntr


# -- happens-before -----------------------------------------------------------


def _trace(entries, trees):
    return NetworkTrace(tuple(lp(sw, pt, ip_dst=1) for sw, pt in entries), trees)


def test_same_switch_order():
    hb = happens_before(_trace([(1, 2), (1, 1)], ((0,), (1,))))
    assert hb.precedes(0, 1) and not hb.precedes(1, 0)


def test_disjoint_trees_and_switches_incomparable():
    hb = happens_before(_trace([(1, 2), (2, 2)], ((0,), (1,))))
    assert not hb.precedes(0, 1) and not hb.precedes(1, 0)


def test_transitive_chain():
    # 0 -> 1 by switch 1, 1 -> 2 within one tree
    hb = happens_before(_trace([(1, 2), (1, 2), (4, 1)], ((0,), (1, 2))))
    assert hb.precedes(0, 1) and hb.precedes(1, 2) and hb.precedes(0, 2)


def _closure_oracle(ntr):
    n = len(ntr.lps)
    R = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if ntr.lps[i].sw == ntr.lps[j].sw or any(i in t and j in t for t in ntr.trees):
                R[i][j] = True
    for k in range(n):
        for i in range(n):
            for j in range(n):
                R[i][j] = R[i][j] or (R[i][k] and R[k][j])
    return {(i, j) for i in range(n) for j in range(n) if R[i][j]}


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["firewall", "learning", "auth", "ids"]))
def test_happens_before_is_a_strict_partial_order(seed, name):
    c = case(name)
    ntr = random_trace(c.nes, c.topo, random.Random(seed), max_lps=14)
    pairs = happens_before(ntr).pairs()
    assert pairs == _closure_oracle(ntr)
    assert all((i, i) not in pairs for i in range(len(ntr)))
    assert all((j, i) not in pairs for i, j in pairs)
    assert all((i, k) in pairs for i, j in pairs for j2, k in pairs if j == j2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["firewall", "learning", "auth", "ids"]))
def test_tree_steps_relate_under_some_configuration(seed, name):
    c = case(name)
    ntr = random_trace(c.nes, c.topo, random.Random(seed))
    configs = [c.nes.config(X) for X in c.nes.event_sets()]
    assert is_network_trace(ntr, configs)
    for t in ntr.trees:
        pt = ntr.packet_trace(t)
        assert any(all(C.relates(a, b) for a, b in zip(pt, pt[1:])) for C in configs)


# -- matching and topology ----------------------------------------------------


def test_matches_event_at_location():
    assert matches(lp(4, 1, ip_dst=4), dst4_event())


def test_matches_requires_location():
    assert not matches(lp(4, 3, ip_dst=4), dst4_event())


def test_matches_requires_phi():
    assert not matches(lp(4, 1, ip_dst=1), dst4_event())


def test_matches_rejects_undeclared_fields():
    e = Event(frozenset({Literal("vlan", True, 3)}), 4, 1)
    with pytest.raises(NetcoreError):
        matches(lp(4, 1, ip_dst=4), e, universe=("ip_src", "ip_dst", "echo"))


def test_topology_round_trip_and_validation(firewall):
    again = Topology.parse(firewall.topo.dump())
    assert again.links == firewall.topo.links and again.hosts == firewall.topo.hosts
    with pytest.raises(NetcoreError):
        Topology.parse("switch 1 ports 1\nlink 1:1 -> 2:1\n")
    with pytest.raises(NetcoreError):
        Topology.parse("bogus line\n")
