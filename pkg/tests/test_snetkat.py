import pytest
from hypothesis import given, settings, strategies as st

from eventnet import corpus
from eventnet.netcore import Literal, LocatedPacket, Packet
from eventnet.snetkat import (Assign, Eq, Link, ParseError, SNetKATError, Seq, StateEq, StateLink,
                              eval_policy, extract_edges, parse, pretty, project_config,
                              state_space, state_width)

HOSTS = {"H1": 1, "H2": 2, "H3": 3, "H4": 4}


def lp(sw, pt, **kw):
    return LocatedPacket(sw, pt, Packet(kw))


def test_parse_unicode_and_ascii_agree():
    a = parse("state=[0] & pt=2; (1:1)->(4:1)-><state<-[1]>")
    b = parse("state=[0] ∧ pt=2; (1:1)↣(4:1)↣⟨state←[1]⟩")
    assert a == b


def test_parse_resolves_host_names():
    p = parse("ip_dst=H4; pt<-1", HOSTS)
    assert p == Seq(Eq("ip_dst", 4), Assign("pt", 1))
    # names outside the environment fall back to their numeric suffix
    assert parse("ip_dst=H9", HOSTS) == Eq("ip_dst", 9)


def test_parse_state_link_fields():
    p = parse("(1:1)->(4:1)-><state(1)<-3>")
    assert isinstance(p, StateLink)
    assert (p.s1, p.p1, p.s2, p.p2) == (1, 1, 4, 1)
    assert p.assigns == ((1, 3),)
    assert state_width(p) == 2


def test_parse_errors_report_position():
    with pytest.raises(ParseError) as err:
        parse("pt=2 &")
    assert err.value.line == 1
    with pytest.raises(ParseError):
        parse("ip_dst=gateway", HOSTS)
    with pytest.raises(ParseError):
        parse("pt<-1 & pt=2")


@pytest.mark.parametrize("name", corpus.PROGRAMS)
def test_pretty_round_trips_corpus(name):
    p = corpus.load(name, 3).program
    assert parse(pretty(p)) == p


def test_projection_drops_state():
    p = parse("state=[0]; (1:1)->(4:1)-><state<-[1]> + state=[1]; pt<-3")
    assert project_config(p, (0,)) == parse("true; (1:1)->(4:1) + false; pt<-3")
    with pytest.raises(SNetKATError):
        project_config(parse("state(2)=1"), (0,))


def test_eval_policy_records_hops():
    p = parse("pt=2; pt<-1; (1:1)->(4:1); pt<-2")
    out = eval_policy(p, lp(1, 2, ip_dst=4))
    assert out == {(lp(4, 2, ip_dst=4), (lp(4, 1, ip_dst=4),))}


def test_eval_policy_refuses_state():
    with pytest.raises(SNetKATError):
        eval_policy(parse("state=[0]"), lp(1, 2))


def test_star_converges_on_finite_cycle():
    p = parse("(pt<-1 + pt<-2)*")
    finals = {x.pt for x, _ in eval_policy(p, lp(1, 2))}
    assert finals == {1, 2}


def test_firewall_event_edge():
    p = corpus.load("firewall").program
    edges, _ = extract_edges(p, (0,))
    assert len(edges) == 1
    e = next(iter(edges))
    assert (e.src, e.dst) == ((0,), (1,))
    assert (e.event.sw, e.event.pt) == (4, 1)
    assert Literal("ip_dst", True, 4) in e.event.phi


def test_no_edges_once_state_is_final():
    p = corpus.load("firewall").program
    assert not extract_edges(p, (1,))[0]


def test_auth_state_space():
    sp = state_space(corpus.load("auth").program)
    assert sp.reachable == {(0,), (1,), (2,)}
    assert sp.vectors == {(0,), (1,), (2,)}


def test_extract_edges_rejects_short_vector():
    with pytest.raises(SNetKATError):
        extract_edges(parse("state(1)=0"), (0,))


def _link_chain(n):
    return "; ".join(f"pt<-1; ({i}:1)->({i + 1}:2)" for i in range(1, n + 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 9))
def test_projected_chain_reaches_the_end(n, dst):
    # independent oracle: a chain of n links moves the packet n switches on
    p = parse(f"ip_dst={dst}; {_link_chain(n)}")
    out = eval_policy(project_config(p, ()), lp(1, 2, ip_dst=dst))
    assert len(out) == 1
    final, hops = next(iter(out))
    assert (final.sw, final.pt) == (n + 1, 2) and len(hops) == n


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8))
def test_bandwidth_state_space_is_a_chain(cap):
    sp = state_space(corpus.load("bandwidth", cap).program)
    assert sp.reachable == {(i,) for i in range(cap + 2)}


def test_link_node_is_plain_after_projection():
    p = parse("(1:1)->(4:1)-><state<-[1]>")
    assert project_config(p, (0,)) == Link(1, 1, 4, 1)
    assert StateEq(0, 1) == parse("state=[1]")
