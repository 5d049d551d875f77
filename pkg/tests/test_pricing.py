import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fsobackhaul.core import LinkKind, Node, NodeKind, ValidationError, mirror_segments
from fsobackhaul.instance import Instance, build_potential_graph, loads_instance
from fsobackhaul.pricing import PortMap, _support_trail, build_pricing_milp, path_cost, smallest_step, solve_pricing

from conftest import FIXTURES, fixture_instance, golden_json
from oracles import enumerate_paths, link_cost
from recipes import W_DEFAULT

CASES = json.loads((FIXTURES / "pricing" / "cases.json").read_text(encoding="utf-8"))
VALUES = golden_json("pricing_values.json")


def load_case(i):
    case = CASES[i]
    graph = build_potential_graph(loads_instance(case["instance"]))
    return graph, {int(k): v for k, v in case["duals"].items()}, case["s"], case["t"]


def _pair_graph():
    nodes = (Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1000, 0))
    return build_potential_graph(Instance(nodes, K=1, weights=W_DEFAULT))


def _too_long_chain():
    """Blocked 0-1; the only mirror route 0-2-3-1 is 1500 m > L."""
    nodes = (
        Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1300, 0),
        Node(2, NodeKind.MIRROR, 400, 300), Node(3, NodeKind.MIRROR, 900, 300),
    )
    return build_potential_graph(Instance(nodes, nonlos=((0, 1),), K=1, weights=W_DEFAULT))


def _five_nodes():
    nodes = (
        Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1000, 0), Node(2, NodeKind.FSO, 500, -600),
        Node(3, NodeKind.MIRROR, 500, 400), Node(4, NodeKind.MIRROR, 300, -250),
    )
    return build_potential_graph(Instance(nodes, K=1, weights=W_DEFAULT))


@pytest.mark.parametrize("method", ["milp", "labels", "auto"])
def test_single_link(method):
    g = _pair_graph()
    res = solve_pricing(g, {0: 0.3}, 0, 1, method=method)
    assert res.path.nodes == (0, 1) and res.cost == pytest.approx(0.3)


@pytest.mark.parametrize("method", ["milp", "labels"])
def test_overlong_chain_infeasible(method):
    g = _too_long_chain()
    res = solve_pricing(g, {}, 0, 1, method=method)
    assert not res.feasible and res.cost == math.inf


@pytest.mark.parametrize("method", ["milp", "labels"])
def test_revisit_found(hand, method):
    _, g = hand("revisit")
    duals = {l.id: 0.1 for l in g.links}
    res = solve_pricing(g, duals, 0, 1, method=method)
    assert res.path.nodes == (0, 3, 2, 3, 1)
    # three distinct links: the 2-3 link is paid once
    assert res.cost == pytest.approx(0.3)


def test_zero_duals_cost_zero(hand):
    _, g = hand("blocked_pair")
    for method in ("milp", "labels"):
        assert solve_pricing(g, {}, 0, 1, method=method).cost == 0.0


def test_bad_endpoints(hand):
    _, g = hand("revisit")
    with pytest.raises(ValidationError):
        solve_pricing(g, {}, 0, 3)
    with pytest.raises(ValidationError):
        solve_pricing(g, {}, 0, 0)


def test_blocked_link_weight_is_ignored(hand):
    _, g = hand("revisit")
    blocked = g.link_between(0, 2, LinkKind.FSO)
    assert smallest_step(g, {blocked: -1.0}) == 0.0
    res = solve_pricing(g, {blocked: -1.0}, 0, 1, method="auto")
    assert res.method == "labels" and res.cost == 0.0


@pytest.mark.parametrize("seed", range(30))
def test_node_costs_labels_match_milp(seed):
    g, duals, s, t = load_case(seed)
    rng = np.random.default_rng(seed)
    nodes = {v: round(float(rng.uniform(0, 2)), 3) for v in g.mirror_nodes}
    costs = {a: round(float(rng.uniform(0, 1)), 3) for a in range(len(g.arcs))}
    signed = {e: v - 0.3 for e, v in duals.items()}
    lab = solve_pricing(g, signed, s, t, method="labels", arc_costs=costs, node_costs=nodes)
    mil = solve_pricing(g, signed, s, t, method="milp", arc_costs=costs, node_costs=nodes)
    assert lab.cost == pytest.approx(mil.cost, abs=1e-6)
    if lab.feasible:
        assert lab.cost == pytest.approx(path_cost(lab.path, signed, costs, nodes), abs=1e-9)


@pytest.mark.parametrize("seed", range(12))
def test_negative_duals_match_enumeration(seed):
    g = _five_nodes()
    rng = np.random.default_rng(seed)
    duals = {l.id: round(float(rng.uniform(-1, 1)), 4) for l in g.links if l.kind is not LinkKind.FIBER}
    s, t = [(0, 1), (0, 2), (1, 2)][seed % 3]
    expected = min(link_cost(links, duals) for _, links in enumerate_paths(g, s, t))
    res = solve_pricing(g, duals, s, t, method="auto")
    assert res.method == "milp"
    assert res.cost == pytest.approx(expected, abs=1e-6)
    # the bounded label search is exact for either sign
    assert solve_pricing(g, duals, s, t, method="labels").cost == pytest.approx(expected, abs=1e-6)
    assert res.cost >= sum(min(v, 0.0) for v in duals.values()) - 1e-9


def test_port_map_bijection(hand):
    _, g = hand("blocked_pair")
    pm = PortMap(g)
    for v in range(len(g.nodes)):
        assert sorted(pm.gamma[(a, v)] for a in pm.out_ports[v]) == list(range(len(pm.out_ports[v])))
        assert sorted(pm.gamma[(a, v)] for a in pm.in_ports[v]) == list(range(len(pm.in_ports[v])))


def test_pricing_model_first_ports_start_at_zero(hand):
    _, g = hand("revisit")
    pm = build_pricing_milp(g, {}, 0, 1)
    for v in g.fso_nodes:
        for i in range(len(pm.ports.out_ports[v])):
            assert pm.model.variables[pm.model.var_index(f"yp_{v}_{i}")].ub == 0.0


@pytest.mark.parametrize("i", range(0, 200, 8))
def test_cases_labels_match_milp_and_golden(i):
    g, duals, s, t = load_case(i)
    want = VALUES[f"{i:03d}"]["enumeration"]
    lab = solve_pricing(g, duals, s, t, method="labels")
    mil = solve_pricing(g, duals, s, t, method="milp")
    if want is None:
        assert not lab.feasible and not mil.feasible
        return
    assert lab.cost == pytest.approx(mil.cost, abs=1e-6)
    assert mil.cost == pytest.approx(want, abs=1e-6)


@pytest.mark.parametrize("i", range(1, 200, 16))
def test_unbounded_length_is_dijkstra(i):
    g, duals, s, t = load_case(i)
    want = VALUES[f"{i:03d}"]["dijkstra_unbounded"]
    lab = solve_pricing(g, duals, s, t, L=math.inf, method="labels")
    assert lab.cost == pytest.approx(math.inf if want is None else want, abs=1e-6)


@pytest.mark.parametrize("i", range(3, 200, 20))
def test_dominance_does_not_change_cost(i):
    g, duals, s, t = load_case(i)
    on = solve_pricing(g, duals, s, t, method="labels", dominance=True)
    off = solve_pricing(g, duals, s, t, method="labels", dominance=False)
    assert on.cost == pytest.approx(off.cost, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 199))
def test_returned_paths_respect_length_and_cost(i):
    g, duals, s, t = load_case(i)
    res = solve_pricing(g, duals, s, t)
    if not res.feasible:
        return
    assert {res.path.source, res.path.dest} == {s, t}
    assert res.cost == pytest.approx(path_cost(res.path, duals), abs=1e-9)
    for seg in mirror_segments(res.path, g):
        if seg.kind == "mirror":
            assert seg.length <= g.max_distance + 1e-6


def test_pricing_is_deterministic():
    g, duals, s, t = load_case(10)
    first = solve_pricing(g, duals, s, t)
    assert all(solve_pricing(g, duals, s, t).path == first.path for _ in range(3))


def _split_case():
    case = json.loads((FIXTURES / "pricing" / "split_support.json").read_text(encoding="utf-8"))
    suite, name = case["instance"].split("/")
    g = build_potential_graph(fixture_instance(suite, name))
    conv = lambda m: {int(k): v for k, v in m.items()}
    return g, conv(case["duals"]), case["s"], case["t"], conv(case["arc_costs"]), conv(case["node_costs"]), case["enumeration"]


def test_milp_recovers_split_support():
    # the optimum 2-4-5-1-5-3 crosses link 1-5 both ways; a port matching
    # of the same arcs reads as 2-4-5-3 plus the cycle 5-1-5
    g, duals, s, t, ac, nc, want = _split_case()
    mil = solve_pricing(g, duals, s, t, method="milp", arc_costs=ac, node_costs=nc)
    assert mil.cost == pytest.approx(want, abs=1e-9)
    assert mil.path.nodes == (2, 4, 5, 1, 5, 3)
    assert solve_pricing(g, duals, s, t, method="auto", arc_costs=ac, node_costs=nc).cost == pytest.approx(want, abs=1e-9)


def test_support_trail_on_revisit(hand):
    _, g = hand("revisit")
    want = g.path_from_nodes((0, 3, 2, 3, 1))
    trail, decided = _support_trail(g, set(want.arcs), 0, 1, g.max_distance)
    assert trail == list(want.arcs) and decided
    # the segment 0-3-1 is too long, so the arcs 0-3, 3-1 alone admit no trail
    assert _support_trail(g, {want.arcs[0], want.arcs[-1]}, 0, 1, g.max_distance) == (None, True)
