import csv
import itertools

import pytest

from fsobackhaul.core import CostWeights, Node, NodeKind, NotKConnectableError, Topology, paths_link_disjoint
from fsobackhaul.exact import solve_exact
from fsobackhaul.instance import Instance, Obstacle, build_potential_graph, generate_random_instance
from fsobackhaul.pricing import path_cost
from fsobackhaul.sequential import (
    DeploymentState,
    PathPool,
    breakdown_paths,
    commodity_order,
    count_devices,
    feasibility_check,
    find_initial_paths,
    generate_paths,
    sequential_solve,
    solve_joint_assignment,
    solve_master_lp,
    write_traces,
)
from fsobackhaul.sequential import _entry_weights, arc_costs, path_device_cost

from conftest import fixture_instance
from oracles import enumerate_paths
from recipes import W_DEFAULT


def _pool_for(g, d, routes):
    pool = PathPool(g)
    for r in routes:
        pool.add(d, g.path_from_nodes(r))
    return pool


def _k5():
    """Five FSO nodes, all pairwise in line of sight."""
    pts = [(0, 0), (1000, 0), (500, 500), (500, -500), (250, 250)]
    nodes = tuple(Node(i, NodeKind.FSO, x, y) for i, (x, y) in enumerate(pts))
    return build_potential_graph(Instance(nodes, K=2, weights=W_DEFAULT))


def _detour():
    """Blocked pair 0-1 with an FSO relay (2) and a cheaper roof mirror (3)."""
    nodes = (
        Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1200, 0),
        Node(2, NodeKind.FSO, 600, -700), Node(3, NodeKind.MIRROR, 600, 300),
        Node(4, NodeKind.MIRROR, 600, -1500),
    )
    return build_potential_graph(Instance(nodes, obstacles=(Obstacle(550, -50, 650, 50),), K=1, weights=W_DEFAULT))


# initial paths -------------------------------------------------------------
def test_initial_paths_parallel_routes(hand):
    _, g = hand("triangle_k2")
    d = g.commodity(0, 1).id
    pool = find_initial_paths(g, d, 2)
    assert feasibility_check(pool, 2, d=d)


def test_initial_paths_bridge_infeasible():
    nodes = (Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1000, 0))
    g = build_potential_graph(Instance(nodes, K=2))
    with pytest.raises(NotKConnectableError) as err:
        find_initial_paths(g, 0, 2)
    assert err.value.commodity.pair == (0, 1)


def test_initial_paths_mirror_plus_direct(hand):
    _, g = hand("open_pair_with_mirror")
    pool = find_initial_paths(g, 0, 2)
    assert sorted(p.nodes for p in pool[0]) == [(0, 1), (0, 2, 1)]


def test_initial_paths_blocked_pair(hand):
    _, g = hand("blocked_pair")
    pool = find_initial_paths(g, g.commodity(0, 1).id, 2)
    assert sorted(p.nodes for p in pool[g.commodity(0, 1).id]) == [(0, 2, 1), (0, 3, 1)]


# master --------------------------------------------------------------------
def test_master_unique_point(hand):
    _, g = hand("open_pair_with_mirror")
    pool = _pool_for(g, 0, [(0, 1), (0, 2, 1)])
    sol, lam, pi = solve_master_lp(pool, g, W_DEFAULT, 2, d=0)
    assert sol.x[0] == pytest.approx(1.0) and sol.x[1] == pytest.approx(1.0)


def test_master_all_sunk_is_free(hand):
    _, g = hand("open_pair_with_mirror")
    pool = _pool_for(g, 0, [(0, 1), (0, 2, 1)])
    state = DeploymentState()
    state.record(pool[0], g)
    sol, _, _ = solve_master_lp(pool, g, CostWeights(4, 2, 1, 0), 2, state, d=0)
    assert sol.objective == pytest.approx(0.0)


def test_master_k1_is_best_single_path(hand):
    _, g = hand("blocked_pair")
    d = g.commodity(0, 1).id
    pool = _pool_for(g, d, [(0, 2, 1), (0, 3, 1)])
    sol, _, _ = solve_master_lp(pool, g, W_DEFAULT, 1, d=d)
    best = min(Topology.from_paths(g, {d: [p]}, 1, W_DEFAULT).objective for p in pool[d])
    assert sol.objective == pytest.approx(best, abs=1e-9)


# column generation ---------------------------------------------------------
def test_generate_adds_cheaper_detour():
    g = _detour()
    d = g.commodity(0, 1).id
    pool = _pool_for(g, d, [(0, 2, 1)])
    before, _, _ = solve_master_lp(pool, g, W_DEFAULT, 1, d=d)
    generate_paths(g, d, 1, W_DEFAULT, pool=pool)
    assert [p.nodes for p in pool[d]] == [(0, 2, 1), (0, 3, 1)]
    after, _, _ = solve_master_lp(pool, g, W_DEFAULT, 1, d=d)
    assert after.objective < before.objective - 1
    # the detour is the enumerated optimum for this pair
    best = min(
        Topology.from_paths(g, {d: [g.path_from_nodes(n)]}, 1, W_DEFAULT).objective
        for n, _ in enumerate_paths(g, 0, 1)
    )
    assert after.objective == pytest.approx(best, abs=1e-9)


def test_generate_is_idempotent():
    g = _detour()
    d = g.commodity(0, 1).id
    pool = _pool_for(g, d, [(0, 2, 1)])
    generate_paths(g, d, 1, W_DEFAULT, pool=pool)
    size = len(pool[d])
    generate_paths(g, d, 1, W_DEFAULT, pool=pool)
    assert len(pool[d]) == size


@pytest.mark.parametrize("name", ["revisit", "blocked_pair", "open_pair_with_mirror", "triangle_k2"])
def test_stop_condition_sound(hand, name):
    """At termination no enumerated path prices below the cardinality dual."""
    inst, g = hand(name)
    state = DeploymentState()
    pool = PathPool(g)
    costs = arc_costs(g, inst.weights, state)
    for c in commodity_order(g):
        find_initial_paths(g, c, inst.K, pool)
        generate_paths(g, c, inst.K, inst.weights, state, pool)
        sol, lam, pi = solve_master_lp(pool, g, inst.weights, inst.K, state, c.id)
        pi, leases = _entry_weights(g, inst.weights, state, pool[c.id], pi)
        for nodes, links in enumerate_paths(g, c.source, c.dest):
            p = g.path_from_nodes(nodes)
            reduced = path_device_cost(p, g, inst.weights, state) + path_cost(p, pi, None, leases) - lam
            assert reduced >= -1e-6


# feasibility ---------------------------------------------------------------
def test_feasibility_examples(hand):
    g = _k5()
    d = g.commodity(0, 1).id
    assert feasibility_check(_pool_for(g, d, [(0, 1), (0, 2, 1)]), 2, d=d)
    # pairwise conflicts 0-2, 2-3, 2-1 with no common link: LP value 1.5, no integral pair
    odd = [g.path_from_nodes(r) for r in [(0, 2, 1), (0, 2, 3, 1), (0, 3, 2, 1)]]
    for a, b in itertools.combinations(odd, 2):
        assert not paths_link_disjoint([a, b], g)
    assert not feasibility_check(odd, 2, g)
    assert not feasibility_check([], 1, g)


# breakdown -----------------------------------------------------------------
def test_breakdown_revisit(hand):
    _, g = hand("revisit")
    pool = PathPool(g)
    d01, d02, d12 = (g.commodity(*p).id for p in ((0, 1), (0, 2), (1, 2)))
    pool.add(d01, g.path_from_nodes((0, 3, 2, 3, 1)))
    assert breakdown_paths(pool, d01) == 2
    assert [p.nodes for p in pool[d02]] == [(0, 3, 2)]
    assert [p.nodes for p in pool[d12]] == [(1, 3, 2)]
    assert [p.nodes for p in pool[d01]] == [(0, 3, 2, 3, 1)]
    assert breakdown_paths(pool, d01) == 0


def test_breakdown_direct_adds_nothing(hand):
    _, g = hand("triangle_k1")
    pool = _pool_for(g, 0, [(0, 1)])
    assert breakdown_paths(pool, 0) == 0 and pool.size() == 1


# counting ------------------------------------------------------------------
def test_counting_examples(hand):
    _, g = hand("triangle_k1")
    dev = count_devices({0: [g.path_from_nodes((0, 1))]}, g)
    assert (dev.F, dev.M, dev.N) == (2, 0, 0)
    _, g = hand("revisit")
    dev = count_devices({0: [g.path_from_nodes((0, 3, 2, 3, 1))]}, g)
    assert (dev.F, dev.M, dev.N) == (4, 2, 1)


# joint assignment ----------------------------------------------------------
def _joint_bruteforce(pmap, g, w, K):
    best = float("inf")
    options = []
    for d in sorted(pmap):
        sets = [c for c in itertools.combinations_with_replacement(pmap[d], K) if paths_link_disjoint(list(c), g)]
        options.append((d, sets))
    for combo in itertools.product(*(s for _, s in options)):
        chosen = {d: list(c) for (d, _), c in zip(options, combo)}
        best = min(best, Topology.from_paths(g, chosen, K, w).objective)
    return best


def _pools(inst):
    g = build_potential_graph(inst)
    pool = PathPool(g)
    for c in commodity_order(g):
        find_initial_paths(g, c, inst.K, pool)
        generate_paths(g, c, inst.K, inst.weights, DeploymentState(), pool)
        breakdown_paths(pool, c.id)
    return g, pool


def test_joint_unique_assignment(hand):
    _, g = hand("open_pair_with_mirror")
    pool = _pool_for(g, 0, [(0, 1), (0, 2, 1)])
    topo = solve_joint_assignment(pool, g, W_DEFAULT, 2)
    assert sorted(p.nodes for p in topo.paths[0]) == [(0, 1), (0, 2, 1)]


@pytest.mark.parametrize("c4", [0.01, 50.0])
@pytest.mark.parametrize("name", ["revisit", "blocked_pair", "triangle_k2"])
def test_joint_matches_bruteforce(hand, name, c4):
    inst, _ = hand(name)
    g, pool = _pools(inst)
    w = CostWeights(4, 2, 1, c4)
    topo = solve_joint_assignment(pool, g, w, inst.K)
    assert topo.objective == pytest.approx(_joint_bruteforce(pool.paths, g, w, inst.K), abs=1e-6)


def test_joint_shares_mirror_copy(hand):
    inst, g = hand("revisit")
    pool = PathPool(g)
    d01, d02, d12 = (g.commodity(*p).id for p in ((0, 1), (0, 2), (1, 2)))
    pool.add(d01, g.path_from_nodes((0, 3, 2, 3, 1)))
    pool.add(d02, g.path_from_nodes((0, 3, 2)))
    pool.add(d12, g.path_from_nodes((1, 3, 2)))
    topo = solve_joint_assignment(pool, g, W_DEFAULT, 1)
    assert (topo.F, topo.M, topo.N) == (4, 2, 1)
    assert topo.objective == pytest.approx(_joint_bruteforce(pool.paths, g, W_DEFAULT, 1), abs=1e-9)


# orchestration -------------------------------------------------------------
def test_fiber_pair_zero_cost(hand):
    inst, g = hand("fiber_pair")
    topo = sequential_solve(inst)
    assert topo.objective == 0.0
    topo.check(g)


def test_commodity_order_descending_distance(hand):
    _, g = hand("revisit")
    order = commodity_order(g)
    assert order[0].pair == (0, 1)
    assert [c.distance for c in order] == sorted((c.distance for c in order), reverse=True)


def test_not_connectable_names_commodity():
    nodes = (Node(0, NodeKind.FSO, 0, 0), Node(1, NodeKind.FSO, 1000, 0), Node(2, NodeKind.FSO, 0, 3000))
    with pytest.raises(NotKConnectableError) as err:
        sequential_solve(Instance(nodes, K=1))
    assert err.value.commodity is not None


def _single_commodity_instances(count=20):
    out = []
    for seed in range(500):
        inst = generate_random_instance(
            2, 6, area_side=1500, seed=9000 + seed, K=1 + seed % 2, weights=W_DEFAULT,
            nlos_link_fraction=0.3, fiber_pair_fraction=0.0,
        )
        try:
            exact = solve_exact(inst)
        except NotKConnectableError:
            continue
        out.append((inst, exact))
        if len(out) == count:
            return out


SINGLE = _single_commodity_instances()


@pytest.mark.parametrize("i", range(20))
def test_single_commodity_matches_exact(i):
    inst, exact = SINGLE[i]
    topo = sequential_solve(inst)
    assert topo.objective == pytest.approx(exact.objective, abs=1e-6)


@pytest.mark.parametrize("name", ["000", "006", "014", "022", "031", "041"])
def test_sequential_not_below_exact(name):
    inst = fixture_instance("sequential", name)
    g = build_potential_graph(inst)
    seq, exact = sequential_solve(inst), solve_exact(inst)
    seq.check(g)
    assert seq.objective >= exact.objective - 1e-6


def test_sequential_deterministic(hand):
    inst, _ = hand("blocked_pair")
    a, b = sequential_solve(inst), sequential_solve(inst)
    assert {d: [p.arcs for p in ps] for d, ps in a.paths.items()} == {d: [p.arcs for p in ps] for d, ps in b.paths.items()}
    assert a.objective == b.objective


def test_trace_csv(hand, tmp_path):
    inst, _ = hand("blocked_pair")
    topo = sequential_solve(inst)
    out = tmp_path / "trace.csv"
    write_traces(topo.info["traces"], out)
    rows = list(csv.DictReader(out.open(encoding="utf-8")))
    assert list(rows[0]) == ["commodity", "phase", "iteration", "master_objective", "pricing_cost", "lambda"]
    assert len(rows) == len(topo.info["traces"]) > 0


def test_master_monotone_per_commodity(hand):
    inst, _ = hand("blocked_pair")
    topo = sequential_solve(inst)
    by = {}
    for r in topo.info["traces"]:
        if r["phase"] == 2:
            by.setdefault(r["commodity"], []).append(r["master_objective"])
    for seq in by.values():
        assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:]))
