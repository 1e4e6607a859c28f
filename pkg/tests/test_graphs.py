"""
Tests for ported graphs, electric networks and the generator families
"""

import math

import networkx as nx
import numpy as np
import pytest
from conftest import cycle, kkt_resistance, random_network

from qroute.config import Settings
from qroute.errors import EmptyMarkedError, FlowError, GraphError, UnreachableMarkedError
from qroute.graphs import (
    ElectricNetwork, PortedGraph, UnitFlow, bfs_hard_layout, bridge_cliques, build_from_edge_list,
    edge_array, effective_resistance, flow_energy, gen_bfs_hard_instance, gen_complete, gen_grid,
    gen_path, gen_random_connected, gen_star, gen_two_cliques_crossed, gen_two_cliques_joined,
    graph_hash, one_factorization, shuffle_ports, to_networkx, total_weight, validate,
    with_unique_weights,
)


class TestBuildFromEdgeList:
    """Port assignment and input validation"""

    def test_ports_follow_input_order(self):
        g = build_from_edge_list([(0, 1), (0, 2), (1, 2)], 3)
        assert g.port_map[0] == (1, 2)
        assert g.port_map[1] == (0, 2)
        assert g.neighbor(1, 2) == 2
        # node 1 sits behind port 1 of node 0
        assert g.reverse_port(1, 1) == 1
        assert g.reverse_port(2, 2) == 2
        assert validate(g) == []

    def test_weights_are_kept(self):
        g = build_from_edge_list([(0, 1, 2.5), (1, 2, 0.5)], 3)
        assert g.is_weighted
        assert g.weight(1, 0) == 2.5
        assert g.port_weight(1, 2) == 0.5

    @pytest.mark.parametrize("edges, n, bad", [
        ([(0, 1), (1, 1)], 2, (1, 1)),
        ([(0, 1), (1, 0)], 2, (1, 0)),
        ([(0, 3)], 3, (0, 3)),
        ([(0, 1, 1.0), (1, 2)], 3, (1, 2)),
        ([(0, 1, -1.0)], 2, (0, 1)),
    ])
    def test_bad_edges_name_the_edge(self, edges, n, bad):
        with pytest.raises(GraphError) as err:
            build_from_edge_list(edges, n)
        assert err.value.edge == bad

    def test_empty_graph(self):
        g = build_from_edge_list([], 1)
        assert g.m == 0
        assert g.degrees == [0]
        assert g.component_count() == 1


class TestValidate:
    """Invariant checks on hand-built encodings"""

    def test_tampered_inverse_port(self):
        g = build_from_edge_list([(0, 1), (0, 2), (1, 2)], 3)
        broken = PortedGraph(n=3, port_map=g.port_map,
                             inverse_port=((2, 1), g.inverse_port[1], g.inverse_port[2]))
        violations = validate(broken)
        assert violations
        assert any("port symmetry" in v for v in violations)

    def test_duplicate_neighbor(self):
        broken = PortedGraph(n=2, port_map=((1, 1), (0, 0)), inverse_port=((1, 2), (1, 2)))
        assert any("simplicity" in v for v in validate(broken))

    def test_missing_weight(self):
        g = build_from_edge_list([(0, 1), (1, 2)], 3)
        broken = PortedGraph(n=3, port_map=g.port_map, inverse_port=g.inverse_port, weights={(0, 1): 1.0})
        assert any("no weight" in v for v in validate(broken))


class TestTransforms:
    """Port shuffles, weights, hashing"""

    def test_shuffle_keeps_edges_and_symmetry(self):
        g = gen_complete(7)
        shuffled = shuffle_ports(g, seed=3)
        assert validate(shuffled) == []
        assert set(shuffled.edges()) == set(g.edges())
        assert shuffled.degrees == g.degrees
        assert graph_hash(shuffled) != graph_hash(g)

    def test_hash_is_stable(self):
        assert graph_hash(gen_grid(3, 3)) == graph_hash(gen_grid(3, 3))

    def test_unique_weights_are_a_permutation(self):
        g = with_unique_weights(gen_grid(3, 4), seed=1)
        weights = sorted(g.weights.values())
        assert weights == [float(i) for i in range(1, g.m + 1)]

    def test_edge_array_ranks(self):
        g = build_from_edge_list([(0, 1, 3.0), (1, 2, 1.0), (0, 2, 2.0)], 3)
        table = edge_array(g)
        assert table.rank.tolist() == [2, 0, 1]
        assert table.port_edge[0].tolist() == [0, 2]

    def test_to_networkx(self):
        g = with_unique_weights(gen_path(5), seed=0)
        nxg = to_networkx(g)
        assert nxg.number_of_edges() == 4
        assert nxg[0][1]["weight"] == g.weight(0, 1)


class TestGenerators:
    """Generator families"""

    def test_sizes(self):
        assert gen_path(6).m == 5
        assert gen_star(6).degree(0) == 5
        assert gen_complete(6).m == 15
        assert gen_grid(3, 4).m == 17
        assert gen_two_cliques_joined(4).m == 13

    def test_random_connected(self):
        g = gen_random_connected(30, 70, seed=5)
        assert g.m == 70
        assert g.component_count() == 1
        assert validate(g) == []

    @pytest.mark.parametrize("n, m", [(5, 3), (5, 11), (0, 0)])
    def test_random_infeasible(self, n, m):
        with pytest.raises(GraphError):
            gen_random_connected(n, m)

    def test_two_cliques(self):
        unbridged = gen_two_cliques_crossed(4)
        assert unbridged.component_count() == 2
        bridged = gen_two_cliques_crossed(4, bridge=(0, 1, 4, 5))
        assert bridged.component_count() == 1
        assert bridged.degrees == unbridged.degrees
        assert nx.diameter(to_networkx(bridged)) == 3

    def test_bridge_must_be_ordered(self):
        with pytest.raises(GraphError):
            gen_two_cliques_crossed(4, bridge=(1, 0, 4, 5))

    def test_bridge_reuses_port_slots(self):
        base = gen_two_cliques_crossed(4)
        bridged = bridge_cliques(base, 2, 0, 5, 7)
        changed = [(v, p) for v in range(8) for p in range(1, 4)
                   if base.neighbor(v, p) != bridged.neighbor(v, p)]
        assert len(changed) == 4
        assert bridged.neighbor(2, base.port_to(2, 0)) == 5
        assert validate(bridged) == []

    def test_bridge_needs_existing_edges(self):
        base = gen_two_cliques_crossed(3)
        with pytest.raises(GraphError) as err:
            bridge_cliques(base, 0, 4, 3, 5)
        assert err.value.edge == (0, 4)

    def test_one_factorization(self):
        rounds = one_factorization(6)
        assert len(rounds) == 5
        for matching in rounds:
            covered = [v for e in matching for v in e]
            assert sorted(covered) == list(range(6))
        assert len({e for r in rounds for e in r}) == 15

    def test_bfs_hard_instance(self):
        graph, root = gen_bfs_hard_instance(4, 2, perm_seed=1)
        layout = bfs_hard_layout(4, 2)
        assert graph.n == 11
        assert graph.m == 4 + 8 + 4 + 4
        dist = graph.distances_from(root)
        assert all(dist[a] == 1 for a in layout.a_nodes)
        assert all(dist[b] == 2 for b in layout.b_nodes)
        assert all(dist[c] == 2 for c in layout.c_nodes)

    @pytest.mark.parametrize("n, d", [(3, 1), (4, 0), (4, 4)])
    def test_bfs_hard_bad_parameters(self, n, d):
        with pytest.raises(GraphError):
            gen_bfs_hard_instance(n, d)


class TestEffectiveResistance:
    """Effective resistance against closed forms and the flow oracle"""

    def test_series(self):
        net = ElectricNetwork.build([(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], root=0, marked=[3])
        assert effective_resistance(net) == pytest.approx(3.0, abs=1e-12)

    def test_parallel_paths(self):
        edges = [(u, v, 1.0) for u, v in cycle(4).edges()]
        net = ElectricNetwork.build(edges, root=0, marked=[2])
        assert effective_resistance(net) == pytest.approx(1.0, abs=1e-12)

    def test_conductances(self):
        net = ElectricNetwork.build({(0, 1): 2.0, (1, 2): 4.0}, root=0, marked=[2])
        assert effective_resistance(net) == pytest.approx(0.75, abs=1e-12)

    def test_marked_set_acts_as_one_sink(self):
        net = ElectricNetwork.build([(0, 1, 1), (0, 2, 1)], root=0, marked=[1, 2])
        assert effective_resistance(net) == pytest.approx(0.5)

    def test_root_marked(self):
        net = ElectricNetwork.build([(0, 1, 1)], root=0, marked=[0])
        assert effective_resistance(net) == 0.0

    def test_empty_and_unreachable(self):
        with pytest.raises(EmptyMarkedError):
            effective_resistance(ElectricNetwork.build([(0, 1, 1)], root=0))
        with pytest.raises(UnreachableMarkedError):
            effective_resistance(ElectricNetwork.build([(0, 1, 1), (2, 3, 1)], root=0, marked=[3]))

    def test_matches_flow_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(3, 13))
            m = int(rng.integers(n - 1, n * (n - 1) // 2 + 1))
            marked = rng.choice(np.arange(1, n), size=int(rng.integers(1, n)), replace=False)
            net = random_network(rng, n, m, marked.tolist())
            assert effective_resistance(net) == pytest.approx(kkt_resistance(net), abs=1e-9)

    def test_iterative_solver_agrees(self):
        rng = np.random.default_rng(2)
        net = random_network(rng, 12, 30, [11])
        dense = effective_resistance(net)
        iterative = effective_resistance(net, Settings(dense_solve_limit=1))
        assert iterative == pytest.approx(dense, rel=1e-8)


class TestFlows:
    """Flow energy and conservation checks"""

    def test_energy_of_a_path_flow(self):
        net = ElectricNetwork.build([(0, 1, 2.0), (1, 2, 0.5)], root=0, marked=[2])
        flow = UnitFlow.from_edges({(0, 1): 1.0, (1, 2): 1.0})
        assert flow_energy(net, flow) == pytest.approx(0.5 + 2.0)

    def test_any_unit_flow_is_at_least_the_resistance(self):
        net = ElectricNetwork.build([(0, 1, 1), (1, 2, 1), (2, 3, 1), (3, 0, 1)], root=0, marked=[2])
        one_sided = UnitFlow.from_edges({(0, 1): 1.0, (1, 2): 1.0})
        split = UnitFlow.from_edges({(0, 1): 0.5, (1, 2): 0.5, (0, 3): 0.5, (3, 2): 0.5})
        assert flow_energy(net, one_sided) == pytest.approx(2.0)
        assert flow_energy(net, split) == pytest.approx(effective_resistance(net))

    def test_conservation_failure_names_node(self):
        net = ElectricNetwork.build([(0, 1, 1), (1, 2, 1), (2, 3, 1)], root=0, marked=[3])
        leaky = UnitFlow.from_edges({(0, 1): 1.0, (1, 2): 0.5, (2, 3): 1.0})
        with pytest.raises(FlowError) as err:
            flow_energy(net, leaky)
        assert err.value.node == 1

    def test_flow_off_the_network(self):
        net = ElectricNetwork.build([(0, 1, 1)], root=0, marked=[1])
        with pytest.raises(FlowError):
            flow_energy(net, UnitFlow(values={(0, 1): 1.0, (1, 0): -1.0, (0, 5): 0.3}))

    def test_total_weight(self):
        net = ElectricNetwork.build([(0, 1, 1.5), (1, 2, 2.5)], root=0)
        assert total_weight(net) == 4.0
        assert math.isclose(total_weight(ElectricNetwork.build([], root=0)), 0.0)
