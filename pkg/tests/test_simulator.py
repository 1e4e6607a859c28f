"""
Tests for the synchronous routing simulator
"""

import pytest
from conftest import cycle

from qroute.config import Settings
from qroute.errors import ProtocolError
from qroute.graphs import ElectricNetwork, gen_complete, gen_grid, gen_path, gen_star
from qroute.ledger import Category
from qroute.scheduler import SchedulingMode, WalkRequest
from qroute.simulator import (
    ConvergecastProgram, FloodingProgram, IdleProgram, NodeProgram, RoutingContext, Transition,
    payload_bits, run_protocol, split_rng, word_bits,
)
from qroute.walk import Fidelity, Verdict


def flood(graph, source=0):
    programs = [FloodingProgram(source=(v == source)) for v in range(graph.n)]
    return run_protocol(graph, programs, max_rounds=4 * graph.n)


class TestHelpers:
    def test_split_rng_is_deterministic_per_key(self):
        a = split_rng(5, 1, 2).integers(0, 1 << 30, size=4)
        b = split_rng(5, 1, 2).integers(0, 1 << 30, size=4)
        c = split_rng(5, 2, 1).integers(0, 1 << 30, size=4)
        assert a.tolist() == b.tolist()
        assert a.tolist() != c.tolist()

    @pytest.mark.parametrize("n, bits", [(1, 8), (3, 8), (256, 8), (1000, 10), (5000, 13)])
    def test_word_bits(self, n, bits):
        assert word_bits(n, Settings()) == bits

    def test_payload_bits(self):
        assert payload_bits((0, 1, 255)) == 1 + 1 + 8


class TestRoutingContext:
    """Sends, ids and the transcript"""

    def test_ids_are_distinct_and_bounded(self):
        ctx = RoutingContext(gen_complete(20), seed=3)
        ids = ctx.ids.tolist()
        assert len(set(ids)) == 20
        assert all(0 <= x < 20 ** 3 for x in ids)
        assert ctx.node_of(ids[7]) == 7

    def test_ids_are_seeded(self):
        assert RoutingContext(gen_path(9), seed=1).ids.tolist() == RoutingContext(gen_path(9), seed=1).ids.tolist()

    def test_duplicate_given_ids(self):
        with pytest.raises(ProtocolError):
            RoutingContext(gen_path(3), ids=[4, 4, 5])

    def test_send_returns_receiver_and_arrival_port(self):
        graph = gen_star(4)
        ctx = RoutingContext(graph)
        u, q = ctx.send(0, 2, (7,))
        assert u == graph.neighbor(0, 2)
        assert graph.neighbor(u, q) == 0
        assert ctx.ledger.classical == 1

    @pytest.mark.parametrize("port", [0, 3])
    def test_bad_port(self, port):
        with pytest.raises(ProtocolError, match="no port"):
            RoutingContext(gen_path(3)).send(1, port)

    def test_payload_budget(self):
        ctx = RoutingContext(gen_path(4))
        ctx.send(0, 1, (255, 255, 255, 255))
        with pytest.raises(ProtocolError, match="exceeds"):
            ctx.send(0, 1, (1 << 40,))
        with pytest.raises(ProtocolError, match="nonnegative"):
            ctx.send(0, 1, (-1,))

    def test_classical_charges_need_send(self):
        with pytest.raises(ProtocolError):
            RoutingContext(gen_path(2)).charge_quantum(Category.CLASSICAL, 0, 1)

    def test_transcript_window_evicts_old_rounds(self):
        ctx = RoutingContext(gen_path(3), settings=Settings(transcript_window=1))
        for _ in range(3):
            ctx.send(0, 1)
            ctx.advance()
        assert len(ctx.transcript) == 1
        assert ctx.transcript.evicted == 2
        assert ctx.transcript.event_count == 3
        assert not ctx.transcript.complete

    def test_retained_transcript_is_complete(self):
        ctx = RoutingContext(gen_path(3), settings=Settings(transcript_window=1), retain_transcript=True)
        for _ in range(3):
            ctx.send(1, 2)
            ctx.advance()
        assert ctx.transcript.complete
        assert ctx.transcript.message_count() == 3

    def test_run_walks_charges_the_root(self):
        ctx = RoutingContext(gen_path(4), fidelity=Fidelity.COST)
        net = ElectricNetwork.build([(0, 1, 1.0)], root=0, marked=[1], token="w")
        outcome = ctx.run_walks([WalkRequest(net, R=1.0, W=1.0, delta=0.1)],
                                SchedulingMode.EXCLUSIVE, [0])
        assert outcome.verdicts == [Verdict.NONEMPTY]
        assert ctx.ledger.walk == outcome.total_messages
        assert ctx.round == outcome.rounds
        assert [e.sender for e in ctx.transcript] == [0]

    def test_audits_only_when_enabled(self):
        quiet = RoutingContext(gen_path(2))
        quiet.audit("check", ok=True)
        loud = RoutingContext(gen_path(2), audit=True)
        loud.audit("check", ok=True)
        assert quiet.audits == []
        assert loud.audits_of("check")[0].data == {"ok": True}


class TestRunProtocol:
    """Lock-step execution of node programs"""

    @pytest.mark.parametrize("graph", [cycle(4), gen_path(4), gen_grid(3, 3), gen_complete(6)])
    def test_flooding_message_count(self, graph):
        _, ledger = flood(graph)
        assert ledger.classical == 2 * graph.m - (graph.n - 1)
        assert ledger.is_conserved()

    def test_flooding_rounds_track_eccentricity(self):
        _, ledger = flood(gen_path(5))
        assert ledger.rounds == 4

    def test_convergecast_min(self):
        graph = gen_path(4)
        values = [9, 4, 7, 6]
        programs = [
            ConvergecastProgram(
                parent_port=None if v == 0 else graph.port_to(v, v - 1),
                child_count=0 if v == 3 else 1,
                value=values[v],
            )
            for v in range(4)
        ]
        _, ledger = run_protocol(graph, programs, max_rounds=10)
        assert programs[0].result == 4
        assert ledger.classical == 3

    def test_idle_programs_stop_at_once(self):
        _, ledger = run_protocol(gen_path(3), [IdleProgram() for _ in range(3)], max_rounds=5)
        assert (ledger.rounds, ledger.total()) == (0, 0)

    def test_round_cap(self):
        class Chatter(NodeProgram):
            def step(self, view, inbox, round_no):
                return Transition(sends=[(1, ())])

        _, ledger = run_protocol(gen_path(2), [Chatter(), Chatter()], max_rounds=3)
        assert ledger.rounds == 3
        assert ledger.classical == 8

    def test_walk_results_come_back(self):
        class Asker(NodeProgram):
            def __init__(self):
                self.results = []
                self.asked = False

            def step(self, view, inbox, round_no):
                if self.asked:
                    return Transition(terminate=bool(self.results))
                self.asked = True
                net = ElectricNetwork.build([(0, 1, 1.0)], root=0, marked=[1], token=view.node)
                return Transition(walk_requests=[WalkRequest(net, R=1.0, W=1.0, delta=0.1)])

            def on_walk_result(self, request, result):
                self.results.append(result.verdict)

        asker = Asker()
        _, ledger = run_protocol(gen_path(2), [asker, IdleProgram()], max_rounds=10, fidelity=Fidelity.COST)
        assert asker.results == [Verdict.NONEMPTY]
        assert ledger.walk > 0

    def test_program_count(self):
        with pytest.raises(ProtocolError):
            run_protocol(gen_path(3), [IdleProgram()], max_rounds=1)

    def test_transcript_replays_flooding(self):
        transcript, ledger = flood(gen_star(5))
        assert transcript.complete
        assert transcript.message_count() == ledger.total()
        assert {e.category for e in transcript} == {Category.CLASSICAL}
