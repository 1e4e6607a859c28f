"""
Synchronous routing simulator for qroute
Executes node programs in lock-step rounds on a ported graph, validates and
charges every message, keeps a bounded transcript and dispatches walk
requests to the scheduler.
"""

import logging
import math
from abc import ABC, abstractmethod
from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import Settings, get_settings
from .errors import ProtocolError
from .graphs import PortedGraph
from .ledger import Category, MessageLedger
from .scheduler import SchedulingMode, ScheduleOutcome, WalkRequest, schedule_walks
from .walk import Fidelity

log = logging.getLogger(__name__)

Payload = Tuple[int, ...]


def split_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys), counter-mode style"""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys)))


def word_bits(n: int, settings: Optional[Settings] = None) -> int:
    settings = settings or get_settings()
    return max(math.ceil(math.log2(max(n, 2))), settings.min_word_bits)


def payload_bits(payload: Sequence[int]) -> int:
    return sum(max(1, int(x).bit_length()) for x in payload)


# ==================== TRANSCRIPT ====================

class TranscriptEvent(NamedTuple):
    round: int
    category: Category
    sender: int
    port: Optional[int]
    receiver: Optional[int]
    count: int
    phase: str


class Transcript:
    """
    Message events of a run.

    Keeps the events of the last ``window`` rounds plus running aggregates;
    with ``retain_all`` nothing is evicted (needed to replay a run).
    """

    def __init__(self, window: int, retain_all: bool = False):
        self.window = window
        self.retain_all = retain_all
        self._events: deque = deque()
        self.event_count = 0
        self.evicted = 0

    def record(self, event: TranscriptEvent) -> None:
        self._events.append(event)
        self.event_count += 1
        if self.retain_all:
            return
        horizon = event.round - self.window
        while self._events and self._events[0].round <= horizon:
            self._events.popleft()
            self.evicted += 1

    @property
    def complete(self) -> bool:
        return self.evicted == 0

    def __iter__(self) -> Iterator[TranscriptEvent]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def message_count(self) -> int:
        return sum(e.count for e in self._events)


@dataclass
class AuditRecord:
    kind: str
    round: int
    data: Dict[str, Any]


# ==================== CONTEXT ====================

class RoutingContext:
    """Everything a protocol needs to run on one graph: clock, ids, ledger and randomness"""

    def __init__(self, graph: PortedGraph, seed: int = 0, fidelity: Fidelity = Fidelity.EXACT,
                 settings: Optional[Settings] = None, retain_transcript: bool = False,
                 audit: bool = False, ids: Optional[Sequence[int]] = None):
        self.graph = graph
        self.seed = int(seed)
        self.fidelity = Fidelity(fidelity)
        self.settings = settings or get_settings()
        self.rng = split_rng(self.seed, 0)
        self.ledger = MessageLedger()
        self.transcript = Transcript(self.settings.transcript_window, retain_all=retain_transcript)
        self.auditing = audit
        self.audits: List[AuditRecord] = []
        self.word_bits = word_bits(graph.n, self.settings)
        self.payload_budget = self.settings.word_budget * self.word_bits
        self.ids = np.asarray(ids, dtype=np.int64) if ids is not None else self._draw_ids()
        if len(self.ids) != graph.n or len(set(self.ids.tolist())) != graph.n:
            raise ProtocolError(f"node ids must be {graph.n} distinct integers")
        self._node_of = {int(x): v for v, x in enumerate(self.ids.tolist())}

    def _draw_ids(self) -> np.ndarray:
        """Distinct random ids in [0, n^3), redrawing collisions"""
        n = self.graph.n
        space = max(n ** 3, n)
        rng = split_rng(self.seed, 1)
        ids = rng.integers(0, space, size=n)
        while len(np.unique(ids)) < n:
            _, first = np.unique(ids, return_index=True)
            dup = np.setdiff1d(np.arange(n), first)
            ids[dup] = rng.integers(0, space, size=len(dup))
        return ids

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def id_space(self) -> int:
        return max(self.graph.n ** 3, self.graph.n)

    def node_of(self, rid: int) -> int:
        """Node holding a random id (simulator bookkeeping)"""
        return self._node_of[int(rid)]

    @property
    def round(self) -> int:
        return self.ledger.round

    def check_payload(self, payload: Sequence[int]) -> Payload:
        payload = tuple(int(x) for x in payload)
        if any(x < 0 for x in payload):
            raise ProtocolError(f"payload fields must be nonnegative integers, got {payload}")
        bits = payload_bits(payload)
        if bits > self.payload_budget:
            errmsg = (f"payload of {bits} bits exceeds the {self.settings.word_budget}-word budget "
                      f"({self.payload_budget} bits)")
            log.error(errmsg)
            raise ProtocolError(errmsg)
        return payload

    def send(self, v: int, p: int, payload: Sequence[int] = (), phase: Optional[str] = None) -> Tuple[int, int]:
        """
        Send one classical message from v through port p

        Args:
            v: Sending node
            p: Port of v, 1..deg(v)
            payload: Nonnegative integers within the word budget
            phase: Ledger phase tag; defaults to the current phase

        Returns:
            tuple: (receiver, port of arrival at the receiver)
        """
        degree = self.graph.degree(v)
        if not 1 <= p <= degree:
            errmsg = f"node {v} has no port {p} (degree {degree})"
            log.error(errmsg)
            raise ProtocolError(errmsg)
        self.check_payload(payload)
        u = self.graph.neighbor(v, p)
        q = self.graph.reverse_port(v, p)
        self.ledger.charge(Category.CLASSICAL, 1, phase=phase)
        self.transcript.record(TranscriptEvent(self.round, Category.CLASSICAL, v, p, u, 1,
                                               phase or self.ledger.current_phase))
        return u, q

    def send_many(self, pairs: Sequence[Tuple[int, int]], phase: Optional[str] = None) -> None:
        """Payload-free sends for bulk (v, p) pairs, charged one message each"""
        for v, p in pairs:
            self.send(v, p, (), phase=phase)

    def charge_quantum(self, category: Category, sender: int, count: int,
                       port: Optional[int] = None, phase: Optional[str] = None) -> None:
        """Charge walk-step or Grover-query messages issued by a root node"""
        category = Category(category)
        if category is Category.CLASSICAL:
            raise ProtocolError("classical messages go through send()")
        if count <= 0:
            return
        self.ledger.charge(category, count, phase=phase)
        receiver = self.graph.neighbor(sender, port) if port is not None else None
        self.transcript.record(TranscriptEvent(self.round, category, sender, port, receiver, count,
                                               phase or self.ledger.current_phase))

    def advance(self, rounds: int = 1) -> None:
        self.ledger.advance(rounds)

    @contextmanager
    def phase(self, name: str):
        with self.ledger.phase(name) as totals:
            yield totals

    def run_walks(self, batch: Sequence[WalkRequest], mode: SchedulingMode,
                  senders: Sequence[int], check: bool = True) -> ScheduleOutcome:
        """Run a walk batch, charge each walk to its root and advance the clock by the batch rounds"""
        outcome = schedule_walks(batch, mode, self.fidelity, self.rng, self.settings, check=check)
        for sender, messages in zip(senders, outcome.messages):
            self.charge_quantum(Category.WALK, sender, messages)
        self.advance(outcome.rounds)
        return outcome

    def audit(self, kind: str, **data: Any) -> None:
        if self.auditing:
            self.audits.append(AuditRecord(kind=kind, round=self.round, data=data))

    def audits_of(self, kind: str) -> List[AuditRecord]:
        return [a for a in self.audits if a.kind == kind]


# ==================== NODE PROGRAMS ====================

@dataclass(frozen=True)
class LocalView:
    node: int
    degree: int
    random_id: int


@dataclass(frozen=True)
class Delivery:
    port: int
    payload: Payload


@dataclass
class Transition:
    sends: List[Tuple[int, Payload]] = field(default_factory=list)
    walk_requests: List[WalkRequest] = field(default_factory=list)
    terminate: bool = False


class NodeProgram(ABC):
    """Per-node behavior; local state lives on the instance"""

    terminated: bool = False

    @abstractmethod
    def step(self, view: LocalView, inbox: List[Delivery], round_no: int) -> Transition:
        ...

    def on_walk_result(self, request: WalkRequest, result) -> None:
        """Called in the round after a requested walk finished"""


class IdleProgram(NodeProgram):
    def step(self, view, inbox, round_no):
        return Transition(terminate=True)


class FloodingProgram(NodeProgram):
    """
    Flood an item from the source.

    The source sends on every port; any other node forwards on every port
    except the arrival port on first receipt, then terminates.
    """

    def __init__(self, source: bool, item: Payload = (1,)):
        self.source = source
        self.item = tuple(item) if source else None

    def step(self, view, inbox, round_no):
        if self.source and round_no == 0:
            return Transition(sends=[(p, self.item) for p in range(1, view.degree + 1)], terminate=True)
        if not inbox:
            return Transition()
        first = inbox[0]
        self.item = first.payload
        ports = [p for p in range(1, view.degree + 1) if p != first.port]
        return Transition(sends=[(p, self.item) for p in ports], terminate=True)


class ConvergecastProgram(NodeProgram):
    """Fold values up a rooted tree; the root ends with the aggregate in ``result``"""

    def __init__(self, parent_port: Optional[int], child_count: int, value: int,
                 combine: Callable[[int, int], int] = min):
        self.parent_port = parent_port
        self.pending = child_count
        self.acc = value
        self.combine = combine
        self.result: Optional[int] = None

    def step(self, view, inbox, round_no):
        for delivery in inbox:
            self.acc = self.combine(self.acc, delivery.payload[0])
            self.pending -= 1
        if self.pending > 0:
            return Transition()
        if self.parent_port is None:
            self.result = self.acc
            return Transition(terminate=True)
        return Transition(sends=[(self.parent_port, (self.acc,))], terminate=True)


def run_protocol(graph: PortedGraph, programs: Sequence[NodeProgram], max_rounds: int, seed: int = 0,
                 fidelity: Fidelity = Fidelity.EXACT, settings: Optional[Settings] = None,
                 walk_mode: SchedulingMode = SchedulingMode.EDGE_DISJOINT,
                 retain_transcript: bool = True) -> Tuple[Transcript, MessageLedger]:
    """
    Run one program per node in synchronous rounds

    Sends issued in round t arrive in round t+1. Walk requests issued in a
    round run as one batch and their rounds are added to the clock. The run
    ends once every node has terminated and no message is in flight, or
    after max_rounds.

    Returns:
        tuple: (transcript, ledger); ledger.rounds is the last round executed
    """
    if len(programs) != graph.n:
        raise ProtocolError(f"need one program per node: {graph.n} nodes, {len(programs)} programs")
    ctx = RoutingContext(graph, seed=seed, fidelity=fidelity, settings=settings,
                         retain_transcript=retain_transcript)
    views = [LocalView(v, graph.degree(v), int(ctx.ids[v])) for v in range(graph.n)]
    inboxes: List[List[Delivery]] = [[] for _ in range(graph.n)]
    pending_results: List[Tuple[NodeProgram, WalkRequest, Any]] = []
    t = 0
    while True:
        for program, request, result in pending_results:
            program.on_walk_result(request, result)
        pending_results = []

        outgoing: List[Tuple[int, Delivery]] = []
        batch: List[Tuple[int, WalkRequest]] = []
        for v, program in enumerate(programs):
            if program.terminated:
                continue
            transition = program.step(views[v], inboxes[v], t)
            for port, payload in transition.sends:
                payload = tuple(payload)
                u, q = ctx.send(v, port, payload)
                outgoing.append((u, Delivery(q, payload)))
            batch.extend((v, request) for request in transition.walk_requests)
            if transition.terminate:
                program.terminated = True

        if batch:
            outcome = ctx.run_walks([r for _, r in batch], walk_mode, [v for v, _ in batch])
            pending_results = [(programs[v], r, res) for (v, r), res in zip(batch, outcome.results)]

        inboxes = [[] for _ in range(graph.n)]
        for u, delivery in outgoing:
            inboxes[u].append(delivery)
        if all(p.terminated for p in programs) and not outgoing and not pending_results:
            break
        if t >= max_rounds:
            log.warning("protocol stopped at the round cap %d with live nodes", max_rounds)
            break
        t += 1
        ctx.advance(1)

    log.debug("protocol finished after %d rounds, %d messages", ctx.ledger.rounds, ctx.ledger.total())
    return ctx.transcript, ctx.ledger
