"""
Walk scheduler for qroute
Runs a batch of walk-based detections side by side, checks that they may
share the network, and charges the messages and rounds the batch costs.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .config import Settings, get_settings
from .errors import DisjointnessError, ProtocolError
from .graphs import canonical
from .ledger import Category, MessageLedger
from .walk import DetectionResult, Fidelity, Verdict, detect_marked

log = logging.getLogger(__name__)


class SchedulingMode(str, Enum):
    EXCLUSIVE = "exclusive"
    EDGE_DISJOINT = "edge-disjoint"
    MARKED_SHARED = "marked-shared"


# Messages (and rounds) one walk step costs per scheduling mode
MESSAGES_PER_STEP = {
    SchedulingMode.EXCLUSIVE: 1,
    SchedulingMode.EDGE_DISJOINT: 1,
    SchedulingMode.MARKED_SHARED: 3,
}


@dataclass(frozen=True)
class WalkRequest:
    """
    One detection to run inside a batch.

    ``net`` is an ElectricNetwork or any object with ``root``, ``token``,
    ``has_reachable_marked()`` and ``materialize()``.
    """
    net: Any
    R: float
    W: float
    delta: float
    mode: Optional[SchedulingMode] = None

    @property
    def token(self) -> Hashable:
        return self.net.token


@dataclass
class ScheduleOutcome:
    results: List[DetectionResult]
    messages: List[int]
    rounds: int
    ledger: MessageLedger = field(repr=False)

    @property
    def verdicts(self) -> List[Verdict]:
        return [r.verdict for r in self.results]

    @property
    def total_messages(self) -> int:
        return sum(self.messages)


def _check_tokens(batch: Sequence[WalkRequest]) -> None:
    seen = set()
    for request in batch:
        if request.token in seen:
            errmsg = f"two walks in one batch share the token {request.token!r}"
            log.error(errmsg)
            raise ProtocolError(errmsg)
        seen.add(request.token)


def check_disjointness(batch: Sequence[WalkRequest], mode: SchedulingMode) -> None:
    """
    Verify that the walks of a batch may run at the same time

    Args:
        batch: Requests whose networks are materialized for the check
        mode: EDGE_DISJOINT forbids any shared edge; MARKED_SHARED allows an
            edge to be shared when one of its endpoints is marked in one of
            the walks sharing it

    Raises:
        DisjointnessError: naming the first offending edge and both tokens
    """
    mode = SchedulingMode(mode)
    if mode is SchedulingMode.EXCLUSIVE:
        return
    owners: Dict[Tuple[int, int], List] = {}
    for request in batch:
        net = request.net.materialize()
        for u, v, _ in net.edges:
            owners.setdefault(canonical(u, v), []).append(net)

    for edge, nets in owners.items():
        if len(nets) < 2:
            continue
        if mode is SchedulingMode.EDGE_DISJOINT:
            shared_ok = False
        else:
            shared_ok = any(edge[0] in net.marked or edge[1] in net.marked for net in nets)
        if not shared_ok:
            tokens = (nets[0].token, nets[1].token)
            errmsg = f"edge {edge} is used by walks {tokens[0]!r} and {tokens[1]!r} under {mode.value}"
            log.error(errmsg)
            raise DisjointnessError(errmsg, edge=edge, tokens=tokens)


def schedule_walks(batch: Sequence[WalkRequest], mode: SchedulingMode, fidelity: Fidelity,
                   rng: np.random.Generator, settings: Optional[Settings] = None,
                   check: bool = True) -> ScheduleOutcome:
    """
    Run every request of a batch and charge the batch cost

    Args:
        batch: Walk requests with pairwise distinct tokens
        mode: How the walks share edges
        fidelity: Exact simulation or cost model
        rng: Randomness for the detection trials, consumed in batch order
        settings: Constants block
        check: Run the disjointness check (both fidelities); only callers
            whose batches are disjoint by construction turn it off

    Returns:
        ScheduleOutcome: per-request results and messages, batch rounds and
        a ledger holding only this batch's charges
    """
    settings = settings or get_settings()
    mode = SchedulingMode(mode)
    fidelity = Fidelity(fidelity)
    _check_tokens(batch)
    for request in batch:
        if request.mode is not None and SchedulingMode(request.mode) is not mode:
            errmsg = f"walk {request.token!r} asks for {request.mode} inside a {mode.value} batch"
            log.error(errmsg)
            raise ProtocolError(errmsg)
    if check:
        check_disjointness(batch, mode)

    rule = MESSAGES_PER_STEP[mode]
    results = [
        detect_marked(request.net, request.R, request.W, request.delta, fidelity, rng, settings)
        for request in batch
    ]
    # a step costs `rule` messages and as many rounds
    messages = [result.steps * rule for result in results]
    if mode is SchedulingMode.EXCLUSIVE:
        rounds = sum(messages)
    else:
        rounds = max(messages, default=0)

    charges = MessageLedger()
    charges.charge(Category.WALK, sum(messages))
    charges.advance(rounds)
    log.debug("scheduled %d walk(s) in %s mode: %d messages, %d rounds",
              len(batch), mode.value, sum(messages), rounds)
    return ScheduleOutcome(results=results, messages=messages, rounds=rounds, ledger=charges)
