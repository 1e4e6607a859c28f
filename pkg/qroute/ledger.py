"""
Message ledger for qroute
Counts messages per round, per category and per algorithm phase, the way
the routing model defines message complexity: a walk step or Grover query
costs the same fixed number of messages however wide its superposition.
"""

from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional


class Category(str, Enum):
    CLASSICAL = "classical"
    WALK = "walk"
    GROVER = "grover"


@dataclass
class PhaseTotals:
    name: str
    classical: int = 0
    walk: int = 0
    grover: int = 0
    rounds: int = 0

    @property
    def total(self) -> int:
        return self.classical + self.walk + self.grover


class MessageLedger:
    """Per-round, per-category message counters with phase tags"""

    ROOT_PHASE = "run"

    def __init__(self):
        self.round = 0
        self._per_round: Dict[int, Counter] = {}
        self._totals: Counter = Counter()
        self._phases: Dict[str, PhaseTotals] = {}
        self._stack: List[str] = [self.ROOT_PHASE]

    @property
    def current_phase(self) -> str:
        return self._stack[-1]

    def _phase_entry(self, name: str) -> PhaseTotals:
        if name not in self._phases:
            self._phases[name] = PhaseTotals(name)
        return self._phases[name]

    def charge(self, category: Category, count: int = 1, phase: Optional[str] = None) -> None:
        """Add count messages of a category at the current round"""
        if count < 0:
            raise ValueError(f"message counts are nonnegative, got {count}")
        if count == 0:
            return
        category = Category(category)
        bucket = self._per_round.setdefault(self.round, Counter())
        bucket[category] += count
        self._totals[category] += count
        entry = self._phase_entry(phase or self.current_phase)
        setattr(entry, category.value, getattr(entry, category.value) + count)

    def advance(self, rounds: int = 1) -> None:
        if rounds < 0:
            raise ValueError(f"cannot move the clock back by {rounds}")
        self.round += rounds
        self._phase_entry(self.current_phase).rounds += rounds

    @contextmanager
    def phase(self, name: str) -> Iterator[PhaseTotals]:
        """Attribute charges and rounds inside the block to a named phase"""
        self._stack.append(name)
        try:
            yield self._phase_entry(name)
        finally:
            self._stack.pop()

    @property
    def rounds(self) -> int:
        return self.round

    def total(self, category: Optional[Category] = None) -> int:
        if category is None:
            return sum(self._totals.values())
        return self._totals[Category(category)]

    @property
    def classical(self) -> int:
        return self.total(Category.CLASSICAL)

    @property
    def walk(self) -> int:
        return self.total(Category.WALK)

    @property
    def grover(self) -> int:
        return self.total(Category.GROVER)

    def per_round(self) -> Dict[int, Dict[str, int]]:
        return {r: {c.value: n for c, n in bucket.items()} for r, bucket in sorted(self._per_round.items())}

    def phases(self) -> List[PhaseTotals]:
        return [p for p in self._phases.values() if p.total or p.rounds]

    def phase_history(self, name: str) -> Optional[PhaseTotals]:
        return self._phases.get(name)

    def is_conserved(self) -> bool:
        """Totals equal both the category sums and the per-round sums"""
        by_round = Counter()
        for bucket in self._per_round.values():
            by_round.update(bucket)
        by_phase = sum(p.total for p in self._phases.values())
        return (
            by_round == +self._totals
            and by_phase == self.total()
            and all(n >= 0 for n in self._totals.values())
        )

    def merge(self, other: "MessageLedger", phase: Optional[str] = None) -> None:
        """Fold another ledger's charges in at the current round and advance by its rounds"""
        start = self.round
        for offset, bucket in sorted(other._per_round.items()):
            self.round = start + offset
            for category, count in bucket.items():
                self.charge(category, count, phase=phase)
        self.round = start
        self.advance(other.rounds)

    def export(self, run_id: str, seed: int, n: int, m: int, algorithm: str):
        from .crud import LedgerExport, MessageCounts, PhaseExport

        return LedgerExport(
            run_id=run_id, seed=seed, n=n, m=m, algorithm=algorithm, rounds=self.rounds,
            messages=MessageCounts(classical=self.classical, walk=self.walk,
                                   grover=self.grover, total=self.total()),
            phases=[
                PhaseExport(name=p.name, classical=p.classical, walk=p.walk,
                            grover=p.grover, total=p.total, rounds=p.rounds)
                for p in self.phases()
            ],
        )

    def clear(self) -> int:
        cleared = self.total()
        self.__init__()
        return cleared
