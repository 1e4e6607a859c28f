"""
Error types for qroute
Every failure the simulator reports is one of these; each also derives from
the builtin it refines so plain ``except ValueError`` keeps working.
"""

from typing import Optional, Sequence, Tuple


class QRouteError(Exception):
    """Base class for all qroute errors"""


class GraphError(QRouteError, ValueError):
    """Malformed edge list, generator parameters or graph encoding"""

    def __init__(self, message: str, edge: Optional[Tuple[int, ...]] = None):
        super().__init__(message)
        self.edge = edge


class NetworkError(QRouteError, ValueError):
    """Electric network unusable for the requested computation"""


class EmptyMarkedError(NetworkError):
    """The marked set is empty"""


class UnreachableMarkedError(NetworkError):
    """No marked vertex lies in the root's component"""


class FlowError(QRouteError, ValueError):
    """A flow violates antisymmetry, conservation or the unit source/sink"""

    def __init__(self, message: str, node: Optional[int] = None):
        super().__init__(message)
        self.node = node


class WalkError(QRouteError, ValueError):
    """Bad walk parameters or a state from another walk space"""


class PreconditionError(QRouteError, ValueError):
    """Detection called with W or R below what the network needs"""


class ProtocolError(QRouteError, RuntimeError):
    """A node program broke the routing model (bad port, oversized payload)"""


class DisjointnessError(ProtocolError):
    """A walk batch violates its scheduling mode's overlap rule"""

    def __init__(self, message: str, edge: Tuple[int, int], tokens: Sequence[object]):
        super().__init__(message)
        self.edge = edge
        self.tokens = tuple(tokens)


class ClusterError(QRouteError, ValueError):
    """Inconsistent cluster tree or metadata"""


class DisconnectedGraphError(QRouteError):
    """An algorithm needing a connected graph ended with several fragments"""


class BudgetRefusal(QRouteError):
    """Requested work exceeds a configured compute budget"""

    def __init__(self, message: str, budget: float, requested: float):
        super().__init__(message)
        self.budget = budget
        self.requested = requested


class LeakError(QRouteError):
    """Replay found a message the oracle cannot account for"""


class InvariantViolation(QRouteError):
    """An output audit failed"""


class UsageError(QRouteError, ValueError):
    """Bad command-line input: unknown constants, empty grids, missing options"""
