"""
Quantum walk engine for qroute
Builds the electric-network walk operator U = (-Swap)·D, runs phase
detection against it and checks eigenspace overlaps of the start state.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property, lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg

from .config import Settings, get_settings
from .errors import BudgetRefusal, PreconditionError, WalkError
from .graphs import ElectricNetwork, effective_resistance, total_weight

log = logging.getLogger(__name__)

# Stand-in id for the virtual vertex r̄ (never a graph node)
VIRTUAL = -1
EIGEN_TOLERANCE = 1e-7


class Fidelity(str, Enum):
    EXACT = "exact"
    COST = "cost-model"


class Verdict(str, Enum):
    EMPTY = "empty"
    NONEMPTY = "nonempty"


@dataclass(frozen=True)
class WalkSpace:
    """Directed arcs of the network plus (r, r̄) and (r̄, r)"""
    arcs: Tuple[Tuple[int, int], ...]
    root: int

    @classmethod
    def from_network(cls, net: ElectricNetwork) -> "WalkSpace":
        arcs = [(net.root, VIRTUAL), (VIRTUAL, net.root)]
        for u, v, _ in net.edges:
            arcs.append((u, v))
            arcs.append((v, u))
        return cls(arcs=tuple(arcs), root=net.root)

    @property
    def dimension(self) -> int:
        return len(self.arcs)

    @cached_property
    def index(self) -> Dict[Tuple[int, int], int]:
        return {arc: i for i, arc in enumerate(self.arcs)}

    @cached_property
    def reverse(self) -> np.ndarray:
        index = self.index
        return np.array([index[(v, u)] for u, v in self.arcs], dtype=np.int64)

    @cached_property
    def owner(self) -> np.ndarray:
        return np.array([u for u, _ in self.arcs], dtype=np.int64)

    def basis(self, arc: Tuple[int, int]) -> "WalkState":
        amplitudes = np.zeros(self.dimension, dtype=np.complex128)
        amplitudes[self.index[arc]] = 1.0
        return WalkState(self, amplitudes)


@dataclass(frozen=True)
class WalkState:
    space: WalkSpace
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass(frozen=True)
class WalkOperatorHandle:
    """
    Applicable form of U(R, M).

    Each non-marked vertex u owns a unit vector ψ̂_u over its outgoing arcs
    (the root's includes the arc toward r̄); D reflects about it. Marked
    vertices and the (r̄, r) arc are left alone.
    """
    space: WalkSpace
    network: ElectricNetwork
    R: float
    C1: float
    psi_hat: np.ndarray
    reflect_arcs: np.ndarray
    reflect_block: np.ndarray
    block_count: int

    @property
    def marked(self):
        return self.network.marked

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = x.copy()
        arcs = self.reflect_arcs
        psi = self.psi_hat[arcs]
        prod = psi * x[arcs]
        overlap = (
            np.bincount(self.reflect_block, weights=prod.real, minlength=self.block_count)
            + 1j * np.bincount(self.reflect_block, weights=prod.imag, minlength=self.block_count)
        )
        y[arcs] -= 2.0 * overlap[self.reflect_block] * psi
        return -y[self.space.reverse]


def build_walk_operator(net: ElectricNetwork, R: float, C1: float) -> WalkOperatorHandle:
    """
    Build the walk operator of an electric network

    Args:
        net: Network whose edges carry positive weights
        R: Resistance parameter, at least 1
        C1: Root weight constant, at least 1

    Returns:
        WalkOperatorHandle: applies U = (-Swap)·D in O(m) per step
    """
    if R < 1 or C1 < 1:
        raise WalkError(f"walk parameters need R >= 1 and C1 >= 1, got R={R}, C1={C1}")
    for u, v, w in net.edges:
        if not w > 0:
            raise WalkError(f"edge ({u}, {v}) has non-positive weight {w}")

    space = WalkSpace.from_network(net)
    psi = np.zeros(space.dimension)
    psi[0] = 1.0 / math.sqrt(C1 * R)
    for i, (u, v, w) in enumerate(net.edges):
        psi[2 + 2 * i] = psi[3 + 2 * i] = math.sqrt(w)

    owner = space.owner
    reflect = np.array(
        [i for i, u in enumerate(owner) if u != VIRTUAL and u not in net.marked], dtype=np.int64
    )
    blocks, reflect_block = np.unique(owner[reflect], return_inverse=True)
    norms = np.sqrt(np.bincount(reflect_block, weights=psi[reflect] ** 2, minlength=len(blocks)))
    psi_hat = np.zeros_like(psi)
    psi_hat[reflect] = psi[reflect] / norms[reflect_block]
    return WalkOperatorHandle(
        space=space, network=net, R=float(R), C1=float(C1), psi_hat=psi_hat,
        reflect_arcs=reflect, reflect_block=reflect_block.astype(np.int64), block_count=len(blocks),
    )


def _check_state(handle: WalkOperatorHandle, state: WalkState) -> None:
    if state.amplitudes.shape != (handle.space.dimension,):
        raise WalkError(
            f"state of dimension {state.amplitudes.shape} does not fit walk space "
            f"of dimension {handle.space.dimension}"
        )


def apply_step(handle: WalkOperatorHandle, state: WalkState) -> WalkState:
    _check_state(handle, state)
    return WalkState(handle.space, handle.apply(state.amplitudes))


def sigma_state(handle: WalkOperatorHandle) -> WalkState:
    """(|r, r̄⟩ - |r̄, r⟩)/√2"""
    amplitudes = np.zeros(handle.space.dimension, dtype=np.complex128)
    amplitudes[0] = 1 / math.sqrt(2)
    amplitudes[1] = -1 / math.sqrt(2)
    return WalkState(handle.space, amplitudes)


def qpd_closed_form(alpha: float, T: int) -> float:
    """Probability that phase detection outputs 1 on an e^{iα}-eigenvector"""
    if T < 1:
        raise WalkError(f"T must be a positive integer, got {T}")
    if alpha == 0:
        return 0.0
    half = math.sin(alpha / 2)
    if abs(half) < 1e-8:
        t = np.arange(1, T + 1)
        return float(np.mean(np.sin(t * alpha / 2) ** 2))
    return 0.5 - math.sin(T * alpha / 2) * math.cos((T + 1) * alpha / 2) / (2 * T * half)


def qpd_outcome_distribution(handle: WalkOperatorHandle, state: WalkState, T: int) -> float:
    """
    Exact probability of output 1, averaged over t uniform in 1..T

    One operator application per increment of t.
    """
    _check_state(handle, state)
    if T < 1:
        raise WalkError(f"T must be a positive integer, got {T}")
    x = state.amplitudes
    y = x
    total = 0.0
    for _ in range(T):
        y = handle.apply(y)
        diff = x - y
        total += float(np.vdot(diff, diff).real) / 4.0
    return total / T


def qpd_sample(handle: WalkOperatorHandle, state: WalkState, T: int, rng: np.random.Generator) -> int:
    _check_state(handle, state)
    if T < 1:
        raise WalkError(f"T must be a positive integer, got {T}")
    t = int(rng.integers(1, T + 1))
    x = state.amplitudes
    y = x
    for _ in range(t):
        y = handle.apply(y)
    diff = x - y
    return int(rng.random() < float(np.vdot(diff, diff).real) / 4.0)


# ==================== DENSE AUDITS ====================

def dense_operator(handle: WalkOperatorHandle, settings: Optional[Settings] = None) -> np.ndarray:
    """Assemble U as a dense real matrix (audits and spectral shortcuts only)"""
    settings = settings or get_settings()
    dim = handle.space.dimension
    if dim > settings.dense_dimension_limit:
        raise BudgetRefusal(
            f"walk space dimension {dim} exceeds the dense limit {settings.dense_dimension_limit}; "
            "check spectral properties on smaller networks",
            budget=settings.dense_dimension_limit, requested=dim,
        )
    D = np.eye(dim)
    for block in range(handle.block_count):
        arcs = handle.reflect_arcs[handle.reflect_block == block]
        psi = handle.psi_hat[arcs]
        D[np.ix_(arcs, arcs)] -= 2.0 * np.outer(psi, psi)
    return -D[handle.space.reverse, :]


def eigenphases(handle: WalkOperatorHandle, settings: Optional[Settings] = None):
    """Eigenvalues and orthonormal eigenvectors of U (columns), via complex Schur form"""
    triangular, vectors = scipy.linalg.schur(dense_operator(handle, settings), output="complex")
    return np.diag(triangular), vectors


def _projection_norm(handle: WalkOperatorHandle, select, settings: Optional[Settings]) -> float:
    dense = dense_operator(handle, settings)
    _, vectors, count = scipy.linalg.schur(dense, output="complex", sort=select)
    sigma = sigma_state(handle).amplitudes
    return float(np.linalg.norm(vectors[:, :count].conj().T @ sigma))


def overlap_one_eigenspace(handle: WalkOperatorHandle, settings: Optional[Settings] = None) -> float:
    """Norm of the projection of |σ⟩ onto the 1-eigenspace of U"""
    return _projection_norm(handle, lambda z: abs(z - 1) <= EIGEN_TOLERANCE, settings)


def overlap_low_phase(handle: WalkOperatorHandle, theta: float, settings: Optional[Settings] = None) -> float:
    """Norm of the projection of |σ⟩ onto eigenvectors with |phase| <= theta"""
    return _projection_norm(handle, lambda z: abs(np.angle(z)) <= theta + EIGEN_TOLERANCE, settings)


def qpd_probability_spectral(handle: WalkOperatorHandle, T: int, settings: Optional[Settings] = None) -> float:
    """Same value as qpd_outcome_distribution on |σ⟩, from the eigendecomposition"""
    values, vectors = eigenphases(handle, settings)
    weights = np.abs(vectors.conj().T @ sigma_state(handle).amplitudes) ** 2
    return float(sum(w * qpd_closed_form(float(np.angle(z)), T) for w, z in zip(weights, values)))


# ==================== DETECTION ====================

def walk_length(R: float, W: float, settings: Optional[Settings] = None) -> int:
    """T = ⌈80·√(1/2 + C1·R·W)⌉"""
    settings = settings or get_settings()
    return math.ceil(settings.walk_t_scale * math.sqrt(0.5 + settings.walk_c1 * R * W))


def repetitions(delta: float, settings: Optional[Settings] = None) -> int:
    """k = ⌈48·ln(1/δ)⌉ phase-detection trials"""
    settings = settings or get_settings()
    if not 0 < delta < 1:
        raise WalkError(f"delta must lie in (0, 1), got {delta}")
    return max(1, math.ceil(settings.walk_repetition_constant * math.log(1 / delta)))


@dataclass(frozen=True)
class DetectionResult:
    verdict: Verdict
    repetitions: int
    walk_length: int
    ones: Optional[int] = None
    probability: Optional[float] = None

    @property
    def steps(self) -> int:
        return self.repetitions * self.walk_length


@lru_cache(maxsize=4096)
def _one_probability(net: ElectricNetwork, R: float, C1: float, T: int,
                     step_budget: int, dense_limit: int) -> float:
    handle = build_walk_operator(net, R, C1)
    dim = handle.space.dimension
    stepping = T * dim
    # a dense Schur form costs about dim^3 flops against T sparse steps
    if dim <= dense_limit and (dim ** 3 < 64 * stepping or stepping > step_budget):
        return qpd_probability_spectral(handle, T, Settings(dense_dimension_limit=dense_limit))
    if stepping <= step_budget:
        return qpd_outcome_distribution(handle, sigma_state(handle), T)
    if dim <= dense_limit:
        return qpd_probability_spectral(handle, T, Settings(dense_dimension_limit=dense_limit))
    raise BudgetRefusal(
        f"exact detection needs {T * dim} step-units on a {dim}-dimensional walk space "
        f"(budget {step_budget}, dense limit {dense_limit}); use cost-model fidelity",
        budget=step_budget, requested=T * dim,
    )


def detect_marked(net: ElectricNetwork, R: float, W: float, delta: float,
                  fidelity: Fidelity, rng: np.random.Generator,
                  settings: Optional[Settings] = None) -> DetectionResult:
    """
    Decide whether the root's component contains a marked vertex

    Runs k independent phase-detection trials of length T on |σ⟩ and reports
    "empty" when more than k/5 of them output 1. In cost-model fidelity the
    verdict comes from a reachability check and only the cost is meaningful.
    """
    settings = settings or get_settings()
    k = repetitions(delta, settings)
    T = walk_length(R, W, settings)
    if Fidelity(fidelity) is Fidelity.COST:
        verdict = Verdict.NONEMPTY if net.has_reachable_marked() else Verdict.EMPTY
        return DetectionResult(verdict=verdict, repetitions=k, walk_length=T)

    net = net.materialize()
    reachable = net.reachable_marked()

    weight = total_weight(net)
    if weight > W * (1 + 1e-12):
        errmsg = f"network weight {weight:.6g} exceeds W={W:.6g} (token {net.token!r})"
        log.error(errmsg)
        raise PreconditionError(errmsg)
    if reachable and net.root not in net.marked:
        resistance = effective_resistance(net, settings)
        if resistance > R * (1 + 1e-9):
            errmsg = f"effective resistance {resistance:.6g} exceeds R={R:.6g} (token {net.token!r})"
            log.error(errmsg)
            raise PreconditionError(errmsg)

    p = _one_probability(net, float(R), settings.walk_c1, T,
                         settings.exact_step_budget, settings.dense_dimension_limit)
    ones = int(rng.binomial(k, min(max(p, 0.0), 1.0)))
    verdict = Verdict.EMPTY if ones > settings.walk_threshold_fraction * k else Verdict.NONEMPTY
    log.debug("detection token=%r k=%d T=%d p=%.4f ones=%d -> %s", net.token, k, T, p, ones, verdict.value)
    return DetectionResult(verdict=verdict, repetitions=k, walk_length=T, ones=ones, probability=p)
