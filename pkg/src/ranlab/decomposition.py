"""Weighted-sum view of additive recurrences, and what it explains.

Every cell in this package updates its state as
``c_t = i_t * content_t + f_t * c_prev``, so unrolling gives

    c_t = sum_j ( i_j * prod_{k=j+1..t} f_k ) * content_j  +  prod_k f_k * c_0

The per-pair coefficients w[t][j] are materialized here from step
traces, either as a full lower-triangular cube or as a stream of
per-step rows (the default for long traces; the cube costs O(T^2 d)
memory).  On top of the weights sit reconstruction (replaying the sum
against a chosen basis), a verification harness that compares the sum
to the recurrence itself, strongest-predecessor attribution, and the
normalization identity that holds when the gates are coupled.

Indexing convention: timesteps t and predecessors j are 1-based, like
positions in a sentence; the initial state is the explicit j=0 term.
Component indices in attribution results are 1-based as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from .cells import CellConfig, CellParameters, CellState, StepTrace, step, zero_state
from .errors import ConfigError, ContractError, ShapeError
from .tensor import Tensor


class Basis(str, Enum):
    """What the decomposition weights multiply."""

    RAW_INPUTS = "raw-inputs"            # x_j itself (simplified cells)
    PROJECTED_INPUTS = "projected-inputs"  # W_cx @ x_j (linear content)
    CONTENT_LAYERS = "content-layers"    # the recorded content vector


def _gate_stack(traces: list[StepTrace]):
    if not traces:
        raise ContractError("decomposition needs at least one step trace")
    batch, width = traces[0].input_gate.shape
    i_gates = np.stack([tr.input_gate.reshape(-1) for tr in traces])
    f_gates = np.stack([tr.forget_gate.reshape(-1) for tr in traces])
    return i_gates, f_gates, batch, width


class DecompositionWeights:
    """Full lower-triangular weight cube w[t][j] for 1 <= j <= t <= T."""

    def __init__(self, cube: np.ndarray, f_cumprod: np.ndarray, basis: Basis,
                 batch: int, width: int):
        self.basis = basis
        self.steps = cube.shape[0]
        self.batch = batch
        self.width = width
        self._cube = cube
        self._f_cumprod = f_cumprod

    def weight(self, t: int, j: int) -> np.ndarray:
        """w[t][j] as a (batch, width) array; both indices 1-based."""
        if not 1 <= j <= t <= self.steps:
            raise ContractError(f"need 1 <= j <= t <= {self.steps}, got t={t} j={j}")
        return self._cube[t - 1, j - 1]

    def initial_weight(self, t: int) -> np.ndarray:
        """Coefficient of c_0 at step t: the product of f_1..f_t."""
        if not 1 <= t <= self.steps:
            raise ContractError(f"step {t} outside 1..{self.steps}")
        return self._f_cumprod[t - 1]

    def row(self, t: int) -> "WeightRow":
        if not 1 <= t <= self.steps:
            raise ContractError(f"step {t} outside 1..{self.steps}")
        return WeightRow(t, self._f_cumprod[t - 1], self._cube[t - 1, :t])


@dataclass
class WeightRow:
    """All predecessor weights of one step: w[t][j] for j=1..t."""

    t: int
    initial: np.ndarray   # (batch, width) coefficient of c_0
    weights: np.ndarray   # (t, batch, width), index j-1


def compute_weights(traces: list[StepTrace], basis: Basis) -> DecompositionWeights:
    """Materialize the whole cube at once (O(T^2 d) memory)."""
    i_gates, f_gates, batch, width = _gate_stack(traces)
    steps = i_gates.shape[0]
    cube = kernels.weight_cube(i_gates, f_gates)
    cube = cube.reshape(steps, steps, batch, width)
    f_cumprod = np.cumprod(f_gates, axis=0).reshape(steps, batch, width)
    return DecompositionWeights(cube, f_cumprod, basis, batch, width)


def stream_weights(traces: list[StepTrace], basis: Basis):
    """Yield one :class:`WeightRow` per step, never holding the cube.

    Row t is built from row t-1 by one multiply with f_t plus the fresh
    diagonal entry w[t][t] = i_t.
    """
    i_gates, f_gates, batch, width = _gate_stack(traces)
    del basis  # the weights are basis-independent; kept for symmetry
    row = np.empty((0, batch, width))
    initial = np.ones((batch, width))
    for t in range(1, i_gates.shape[0] + 1):
        i_t = i_gates[t - 1].reshape(batch, width)
        f_t = f_gates[t - 1].reshape(batch, width)
        row = np.concatenate([row * f_t, i_t[None]], axis=0)
        initial = initial * f_t
        yield WeightRow(t, initial, row)


def _as_array(vec) -> np.ndarray:
    return vec.data if isinstance(vec, Tensor) else np.asarray(vec)


def reconstruct_state(
    weights: DecompositionWeights,
    basis_vectors: list,
    t: int,
    initial_state: np.ndarray = None,
) -> np.ndarray:
    """Sum w[t][j] * basis_j over j <= t (plus the c_0 term if given)."""
    if len(basis_vectors) != weights.steps:
        raise ContractError(
            f"{len(basis_vectors)} basis vectors for {weights.steps} steps of weights"
        )
    acc = np.zeros((weights.batch, weights.width))
    for j in range(1, t + 1):
        vec = _as_array(basis_vectors[j - 1])
        if vec.shape != acc.shape:
            raise ShapeError(f"basis vector {j} has shape {vec.shape}, weights are {acc.shape}")
        acc = acc + weights.weight(t, j) * vec
    if initial_state is not None:
        acc = acc + weights.initial_weight(t) * _as_array(initial_state)
    return acc


def basis_vectors_for(
    config: CellConfig,
    params: CellParameters,
    x_seq: list[Tensor],
    traces: list[StepTrace],
    basis: Basis,
) -> list[np.ndarray]:
    """The vectors a given basis pairs with the weights."""
    if basis == Basis.RAW_INPUTS:
        return [x.data for x in x_seq]
    if basis == Basis.PROJECTED_INPUTS:
        if "W_cx" not in params.tensors:
            raise ConfigError(
                f"{config.kind.value} has no input projection to use as a basis"
            )
        w = params["W_cx"].data
        return [x.data @ w for x in x_seq]
    return [tr.content for tr in traces]


@dataclass
class VerificationReport:
    basis: Basis
    tolerance: float
    max_abs_error: float
    passed: bool


def verify_decomposition(
    config: CellConfig,
    params: CellParameters,
    x_seq: list[Tensor],
    basis: Basis,
    tolerance: float = 1e-8,
    initial_state: CellState = None,
) -> VerificationReport:
    """Replay the weighted sum against the recurrence it claims to equal.

    Disagreement is reported, not raised: a failing report is the
    expected outcome for bases a kind cannot express (an LSTM state is
    not a weighted sum of raw inputs).
    """
    state = initial_state if initial_state is not None else zero_state(config, x_seq[0].shape[0])
    c0 = state.c.data.copy()
    trail, traces = [], []
    for x in x_seq:
        state, tr = step(config, params, state, x)
        trail.append(state.c.data)
        traces.append(tr)
    weights = compute_weights(traces, basis)
    vectors = basis_vectors_for(config, params, x_seq, traces, basis)
    c0_term = None if not c0.any() else c0
    worst = 0.0
    for t in range(1, len(trail) + 1):
        rebuilt = reconstruct_state(weights, vectors, t, c0_term)
        worst = max(worst, float(np.abs(rebuilt - trail[t - 1]).max()))
    return VerificationReport(basis, tolerance, worst, worst <= tolerance)


@dataclass
class AttributionResult:
    """Strongest predecessor of step t (indices 1-based)."""

    t: int
    predecessor: int
    component: int
    value: float


def _scan_strongest(rows: np.ndarray, t: int, batch: int) -> AttributionResult:
    # rows[j-1] holds w[t][j] for j = 1..t-1; later j wins ties, so a
    # simple ascending scan with >= implements the most-recent rule
    best_j, best_m, best_v = 0, 0, -np.inf
    for j in range(1, t):
        comps = rows[j - 1][batch]
        m = int(np.argmax(comps))
        v = float(comps[m])
        if v >= best_v:
            best_j, best_m, best_v = j, m + 1, v
    return AttributionResult(t, best_j, best_m, best_v)


def attribution(weights: DecompositionWeights, t: int, batch: int = 0) -> AttributionResult:
    """Which predecessor j < t carries the largest single weight into t."""
    if t < 2:
        raise ContractError(f"attribution needs t >= 2, got {t}")
    if t > weights.steps:
        raise ContractError(f"step {t} outside 1..{weights.steps}")
    return _scan_strongest(weights.row(t).weights, t, batch)


def row_attribution(row: WeightRow, batch: int = 0) -> AttributionResult:
    """Attribution straight from a streamed row (for long traces)."""
    if row.t < 2:
        raise ContractError(f"attribution needs t >= 2, got {row.t}")
    return _scan_strongest(row.weights, row.t, batch)


def normalization_check(traces: list[StepTrace], t: int) -> float:
    """Deviation of the coupled-gate weights from summing to one.

    With f = 1 - i the weights over {c_0, content_1..content_t} form a
    convex combination; returns the max component deviation of their
    sum from 1 at step t.
    """
    if not traces:
        raise ContractError("decomposition needs at least one step trace")
    if not all(tr.gates_coupled for tr in traces):
        raise ContractError("normalization holds only for coupled-gate kinds")
    weights = compute_weights(traces, Basis.CONTENT_LAYERS)
    if not 1 <= t <= weights.steps:
        raise ContractError(f"step {t} outside 1..{weights.steps}")
    total = weights.initial_weight(t).copy()
    for j in range(1, t + 1):
        total = total + weights.weight(t, j)
    return float(np.abs(total - 1.0).max())
