"""All eight gated recurrent cell kinds behind one step interface.

The family covers recurrent additive networks in their general and
simplified forms, the LSTM baseline, the two ablation intermediates
that connect LSTM to the general RAN (output gate removed, then content
layer linearized), and the GRU in its standard form, a cell/output
rewrite of it, and the RAN obtained by decoupling its gates.

Every kind updates a cell state as

    c_t = input_gate * content + forget_gate * c_prev

(with ``forget_gate = 1 - input_gate`` for the coupled GRU kinds), so a
single :class:`StepTrace` layout serves the decomposition tracer for
all of them.  Weight matrices are stored input-major (``x @ W``), i.e.
transposed relative to a column-vector convention; the batch dimension
leads everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, ShapeError
from .tensor import (
    DEFAULT_DTYPE,
    Tape,
    Tensor,
    add,
    dropout,
    hadamard,
    matmul,
    sigmoid,
    sub,
    tanh,
)
from .tensor import identity as identity_op


class CellKind(str, Enum):
    RAN_GENERAL = "ran-general"
    RAN_SIMPLIFIED = "ran-simplified"
    LSTM = "lstm"
    LSTM_NO_OUTPUT_GATE = "lstm-no-output-gate"
    LSTM_LINEAR_CONTENT = "lstm-linear-content"
    GRU = "gru"
    GRU_ALTERNATE = "gru-alternate"
    GRU_RAN = "gru-ran"


# kinds whose output is h = g(c), optionally projected
_G_OUTPUT_KINDS = frozenset(
    {CellKind.RAN_GENERAL, CellKind.LSTM_NO_OUTPUT_GATE, CellKind.LSTM_LINEAR_CONTENT}
)
# kinds that may project their output vector down to a smaller width
_PROJECTABLE = _G_OUTPUT_KINDS | {CellKind.LSTM}
# kinds whose second gate is defined as one minus the input gate
_COUPLED = frozenset({CellKind.GRU, CellKind.GRU_ALTERNATE})
# bias that starts at forget_bias_init instead of zero
_FORGET_BIAS = {
    CellKind.RAN_GENERAL: "b_f",
    CellKind.RAN_SIMPLIFIED: "b_f",
    CellKind.LSTM: "b_f",
    CellKind.LSTM_NO_OUTPUT_GATE: "b_f",
    CellKind.LSTM_LINEAR_CONTENT: "b_f",
    CellKind.GRU_RAN: "b_o",
}


@dataclass(frozen=True)
class CellConfig:
    """Architecture descriptor for one recurrent layer."""

    kind: CellKind
    input_dim: int
    hidden_dim: int
    output_activation: str = "tanh"
    projection_dim: Optional[int] = None

    def __post_init__(self):
        if self.input_dim <= 0 or self.hidden_dim <= 0:
            raise ConfigError("cell dims must be positive")
        if self.output_activation not in ("tanh", "identity"):
            raise ConfigError(f"output_activation must be tanh or identity, got {self.output_activation!r}")
        if self.kind == CellKind.RAN_SIMPLIFIED and self.input_dim != self.hidden_dim:
            raise ConfigError(
                "the simplified RAN mixes raw inputs into the state, so "
                f"input_dim ({self.input_dim}) must equal hidden_dim ({self.hidden_dim})"
            )
        if self.projection_dim is not None:
            if self.kind not in _PROJECTABLE:
                raise ConfigError(f"{self.kind.value} has no projectable output vector")
            if self.projection_dim <= 0:
                raise ConfigError("projection_dim must be positive")

    @property
    def output_dim(self) -> int:
        """Width of the vector this layer feeds forward."""
        if self.projection_dim is not None:
            return self.projection_dim
        return self.hidden_dim

    @property
    def recurrent_dim(self) -> int:
        """Width of the fed-back output entering the gate matmuls."""
        return self.output_dim


def param_spec(config: CellConfig) -> list[tuple[str, tuple[int, int]]]:
    """Named shapes for a kind's trainable tensors, in creation order."""
    d, i = config.hidden_dim, config.input_dim
    r = config.recurrent_dim
    k = config.kind
    if k == CellKind.RAN_GENERAL or k == CellKind.LSTM_LINEAR_CONTENT:
        spec = [
            ("W_cx", (i, d)),
            ("W_ih", (r, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_fh", (r, d)), ("W_fx", (i, d)), ("b_f", (1, d)),
        ]
    elif k == CellKind.RAN_SIMPLIFIED:
        spec = [
            ("W_ic", (d, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_fc", (d, d)), ("W_fx", (i, d)), ("b_f", (1, d)),
        ]
    elif k == CellKind.LSTM:
        spec = [
            ("W_ch", (r, d)), ("W_cx", (i, d)), ("b_c", (1, d)),
            ("W_ih", (r, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_fh", (r, d)), ("W_fx", (i, d)), ("b_f", (1, d)),
            ("W_oh", (r, d)), ("W_ox", (i, d)), ("b_o", (1, d)),
        ]
    elif k == CellKind.LSTM_NO_OUTPUT_GATE:
        spec = [
            ("W_ch", (r, d)), ("W_cx", (i, d)), ("b_c", (1, d)),
            ("W_ih", (r, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_fh", (r, d)), ("W_fx", (i, d)), ("b_f", (1, d)),
        ]
    elif k == CellKind.GRU:
        spec = [
            ("W_zh", (d, d)), ("W_zx", (i, d)), ("b_z", (1, d)),
            ("W_rh", (d, d)), ("W_rx", (i, d)), ("b_r", (1, d)),
            ("W_hh", (d, d)), ("W_hx", (i, d)), ("b_h", (1, d)),
        ]
    elif k == CellKind.GRU_ALTERNATE:
        spec = [
            ("W_ch", (d, d)), ("W_cx", (i, d)), ("b_c", (1, d)),
            ("W_ic", (d, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_oc", (d, d)), ("W_ox", (i, d)), ("b_o", (1, d)),
        ]
    elif k == CellKind.GRU_RAN:
        spec = [
            ("W_cx", (i, d)),
            ("W_ic", (d, d)), ("W_ix", (i, d)), ("b_i", (1, d)),
            ("W_oc", (d, d)), ("W_ox", (i, d)), ("b_o", (1, d)),
        ]
    else:  # pragma: no cover
        raise ConfigError(f"unknown cell kind {k!r}")
    if config.projection_dim is not None:
        spec.append(("W_p", (d, config.projection_dim)))
    return spec


class CellParameters:
    """The trainable tensors of one cell, keyed by gate symbol.

    The name set is exactly the symbols of the kind's defining
    equations (plus ``W_p`` when an output projection is configured);
    construction rejects extras or omissions.
    """

    def __init__(self, config: CellConfig, tensors: dict[str, Tensor]):
        expected = param_spec(config)
        names = [n for n, _ in expected]
        if set(tensors) != set(names):
            missing = set(names) - set(tensors)
            extra = set(tensors) - set(names)
            raise ConfigError(
                f"parameter names for {config.kind.value} must be {sorted(names)}; "
                f"missing={sorted(missing)} extra={sorted(extra)}"
            )
        for name, shape in expected:
            if tensors[name].shape != shape:
                raise ShapeError(f"{name} must have shape {shape}, got {tensors[name].shape}")
        self.config = config
        self.tensors = {name: tensors[name] for name, _ in expected}

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def watch(self, tape: Tape) -> None:
        tape.watch(*self.tensors.values())

    def size(self, include_biases: bool = True) -> int:
        """Brute-force component count over the actual tensors."""
        return sum(
            t.data.size
            for name, t in self.tensors.items()
            if include_biases or not name.startswith("b_")
        )


def init_parameters(
    config: CellConfig,
    rng,
    scale: float = 0.05,
    forget_bias_init: float = 1.0,
    dtype=DEFAULT_DTYPE,
) -> CellParameters:
    """Uniform(-scale, +scale) weights; zero biases except the forget
    bias, which starts at ``forget_bias_init`` (the usual trick to keep
    early memories alive)."""
    if scale <= 0:
        raise ConfigError(f"init scale must be positive, got {scale}")
    forget_name = _FORGET_BIAS.get(config.kind)
    tensors = {}
    for name, shape in param_spec(config):
        if name.startswith("b_"):
            data = np.zeros(shape)
            if name == forget_name:
                data += forget_bias_init
        else:
            data = rng.uniform_signed(scale, shape)
        tensors[name] = Tensor(data, dtype=dtype, name=name)
    return CellParameters(config, tensors)


@dataclass
class CellState:
    """Carried state: cell vector ``c`` and, when distinct, output ``h``."""

    c: Tensor
    h: Optional[Tensor] = None

    @property
    def output(self) -> Tensor:
        return self.h if self.h is not None else self.c

    def detach(self) -> "CellState":
        return CellState(self.c.detach(), None if self.h is None else self.h.detach())


@dataclass
class StepTrace:
    """Gate and content values of one timestep, as plain arrays."""

    input_gate: np.ndarray
    forget_gate: np.ndarray
    content: np.ndarray
    gates_coupled: bool = False


def zero_state(config: CellConfig, batch: int, dtype=DEFAULT_DTYPE) -> CellState:
    c = Tensor(np.zeros((batch, config.hidden_dim)), dtype=dtype)
    if _has_distinct_h(config.kind):
        return CellState(c, Tensor(np.zeros((batch, config.recurrent_dim)), dtype=dtype))
    return CellState(c)


def _has_distinct_h(kind: CellKind) -> bool:
    return kind in _PROJECTABLE or kind == CellKind.GRU_ALTERNATE


def _gate_preact(prev: Tensor, w_prev: Tensor, x: Tensor, w_x: Tensor, b: Tensor) -> Tensor:
    # fixed association: (prev @ W + x @ W) + b, shared by all kinds so
    # algebraically identical kinds produce bit-identical floats
    return add(add(matmul(prev, w_prev), matmul(x, w_x)), b)


def _mix(i: Tensor, content: Tensor, f: Tensor, c_prev: Tensor) -> Tensor:
    return add(hadamard(i, content), hadamard(f, c_prev))


def _activation(name: str):
    return tanh if name == "tanh" else identity_op


def _project(h: Tensor, p: CellParameters) -> Tensor:
    return matmul(h, p["W_p"]) if "W_p" in p.tensors else h


def _one_like(t: Tensor) -> Tensor:
    return Tensor(np.ones((1, t.shape[1])), dtype=t.data.dtype)


def _step_ran_general(config, p, state, x):
    h_prev = state.output
    content = matmul(x, p["W_cx"])
    i = sigmoid(_gate_preact(h_prev, p["W_ih"], x, p["W_ix"], p["b_i"]))
    f = sigmoid(_gate_preact(h_prev, p["W_fh"], x, p["W_fx"], p["b_f"]))
    c = _mix(i, content, f, state.c)
    h = _project(_activation(config.output_activation)(c), p)
    trace = StepTrace(i.data, f.data, content.data)
    return CellState(c, h), trace


def _step_ran_simplified(config, p, state, x):
    c_prev = state.c
    i = sigmoid(_gate_preact(c_prev, p["W_ic"], x, p["W_ix"], p["b_i"]))
    f = sigmoid(_gate_preact(c_prev, p["W_fc"], x, p["W_fx"], p["b_f"]))
    c = _mix(i, x, f, c_prev)
    trace = StepTrace(i.data, f.data, x.data)
    return CellState(c), trace


def _step_lstm(config, p, state, x):
    h_prev = state.h
    content = tanh(_gate_preact(h_prev, p["W_ch"], x, p["W_cx"], p["b_c"]))
    i = sigmoid(_gate_preact(h_prev, p["W_ih"], x, p["W_ix"], p["b_i"]))
    f = sigmoid(_gate_preact(h_prev, p["W_fh"], x, p["W_fx"], p["b_f"]))
    o = sigmoid(_gate_preact(h_prev, p["W_oh"], x, p["W_ox"], p["b_o"]))
    c = _mix(i, content, f, state.c)
    h = _project(hadamard(o, tanh(c)), p)
    trace = StepTrace(i.data, f.data, content.data)
    return CellState(c, h), trace


def _step_lstm_no_output_gate(config, p, state, x):
    h_prev = state.h
    content = tanh(_gate_preact(h_prev, p["W_ch"], x, p["W_cx"], p["b_c"]))
    i = sigmoid(_gate_preact(h_prev, p["W_ih"], x, p["W_ix"], p["b_i"]))
    f = sigmoid(_gate_preact(h_prev, p["W_fh"], x, p["W_fx"], p["b_f"]))
    c = _mix(i, content, f, state.c)
    h = _project(_activation(config.output_activation)(c), p)
    trace = StepTrace(i.data, f.data, content.data)
    return CellState(c, h), trace


def _step_lstm_linear_content(config, p, state, x):
    h_prev = state.h
    content = matmul(x, p["W_cx"])
    i = sigmoid(_gate_preact(h_prev, p["W_ih"], x, p["W_ix"], p["b_i"]))
    f = sigmoid(_gate_preact(h_prev, p["W_fh"], x, p["W_fx"], p["b_f"]))
    c = _mix(i, content, f, state.c)
    h = _project(_activation(config.output_activation)(c), p)
    trace = StepTrace(i.data, f.data, content.data)
    return CellState(c, h), trace


def _step_gru(config, p, state, x):
    h_prev = state.c  # single carried vector
    z = sigmoid(_gate_preact(h_prev, p["W_zh"], x, p["W_zx"], p["b_z"]))
    r = sigmoid(_gate_preact(h_prev, p["W_rh"], x, p["W_rx"], p["b_r"]))
    content = tanh(_gate_preact(hadamard(r, h_prev), p["W_hh"], x, p["W_hx"], p["b_h"]))
    not_z = sub(_one_like(z), z)
    h = _mix(z, content, not_z, h_prev)
    trace = StepTrace(z.data, not_z.data, content.data, gates_coupled=True)
    return CellState(h), trace


def _step_gru_alternate(config, p, state, x):
    # gates condition on the cell vector, content on the gated output
    c_prev, h_prev = state.c, state.h
    content = tanh(_gate_preact(h_prev, p["W_ch"], x, p["W_cx"], p["b_c"]))
    i = sigmoid(_gate_preact(c_prev, p["W_ic"], x, p["W_ix"], p["b_i"]))
    o = sigmoid(_gate_preact(c_prev, p["W_oc"], x, p["W_ox"], p["b_o"]))
    not_i = sub(_one_like(i), i)
    c = _mix(i, content, not_i, c_prev)
    h = hadamard(o, c)
    trace = StepTrace(i.data, not_i.data, content.data, gates_coupled=True)
    return CellState(c, h), trace


def _step_gru_ran(config, p, state, x):
    # the second gate is applied to the previous state, decoupling it
    # from the input gate, which makes this a RAN with identity output
    c_prev = state.c
    content = matmul(x, p["W_cx"])
    i = sigmoid(_gate_preact(c_prev, p["W_ic"], x, p["W_ix"], p["b_i"]))
    o = sigmoid(_gate_preact(c_prev, p["W_oc"], x, p["W_ox"], p["b_o"]))
    c = _mix(i, content, o, c_prev)
    trace = StepTrace(i.data, o.data, content.data)
    return CellState(c), trace


_STEP = {
    CellKind.RAN_GENERAL: _step_ran_general,
    CellKind.RAN_SIMPLIFIED: _step_ran_simplified,
    CellKind.LSTM: _step_lstm,
    CellKind.LSTM_NO_OUTPUT_GATE: _step_lstm_no_output_gate,
    CellKind.LSTM_LINEAR_CONTENT: _step_lstm_linear_content,
    CellKind.GRU: _step_gru,
    CellKind.GRU_ALTERNATE: _step_gru_alternate,
    CellKind.GRU_RAN: _step_gru_ran,
}


def step(config: CellConfig, params: CellParameters, state: CellState, x_t: Tensor):
    """Advance one timestep; returns the new state and its gate trace."""
    if x_t.shape[1] != config.input_dim:
        raise ShapeError(f"input has {x_t.shape[1]} columns, cell expects {config.input_dim}")
    if state.c.shape[1] != config.hidden_dim or state.c.shape[0] != x_t.shape[0]:
        raise ShapeError(f"state shape {state.c.shape} does not match batch {x_t.shape[0]} x hidden {config.hidden_dim}")
    return _STEP[config.kind](config, params, state, x_t)


def unroll(
    config: CellConfig,
    params: CellParameters,
    x_seq: list[Tensor],
    initial_state: Optional[CellState] = None,
    dropout_rate: float = 0.0,
    train: bool = False,
    rng=None,
):
    """Fold :func:`step` over a sequence.

    Dropout is applied to the inputs (the non-recurrent edge into the
    cell) in training mode, with a fresh mask per timestep.  Returns
    the per-step outputs, the per-step traces, and the final state.
    """
    if not x_seq:
        raise ContractError("unroll needs a nonempty sequence")
    state = initial_state
    if state is None:
        state = zero_state(config, x_seq[0].shape[0], x_seq[0].data.dtype)
    outputs, traces = [], []
    for x_t in x_seq:
        if dropout_rate:
            x_t = dropout(x_t, dropout_rate, rng, train)
        state, trace = step(config, params, state, x_t)
        outputs.append(state.output)
        traces.append(trace)
    return outputs, traces, state


def count_parameters(config: CellConfig, include_biases: bool = True) -> int:
    """Closed-form parameter count (cross-checked in tests against a
    brute-force enumeration of the actual tensors)."""
    d, i = config.hidden_dim, config.input_dim
    r = config.recurrent_dim
    k = config.kind
    weights = {
        CellKind.RAN_GENERAL: 2 * r * d + 3 * i * d,
        CellKind.LSTM_LINEAR_CONTENT: 2 * r * d + 3 * i * d,
        CellKind.RAN_SIMPLIFIED: 2 * d * d + 2 * i * d,
        CellKind.LSTM: 4 * r * d + 4 * i * d,
        CellKind.LSTM_NO_OUTPUT_GATE: 3 * r * d + 3 * i * d,
        CellKind.GRU: 3 * d * d + 3 * i * d,
        CellKind.GRU_ALTERNATE: 3 * d * d + 3 * i * d,
        CellKind.GRU_RAN: 2 * d * d + 3 * i * d,
    }[k]
    biases = {
        CellKind.RAN_GENERAL: 2 * d,
        CellKind.LSTM_LINEAR_CONTENT: 2 * d,
        CellKind.RAN_SIMPLIFIED: 2 * d,
        CellKind.LSTM: 4 * d,
        CellKind.LSTM_NO_OUTPUT_GATE: 3 * d,
        CellKind.GRU: 3 * d,
        CellKind.GRU_ALTERNATE: 3 * d,
        CellKind.GRU_RAN: 2 * d,
    }[k]
    if config.projection_dim is not None:
        weights += d * config.projection_dim
    return weights + biases if include_biases else weights


def layer_configs(
    kind: CellKind,
    hidden_dims: list[int],
    input_dim: int,
    output_activation: str = "tanh",
    projection_dim: Optional[int] = None,
) -> list[CellConfig]:
    """Chain configs for a stack: each layer reads the previous output."""
    configs = []
    feed = input_dim
    for d in hidden_dims:
        cfg = CellConfig(kind, feed, d, output_activation, projection_dim)
        configs.append(cfg)
        feed = cfg.output_dim
    return configs


class StackedCells:
    """Layered cells; each layer's unroll drops its own inputs, which
    yields exactly one dropout site per non-recurrent edge."""

    def __init__(self, configs: list[CellConfig]):
        if not configs:
            raise ConfigError("stack needs at least one layer")
        for below, above in zip(configs, configs[1:]):
            if above.input_dim != below.output_dim:
                raise ConfigError(
                    f"layer input dim {above.input_dim} does not match "
                    f"previous output dim {below.output_dim}"
                )
        self.configs = configs
        self.params: Optional[list[CellParameters]] = None

    @property
    def output_dim(self) -> int:
        return self.configs[-1].output_dim

    def init_parameters(self, rng, scale=0.05, forget_bias_init=1.0, dtype=DEFAULT_DTYPE):
        self.params = [
            init_parameters(c, rng, scale, forget_bias_init, dtype) for c in self.configs
        ]
        return self

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for idx, p in enumerate(self.params):
            for name, t in p.tensors.items():
                out.append((f"layer{idx}.{name}", t))
        return out

    def watch(self, tape: Tape) -> None:
        for p in self.params:
            p.watch(tape)

    def zero_states(self, batch: int, dtype=DEFAULT_DTYPE) -> list[CellState]:
        return [zero_state(c, batch, dtype) for c in self.configs]

    def unroll(
        self,
        x_seq: list[Tensor],
        initial_states: Optional[list[CellState]] = None,
        dropout_rate: float = 0.0,
        train: bool = False,
        rng=None,
    ):
        """Returns (last-layer outputs, traces per layer, final states)."""
        if self.params is None:
            raise ContractError("stack parameters not initialized")
        states = initial_states
        if states is None:
            states = self.zero_states(x_seq[0].shape[0], x_seq[0].data.dtype)
        seq = x_seq
        all_traces, finals = [], []
        for config, params, state in zip(self.configs, self.params, states):
            seq, traces, final = unroll(config, params, seq, state, dropout_rate, train, rng)
            all_traces.append(traces)
            finals.append(final)
        return seq, all_traces, finals


def stack(configs: list[CellConfig]) -> StackedCells:
    return StackedCells(configs)
