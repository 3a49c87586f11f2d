"""Runtime invariant suite.

Every property this package leans on is re-verified here from scratch,
at sizes small enough to run on any install: finite-difference gradient
agreement for every cell kind, the weighted-sum reconstruction of
additive states, exact output equality between the general additive
cell and the reduced LSTM it simplifies, the coupled-gate normalization
identity, the strongest-predecessor scan against an exhaustive search,
agreement between the kernel backends, and a checkpoint byte roundtrip.

Faults can be injected by name to prove the checks can actually fail; a
healthy build passes with no fault injected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import checkpoint as ckpt_format
from . import kernels
from .cells import CellConfig, CellKind, StepTrace, init_parameters, step, unroll, zero_state
from .decomposition import (
    Basis,
    attribution,
    basis_vectors_for,
    compute_weights,
    normalization_check,
    reconstruct_state,
)
from .errors import ConfigError
from .rng import Rng
from .tensor import Tape, Tensor, add, total


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        # no timing in the line itself: equal builds must print equal bytes
        mark = "ok  " if self.passed else "FAIL"
        return f"{mark} {self.name}: {self.detail}"


@dataclass
class Sizes:
    grad_t: int
    grad_d: int
    recon_runs: int
    recon_t: int
    recon_d: int
    norm_runs: int
    norm_t: int
    attr_runs: int
    attr_t: int


FULL = Sizes(grad_t=5, grad_d=6, recon_runs=40, recon_t=60, recon_d=32,
             norm_runs=40, norm_t=50, attr_runs=300, attr_t=24)
QUICK = Sizes(grad_t=3, grad_d=4, recon_runs=10, recon_t=25, recon_d=12,
              norm_runs=10, norm_t=20, attr_runs=60, attr_t=12)

# named faults deliberately corrupt one check's data so a test (or a
# suspicious user) can watch the harness catch the breakage
FAULTS = {
    "negate-forget-gate": "flip the sign of recorded forget gates before reconstruction",
    "misrank-attribution": "scan a negated copy of the weights, picking the weakest source",
}


def _random_cell(kind: CellKind, d: int, rng: Rng):
    config = CellConfig(kind, d, d, "tanh")
    return config, init_parameters(config, rng, 0.3, 1.0)


def _random_sequence(rng: Rng, steps: int, batch: int, dim: int):
    return [Tensor(rng.uniform_signed(1.0, (batch, dim))) for _ in range(steps)]


def _rel_err(analytic, numeric):
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def _fd_grads(build_loss, params, h=1e-5):
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            lp = build_loss()
            flat[k] = old - h
            lm = build_loss()
            flat[k] = old
            g[k] = (lp - lm) / (2 * h)
        grads.append(g.reshape(p.data.shape))
    return grads


def check_gradients(sizes: Sizes, fault: Optional[str]):
    """Tape gradients of a sum-of-outputs loss vs central differences."""
    worst, worst_kind = 0.0, "-"
    rng = Rng(101)
    for kind in CellKind:
        config, params = _random_cell(kind, sizes.grad_d, rng)
        x_seq = _random_sequence(rng, sizes.grad_t, 2, sizes.grad_d)
        tensors = list(params.tensors.values())

        def forward():
            outs, _, _ = unroll(config, params, x_seq)
            return float(sum(o.data.sum() for o in outs))

        numeric = _fd_grads(forward, tensors)
        tape = Tape()
        tape.watch(*tensors)
        outs, _, _ = unroll(config, params, x_seq)
        loss = total(outs[0])
        for o in outs[1:]:
            loss = add(loss, total(o))
        tape.backward(loss)
        for t, g in zip(tensors, numeric):
            err = _rel_err(t.grad, g)
            if err > worst:
                worst, worst_kind = err, kind.value
    return worst <= 1e-5, f"max relative error {worst:.2e} ({worst_kind})"


_RECON_BASES = {
    CellKind.RAN_SIMPLIFIED: Basis.RAW_INPUTS,
    CellKind.RAN_GENERAL: Basis.PROJECTED_INPUTS,
    CellKind.GRU_RAN: Basis.CONTENT_LAYERS,
}


def check_reconstruction(sizes: Sizes, fault: Optional[str]):
    """Replaying the weighted sum must match the recurrence itself."""
    rng = Rng(202)
    worst = 0.0
    for run in range(sizes.recon_runs):
        kind = list(_RECON_BASES)[run % len(_RECON_BASES)]
        config, params = _random_cell(kind, sizes.recon_d, rng)
        x_seq = _random_sequence(rng, sizes.recon_t, 1, sizes.recon_d)
        state = zero_state(config, 1)
        trail, traces = [], []
        for x in x_seq:
            state, tr = step(config, params, state, x)
            trail.append(state.c.data)
            traces.append(tr)
        if fault == "negate-forget-gate":
            traces = [
                StepTrace(tr.input_gate, -tr.forget_gate, tr.content, tr.gates_coupled)
                for tr in traces
            ]
        basis = _RECON_BASES[kind]
        weights = compute_weights(traces, basis)
        vectors = basis_vectors_for(config, params, x_seq, traces, basis)
        for t in (1, sizes.recon_t // 2, sizes.recon_t):
            rebuilt = reconstruct_state(weights, vectors, t)
            worst = max(worst, float(np.abs(rebuilt - trail[t - 1]).max()))
    return worst <= 1e-8, f"max reconstruction error {worst:.2e}"


def check_equivalence(sizes: Sizes, fault: Optional[str]):
    """The general additive cell and the LSTM with its output gate
    removed and content made linear share parameter names; on shared
    tensors their outputs must agree to the last bit."""
    rng = Rng(303)
    worst = 0.0
    for _ in range(20):
        config_a, params = _random_cell(CellKind.RAN_GENERAL, sizes.grad_d, rng)
        config_b = CellConfig(CellKind.LSTM_LINEAR_CONTENT, sizes.grad_d, sizes.grad_d, "tanh")
        x_seq = _random_sequence(rng, sizes.grad_t, 2, sizes.grad_d)
        outs_a, _, _ = unroll(config_a, params, x_seq)
        outs_b, _, _ = unroll(config_b, params, x_seq)
        for a, b in zip(outs_a, outs_b):
            worst = max(worst, float(np.abs(a.data - b.data).max()))
    return worst <= 1e-12, f"max output difference {worst:.2e}"


def check_normalization(sizes: Sizes, fault: Optional[str]):
    """Coupled gates make the decomposition weights sum to one."""
    rng = Rng(404)
    worst = 0.0
    for run in range(sizes.norm_runs):
        kind = (CellKind.GRU, CellKind.GRU_ALTERNATE)[run % 2]
        config, params = _random_cell(kind, sizes.recon_d, rng)
        x_seq = _random_sequence(rng, sizes.norm_t, 1, sizes.recon_d)
        _, traces, _ = unroll(config, params, x_seq)
        for t in (1, sizes.norm_t):
            worst = max(worst, normalization_check(traces, t))
    return worst <= 1e-8, f"max deviation from 1 {worst:.2e}"


def check_attribution(sizes: Sizes, fault: Optional[str]):
    """The streaming argmax scan vs an exhaustive double loop."""
    rng = Rng(505)
    mismatches = 0
    for _ in range(sizes.attr_runs):
        steps, width = sizes.attr_t, 6
        i_gates = rng.uniform((steps, width)) * 0.98 + 0.01
        f_gates = rng.uniform((steps, width)) * 0.98 + 0.01
        traces = [StepTrace(i[None], f[None], np.zeros((1, width)))
                  for i, f in zip(i_gates, f_gates)]
        weights = compute_weights(traces, Basis.RAW_INPUTS)
        scan_from = weights
        if fault == "misrank-attribution":
            negated = [StepTrace(-tr.input_gate, tr.forget_gate, tr.content) for tr in traces]
            scan_from = compute_weights(negated, Basis.RAW_INPUTS)
        t = steps
        got = attribution(scan_from, t)
        best_v, best_j, best_m = -np.inf, 0, 0
        for j in range(1, t):
            row = weights.weight(t, j)[0]
            for m in range(width):
                # later predecessors win ties; within one row the first
                # maximal component wins, matching argmax
                if row[m] > best_v or (row[m] == best_v and j > best_j):
                    best_v, best_j, best_m = row[m], j, m + 1
        if (got.predecessor, got.component, got.value) != (best_j, best_m, best_v):
            mismatches += 1
    return mismatches == 0, f"{mismatches} of {sizes.attr_runs} scans disagree"


def check_kernel_backends(sizes: Sizes, fault: Optional[str]):
    """Both kernel backends must compute the same numbers."""
    other = kernels.numba_backend
    if other is None or other is kernels.active:
        other = kernels.numpy_backend
    rng = Rng(606)
    i_gates = rng.uniform((sizes.norm_t, 16))
    f_gates = rng.uniform((sizes.norm_t, 16))
    worst = float(np.abs(
        kernels.active.weight_cube(i_gates, f_gates)
        - other.weight_cube(i_gates, f_gates)
    ).max())
    x = rng.uniform_signed(4.0, (32, 16))
    worst = max(worst, float(np.abs(
        kernels.active.sigmoid_fwd(x) - other.sigmoid_fwd(x)).max()))
    worst = max(worst, float(np.abs(
        kernels.active.tanh_fwd(x) - other.tanh_fwd(x)).max()))
    pair = f"{kernels.active.name}/{other.name}"
    return worst <= 1e-12, f"max difference {worst:.2e} ({pair})"


def check_checkpoint_roundtrip(sizes: Sizes, fault: Optional[str]):
    """Serialize, parse, and re-serialize must reproduce every byte."""
    rng = Rng(707)
    arrays = [
        ("alpha", rng.uniform((5, 3))),
        ("beta", rng.uniform_signed(2.0, (4, 4)).astype(np.float32)),
        ("gamma", rng.uniform((1, 7))),
    ]
    header = {"config": {"seed": 7}, "note": "roundtrip"}
    blob = ckpt_format.serialize(header, arrays)
    parsed_header, parsed = ckpt_format.deserialize(blob)
    again = ckpt_format.serialize(
        {k: v for k, v in parsed_header.items() if k != "tensors"},
        [(name, parsed[name]) for name, _ in arrays],
    )
    same_bytes = blob == again
    same_values = all(np.array_equal(arr, parsed[name]) for name, arr in arrays)
    return same_bytes and same_values, (
        "bytes and values stable" if same_bytes and same_values else "roundtrip drifted"
    )


CHECKS = [
    ("gradient-finite-difference", check_gradients),
    ("state-reconstruction", check_reconstruction),
    ("derivation-equivalence", check_equivalence),
    ("weighted-average-normalization", check_normalization),
    ("attribution-exhaustive-scan", check_attribution),
    ("kernel-backends-agree", check_kernel_backends),
    ("checkpoint-roundtrip", check_checkpoint_roundtrip),
]


def run_checks(quick: bool = False, fault: Optional[str] = None, stream=None):
    """Run every check; returns the results, printing one line each."""
    if fault is not None and fault not in FAULTS:
        raise ConfigError(f"unknown fault {fault!r}; have {sorted(FAULTS)}")
    sizes = QUICK if quick else FULL
    results = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        passed, detail = fn(sizes, fault)
        result = CheckResult(name, passed, detail, time.perf_counter() - t0)
        results.append(result)
        if stream is not None:
            stream.write(result.line() + "\n")
            stream.flush()
    return results
