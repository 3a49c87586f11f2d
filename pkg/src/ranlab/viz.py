"""Attribution artifacts over a token sequence.

Running a model over text yields, per position t, the earlier position
whose decomposition weight carries the largest single component into
step t.  This module renders that relation two ways: a directed graph
in dot syntax (one node per token, one edge per position t >= 2) and a
flat tab-separated table.  Both are emitted from the first recurrent
layer, the one whose weighted-sum components correspond one-to-one
with the input tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import Basis, row_attribution, stream_weights
from .errors import ConfigError, IngestionError
from .lm import LanguageModel
from .tensor import embedding


@dataclass
class AttributionTrace:
    """One model pass over a single token stream."""

    tokens: list
    results: list  # AttributionResult per position t = 2..T


def run_attribution(model: LanguageModel, ids) -> AttributionTrace:
    """Feed ids through the model and scan every step's strongest source."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise IngestionError("attribution expects a flat id sequence")
    if ids.size < 2:
        raise IngestionError("attribution needs at least two tokens")
    tokens = [model.vocab.id_to_token[int(i)] for i in ids]
    states = model.stack.zero_states(1, model.config.dtype)
    x_seq = [embedding(model.embedding, ids[t : t + 1]) for t in range(ids.size)]
    _, traces, _ = model.stack.unroll(x_seq, states, 0.0, False, None)
    results = []
    for row in stream_weights(traces[0], Basis.CONTENT_LAYERS):
        if row.t >= 2:
            results.append(row_attribution(row))
    return AttributionTrace(tokens, results)


_CONTROL = {"\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _dot_escape(text: str) -> str:
    text = text.replace("\\", "\\\\").replace('"', '\\"')
    for raw, shown in _CONTROL.items():
        text = text.replace(raw, shown)
    return text


def _tsv_escape(text: str) -> str:
    # the framing characters themselves; anything else passes through
    text = text.replace("\\", "\\\\")
    for raw, shown in _CONTROL.items():
        text = text.replace(raw, shown)
    return text


def to_dot(trace: AttributionTrace) -> str:
    """Directed graph, nodes labeled "idx:token", edges labeled by weight."""
    lines = ["digraph attribution {"]
    for idx, token in enumerate(trace.tokens, start=1):
        lines.append(f'  n{idx} [label="{idx}:{_dot_escape(token)}"];')
    for r in trace.results:
        lines.append(f'  n{r.predecessor} -> n{r.t} [label="{r.value:.6g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


TSV_COLUMNS = ("t", "token", "v_t", "predecessor_token", "component_index", "weight")


def to_tsv(trace: AttributionTrace) -> str:
    """One row per position t >= 2; weights in full-precision decimal."""
    lines = ["\t".join(TSV_COLUMNS)]
    for r in trace.results:
        lines.append(
            "\t".join(
                [
                    str(r.t),
                    _tsv_escape(trace.tokens[r.t - 1]),
                    str(r.predecessor),
                    _tsv_escape(trace.tokens[r.predecessor - 1]),
                    str(r.component),
                    repr(r.value),
                ]
            )
        )
    return "\n".join(lines) + "\n"


FORMATS = {"dot": to_dot, "tsv": to_tsv}


def render(trace: AttributionTrace, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown trace format {fmt!r}; have {sorted(FORMATS)}")
    return FORMATS[fmt](trace)
