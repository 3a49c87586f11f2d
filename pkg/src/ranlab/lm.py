"""Language-model training: batching, the SGD loop, evaluation, resume.

The model is embedding lookup -> stacked recurrent cells -> full
softmax.  Training uses truncated backpropagation: the corpus is cut
into batch-parallel streams, hidden state carries across consecutive
blocks of an epoch but is detached, so gradients never cross a block
boundary.  Dropout covers every non-recurrent edge (embedding into the
first layer, between layers, and before the softmax).  Given (seed,
config, corpus) every logged metric is deterministic, which is what
makes interrupted-and-resumed runs comparable line by line.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, asdict
from typing import Optional, TextIO

import numpy as np

from . import checkpoint as ckpt_format
from .cells import CellKind, StackedCells, layer_configs
from .errors import ConfigError, DigestError, IngestionError, IntegrityError, NumericError, ShapeError
from .rng import Rng
from .tensor import (
    Tape,
    Tensor,
    add,
    dropout,
    embedding,
    matmul,
    sgd_step,
    smul,
    softmax_cross_entropy,
    untrack,
    zero_grads,
)
from .text import Vocabulary, build_vocab

LN2 = math.log(2.0)


# --------------------------------------------------------------- batching


class BatchStream:
    """Corpus ids cut into batch-parallel truncated-BPTT blocks.

    The id sequence is reshaped row-wise into ``batch_size`` parallel
    streams; each block pairs L inputs with the L ids one position
    later.  Consecutive blocks are contiguous per stream, so carrying
    hidden state across them is sound.  The remainder that fills no
    complete block is dropped.
    """

    def __init__(self, ids, batch_size: int, bptt_length: int):
        if batch_size < 1 or bptt_length < 1:
            raise ConfigError("batch_size and bptt_length must be at least 1")
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1:
            raise ConfigError("ids must be a flat sequence")
        if ids.size < batch_size * (bptt_length + 1):
            raise IngestionError(
                f"{ids.size} ids cannot fill one {batch_size}x{bptt_length} "
                "block plus shifted targets"
            )
        per_stream = ids.size // batch_size
        self.data = ids[: per_stream * batch_size].reshape(batch_size, per_stream)
        self.batch_size = batch_size
        self.bptt_length = bptt_length
        self.num_blocks = (per_stream - 1) // bptt_length

    def blocks(self):
        """Yield (inputs, targets, first_of_epoch) for one epoch."""
        L = self.bptt_length
        for k in range(self.num_blocks):
            lo = k * L
            yield self.data[:, lo : lo + L], self.data[:, lo + 1 : lo + 1 + L], k == 0


def batch_stream(ids, batch_size: int, bptt_length: int):
    return BatchStream(ids, batch_size, bptt_length).blocks()


# ----------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a run besides the corpus bytes."""

    kind: CellKind = CellKind.RAN_GENERAL
    hidden_dims: tuple = (650, 650)
    embedding_dim: int = 650
    vocab_mode: str = "word"
    vocab_size: Optional[int] = 10000
    output_activation: str = "tanh"
    projection_dim: Optional[int] = None
    lr_initial: float = 0.7
    lr_decay: float = 0.8
    decay_start_epoch: int = 6
    max_epochs: int = 10
    batch_size: int = 20
    bptt_length: int = 35
    dropout_rate: float = 0.5
    clip_norm: Optional[float] = 5.0
    seed: int = 0
    precision: str = "float64"
    init_scale: float = 0.05
    forget_bias_init: float = 1.0

    def __post_init__(self):
        if not self.hidden_dims or any(d <= 0 for d in self.hidden_dims):
            raise ConfigError("hidden_dims must be positive")
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")
        if self.lr_initial <= 0:
            raise ConfigError("lr_initial must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.max_epochs < 1 or self.batch_size < 1 or self.bptt_length < 1:
            raise ConfigError("epochs, batch_size and bptt_length must be at least 1")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.precision not in ("float64", "float32"):
            raise ConfigError("precision must be float64 or float32")
        if self.init_scale <= 0:
            raise ConfigError("init_scale must be positive")
        if self.vocab_mode not in ("word", "char", "text8"):
            raise ConfigError("vocab_mode must be word, char or text8")
        if self.vocab_mode != "word" and self.vocab_size is not None:
            raise ConfigError(
                f"vocab_size applies only to word mode; "
                f"set vocab_size = none for {self.vocab_mode} mode"
            )
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        object.__setattr__(self, "kind", CellKind(self.kind))

    @property
    def dtype(self):
        return np.float64 if self.precision == "float64" else np.float32

    def cell_configs(self):
        return layer_configs(
            self.kind,
            list(self.hidden_dims),
            self.embedding_dim,
            self.output_activation,
            self.projection_dim,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["kind"] = CellKind(d["kind"])
        d["hidden_dims"] = tuple(d["hidden_dims"])
        return cls(**d)


# model-shape and schedule defaults at the published corpus scales; the
# schedules themselves are this package's defaults, not reported numbers
PRESETS = {
    "ptb-medium": dict(
        hidden_dims=(650, 650), embedding_dim=650, vocab_mode="word",
        vocab_size=10000, dropout_rate=0.5, lr_initial=0.7, lr_decay=0.8,
        decay_start_epoch=6, max_epochs=39, batch_size=20, bptt_length=35,
    ),
    "ptb-large": dict(
        hidden_dims=(1500, 1500), embedding_dim=1500, vocab_mode="word",
        vocab_size=10000, dropout_rate=0.65, lr_initial=0.7, lr_decay=0.85,
        decay_start_epoch=14, max_epochs=55, batch_size=20, bptt_length=35,
    ),
    "bwb-2048-512": dict(
        hidden_dims=(2048,), embedding_dim=512, projection_dim=512,
        vocab_mode="word", vocab_size=None, dropout_rate=0.1,
        lr_initial=0.5, lr_decay=0.8, decay_start_epoch=1, max_epochs=5,
        batch_size=128, bptt_length=20,
    ),
    "text8-large": dict(
        hidden_dims=(1024, 1024, 2048), embedding_dim=128, vocab_mode="text8",
        vocab_size=None, dropout_rate=0.2, lr_initial=0.5, lr_decay=0.9,
        decay_start_epoch=4, max_epochs=20, batch_size=100, bptt_length=50,
    ),
}


def preset_config(name: str, kind: CellKind = CellKind.RAN_GENERAL, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    merged = {**PRESETS[name], "kind": kind, **overrides}
    return TrainConfig(**merged)


def schedule_lr(config: TrainConfig, epoch: int) -> float:
    """Constant until decay_start_epoch, then geometric decay (epochs 1-based)."""
    return config.lr_initial * config.lr_decay ** max(0, epoch - config.decay_start_epoch)


# ------------------------------------------------------------------ model


class LanguageModel:
    """Embedding, cell stack, softmax, and the RNG that feeds dropout."""

    def __init__(self, config: TrainConfig, vocab: Vocabulary, rng: Optional[Rng] = None):
        self.config = config
        self.vocab = vocab
        self.rng = rng if rng is not None else Rng(config.seed)
        dtype = config.dtype
        scale = config.init_scale
        vocab_size = len(vocab)
        self.embedding = Tensor(
            self.rng.uniform_signed(scale, (vocab_size, config.embedding_dim)),
            dtype=dtype, name="embedding",
        )
        self.stack = StackedCells(config.cell_configs()).init_parameters(
            self.rng, scale, config.forget_bias_init, dtype
        )
        out_dim = self.stack.output_dim
        self.softmax_w = Tensor(
            self.rng.uniform_signed(scale, (out_dim, vocab_size)),
            dtype=dtype, name="softmax.W",
        )
        self.softmax_b = Tensor(np.zeros((1, vocab_size)), dtype=dtype, name="softmax.b")

    def named_tensors(self):
        named = [("embedding", self.embedding)]
        named.extend(self.stack.named_parameters())
        named.append(("softmax.W", self.softmax_w))
        named.append(("softmax.b", self.softmax_b))
        return named

    def parameters(self):
        return [t for _, t in self.named_tensors()]

    def watch(self, tape: Tape) -> None:
        tape.watch(*self.parameters())

    def block_loss(self, inputs, targets, states, train: bool):
        """Mean per-token cross entropy of one block.

        Returns (loss, detached carry states, per-layer traces); the
        detachment is what truncates backpropagation at block edges.
        """
        batch, length = inputs.shape
        if states is None:
            states = self.stack.zero_states(batch, self.config.dtype)
        x_seq = [embedding(self.embedding, inputs[:, t]) for t in range(length)]
        outs, traces, finals = self.stack.unroll(
            x_seq, states, self.config.dropout_rate, train, self.rng
        )
        acc = None
        for t in range(length):
            h = dropout(outs[t], self.config.dropout_rate, self.rng, train)
            logits = add(matmul(h, self.softmax_w), self.softmax_b)
            step_loss = softmax_cross_entropy(logits, targets[:, t])
            acc = step_loss if acc is None else add(acc, step_loss)
        loss = smul(acc, 1.0 / length)
        return loss, [s.detach() for s in finals], traces

    def load_arrays(self, arrays: dict) -> None:
        for name, tensor in self.named_tensors():
            if name not in arrays:
                raise IntegrityError(f"checkpoint lacks tensor {name}")
            arr = arrays[name]
            if tuple(arr.shape) != tensor.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} vs model {tensor.shape}")
            tensor.data[...] = arr


# ------------------------------------------------------------- checkpoint


@dataclass
class Checkpoint:
    """A resumable snapshot: config, vocab, tensors, schedule position."""

    config: TrainConfig
    vocab: Vocabulary
    arrays: dict
    order: list
    optimizer: dict
    rng_state: dict


def snapshot(model: LanguageModel, optimizer: dict) -> Checkpoint:
    arrays = {name: t.data.copy() for name, t in model.named_tensors()}
    return Checkpoint(
        model.config, model.vocab, arrays, list(arrays), dict(optimizer), model.rng.state()
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.payload(),
        "vocab_digest": ckpt.vocab.digest(),
        "optimizer": ckpt.optimizer,
        "rng": ckpt.rng_state,
    }
    ckpt_format.write_file(path, header, [(n, ckpt.arrays[n]) for n in ckpt.order])


def load_checkpoint(path) -> Checkpoint:
    header, arrays = ckpt_format.read_file(path)
    vocab = Vocabulary.from_payload(header["vocab"])
    if vocab.digest() != header["vocab_digest"]:
        raise DigestError("vocabulary does not match its recorded digest")
    config = TrainConfig.from_dict(header["config"])
    order = [entry["name"] for entry in header["tensors"]]
    return Checkpoint(config, vocab, arrays, order, header["optimizer"], header["rng"])


def model_from_checkpoint(ckpt: Checkpoint) -> LanguageModel:
    model = LanguageModel(ckpt.config, ckpt.vocab)
    model.load_arrays(ckpt.arrays)
    model.rng = Rng.from_state(ckpt.rng_state)
    return model


# --------------------------------------------------------------- training


@dataclass
class MetricsRow:
    epoch: int
    lr: float
    train_nats: float
    valid_nats: float
    valid_ppl: float
    valid_bpc: float
    wall_seconds: float

    def line(self) -> str:
        # repr round-trips exactly and wall time is excluded, so logs of
        # equal-seed runs are byte-identical
        return "\t".join(
            [
                str(self.epoch),
                repr(self.lr),
                repr(self.train_nats),
                repr(self.valid_nats),
                repr(self.valid_ppl),
                repr(self.valid_bpc),
            ]
        )


def evaluate_ids(model: LanguageModel, ids, batch_size: Optional[int] = None) -> float:
    """Mean per-token nats over the stream, state carried end to end."""
    cfg = model.config
    stream = BatchStream(ids, batch_size or cfg.batch_size, cfg.bptt_length)
    states = None
    total, blocks = 0.0, 0
    for inputs, targets, _ in stream.blocks():
        loss, states, _ = model.block_loss(inputs, targets, states, train=False)
        total += loss.item()
        blocks += 1
    return total / blocks


def evaluate(ckpt: Checkpoint, text: str, batch_size: Optional[int] = None) -> dict:
    """Perplexity and bits-per-character of a snapshot on raw text."""
    model = model_from_checkpoint(ckpt)
    ids = model.vocab.encode(text)
    nats = evaluate_ids(model, ids, batch_size)
    return {"nats": nats, "perplexity": math.exp(nats), "bpc": nats / LN2}


def train(
    config: TrainConfig,
    train_text: str,
    valid_text: str,
    checkpoint_path=None,
    log_stream: Optional[TextIO] = None,
    resume: Optional[Checkpoint] = None,
    progress: Optional[TextIO] = None,
):
    """Run the SGD loop; returns (final Checkpoint, metric rows).

    Divergence aborts with a diagnostic; the checkpoint file then still
    holds the last epoch that completed.
    """
    if resume is not None:
        # extending max_epochs is the point of resuming; everything else
        # must match or the runs are not comparable
        ours, theirs = config.to_dict(), resume.config.to_dict()
        ours.pop("max_epochs")
        theirs.pop("max_epochs")
        if ours != theirs:
            raise ConfigError("resume checkpoint was created with a different config")
        model = model_from_checkpoint(resume)
        model.config = config
        vocab = model.vocab
        start_epoch = int(resume.optimizer["epoch"]) + 1
        final = Checkpoint(
            config, resume.vocab, resume.arrays, resume.order,
            resume.optimizer, resume.rng_state,
        )
        if checkpoint_path is not None:
            save_checkpoint(final, checkpoint_path)
    else:
        vocab = build_vocab(train_text, config.vocab_mode, config.vocab_size)
        model = LanguageModel(config, vocab)
        start_epoch = 1
        final = None

    train_ids = vocab.encode(train_text)
    valid_ids = vocab.encode(valid_text)
    stream = BatchStream(train_ids, config.batch_size, config.bptt_length)
    params = model.parameters()

    rows = []
    for epoch in range(start_epoch, config.max_epochs + 1):
        t0 = time.perf_counter()
        lr = schedule_lr(config, epoch)
        states = None
        total_nats, blocks = 0.0, 0
        for inputs, targets, _ in stream.blocks():
            tape = Tape()
            model.watch(tape)
            try:
                loss, states, _ = model.block_loss(inputs, targets, states, train=True)
                value = loss.item()
                if not math.isfinite(value):
                    raise NumericError("block loss is not finite")
                tape.backward(loss)
            except NumericError as exc:
                where = f"epoch {epoch}, block {blocks + 1}"
                kept = (
                    f"last completed epoch is saved at {checkpoint_path}"
                    if final is not None and checkpoint_path is not None
                    else "no completed epoch to keep"
                )
                raise NumericError(f"training diverged at {where} ({exc}); {kept}") from exc
            sgd_step(params, lr, config.clip_norm)
            zero_grads(params)
            untrack(params)
            total_nats += value
            blocks += 1

        valid_nats = evaluate_ids(model, valid_ids)
        row = MetricsRow(
            epoch=epoch,
            lr=lr,
            train_nats=total_nats / blocks,
            valid_nats=valid_nats,
            valid_ppl=math.exp(valid_nats),
            valid_bpc=valid_nats / LN2,
            wall_seconds=time.perf_counter() - t0,
        )
        rows.append(row)
        if log_stream is not None:
            log_stream.write(row.line() + "\n")
            log_stream.flush()
        if progress is not None:
            progress.write(
                f"epoch {row.epoch}  lr {row.lr:.6g}  "
                f"train {row.train_nats:.4f} nats  "
                f"valid ppl {row.valid_ppl:.3f}  bpc {row.valid_bpc:.4f}  "
                f"({row.wall_seconds:.1f}s)\n"
            )
            progress.flush()
        final = snapshot(model, {"epoch": epoch, "lr": lr})
        if checkpoint_path is not None:
            save_checkpoint(final, checkpoint_path)

    return final, rows
