"""Corpus tokenization and vocabularies for word- and char-level models.

Word mode splits on ASCII whitespace, ranks tokens by frequency (ties
alphabetical), and reserves trailing ids for the unknown and
end-of-sentence markers; newlines encode as end-of-sentence.  Char mode
maps every distinct Unicode scalar and is exactly invertible.  The
27-character benchmark filter (lowercase a-z plus space) is available
as a vocabulary flag so encoding stays consistent between training and
later evaluation.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ConfigError, IngestionError

UNK_TOKEN = "<unk>"
EOS_TOKEN = "<eos>"

_ASCII_WS = re.compile(r"[ \t\n\r\f\v]+")


def text8_filter(text: str) -> str:
    """Lowercase and map everything outside a-z to a space."""
    lowered = text.lower()
    return "".join(c if "a" <= c <= "z" else " " for c in lowered)


class Vocabulary:
    """Dense token<->id bijection with optional unk/eos specials."""

    def __init__(
        self,
        tokens: list[str],
        mode: str,
        unk_id: Optional[int] = None,
        eos_id: Optional[int] = None,
        filtered: bool = False,
    ):
        if mode not in ("word", "char"):
            raise ConfigError(f"vocabulary mode must be word or char, got {mode!r}")
        if len(set(tokens)) != len(tokens):
            raise IngestionError("vocabulary tokens must be distinct")
        self.mode = mode
        self.id_to_token = list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(tokens)}
        self.unk_id = unk_id
        self.eos_id = eos_id
        self.filtered = filtered

    def __len__(self) -> int:
        return len(self.id_to_token)

    def encode(self, text: str) -> np.ndarray:
        if self.mode == "word":
            return self._encode_words(text)
        return self._encode_chars(text)

    def _encode_words(self, text: str) -> np.ndarray:
        ids = []
        for token in _ASCII_WS.split(text.replace("\n", f" {EOS_TOKEN} ")):
            if not token:
                continue
            ids.append(self.token_to_id.get(token, self.unk_id))
        return np.asarray(ids, dtype=np.int64)

    def _encode_chars(self, text: str) -> np.ndarray:
        if self.filtered:
            text = text8_filter(text)
        try:
            return np.asarray([self.token_to_id[c] for c in text], dtype=np.int64)
        except KeyError as exc:
            raise IngestionError(f"character {exc.args[0]!r} not in vocabulary") from None

    def decode(self, ids) -> str:
        sep = " " if self.mode == "word" else ""
        return sep.join(self.id_to_token[int(i)] for i in ids)

    def payload(self) -> dict:
        """JSON-safe full description, stable across sessions."""
        return {
            "mode": self.mode,
            "tokens": self.id_to_token,
            "unk_id": self.unk_id,
            "eos_id": self.eos_id,
            "filtered": self.filtered,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "Vocabulary":
        return cls(
            payload["tokens"],
            payload["mode"],
            payload["unk_id"],
            payload["eos_id"],
            payload["filtered"],
        )

    def digest(self) -> str:
        blob = json.dumps(self.payload(), sort_keys=True, ensure_ascii=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_vocab(corpus: str, mode: str, max_size: Optional[int] = None) -> Vocabulary:
    """Derive a vocabulary from raw text.

    mode "word": frequency-ranked whitespace tokens from id 0, then
    unk, then eos; ``max_size`` (which counts unk and eos too) truncates
    the tail into unk.  mode "char": every distinct character, sorted.
    mode "text8": char mode over the a-z/space filtered text.
    """
    if mode == "text8":
        return _build_char(text8_filter(corpus), filtered=True)
    if mode == "char":
        if max_size is not None:
            raise ConfigError("max_size applies only to word vocabularies")
        return _build_char(corpus, filtered=False)
    if mode != "word":
        raise ConfigError(f"unknown vocabulary mode {mode!r}")

    counts = Counter(t for t in _ASCII_WS.split(corpus) if t)
    if not counts:
        raise IngestionError("empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    # corpora with pre-marked unknowns fold into the reserved specials
    ranked = [t for t in ranked if t not in (UNK_TOKEN, EOS_TOKEN)]
    if max_size is not None:
        if max_size < 3:
            raise ConfigError("word vocabularies need room for one token plus unk/eos")
        ranked = ranked[: max_size - 2]
    tokens = ranked + [UNK_TOKEN, EOS_TOKEN]
    return Vocabulary(tokens, "word", unk_id=len(ranked), eos_id=len(ranked) + 1)


def _build_char(corpus: str, filtered: bool) -> Vocabulary:
    if not corpus:
        raise IngestionError("empty corpus")
    return Vocabulary(sorted(set(corpus)), "char", filtered=filtered)


def load_bundled(name: str) -> str:
    """Text of a corpus file shipped inside the package."""
    path = resources.files(__package__) / "data" / name
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise IngestionError(f"no bundled corpus named {name!r}") from exc
