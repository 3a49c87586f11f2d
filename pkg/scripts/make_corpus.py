#!/usr/bin/env python3
"""Regenerate the bundled synthetic corpus.

The packaged tiny_train.txt and tiny_valid.txt are original text
produced by this script: lowercase English-like sentences assembled
from fixed word banks and templates with a seeded generator, dedicated
to the public domain.  The text is deliberately repetitive so that a
desk-scale character model can learn real structure in minutes, while
staying far from trivially constant.

Rerunning with the default flags reproduces the shipped files byte for
byte.
"""

import argparse
import random
from pathlib import Path

NOUNS = [
    "river", "miller", "lantern", "garden", "harbor", "mountain", "letter",
    "winter", "orchard", "bridge", "weaver", "market", "valley", "sailor",
    "meadow", "tower", "farmer", "forest", "stone", "candle", "shepherd",
    "island", "painter", "morning", "fox", "juniper",
]
ADJECTIVES = [
    "quiet", "old", "bright", "narrow", "green", "heavy", "pale", "warm",
    "distant", "gentle", "broad", "silver", "patient", "early", "lazy",
    "exact", "jagged",
]
VERBS = [
    "carried", "watched", "crossed", "remembered", "followed", "gathered",
    "repaired", "painted", "measured", "guarded", "welcomed", "answered",
]
PLACES = [
    "along the shore", "beyond the hills", "near the mill", "by the gate",
    "under the elms", "past the fields", "at the crossing", "below the cliffs",
]
TIMES = [
    "before dawn", "after the rain", "in late autumn", "through the night",
    "at first light", "during the thaw",
]

TEMPLATES = [
    "the {a} {n} {v} the {n2} {p}",
    "a {a} {n} {v} the {n2} {t}",
    "the {n} {v} the {a} {n2} {p}",
    "{t} the {a} {n} {v} the {n2}",
    "the {n} and the {n2} {v} the {a} {n3} {p}",
    "the {a} {n} {v} the {n2} {p} {t}",
    "every {n} {v} the {a} {n2} {t}",
    "no {n} {v} the {n2} {p} without the {a} {n3}",
]


def sentence(rng: random.Random) -> str:
    tpl = rng.choice(TEMPLATES)
    nouns = rng.sample(NOUNS, 3)
    return tpl.format(
        a=rng.choice(ADJECTIVES), n=nouns[0], n2=nouns[1], n3=nouns[2],
        v=rng.choice(VERBS), p=rng.choice(PLACES), t=rng.choice(TIMES),
    )


def build(rng: random.Random, target_bytes: int) -> str:
    lines = []
    size = 0
    while size < target_bytes:
        line = " ".join(sentence(rng) for _ in range(rng.randint(2, 4)))
        lines.append(line)
        size += len(line) + 1
    return "\n".join(lines) + "\n"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--seed", type=int, default=7, help="generator seed (default: 7)")
    parser.add_argument("--train-bytes", type=int, default=100_000,
                        help="approximate training size (default: 100000)")
    parser.add_argument("--valid-bytes", type=int, default=10_000,
                        help="approximate validation size (default: 10000)")
    parser.add_argument("--out", default="src/ranlab/data",
                        help="output directory (default: src/ranlab/data)")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_text = build(rng, args.train_bytes)
    valid_text = build(rng, args.valid_bytes)
    (out / "tiny_train.txt").write_text(train_text, encoding="utf-8")
    (out / "tiny_valid.txt").write_text(valid_text, encoding="utf-8")
    print(f"wrote {out / 'tiny_train.txt'} ({len(train_text)} bytes)")
    print(f"wrote {out / 'tiny_valid.txt'} ({len(valid_text)} bytes)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
