"""Dataset ingestion, splitting, and the synthetic code-mixed corpus.

Datasets are JSON-lines files with "text" and "label" fields. The synthetic
generator emits sentiment-style Romanized-Hindi sentences whose label is
carried by a single keyword, optionally respelled with a SOUNDEX-equivalent
variant, plus an unlabeled pre-training corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from soundexlm.phonetics import soundex


class EmptyDataset(ValueError):
    pass


class RatioInvalid(ValueError):
    pass


class MalformedLine(ValueError):
    def __init__(self, path, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {reason}")


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: str


def load_dataset(path: str | Path) -> list[LabeledExample]:
    """Read one JSON object per line; blank lines are skipped."""
    examples: list[LabeledExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(path, lineno, f"invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "text" not in obj or "label" not in obj:
                raise MalformedLine(path, lineno, 'expected {"text", "label"} object')
            text = str(obj["text"]).strip()
            if not text:
                raise MalformedLine(path, lineno, "empty text")
            examples.append(LabeledExample(text, str(obj["label"])))
    if not examples:
        raise EmptyDataset(f"{path}: no examples")
    return examples


def save_dataset(examples: Sequence[LabeledExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"text": ex.text, "label": ex.label}) + "\n")


def split_dataset(
    examples: Sequence[LabeledExample],
    ratios: tuple[float, float, float],
    seed: int,
) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """Seeded shuffle, then contiguous slices sized floor(n*r) with the
    remainder going to the last split."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or ratios[0] <= 0:
        raise RatioInvalid(f"ratios must be positive: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise RatioInvalid(f"ratios must sum to 1: {ratios}")
    n = len(examples)
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [examples[i] for i in order]
    n_train = int(np.floor(n * ratios[0]))
    n_dev = int(np.floor(n * ratios[1]))
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_dev],
        shuffled[n_train + n_dev :],
    )


# Keyword inventory: the single sentiment-bearing word of each sentence.
# Spelling variants are SOUNDEX-equivalent by construction (asserted below).
KEYWORDS: dict[str, tuple[str, ...]] = {
    "positive": ("acha", "badiya", "mast", "sahi", "gajab", "shandar", "nice"),
    "negative": ("bura", "bekar", "kharab", "bakwas", "ganda", "flop"),
    "neutral": ("lambi", "purani", "nayi", "kal", "samanya"),
}

VARIANTS: dict[str, tuple[str, ...]] = {
    "acha": ("achha", "acchha"),
    "badiya": ("badhiya",),
    "mast": ("masst",),
    "sahi": ("sahee",),
    "gajab": ("gazab",),
    "shandar": ("shaandaar",),
    "nice": ("nyc",),
    "bura": ("buraa",),
    "bekar": ("bekaar",),
    "kharab": ("karab",),
    "bakwas": ("bakwaas",),
    "ganda": ("gandaa",),
    "flop": ("flopp",),
    "lambi": ("laambi",),
    "purani": ("puraani",),
    "nayi": ("nayee",),
    "kal": ("kaal",),
    "samanya": ("samaanya",),
}

FILLERS = (
    "yeh", "film", "movie", "hai", "bhai", "yaar", "bahut", "bilkul",
    "aur", "lekin", "kya", "dekho", "abhi", "log", "sab", "na",
)

CLASSES = tuple(sorted(KEYWORDS))

for _kw, _variants in VARIANTS.items():
    for _v in _variants:
        assert soundex(_v) == soundex(_kw), (_kw, _v)


def _synthetic_sentence(rng: np.random.Generator, label: str, variant_rate: float) -> str:
    keyword = KEYWORDS[label][rng.integers(len(KEYWORDS[label]))]
    if rng.random() < variant_rate:
        variants = VARIANTS[keyword]
        keyword = variants[rng.integers(len(variants))]
    before = [FILLERS[rng.integers(len(FILLERS))] for _ in range(rng.integers(1, 4))]
    after = [FILLERS[rng.integers(len(FILLERS))] for _ in range(rng.integers(1, 4))]
    return " ".join(before + [keyword] + after)


def make_synthetic_corpus(
    seed: int,
    size: int,
    variant_rate: float,
    out_dir: str | Path,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    pretrain_factor: float = 1.5,
) -> dict[str, Path]:
    """Write train/dev/test JSONL splits plus an unlabeled pre-training file.

    Labels are balanced round-robin; every sentence carries exactly one
    keyword, respelled with probability ``variant_rate``. Deterministic for a
    fixed seed. Returns the emitted paths keyed by split name.
    """
    if size < 10:
        raise ValueError(f"size must be at least 10, got {size}")
    if not 0.0 <= variant_rate <= 1.0:
        raise ValueError(f"variant_rate must be in [0, 1], got {variant_rate}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    examples = [
        LabeledExample(
            _synthetic_sentence(rng, CLASSES[i % len(CLASSES)], variant_rate),
            CLASSES[i % len(CLASSES)],
        )
        for i in range(size)
    ]
    train, dev, test = split_dataset(examples, ratios, seed)

    pretrain_lines = [
        _synthetic_sentence(rng, CLASSES[i % len(CLASSES)], variant_rate)
        for i in range(int(size * pretrain_factor))
    ]

    paths = {
        "train": out / "train.jsonl",
        "dev": out / "dev.jsonl",
        "test": out / "test.jsonl",
        "pretrain": out / "pretrain.txt",
    }
    save_dataset(train, paths["train"])
    save_dataset(dev, paths["dev"])
    save_dataset(test, paths["test"])
    paths["pretrain"].write_text("\n".join(pretrain_lines) + "\n", encoding="utf-8")
    return paths


def load_pretrain_corpus(path: str | Path) -> list[str]:
    lines = [l.strip() for l in Path(path).read_text(encoding="utf-8").splitlines()]
    sentences = [l for l in lines if l]
    if not sentences:
        raise EmptyDataset(f"{path}: no sentences")
    return sentences
