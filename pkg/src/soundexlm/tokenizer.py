"""Trainable WordPiece-style subword vocabulary and greedy encoder/decoder.

The vocabulary is learned by frequency pair-merging over a whitespace-split,
lowercased corpus and is used both for word text and for lowercased SOUNDEX
code strings (e.g. ``a200``). Word-internal pieces carry the ``##`` prefix.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)

VOCAB_HEADER = "#wpvocab v1"

# Letters and digits whose bare and "##" continuation forms are always
# seeded when ensure_alphabet is requested; digits keep SOUNDEX code
# strings encodable even when the corpus has none.
_FULL_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"


class CorpusEmpty(ValueError):
    pass


class TargetTooSmall(ValueError):
    pass


class UnknownId(KeyError):
    pass


@dataclass(frozen=True)
class Vocab:
    """Immutable token<->id bijection with the five specials at fixed ids."""

    tokens: tuple[str, ...]
    id_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIALS:
            raise ValueError(f"first five tokens must be {SPECIALS}")
        ids = {t: i for i, t in enumerate(self.tokens)}
        if len(ids) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")
        object.__setattr__(self, "id_of", ids)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise UnknownId(token_id)
        return self.tokens[token_id]

    def save(self, path: str | Path) -> None:
        lines = [VOCAB_HEADER] + list(self.tokens)
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != VOCAB_HEADER:
            raise ValueError(f"{path}: missing '{VOCAB_HEADER}' header")
        return cls(tuple(lines[1:]))


def _word_symbols(word: str) -> tuple[str, ...]:
    return (word[0],) + tuple("##" + c for c in word[1:])


def build_vocab(
    corpus: Iterable[str],
    target_size: int,
    *,
    ensure_alphabet: bool = False,
) -> Vocab:
    """Train a vocabulary of at most ``target_size`` tokens.

    Seeds specials plus every single character seen in the corpus (word-initial
    and ``##`` continuation forms), then merges the most frequent adjacent
    symbol pair until ``target_size`` is reached or no pair occurs at least
    twice. Ties break lexicographically, so the result is deterministic.

    ``ensure_alphabet`` additionally seeds all Latin letters and digits in
    both forms, guaranteeing any lowercase Latin word or SOUNDEX code can be
    encoded without hitting [UNK].
    """
    word_freq = Counter()
    for sentence in corpus:
        word_freq.update(sentence.lower().split())
    if not word_freq:
        raise CorpusEmpty("corpus contains no words")

    seed: set[str] = set()
    if ensure_alphabet:
        for c in _FULL_ALPHABET:
            seed.add(c)
            seed.add("##" + c)
    words = {w: _word_symbols(w) for w in word_freq}
    for symbols in words.values():
        seed.update(symbols)

    if target_size < len(SPECIALS) + len(seed):
        raise TargetTooSmall(
            f"target_size={target_size} < {len(SPECIALS)} specials + "
            f"{len(seed)} base symbols"
        )

    tokens: list[str] = list(SPECIALS) + sorted(seed)
    while len(tokens) < target_size:
        pair_freq = Counter()
        for w, symbols in words.items():
            f = word_freq[w]
            for a, b in zip(symbols, symbols[1:]):
                pair_freq[(a, b)] += f
        if not pair_freq:
            break
        best_count = max(pair_freq.values())
        if best_count < 2:
            break
        a, b = min(p for p, c in pair_freq.items() if c == best_count)
        merged = a + b[2:]
        tokens.append(merged)
        for w, symbols in words.items():
            out = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            words[w] = tuple(out)

    return Vocab(tuple(tokens))


def encode_word(vocab: Vocab, word: str) -> list[int]:
    """Greedy longest-match WordPiece encoding of one lowercased word.

    Falls back to a single [UNK] for the whole word when any position has no
    matching piece (e.g. a non-Latin character outside the vocabulary).
    """
    word = word.lower()
    ids: list[int] = []
    pos = 0
    while pos < len(word):
        prefix = "" if pos == 0 else "##"
        end = len(word)
        match = None
        while end > pos:
            candidate = prefix + word[pos:end]
            if candidate in vocab.id_of:
                match = candidate
                break
            end -= 1
        if match is None:
            return [UNK_ID]
        ids.append(vocab.id_of[match])
        pos = end
    return ids


def encode_text(vocab: Vocab, text: str) -> tuple[list[int], list[tuple[int, int]]]:
    """Encode whitespace-split words; return (token ids, per-word spans).

    Spans are contiguous half-open token index ranges covering the output.
    """
    ids: list[int] = []
    spans: list[tuple[int, int]] = []
    for word in text.split():
        piece_ids = encode_word(vocab, word)
        spans.append((len(ids), len(ids) + len(piece_ids)))
        ids.extend(piece_ids)
    return ids, spans


def decode(vocab: Vocab, ids: Sequence[int]) -> str:
    """Inverse of encoding up to ``##`` joining; specials render literally."""
    parts: list[str] = []
    for i in ids:
        token = vocab.token_of(int(i))
        if token.startswith("##") and parts:
            parts[-1] += token[2:]
        else:
            parts.append(token)
    return " ".join(parts)
