"""Model-ready input construction for SMLM/SAMLM pre-training and fine-tuning.

SMLM appends the per-word SOUNDEX code tokens after a [SEP]; SAMLM interleaves
each word's pieces with its code pieces. Words whose SOUNDEX code does not
exist (no Latin letter) contribute tokens only. MLM masking selects a seeded,
exact fraction of the non-special positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from soundexlm.phonetics import soundex
from soundexlm.tokenizer import CLS_ID, MASK_ID, PAD_ID, SEP_ID, Vocab, encode_word

VC, SMLM, SAMLM = "vc", "smlm", "samlm"
FLAVORS = (VC, SMLM, SAMLM)

IGNORE_LABEL = -1

# Ids below this are the reserved specials; they are never masked and never
# drawn as random replacements.
_FIRST_REGULAR_ID = 5


class EmptyAfterTruncation(ValueError):
    pass


@dataclass(frozen=True)
class WordAlignment:
    """Where one whitespace word landed in the id sequence."""

    word_index: int
    token_span: tuple[int, int]
    code_span: tuple[int, int] | None


@dataclass(frozen=True)
class EncodedInput:
    ids: tuple[int, ...]
    segments: tuple[int, ...]
    attention_mask: tuple[int, ...]
    alignment: tuple[WordAlignment, ...]
    words: tuple[str, ...]
    flavor: str
    has_cls: bool
    padded_to: int | None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def content_length(self) -> int:
        return int(sum(self.attention_mask))


def _word_pieces(vocab: Vocab, word: str) -> tuple[list[int], list[int] | None]:
    token_ids = encode_word(vocab, word)
    code = soundex(word)
    code_ids = encode_word(vocab, code.lower()) if code is not None else None
    return token_ids, code_ids


def _overhead(flavor: str, has_cls: bool) -> int:
    n = 1 if has_cls else 0
    if flavor == SMLM:
        n += 1  # the word/code separator
    return n


def _assemble(
    pieces: list[tuple[list[int], list[int] | None]],
    words: Sequence[str],
    flavor: str,
    has_cls: bool,
    padded_to: int | None,
) -> EncodedInput:
    ids: list[int] = []
    segments: list[int] = []
    alignment: list[WordAlignment] = []

    if has_cls:
        ids.append(CLS_ID)
        segments.append(0)

    if flavor == SAMLM:
        for i, (tok, code) in enumerate(pieces):
            t0 = len(ids)
            ids.extend(tok)
            span = (t0, len(ids))
            if code is not None:
                c0 = len(ids)
                ids.extend(code)
                alignment.append(WordAlignment(i, span, (c0, len(ids))))
            else:
                alignment.append(WordAlignment(i, span, None))
        segments.extend([0] * (len(ids) - len(segments)))
    else:
        spans = []
        for i, (tok, _) in enumerate(pieces):
            t0 = len(ids)
            ids.extend(tok)
            spans.append((t0, len(ids)))
        segments.extend([0] * (len(ids) - len(segments)))
        if flavor == SMLM:
            ids.append(SEP_ID)
            segments.append(0)
            for i, (_, code) in enumerate(pieces):
                if code is None:
                    alignment.append(WordAlignment(i, spans[i], None))
                    continue
                c0 = len(ids)
                ids.extend(code)
                segments.extend([1] * len(code))
                alignment.append(WordAlignment(i, spans[i], (c0, len(ids))))
        else:
            alignment.extend(
                WordAlignment(i, span, None) for i, span in enumerate(spans)
            )

    attention = [1] * len(ids)
    if padded_to is not None:
        if len(ids) > padded_to:
            raise EmptyAfterTruncation(
                f"assembled length {len(ids)} exceeds max_len {padded_to}"
            )
        pad = padded_to - len(ids)
        ids.extend([PAD_ID] * pad)
        segments.extend([0] * pad)
        attention.extend([0] * pad)

    return EncodedInput(
        ids=tuple(ids),
        segments=tuple(segments),
        attention_mask=tuple(attention),
        alignment=tuple(alignment),
        words=tuple(words),
        flavor=flavor,
        has_cls=has_cls,
        padded_to=padded_to,
    )


def _fit_word_count(
    pieces: list[tuple[list[int], list[int] | None]],
    flavor: str,
    has_cls: bool,
    max_len: int,
) -> int:
    length = _overhead(flavor, has_cls)
    n = 0
    for tok, code in pieces:
        extra = len(tok) + (len(code) if flavor != VC and code is not None else 0)
        if length + extra > max_len:
            break
        length += extra
        n += 1
    if n == 0:
        raise EmptyAfterTruncation(f"no word fits within max_len={max_len}")
    return n


def _build(
    vocab: Vocab,
    words: Sequence[str],
    flavor: str,
    has_cls: bool,
    max_len: int,
    pad: bool,
) -> EncodedInput:
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}, expected one of {FLAVORS}")
    if not words:
        raise EmptyAfterTruncation("no words in sentence")
    pieces = [_word_pieces(vocab, w) for w in words]
    n = _fit_word_count(pieces, flavor, has_cls, max_len)
    return _assemble(
        pieces[:n], list(words[:n]), flavor, has_cls, max_len if pad else None
    )


def build_smlm_pretrain(vocab: Vocab, sentence: str, max_len: int = 128) -> EncodedInput:
    """Word tokens, then [SEP], then SOUNDEX code tokens of encodable words.

    Codes are lowercased before WordPiece encoding; segment 1 marks the code
    region after the [SEP]. No [CLS] and no trailing [SEP].
    """
    return _build(vocab, sentence.split(), SMLM, has_cls=False, max_len=max_len, pad=False)


def build_samlm_pretrain(vocab: Vocab, sentence: str, max_len: int = 128) -> EncodedInput:
    """Each word's pieces immediately followed by its SOUNDEX code pieces.

    Words without a code contribute tokens only; every segment id is 0.
    """
    return _build(vocab, sentence.split(), SAMLM, has_cls=False, max_len=max_len, pad=False)


def build_finetune(
    vocab: Vocab, sentence: str, flavor: str, max_len: int = 128
) -> EncodedInput:
    """[CLS]-prefixed classification input, padded with [PAD] to ``max_len``."""
    return _build(vocab, sentence.split(), flavor, has_cls=True, max_len=max_len, pad=True)


def empty_input(flavor: str, max_len: int = 128, pad: bool = True) -> EncodedInput:
    """Minimal zero-word sequence: [CLS] plus the flavor's scaffolding."""
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}, expected one of {FLAVORS}")
    return _assemble([], [], flavor, has_cls=True, padded_to=max_len if pad else None)


def truncate(enc: EncodedInput, max_len: int) -> EncodedInput:
    """Drop trailing whole words (with their code spans) until it fits."""
    pieces = []
    for wa in enc.alignment:
        tok = [enc.ids[i] for i in range(*wa.token_span)]
        code = [enc.ids[i] for i in range(*wa.code_span)] if wa.code_span else None
        pieces.append((tok, code))
    n = _fit_word_count(pieces, enc.flavor, enc.has_cls, max_len)
    padded_to = max_len if enc.padded_to is not None else None
    return _assemble(pieces[:n], list(enc.words[:n]), enc.flavor, enc.has_cls, padded_to)


@dataclass(frozen=True)
class MaskedBatch:
    """MLM inputs with labels carrying original ids at the selected positions."""

    input_ids: np.ndarray
    labels: np.ndarray
    attention_mask: np.ndarray
    segments: np.ndarray

    @property
    def num_masked(self) -> int:
        return int((self.labels != IGNORE_LABEL).sum())


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def apply_mlm_mask(
    vocab: Vocab,
    inputs: EncodedInput | Sequence[EncodedInput],
    mask_rate: float,
    rng_seed: int,
    mask_splits: tuple[float, float, float] = (0.8, 0.1, 0.1),
    pad_to: int | None = None,
) -> MaskedBatch:
    """Select round(mask_rate * eligible) positions per sequence for MLM.

    Eligible positions are the non-special, non-padding ones (word and SOUNDEX
    tokens alike). Of the selected positions, ``mask_splits`` controls the
    replaced-by-[MASK] / replaced-by-random-id / left-unchanged proportions.
    Labels hold the original id at selected positions and -1 elsewhere.
    """
    if not 0.0 <= mask_rate <= 1.0:
        raise ValueError(f"mask_rate must be in [0, 1], got {mask_rate}")
    if abs(sum(mask_splits) - 1.0) > 1e-9:
        raise ValueError(f"mask_splits must sum to 1, got {mask_splits}")
    if isinstance(inputs, EncodedInput):
        inputs = [inputs]
    if not inputs:
        raise ValueError("no sequences to mask")

    width = pad_to if pad_to is not None else max(len(e) for e in inputs)
    batch = len(inputs)
    input_ids = np.full((batch, width), PAD_ID, dtype=np.int64)
    labels = np.full((batch, width), IGNORE_LABEL, dtype=np.int64)
    attention = np.zeros((batch, width), dtype=np.int64)
    segments = np.zeros((batch, width), dtype=np.int64)

    rng = np.random.default_rng(rng_seed)
    p_mask, p_random = mask_splits[0], mask_splits[1]
    for row, enc in enumerate(inputs):
        n = len(enc)
        if n > width:
            raise ValueError(f"sequence of length {n} exceeds pad_to={width}")
        ids = np.array(enc.ids, dtype=np.int64)
        input_ids[row, :n] = ids
        attention[row, :n] = enc.attention_mask
        segments[row, :n] = enc.segments

        eligible = np.flatnonzero(
            (ids >= _FIRST_REGULAR_ID) & (np.array(enc.attention_mask) == 1)
        )
        count = _round_half_up(mask_rate * len(eligible))
        if count == 0:
            continue
        chosen = rng.choice(eligible, size=count, replace=False)
        for pos in chosen:
            labels[row, pos] = ids[pos]
            u = rng.random()
            if u < p_mask:
                input_ids[row, pos] = MASK_ID
            elif u < p_mask + p_random:
                input_ids[row, pos] = rng.integers(_FIRST_REGULAR_ID, len(vocab))

    return MaskedBatch(input_ids, labels, attention, segments)


def collate(inputs: Sequence[EncodedInput], pad_to: int | None = None) -> MaskedBatch:
    """Pad a list of inputs into unmasked batch arrays (labels all ignored)."""
    if not inputs:
        raise ValueError("no sequences to collate")
    width = pad_to if pad_to is not None else max(len(e) for e in inputs)
    batch = len(inputs)
    input_ids = np.full((batch, width), PAD_ID, dtype=np.int64)
    labels = np.full((batch, width), IGNORE_LABEL, dtype=np.int64)
    attention = np.zeros((batch, width), dtype=np.int64)
    segments = np.zeros((batch, width), dtype=np.int64)
    for row, enc in enumerate(inputs):
        n = len(enc)
        if n > width:
            raise ValueError(f"sequence of length {n} exceeds pad_to={width}")
        input_ids[row, :n] = enc.ids
        attention[row, :n] = enc.attention_mask
        segments[row, :n] = enc.segments
    return MaskedBatch(input_ids, labels, attention, segments)
