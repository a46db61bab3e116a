"""Sentence-level classifier wrapper around a trained encoder.

Bridges word lists to flavor-specific model inputs so the attack and
explanation engines can stay model-agnostic: both only require
``predict_proba(words)`` and ``classes``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from soundexlm.encoding import build_finetune, empty_input
from soundexlm.model import EncoderConfig, Params, classify
from soundexlm.tokenizer import Vocab


class ModelTextClassifier:
    def __init__(
        self,
        config: EncoderConfig,
        params: Params,
        vocab: Vocab,
        flavor: str,
        classes: Sequence[str],
        max_len: int | None = None,
    ):
        if config.num_classes != len(classes):
            raise ValueError(
                f"config has {config.num_classes} classes, got names {classes}"
            )
        self.config = config
        self.params = params
        self.vocab = vocab
        self.flavor = flavor
        self.classes = tuple(classes)
        self.max_len = max_len if max_len is not None else config.max_len

    def encode(self, words: Sequence[str]):
        words = [w for w in words if w]
        if not words:
            return empty_input(self.flavor, self.max_len)
        return build_finetune(
            self.vocab, " ".join(words), self.flavor, max_len=self.max_len
        )

    def predict_proba(self, words: Sequence[str]) -> np.ndarray:
        return classify(self.config, self.params, self.encode(words))

    def predict_proba_texts(self, texts: Sequence[str]) -> np.ndarray:
        encs = [self.encode(t.split()) for t in texts]
        return classify(self.config, self.params, encs)
