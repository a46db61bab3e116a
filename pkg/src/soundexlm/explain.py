"""Shapley word attributions with SOUNDEX-aware masked inputs.

Words are the players; hiding a word deletes it (and its SOUNDEX code) from
the model input, matching the attack's leave-one-out convention. Exact
enumeration covers every coalition up to a word-count threshold; permutation
sampling takes over beyond it.
"""

from __future__ import annotations

import html as html_lib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from soundexlm.encoding import EncodedInput, build_finetune, empty_input
from soundexlm.tokenizer import Vocab


class TooManyWords(ValueError):
    pass


@dataclass(frozen=True)
class AttributionReport:
    words: tuple[str, ...]
    shap_values: tuple[float, ...]
    base_value: float
    target_class: int
    standard_errors: tuple[float, ...] | None = None

    @property
    def full_value(self) -> float:
        return self.base_value + sum(self.shap_values)


def build_masked_input(
    vocab: Vocab,
    words: Sequence[str],
    coalition: Sequence[int],
    flavor: str,
    max_len: int = 128,
) -> EncodedInput:
    """Input for one coalition: hidden words (0 bits) are deleted outright,
    and only visible words contribute SOUNDEX codes."""
    if len(coalition) != len(words):
        raise ValueError(
            f"coalition length {len(coalition)} != word count {len(words)}"
        )
    visible = [w for w, bit in zip(words, coalition) if bit]
    if not visible:
        return empty_input(flavor, max_len)
    return build_finetune(vocab, " ".join(visible), flavor, max_len=max_len)


class _MemoizedValue:
    """Caches f per coalition bitmask; each distinct coalition costs one call."""

    def __init__(self, model, words: Sequence[str], target_class: int):
        self.model = model
        self.words = list(words)
        self.target_class = target_class
        self.cache: dict[int, float] = {}

    def __call__(self, mask: int) -> float:
        if mask not in self.cache:
            visible = [w for i, w in enumerate(self.words) if mask >> i & 1]
            probs = np.asarray(self.model.predict_proba(visible), dtype=np.float64)
            self.cache[mask] = float(probs[self.target_class])
        return self.cache[mask]


def shap_exact(
    model,
    words: Sequence[str],
    target_class: int,
    exact_threshold: int = 12,
) -> AttributionReport:
    """Exact Shapley values over all coalitions of the sentence's words.

    phi_i = sum over coalitions T without i of
    |T|! (n-|T|-1)! / n! * (f(T+i) - f(T)), with f the model probability of
    ``target_class`` on the coalition's masked input.
    """
    n = len(words)
    if n == 0:
        raise ValueError("nothing to attribute: no words")
    if n > exact_threshold:
        raise TooManyWords(f"{n} words exceed exact_threshold={exact_threshold}")
    f = _MemoizedValue(model, words, target_class)
    fact = [math.factorial(k) for k in range(n + 1)]
    weights = [fact[s] * fact[n - s - 1] / fact[n] for s in range(n)]
    phi = np.zeros(n, dtype=np.float64)
    for mask in range(1 << n):
        size = bin(mask).count("1")
        for i in range(n):
            if mask >> i & 1:
                continue
            phi[i] += weights[size] * (f(mask | 1 << i) - f(mask))
    return AttributionReport(
        words=tuple(words),
        shap_values=tuple(float(v) for v in phi),
        base_value=f(0),
        target_class=target_class,
    )


def shap_sampled(
    model,
    words: Sequence[str],
    target_class: int,
    num_permutations: int = 2000,
    seed: int = 0,
) -> AttributionReport:
    """Permutation-sampling estimate of the same attributions, with standard
    errors; deterministic for a fixed seed."""
    n = len(words)
    if n == 0:
        raise ValueError("nothing to attribute: no words")
    if num_permutations < 1:
        raise ValueError("num_permutations must be at least 1")
    f = _MemoizedValue(model, words, target_class)
    rng = np.random.default_rng(seed)
    totals = np.zeros(n, dtype=np.float64)
    squares = np.zeros(n, dtype=np.float64)
    for _ in range(num_permutations):
        mask = 0
        prev = f(0)
        for i in rng.permutation(n):
            mask |= 1 << int(i)
            cur = f(mask)
            delta = cur - prev
            totals[i] += delta
            squares[i] += delta * delta
            prev = cur
    phi = totals / num_permutations
    var = np.maximum(squares / num_permutations - phi**2, 0.0)
    se = np.sqrt(var / num_permutations)
    return AttributionReport(
        words=tuple(words),
        shap_values=tuple(float(v) for v in phi),
        base_value=f(0),
        target_class=target_class,
        standard_errors=tuple(float(v) for v in se),
    )


def _intensities(report: AttributionReport) -> list[float]:
    peak = max((abs(v) for v in report.shap_values), default=0.0)
    if peak == 0.0:
        return [0.0] * len(report.shap_values)
    return [abs(v) / peak for v in report.shap_values]


def render_report(report: AttributionReport, format: str = "ansi") -> str:
    """Red = pushes toward the target class, blue = pushes away; intensity is
    |phi| normalized by the largest |phi|. Words carry their numeric values."""
    if format == "ansi":
        return _render_ansi(report)
    if format == "html":
        return _render_html(report)
    raise ValueError(f"unknown format {format!r}; expected 'ansi' or 'html'")


def _shade(value: float, intensity: float) -> tuple[int, int, int]:
    fade = 255 - int(round(170 * intensity))
    if value > 0:
        return 255, fade, fade
    if value < 0:
        return fade, fade, 255
    return 255, 255, 255


def _render_ansi(report: AttributionReport) -> str:
    parts = [
        f"target class {report.target_class} | base {report.base_value:+.4f} "
        f"| full {report.full_value:+.4f}"
    ]
    chunks = []
    for word, value, intensity in zip(
        report.words, report.shap_values, _intensities(report)
    ):
        r, g, b = _shade(value, intensity)
        chunks.append(
            f"\x1b[48;2;{r};{g};{b}m\x1b[30m {word} ({value:+.3f}) \x1b[0m"
        )
    parts.append(" ".join(chunks))
    return "\n".join(parts)


def _render_html(report: AttributionReport) -> str:
    spans = []
    for word, value, intensity in zip(
        report.words, report.shap_values, _intensities(report)
    ):
        r, g, b = _shade(value, intensity)
        spans.append(
            f'<span style="background-color:rgb({r},{g},{b});padding:2px" '
            f'title="{value:+.6f}">{html_lib.escape(word)} '
            f"<sub>{value:+.3f}</sub></span>"
        )
    body = "\n".join(spans)
    return (
        "<html><head><title>word attributions</title></head><body>"
        f"<p>target class {report.target_class}, "
        f"base value {report.base_value:+.6f}, "
        f"full value {report.full_value:+.6f}</p>"
        f"<p>{body}</p>"
        "</body></html>"
    )


def write_report_files(report: AttributionReport, html_path: str | Path,
                       json_path: str | Path) -> None:
    Path(html_path).write_text(_render_html(report), encoding="utf-8")
    sidecar = {
        "words": list(report.words),
        "shap_values": list(report.shap_values),
        "base_value": report.base_value,
        "target_class": report.target_class,
    }
    if report.standard_errors is not None:
        sidecar["standard_errors"] = list(report.standard_errors)
    Path(json_path).write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
