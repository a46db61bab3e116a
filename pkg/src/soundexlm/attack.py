"""Black-box phonetic-perturbation attack and robustness metrics.

The attack ranks words by leave-one-out importance, then greedily substitutes
phonetically similar character groups from a dictionary, committing the
candidate that most reduces the probability of the originally predicted class
until the label flips. Classifiers are duck-typed: anything with a
``predict_proba(words) -> np.ndarray`` method and a ``classes`` sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import stdtr

DICT_HEADER = "#phondict v1"

# Documented default: common Romanized-Hindi sound-alike character groups.
# Acceptance-grade evaluations construct their own fixture dictionaries.
DEFAULT_GROUPS: dict[str, tuple[str, ...]] = {
    "ee": ("i",),
    "i": ("ee",),
    "oo": ("u",),
    "u": ("oo",),
    "aa": ("a",),
    "a": ("aa",),
    "ph": ("f",),
    "f": ("ph",),
    "w": ("v",),
    "v": ("w",),
    "sh": ("s",),
    "ch": ("chh",),
    "chh": ("ch",),
    "j": ("z",),
    "z": ("j",),
    "q": ("k",),
}


class EmptySentence(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class EmptyInput(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


@dataclass(frozen=True)
class SubstitutionDictionary:
    """Character group (1-3 lowercase Latin letters) -> phonetic alternatives."""

    groups: dict[str, tuple[str, ...]]

    def __post_init__(self):
        for key, alts in self.groups.items():
            if not (1 <= len(key) <= 3 and key.isascii() and key.isalpha()):
                raise ValueError(f"bad group {key!r}: want 1-3 Latin letters")
            if key != key.lower():
                raise ValueError(f"group {key!r} must be lowercase")
            if not alts:
                raise ValueError(f"group {key!r} has no alternatives")
            for alt in alts:
                if not alt or alt != alt.lower():
                    raise ValueError(f"alternative {alt!r} of {key!r} not lowercase")
                if alt == key:
                    raise ValueError(f"group {key!r} lists itself")

    @property
    def keys_longest_first(self) -> tuple[str, ...]:
        return tuple(sorted(self.groups, key=lambda k: (-len(k), k)))

    def save(self, path: str | Path) -> None:
        lines = [DICT_HEADER]
        for key in sorted(self.groups):
            lines.append(f"{key}\t{','.join(self.groups[key])}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SubstitutionDictionary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != DICT_HEADER:
            raise ValueError(f"{path}: missing '{DICT_HEADER}' header")
        groups: dict[str, tuple[str, ...]] = {}
        for lineno, line in enumerate(lines[1:], start=2):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                key, alts = text.split("\t")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: want 'group<TAB>alts'") from exc
            groups[key] = tuple(a for a in alts.split(",") if a)
        return cls(groups)


def default_dictionary() -> SubstitutionDictionary:
    return SubstitutionDictionary(dict(DEFAULT_GROUPS))


@dataclass(frozen=True)
class AttackConfig:
    max_words_perturbed: int | None = None  # None: every word may be touched
    candidate_budget: int = 32
    rng_seed: int = 0  # reserved for sampled candidate selection

    def __post_init__(self):
        if self.max_words_perturbed is not None and self.max_words_perturbed <= 0:
            raise ValueError("max_words_perturbed must be positive")
        if self.candidate_budget <= 0:
            raise ValueError("candidate_budget must be positive")


@dataclass(frozen=True)
class AttackResult:
    original: str
    adversarial: str
    success: bool
    perturbed_indices: tuple[int, ...]
    queries: int
    pr: float
    original_label: int
    adversarial_label: int


@dataclass(frozen=True)
class RobustnessReport:
    ba: float
    aa: float
    bf1: float
    af1: float
    mean_pr: float
    pda: float


class _CountingClassifier:
    def __init__(self, model):
        self.model = model
        self.queries = 0

    def predict_proba(self, words: Sequence[str]) -> np.ndarray:
        self.queries += 1
        return np.asarray(self.model.predict_proba(words), dtype=np.float64)


def perturb_word(word: str, dictionary: SubstitutionDictionary) -> list[str]:
    """All single-occurrence phonetic substitutions of ``word``, deduplicated.

    Deterministic order: match position, then key length descending, then the
    alternatives as listed. The unchanged word is never returned.
    """
    w = word.lower()
    keys = dictionary.keys_longest_first
    out: list[str] = []
    seen = {w}
    for pos in range(len(w)):
        for key in keys:
            if not w.startswith(key, pos):
                continue
            for alt in dictionary.groups[key]:
                variant = w[:pos] + alt + w[pos + len(key):]
                if variant not in seen:
                    seen.add(variant)
                    out.append(variant)
    return out


def _importance_ranking(
    counting: _CountingClassifier,
    words: Sequence[str],
    true_class: int,
    base_prob: float,
) -> list[tuple[int, float]]:
    scores = []
    for i in range(len(words)):
        reduced = list(words[:i]) + list(words[i + 1:])
        prob = counting.predict_proba(reduced)[true_class]
        scores.append((i, base_prob - float(prob)))
    return sorted(scores, key=lambda t: (-t[1], t[0]))


def token_importance(
    model, sentence: str, true_class: int, base_probs: np.ndarray | None = None
) -> tuple[list[tuple[int, float]], int]:
    """Leave-one-out word importances, sorted descending (ties: lower index).

    importance(i) = P(true_class | sentence) - P(true_class | sentence minus
    word i). Returns (ranking, query count): n+1 queries, or n when
    ``base_probs`` is supplied by the caller.
    """
    words = sentence.split()
    if not words:
        raise EmptySentence("cannot rank words of an empty sentence")
    counting = _CountingClassifier(model)
    if base_probs is None:
        base_probs = counting.predict_proba(words)
    ranking = _importance_ranking(
        counting, words, true_class, float(base_probs[true_class])
    )
    return ranking, counting.queries


def attack(
    model,
    sentence: str,
    dictionary: SubstitutionDictionary,
    config: AttackConfig = AttackConfig(),
) -> AttackResult:
    """Greedy un-targeted attack; stops the moment the predicted label flips.

    Words are visited in leave-one-out importance order; for each, every
    dictionary candidate is scored and the probability-minimizing one is
    committed only if it strictly lowers the originally predicted class's
    probability. Every model invocation is counted in ``queries``.
    """
    words = sentence.split()
    if not words:
        raise EmptySentence("cannot attack an empty sentence")
    counting = _CountingClassifier(model)
    orig_probs = counting.predict_proba(words)
    orig_label = int(orig_probs.argmax())
    ranking = _importance_ranking(
        counting, words, orig_label, float(orig_probs[orig_label])
    )

    budget = config.max_words_perturbed or len(words)
    current = list(words)
    current_prob = float(orig_probs[orig_label])
    current_label = orig_label
    perturbed: list[int] = []
    success = False

    for idx, _ in ranking:
        if len(perturbed) >= budget:
            break
        candidates = perturb_word(current[idx], dictionary)[: config.candidate_budget]
        best: tuple[float, int, str, np.ndarray] | None = None
        for order, candidate in enumerate(candidates):
            trial = current.copy()
            trial[idx] = candidate
            probs = counting.predict_proba(trial)
            p = float(probs[orig_label])
            if best is None or p < best[0]:
                best = (p, order, candidate, probs)
        if best is None or best[0] >= current_prob:
            continue
        current[idx] = best[2]
        current_prob = best[0]
        current_label = int(best[3].argmax())
        perturbed.append(idx)
        if current_label != orig_label:
            success = True
            break

    return AttackResult(
        original=sentence,
        adversarial=" ".join(current),
        success=success,
        perturbed_indices=tuple(sorted(perturbed)),
        queries=counting.queries,
        pr=len(perturbed) / len(words),
        original_label=orig_label,
        adversarial_label=current_label,
    )


def macro_f1(predictions: Sequence, labels: Sequence) -> float:
    """Unweighted mean of per-class F1 over classes present on either side."""
    if len(predictions) == 0 or len(labels) == 0:
        raise EmptyInput("macro_f1 needs at least one prediction")
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    classes = sorted(set(labels) | set(predictions))
    f1s = []
    for cls in classes:
        tp = sum(1 for p, y in zip(predictions, labels) if p == cls and y == cls)
        fp = sum(1 for p, y in zip(predictions, labels) if p == cls and y != cls)
        fn = sum(1 for p, y in zip(predictions, labels) if p != cls and y == cls)
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1s))


def evaluate_robustness(
    model,
    examples: Sequence,
    dictionary: SubstitutionDictionary,
    config: AttackConfig = AttackConfig(),
) -> tuple[RobustnessReport, list[AttackResult | None]]:
    """Clean metrics, per-example attacks, and after-attack metrics.

    Correctly classified examples are attacked; already-misclassified ones are
    left alone (they count against the model on both sides) and contribute a
    None in the per-example result list.
    """
    if len(examples) == 0:
        raise EmptyDataset("no examples to evaluate")
    class_index = {name: i for i, name in enumerate(model.classes)}

    labels: list[int] = []
    clean_preds: list[int] = []
    attacked_preds: list[int] = []
    results: list[AttackResult | None] = []
    prs: list[float] = []

    for example in examples:
        label = class_index[example.label]
        words = example.text.split()
        pred = int(np.asarray(model.predict_proba(words)).argmax())
        labels.append(label)
        clean_preds.append(pred)
        if pred != label:
            attacked_preds.append(pred)
            results.append(None)
            continue
        result = attack(model, example.text, dictionary, config)
        results.append(result)
        attacked_preds.append(result.adversarial_label)
        if result.success:
            prs.append(result.pr)

    labels_arr = np.array(labels)
    ba = float((np.array(clean_preds) == labels_arr).mean())
    aa = float((np.array(attacked_preds) == labels_arr).mean())
    report = RobustnessReport(
        ba=ba,
        aa=aa,
        bf1=macro_f1(clean_preds, labels),
        af1=macro_f1(attacked_preds, labels),
        mean_pr=float(np.mean(prs)) if prs else 0.0,
        pda=percentage_drop_in_accuracy(ba, aa),
    )
    return report, results


def percentage_drop_in_accuracy(ba: float, aa: float) -> float:
    return 100.0 * (ba - aa) / ba if ba > 0 else 0.0


class TTestResult(NamedTuple):
    statistic: float
    p_value: float

    @property
    def significant_at_95(self) -> bool:
        return self.p_value < 0.05


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> TTestResult:
    """Two-sided paired t-test on the per-example score differences."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise InsufficientSamples(f"need at least 2 pairs, got {n}")
    diff = a - b
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        raise ZeroVariance("all paired differences are identical")
    t = float(diff.mean() / (sd / np.sqrt(n)))
    p = 2.0 * float(stdtr(n - 1, -abs(t)))
    return TTestResult(t, p)
