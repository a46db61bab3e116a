import xml.etree.ElementTree as ET

import numpy as np
import pytest

from soundexlm.encoding import SAMLM, SMLM, VC, build_finetune
from soundexlm.explain import (
    AttributionReport,
    TooManyWords,
    build_masked_input,
    render_report,
    shap_exact,
    shap_sampled,
    write_report_files,
)
from soundexlm.tokenizer import CLS_ID, SEP_ID, build_vocab


class TableModel:
    """Coalition-value model defined by an explicit table over visible words."""

    def __init__(self, words, table):
        self.words = list(words)
        self.table = {frozenset(k): v for k, v in table.items()}
        self.calls = 0

    def predict_proba(self, visible):
        self.calls += 1
        p = self.table[frozenset(visible)]
        return np.array([p, 1.0 - p])


class ConstantModel:
    def __init__(self, value):
        self.value = value

    def predict_proba(self, visible):
        return np.array([self.value, 1.0 - self.value])


@pytest.fixture(scope="module")
def vocab():
    return build_vocab(
        ["acha movie yar nice nahi"], target_size=140, ensure_alphabet=True
    )


def test_masked_input_full_coalition_equals_finetune(vocab):
    words = ["acha", "movie", "yar"]
    for flavor in (VC, SMLM, SAMLM):
        enc = build_masked_input(vocab, words, [1, 1, 1], flavor, max_len=48)
        ref = build_finetune(vocab, "acha movie yar", flavor, max_len=48)
        assert enc == ref


def test_masked_input_empty_coalition(vocab):
    enc = build_masked_input(vocab, ["acha", "movie"], [0, 0], VC, max_len=8)
    assert enc.ids[0] == CLS_ID
    assert enc.content_length == 1
    assert len(enc.ids) == 8
    smlm = build_masked_input(vocab, ["acha"], [0], SMLM, max_len=8)
    assert list(smlm.ids[:2]) == [CLS_ID, SEP_ID]
    assert smlm.content_length == 2


def test_masked_input_hides_word_and_its_code(vocab):
    words = ["acha", "movie", "yar"]
    enc = build_masked_input(vocab, words, [1, 0, 1], SAMLM, max_len=48)
    ref = build_finetune(vocab, "acha yar", SAMLM, max_len=48)
    assert enc == ref


def test_masked_input_length_mismatch(vocab):
    with pytest.raises(ValueError):
        build_masked_input(vocab, ["a", "b"], [1], VC)


def test_shap_exact_two_word_hand_case():
    words = ["w1", "w2"]
    model = TableModel(
        words,
        {
            (): 0.5,
            ("w1",): 0.8,
            ("w2",): 0.6,
            ("w1", "w2"): 0.9,
        },
    )
    report = shap_exact(model, words, target_class=0)
    assert report.shap_values[0] == pytest.approx(0.3, abs=1e-12)
    assert report.shap_values[1] == pytest.approx(0.1, abs=1e-12)
    assert report.base_value == pytest.approx(0.5)
    # efficiency: base + sum(phi) == f(full)
    assert report.full_value == pytest.approx(0.9, abs=1e-9)


def test_shap_exact_constant_model_is_all_zero():
    report = shap_exact(ConstantModel(0.7), ["a", "b", "c"], target_class=0)
    assert all(v == 0.0 for v in report.shap_values)
    assert report.base_value == pytest.approx(0.7)


def test_shap_exact_symmetry_and_null_player():
    # f depends only on how many of {a, b} are visible; c never matters
    def value(visible):
        return 0.2 + 0.3 * sum(1 for w in visible if w in ("a", "b"))

    class F:
        def predict_proba(self, visible):
            return np.array([value(visible), 1 - value(visible)])

    report = shap_exact(F(), ["a", "b", "c"], target_class=0)
    assert report.shap_values[0] == pytest.approx(report.shap_values[1], abs=1e-12)
    assert report.shap_values[2] == 0.0


def test_shap_exact_threshold():
    with pytest.raises(TooManyWords):
        shap_exact(ConstantModel(0.5), ["w"] * 13, target_class=0)
    shap_exact(ConstantModel(0.5), ["w"] * 4, target_class=0, exact_threshold=4)
    with pytest.raises(TooManyWords):
        shap_exact(ConstantModel(0.5), ["w"] * 5, target_class=0, exact_threshold=4)


def test_shap_exact_memoizes_every_coalition_once():
    words = ["a", "b", "c"]
    model = TableModel(
        words,
        {
            (): 0.1, ("a",): 0.2, ("b",): 0.3, ("c",): 0.4,
            ("a", "b"): 0.5, ("a", "c"): 0.6, ("b", "c"): 0.7,
            ("a", "b", "c"): 0.8,
        },
    )
    shap_exact(model, words, target_class=0)
    assert model.calls == 8


def seeded_table_model(words, seed):
    rng = np.random.default_rng(seed)
    table = {}
    n = len(words)
    for mask in range(1 << n):
        visible = tuple(w for i, w in enumerate(words) if mask >> i & 1)
        table[visible] = float(rng.uniform(0.05, 0.95))
    return TableModel(words, table)


def test_shap_sampled_close_to_exact():
    words = [f"w{i}" for i in range(8)]
    model = seeded_table_model(words, seed=5)
    exact = shap_exact(model, words, target_class=0)
    sampled = shap_sampled(model, words, target_class=0, num_permutations=5000, seed=1)
    gap = max(
        abs(a - b) for a, b in zip(exact.shap_values, sampled.shap_values)
    )
    assert gap < 0.05
    assert sampled.standard_errors is not None
    assert all(se >= 0 for se in sampled.standard_errors)


def test_shap_sampled_constant_model_exact_zero():
    report = shap_sampled(
        ConstantModel(0.4), ["a", "b", "c"], target_class=0, num_permutations=50
    )
    assert all(v == 0.0 for v in report.shap_values)


def test_shap_sampled_seed_deterministic():
    words = [f"w{i}" for i in range(5)]
    model = seeded_table_model(words, seed=2)
    a = shap_sampled(model, words, 0, num_permutations=100, seed=9)
    b = shap_sampled(model, words, 0, num_permutations=100, seed=9)
    assert a == b


def test_render_all_zero_is_neutral():
    report = AttributionReport(("a", "b"), (0.0, 0.0), 0.5, 0)
    ansi = render_report(report, "ansi")
    assert "48;2;255;255;255" in ansi
    html = render_report(report, "html")
    assert "rgb(255,255,255)" in html


def test_render_sign_to_color():
    report = AttributionReport(("up", "down"), (0.4, -0.4), 0.5, 1)
    html = render_report(report, "html")
    up_span = html.split("<span")[1]
    down_span = html.split("<span")[2]
    assert "rgb(255,85,85)" in up_span  # red side
    assert "rgb(85,85,255)" in down_span  # blue side


def test_render_html_is_well_formed():
    report = AttributionReport(("a<b", "c&d", "ok"), (0.2, -0.1, 0.0), 0.3, 2)
    ET.fromstring(render_report(report, "html"))


def test_render_unknown_format():
    report = AttributionReport(("a",), (0.1,), 0.5, 0)
    with pytest.raises(ValueError):
        render_report(report, "latex")


def test_write_report_files(tmp_path):
    report = AttributionReport(("a", "b"), (0.25, -0.5), 0.4, 1, (0.01, 0.02))
    html_path = tmp_path / "report.html"
    json_path = tmp_path / "report.json"
    write_report_files(report, html_path, json_path)
    ET.fromstring(html_path.read_text(encoding="utf-8"))
    import json as json_mod

    sidecar = json_mod.loads(json_path.read_text(encoding="utf-8"))
    assert sidecar["words"] == ["a", "b"]
    assert sidecar["shap_values"] == [0.25, -0.5]
    assert sidecar["base_value"] == 0.4
    assert sidecar["standard_errors"] == [0.01, 0.02]
