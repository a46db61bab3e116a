import json

import pytest

from soundexlm.data import (
    CLASSES,
    KEYWORDS,
    VARIANTS,
    EmptyDataset,
    LabeledExample,
    MalformedLine,
    RatioInvalid,
    load_dataset,
    load_pretrain_corpus,
    make_synthetic_corpus,
    save_dataset,
    split_dataset,
)
from soundexlm.phonetics import soundex


def test_load_empty_file(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmptyDataset):
        load_dataset(path)


def test_load_single_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"text": "acha film", "label": "positive"}\n', encoding="utf-8")
    assert load_dataset(path) == [LabeledExample("acha film", "positive")]


def test_load_missing_label(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"text": "acha"}\n', encoding="utf-8")
    with pytest.raises(MalformedLine) as err:
        load_dataset(path)
    assert err.value.line_number == 1


def test_load_bad_json_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"text": "ok", "label": "x"}\nnot json\n', encoding="utf-8")
    with pytest.raises(MalformedLine) as err:
        load_dataset(path)
    assert err.value.line_number == 2


def test_load_rejects_blank_text(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"text": "  ", "label": "x"}\n', encoding="utf-8")
    with pytest.raises(MalformedLine):
        load_dataset(path)


def test_save_round_trip(tmp_path):
    examples = [LabeledExample("a b", "x"), LabeledExample("c", "y")]
    path = tmp_path / "d.jsonl"
    save_dataset(examples, path)
    assert load_dataset(path) == examples


def test_split_sizes_100():
    examples = [LabeledExample(f"t{i}", "x") for i in range(100)]
    train, dev, test = split_dataset(examples, (0.8, 0.1, 0.1), seed=0)
    assert (len(train), len(dev), len(test)) == (80, 10, 10)
    combined = {e.text for e in train + dev + test}
    assert combined == {e.text for e in examples}


def test_split_floor_then_remainder():
    examples = [LabeledExample("a", "x"), LabeledExample("b", "x")]
    train, dev, test = split_dataset(examples, (0.8, 0.1, 0.1), seed=0)
    assert (len(train), len(dev), len(test)) == (1, 0, 1)


def test_split_seed_deterministic():
    examples = [LabeledExample(f"t{i}", "x") for i in range(30)]
    a = split_dataset(examples, (0.6, 0.2, 0.2), seed=5)
    b = split_dataset(examples, (0.6, 0.2, 0.2), seed=5)
    assert a == b
    c = split_dataset(examples, (0.6, 0.2, 0.2), seed=6)
    assert a != c


def test_split_invalid_ratios():
    examples = [LabeledExample("a", "x")]
    with pytest.raises(RatioInvalid):
        split_dataset(examples, (0.5, 0.2, 0.2), seed=0)
    with pytest.raises(RatioInvalid):
        split_dataset(examples, (-0.2, 0.6, 0.6), seed=0)


def test_synth_variant_rate_zero_uses_base_spellings(tmp_path):
    paths = make_synthetic_corpus(seed=1, size=60, variant_rate=0.0, out_dir=tmp_path)
    base = {kw for kws in KEYWORDS.values() for kw in kws}
    variant_spellings = {v for vs in VARIANTS.values() for v in vs}
    for split in ("train", "dev", "test"):
        for ex in load_dataset(paths[split]):
            assert not variant_spellings & set(ex.text.split())
            assert base & set(ex.text.split())


def test_synth_variants_are_soundex_equivalent():
    for kw, variants in VARIANTS.items():
        for v in variants:
            assert soundex(v) == soundex(kw)
            assert v != kw


def test_synth_label_comes_from_keyword(tmp_path):
    paths = make_synthetic_corpus(seed=2, size=90, variant_rate=0.5, out_dir=tmp_path)
    spelling_to_label = {}
    for label, kws in KEYWORDS.items():
        for kw in kws:
            spelling_to_label[kw] = label
            for v in VARIANTS[kw]:
                spelling_to_label[v] = label
    for split in ("train", "dev", "test"):
        for ex in load_dataset(paths[split]):
            hits = [spelling_to_label[w] for w in ex.text.split() if w in spelling_to_label]
            assert hits == [ex.label]


def test_synth_deterministic(tmp_path):
    a = make_synthetic_corpus(seed=3, size=45, variant_rate=0.3, out_dir=tmp_path / "a")
    b = make_synthetic_corpus(seed=3, size=45, variant_rate=0.3, out_dir=tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()


def test_synth_emits_pretrain_corpus(tmp_path):
    paths = make_synthetic_corpus(seed=4, size=40, variant_rate=0.3, out_dir=tmp_path)
    sentences = load_pretrain_corpus(paths["pretrain"])
    assert len(sentences) == 60  # pretrain_factor 1.5


def test_synth_size_validation(tmp_path):
    with pytest.raises(ValueError):
        make_synthetic_corpus(seed=0, size=5, variant_rate=0.1, out_dir=tmp_path)
    with pytest.raises(ValueError):
        make_synthetic_corpus(seed=0, size=20, variant_rate=1.5, out_dir=tmp_path)


def test_classes_are_sorted_and_balanced(tmp_path):
    assert list(CLASSES) == sorted(CLASSES)
    paths = make_synthetic_corpus(seed=5, size=30, variant_rate=0.2, out_dir=tmp_path)
    counts = {c: 0 for c in CLASSES}
    for split in ("train", "dev", "test"):
        for ex in load_dataset(paths[split]):
            counts[ex.label] += 1
    assert all(v == 10 for v in counts.values())
