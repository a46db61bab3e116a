import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from soundexlm.tokenizer import (
    CLS_ID,
    SEP_ID,
    SPECIALS,
    UNK_ID,
    CorpusEmpty,
    TargetTooSmall,
    UnknownId,
    Vocab,
    build_vocab,
    decode,
    encode_text,
    encode_word,
)


def make_vocab(extra):
    return Vocab(tuple(SPECIALS) + tuple(extra))


def test_merge_on_tiny_corpus():
    vocab = build_vocab(["aa aa aa"], target_size=8)
    assert "aa" in vocab
    assert len(vocab) == 8


def test_single_char_corpus_has_no_continuation_form():
    vocab = build_vocab(["a"], target_size=7)
    assert vocab.tokens == SPECIALS + ("a",)


def test_target_too_small():
    with pytest.raises(TargetTooSmall):
        build_vocab(["anything"], target_size=3)


def test_empty_corpus():
    with pytest.raises(CorpusEmpty):
        build_vocab([], target_size=100)
    with pytest.raises(CorpusEmpty):
        build_vocab(["   "], target_size=100)


def test_ensure_alphabet_seeds_letters_and_digits():
    vocab = build_vocab(["hello"], target_size=200, ensure_alphabet=True)
    for c in "abcdefghijklmnopqrstuvwxyz0123456789":
        assert c in vocab
        assert "##" + c in vocab


def test_merges_stop_below_frequency_two():
    # every pair occurs once; no merges beyond the base alphabet
    vocab = build_vocab(["ab cd"], target_size=50)
    assert len(vocab) == 5 + 4  # a, ##b, c, ##d


def test_specials_fixed_ids():
    vocab = build_vocab(["xy xy"], target_size=20)
    assert [vocab.id_of[s] for s in SPECIALS] == [0, 1, 2, 3, 4]


def test_encode_word_greedy_longest_match():
    vocab = make_vocab(["mov", "##ie", "m", "##o", "##v", "##i", "##e"])
    ids = encode_word(vocab, "movie")
    assert ids == [vocab.id_of["mov"], vocab.id_of["##ie"]]


def test_encode_word_whole_token():
    vocab = make_vocab(["movie"])
    assert encode_word(vocab, "movie") == [vocab.id_of["movie"]]


def test_encode_word_unk_fallback():
    vocab = make_vocab(["a"])
    assert encode_word(vocab, "বা") == [UNK_ID]
    # one dead position poisons the whole word
    assert encode_word(vocab, "ab") == [UNK_ID]


def test_encode_text_spans():
    vocab = make_vocab(["acha", "mov", "##ie"])
    ids, spans = encode_text(vocab, "acha movie")
    assert spans == [(0, 1), (1, 3)]
    assert ids == [vocab.id_of["acha"], vocab.id_of["mov"], vocab.id_of["##ie"]]


def test_encode_text_empty():
    vocab = make_vocab(["a"])
    assert encode_text(vocab, "") == ([], [])


def test_decode_inverse():
    vocab = make_vocab(["acha", "mov", "##ie"])
    ids, _ = encode_text(vocab, "acha movie")
    assert decode(vocab, ids) == "acha movie"


def test_decode_specials_literal():
    vocab = make_vocab(["x"])
    assert decode(vocab, [CLS_ID, vocab.id_of["x"], SEP_ID]) == "[CLS] x [SEP]"


def test_decode_unknown_id():
    vocab = make_vocab(["x"])
    with pytest.raises(UnknownId):
        decode(vocab, [len(vocab)])


def test_vocab_file_round_trip(tmp_path):
    vocab = build_vocab(["acha movie acha", "nyc movie"], target_size=64)
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    assert Vocab.load(path).tokens == vocab.tokens
    assert path.read_text(encoding="utf-8").splitlines()[0] == "#wpvocab v1"


def test_build_deterministic(tmp_path):
    corpus = ["acha movie yar", "nyc nice movie", "acha acha nahi"]
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    build_vocab(corpus, target_size=80).save(a)
    build_vocab(corpus, target_size=80).save(b)
    assert a.read_bytes() == b.read_bytes()


words = st.text(alphabet="abcdefghij", min_size=1, max_size=8)
texts = st.lists(words, min_size=0, max_size=8).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(texts)
def test_round_trip_property(text):
    vocab = build_vocab(["abcdefghij " * 2], target_size=100, ensure_alphabet=True)
    ids, spans = encode_text(vocab, text)
    assert decode(vocab, ids) == " ".join(text.split())
    # span partition: contiguous, non-overlapping, covering
    pos = 0
    for start, end in spans:
        assert start == pos
        assert end > start
        pos = end
    assert pos == len(ids)
