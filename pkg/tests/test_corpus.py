"""
语料与词表测试
"""

from collections import Counter

import pytest

from nngrams.core.corpus import (
    BOS_ID,
    EOS_ID,
    UNK_ID,
    Vocabulary,
    WindowStream,
    build_vocabulary,
    count_words,
    iter_windows,
    merge_frequencies,
    tokenize,
    vocabulary_from_frequencies,
)
from nngrams.exceptions import ConfigError, DataError


def test_vocabulary_order_and_specials():
    """测试特殊词固定 id，其余按词频降序、同频按字典序"""
    vocab = vocabulary_from_frequencies(Counter({"b": 2, "a": 2, "c": 5, "d": 1}), max_size=6)
    assert vocab.id_to_word == ("<s>", "</s>", "<unk>", "c", "a", "b")
    assert (vocab.bos_id, vocab.eos_id, vocab.unk_id) == (BOS_ID, EOS_ID, UNK_ID)
    assert vocab.lookup("d") == UNK_ID, "被截断的词应映射为 <unk>"


def test_vocabulary_min_count():
    """测试词频下限"""
    vocab = vocabulary_from_frequencies(Counter({"a": 3, "b": 1}), max_size=10, min_count=2)
    assert "a" in vocab and "b" not in vocab


def test_vocabulary_too_small():
    """测试词表规模不足以容纳特殊词时报错"""
    with pytest.raises(ConfigError):
        vocabulary_from_frequencies(Counter({"a": 1}), max_size=2)


def test_vocabulary_round_trip(tmp_path, toy_vocab):
    """测试词表保存后加载得到相同词表"""
    path = tmp_path / "vocab.txt"
    toy_vocab.save(path)
    assert Vocabulary.load(path) == toy_vocab


def test_vocabulary_rejects_bad_file(tmp_path):
    """测试前三项不是特殊词的词表文件"""
    path = tmp_path / "vocab.txt"
    path.write_text("a\nb\nc\n", encoding="utf-8")
    with pytest.raises(DataError):
        Vocabulary.load(path)


def test_build_vocabulary_from_file(tmp_path):
    """测试从语料文件构建词表"""
    path = tmp_path / "corpus.txt"
    path.write_text("x y x\ny x\n", encoding="utf-8")
    vocab = build_vocabulary(path, max_size=10)
    assert vocab.id_to_word == ("<s>", "</s>", "<unk>", "x", "y")


def test_merge_frequencies_is_associative():
    """测试分片词频合并满足结合律"""
    a = count_words(["a b", "b"])
    b = count_words(["c"])
    c = count_words(["a a"])
    assert merge_frequencies(merge_frequencies(a, b), c) == merge_frequencies(a, merge_frequencies(b, c))
    assert merge_frequencies(a, b, c) == count_words(["a b", "b", "c", "a a"])


def test_count_words_skips_special_tokens():
    """测试特殊词不计入词频"""
    assert count_words(["<s> a </s> <unk>"]) == Counter({"a": 1})


def test_tokenize_adds_boundaries(toy_vocab):
    """测试分词加上句子边界，文本中的边界符按集外词处理"""
    sentence = tokenize("we want zebra </s>", toy_vocab)
    assert sentence.ids[0] == BOS_ID and sentence.ids[-1] == EOS_ID
    assert sentence.ids[3] == UNK_ID and sentence.ids[4] == UNK_ID
    assert len(sentence.content) == 4


def test_iter_windows_nearest_first(toy_vocab):
    """测试窗口历史按最近在前排列并用 <s> 补齐"""
    sentence = tokenize("we want", toy_vocab)
    we, want = toy_vocab.lookup("we"), toy_vocab.lookup("want")
    windows = list(iter_windows(sentence, 3))
    assert windows == [
        (we, (BOS_ID, BOS_ID, BOS_ID)),
        (want, (we, BOS_ID, BOS_ID)),
        (EOS_ID, (want, we, BOS_ID)),
    ]


def test_window_stream_positions(toy_vocab):
    """测试窗口流给出语句 id 与 1-best 位置，可重复迭代"""
    sentences = [tokenize("we want", toy_vocab), tokenize("go", toy_vocab)]
    stream = WindowStream(sentences, 2, ["u1", "u2"])
    first = [(utt, pos) for _, _, utt, pos in stream]
    assert first == [("u1", 0), ("u1", 1), ("u1", 2), ("u2", 0), ("u2", 1)]
    assert len(stream) == 5
    assert list(stream) == list(stream)


def test_window_stream_rejects_mismatched_ids(toy_vocab):
    """测试语句 id 数量与句子数量不一致时报错"""
    with pytest.raises(ValueError):
        WindowStream([tokenize("go", toy_vocab)], 2, ["a", "b"])
