"""
噪声样本测试
"""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from nngrams.core.corpus import Vocabulary
from nngrams.core.lattice import Lattice
from nngrams.core.ngram import estimate_katz
from nngrams.core.noise import (
    SpeechNoise,
    SpeechNoiseEntry,
    SpeechNoiseTable,
    TextNoise,
    build_speech_noise,
    speech_noise,
    text_noise,
)
from nngrams.exceptions import DataError

SPEECH_VOCAB = Vocabulary(
    ("<s>", "</s>", "<unk>", "hello", "how", "now", "are", "you", "doing", "going", "well", "o", "a", "b", "c")
)


def two_way_lattice() -> Lattice:
    """第一个位置有唯一替代词 c，第二个位置没有替代"""
    return Lattice.from_edges(0, 2, [(0, 1, "a", -0.1), (0, 1, "c", -2.0), (1, 2, "b", 0.0)])


def simple_table() -> SpeechNoiseTable:
    ids = [SPEECH_VOCAB.lookup(w) for w in ("a", "b", "c")]
    entry = SpeechNoiseEntry(best_word=SPEECH_VOCAB.lookup("hello"), best_posterior=0.6, words=ids, probs=[0.5, 0.3, 0.2])
    return SpeechNoiseTable(entries={("u1", 0): entry})


# ============================== 文本噪声 ==============================


def test_text_noise_log_prob_is_exact(toy_vocab, toy_store):
    """测试文本噪声的对数概率与 Katz 条件概率逐位一致"""
    lm = estimate_katz(toy_store, 3, vocab_size=toy_vocab.size)
    history = (toy_vocab.lookup("want"), toy_vocab.lookup("we"))
    samples = text_noise(lm, history, 50, np.random.default_rng(0))
    assert len(samples) == 50
    for sample in samples:
        assert sample.log_prob == math.log(lm.cond_prob(sample.word, history))
    with pytest.raises(ValueError):
        text_noise(lm, history, 0, np.random.default_rng(0))


def test_text_noise_provider(toy_vocab, toy_store):
    """测试文本噪声来源返回数据词的噪声对数概率"""
    lm = estimate_katz(toy_store, 2, vocab_size=toy_vocab.size)
    to, go = toy_vocab.lookup("to"), toy_vocab.lookup("go")
    target, samples = TextNoise(lm).draw(go, (to,), None, 3, 4, np.random.default_rng(1))
    assert target == math.log(lm.cond_prob(go, (to,)))
    assert len(samples) == 4


def test_text_noise_pooled_frequencies_match_katz(toy_vocab, toy_store):
    """测试多个历史上汇总的文本噪声频率与 Katz 条件概率之和通过卡方检验"""
    lm = estimate_katz(toy_store, 3, vocab_size=toy_vocab.size)
    rng = np.random.default_rng(7)
    words = [toy_vocab.lookup(w) for w in ("we", "want", "to", "go", "home")]
    per_history = 2000
    observed = np.zeros(toy_vocab.size)
    expected = np.zeros(toy_vocab.size)
    for history in [(a, b) for a in words for b in words]:
        for sample in text_noise(lm, history, per_history, rng):
            observed[sample.word] += 1
        expected += per_history * np.array([lm.cond_prob(w, history) for w in range(toy_vocab.size)])
    keep = expected >= 5
    obs = observed[keep]
    exp = expected[keep] * obs.sum() / expected[keep].sum()
    assert chisquare(obs, exp).pvalue > 0.01


# ============================== 语音噪声表 ==============================


def test_build_speech_noise_hello(hello_lattice):
    """测试问候语词格只在 how 和 doing 两个位置产生混淆"""
    table = build_speech_noise([("utt1", hello_lattice)], SPEECH_VOCAB)
    assert table.hypotheses["utt1"] == ("hello", "how", "are", "you", "doing")
    assert sorted(table.entries) == [("utt1", 1), ("utt1", 4)]
    how = table.get("utt1", 1)
    assert how.best_word == SPEECH_VOCAB.lookup("how")
    assert how.words.tolist() == [SPEECH_VOCAB.lookup("now")]
    assert how.probs.tolist() == [1.0]
    assert how.best_posterior == pytest.approx(1.0 / (1.0 + math.exp(-1.4)))


def test_build_speech_noise_two_way_lattice():
    """测试替代词后验重新归一化"""
    table = build_speech_noise([("u", two_way_lattice())], SPEECH_VOCAB)
    assert len(table) == 1
    entry = table.get("u", 0)
    assert dict(zip(entry.words.tolist(), entry.probs.tolist())) == {SPEECH_VOCAB.lookup("c"): 1.0}


def test_low_confidence_lattice_is_skipped(hello_lattice):
    """测试置信度低于阈值的词格被跳过"""
    table = build_speech_noise([("utt1", hello_lattice), ("u2", two_way_lattice())], SPEECH_VOCAB, 0.9, threads=2)
    assert table.skipped == ["utt1"]
    assert "utt1" not in table.hypotheses and ("u2", 0) in table


def test_table_save_and_load(tmp_path, hello_lattice):
    """测试噪声表保存后加载"""
    table = build_speech_noise([("utt1", hello_lattice)], SPEECH_VOCAB)
    path = tmp_path / "noise.tbl"
    table.save(path, SPEECH_VOCAB)
    loaded = SpeechNoiseTable.load(path, SPEECH_VOCAB)
    assert sorted(loaded.entries) == sorted(table.entries)
    for key, entry in table.entries.items():
        other = loaded.entries[key]
        assert other.best_word == entry.best_word and other.best_posterior == entry.best_posterior
        assert np.array_equal(other.words, entry.words) and np.array_equal(other.probs, entry.probs)


def test_table_load_errors_and_floor(tmp_path):
    """测试缺少替代词的行报错，1-best 没有后验时取下限"""
    path = tmp_path / "noise.tbl"
    path.write_text("u 0 hello\n", encoding="utf-8")
    with pytest.raises(DataError):
        SpeechNoiseTable.load(path, SPEECH_VOCAB)
    path.write_text("u 0 hello a:oops\n", encoding="utf-8")
    with pytest.raises(DataError):
        SpeechNoiseTable.load(path, SPEECH_VOCAB)
    path.write_text("u 0 hello a:0.25 b:0.75\n", encoding="utf-8")
    entry = SpeechNoiseTable.load(path, SPEECH_VOCAB, floor=1e-3).get("u", 0)
    assert entry.best_posterior == 1e-3
    assert entry.probs.tolist() == [0.25, 0.75]


def test_entry_validation():
    """测试空混淆分布与非正概率"""
    with pytest.raises(ValueError):
        SpeechNoiseEntry(3, 0.5, [], [])
    with pytest.raises(ValueError):
        SpeechNoiseEntry(3, 0.5, [4], [0.0])


# ============================== 语音噪声抽样 ==============================


def test_speech_noise_frequencies():
    """测试抽样频率接近混淆分布"""
    table = simple_table()
    samples = speech_noise(table, "u1", 0, 20_000, np.random.default_rng(0))
    words = np.array([s.word for s in samples])
    for wid, p in zip(table.get("u1", 0).words, [0.5, 0.3, 0.2]):
        assert abs(float(np.mean(words == wid)) - p) < 0.015
    assert {s.log_prob for s in samples if s.word == SPEECH_VOCAB.lookup("a")} == {math.log(0.5)}


def test_speech_noise_redraws_data_word():
    """测试抽到数据词时重抽，且重抽用尽返回 None"""
    table = simple_table()
    a = SPEECH_VOCAB.lookup("a")
    samples = speech_noise(table, "u1", 0, 2_000, np.random.default_rng(1), data_word=a)
    assert all(s.word != a for s in samples)

    only = SpeechNoiseTable(entries={("u", 0): SpeechNoiseEntry(a, 0.9, [a], [1.0])})
    assert speech_noise(only, "u", 0, 1, np.random.default_rng(0), data_word=a, max_redraws=5) is None
    assert speech_noise(table, "u1", 7, 1, np.random.default_rng(0)) is None


def test_speech_noise_provider():
    """测试语音噪声来源：缺少语句 id 或位置时跳过，数据词概率取下限"""
    provider = SpeechNoise(simple_table(), data_floor=0.7)
    rng = np.random.default_rng(0)
    assert provider.draw(3, (0,), None, 0, 1, rng) is None
    assert provider.draw(3, (0,), "u1", 5, 1, rng) is None
    target, samples = provider.draw(SPEECH_VOCAB.lookup("hello"), (0,), "u1", 0, 3, rng)
    assert target == math.log(0.7)
    assert len(samples) == 3
