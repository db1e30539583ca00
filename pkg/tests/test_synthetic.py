"""
合成二元数据实验测试
"""

import math

import numpy as np
import pytest

from nngrams.config.settings import SENT_END, SENT_START
from nngrams.core.synthetic import (
    CONFUSION_WORDS,
    GENERATOR_WORDS,
    UNSEEN_FLOOR,
    BigramGenerator,
    build_rescoring_testset,
    corrupt,
    run_recovery,
    run_rescoring,
)


def test_generator_rows_are_distributions():
    """测试转移矩阵每行之和为 1，且形状或归一化不对时报错"""
    generator = BigramGenerator()
    np.testing.assert_allclose(generator.transitions.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        BigramGenerator(words=("a", "b"), transitions=np.eye(2))
    with pytest.raises(ValueError):
        BigramGenerator(words=("a",), transitions=np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_generator_probabilities():
    """测试条件概率与整句对数概率"""
    generator = BigramGenerator()
    assert generator.prob(SENT_START, "alpha") == 0.40
    assert generator.prob("alpha", SENT_END) == 0.15
    assert generator.prob(SENT_START, SENT_END) == UNSEEN_FLOOR
    assert generator.prob("alpha", "xray") == UNSEEN_FLOOR
    assert generator.sentence_log_prob(["alpha"]) == pytest.approx(math.log(0.40) + math.log(0.15))


def test_sampled_sentences_are_nonempty():
    """测试采样句子非空且只含生成器的词"""
    lines = BigramGenerator().sample_corpus(200, np.random.default_rng(0))
    assert len(lines) == 200
    for line in lines:
        words = line.split()
        assert words and set(words) <= set(GENERATOR_WORDS)


def test_corrupt_replaces_at_least_one_word():
    """测试混淆替换至少替换一个词且长度不变"""
    rng = np.random.default_rng(0)
    for _ in range(50):
        corrupted = corrupt(("alpha", "bravo", "charlie"), rng, rate=0.0)
        assert len(corrupted) == 3
        assert sum(w in CONFUSION_WORDS for w in corrupted) == 1


def test_rescoring_testset_structure():
    """测试合成测试集：参考在 n-best 中，假设不重复且按打分降序"""
    testset = build_rescoring_testset(3, n_utterances=20, nbest_size=4)
    assert testset == build_rescoring_testset(3, n_utterances=20, nbest_size=4)
    for utt_id, reference, entries in testset:
        words = [w for w, _ in entries]
        assert reference in words
        assert len(set(words)) == len(words) <= 4
        scores = [s for _, s in entries]
        assert scores == sorted(scores, reverse=True)


def test_true_distribution_rescoring_beats_first_pass():
    """测试用真实分布插值重打分后 WER 低于一遍解码"""
    reports = run_rescoring(0, weights=(0.0, 0.5), n_utterances=100)
    baseline, rescored = reports[0.0], reports[0.5]
    assert baseline.wer == baseline.first_pass_wer
    assert rescored.oracle_wer == 0.0
    assert rescored.wer < rescored.first_pass_wer


@pytest.mark.slow
def test_recovery_of_bigram_distribution():
    """测试两种输入模式在 20 万句合成语料上训练后，模型打分与真实条件概率高度秩相关，且 f=25 不差于 f=1"""
    results = run_recovery(0, input_modes=("counts_only", "full"), fs=(1, 25), n_sentences=200_000)
    by_run = {(result.input_mode, result.f): result.correlation for result in results}
    for mode in ("counts_only", "full"):
        assert by_run[(mode, 25)] >= 0.9, f"{mode}: {by_run}"
        assert by_run[(mode, 25)] >= by_run[(mode, 1)], f"{mode}: {by_run}"
