"""
合成数据实验

用一个固定的 5 词二元生成器验证整个训练流程：从生成器采样语料，统计计数、
估计 Katz 噪声分布，用 NCE 训练 NN-grams，再比较模型打分与真实对数条件
概率的 Spearman 秩相关。另外提供按噪声数量、输入模式对比的实验，以及
通过替换参考词构造的合成重打分测试集。
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from ..config.settings import SENT_END, SENT_START
from ..utils.logger import get_logger
from .corpus import Vocabulary, WindowStream, count_words, tokenize, vocabulary_from_frequencies
from .lattice import NBestEntry
from .model import FeatureBuilder, ModelConfig, ModelParams, forward_batch, stack_features
from .ngram import count_ngrams, estimate_katz
from .noise import TextNoise
from .rescore import EvalReport, RescoreConfig, Words, evaluate
from .training import TrainConfig, TrainingLog, train

GENERATOR_WORDS = ("alpha", "bravo", "charlie", "delta", "echo")

# 行: 前一个词 (<s>, alpha..echo)；列: 下一个词 (alpha..echo, </s>)
GENERATOR_TRANSITIONS = np.array(
    [
        [0.40, 0.25, 0.15, 0.12, 0.08, 0.00],
        [0.05, 0.45, 0.20, 0.10, 0.05, 0.15],
        [0.30, 0.05, 0.05, 0.35, 0.10, 0.15],
        [0.10, 0.10, 0.05, 0.05, 0.50, 0.20],
        [0.25, 0.30, 0.10, 0.05, 0.05, 0.25],
        [0.15, 0.05, 0.40, 0.10, 0.05, 0.25],
    ]
)

# 合成重打分测试集里用来替换参考词的混淆词，生成器从不产生它们
CONFUSION_WORDS = ("xray", "yankee", "zulu")
UNSEEN_FLOOR = 1e-6


@dataclass(frozen=True)
class BigramGenerator:
    """已知真实分布的二元语言生成器"""

    words: Tuple[str, ...] = GENERATOR_WORDS
    transitions: np.ndarray = GENERATOR_TRANSITIONS

    def __post_init__(self) -> None:
        n = len(self.words)
        if self.transitions.shape != (n + 1, n + 1):
            raise ValueError(f"转移矩阵形状应为 ({n + 1}, {n + 1})")
        if not np.allclose(self.transitions.sum(axis=1), 1.0):
            raise ValueError("转移矩阵每行之和必须为 1")

    @property
    def contexts(self) -> Tuple[str, ...]:
        return (SENT_START,) + self.words

    @property
    def outcomes(self) -> Tuple[str, ...]:
        return self.words + (SENT_END,)

    def prob(self, prev: str, word: str) -> float:
        """P(word | prev)，生成器之外的词取 UNSEEN_FLOOR"""
        if prev not in self.contexts or word not in self.outcomes:
            return UNSEEN_FLOOR
        p = float(self.transitions[self.contexts.index(prev), self.outcomes.index(word)])
        return p if p > 0 else UNSEEN_FLOOR

    def sample_sentence(self, rng: np.random.Generator, max_len: int = 50) -> List[str]:
        words: List[str] = []
        state = 0
        while len(words) < max_len:
            nxt = int(rng.choice(len(self.outcomes), p=self.transitions[state]))
            if nxt == len(self.words):
                break
            words.append(self.words[nxt])
            state = nxt + 1
        return words

    def sample_corpus(self, n_sentences: int, rng: np.random.Generator) -> List[str]:
        """采样 n 个句子（每句至少一个词由第一行转移保证）"""
        return [" ".join(self.sample_sentence(rng)) for _ in range(n_sentences)]

    def sentence_log_prob(self, words: Sequence[str]) -> float:
        """含 </s> 的句子自然对数概率"""
        prev = SENT_START
        total = []
        for word in list(words) + [SENT_END]:
            total.append(math.log(self.prob(prev, word)))
            prev = word
        return math.fsum(total)

    def true_log_conditionals(self, vocab: Vocabulary) -> Dict[Tuple[int, int], float]:
        """所有 (前一个词 id, 预测词 id) 的真实对数条件概率（只含非零转移）"""
        table = {}
        for i, prev in enumerate(self.contexts):
            for j, word in enumerate(self.outcomes):
                if self.transitions[i, j] > 0:
                    table[(vocab.lookup(prev), vocab.lookup(word))] = math.log(self.transitions[i, j])
        return table


def model_scores_for_pairs(
    params: ModelParams, builder: FeatureBuilder, pairs: Sequence[Tuple[int, int]]
) -> np.ndarray:
    """对每个 (前一个词, 预测词) 打分；更早的历史用 <s> 补齐"""
    features = [builder.build(word, (prev,)) for prev, word in pairs]
    scores, _ = forward_batch(params, *stack_features(features))
    return scores.astype(np.float64)


def rank_correlation(
    params: ModelParams, builder: FeatureBuilder, generator: BigramGenerator, vocab: Vocabulary
) -> float:
    """模型打分与真实对数条件概率的 Spearman 秩相关"""
    truth = generator.true_log_conditionals(vocab)
    pairs = sorted(truth)
    scores = model_scores_for_pairs(params, builder, pairs)
    rho, _ = spearmanr(scores, [truth[p] for p in pairs])
    return float(rho)


@dataclass
class RecoveryResult:
    """一次合成训练的结果"""

    input_mode: str
    f: int
    correlation: float
    log: TrainingLog


def run_recovery(
    seed: int,
    input_modes: Sequence[str] = ("counts_only", "full"),
    fs: Sequence[int] = (25,),
    n_sentences: int = 20_000,
    max_steps: int = 1500,
    batch_size: int = 50,
    lr: float = 0.05,
    generator: Optional[BigramGenerator] = None,
) -> List[RecoveryResult]:
    """
    合成分布恢复实验

    每个 (输入模式, f) 组合都在同一份采样语料上独立训练，用 Katz 二元模型
    作为文本噪声分布。

    Args:
        seed: 随机种子（语料、初始化、噪声）
        input_modes: 输入模式列表
        fs: 噪声样本数列表
        n_sentences: 采样句子数
        max_steps: 每次训练的步数上限
        batch_size: 批大小
        lr: 学习率
        generator: 生成器，默认固定的 5 词生成器

    Returns:
        每个组合的秩相关
    """
    logger = get_logger()
    generator = generator or BigramGenerator()
    rng = np.random.default_rng(seed)
    lines = generator.sample_corpus(n_sentences, rng)
    vocab = vocabulary_from_frequencies(count_words(lines), max_size=len(generator.words) + 3)
    sentences = [tokenize(line, vocab) for line in lines]
    store = count_ngrams(sentences, vocab, max_order=3)
    noise = TextNoise(estimate_katz(store, order=2, vocab_size=vocab.size))

    results = []
    for mode in input_modes:
        for f in fs:
            model_config = ModelConfig(
                V=vocab.size, d=4, K=2, N=2, H_A=16, H_B=16, H_C=16, input_mode=mode
            )
            config = TrainConfig(
                lr=lr,
                batch_size=batch_size,
                f=f,
                epochs=100,
                max_steps=max_steps,
                seed=seed,
                eval_every=100,
                plateau_window=5,
                init_seed=seed,
            )
            stream = WindowStream(sentences, model_config.K + model_config.N - 1)
            params, log = train(config, model_config, stream, store, noise)
            rho = rank_correlation(params, FeatureBuilder(model_config, store), generator, vocab)
            logger.info(f"合成恢复: mode={mode} f={f} spearman={rho:.4f} steps={log.steps}")
            results.append(RecoveryResult(mode, f, rho, log))
    return results


def corrupt(words: Sequence[str], rng: np.random.Generator, rate: float = 0.3) -> Tuple[str, ...]:
    """按比例把词替换为混淆词（至少替换一个）"""
    out = list(words)
    positions = [i for i in range(len(out)) if rng.random() < rate] or [int(rng.integers(len(out)))]
    for i in positions:
        out[i] = CONFUSION_WORDS[int(rng.integers(len(CONFUSION_WORDS)))]
    return tuple(out)


def build_rescoring_testset(
    seed: int,
    n_utterances: int = 100,
    nbest_size: int = 5,
    generator: Optional[BigramGenerator] = None,
) -> List[Tuple[str, Words, List[NBestEntry]]]:
    """
    合成重打分测试集

    每句的 n-best 由参考本身和若干替换了混淆词的版本组成，一遍解码打分为
    随机值，因此一遍解码的最优假设经常不是参考。

    Returns:
        (语句 id, 参考, n-best)，n-best 按一遍解码打分降序
    """
    generator = generator or BigramGenerator()
    rng = np.random.default_rng(seed)
    testset = []
    for index in range(n_utterances):
        reference: Words = ()
        while not reference:
            reference = tuple(generator.sample_sentence(rng))
        hyps = {reference}
        attempts = 0
        while len(hyps) < nbest_size and attempts < 20 * nbest_size:
            hyps.add(corrupt(reference, rng))
            attempts += 1
        entries = [(words, float(rng.normal(0.0, 1.0))) for words in sorted(hyps)]
        entries.sort(key=lambda item: -item[1])
        testset.append((f"utt{index:04d}", reference, entries))
    return testset


def run_rescoring(
    seed: int,
    weights: Sequence[float] = (0.0, 0.5),
    n_utterances: int = 100,
    nbest_size: int = 5,
    generator: Optional[BigramGenerator] = None,
) -> Dict[float, EvalReport]:
    """
    用生成器自身的真实分布重打分合成测试集

    Returns:
        每个插值权重对应的评估报告
    """
    generator = generator or BigramGenerator()
    testset = build_rescoring_testset(seed, n_utterances, nbest_size, generator)
    reports = {}
    for weight in weights:
        config = RescoreConfig(weight=weight, n=nbest_size)
        reports[weight] = evaluate(testset, generator.sentence_log_prob, config)
        get_logger().info(f"合成重打分: weight={weight} {reports[weight].report_line()}")
    return reports
