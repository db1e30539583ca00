"""
NCE 噪声样本

两种噪声来源：
- 文本噪声：从 Katz 模型的条件分布 P(·|h) 中抽词，附带精确的条件对数概率；
- 语音噪声：从高置信度词格夹紧后的混淆集合中抽词，概率为替代词的后验。

两者都实现 training.NoiseProvider 的 ``draw`` 接口。
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from ..config.settings import DATA_POSTERIOR_FLOOR, DEFAULT_CONFIDENCE_THRESHOLD, MAX_NOISE_REDRAWS
from ..exceptions import DataError
from ..utils.file_utils import atomic_open, iter_lines
from ..utils.logger import get_logger
from .corpus import Vocabulary
from .lattice import Lattice, one_best, one_best_confidence, path_words, pinch
from .ngram import KatzLM

Key = Tuple[str, int]


class NoiseSample(NamedTuple):
    """一个噪声词及其自然对数噪声概率"""

    word: int
    log_prob: float


def text_noise(lm: KatzLM, history: Sequence[int], f: int, rng: np.random.Generator) -> List[NoiseSample]:
    """
    从 Katz 条件分布中有放回地抽取 f 个噪声词

    Args:
        lm: Katz 模型
        history: 最近在前的历史
        f: 样本数
        rng: 调用方持有的随机数生成器

    Returns:
        f 个噪声样本，log_prob 与 cond_prob 在该词上的值完全一致
    """
    if f <= 0:
        raise ValueError(f"f 必须为正: {f}")
    draws = lm.sample(history, f, rng)
    log_probs = {int(w): math.log(lm.cond_prob(int(w), history)) for w in np.unique(draws)}
    return [NoiseSample(int(w), log_probs[int(w)]) for w in draws]


class TextNoise:
    """文本噪声来源"""

    def __init__(self, lm: KatzLM):
        self.lm = lm

    def draw(
        self,
        word: int,
        history: Sequence[int],
        utt_id: Optional[str],
        position: int,
        f: int,
        rng: np.random.Generator,
    ) -> Optional[Tuple[float, List[Tuple[int, float]]]]:
        target = math.log(self.lm.cond_prob(word, history))
        return target, [(s.word, s.log_prob) for s in text_noise(self.lm, history, f, rng)]


@dataclass(eq=False)
class SpeechNoiseEntry:
    """一个 1-best 位置的混淆分布"""

    best_word: int
    best_posterior: float
    words: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        self.words = np.asarray(self.words, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.words.size == 0 or self.words.shape != self.probs.shape:
            raise ValueError("混淆分布不能为空，且词与概率一一对应")
        if (self.probs <= 0).any():
            raise ValueError("混淆概率必须为正")
        self.cdf = np.cumsum(self.probs)

    def log_prob(self, index: int) -> float:
        return math.log(float(self.probs[index]))


@dataclass
class SpeechNoiseTable:
    """(语句 id, 位置) -> 混淆分布"""

    entries: Dict[Key, SpeechNoiseEntry] = field(default_factory=dict)
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD
    hypotheses: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    skipped: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: Key) -> bool:
        return key in self.entries

    def get(self, utt_id: str, position: int) -> Optional[SpeechNoiseEntry]:
        return self.entries.get((utt_id, position))

    def save(self, path: Union[str, Path], vocab: Vocabulary) -> None:
        """
        保存为文本：``<utt_id> <position> <1best>:<posterior> <alt>:<posterior> ...``

        替代词的概率为重新归一化后的值，1-best 的概率为原始段内后验。
        """
        with atomic_open(path, "w") as f:
            for (utt_id, position), entry in sorted(self.entries.items()):
                fields = [utt_id, str(position), f"{vocab.id_to_word[entry.best_word]}:{entry.best_posterior!r}"]
                fields.extend(
                    f"{vocab.id_to_word[w]}:{float(p)!r}" for w, p in zip(entry.words, entry.probs)
                )
                f.write(" ".join(fields) + "\n")

    @classmethod
    def load(
        cls, path: Union[str, Path], vocab: Vocabulary, floor: float = DATA_POSTERIOR_FLOOR
    ) -> "SpeechNoiseTable":
        """
        读取语音噪声表；1-best 字段没有后验时取 floor
        """
        table = cls()
        for line_no, line in enumerate(iter_lines(path), 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 4:
                raise DataError(f"{path} 第{line_no}行至少需要一个替代词")
            try:
                position = int(fields[1])
                best, sep, best_post = fields[2].rpartition(":")
                if not sep:
                    best, best_posterior = fields[2], floor
                else:
                    best_posterior = float(best_post)
                words, probs = [], []
                for item in fields[3:]:
                    word, sep, prob = item.rpartition(":")
                    if not sep:
                        raise ValueError(f"替代词缺少后验: {item}")
                    words.append(vocab.lookup(word))
                    probs.append(float(prob))
                table.entries[(fields[0], position)] = SpeechNoiseEntry(
                    vocab.lookup(best), best_posterior, np.array(words), np.array(probs)
                )
            except ValueError as e:
                raise DataError(f"{path} 第{line_no}行格式错误: {e}")
        return table


def _extract(
    item: Tuple[str, Lattice], vocab: Vocabulary, threshold: float
) -> Tuple[str, float, Tuple[str, ...], Dict[int, SpeechNoiseEntry]]:
    utt_id, lattice = item
    best = one_best(lattice)
    confidence = one_best_confidence(lattice, best)
    if confidence < threshold:
        return utt_id, confidence, path_words(best), {}

    entries: Dict[int, SpeechNoiseEntry] = {}
    for position, pinched in pinch(lattice, best).usable_positions():
        merged: Dict[int, float] = {}
        for words, posterior in pinched.confusions:
            wid = vocab.lookup(words[0])
            merged[wid] = merged.get(wid, 0.0) + posterior
        total = math.fsum(merged.values())
        ids = sorted(merged)
        entries[position] = SpeechNoiseEntry(
            best_word=vocab.lookup(pinched.word),
            best_posterior=pinched.best_posterior,
            words=np.array(ids),
            probs=np.array([merged[w] / total for w in ids]),
        )
    return utt_id, confidence, path_words(best), entries


def build_speech_noise(
    lattices: Iterable[Tuple[str, Lattice]],
    vocab: Vocabulary,
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    threads: int = 1,
) -> SpeechNoiseTable:
    """
    从词格构建语音噪声表

    1-best 置信度（1-best 边后验的几何平均）达到阈值的词格才参与：夹紧后
    丢弃被排除的位置，替代词的后验去掉 1-best 自身的质量后重新归一化。

    Args:
        lattices: (语句 id, 词格)
        vocab: 词表，集外词映射为 <unk>
        confidence_threshold: 置信度阈值
        threads: 工作线程数，结果按输入顺序合并

    Returns:
        语音噪声表
    """
    logger = get_logger()
    table = SpeechNoiseTable(confidence_threshold=confidence_threshold)
    items = list(lattices)
    results = Parallel(n_jobs=max(1, threads), prefer="threads")(
        delayed(_extract)(item, vocab, confidence_threshold) for item in items
    )

    for utt_id, confidence, words, entries in results:
        if confidence < confidence_threshold:
            table.skipped.append(utt_id)
            logger.log_skipped_lattice(utt_id, confidence, confidence_threshold)
            continue
        table.hypotheses[utt_id] = words
        for position, entry in entries.items():
            table.entries[(utt_id, position)] = entry
    logger.info(
        f"语音噪声表: {len(table.hypotheses)} 个词格可用，{len(table.skipped)} 个低于置信度阈值，"
        f"{len(table)} 个位置有混淆",
        console=True,
    )
    return table


def speech_noise(
    table: SpeechNoiseTable,
    utt_id: str,
    position: int,
    f: int,
    rng: np.random.Generator,
    data_word: Optional[int] = None,
    max_redraws: int = MAX_NOISE_REDRAWS,
) -> Optional[List[NoiseSample]]:
    """
    从某个位置的混淆分布中抽取 f 个噪声词

    Args:
        table: 语音噪声表
        utt_id: 语句 id
        position: 1-best 中的位置
        f: 样本数
        rng: 随机数生成器
        data_word: 数据词；抽到与之相同的词时重抽
        max_redraws: 单个样本的最大尝试次数

    Returns:
        噪声样本；位置不在表中或重抽次数用尽时返回 None（调用方跳过该词）
    """
    entry = table.get(utt_id, position)
    if entry is None:
        return None
    samples: List[NoiseSample] = []
    for _ in range(f):
        for _ in range(max_redraws):
            index = int(np.searchsorted(entry.cdf, rng.random() * entry.cdf[-1], side="right"))
            index = min(index, len(entry.words) - 1)
            word = int(entry.words[index])
            if word != data_word:
                samples.append(NoiseSample(word, entry.log_prob(index)))
                break
        else:
            return None
    return samples


class SpeechNoise:
    """语音噪声来源"""

    def __init__(
        self,
        table: SpeechNoiseTable,
        data_floor: float = DATA_POSTERIOR_FLOOR,
        max_redraws: int = MAX_NOISE_REDRAWS,
    ):
        self.table = table
        self.data_floor = data_floor
        self.max_redraws = max_redraws

    def draw(
        self,
        word: int,
        history: Sequence[int],
        utt_id: Optional[str],
        position: int,
        f: int,
        rng: np.random.Generator,
    ) -> Optional[Tuple[float, List[Tuple[int, float]]]]:
        if utt_id is None:
            return None
        entry = self.table.get(utt_id, position)
        if entry is None:
            return None
        samples = speech_noise(self.table, utt_id, position, f, rng, word, self.max_redraws)
        if samples is None:
            return None
        target = math.log(max(entry.best_posterior, self.data_floor))
        return target, [(s.word, s.log_prob) for s in samples]
