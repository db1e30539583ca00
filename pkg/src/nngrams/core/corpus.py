"""
语料处理

负责词表构建、带句子边界的分词以及训练窗口的流式生成。

约定：历史词一律按"最近的词在前"排列（w_{i-1}, w_{i-2}, ...），
句首不足的历史用 <s> 补齐；<s> 只作上下文，从不作为预测词。
"""

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from ..config.settings import SENT_END, SENT_START, SPECIAL_TOKENS
from ..exceptions import ConfigError, DataError
from ..utils.file_utils import atomic_write_text, iter_lines, read_lines
from ..utils.logger import get_logger

Window = Tuple[int, Tuple[int, ...]]

# 特殊词 id（词表构造保证）
BOS_ID = 0
EOS_ID = 1
UNK_ID = 2


@dataclass(frozen=True)
class Vocabulary:
    """词表：特殊词固定占用 id 0/1/2，其余按词频降序编号"""

    id_to_word: Tuple[str, ...]
    word_to_id: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.id_to_word[:3]) != SPECIAL_TOKENS:
            raise DataError(f"词表前三项必须是 {SPECIAL_TOKENS}")
        mapping = {word: idx for idx, word in enumerate(self.id_to_word)}
        if len(mapping) != len(self.id_to_word):
            raise DataError("词表中存在重复词")
        object.__setattr__(self, "word_to_id", mapping)

    @property
    def size(self) -> int:
        return len(self.id_to_word)

    def __len__(self) -> int:
        return len(self.id_to_word)

    def __contains__(self, word: str) -> bool:
        return word in self.word_to_id

    @property
    def bos_id(self) -> int:
        return BOS_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    def lookup(self, word: str) -> int:
        """词 -> id，集外词映射为 <unk>"""
        return self.word_to_id.get(word, self.unk_id)

    def words(self, ids: Iterable[int]) -> List[str]:
        """id 序列 -> 词序列"""
        return [self.id_to_word[i] for i in ids]

    def save(self, path: Union[str, Path]) -> None:
        """保存为每行一个词的文本文件，行号即 id"""
        atomic_write_text(path, "".join(f"{word}\n" for word in self.id_to_word))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        """从词表文件加载"""
        words = [line for line in read_lines(path) if line != ""]
        return cls(tuple(words))


@dataclass(frozen=True)
class TokenizedSentence:
    """以 <s> 开头、</s> 结尾的 id 序列"""

    ids: Tuple[int, ...]

    def __post_init__(self) -> None:
        ids = self.ids
        if len(ids) < 2 or ids[0] != BOS_ID or ids[-1] != EOS_ID:
            raise ValueError("句子必须以 <s> 开头并以 </s> 结尾")
        if BOS_ID in ids[1:] or EOS_ID in ids[:-1]:
            raise ValueError("句子内部不能出现边界符")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def content(self) -> Tuple[int, ...]:
        """去掉边界符的内容词"""
        return self.ids[1:-1]


def count_words(lines: Iterable[str]) -> Counter:
    """
    统计语料中的词频（特殊词本身不计入）

    Args:
        lines: 每行一句、空格分词的文本

    Returns:
        词频 Counter
    """
    freq: Counter = Counter()
    for line in lines:
        freq.update(word for word in line.split() if word not in SPECIAL_TOKENS)
    return freq


def merge_frequencies(*shards: Counter) -> Counter:
    """合并多个分片的词频（满足结合律，截断之前进行）"""
    merged: Counter = Counter()
    for shard in shards:
        merged.update(shard)
    return merged


def vocabulary_from_frequencies(freq: Counter, max_size: int, min_count: int = 1) -> Vocabulary:
    """
    按词频构建词表

    Args:
        freq: 词频
        max_size: 词表最大规模（含3个特殊词）
        min_count: 词频下限

    Returns:
        词表；同频词按字典序升序排列
    """
    if max_size < len(SPECIAL_TOKENS):
        raise ConfigError(f"max_size={max_size} 不足以容纳 {len(SPECIAL_TOKENS)} 个特殊词")
    if min_count < 0:
        raise ConfigError(f"min_count 不能为负: {min_count}")

    candidates = sorted(
        (word for word, count in freq.items() if count >= min_count and count > 0),
        key=lambda word: (-freq[word], word),
    )
    kept = candidates[: max_size - len(SPECIAL_TOKENS)]
    get_logger().log_vocabulary_summary(
        len(SPECIAL_TOKENS) + len(kept), len(freq), len(candidates) - len(kept)
    )
    return Vocabulary(SPECIAL_TOKENS + tuple(kept))


def build_vocabulary(corpus_path: Union[str, Path], max_size: int, min_count: int = 1) -> Vocabulary:
    """
    从语料文件构建词表

    Args:
        corpus_path: UTF-8 语料，每行一句，空格分词
        max_size: 词表最大规模
        min_count: 词频下限

    Returns:
        构建好的词表
    """
    if max_size < len(SPECIAL_TOKENS):
        raise ConfigError(f"max_size={max_size} 不足以容纳 {len(SPECIAL_TOKENS)} 个特殊词")
    return vocabulary_from_frequencies(count_words(iter_lines(corpus_path)), max_size, min_count)


def tokenize(line: str, vocab: Vocabulary) -> TokenizedSentence:
    """
    分词并加上句子边界

    Args:
        line: 一行文本
        vocab: 词表

    Returns:
        [<s>, ..., </s>] 形式的 id 序列，集外词映射为 <unk>
    """
    ids = [vocab.bos_id]
    for word in line.split():
        # 文本中出现的边界符按集外词处理，保持句子内部没有边界符
        ids.append(vocab.unk_id if word in (SENT_START, SENT_END) else vocab.lookup(word))
    ids.append(vocab.eos_id)
    return TokenizedSentence(tuple(ids))


def iter_windows(sentence: TokenizedSentence, K: int) -> Iterator[Window]:
    """
    生成训练窗口

    Args:
        sentence: 带边界的句子
        K: 历史长度

    Yields:
        (当前词 id, 最近在前的 K 个历史词 id)，从第一个内容词到 </s>
    """
    if K < 1:
        raise ValueError(f"K 必须 >= 1: {K}")
    ids = sentence.ids
    bos = ids[0]
    for i in range(1, len(ids)):
        history = tuple(ids[i - j] if i - j >= 0 else bos for j in range(1, K + 1))
        yield ids[i], history


def iter_corpus(corpus_path: Union[str, Path], vocab: Vocabulary) -> Iterator[TokenizedSentence]:
    """流式读取并分词整个语料文件"""
    for line in iter_lines(corpus_path):
        yield tokenize(line, vocab)


class WindowStream:
    """
    可重复迭代的窗口流

    每次迭代都重新从句子生成窗口，供多轮训练使用。历史长度 span
    通常取 K+N-1，使计数矩阵最远一行也能用到真实上下文。
    """

    def __init__(
        self,
        sentences: Sequence[TokenizedSentence],
        span: int,
        utterance_ids: Optional[Sequence[str]] = None,
    ):
        """
        初始化窗口流

        Args:
            sentences: 句子列表
            span: 每个窗口携带的历史长度
            utterance_ids: 与句子一一对应的语句 id（语音噪声训练时使用）
        """
        if utterance_ids is not None and len(utterance_ids) != len(sentences):
            raise ValueError("utterance_ids 与句子数量不一致")
        self.sentences = sentences
        self.span = span
        self.utterance_ids = utterance_ids

    def __iter__(self) -> Iterator[Tuple[int, Tuple[int, ...], Optional[str], int]]:
        """
        Yields:
            (当前词, 历史, 语句 id, 在 1-best 中的位置)，位置从 0 开始，</s> 的位置等于内容词数
        """
        for index, sentence in enumerate(self.sentences):
            utt_id = self.utterance_ids[index] if self.utterance_ids is not None else None
            for position, (word, history) in enumerate(iter_windows(sentence, self.span)):
                yield word, history, utt_id, position

    def __len__(self) -> int:
        return sum(len(sentence) - 1 for sentence in self.sentences)
