"""
N-gram 计数与 Katz 回退语言模型

提供 n-gram 计数、计数矩阵抽取、Katz 回退模型估计、条件概率查询、
按条件分布采样，以及 ARPA 格式的导出与读取。

n-gram 在内部一律按文本顺序存储（(w_{i-1}, w_i)）；对外接口中的历史
按"最近的词在前"传入，与 corpus 模块的约定一致。
"""

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..config.settings import (
    ABSOLUTE_DISCOUNT,
    DEFAULT_GT_CUTOFF,
    KATZ_MAX_REJECTION_ROUNDS,
    KATZ_SAMPLER_CACHE_SIZE,
    NGRAM_STORE_MAGIC,
    NGRAM_STORE_VERSION,
)
from ..exceptions import DataError
from ..utils.file_utils import atomic_open, iter_lines, read_lines
from ..utils.logger import get_logger
from .corpus import BOS_ID, TokenizedSentence, Vocabulary

Gram = Tuple[int, ...]


@dataclass
class NGramStore:
    """1..max_order 阶 n-gram 计数，是 Katz 模型和计数特征的充分统计量"""

    max_order: int
    counts: Dict[Gram, int] = field(default_factory=dict)
    total_tokens: int = 0

    def __post_init__(self) -> None:
        if self.max_order < 1:
            raise ValueError(f"max_order 必须 >= 1: {self.max_order}")

    def add_sentence(self, ids: Sequence[int]) -> None:
        """
        累加一个带边界句子中的所有 n-gram

        Args:
            ids: [<s>, ..., </s>] 形式的 id 序列
        """
        counts = self.counts
        length = len(ids)
        for i in range(length):
            for n in range(1, min(self.max_order, i + 1) + 1):
                gram = tuple(ids[i - n + 1 : i + 1])
                counts[gram] = counts.get(gram, 0) + 1
        self.total_tokens += length

    def lookup(self, gram: Sequence[int]) -> int:
        """
        查询 n-gram 计数

        Args:
            gram: 文本顺序的 id 序列，长度在 1..max_order 之间

        Returns:
            计数，未出现时为 0
        """
        if not 1 <= len(gram) <= self.max_order:
            raise ValueError(f"n-gram 长度 {len(gram)} 超出范围 1..{self.max_order}")
        return self.counts.get(tuple(gram), 0)

    def grams_of_order(self, order: int) -> Iterator[Tuple[Gram, int]]:
        """遍历指定阶数的 n-gram 及计数"""
        for gram, count in self.counts.items():
            if len(gram) == order:
                yield gram, count

    def order_sizes(self) -> Dict[int, int]:
        """每一阶的不同 n-gram 数量"""
        sizes: Counter = Counter(len(gram) for gram in self.counts)
        return {order: sizes.get(order, 0) for order in range(1, self.max_order + 1)}

    def merge(self, other: "NGramStore") -> "NGramStore":
        """
        合并两个计数分片（计数相加，满足结合律）

        Args:
            other: 另一个分片，阶数必须相同

        Returns:
            新的合并结果
        """
        if other.max_order != self.max_order:
            raise ValueError("只能合并阶数相同的计数分片")
        merged = Counter(self.counts)
        merged.update(other.counts)
        return NGramStore(self.max_order, dict(merged), self.total_tokens + other.total_tokens)

    def save(self, path: Union[str, Path]) -> None:
        """
        保存为文本格式：首行 ``NGRAMSTORE v1 <max_order> <total_tokens>``，
        其后每行 ``<count> <id> <id> ...``，按阶数和 id 排序
        """
        with atomic_open(path, "w") as f:
            f.write(f"{NGRAM_STORE_MAGIC} {NGRAM_STORE_VERSION} {self.max_order} {self.total_tokens}\n")
            for gram in sorted(self.counts, key=lambda g: (len(g), g)):
                f.write(f"{self.counts[gram]} {' '.join(map(str, gram))}\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NGramStore":
        """从文本文件加载计数"""
        lines = iter_lines(path)
        header = next(lines, "").split()
        if len(header) != 4 or header[0] != NGRAM_STORE_MAGIC or header[1] != NGRAM_STORE_VERSION:
            raise DataError(f"{path} 不是有效的计数文件")
        try:
            store = cls(int(header[2]), {}, int(header[3]))
            for line_no, line in enumerate(lines, 2):
                fields = line.split()
                if not fields:
                    continue
                gram = tuple(int(x) for x in fields[1:])
                if not 1 <= len(gram) <= store.max_order:
                    raise DataError(f"{path} 第{line_no}行 n-gram 阶数越界")
                store.counts[gram] = int(fields[0])
        except ValueError as e:
            raise DataError(f"{path} 解析失败: {e}")
        return store


def count_ngrams(
    corpus: Iterable[TokenizedSentence],
    vocab: Vocabulary,
    max_order: int,
) -> NGramStore:
    """
    统计语料中 1..max_order 阶的全部 n-gram

    Args:
        corpus: 带边界的句子流
        vocab: 词表（用于校验 id 范围）
        max_order: 最高阶数

    Returns:
        计数存储；<s> 作为一元计数存在，供补齐查询使用
    """
    store = NGramStore(max_order)
    for sentence in corpus:
        if sentence.ids and max(sentence.ids) >= vocab.size:
            raise DataError(f"句子中的 id 超出词表范围: {sentence.ids}")
        store.add_sentence(sentence.ids)
    get_logger().log_count_summary(max_order, store.order_sizes(), store.total_tokens)
    return store


def lookup(store: NGramStore, gram: Sequence[int]) -> int:
    """查询计数，未出现时返回 0"""
    return store.lookup(gram)


def count_matrix(
    store: NGramStore,
    window: Sequence[int],
    N: int,
    K: Optional[int] = None,
) -> np.ndarray:
    """
    抽取 (K+1)×N 的原始计数矩阵

    第 j 行对应 w_{i-j}，第 n 列是以 w_{i-j} 结尾的 (n+1)-gram 的计数。
    按行展开即长度 (K+1)N 的计数向量 c。

    Args:
        store: 计数存储
        window: 当前词在前、随后最近在前的历史；长于 K+1 的部分作为扩展上下文
        N: 计数阶数
        K: 历史长度，默认 len(window)-1

    Returns:
        int64 计数矩阵
    """
    if not 1 <= N <= store.max_order:
        raise ValueError(f"N={N} 超出计数阶数范围 1..{store.max_order}")
    if K is None:
        K = len(window) - 1
    need = K + N
    seq = list(window[:need]) + [BOS_ID] * max(0, need - len(window))
    matrix = np.zeros((K + 1, N), dtype=np.int64)
    counts = store.counts
    for j in range(K + 1):
        gram: Gram = ()
        for n in range(N):
            gram = (seq[j + n],) + gram
            matrix[j, n] = counts.get(gram, 0)
    return matrix


class _SamplerEntry(NamedTuple):
    """某个上下文的已见后继词（按 id 排序）与质量划分"""

    words: np.ndarray
    cdf: np.ndarray
    seen_mass: float
    total_mass: float


@dataclass(eq=False)
class KatzLM:
    """
    Katz 回退语言模型

    抽样沿回退链进行：先在已见后继词上抽，落到剩余质量时递归到低一阶，
    拒绝当前上下文已见的词。不为每个历史构造长度为 V 的分布向量。
    """

    order: int
    vocab_size: int
    unigram: np.ndarray
    prob: Dict[Gram, float] = field(default_factory=dict)
    backoff: Dict[Gram, float] = field(default_factory=dict)
    gt_cutoff: int = DEFAULT_GT_CUTOFF
    discount_modes: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._continuations: Dict[Gram, Tuple[np.ndarray, np.ndarray]] = {}
        self.rebuild_index()

    def rebuild_index(self) -> None:
        """重建历史 -> 后继词的索引，并清空抽样缓存"""
        grouped: Dict[Gram, List[Tuple[int, float]]] = defaultdict(list)
        for gram, p in self.prob.items():
            grouped[gram[:-1]].append((gram[-1], p))
        self._continuations = {
            history: (
                np.array([w for w, _ in items], dtype=np.int64),
                np.array([p for _, p in items], dtype=np.float64),
            )
            for history, items in grouped.items()
        }
        self._unigram_cdf = np.cumsum(self.unigram.astype(np.float64))
        # 每个条目只有已见后继词那么大
        self.sampler_entry = lru_cache(maxsize=KATZ_SAMPLER_CACHE_SIZE)(self._build_sampler_entry)

    def context(self, history: Sequence[int]) -> Gram:
        """
        把最近在前的历史转换为文本顺序的上下文

        Args:
            history: 最近在前的历史，长了截断、短了用 <s> 补齐

        Returns:
            长度为 order-1 的文本顺序元组
        """
        width = self.order - 1
        padded = list(history[:width]) + [BOS_ID] * max(0, width - len(history))
        return tuple(reversed(padded))

    def _prob_text(self, ctx: Gram, word: int) -> float:
        if not ctx:
            return float(self.unigram[word])
        p = self.prob.get(ctx + (word,))
        if p is not None:
            return p
        return self.backoff.get(ctx, 1.0) * self._prob_text(ctx[1:], word)

    def _distribution_text(self, ctx: Gram) -> np.ndarray:
        if not ctx:
            return self.unigram.astype(np.float64, copy=True)
        dist = self.backoff.get(ctx, 1.0) * self._distribution_text(ctx[1:])
        cont = self._continuations.get(ctx)
        if cont is not None:
            dist[cont[0]] = cont[1]
        return dist

    def cond_prob(self, word: int, history: Sequence[int]) -> float:
        """
        条件概率 P(word | history)

        Args:
            word: 预测词 id
            history: 最近在前的历史

        Returns:
            严格为正的概率
        """
        if not 0 <= word < self.vocab_size:
            raise ValueError(f"词 id {word} 超出范围 [0, {self.vocab_size})")
        return self._prob_text(self.context(history), word)

    def distribution(self, history: Sequence[int]) -> np.ndarray:
        """
        整个词表上的条件分布（与 cond_prob 逐元素完全一致）

        Args:
            history: 最近在前的历史

        Returns:
            长度为 V 的新概率向量，不做缓存
        """
        return self._distribution_text(self.context(history))

    def _mass(self, ctx: Gram) -> float:
        if not ctx:
            return float(self._unigram_cdf[-1])
        entry = self.sampler_entry(ctx)
        if entry is not None:
            return entry.total_mass
        return self.backoff.get(ctx, 1.0) * self._mass(ctx[1:])

    def _build_sampler_entry(self, ctx: Gram) -> Optional[_SamplerEntry]:
        cont = self._continuations.get(ctx)
        if cont is None:
            return None
        order = np.argsort(cont[0], kind="stable")
        words = cont[0][order]
        cdf = np.cumsum(cont[1][order])
        lower_seen = math.fsum(self._prob_text(ctx[1:], int(w)) for w in words)
        backoff_mass = self.backoff.get(ctx, 1.0) * max(0.0, self._mass(ctx[1:]) - lower_seen)
        seen_mass = float(cdf[-1])
        return _SamplerEntry(words, cdf, seen_mass, seen_mass + backoff_mass)

    def _sample_text(self, ctx: Gram, size: int, rng: np.random.Generator) -> np.ndarray:
        if not ctx:
            u = rng.random(size) * self._unigram_cdf[-1]
            return np.minimum(np.searchsorted(self._unigram_cdf, u, side="right"), self.vocab_size - 1)
        entry = self.sampler_entry(ctx)
        if entry is None:
            # 没有已见后继词时分布是低阶分布的常数倍
            return self._sample_text(ctx[1:], size, rng)

        out = np.empty(size, dtype=np.int64)
        u = rng.random(size) * entry.total_mass
        seen = u < entry.seen_mass
        picks = np.searchsorted(entry.cdf, u[seen], side="right")
        out[seen] = entry.words[np.minimum(picks, entry.words.size - 1)]

        pending = np.flatnonzero(~seen)
        for _ in range(KATZ_MAX_REJECTION_ROUNDS):
            if pending.size == 0:
                return out
            draws = self._sample_text(ctx[1:], pending.size, rng)
            unseen = ~np.isin(draws, entry.words)
            out[pending[unseen]] = draws[unseen]
            pending = pending[~unseen]
        if pending.size:
            # 低阶质量几乎都落在已见词上，改为一次性按稠密的剩余分布抽
            lower = self._distribution_text(ctx[1:])
            lower[entry.words] = 0.0
            cdf = np.cumsum(lower)
            picks = np.searchsorted(cdf, rng.random(pending.size) * cdf[-1], side="right")
            out[pending] = np.minimum(picks, self.vocab_size - 1)
        return out

    def sample(self, history: Sequence[int], size: int, rng: np.random.Generator) -> np.ndarray:
        """
        按条件分布有放回地采样

        Args:
            history: 最近在前的历史
            size: 样本数
            rng: 调用方持有的随机数生成器

        Returns:
            词 id 数组
        """
        return self._sample_text(self.context(history), size, rng)

    def histories(self) -> List[Gram]:
        """所有有后继词的历史（文本顺序）"""
        return list(self._continuations)


def cond_prob(lm: KatzLM, word: int, history: Sequence[int]) -> float:
    """条件概率 P(word | history)，历史按最近在前传入"""
    return lm.cond_prob(word, history)


def sample_conditional(lm: KatzLM, history: Sequence[int], rng: np.random.Generator) -> int:
    """从 P(·|history) 中抽取一个词"""
    return int(lm.sample(history, 1, rng)[0])


def good_turing_discounts(count_of_counts: Dict[int, int], cutoff: int) -> Optional[Dict[int, float]]:
    """
    计算 Katz 的 Good-Turing 折扣系数 d_r (r = 1..cutoff)

    Args:
        count_of_counts: r -> N_r
        cutoff: 折扣上限 k，计数大于 k 的 n-gram 不打折

    Returns:
        r -> d_r；count-of-count 表退化时返回 None
    """
    n1 = count_of_counts.get(1, 0)
    if n1 == 0:
        return None
    common = (cutoff + 1) * count_of_counts.get(cutoff + 1, 0) / n1
    if common >= 1.0:
        return None
    discounts = {}
    for r in range(1, cutoff + 1):
        n_r = count_of_counts.get(r, 0)
        if n_r == 0:
            continue
        n_next = count_of_counts.get(r + 1, 0)
        if n_next == 0:
            return None
        r_star = (r + 1) * n_next / n_r
        d_r = (r_star / r - common) / (1.0 - common)
        if not 0.0 < d_r <= 1.0:
            return None
        discounts[r] = d_r
    return discounts


def estimate_katz(
    store: NGramStore,
    order: int,
    gt_cutoff: int = DEFAULT_GT_CUTOFF,
    vocab_size: Optional[int] = None,
) -> KatzLM:
    """
    从计数估计 Katz 回退模型

    一元分布为相对频率，未出现的词获得 ε_u = 1/(|V|·total_tokens + |V|) 并整体
    归一化；二元及以上对计数 <= gt_cutoff 的 n-gram 做 Good-Turing 折扣。
    某一阶 count-of-count 表退化时该阶改用 d=0.5 的绝对折扣；某个历史的
    后继计数都超过 gt_cutoff（没有剩余质量）时，该历史单独改用绝对折扣。

    Args:
        store: 计数存储
        order: 模型阶数，不超过 store.max_order
        gt_cutoff: Good-Turing 折扣上限
        vocab_size: 词表大小，默认取计数中最大 id + 1

    Returns:
        估计好的 Katz 模型
    """
    if not 1 <= order <= store.max_order:
        raise ValueError(f"order={order} 超出计数阶数范围 1..{store.max_order}")
    if gt_cutoff < 1:
        raise ValueError(f"gt_cutoff 必须 >= 1: {gt_cutoff}")
    if vocab_size is None:
        vocab_size = 1 + max((max(g) for g in store.counts), default=2)
    V = vocab_size

    # 一元分布: <s> 只作上下文，按未出现词处理
    uni_counts = np.zeros(V, dtype=np.float64)
    for (word,), count in store.grams_of_order(1):
        if word != BOS_ID:
            uni_counts[word] = count
    total = uni_counts.sum()
    if total == 0:
        unigram = np.full(V, 1.0 / V)
    else:
        floor = 1.0 / (V * store.total_tokens + V)
        raw = np.where(uni_counts > 0, uni_counts / total, floor)
        unigram = raw / raw.sum()

    lm = KatzLM(order=order, vocab_size=V, unigram=unigram, gt_cutoff=gt_cutoff)
    lm.discount_modes[1] = "mle"
    fallback_orders: List[int] = []
    fallback_histories = 0
    closed_histories = 0

    for n in range(2, order + 1):
        grouped: Dict[Gram, List[Tuple[int, int]]] = defaultdict(list)
        for gram, count in store.grams_of_order(n):
            if count > 0:
                grouped[gram[:-1]].append((gram[-1], count))
        count_of_counts = Counter(c for items in grouped.values() for _, c in items)
        discounts = good_turing_discounts(count_of_counts, gt_cutoff)
        if discounts is None:
            lm.discount_modes[n] = "absolute"
            fallback_orders.append(n)
        else:
            lm.discount_modes[n] = "good_turing"

        new_probs: Dict[Gram, float] = {}
        new_backoff: Dict[Gram, float] = {}
        for history in sorted(grouped):
            items = sorted(grouped[history])
            history_total = float(sum(c for _, c in items))
            if discounts is not None:
                probs = [
                    (discounts[c] if c <= gt_cutoff else 1.0) * c / history_total for _, c in items
                ]
                leftover = sum(
                    (1.0 - discounts[c]) * c / history_total for _, c in items if c <= gt_cutoff
                )
            else:
                leftover = 0.0
            if discounts is None or leftover <= 1e-12:
                if discounts is not None:
                    fallback_histories += 1
                probs = [(c - ABSOLUTE_DISCOUNT) / history_total for _, c in items]
                leftover = ABSOLUTE_DISCOUNT * len(items) / history_total

            lower_seen = math.fsum(lm._prob_text(history[1:], w) for w, _ in items)
            if 1.0 - lower_seen <= 1e-12:
                # 后继词已覆盖全部低阶质量，剩余质量无处回退，并回已见词
                closed_histories += 1
                seen_total = math.fsum(probs)
                probs = [p / seen_total for p in probs]
                weight = 1.0
            else:
                weight = leftover / (1.0 - lower_seen)
            for (w, _), p in zip(items, probs):
                new_probs[history + (w,)] = p
            new_backoff[history] = weight

        # 当前阶全部估计完才写入，保证回退到的低阶分布已经完整
        lm.prob.update(new_probs)
        lm.backoff.update(new_backoff)

    lm.rebuild_index()
    get_logger().log_katz_summary(order, fallback_orders, fallback_histories, closed_histories)
    return lm


def write_arpa(lm: KatzLM, vocab: Vocabulary, path: Union[str, Path]) -> None:
    """
    导出 ARPA 格式（log10 概率与回退权重）

    Args:
        lm: Katz 模型
        vocab: 词表
        path: 输出路径
    """
    by_order: Dict[int, List[Gram]] = defaultdict(list)
    for gram in lm.prob:
        by_order[len(gram)].append(gram)

    def fmt_bow(gram: Gram) -> str:
        if len(gram) < lm.order and gram in lm.backoff:
            return f"\t{math.log10(lm.backoff[gram]):.10f}"
        return ""

    with atomic_open(path, "w") as f:
        f.write("\n\\data\\\n")
        f.write(f"ngram 1={lm.vocab_size}\n")
        for n in range(2, lm.order + 1):
            f.write(f"ngram {n}={len(by_order[n])}\n")
        f.write("\n\\1-grams:\n")
        for word in range(lm.vocab_size):
            f.write(f"{math.log10(lm.unigram[word]):.10f}\t{vocab.id_to_word[word]}{fmt_bow((word,))}\n")
        for n in range(2, lm.order + 1):
            f.write(f"\n\\{n}-grams:\n")
            for gram in sorted(by_order[n]):
                words = " ".join(vocab.words(gram))
                f.write(f"{math.log10(lm.prob[gram]):.10f}\t{words}{fmt_bow(gram)}\n")
        f.write("\n\\end\\\n")


def read_arpa(path: Union[str, Path], vocab: Vocabulary, gt_cutoff: int = DEFAULT_GT_CUTOFF) -> KatzLM:
    """
    读取 ARPA 格式的回退模型

    词表外的 n-gram 被跳过；ARPA 中缺失的一元词取 <unk> 的概率
    （<unk> 也缺失时取最小的一元概率）。

    Args:
        path: ARPA 文件路径
        vocab: 词表
        gt_cutoff: 记录在模型上的折扣上限（仅作说明）

    Returns:
        Katz 模型
    """
    declared: Dict[int, int] = {}
    entries: Dict[int, List[Tuple[float, Gram, Optional[float]]]] = defaultdict(list)
    section = None
    skipped = 0
    for line_no, raw in enumerate(read_lines(path), 1):
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            section = 0
            continue
        if line == "\\end\\":
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                section = int(line[1:].split("-")[0])
            except ValueError:
                raise DataError(f"{path} 第{line_no}行无法识别的分节: {line}")
            continue
        if section == 0 and line.startswith("ngram "):
            n, count = line[len("ngram "):].split("=")
            declared[int(n)] = int(count)
            continue
        if section is None or section == 0:
            raise DataError(f"{path} 第{line_no}行位于分节之外: {line}")
        fields = line.split()
        if len(fields) < section + 1:
            raise DataError(f"{path} 第{line_no}行字段不足: {line}")
        words = fields[1 : section + 1]
        if any(word not in vocab for word in words):
            skipped += 1
            continue
        bow = float(fields[section + 1]) if len(fields) > section + 1 else None
        entries[section].append((float(fields[0]), tuple(vocab.lookup(w) for w in words), bow))

    if not declared or 1 not in entries:
        raise DataError(f"{path} 缺少 \\data\\ 头或一元分节")
    order = max(declared)
    unigram = np.full(vocab.size, np.nan)
    backoff: Dict[Gram, float] = {}
    prob: Dict[Gram, float] = {}
    for n, items in entries.items():
        for logp, gram, bow in items:
            if n == 1:
                unigram[gram[0]] = 10.0 ** logp
            else:
                prob[gram] = 10.0 ** logp
            if bow is not None:
                backoff[gram] = 10.0 ** bow
    missing = np.isnan(unigram)
    if missing.any():
        fill = unigram[vocab.unk_id] if not missing[vocab.unk_id] else np.nanmin(unigram)
        unigram[missing] = fill
    if skipped:
        get_logger().warning(f"{path}: 跳过 {skipped} 个包含词表外词的 n-gram")
    return KatzLM(
        order=order,
        vocab_size=vocab.size,
        unigram=unigram,
        prob=prob,
        backoff=backoff,
        gt_cutoff=gt_cutoff,
        discount_modes={n: "arpa" for n in range(1, order + 1)},
    )
