"""
N-best 重打分与 WER 评估

重打分用固定权重的对数线性插值：
``combined = (1-λ)·base_score + λ·rescore_lm``，base_score 为一遍解码的总路径打分。
语料级 WER 为全部 (S+D+I) 之和除以参考词总数，而不是逐句 WER 的平均。
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed

from ..config.settings import RESCORE_MODELS, RunConfig
from ..exceptions import ConfigError, DataError
from ..utils.file_utils import read_lines
from ..utils.logger import get_logger
from .corpus import Vocabulary, iter_windows, tokenize
from .lattice import NBestEntry, read_nbest
from .model import FeatureBuilder, ModelParams, forward_batch, stack_features
from .ngram import KatzLM, NGramStore

Words = Tuple[str, ...]
Scorer = Callable[[Words], float]


@dataclass
class Hypothesis:
    """n-best 中的一条假设"""

    words: Words
    base_score: float
    rescore_lm: float = 0.0
    combined: float = float("nan")


@dataclass(frozen=True)
class RescoreConfig:
    """重打分配置"""

    weight: float = 0.5
    model: str = "nngrams"
    n: int = 150

    def __post_init__(self) -> None:
        if not 0.0 <= self.weight <= 1.0:
            raise ConfigError(f"插值权重必须在 [0, 1] 内: {self.weight}")
        if self.model not in RESCORE_MODELS:
            raise ConfigError(f"未知重打分模型: {self.model}，可选 {RESCORE_MODELS}")
        if self.n <= 0:
            raise ConfigError(f"n 必须为正: {self.n}")

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "RescoreConfig":
        section = config.section("rescore")
        return cls(weight=section["weight"], model=section["model"], n=section["n"])


def score_hypothesis_nngrams(
    params: ModelParams,
    store: Optional[NGramStore],
    vocab: Vocabulary,
    words: Sequence[str],
    K: Optional[int] = None,
    N: Optional[int] = None,
    builder: Optional[FeatureBuilder] = None,
) -> float:
    """
    NN-grams 对一条假设的打分：所有位置（含 </s>）前向打分之和

    Args:
        params: 网络参数
        store: 计数存储
        vocab: 词表（与模型共享）
        words: 词序列
        K, N: 用于核对模型配置，缺省时取模型配置
        builder: 复用的特征构造器

    Returns:
        未归一化的对数打分
    """
    cfg = params.config
    if (K is not None and K != cfg.K) or (N is not None and N != cfg.N):
        raise ConfigError(f"K={K}, N={N} 与模型配置 K={cfg.K}, N={cfg.N} 不一致")
    if cfg.V != vocab.size:
        raise ConfigError(f"模型词表大小 {cfg.V} 与词表 {vocab.size} 不一致")
    builder = builder or FeatureBuilder(cfg, store)
    sentence = tokenize(" ".join(words), vocab)
    features = [builder.build(w, h) for w, h in iter_windows(sentence, builder.span)]
    scores, _ = forward_batch(params, *stack_features(features))
    return math.fsum(float(s) for s in scores)


def score_hypothesis_katz(lm: KatzLM, vocab: Vocabulary, words: Sequence[str]) -> float:
    """Katz 模型下的句子自然对数概率（含 </s>，句首用 <s> 补齐）"""
    sentence = tokenize(" ".join(words), vocab)
    span = max(1, lm.order - 1)
    return math.fsum(math.log(lm.cond_prob(w, h)) for w, h in iter_windows(sentence, span))


def rescore(nbest: Sequence[Hypothesis], model_scores: Sequence[float], weight: float) -> List[Hypothesis]:
    """
    插值重排序

    Args:
        nbest: 一遍解码顺序的假设
        model_scores: 每条假设的重打分模型打分
        weight: λ

    Returns:
        按 combined 降序的新列表；并列时保持原顺序。λ=0 时就是原顺序。
    """
    if len(model_scores) != len(nbest):
        raise ValueError("每条假设都需要一个重打分模型打分")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"插值权重必须在 [0, 1] 内: {weight}")
    rescored = []
    for hyp, score in zip(nbest, model_scores):
        # 端点单独处理，避免 0·inf
        if weight == 0.0:
            combined = hyp.base_score
        elif weight == 1.0:
            combined = score
        else:
            combined = (1.0 - weight) * hyp.base_score + weight * score
        rescored.append(Hypothesis(hyp.words, hyp.base_score, score, combined))
    return sorted(rescored, key=lambda h: -h.combined)


@dataclass
class WerResult:
    """单句的编辑距离统计"""

    rate: float
    subs: int
    dels: int
    ins: int
    ref_len: int
    error: bool = False

    @property
    def errors(self) -> int:
        return self.subs + self.dels + self.ins


def wer(reference: Sequence[str], hypothesis: Sequence[str]) -> WerResult:
    """
    单位代价的最小编辑距离对齐

    回溯时优先替换/匹配，其次删除，最后插入，因此等价对齐中替换优先于一删一插。

    Args:
        reference: 参考词序列
        hypothesis: 假设词序列

    Returns:
        WER 与 S/D/I 计数；参考为空而假设非空时 rate 为 nan 且 error 为 True
    """
    R, H = len(reference), len(hypothesis)
    d = np.zeros((R + 1, H + 1), dtype=np.int64)
    d[:, 0] = np.arange(R + 1)
    d[0, :] = np.arange(H + 1)
    for i in range(1, R + 1):
        for j in range(1, H + 1):
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            d[i, j] = min(d[i - 1, j - 1] + cost, d[i - 1, j] + 1, d[i, j - 1] + 1)

    subs = dels = ins = 0
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if reference[i - 1] == hypothesis[j - 1] else 1
            if d[i, j] == d[i - 1, j - 1] + cost:
                subs += cost
                i, j = i - 1, j - 1
                continue
        if i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1

    if R == 0:
        return WerResult(float("nan") if H else 0.0, subs, dels, ins, 0, error=H > 0)
    return WerResult((subs + dels + ins) / R * 100.0, subs, dels, ins, R)


def format_rate(rate: float) -> str:
    return str(round(rate, 2))


@dataclass
class UtteranceResult:
    """单句评估结果"""

    utt_id: str
    reference: Words
    hypothesis: Words
    result: WerResult
    first_pass: WerResult
    oracle: WerResult
    missing: bool = False


def _corpus_rate(errors: int, words: int) -> float:
    return errors / words * 100.0 if words else 0.0


@dataclass
class EvalReport:
    """语料级评估报告"""

    utterances: List[UtteranceResult] = field(default_factory=list)

    def _sum(self, attr: str) -> Tuple[int, int, int, int]:
        results = [getattr(u, attr) for u in self.utterances]
        return (
            sum(r.subs for r in results),
            sum(r.dels for r in results),
            sum(r.ins for r in results),
            sum(r.ref_len for r in results),
        )

    @property
    def totals(self) -> Tuple[int, int, int, int]:
        return self._sum("result")

    @property
    def wer(self) -> float:
        subs, dels, ins, words = self.totals
        return _corpus_rate(subs + dels + ins, words)

    @property
    def first_pass_wer(self) -> float:
        subs, dels, ins, words = self._sum("first_pass")
        return _corpus_rate(subs + dels + ins, words)

    @property
    def oracle_wer(self) -> float:
        subs, dels, ins, words = self._sum("oracle")
        return _corpus_rate(subs + dels + ins, words)

    def report_line(self) -> str:
        """机器可读的汇总行"""
        subs, dels, ins, words = self.totals
        return f"WER={format_rate(self.wer)} S={subs} D={dels} I={ins} N={words}"

    def summary(self) -> str:
        """文本摘要"""
        missing = sum(u.missing for u in self.utterances)
        lines = [
            f"语句数: {len(self.utterances)}（缺少 n-best: {missing}）",
            f"一遍解码 WER: {format_rate(self.first_pass_wer)}",
            f"n-best oracle WER: {format_rate(self.oracle_wer)}",
            f"重打分后 WER: {format_rate(self.wer)}",
            self.report_line(),
        ]
        return "\n".join(lines)


def _evaluate_one(
    item: Tuple[str, Words, Optional[Sequence[NBestEntry]]],
    scorer: Scorer,
    config: RescoreConfig,
) -> UtteranceResult:
    utt_id, reference, nbest = item
    if not nbest:
        missing = WerResult(100.0 if reference else 0.0, 0, len(reference), 0, len(reference))
        return UtteranceResult(utt_id, reference, (), missing, missing, missing, missing=True)

    hyps = [Hypothesis(tuple(words), score) for words, score in list(nbest)[: config.n]]
    if config.weight == 0.0:
        model_scores = [0.0] * len(hyps)
    else:
        model_scores = [scorer(h.words) for h in hyps]
    ranked = rescore(hyps, model_scores, config.weight)
    results = [wer(reference, h.words) for h in hyps]
    oracle = min(results, key=lambda r: r.errors)
    top = ranked[0].words
    return UtteranceResult(utt_id, reference, top, wer(reference, top), results[0], oracle)


def evaluate(
    testset: Sequence[Tuple[str, Words, Optional[Sequence[NBestEntry]]]],
    scorer: Scorer,
    config: RescoreConfig,
    threads: int = 1,
) -> EvalReport:
    """
    重打分每个 n-best，取最优假设并累计语料级 WER

    Args:
        testset: (语句 id, 参考词序列, n-best 或 None)
        scorer: 重打分模型，把词序列映射为对数打分
        config: 重打分配置
        threads: 工作线程数，结果按输入顺序合并

    Returns:
        评估报告；缺少 n-best 的语句按参考长度全部计为删除
    """
    logger = get_logger()
    results = Parallel(n_jobs=max(1, threads), prefer="threads")(
        delayed(_evaluate_one)(item, scorer, config) for item in testset
    )
    report = EvalReport(results)
    for utterance in results:
        if utterance.missing:
            logger.warning(f"语句 {utterance.utt_id} 缺少 n-best，按全部删除计入")
        elif utterance.result.error:
            logger.warning(f"语句 {utterance.utt_id} 的参考为空")
    return report


def read_testset(path: Union[str, Path]) -> List[Tuple[str, Words]]:
    """读取测试集：每行 ``<utt_id>\\t<参考句>``"""
    items: List[Tuple[str, Words]] = []
    for line_no, line in enumerate(read_lines(path), 1):
        if not line.strip():
            continue
        utt_id, sep, reference = line.partition("\t")
        if not sep or not utt_id.strip():
            raise DataError(f"{path} 第{line_no}行应为 '<utt_id>\\t<reference>'")
        items.append((utt_id.strip(), tuple(reference.split())))
    return items


def load_testset(
    testset_path: Union[str, Path], nbest_dir: Union[str, Path]
) -> List[Tuple[str, Words, Optional[List[NBestEntry]]]]:
    """
    读取测试集及每句的 n-best 文件（``<nbest_dir>/<utt_id>.nbest``）

    Returns:
        (语句 id, 参考, n-best)；文件不存在时 n-best 为 None
    """
    items = []
    for utt_id, reference in read_testset(testset_path):
        nbest_path = Path(nbest_dir) / f"{utt_id}.nbest"
        nbest = read_nbest(nbest_path) if nbest_path.is_file() else None
        items.append((utt_id, reference, nbest))
    return items
