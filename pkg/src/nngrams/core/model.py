"""
NN-grams 网络

结构：当前词与 K 个历史词的词向量拼接后进入 ReLu-A，(K+1)×N 的缩放计数
进入 ReLu-B，两者拼接进入 ReLu-C，最后一个仿射单元输出未归一化的对数概率。
没有 softmax，输出可直接作为 NCE 的打分。

权重矩阵一律按 (输入维度, 输出维度) 存放，前向计算为 x @ W + b。
"""

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config.settings import (
    CHECKPOINT_MAGIC,
    DTYPES,
    INPUT_MODES,
    RESCALE_LOG_BASE,
    RESCALE_SCALE,
    ZERO_COUNT_VALUE,
    RunConfig,
)
from ..exceptions import ConfigError, DataError
from ..utils.file_utils import atomic_open
from .corpus import BOS_ID
from .ngram import NGramStore

PARAM_NAMES = ("E", "W_A", "b_A", "W_B", "b_B", "W_C", "b_C", "w_out", "b_out")


@dataclass(frozen=True)
class ModelConfig:
    """网络结构配置"""

    V: int
    d: int
    K: int
    N: int
    H_A: int
    H_B: int
    H_C: int
    input_mode: str = "full"
    dtype: str = "float64"
    rescale_scale: float = RESCALE_SCALE
    rescale_log_base: float = RESCALE_LOG_BASE

    def __post_init__(self) -> None:
        for name in ("V", "d", "K", "N", "H_A", "H_B", "H_C"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ConfigError(f"ModelConfig.{name} 必须为正整数: {value!r}")
        if self.input_mode not in INPUT_MODES:
            raise ConfigError(f"未知输入模式: {self.input_mode}，可选 {INPUT_MODES}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"未知浮点精度: {self.dtype}，可选 {DTYPES}")
        if self.rescale_scale <= 0 or self.rescale_log_base <= 1.0:
            raise ConfigError("计数缩放系数必须为正，对数底必须大于1")

    @property
    def use_embeddings(self) -> bool:
        return self.input_mode != "counts_only"

    @property
    def use_counts(self) -> bool:
        return self.input_mode != "embeddings_only"

    @property
    def c_input(self) -> int:
        """ReLu-C 的输入宽度"""
        return self.H_A * self.use_embeddings + self.H_B * self.use_counts

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        """当前模式下存在的参数及其形状"""
        shapes: Dict[str, Tuple[int, ...]] = {}
        if self.use_embeddings:
            shapes["E"] = (self.V, self.d)
            shapes["W_A"] = ((self.K + 1) * self.d, self.H_A)
            shapes["b_A"] = (self.H_A,)
        if self.use_counts:
            shapes["W_B"] = ((self.K + 1) * self.N, self.H_B)
            shapes["b_B"] = (self.H_B,)
        shapes["W_C"] = (self.c_input, self.H_C)
        shapes["b_C"] = (self.H_C,)
        shapes["w_out"] = (self.H_C,)
        shapes["b_out"] = (1,)
        return shapes

    @classmethod
    def from_run_config(cls, config: RunConfig, vocab_size: Optional[int] = None) -> "ModelConfig":
        """
        从运行配置构造

        Args:
            config: 运行配置
            vocab_size: 词表大小；model.vocab_size 为 0 时必须提供

        Returns:
            网络结构配置
        """
        section = config.section("model")
        V = section["vocab_size"] or vocab_size
        if not V:
            raise ConfigError("model.vocab_size 为 0 时必须提供词表")
        if vocab_size is not None and section["vocab_size"] and section["vocab_size"] != vocab_size:
            raise ConfigError(f"model.vocab_size={section['vocab_size']} 与词表大小 {vocab_size} 不一致")
        return cls(
            V=V,
            d=section["d"],
            K=section["K"],
            N=section["N"],
            H_A=section["H_A"],
            H_B=section["H_B"],
            H_C=section["H_C"],
            input_mode=section["input_mode"],
            dtype=section["dtype"],
            rescale_scale=section["rescale_scale"],
            rescale_log_base=section["rescale_log_base"],
        )


@dataclass(eq=False)
class ModelParams:
    """网络参数；被屏蔽的分支对应字段为 None"""

    config: ModelConfig
    W_C: np.ndarray
    b_C: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    E: Optional[np.ndarray] = None
    W_A: Optional[np.ndarray] = None
    b_A: Optional[np.ndarray] = None
    W_B: Optional[np.ndarray] = None
    b_B: Optional[np.ndarray] = None

    def names(self) -> List[str]:
        """存在的参数名，顺序固定"""
        return [name for name in PARAM_NAMES if getattr(self, name) is not None]

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.names()}

    def copy(self) -> "ModelParams":
        return replace(self, **{name: array.copy() for name, array in self.arrays().items()})

    def zeros_like(self) -> "ModelParams":
        return replace(self, **{name: np.zeros_like(array) for name, array in self.arrays().items()})

    def all_finite(self) -> bool:
        return all(bool(np.isfinite(array).all()) for array in self.arrays().values())

    def validate(self) -> None:
        """校验参数形状与配置一致"""
        expected = self.config.param_shapes()
        for name in PARAM_NAMES:
            array = getattr(self, name)
            if name not in expected:
                if array is not None:
                    raise ConfigError(f"{self.config.input_mode} 模式下不应存在参数 {name}")
                continue
            if array is None or tuple(array.shape) != expected[name]:
                got = None if array is None else tuple(array.shape)
                raise ConfigError(f"参数 {name} 形状为 {got}，应为 {expected[name]}")


@dataclass(eq=False)
class FeatureVector:
    """单个 (词, 历史) 的网络输入"""

    word_ids: np.ndarray
    counts_raw: np.ndarray
    counts_rescaled: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.word_ids = np.asarray(self.word_ids, dtype=np.int64)
        self.counts_raw = np.asarray(self.counts_raw, dtype=np.int64)
        if self.counts_raw.ndim != 2 or self.counts_raw.shape[0] != self.word_ids.shape[0]:
            raise ValueError(
                f"计数矩阵形状 {self.counts_raw.shape} 与词数 {self.word_ids.shape[0]} 不匹配"
            )
        if (self.counts_raw < 0).any():
            raise ValueError("计数不能为负")
        if self.counts_rescaled is None:
            self.counts_rescaled = rescale_counts(self.counts_raw)


def rescale_count(C: int, scale: float = RESCALE_SCALE, base: float = RESCALE_LOG_BASE) -> float:
    """
    计数缩放: C' = scale·log(C)，C = 0 时为 -1

    Args:
        C: 非负整数计数
        scale: 缩放系数
        base: 对数底

    Returns:
        缩放后的值
    """
    if C < 0:
        raise ValueError(f"计数不能为负: {C}")
    if C == 0:
        return ZERO_COUNT_VALUE
    return scale * math.log(C) / math.log(base)


def rescale_counts(
    counts: np.ndarray, scale: float = RESCALE_SCALE, base: float = RESCALE_LOG_BASE
) -> np.ndarray:
    """rescale_count 的逐元素向量化版本"""
    counts = np.asarray(counts)
    logs = np.log(np.maximum(counts, 1).astype(np.float64))
    if base != math.e:
        logs = logs / math.log(base)
    return np.where(counts > 0, scale * logs, ZERO_COUNT_VALUE)


class FeatureBuilder:
    """
    把 (当前词, 最近在前的历史) 转换为 FeatureVector

    计数矩阵第 j 行只依赖 w_{i-j} 之前的词，j >= 1 的行对同一历史的
    所有候选词都相同，因此按历史缓存，噪声样本只需重算第 0 行。
    """

    def __init__(self, config: ModelConfig, store: Optional[NGramStore], cache_size: int = 50_000):
        if config.use_counts:
            if store is None:
                raise ConfigError(f"{config.input_mode} 模式需要计数存储")
            if config.N > store.max_order:
                raise ConfigError(f"model.N={config.N} 超过计数存储的最高阶数 {store.max_order}")
        self.config = config
        self.store = store
        self.cache_size = cache_size
        self._history_rows: Dict[Tuple[int, ...], np.ndarray] = {}

    @property
    def span(self) -> int:
        """计数矩阵用到的历史长度"""
        return self.config.K + self.config.N - 1

    def _padded(self, history: Sequence[int]) -> Tuple[int, ...]:
        span = self.span
        head = tuple(history[:span])
        return head + (BOS_ID,) * (span - len(head))

    def _rows_for_history(self, history: Tuple[int, ...]) -> np.ndarray:
        rows = self._history_rows.get(history)
        if rows is None:
            K, N = self.config.K, self.config.N
            rows = np.zeros((K, N), dtype=np.int64)
            if self.store is not None:
                counts = self.store.counts
                for j in range(1, K + 1):
                    gram: Tuple[int, ...] = ()
                    for n in range(N):
                        gram = (history[j - 1 + n],) + gram
                        rows[j - 1, n] = counts.get(gram, 0)
            if len(self._history_rows) >= self.cache_size:
                self._history_rows.clear()
            self._history_rows[history] = rows
        return rows

    def _word_row(self, word: int, history: Tuple[int, ...]) -> np.ndarray:
        N = self.config.N
        row = np.zeros(N, dtype=np.int64)
        if self.store is not None:
            counts = self.store.counts
            gram: Tuple[int, ...] = (word,)
            row[0] = counts.get(gram, 0)
            for n in range(1, N):
                gram = (history[n - 1],) + gram
                row[n] = counts.get(gram, 0)
        return row

    def build(self, word: int, history: Sequence[int]) -> FeatureVector:
        """
        构造特征

        Args:
            word: 当前词 id
            history: 最近在前的历史，长度不足 K+N-1 时用 <s> 补齐

        Returns:
            特征向量
        """
        cfg = self.config
        if not 0 <= word < cfg.V:
            raise ValueError(f"词 id {word} 超出范围 [0, {cfg.V})")
        padded = self._padded(history)
        raw = np.vstack([self._word_row(word, padded), self._rows_for_history(padded)])
        word_ids = np.array((word,) + padded[: cfg.K], dtype=np.int64)
        return FeatureVector(
            word_ids=word_ids,
            counts_raw=raw,
            counts_rescaled=rescale_counts(raw, cfg.rescale_scale, cfg.rescale_log_base),
        )


def stack_features(features: Sequence[FeatureVector]) -> Tuple[np.ndarray, np.ndarray]:
    """把多个特征堆叠为 (B, K+1) 的词 id 和 (B, K+1, N) 的缩放计数"""
    word_ids = np.stack([feat.word_ids for feat in features])
    counts = np.stack([feat.counts_rescaled for feat in features])
    return word_ids, counts


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """
    初始化参数

    权重和词向量按 U(±√(6/(fan_in+fan_out))) 抽取，偏置为 0；
    相同种子得到逐位相同的参数。

    Args:
        config: 网络结构配置
        seed: 随机种子

    Returns:
        初始参数
    """
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in config.param_shapes().items():
        if len(shape) == 2:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif name == "w_out":
            bound = math.sqrt(6.0 / (shape[0] + 1))
            arrays[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            arrays[name] = np.zeros(shape, dtype=dtype)
    return ModelParams(config=config, **arrays)


def forward_batch(
    params: ModelParams, word_ids: np.ndarray, counts_rescaled: np.ndarray
) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
    """
    批量前向计算

    Args:
        params: 网络参数
        word_ids: (B, K+1) 词 id，当前词在前
        counts_rescaled: (B, K+1, N) 缩放计数

    Returns:
        (B,) 打分，以及反向传播所需的全部中间结果
    """
    cfg = params.config
    dtype = cfg.np_dtype
    word_ids = np.asarray(word_ids, dtype=np.int64)
    B = word_ids.shape[0]
    if word_ids.shape != (B, cfg.K + 1):
        raise ValueError(f"word_ids 形状 {word_ids.shape} 应为 ({B}, {cfg.K + 1})")
    if word_ids.size and (word_ids.min() < 0 or word_ids.max() >= cfg.V):
        raise ValueError(f"词 id 超出范围 [0, {cfg.V})")

    cache: Dict[str, np.ndarray] = {"word_ids": word_ids}
    branches = []
    if cfg.use_embeddings:
        x_A = params.E[word_ids].reshape(B, (cfg.K + 1) * cfg.d)
        z_A = x_A @ params.W_A + params.b_A
        h_A = np.maximum(z_A, 0.0)
        cache.update(x_A=x_A, z_A=z_A)
        branches.append(h_A)
    if cfg.use_counts:
        counts_rescaled = np.asarray(counts_rescaled)
        if counts_rescaled.shape != (B, cfg.K + 1, cfg.N):
            raise ValueError(
                f"counts_rescaled 形状 {counts_rescaled.shape} 应为 ({B}, {cfg.K + 1}, {cfg.N})"
            )
        x_B = counts_rescaled.reshape(B, (cfg.K + 1) * cfg.N).astype(dtype, copy=False)
        z_B = x_B @ params.W_B + params.b_B
        h_B = np.maximum(z_B, 0.0)
        cache.update(x_B=x_B, z_B=z_B)
        branches.append(h_B)

    x_C = np.concatenate(branches, axis=1) if len(branches) > 1 else branches[0]
    z_C = x_C @ params.W_C + params.b_C
    h_C = np.maximum(z_C, 0.0)
    scores = h_C @ params.w_out + params.b_out[0]
    cache.update(x_C=x_C, z_C=z_C, h_C=h_C)
    return scores, cache


def forward(params: ModelParams, feat: FeatureVector) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    单个样本的前向计算

    Args:
        params: 网络参数
        feat: 特征向量

    Returns:
        (打分, 中间结果)
    """
    scores, cache = forward_batch(params, feat.word_ids[None, :], feat.counts_rescaled[None, :, :])
    return float(scores[0]), cache


def parameter_count(config: ModelConfig) -> int:
    """
    参数总数（权重加偏置）

    Args:
        config: 网络结构配置

    Returns:
        当前输入模式下的参数个数
    """
    return sum(int(np.prod(shape, dtype=np.int64)) for shape in config.param_shapes().values())


def nearest_neighbors(params: ModelParams, word: int, k: int) -> List[Tuple[int, float]]:
    """
    词向量空间中的欧氏距离最近邻

    Args:
        params: 网络参数（必须含词向量表）
        word: 查询词 id
        k: 返回个数，须小于 V

    Returns:
        [(id, 距离)]，距离升序，同距离按 id 升序，不含查询词本身
    """
    if params.E is None:
        raise ValueError(f"{params.config.input_mode} 模式没有词向量表")
    V = params.E.shape[0]
    if not 0 <= word < V:
        raise ValueError(f"词 id {word} 超出范围 [0, {V})")
    if not 0 < k < V:
        raise ValueError(f"k 必须在 1..{V - 1} 之间: {k}")
    table = params.E.astype(np.float64)
    distances = np.linalg.norm(table - table[word], axis=1)
    ids = np.arange(V)
    order = np.lexsort((ids, distances))
    order = order[order != word][:k]
    return [(int(i), float(distances[i])) for i in order]


def save_checkpoint(params: ModelParams, path: Union[str, Path]) -> None:
    """
    保存检查点

    格式：魔数行，``key value`` 文本头（以 ``END`` 结束），然后按固定顺序写每个
    参数：两个 uint64 小端的行列数，再是行优先的 float64 小端数据。

    Args:
        params: 网络参数
        path: 输出路径
    """
    cfg = params.config
    header = [f"{f.name} {getattr(cfg, f.name)}" for f in fields(cfg)]
    header.append(f"params {' '.join(params.names())}")
    with atomic_open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(("\n".join(header) + "\nEND\n").encode("utf-8"))
        for name in params.names():
            array = np.asarray(getattr(params, name), dtype="<f8")
            rows = array.shape[0]
            cols = array.shape[1] if array.ndim == 2 else 1
            f.write(np.array([rows, cols], dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(array).tobytes())


def _parse_header_value(name: str, text: str):
    if name in ("input_mode", "dtype"):
        return text.strip()
    if name in ("rescale_scale", "rescale_log_base"):
        return float(text)
    return int(text)


def load_checkpoint(path: Union[str, Path]) -> ModelParams:
    """
    加载检查点并按文本头校验所有参数形状

    Args:
        path: 检查点路径

    Returns:
        网络参数
    """
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"无法读取检查点 {path}: {e}")
    if not blob.startswith(CHECKPOINT_MAGIC + b"\n"):
        raise DataError(f"{path} 不是 NN-grams 检查点")
    end = blob.find(b"\nEND\n")
    if end < 0:
        raise DataError(f"{path} 检查点文本头不完整")

    values: Dict[str, object] = {}
    names: List[str] = []
    config_fields = {f.name for f in fields(ModelConfig)}
    for line in blob[len(CHECKPOINT_MAGIC) + 1 : end].decode("utf-8").splitlines():
        key, _, text = line.partition(" ")
        if key == "params":
            names = text.split()
        elif key in config_fields:
            try:
                values[key] = _parse_header_value(key, text)
            except ValueError:
                raise DataError(f"{path} 检查点文本头中 {key} 的值无效: {text}")
    missing = config_fields - set(values)
    if missing:
        raise DataError(f"{path} 检查点文本头缺少字段: {sorted(missing)}")
    config = ModelConfig(**values)  # type: ignore[arg-type]
    expected = config.param_shapes()
    if names != list(expected):
        raise DataError(f"{path} 参数列表 {names} 与 {config.input_mode} 模式不符")

    offset = end + len(b"\nEND\n")
    arrays: Dict[str, np.ndarray] = {}
    for name in names:
        if offset + 16 > len(blob):
            raise DataError(f"{path} 在参数 {name} 处被截断")
        rows, cols = (int(x) for x in np.frombuffer(blob, dtype="<u8", count=2, offset=offset))
        offset += 16
        shape = expected[name]
        if rows * cols != int(np.prod(shape)) or rows != shape[0]:
            raise DataError(f"{path} 参数 {name} 的维度 {rows}x{cols} 与配置形状 {shape} 不符")
        size = rows * cols
        if offset + 8 * size > len(blob):
            raise DataError(f"{path} 在参数 {name} 处被截断")
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
        offset += 8 * size
        arrays[name] = data.reshape(shape).astype(config.np_dtype)
    if offset != len(blob):
        raise DataError(f"{path} 检查点末尾有多余数据")
    params = ModelParams(config=config, **arrays)
    params.validate()
    return params
