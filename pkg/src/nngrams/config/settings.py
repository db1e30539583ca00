"""
项目配置设置

包含所有项目的配置参数和常量定义，以及运行配置文件的加载与校验。

配置文件为扁平的 ``key = value`` 文本，键带有分节前缀（如 ``model.d = 256``）。
加载顺序：内置默认值 -> 配置文件 -> ``--set key=value`` 覆盖 -> 命令行显式参数。
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from ..exceptions import ConfigError, DataError

# 获取项目根目录 (src layout: src/nngrams/config/settings.py -> 根目录)
PROJECT_ROOT = Path(__file__).parent.parent.parent.parent

# 特殊词
SENT_START = "<s>"
SENT_END = "</s>"
UNK = "<unk>"
SPECIAL_TOKENS = (SENT_START, SENT_END, UNK)

# 计数缩放: C' = scale * log(C)，C = 0 时为 ZERO_COUNT_VALUE
RESCALE_SCALE = 0.1
RESCALE_LOG_BASE = math.e
ZERO_COUNT_VALUE = -1.0

# Katz 回退
DEFAULT_GT_CUTOFF = 5
ABSOLUTE_DISCOUNT = 0.5
KATZ_SAMPLER_CACHE_SIZE = 4096
KATZ_MAX_REJECTION_ROUNDS = 64

# 语音噪声
DEFAULT_CONFIDENCE_THRESHOLD = 0.8
DATA_POSTERIOR_FLOOR = 1e-6
MAX_NOISE_REDRAWS = 100

# 文件格式标识
NGRAM_STORE_MAGIC = "NGRAMSTORE"
NGRAM_STORE_VERSION = "v1"
LATTICE_MAGIC = "LATTICE"
LATTICE_VERSION = "v1"
CHECKPOINT_MAGIC = b"NNGRAMS1"

INPUT_MODES = ("full", "embeddings_only", "counts_only")
NOISE_TYPES = ("text", "speech")
RESCORE_MODELS = ("nngrams", "katz6")
DTYPES = ("float64", "float32")

# 路径配置（日志目录在首次写日志时才创建）
PATHS = {
    "logs": Path("logs"),
    "production_config": Path(__file__).parent / "production.cfg",
}


def _positive(value: Any) -> bool:
    return value > 0


def _non_negative(value: Any) -> bool:
    return value >= 0


def _probability(value: Any) -> bool:
    return 0.0 <= value <= 1.0


def _one_of(choices: Tuple[str, ...]) -> Callable[[Any], bool]:
    def check(value: Any) -> bool:
        return value in choices

    return check


# 配置项定义: 键 -> (类型, 默认值, 校验函数, 说明)
# 类型为 "int" / "float" / "str" / "optional_int"
CONFIG_SCHEMA: Dict[str, Tuple[str, Any, Callable[[Any], bool], str]] = {
    "corpus.max_vocab": ("int", 2_000_000, lambda v: v >= 3, "词表最大规模，至少容纳3个特殊词"),
    "corpus.min_count": ("int", 1, _non_negative, "词频下限"),
    "ngram.max_order": ("int", 6, _positive, "计数的最高阶数"),
    "ngram.katz_order": ("int", 5, _positive, "Katz 模型阶数"),
    "ngram.gt_cutoff": ("int", DEFAULT_GT_CUTOFF, _positive, "Good-Turing 折扣上限"),
    "model.vocab_size": ("int", 0, _non_negative, "词表大小，0 表示取自词表文件"),
    "model.d": ("int", 256, _positive, "词向量维度"),
    "model.K": ("int", 9, _positive, "历史词数"),
    "model.N": ("int", 6, _positive, "计数阶数"),
    "model.H_A": ("int", 1024, _positive, "ReLu-A 宽度"),
    "model.H_B": ("int", 256, _positive, "ReLu-B 宽度"),
    "model.H_C": ("int", 1024, _positive, "ReLu-C 宽度"),
    "model.input_mode": ("str", "full", _one_of(INPUT_MODES), "输入模式"),
    "model.dtype": ("str", "float64", _one_of(DTYPES), "浮点精度"),
    "model.rescale_scale": ("float", RESCALE_SCALE, _positive, "计数缩放系数"),
    "model.rescale_log_base": ("float", RESCALE_LOG_BASE, lambda v: v > 1.0, "计数缩放对数底"),
    "train.lr": ("float", 0.01, _positive, "AdaGrad 学习率"),
    "train.batch_size": ("int", 200, _positive, "批大小"),
    "train.f": ("int", 1, _positive, "每个样本的噪声样本数"),
    "train.epochs": ("int", 1, _positive, "训练轮数"),
    "train.max_steps": ("optional_int", None, _non_negative, "最大步数，none 表示不限"),
    "train.eps": ("float", 1e-8, _non_negative, "AdaGrad 稳定项"),
    "train.eval_every": ("int", 100, _positive, "评估间隔（步）"),
    "train.clip_norm": ("float", 5.0, _non_negative, "全局梯度范数裁剪，0 表示关闭"),
    "train.plateau_window": ("int", 10, _positive, "收敛判定窗口（评估次数）"),
    "train.plateau_tol": ("float", 1e-4, _non_negative, "收敛判定阈值"),
    "train.checkpoint_every": ("int", 0, _non_negative, "检查点间隔，0 表示关闭"),
    "train.noise": ("str", "text", _one_of(NOISE_TYPES), "噪声类型"),
    "train.init_seed": ("int", 0, _non_negative, "参数初始化种子"),
    "noise.confidence_threshold": ("float", DEFAULT_CONFIDENCE_THRESHOLD, _probability, "1-best 置信度阈值"),
    "noise.max_redraws": ("int", MAX_NOISE_REDRAWS, _positive, "重抽次数上限"),
    "noise.data_floor": ("float", DATA_POSTERIOR_FLOOR, _probability, "数据词后验下限"),
    "rescore.weight": ("float", 0.5, _probability, "插值权重 λ"),
    "rescore.model": ("str", "nngrams", _one_of(RESCORE_MODELS), "重打分模型"),
    "rescore.n": ("int", 150, _positive, "N-best 数量"),
    "run.seed": ("optional_int", None, _non_negative, "随机种子"),
    "run.threads": ("int", 1, _positive, "工作线程数"),
}


def _convert(key: str, raw: Any) -> Any:
    """
    将原始值转换为配置项声明的类型

    Args:
        key: 配置键
        raw: 原始值（字符串或已是目标类型）

    Returns:
        转换后的值
    """
    kind = CONFIG_SCHEMA[key][0]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "optional_int":
            return None if text.lower() in ("none", "") else int(text)
        if kind == "float":
            if text == "e":
                return math.e
            return float(text)
    except ValueError:
        raise ConfigError(f"配置项 {key} 的值无法解析: {raw!r}")
    return text


@dataclass
class RunConfig:
    """运行配置：各模块配置项的并集"""

    values: Dict[str, Any] = field(default_factory=dict)
    source: Optional[Path] = None

    def __getitem__(self, key: str) -> Any:
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"未知配置项: {key}")
        return self.values.get(key, CONFIG_SCHEMA[key][1])

    def set(self, key: str, raw: Any) -> None:
        """设置单个配置项（带类型转换，不做范围校验）"""
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"未知配置项: {key}")
        self.values[key] = _convert(key, raw)

    def section(self, name: str) -> Dict[str, Any]:
        """
        获取某一分节的全部配置

        Args:
            name: 分节名，如 "model"

        Returns:
            去掉前缀后的键值字典
        """
        prefix = f"{name}."
        return {
            key[len(prefix):]: self[key]
            for key in CONFIG_SCHEMA
            if key.startswith(prefix)
        }

    def validate(self) -> None:
        """校验全部配置项，任一失败即抛出 ConfigError"""
        errors: List[str] = []
        for key, (kind, _, check, description) in CONFIG_SCHEMA.items():
            value = self[key]
            if value is None:
                continue
            if kind in ("int", "optional_int") and not isinstance(value, int):
                errors.append(f"{key} 应为整数: {value!r}")
            elif kind == "float" and not isinstance(value, (int, float)):
                errors.append(f"{key} 应为数值: {value!r}")
            elif not check(value):
                errors.append(f"{key} 取值无效 ({description}): {value!r}")
        if errors:
            raise ConfigError("配置校验失败: " + "; ".join(errors))


def parse_config_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """
    解析 key = value 格式的配置文本

    Args:
        lines: 配置文件的各行
        source: 来源名称，用于错误信息

    Returns:
        键到原始字符串值的字典
    """
    parsed: Dict[str, str] = {}
    for line_no, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source} 第{line_no}行缺少 '=': {line.rstrip()}")
        key, value = (part.strip() for part in text.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{source} 第{line_no}行包含未知配置项: {key}")
        parsed[key] = value
    return parsed


def load_run_config(
    config_path: Optional[Path] = None,
    overrides: Optional[Iterable[str]] = None,
) -> RunConfig:
    """
    加载运行配置

    Args:
        config_path: 配置文件路径，None 表示只用默认值
        overrides: 形如 "key=value" 的覆盖项

    Returns:
        已校验的运行配置
    """
    config = RunConfig(source=config_path)
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                lines = f.readlines()
        except OSError as e:
            raise DataError(f"无法读取配置文件 {config_path}: {e}")
        for key, value in parse_config_lines(lines, str(config_path)).items():
            config.set(key, value)

    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"覆盖项格式应为 key=value: {item}")
        key, value = item.split("=", 1)
        config.set(key.strip(), value)

    config.validate()
    return config


def load_production_config() -> RunConfig:
    """
    加载随包发布的生产规模参考配置

    Returns:
        参考配置；文件缺失时使用内置的同值配置
    """
    try:
        return load_run_config(PATHS["production_config"])
    except DataError:
        # 如果配置文件不存在，使用内置的参考值
        config = RunConfig()
        for key, value in PRODUCTION_DEFAULTS.items():
            config.set(key, value)
        config.validate()
        return config


PRODUCTION_DEFAULTS = {
    "model.vocab_size": 2_000_000,
    "model.d": 256,
    "model.K": 9,
    "model.N": 6,
    "model.H_A": 1024,
    "model.H_B": 256,
    "model.H_C": 1024,
    "model.input_mode": "full",
    "train.lr": 0.01,
    "train.batch_size": 200,
    "train.f": 1,
    "rescore.weight": 0.5,
    "rescore.n": 150,
    "ngram.katz_order": 5,
    "ngram.max_order": 6,
}
