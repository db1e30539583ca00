"""
NCE 训练

噪声对比估计把语言模型估计变成二分类：区分训练数据中的 (h, w) 与从
已知噪声分布抽取的 (h, w')。数据样本的 logit 为
``NN(w,h) - ln f - ln P_noise(w|h)``，损失是负的对数似然。

本模块实现 NCE 损失与精确反向传播、AdaGrad 更新、训练循环以及
有限差分梯度校验。
"""

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..config.settings import RunConfig
from ..exceptions import ConfigError, DataError, NumericalError
from ..utils.logger import get_logger
from .model import (
    FeatureBuilder,
    FeatureVector,
    ModelConfig,
    ModelParams,
    forward_batch,
    init_params,
    save_checkpoint,
)
from .ngram import NGramStore

Window = Tuple[int, Sequence[int], Optional[str], int]


def nce_posterior(p_data: float, p_noise: float, f: float) -> float:
    """
    样本来自训练数据的后验概率 p_data / (p_data + f·p_noise)

    Args:
        p_data: 模型概率
        p_noise: 噪声概率
        f: 每个数据样本的噪声样本数

    Returns:
        后验概率
    """
    if p_data <= 0 or p_noise <= 0 or f <= 0:
        raise ValueError(f"概率和 f 必须为正: p_data={p_data}, p_noise={p_noise}, f={f}")
    return p_data / (p_data + f * p_noise)


def nce_logit(score: float, f: float, log_noise_prob: float) -> float:
    """NCE logit: score - ln f - log_noise_prob（f 允许为实数）"""
    return score - math.log(f) - log_noise_prob


@dataclass(eq=False)
class TrainingExample:
    """一个数据样本及其噪声样本"""

    target: FeatureVector
    noise: List[Tuple[FeatureVector, float]]
    target_log_noise_prob: float

    def __post_init__(self) -> None:
        if not self.noise:
            raise ValueError("每个训练样本至少需要一个噪声样本")
        if not math.isfinite(self.target_log_noise_prob) or not all(
            math.isfinite(q) for _, q in self.noise
        ):
            raise ValueError("噪声对数概率必须有限")

    @property
    def f(self) -> int:
        return len(self.noise)


@dataclass(eq=False)
class AdaGradState:
    """AdaGrad 累加器"""

    accumulators: Dict[str, np.ndarray]
    lr: float = 0.01
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ModelParams, lr: float = 0.01, eps: float = 1e-8) -> "AdaGradState":
        return cls({name: np.zeros_like(a) for name, a in params.arrays().items()}, lr, eps)


class NoiseProvider(Protocol):
    """噪声来源：为一个数据词给出其噪声对数概率和 f 个噪声样本"""

    def draw(
        self,
        word: int,
        history: Sequence[int],
        utt_id: Optional[str],
        position: int,
        f: int,
        rng: np.random.Generator,
    ) -> Optional[Tuple[float, List[Tuple[int, float]]]]:
        """返回 None 表示跳过该词"""
        ...


@dataclass
class TrainConfig:
    """训练配置"""

    lr: float = 0.01
    batch_size: int = 200
    f: int = 1
    epochs: int = 1
    max_steps: Optional[int] = None
    seed: int = 0
    eps: float = 1e-8
    eval_every: int = 100
    clip_norm: float = 5.0
    plateau_window: int = 10
    plateau_tol: float = 1e-4
    checkpoint_every: int = 0
    init_seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0 or self.batch_size <= 0 or self.f <= 0 or self.epochs <= 0:
            raise ConfigError("lr、batch_size、f、epochs 必须为正")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError(f"max_steps 不能为负: {self.max_steps}")
        if self.eval_every <= 0 or self.plateau_window <= 0:
            raise ConfigError("eval_every 和 plateau_window 必须为正")

    @classmethod
    def from_run_config(cls, config: RunConfig, seed: int) -> "TrainConfig":
        section = config.section("train")
        return cls(
            lr=section["lr"],
            batch_size=section["batch_size"],
            f=section["f"],
            epochs=section["epochs"],
            max_steps=section["max_steps"],
            seed=seed,
            eps=section["eps"],
            eval_every=section["eval_every"],
            clip_norm=section["clip_norm"],
            plateau_window=section["plateau_window"],
            plateau_tol=section["plateau_tol"],
            checkpoint_every=section["checkpoint_every"],
            init_seed=section["init_seed"],
        )


@dataclass
class TrainingLog:
    """训练过程记录"""

    lines: List[str] = field(default_factory=list)
    interval_losses: List[Tuple[int, float]] = field(default_factory=list)
    heldout_losses: List[Tuple[int, float]] = field(default_factory=list)
    steps: int = 0
    examples: int = 0
    skipped_tokens: int = 0
    stop_reason: str = ""


def _stack_batch(batch: Sequence[TrainingExample]):
    """把批内所有数据与噪声特征按固定顺序展开为数组"""
    word_ids, counts, log_noise, log_f, is_data = [], [], [], [], []
    for example in batch:
        lf = math.log(example.f)
        rows = [(example.target, example.target_log_noise_prob, True)]
        rows.extend((feat, q, False) for feat, q in example.noise)
        for feat, q, data in rows:
            word_ids.append(feat.word_ids)
            counts.append(feat.counts_rescaled)
            log_noise.append(q)
            log_f.append(lf)
            is_data.append(data)
    return (
        np.stack(word_ids),
        np.stack(counts),
        np.array(log_noise, dtype=np.float64),
        np.array(log_f, dtype=np.float64),
        np.array(is_data, dtype=bool),
    )


def _nce_forward(params: ModelParams, batch: Sequence[TrainingExample]):
    if not batch:
        raise ValueError("批不能为空")
    word_ids, counts, log_noise, log_f, is_data = _stack_batch(batch)
    scores, cache = forward_batch(params, word_ids, counts)
    logits = scores.astype(np.float64) - log_f - log_noise
    # -log σ(ℓ) = log(1 + e^{-ℓ})，-log(1 - σ(ℓ)) = log(1 + e^{ℓ})
    per_row = np.where(is_data, np.logaddexp(0.0, -logits), np.logaddexp(0.0, logits))
    loss = float(per_row.sum() / len(batch))
    dlogits = np.where(is_data, -expit(-logits), expit(logits)) / len(batch)
    return loss, dlogits, cache


def nce_loss(params: ModelParams, batch: Sequence[TrainingExample]) -> float:
    """批平均 NCE 损失（不求梯度）"""
    return _nce_forward(params, batch)[0]


def backward(params: ModelParams, cache: Dict[str, np.ndarray], dscores: np.ndarray) -> ModelParams:
    """
    从打分梯度反向传播到全部参数

    Args:
        params: 网络参数
        cache: forward_batch 返回的中间结果
        dscores: (B,) 损失对打分的梯度

    Returns:
        与 params 同形状的梯度
    """
    cfg = params.config
    dtype = cfg.np_dtype
    ds = dscores.astype(dtype, copy=False)
    grads: Dict[str, np.ndarray] = {}

    grads["w_out"] = cache["h_C"].T @ ds
    grads["b_out"] = np.array([ds.sum()], dtype=dtype)
    # ReLU 在 0 处的导数取 0
    dz_C = np.outer(ds, params.w_out) * (cache["z_C"] > 0)
    grads["W_C"] = cache["x_C"].T @ dz_C
    grads["b_C"] = dz_C.sum(axis=0)
    dx_C = dz_C @ params.W_C.T

    offset = 0
    if cfg.use_embeddings:
        dz_A = dx_C[:, : cfg.H_A] * (cache["z_A"] > 0)
        offset = cfg.H_A
        grads["W_A"] = cache["x_A"].T @ dz_A
        grads["b_A"] = dz_A.sum(axis=0)
        dx_A = (dz_A @ params.W_A.T).reshape(-1, cfg.K + 1, cfg.d)
        dE = np.zeros_like(params.E)
        np.add.at(dE, cache["word_ids"], dx_A)
        grads["E"] = dE
    if cfg.use_counts:
        dz_B = dx_C[:, offset : offset + cfg.H_B] * (cache["z_B"] > 0)
        grads["W_B"] = cache["x_B"].T @ dz_B
        grads["b_B"] = dz_B.sum(axis=0)

    return ModelParams(config=cfg, **grads)


def nce_loss_and_grad(params: ModelParams, batch: Sequence[TrainingExample]) -> Tuple[float, ModelParams]:
    """
    NCE 损失与梯度

    损失 = 批平均 [-log σ(ℓ_data) - Σ_j log(1 - σ(ℓ_noise_j))]，
    对数 sigmoid 用 logaddexp 计算，|ℓ| 很大时也不会溢出。

    Args:
        params: 网络参数
        batch: 非空训练样本列表

    Returns:
        (损失, 梯度)
    """
    loss, dlogits, cache = _nce_forward(params, batch)
    return loss, backward(params, cache, dlogits)


def global_norm(grads: ModelParams) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.arrays().values()))


def clip_gradients(grads: ModelParams, max_norm: float) -> float:
    """
    按全局范数原地裁剪梯度

    Args:
        grads: 梯度
        max_norm: 范数上限，<= 0 表示不裁剪

    Returns:
        裁剪前的全局范数
    """
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.arrays().values():
            g *= scale
    return norm


def adagrad_step(params: ModelParams, state: AdaGradState, grads: ModelParams) -> None:
    """
    AdaGrad 原地更新: acc += g²；θ -= lr·g / (√acc + eps)

    梯度中有非有限值时整步放弃并抛出 NumericalError。
    """
    grad_arrays = grads.arrays()
    if set(grad_arrays) != set(params.names()):
        raise ValueError(f"梯度参数 {sorted(grad_arrays)} 与模型参数 {params.names()} 不一致")
    for name, g in grad_arrays.items():
        if g.shape != getattr(params, name).shape:
            raise ValueError(f"参数 {name} 的梯度形状 {g.shape} 不匹配")
        if not np.isfinite(g).all():
            raise NumericalError(f"参数 {name} 的梯度出现非有限值，本步已放弃")

    for name, g in grad_arrays.items():
        theta = getattr(params, name)
        acc = state.accumulators[name]
        acc += g * g
        denom = np.sqrt(acc) + state.eps
        # g = 0 且 eps = 0 时分母为 0，此时不更新
        update = np.divide(state.lr * g, denom, out=np.zeros_like(theta), where=denom > 0)
        theta -= update


def make_example(
    builder: FeatureBuilder,
    noise_source: NoiseProvider,
    window: Window,
    f: int,
    rng: np.random.Generator,
) -> Optional[TrainingExample]:
    """
    为一个窗口构造训练样本

    Args:
        builder: 特征构造器
        noise_source: 噪声来源
        window: (当前词, 最近在前的历史, 语句 id, 位置)
        f: 噪声样本数
        rng: 随机数生成器

    Returns:
        训练样本；噪声来源要求跳过时返回 None
    """
    word, history, utt_id, position = window
    drawn = noise_source.draw(word, history, utt_id, position, f, rng)
    if drawn is None:
        return None
    target_log_noise, samples = drawn
    return TrainingExample(
        target=builder.build(word, history),
        noise=[(builder.build(w, history), q) for w, q in samples],
        target_log_noise_prob=target_log_noise,
    )


def _build_examples(
    builder: FeatureBuilder,
    noise_source: NoiseProvider,
    windows: Iterable[Window],
    f: int,
    rng: np.random.Generator,
) -> Tuple[List[TrainingExample], int]:
    examples, skipped = [], 0
    for window in windows:
        example = make_example(builder, noise_source, window, f, rng)
        if example is None:
            skipped += 1
        else:
            examples.append(example)
    return examples, skipped


def _plateaued(losses: List[float], window: int, tol: float) -> bool:
    """最近 window 次评估的平均损失相比前 window 次的下降小于 tol"""
    if len(losses) < 2 * window:
        return False
    recent = float(np.mean(losses[-window:]))
    previous = float(np.mean(losses[-2 * window : -window]))
    return previous - recent < tol


def train(
    config: TrainConfig,
    model_config: ModelConfig,
    data: Iterable[Window],
    store: Optional[NGramStore],
    noise_source: NoiseProvider,
    heldout: Optional[Iterable[Window]] = None,
    log_path: Optional[Union[str, Path]] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
    initial: Optional[ModelParams] = None,
) -> Tuple[ModelParams, TrainingLog]:
    """
    训练 NN-grams 模型

    每轮按种子打乱窗口顺序并重新抽取噪声；在步数上限处停止，或在
    最近 plateau_window 次评估的平滑损失改善小于 plateau_tol 时停止。

    Args:
        config: 训练配置
        model_config: 网络结构配置
        data: 训练窗口 (词, 历史, 语句 id, 位置)
        store: 计数存储（embeddings_only 模式可为 None）
        noise_source: 噪声来源
        heldout: 可选的验证窗口，每次评估时用固定噪声计算损失
        log_path: 训练日志文件（追加写入）
        checkpoint_path: 周期检查点路径
        initial: 初始参数，默认按 init_seed 初始化

    Returns:
        (最终参数, 训练记录)
    """
    logger = get_logger()
    windows = list(data)
    if not windows:
        raise DataError("训练数据为空")

    params = initial.copy() if initial is not None else init_params(model_config, config.init_seed)
    log = TrainingLog()
    if config.max_steps == 0:
        log.stop_reason = "max_steps"
        return params, log

    builder = FeatureBuilder(model_config, store)
    state = AdaGradState.for_params(params, config.lr, config.eps)
    rng = np.random.default_rng(config.seed)

    heldout_examples: List[TrainingExample] = []
    if heldout is not None:
        heldout_examples, _ = _build_examples(
            builder, noise_source, heldout, config.f, np.random.default_rng(config.seed + 1)
        )

    log_file = open(log_path, "a", encoding="utf-8") if log_path is not None else None

    def emit(line: str) -> None:
        log.lines.append(line)
        if log_file is not None:
            log_file.write(line + "\n")
            log_file.flush()

    start = time.perf_counter()
    interval_loss, interval_steps, interval_examples = 0.0, 0, 0
    try:
        for epoch in range(config.epochs):
            order = rng.permutation(len(windows))
            for begin in range(0, len(order), config.batch_size):
                batch_windows = (windows[i] for i in order[begin : begin + config.batch_size])
                batch, skipped = _build_examples(builder, noise_source, batch_windows, config.f, rng)
                log.skipped_tokens += skipped
                if not batch:
                    continue

                loss, grads = nce_loss_and_grad(params, batch)
                clip_gradients(grads, config.clip_norm)
                adagrad_step(params, state, grads)
                log.steps += 1
                log.examples += len(batch)
                interval_loss += loss
                interval_steps += 1
                interval_examples += len(batch)

                if log.steps % config.eval_every == 0:
                    mean_loss = interval_loss / interval_steps
                    wall_ms = int((time.perf_counter() - start) * 1000)
                    emit(f"step={log.steps} loss={mean_loss:.6f} examples={interval_examples} wall_ms={wall_ms}")
                    logger.log_training_interval(log.steps, mean_loss, interval_examples, wall_ms)
                    log.interval_losses.append((log.steps, mean_loss))
                    if heldout_examples:
                        held = nce_loss(params, heldout_examples)
                        log.heldout_losses.append((log.steps, held))
                        logger.info(f"step={log.steps} heldout_loss={held:.6f}")
                    interval_loss, interval_steps, interval_examples = 0.0, 0, 0
                    if _plateaued(
                        [value for _, value in log.interval_losses], config.plateau_window, config.plateau_tol
                    ):
                        log.stop_reason = "plateau"
                        return params, log

                if checkpoint_path is not None and config.checkpoint_every > 0:
                    if log.steps % config.checkpoint_every == 0:
                        save_checkpoint(params, checkpoint_path)

                if config.max_steps is not None and log.steps >= config.max_steps:
                    log.stop_reason = "max_steps"
                    return params, log
            logger.debug(f"第 {epoch + 1} 轮结束，累计 {log.steps} 步")
        log.stop_reason = "epochs"
        return params, log
    finally:
        if interval_steps:
            wall_ms = int((time.perf_counter() - start) * 1000)
            mean_loss = interval_loss / interval_steps
            emit(f"step={log.steps} loss={mean_loss:.6f} examples={interval_examples} wall_ms={wall_ms}")
            log.interval_losses.append((log.steps, mean_loss))
        if log_file is not None:
            log_file.close()
        if log.skipped_tokens:
            logger.info(f"训练中跳过 {log.skipped_tokens} 个没有噪声样本的词")


TINY_CONFIG = ModelConfig(V=7, d=3, K=2, N=2, H_A=4, H_B=3, H_C=4)


def _activation_pattern(cache: Dict[str, np.ndarray]) -> List[np.ndarray]:
    return [cache[key] > 0 for key in ("z_A", "z_B", "z_C") if key in cache]


def random_batch(
    config: ModelConfig, rng: np.random.Generator, batch_size: int = 3, f: int = 2
) -> List[TrainingExample]:
    """构造随机的小批量（梯度校验与测试用）"""

    def feature(word_ids: np.ndarray) -> FeatureVector:
        raw = rng.integers(0, 40, size=(config.K + 1, config.N))
        return FeatureVector(word_ids=word_ids, counts_raw=raw)

    batch = []
    for _ in range(batch_size):
        history = rng.integers(0, config.V, size=config.K)
        target = feature(np.concatenate([[rng.integers(0, config.V)], history]))
        noise = [
            (feature(np.concatenate([[rng.integers(0, config.V)], history])), float(-rng.uniform(0.1, 4.0)))
            for _ in range(f)
        ]
        batch.append(TrainingExample(target, noise, float(-rng.uniform(0.1, 4.0))))
    return batch


def gradient_check(
    model_config: Optional[ModelConfig] = None,
    seed: int = 0,
    epsilon: float = 1e-5,
) -> float:
    """
    用中心差分校验解析梯度

    扰动跨过 ReLU 折点的参数不参与比较；|解析梯度| < 1e-8 时用绝对误差。

    Args:
        model_config: 网络配置，默认使用极小配置
        seed: 随机种子（参数与批数据）
        epsilon: 差分步长

    Returns:
        最大相对误差
    """
    cfg = model_config or TINY_CONFIG
    if cfg.dtype != "float64":
        raise ConfigError("梯度校验只能在 float64 下进行")
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed)
    # 偏置随机化，避免所有单元都卡在同一侧
    for name in ("b_A", "b_B", "b_C", "b_out"):
        bias = getattr(params, name)
        if bias is not None:
            bias[...] = rng.uniform(-0.1, 0.1, size=bias.shape)
    batch = random_batch(cfg, rng)

    _, grads = nce_loss_and_grad(params, batch)
    base_pattern = _activation_pattern(_nce_forward(params, batch)[2])

    def loss_and_pattern() -> Tuple[float, List[np.ndarray]]:
        loss, _, cache = _nce_forward(params, batch)
        return loss, _activation_pattern(cache)

    worst = 0.0
    for name in params.names():
        theta = getattr(params, name)
        analytic_all = getattr(grads, name)
        for index in np.ndindex(theta.shape):
            original = theta[index]
            theta[index] = original + epsilon
            plus, pattern_plus = loss_and_pattern()
            theta[index] = original - epsilon
            minus, pattern_minus = loss_and_pattern()
            theta[index] = original
            crossed = any(
                not np.array_equal(a, b) or not np.array_equal(a, c)
                for a, b, c in zip(base_pattern, pattern_plus, pattern_minus)
            )
            if crossed:
                continue
            numeric = (plus - minus) / (2.0 * epsilon)
            analytic = float(analytic_all[index])
            error = abs(analytic - numeric)
            if abs(analytic) >= 1e-8:
                error /= max(abs(analytic), abs(numeric))
            worst = max(worst, error)
    return worst
