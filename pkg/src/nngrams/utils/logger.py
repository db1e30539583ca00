"""
日志管理模块

提供统一的日志记录功能，控制台显示简洁信息，详细信息记录到文件。
控制台输出走 stderr，标准输出只留给各子命令的主要结果。
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional


class NNGramsLogger:
    """NN-grams 专用日志记录器"""

    def __init__(self, run_name: Optional[str] = None, log_dir: Optional[Path] = None):
        """
        初始化日志记录器

        Args:
            run_name: 运行名称（通常是子命令名），用于日志文件命名
            log_dir: 日志目录，None 表示不写日志文件
        """
        self.run_name = run_name
        self.errors: List[str] = []
        self.warnings: List[str] = []
        self.log_file: Optional[Path] = None

        if log_dir is not None:
            self.log_dir = Path(log_dir)
            self.log_dir.mkdir(parents=True, exist_ok=True)
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            self.log_file = self.log_dir / f"{run_name or 'nngrams'}_{timestamp}.log"

        self._setup_logger()

    def _setup_logger(self) -> None:
        """配置日志记录器"""
        self.logger = logging.getLogger(f"nngrams_{self.run_name or 'main'}")
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        # 清除已有的处理器
        for handler in list(self.logger.handlers):
            handler.close()
        self.logger.handlers.clear()

        # 文件处理器 - 记录所有详细信息
        if self.log_file is not None:
            file_handler = logging.FileHandler(self.log_file, encoding="utf-8")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(
                logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            )
            self.logger.addHandler(file_handler)

        # 控制台处理器 - 只显示重要信息
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(logging.Formatter("%(message)s"))
        self.logger.addHandler(console_handler)

    def _echo(self, text: str) -> None:
        print(text, file=sys.stderr)

    def info(self, message: str, console: bool = False) -> None:
        """记录信息"""
        self.logger.info(message)
        if console:
            self._echo(f"ℹ️  {message}")

    def debug(self, message: str) -> None:
        """记录调试信息（仅文件）"""
        self.logger.debug(message)

    def warning(self, message: str, console: bool = False) -> None:
        """记录警告（控制台处理器已会输出 WARNING 级别）"""
        self.warnings.append(message)
        self.logger.warning(message)
        if console:
            self._echo(f"⚠️  {message}")

    def error(self, message: str, console: bool = False) -> None:
        """记录错误"""
        self.errors.append(message)
        self.logger.error(message)
        if console:
            self._echo(f"❌ {message}")

    def success(self, message: str, console: bool = True) -> None:
        """记录成功信息"""
        self.logger.info(f"SUCCESS: {message}")
        if console:
            self._echo(f"✅ {message}")

    def section(self, title: str, console: bool = True) -> None:
        """开始新的处理阶段"""
        separator = "=" * 50
        self.logger.info(f"\n{separator}\n{title}\n{separator}")
        if console:
            self._echo(f"\n=== {title} ===")

    def log_vocabulary_summary(self, size: int, distinct: int, dropped: int) -> None:
        """记录词表构建摘要"""
        self.info(f"词表大小: {size}（语料中不同词 {distinct} 个，截断 {dropped} 个）", console=True)

    def log_count_summary(self, max_order: int, per_order: Dict[int, int], total_tokens: int) -> None:
        """记录 n-gram 计数摘要"""
        self.info(f"n-gram 计数完成: 最高阶 {max_order}，总词例 {total_tokens}", console=True)
        for order in sorted(per_order):
            self.debug(f"  {order}-gram: {per_order[order]} 个")

    def log_katz_summary(
        self, order: int, fallback_orders: List[int], fallback_histories: int, closed_histories: int = 0
    ) -> None:
        """记录 Katz 估计摘要"""
        self.info(f"Katz 模型估计完成: 阶数 {order}")
        for n in fallback_orders:
            self.warning(f"{n}-gram 的 count-of-count 表退化，改用绝对折扣")
        if fallback_histories:
            self.debug(f"  {fallback_histories} 个历史无剩余概率质量，改用绝对折扣")
        if closed_histories:
            self.debug(f"  {closed_histories} 个历史的后继词覆盖全部低阶质量，剩余质量并回已见词")

    def log_training_interval(self, step: int, loss: float, examples: int, wall_ms: int) -> None:
        """记录训练区间损失"""
        self.debug(f"step={step} loss={loss:.6f} examples={examples} wall_ms={wall_ms}")

    def log_skipped_lattice(self, utt_id: str, confidence: float, threshold: float) -> None:
        """记录因置信度不足而跳过的词格"""
        self.debug(f"跳过词格 {utt_id}: 置信度 {confidence:.4f} < 阈值 {threshold:.4f}")

    def get_summary(self) -> dict:
        """获取处理摘要"""
        return {
            "errors": len(self.errors),
            "warnings": len(self.warnings),
            "error_list": self.errors.copy(),
            "warning_list": self.warnings.copy(),
            "log_file": str(self.log_file) if self.log_file else None,
        }

    def print_summary(self) -> None:
        """打印处理摘要"""
        summary = self.get_summary()

        if summary["errors"] > 0:
            self._echo(f"❌ 发现 {summary['errors']} 个错误")
            for error in summary["error_list"][:3]:  # 只显示前3个错误
                self._echo(f"  • {error}")
            if len(summary["error_list"]) > 3:
                self._echo(f"  ... 还有 {len(summary['error_list']) - 3} 个错误")

        if summary["warnings"] > 0:
            self._echo(f"⚠️  发现 {summary['warnings']} 个警告")

        if summary["log_file"]:
            self._echo(f"📄 详细日志已保存到: {summary['log_file']}")


# 全局日志实例
_current_logger: Optional[NNGramsLogger] = None


def get_logger(run_name: Optional[str] = None, log_dir: Optional[Path] = None) -> NNGramsLogger:
    """获取当前日志实例"""
    global _current_logger
    if (
        _current_logger is None
        or (run_name and _current_logger.run_name != run_name)
        or log_dir is not None
    ):
        _current_logger = NNGramsLogger(run_name, log_dir)
    return _current_logger


def set_logger(logger: Optional[NNGramsLogger]) -> None:
    """设置当前日志实例"""
    global _current_logger
    _current_logger = logger
