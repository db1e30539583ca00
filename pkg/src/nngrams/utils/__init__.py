"""
工具模块

提供日志与文件操作等实用工具函数
"""

from .file_utils import atomic_open, atomic_write_text, get_file_list, iter_lines, read_lines
from .logger import NNGramsLogger, get_logger, set_logger

__all__ = [
    # file_utils
    "atomic_open",
    "atomic_write_text",
    "get_file_list",
    "iter_lines",
    "read_lines",

    # logger
    "NNGramsLogger",
    "get_logger",
    "set_logger",
]
