"""
文件处理工具函数

提供原子写入、文件列表、逐行读取等功能。
所有输出文件先写临时文件再改名，中断的运行不会留下截断的产物。
"""

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Iterator, List, Optional, Union

from ..exceptions import DataError

PathLike = Union[str, Path]


@contextmanager
def atomic_open(path: PathLike, mode: str = "w") -> Iterator[IO]:
    """
    以原子方式打开输出文件

    Args:
        path: 目标文件路径
        mode: "w"（文本，UTF-8）或 "wb"（二进制）

    Yields:
        临时文件对象，上下文正常退出时改名为目标文件
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=str(target.parent))
    try:
        if "b" in mode:
            f = os.fdopen(fd, mode)
        else:
            f = os.fdopen(fd, mode, encoding="utf-8", newline="\n")
        with f:
            yield f
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    """
    原子写入文本文件

    Args:
        path: 目标文件路径
        text: 文件内容
    """
    with atomic_open(path, "w") as f:
        f.write(text)


def read_lines(path: PathLike) -> List[str]:
    """
    读取 UTF-8 文本文件的所有行（去掉行尾换行符）

    Args:
        path: 文件路径

    Returns:
        行列表

    Raises:
        DataError: 文件不存在或无法按 UTF-8 解码
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [line.rstrip("\n").rstrip("\r") for line in f]
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"无法读取文件 {path}: {e}")


def iter_lines(path: PathLike) -> Iterator[str]:
    """
    逐行读取 UTF-8 文本文件，适合大语料的流式处理

    Args:
        path: 文件路径

    Yields:
        去掉换行符的行
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            for line in f:
                yield line.rstrip("\n").rstrip("\r")
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"无法读取文件 {path}: {e}")


def get_file_list(directory: PathLike, extensions: Optional[List[str]] = None) -> List[Path]:
    """
    获取指定目录下的文件列表（按文件名排序，保证处理顺序确定）

    Args:
        directory: 目录路径
        extensions: 文件扩展名列表，如 ['.lat']

    Returns:
        符合条件的文件路径列表
    """
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"目录不存在: {directory}")

    file_list = []
    for item in sorted(root.iterdir()):
        if not item.is_file() or item.name.startswith((".", "~")):  # 排除临时文件
            continue
        if extensions is None or item.suffix.lower() in [ext.lower() for ext in extensions]:
            file_list.append(item)
    return file_list
