"""
NN-grams 语言模型工具包

这个包提供了结合 n-gram 计数与神经网络的语言模型，包括：
- 词表构建和 n-gram 计数
- Katz 回退模型与文本噪声
- 词格夹紧与语音噪声
- NCE 训练与 N-best 重打分
"""

__version__ = "0.1.0"
__author__ = "NN-grams Team"

from .main import main

__all__ = ["main"]
