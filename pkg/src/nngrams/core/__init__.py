"""
核心功能模块

提供语料与词表、n-gram 计数与 Katz 模型、NN-grams 网络与 NCE 训练、
词格处理、噪声采样以及 N-best 重打分功能
"""

from .corpus import Vocabulary, WindowStream, build_vocabulary, tokenize
from .count_tree import CountTreeManager
from .lattice import Lattice, n_best, one_best, parse_lattice, pinch
from .model import FeatureBuilder, ModelConfig, ModelParams, forward, init_params
from .ngram import KatzLM, NGramStore, count_ngrams, estimate_katz
from .noise import SpeechNoise, SpeechNoiseTable, TextNoise, build_speech_noise
from .rescore import RescoreConfig, evaluate, rescore, wer
from .training import TrainConfig, train

__all__ = [
    "Vocabulary",
    "WindowStream",
    "build_vocabulary",
    "tokenize",
    "CountTreeManager",
    "Lattice",
    "n_best",
    "one_best",
    "parse_lattice",
    "pinch",
    "FeatureBuilder",
    "ModelConfig",
    "ModelParams",
    "forward",
    "init_params",
    "KatzLM",
    "NGramStore",
    "count_ngrams",
    "estimate_katz",
    "SpeechNoise",
    "SpeechNoiseTable",
    "TextNoise",
    "build_speech_noise",
    "RescoreConfig",
    "evaluate",
    "rescore",
    "wer",
    "TrainConfig",
    "train",
]
