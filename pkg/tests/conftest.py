"""
测试共用的数据与夹具
"""

import pytest

from nngrams.core.corpus import Vocabulary, count_words, tokenize, vocabulary_from_frequencies
from nngrams.core.lattice import Lattice
from nngrams.core.ngram import count_ngrams
from nngrams.utils.logger import NNGramsLogger, set_logger

TOY_CORPUS = [
    "we want to go",
    "we want to stay",
    "we need to go",
    "they want to go home",
    "go home",
]

# 问候语词格：1-best 为 hello how are you doing
HELLO_EDGES = [
    (0, 1, "hello", -0.5),
    (0, 5, "well", -1.5),
    (5, 1, "o", -1.0),
    (1, 2, "how", -0.2),
    (1, 2, "now", -1.6),
    (2, 3, "are", -0.1),
    (3, 4, "you", -0.1),
    (4, 6, "doing", -0.3),
    (4, 6, "going", -1.2),
]


@pytest.fixture(autouse=True)
def quiet_logger():
    """每个测试使用独立的日志实例，不写日志文件"""
    set_logger(NNGramsLogger("test"))
    yield
    set_logger(None)


@pytest.fixture
def toy_vocab() -> Vocabulary:
    return vocabulary_from_frequencies(count_words(TOY_CORPUS), max_size=100)


@pytest.fixture
def toy_sentences(toy_vocab):
    return [tokenize(line, toy_vocab) for line in TOY_CORPUS]


@pytest.fixture
def toy_store(toy_vocab, toy_sentences):
    return count_ngrams(toy_sentences, toy_vocab, max_order=3)


@pytest.fixture
def hello_lattice() -> Lattice:
    return Lattice.from_edges(0, 6, HELLO_EDGES)


def write_lattice_text(path, start, final, edges):
    """按词格文件格式写出测试词格"""
    lines = ["LATTICE v1", f"START {start}", f"FINAL {final}"]
    lines += [f"E {u} {v} {w} {s!r}" for u, v, w, s in edges]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
