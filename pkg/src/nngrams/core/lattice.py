"""
词格

词格是带打分边的有向无环词图。本模块负责词格文件的读写与校验、
1-best 与 n-best 路径提取、前向后向边后验，以及相对 1-best 的词格
夹紧（pinching）。

文件格式（UTF-8 文本）::

    LATTICE v1
    START <node>
    FINAL <node>
    E <from> <to> <word> <log_score>

log_score 为自然对数。
"""

import heapq
import math
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from scipy.special import logsumexp

from ..config.settings import LATTICE_MAGIC, LATTICE_VERSION
from ..exceptions import LatticeError
from ..utils.file_utils import atomic_open, read_lines

# 浮点打分比较的容差，差值在此以内视为并列
SCORE_TIE_TOL = 1e-9

NO_CONFUSIONS = "no_confusions"
MULTIWORD_ALIGNMENT = "multiword_alignment"


class Edge(NamedTuple):
    """词格中的一条边"""

    index: int
    src: int
    dst: int
    word: str
    score: float


NBestEntry = Tuple[Tuple[str, ...], float]


def _ties(a: float, b: float) -> bool:
    return abs(a - b) <= SCORE_TIE_TOL * max(1.0, abs(a), abs(b))


@dataclass(eq=False)
class Lattice:
    """经过校验、按拓扑序排列的词格"""

    start: int
    final: int
    edges: List[Edge]
    graph: nx.MultiDiGraph = field(repr=False)
    order: List[int] = field(repr=False)

    @classmethod
    def from_edges(
        cls, start: int, final: int, edges: Iterable[Tuple[int, int, str, float]], source: str = "<lattice>"
    ) -> "Lattice":
        """
        由边列表构造并校验词格

        Args:
            start: 起始节点
            final: 终止节点
            edges: (from, to, word, log_score)
            source: 来源名称，用于错误信息

        Returns:
            词格

        Raises:
            LatticeError: 有环、存在悬空节点、起止节点不合法
        """
        edge_list = [Edge(i, int(u), int(v), str(w), float(s)) for i, (u, v, w, s) in enumerate(edges)]
        if start == final:
            raise LatticeError(f"{source}: START 与 FINAL 不能是同一节点")
        graph = nx.MultiDiGraph()
        graph.add_node(start)
        graph.add_node(final)
        for edge in edge_list:
            if edge.src < 0 or edge.dst < 0:
                raise LatticeError(f"{source}: 节点 id 必须非负: {edge}")
            if not math.isfinite(edge.score):
                raise LatticeError(f"{source}: 边打分必须有限: {edge}")
            graph.add_edge(edge.src, edge.dst, key=edge.index, edge=edge)

        if not nx.is_directed_acyclic_graph(graph):
            raise LatticeError(f"{source}: 词格中存在环")
        if graph.in_degree(start) > 0:
            raise LatticeError(f"{source}: START 节点 {start} 有入边")
        if graph.out_degree(final) > 0:
            raise LatticeError(f"{source}: FINAL 节点 {final} 有出边")
        # 无环图中，除起止节点外每个节点都有入边和出边，等价于每条边都在某条完整路径上
        for node in graph.nodes:
            if node != final and graph.out_degree(node) == 0:
                raise LatticeError(f"{source}: 节点 {node} 没有出边（悬空节点）")
            if node != start and graph.in_degree(node) == 0:
                raise LatticeError(f"{source}: 节点 {node} 没有入边（悬空节点）")

        order = list(nx.lexicographical_topological_sort(graph))
        return cls(start=start, final=final, edges=edge_list, graph=graph, order=order)

    @property
    def nodes(self) -> List[int]:
        return self.order

    def out_edges(self, node: int) -> List[Edge]:
        """节点的出边，按边序号排列"""
        return sorted((data["edge"] for _, _, data in self.graph.out_edges(node, data=True)), key=lambda e: e.index)

    def in_edges(self, node: int) -> List[Edge]:
        """节点的入边，按边序号排列"""
        return sorted((data["edge"] for _, _, data in self.graph.in_edges(node, data=True)), key=lambda e: e.index)


def parse_lattice_lines(lines: Iterable[str], source: str = "<lattice>") -> Lattice:
    """从文本行解析词格"""
    start: Optional[int] = None
    final: Optional[int] = None
    edges: List[Tuple[int, int, str, float]] = []
    seen_header = False
    for line_no, raw in enumerate(lines, 1):
        fields = raw.split()
        if not fields:
            continue
        if not seen_header:
            if fields != [LATTICE_MAGIC, LATTICE_VERSION]:
                raise LatticeError(f"{source} 第{line_no}行: 缺少 '{LATTICE_MAGIC} {LATTICE_VERSION}' 头")
            seen_header = True
            continue
        try:
            if fields[0] == "START" and len(fields) == 2:
                if start is not None:
                    raise LatticeError(f"{source} 第{line_no}行: START 重复")
                start = int(fields[1])
            elif fields[0] == "FINAL" and len(fields) == 2:
                if final is not None:
                    raise LatticeError(f"{source} 第{line_no}行: FINAL 重复")
                final = int(fields[1])
            elif fields[0] == "E" and len(fields) == 5:
                edges.append((int(fields[1]), int(fields[2]), fields[3], float(fields[4])))
            else:
                raise LatticeError(f"{source} 第{line_no}行无法识别: {raw.strip()}")
        except ValueError as e:
            raise LatticeError(f"{source} 第{line_no}行数值错误: {e}")
    if not seen_header:
        raise LatticeError(f"{source}: 文件为空")
    if start is None or final is None:
        raise LatticeError(f"{source}: 缺少 START 或 FINAL")
    return Lattice.from_edges(start, final, edges, source)


def parse_lattice(path: Union[str, Path]) -> Lattice:
    """
    读取并校验词格文件

    Args:
        path: 词格文件路径

    Returns:
        拓扑排序后的词格
    """
    return parse_lattice_lines(read_lines(path), str(path))


def write_lattice(lattice: Lattice, path: Union[str, Path]) -> None:
    """按词格文件格式写出"""
    with atomic_open(path, "w") as f:
        f.write(f"{LATTICE_MAGIC} {LATTICE_VERSION}\n")
        f.write(f"START {lattice.start}\nFINAL {lattice.final}\n")
        for edge in lattice.edges:
            f.write(f"E {edge.src} {edge.dst} {edge.word} {edge.score!r}\n")


def path_words(path: Sequence[Edge]) -> Tuple[str, ...]:
    return tuple(edge.word for edge in path)


def path_score(path: Sequence[Edge]) -> float:
    return math.fsum(edge.score for edge in path)


def iter_paths(lattice: Lattice) -> Iterator[List[Edge]]:
    """深度优先枚举全部 START→FINAL 路径（仅用于小词格）"""
    stack: List[Tuple[int, List[Edge]]] = [(lattice.start, [])]
    while stack:
        node, prefix = stack.pop()
        if node == lattice.final:
            yield prefix
            continue
        for edge in reversed(lattice.out_edges(node)):
            stack.append((edge.dst, prefix + [edge]))


def _best_to_final(lattice: Lattice) -> Dict[int, Tuple[float, Tuple[str, ...], Optional[Edge]]]:
    """
    每个节点到 FINAL 的最优后缀

    后缀打分相同时取字典序较小的词序列；从 START 出发的完整路径共享前缀，
    因此比较后缀即等价于比较完整词序列。
    """
    best: Dict[int, Tuple[float, Tuple[str, ...], Optional[Edge]]] = {lattice.final: (0.0, (), None)}
    for node in reversed(lattice.order):
        if node == lattice.final:
            continue
        choice: Optional[Tuple[float, Tuple[str, ...], Edge]] = None
        for edge in lattice.out_edges(node):
            tail_score, tail_words, _ = best[edge.dst]
            score = edge.score + tail_score
            words = (edge.word,) + tail_words
            if choice is None:
                choice = (score, words, edge)
            elif _ties(score, choice[0]):
                if words < choice[1]:
                    choice = (score, words, edge)
            elif score > choice[0]:
                choice = (score, words, edge)
        assert choice is not None
        best[node] = choice
    return best


def one_best(lattice: Lattice) -> List[Edge]:
    """
    最高总打分的 START→FINAL 路径

    Args:
        lattice: 词格

    Returns:
        路径上的边；打分并列时取字典序较小的词序列
    """
    best = _best_to_final(lattice)
    path: List[Edge] = []
    node = lattice.start
    while node != lattice.final:
        edge = best[node][2]
        if edge is None:
            raise LatticeError("词格中没有完整路径")
        path.append(edge)
        node = edge.dst
    return path


def n_best(lattice: Lattice, n: int) -> List[NBestEntry]:
    """
    按总打分降序的前 n 条不同词序列

    以"到 FINAL 的最优打分"为精确启发式做最佳优先搜索，完整路径按总打分
    从高到低依次弹出；同一词序列只保留最高分的一条。

    Args:
        lattice: 词格
        n: 需要的条数，词格路径不足时返回全部

    Returns:
        [(词序列, 总打分)]，打分降序，并列时词序列字典序升序
    """
    if n <= 0:
        raise ValueError(f"n 必须为正: {n}")
    heuristic = {node: value[0] for node, value in _best_to_final(lattice).items()}
    tie = count()
    heap: List[Tuple[float, Tuple[str, ...], int, int, Tuple[Edge, ...]]] = [
        (-heuristic[lattice.start], (), next(tie), lattice.start, ())
    ]
    found: Dict[Tuple[str, ...], float] = {}
    cutoff: Optional[float] = None
    while heap:
        priority, words, _, node, path = heapq.heappop(heap)
        if cutoff is not None and not _ties(-priority, cutoff) and -priority < cutoff:
            break
        if node == lattice.final:
            if words not in found:
                found[words] = path_score(path)
                if len(found) == n:
                    # 继续弹出与第 n 条并列的候选，保证并列时结果确定
                    cutoff = -priority
            continue
        g = -priority - heuristic[node]
        for edge in lattice.out_edges(node):
            g_next = g + edge.score
            heapq.heappush(
                heap,
                (-(g_next + heuristic[edge.dst]), words + (edge.word,), next(tie), edge.dst, path + (edge,)),
            )
    ranked = sorted(found.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:n]


def write_nbest(entries: Sequence[NBestEntry], path: Union[str, Path]) -> None:
    """写出 n-best 文件：每行 ``<rank> <total_log_score> <word ...>``"""
    with atomic_open(path, "w") as f:
        for rank, (words, score) in enumerate(entries, 1):
            f.write(f"{rank} {score!r} {' '.join(words)}\n")


def read_nbest(path: Union[str, Path]) -> List[NBestEntry]:
    """读取 n-best 文件，保持文件中的顺序"""
    entries: List[NBestEntry] = []
    for line_no, raw in enumerate(read_lines(path), 1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) < 2:
            raise LatticeError(f"{path} 第{line_no}行字段不足")
        try:
            int(fields[0])
            score = float(fields[1])
        except ValueError:
            raise LatticeError(f"{path} 第{line_no}行的序号或打分无效: {raw.strip()}")
        entries.append((tuple(fields[2:]), score))
    return entries


def forward_backward(lattice: Lattice) -> Tuple[Dict[int, float], Dict[int, float]]:
    """
    对数域前向后向

    Returns:
        (α, β)：α[v] 为 START 到 v 全部路径打分的 log-sum-exp，β[v] 为 v 到 FINAL 的
    """
    alpha: Dict[int, float] = {lattice.start: 0.0}
    for node in lattice.order:
        if node == lattice.start:
            continue
        alpha[node] = float(logsumexp([alpha[e.src] + e.score for e in lattice.in_edges(node)]))
    beta: Dict[int, float] = {lattice.final: 0.0}
    for node in reversed(lattice.order):
        if node == lattice.final:
            continue
        beta[node] = float(logsumexp([e.score + beta[e.dst] for e in lattice.out_edges(node)]))
    return alpha, beta


def edge_posteriors(lattice: Lattice) -> np.ndarray:
    """
    边后验概率

    Args:
        lattice: 词格

    Returns:
        按边序号索引的后验数组：exp(α(from) + score + β(to) - log Z)
    """
    alpha, beta = forward_backward(lattice)
    log_z = alpha[lattice.final]
    return np.array([math.exp(alpha[e.src] + e.score + beta[e.dst] - log_z) for e in lattice.edges])


def path_counts(lattice: Lattice) -> Tuple[Dict[int, int], Dict[int, int]]:
    """每个节点的前向与后向路径数（精确整数）"""
    forward: Dict[int, int] = {lattice.start: 1}
    for node in lattice.order:
        if node != lattice.start:
            forward[node] = sum(forward[e.src] for e in lattice.in_edges(node))
    backward: Dict[int, int] = {lattice.final: 1}
    for node in reversed(lattice.order):
        if node != lattice.final:
            backward[node] = sum(backward[e.dst] for e in lattice.out_edges(node))
    return forward, backward


def cut_nodes(lattice: Lattice) -> List[int]:
    """所有完整路径都经过的节点，按拓扑序"""
    forward, backward = path_counts(lattice)
    total = forward[lattice.final]
    return [node for node in lattice.order if forward[node] * backward[node] == total]


@dataclass
class PinchedPosition:
    """1-best 中一个词的混淆信息"""

    word: str
    best_posterior: float
    confusions: List[Tuple[Tuple[str, ...], float]] = field(default_factory=list)
    excluded: Optional[str] = None

    @property
    def usable(self) -> bool:
        return self.excluded is None


@dataclass
class PinchedAlignment:
    """相对 1-best 的对齐结果，每个 1-best 词一个位置"""

    positions: List[PinchedPosition]

    def __len__(self) -> int:
        return len(self.positions)

    def usable_positions(self) -> List[Tuple[int, PinchedPosition]]:
        return [(i, p) for i, p in enumerate(self.positions) if p.usable]


def _validate_path(lattice: Lattice, best: Sequence[Edge]) -> None:
    node = lattice.start
    for edge in best:
        if edge.index >= len(lattice.edges) or lattice.edges[edge.index] != edge or edge.src != node:
            raise LatticeError(f"给定路径不是词格中的路径: {edge}")
        node = edge.dst
    if node != lattice.final or not best:
        raise LatticeError("给定路径没有从 START 到达 FINAL")


def _segment_sequences(
    lattice: Lattice, begin: int, end: int, alpha: Dict[int, float], beta: Dict[int, float], log_z: float
) -> Dict[Tuple[str, ...], float]:
    """两个相邻切点之间所有子路径的词序列及其后验（按词序列合并）"""
    log_mass: Dict[Tuple[str, ...], List[float]] = {}
    stack: List[Tuple[int, Tuple[str, ...], float]] = [(begin, (), 0.0)]
    while stack:
        node, words, score = stack.pop()
        if node == end:
            log_mass.setdefault(words, []).append(alpha[begin] + score + beta[end] - log_z)
            continue
        for edge in lattice.out_edges(node):
            stack.append((edge.dst, words + (edge.word,), score + edge.score))
    return {words: float(np.exp(logsumexp(values))) for words, values in log_mass.items()}


def pinch(lattice: Lattice, best: Sequence[Edge]) -> PinchedAlignment:
    """
    把词格夹紧到 1-best 上

    切点（所有路径都经过的节点）把词格切成若干段，每段对应 1-best 中的一段词。
    覆盖单个 1-best 词的段收集其它单词替代及段内后验；以下情况排除该位置：
    段内只有 1-best 本身（no_confusions）；段覆盖多个 1-best 词，或替代是多词
    序列（multiword_alignment）。

    Args:
        lattice: 词格
        best: 词格中的一条完整路径，通常为 one_best 的结果

    Returns:
        每个 1-best 词一个位置的对齐结果
    """
    _validate_path(lattice, best)
    alpha, beta = forward_backward(lattice)
    log_z = alpha[lattice.final]
    cuts = set(cut_nodes(lattice))

    positions: List[PinchedPosition] = []
    segment: List[Edge] = []
    segment_start = lattice.start
    for edge in best:
        segment.append(edge)
        if edge.dst not in cuts:
            continue
        sequences = _segment_sequences(lattice, segment_start, edge.dst, alpha, beta, log_z)
        best_words = path_words(segment)
        best_posterior = sequences.get(best_words, 0.0)
        alternatives = sorted(
            ((words, p) for words, p in sequences.items() if words != best_words),
            key=lambda item: (-item[1], item[0]),
        )
        if len(segment) > 1:
            positions.extend(
                PinchedPosition(e.word, best_posterior, excluded=MULTIWORD_ALIGNMENT) for e in segment
            )
        elif not alternatives:
            positions.append(PinchedPosition(edge.word, best_posterior, excluded=NO_CONFUSIONS))
        elif any(len(words) != 1 for words, _ in alternatives):
            positions.append(PinchedPosition(edge.word, best_posterior, excluded=MULTIWORD_ALIGNMENT))
        else:
            positions.append(PinchedPosition(edge.word, best_posterior, confusions=alternatives))
        segment = []
        segment_start = edge.dst
    return PinchedAlignment(positions)


def one_best_confidence(lattice: Lattice, best: Optional[Sequence[Edge]] = None) -> float:
    """1-best 置信度：1-best 边后验的几何平均"""
    path = list(best) if best is not None else one_best(lattice)
    posteriors = edge_posteriors(lattice)
    logs = [math.log(max(posteriors[e.index], 1e-300)) for e in path]
    return math.exp(math.fsum(logs) / len(logs))
