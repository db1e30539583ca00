"""
计数前缀树管理器

把 NGramStore 中的 n-gram 按文本顺序组织成前缀树：
根节点下是一元词，(a, b) 挂在 (a) 下，(a, b, c) 挂在 (a, b) 下。
用于查看某个历史的全部后继词及其计数。
"""

from typing import Dict, List, Optional, Sequence

from treelib import Node, Tree

from .corpus import Vocabulary
from .ngram import Gram, NGramStore

ROOT_ID = "root"


def _node_id(gram: Sequence[int]) -> str:
    return " ".join(str(w) for w in gram)


class CountTreeManager:
    """计数前缀树管理器类"""

    def __init__(self, vocab: Optional[Vocabulary] = None):
        """
        初始化树管理器

        Args:
            vocab: 词表，提供时节点标签显示词而不是 id
        """
        self.vocab = vocab
        self.tree = Tree()

    def _tag(self, gram: Gram, count: int) -> str:
        word = self.vocab.id_to_word[gram[-1]] if self.vocab is not None else str(gram[-1])
        return f"{word} ({count})"

    def create_tree_from_store(
        self,
        store: NGramStore,
        max_depth: Optional[int] = None,
        min_count: int = 1,
    ) -> Tree:
        """
        从计数存储创建前缀树

        Args:
            store: 计数存储
            max_depth: 最大深度（即最高阶数），None 表示 store.max_order
            min_count: 计数下限，低于下限的 n-gram 不建节点

        Returns:
            构建的树结构
        """
        depth = store.max_order if max_depth is None else min(max_depth, store.max_order)
        self.tree = Tree()
        self.tree.create_node(identifier=ROOT_ID, tag=f"<root> ({store.total_tokens})")

        # 前缀的计数不小于 n-gram 本身，按阶数排序即可保证父节点先建
        grams = sorted(
            (g for g, c in store.counts.items() if len(g) <= depth and c >= min_count),
            key=lambda g: (len(g), g),
        )
        for gram in grams:
            parent = ROOT_ID if len(gram) == 1 else _node_id(gram[:-1])
            if not self.tree.contains(parent):
                continue
            count = store.counts[gram]
            self.tree.create_node(
                identifier=_node_id(gram),
                tag=self._tag(gram, count),
                parent=parent,
                data=count,
            )
        return self.tree

    def show_tree_structure(self) -> str:
        """
        渲染树结构

        Returns:
            树的文本表示；空树返回提示文字
        """
        if self.tree.size() <= 1:
            return "树结构为空"
        return self.tree.show(stdout=False, key=lambda node: node.identifier)

    def get_tree_statistics(self) -> Dict[int, int]:
        """
        获取树结构统计信息

        Returns:
            阶数 -> 节点数
        """
        stats: Dict[int, int] = {}
        if self.tree.size() == 0:
            return stats
        for node_id in self.tree.expand_tree(mode=Tree.DEPTH, sorting=False):
            if node_id == ROOT_ID:
                continue
            order = self.tree.level(node_id)
            stats[order] = stats.get(order, 0) + 1
        return stats

    def find_node_by_gram(self, gram: Sequence[int]) -> Optional[Node]:
        """
        根据文本顺序的 n-gram 查找节点

        Args:
            gram: id 序列

        Returns:
            找到的节点，如果不存在返回None
        """
        if not gram:
            return self.tree.get_node(ROOT_ID)
        return self.tree.get_node(_node_id(gram))

    def get_children(self, gram: Sequence[int]) -> List[Node]:
        """
        获取某个历史的全部后继节点，按计数降序、id 升序

        Args:
            gram: 文本顺序的历史，空序列表示根

        Returns:
            子节点列表，历史不存在时为空
        """
        node = self.find_node_by_gram(gram)
        if node is None:
            return []
        children = self.tree.children(node.identifier)
        return sorted(children, key=lambda n: (-n.data, int(n.identifier.split()[-1])))
