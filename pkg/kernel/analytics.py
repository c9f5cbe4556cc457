from collections import Counter

from .csg import Boolean, Leaf, Transform, rebalance
from .integrate import CUT


class TreeAnalyzer:
    """Shape and query statistics of CSG trees and integration partitions"""

    @staticmethod
    def node_kind(node):
        if isinstance(node, Boolean):
            return node.op
        if isinstance(node, Transform):
            return node.label
        if isinstance(node, Leaf):
            return getattr(node.solid, 'kind', type(node.solid).__name__.lower())
        return type(node).__name__.lower()

    @staticmethod
    def node_counts(root):
        return dict(sorted(Counter(TreeAnalyzer.node_kind(n) for n in root.iter_nodes()).items()))

    @staticmethod
    def leaf_depths(root):
        """Histogram of leaf depths below ``root``."""
        counts = Counter()
        stack = [(root, 0)]
        while stack:
            node, level = stack.pop()
            if not node.children:
                counts[level] += 1
            stack.extend((child, level + 1) for child in node.children)
        return dict(sorted(counts.items()))

    @staticmethod
    def query_counts(root):
        """Membership queries that reached each node, in depth-first order."""
        return [
            {'node': TreeAnalyzer.node_kind(node), 'name': getattr(node, 'name', None), 'queries': node.queries}
            for node in root.iter_nodes()
        ]

    @staticmethod
    def pruning_ratio(root):
        # share of leaf evaluations saved against evaluating every leaf for every root query
        if not root.queries:
            return 0.0
        leaves = root.leaves()
        reached = sum(leaf.queries for leaf in leaves)
        return 1.0 - reached / (root.queries * len(leaves))

    @staticmethod
    def tree_report(root):
        return {
            'depth': root.depth,
            'nodes': root.node_count,
            'leaves': len(root.leaves()),
            'node_counts': TreeAnalyzer.node_counts(root),
            'leaf_depths': TreeAnalyzer.leaf_depths(root),
        }

    @staticmethod
    def rebalance_report(root):
        """Depth and node count before and after ``rebalance``."""
        balanced = rebalance(root)
        return balanced, {
            'depth_before': root.depth,
            'depth_after': balanced.depth,
            'nodes_before': root.node_count,
            'nodes_after': balanced.node_count,
        }

    @staticmethod
    def partition_report(tree):
        leaves = tree.leaves()
        per_level = Counter(leaf.level for leaf in leaves)
        cut_per_level = Counter(leaf.level for leaf in leaves if leaf.label == CUT)
        return {
            'depth': tree.depth(),
            'leaves': len(leaves),
            'labels': tree.label_counts(),
            'leaves_per_level': dict(sorted(per_level.items())),
            'cut_leaves_per_level': dict(sorted(cut_per_level.items())),
        }
