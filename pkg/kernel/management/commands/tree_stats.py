import numpy as np

from kernel.analytics import TreeAnalyzer
from kernel.integrate import membership

from ._base import KernelCommand


class Command(KernelCommand):
    help = 'Depth, node counts and membership query statistics of the CSG tree of a scene'
    command_name = 'tree_stats'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--rebalance', action='store_true', help='Also report the rebalanced tree')
        parser.add_argument('--samples', type=int, default=0,
                            help='Classify this many seeded random points in the bounding box to count queries per node')
        parser.add_argument('--seed', type=int, default=0)

    def sample(self, root, options):
        lo, hi = root.bounding_box()
        rng = np.random.default_rng(options['seed'])
        points = lo + (hi - lo) * rng.random((options['samples'], 3))
        root.reset_counters()
        inside = membership(root, points, options.get('threads'))
        return {
            'samples': options['samples'],
            'inside': int(inside.sum()),
            'queries': TreeAnalyzer.query_counts(root),
            'pruning_ratio': TreeAnalyzer.pruning_ratio(root),
        }

    def run(self, scene, options):
        root = scene.root
        report = TreeAnalyzer.tree_report(root)
        lines = [
            f"depth {report['depth']}",
            f"nodes {report['nodes']}",
            f"leaves {report['leaves']}",
            *(f"  {kind} {count}" for kind, count in report['node_counts'].items()),
        ]
        if options['samples'] > 0:
            report['sampling'] = self.sample(root, options)
            lines.append(f"pruning_ratio {report['sampling']['pruning_ratio']:.4f} over {options['samples']} samples")
        if options['rebalance']:
            balanced, change = TreeAnalyzer.rebalance_report(root)
            report['rebalanced'] = change
            lines.append(f"rebalanced depth {change['depth_before']} -> {change['depth_after']}")
            if options['samples'] > 0:
                report['rebalanced']['sampling'] = self.sample(balanced, options)
                lines.append(f"rebalanced pruning_ratio {report['rebalanced']['sampling']['pruning_ratio']:.4f}")
        return report, lines
