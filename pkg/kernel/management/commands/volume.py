import math

import numpy as np

from kernel import conf
from kernel.analytics import TreeAnalyzer
from kernel.exporters import write_leaf_dump
from kernel.integrate import integrate_alpha, partition

from ._base import KernelCommand, fmt


class Command(KernelCommand):
    help = 'Volume of a scene by composed octree integration'
    command_name = 'volume'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_box_argument(parser)
        parser.add_argument('--depth', type=int, default=None, help='Octree depth k_max (default KERNEL_PARTITION_DEPTH)')
        parser.add_argument('--order', type=int, default=None, help='Gauss order per direction (default KERNEL_VOLUME_GAUSS_ORDER)')
        parser.add_argument('--leaf-dump', help='Write one JSON record per partition leaf to this file')

    def run(self, scene, options):
        depth = conf.get('PARTITION_DEPTH') if options.get('depth') is None else options['depth']
        order = options.get('order') or conf.get('VOLUME_GAUSS_ORDER')
        lo, hi = self.box(scene, options)
        tree = partition(lo, hi, scene.root, depth, order, options.get('threads'))
        value = integrate_alpha(tree, lambda p: np.ones(len(p)), scene.root, math.inf, order, options.get('threads'))
        report = TreeAnalyzer.partition_report(tree)
        lines = [f"volume {fmt(value)}", f"leaves {report['leaves']} (depth {report['depth']}, {report['labels']['cut']} cut)"]
        if options.get('leaf_dump'):
            write_leaf_dump(tree, options['leaf_dump'])
            lines.append(self.style.SUCCESS(f"leaf dump written to {options['leaf_dump']}"))
        return {'volume': value, 'depth': depth, 'order': order, 'partition': report}, lines
