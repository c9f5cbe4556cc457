from kernel import conf
from kernel.integrate import moments

from ._base import KernelCommand, fmt, fmt_vector


class Command(KernelCommand):
    help = 'Volume, centroid and second moments of a scene'
    command_name = 'moments'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_box_argument(parser)
        parser.add_argument('--depth', type=int, default=None, help='Octree depth k_max')
        parser.add_argument('--order', type=int, default=None, help='Gauss order per direction')

    def run(self, scene, options):
        depth = conf.get('PARTITION_DEPTH') if options.get('depth') is None else options['depth']
        lo, hi = self.box(scene, options)
        m = moments(scene.root, lo, hi, depth, options.get('order'))
        lines = [
            f"volume {fmt(m.volume)}",
            f"centroid {fmt_vector(m.centroid)}",
            *(f"second_moments {fmt_vector(row)}" for row in m.second_moments),
        ]
        return m.to_dict(), lines
