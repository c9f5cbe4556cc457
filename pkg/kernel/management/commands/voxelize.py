from django.core.management.base import CommandError

from kernel.exporters import voxelize

from ._base import EXIT_USAGE, KernelCommand, fmt


class Command(KernelCommand):
    help = 'Write the dense occupancy grid of a scene (cell-centre membership)'
    command_name = 'voxelize'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_box_argument(parser)
        parser.add_argument('--dims', type=int, nargs=3, metavar=('NX', 'NY', 'NZ'), help='Cells per axis')
        parser.add_argument('--resolution', type=int, default=32, help='Cells per axis when --dims is not given')
        parser.add_argument('--output', '-o', required=True, help='Occupancy grid file to write')

    def run(self, scene, options):
        dims = options.get('dims') or [options['resolution']] * 3
        if min(dims) < 1:
            raise CommandError("grid dimensions must be positive", returncode=EXIT_USAGE)
        lo, hi = self.box(scene, options)
        grid = voxelize(scene.root, lo, hi, dims, options.get('threads'))
        grid.write(options['output'])
        lines = [
            f"dims {' '.join(str(n) for n in grid.dims)}",
            f"filled {grid.filled}",
            f"volume {fmt(grid.volume())}",
            self.style.SUCCESS(f"occupancy grid written to {options['output']}"),
        ]
        return {'dims': list(grid.dims), 'filled': grid.filled, 'volume': grid.volume(), 'output': options['output']}, lines
