import numpy as np
from django.core.management.base import CommandError

from kernel.integrate import membership

from ._base import EXIT_INVALID, EXIT_USAGE, KernelCommand, fmt_vector


def read_points(path):
    """Whitespace separated x y z per line; blank lines and '#' comments are skipped."""
    rows = []
    with open(path, encoding='utf-8') as fh:
        for number, line in enumerate(fh, start=1):
            line = line.split('#', 1)[0].strip()
            if not line:
                continue
            values = line.replace(',', ' ').split()
            if len(values) != 3:
                raise ValueError(f"{path}:{number}: expected three coordinates")
            rows.append([float(v) for v in values])
    return np.array(rows, dtype=float).reshape(-1, 3)


class Command(KernelCommand):
    help = 'Classify points against a scene: inside or outside'
    command_name = 'pmc'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--point', type=float, nargs=3, action='append', metavar=('X', 'Y', 'Z'),
                            help='Point to classify (repeatable)')
        parser.add_argument('--points-file', help='File of points, one "x y z" per line')

    def run(self, scene, options):
        points = [np.asarray(p, dtype=float) for p in options.get('point') or []]
        if options.get('points_file'):
            try:
                points.extend(read_points(options['points_file']))
            except (OSError, ValueError) as e:
                raise CommandError(str(e), returncode=EXIT_INVALID) from e
        if not points:
            raise CommandError("give --point or --points-file", returncode=EXIT_USAGE)
        pts = np.vstack(points)
        inside = membership(scene.root, pts, options.get('threads'))
        labels = ['inside' if flag else 'outside' for flag in inside]
        lines = [f"{fmt_vector(p)} {label}" for p, label in zip(pts, labels)]
        return {'points': pts, 'result': labels, 'inside': int(inside.sum())}, lines
