from kernel.exporters import write_stl, write_vtk
from kernel.surface import marching_cubes, refine_vertices

from ._base import KernelCommand, fmt


class Command(KernelCommand):
    help = 'Recover a triangulated boundary by marching cubes and export it'
    command_name = 'mesh'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_box_argument(parser)
        parser.add_argument('--resolution', type=int, default=None,
                            help="Grid cells per axis (default: the scene's analysis mesh resolution, else 32)")
        parser.add_argument('--refine', type=int, default=0, help='Bisection steps per vertex (0 keeps edge midpoints)')
        parser.add_argument('--stl', help='Write a binary STL file')
        parser.add_argument('--vtk', help='Write a legacy ASCII VTK file')

    def run(self, scene, options):
        resolution = options.get('resolution')
        if resolution is None:
            resolution = scene.analysis.mesh_resolution if scene.analysis is not None else 32
        lo, hi = (None, None) if not options.get('box') else self.box(scene, options)
        soup = marching_cubes(scene.root, lo, hi, resolution)
        soup = refine_vertices(soup, scene.root, options['refine'])
        lines = [f"triangles {len(soup)}", f"area {fmt(soup.area())}", f"signed_volume {fmt(soup.signed_volume())}"]
        for key, writer in (('stl', write_stl), ('vtk', write_vtk)):
            if options.get(key) and soup.is_empty:
                lines.append(self.style.WARNING(f"empty surface, no {key.upper()} written"))
            elif options.get(key):
                writer(soup, options[key])
                lines.append(self.style.SUCCESS(f"{key.upper()} written to {options[key]}"))
        result = {
            'triangles': len(soup),
            'area': soup.area(),
            'signed_volume': soup.signed_volume(),
            'resolution': resolution,
            'refine': options['refine'],
        }
        return result, lines
