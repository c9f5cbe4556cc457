from dataclasses import replace

import numpy as np
from django.core.management.base import CommandError

from kernel.exporters import write_vtk
from kernel.fcm import FACES, FcmModel, Material
from kernel.scene import Analysis
from kernel.surface import marching_cubes, refine_vertices

from ._base import EXIT_USAGE, KernelCommand, fmt

FREE = ('free', 'none', '-')
SURFACE_REFINE = 10


def parse_dirichlet(entries):
    """``FACE UX UY UZ`` flag values to Dirichlet records; 'free' leaves a component unconstrained."""
    records = []
    for face, *components in entries:
        if face not in FACES:
            raise CommandError(f"unknown face '{face}', expected one of {', '.join(FACES)}", returncode=EXIT_USAGE)
        try:
            value = [None if c.lower() in FREE else float(c) for c in components]
        except ValueError as e:
            raise CommandError(f"bad Dirichlet value: {e}", returncode=EXIT_USAGE) from e
        records.append({'face': face, 'value': value})
    return records


def build_model(scene, analysis, box=None):
    """Finite cell model of a scene with the constraints and loads of ``analysis`` applied."""
    lo, hi = box if box is not None else scene.analysis_box()
    model = FcmModel(
        scene.root, lo, hi, analysis.cells,
        degree=analysis.degree,
        material=analysis.material,
        k_max=analysis.k_max,
        q=None if analysis.q is None else float(analysis.q),
        body_load=analysis.body_load,
    )
    for bc in analysis.dirichlet:
        face = bc['face'] if isinstance(bc['face'], str) else tuple(bc['face'])
        model.apply_strong_dirichlet(face, bc['value'], bc.get('gradient'))
    for load in analysis.neumann:
        resolution = load.get('resolution', analysis.mesh_resolution)
        soup = refine_vertices(marching_cubes(scene.root, lo, hi, resolution), scene.root, SURFACE_REFINE)
        model.apply_neumann(soup, traction=load.get('traction'), pressure=load.get('pressure'), selector=load.get('selector'))
    return model


class Command(KernelCommand):
    help = 'Finite cell linear elasticity analysis of a scene'
    command_name = 'solve'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_box_argument(parser)
        parser.add_argument('--cells', type=int, nargs=3, metavar=('NX', 'NY', 'NZ'), help='Finite cells per axis')
        parser.add_argument('--degree', '-p', type=int, help='Polynomial degree of the shape functions')
        parser.add_argument('--depth', type=int, help='Octree depth k_max of the cell integration')
        parser.add_argument('--q', type=float, help='Alpha exponent: 10^-q in the fictitious domain ("inf" for zero)')
        parser.add_argument('--young', type=float, help="Young's modulus")
        parser.add_argument('--poisson', type=float, help='Poisson ratio')
        parser.add_argument('--dirichlet', nargs=4, action='append', metavar=('FACE', 'UX', 'UY', 'UZ'),
                            help="Strong Dirichlet data on a box face; replaces the scene's list (repeatable)")
        parser.add_argument('--method', choices=('direct', 'iterative'), help='Linear solver (default: by system size)')
        parser.add_argument('--vtk', help='Write the recovered surface with displacement and von Mises stress')
        parser.add_argument('--resolution', type=int, help='Marching cubes resolution of the VTK surface')

    def analysis(self, scene, options):
        analysis = scene.analysis if scene.analysis is not None else Analysis()
        changes = {}
        for key in ('cells', 'degree', 'q'):
            if options.get(key) is not None:
                changes[key] = options[key]
        if options.get('depth') is not None:
            changes['k_max'] = options['depth']
        if options.get('resolution') is not None:
            changes['mesh_resolution'] = options['resolution']
        if options.get('young') is not None or options.get('poisson') is not None:
            young = options.get('young') if options.get('young') is not None else analysis.material.young
            poisson = options.get('poisson') if options.get('poisson') is not None else analysis.material.poisson
            changes['material'] = Material(young, poisson)
        if options.get('dirichlet'):
            changes['dirichlet'] = parse_dirichlet(options['dirichlet'])
        return replace(analysis, **changes)

    def run(self, scene, options):
        analysis = self.analysis(scene, options)
        model = build_model(scene, analysis, self.box(scene, options) if options.get('box') else None)
        model.assemble(options.get('threads'))
        solution = model.solve(options.get('method'))
        summary = solution.summary()
        summary.update({'cells': list(model.cells), 'degree': model.degree, 'k_max': model.k_max, 'q': model.q})
        lines = [
            f"active_cells {model.n_active} of {model.n_cells}",
            f"dofs {model.n_dofs}",
            f"strain_energy {fmt(summary['strain_energy'])}",
            f"displacement_l2 {fmt(summary['displacement_l2'])}",
            f"max_displacement {fmt(summary['max_displacement'])}",
        ]
        if options.get('vtk'):
            soup = marching_cubes(scene.root, model.lo, model.hi, analysis.mesh_resolution)
            soup = solution.annotate(refine_vertices(soup, scene.root, SURFACE_REFINE))
            if soup.is_empty:
                lines.append(self.style.WARNING("empty surface, no VTK written"))
            else:
                write_vtk(soup, options['vtk'])
                summary['max_von_mises'] = float(np.nanmax(soup.point_data['von_mises']))
                lines.append(self.style.SUCCESS(f"VTK written to {options['vtk']}"))
        return summary, lines
