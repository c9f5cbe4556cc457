"""
Shared plumbing of the kernel commands: scene loading, exit codes, run
recording and output formatting.

Exit codes: 0 success, 1 usage, 2 parse or validation error, 3 numeric failure.
"""
import json
import logging
import math
import sys
import time

import numpy as np
from django.core.management.base import BaseCommand, CommandError, CommandParser

from kernel.exceptions import (
    ConstructionError,
    KernelError,
    ParameterError,
    SceneError,
    SketchValidationError,
    UnsupportedBoundaryCondition,
)
from kernel.models import RunRecord
from kernel.scene import parse_scene

logger = logging.getLogger(__name__)

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NUMERIC = 3

VALIDATION_ERRORS = (SceneError, ConstructionError, ParameterError, SketchValidationError, UnsupportedBoundaryCondition)


class UsageParser(CommandParser):
    def error(self, message):
        if self.called_from_command_line:
            self.print_usage(sys.stderr)
            self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")
        raise CommandError(f"Error: {message}", returncode=EXIT_USAGE)


def fmt(value):
    """17 significant digits, the precision golden files are compared at."""
    return f"{value:.17g}"


def fmt_vector(values):
    return ' '.join(fmt(float(v)) for v in values)


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class KernelCommand(BaseCommand):
    """Base for commands that run on one scene file."""
    command_name = None

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # usage errors exit with 1, not argparse's 2
        parser.__class__ = UsageParser
        return parser

    def add_arguments(self, parser):
        parser.add_argument('scene', help='Scene file, or the name of a bundled scene')
        parser.add_argument('--json', action='store_true', help='Print the result as JSON')
        parser.add_argument('--threads', type=int, default=None, help='Worker threads (default KERNEL_THREADS)')

    def add_box_argument(self, parser):
        parser.add_argument('--box', type=float, nargs=6, metavar=('XMIN', 'YMIN', 'ZMIN', 'XMAX', 'YMAX', 'ZMAX'),
                            help="Box to work in (default: the analysis box, else the scene bounding box)")

    def box(self, scene, options):
        if options.get('box'):
            values = np.asarray(options['box'], dtype=float)
            return values[:3], values[3:]
        return scene.analysis_box()

    def load_scene(self, name):
        try:
            return parse_scene(name)
        except FileNotFoundError as e:
            logger.error(str(e))
            raise CommandError(str(e), returncode=EXIT_INVALID) from e
        except SceneError as e:
            logger.error(f"invalid scene {name}: {e}")
            raise CommandError(f"invalid scene: {e}", returncode=EXIT_INVALID) from e

    def handle(self, *args, **options):
        started = time.perf_counter()
        scene = self.load_scene(options['scene'])
        parameters = {k: v for k, v in options.items()
                      if k not in ('scene', 'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color',
                                   'force_color', 'skip_checks', 'json', 'stdout', 'stderr')}
        try:
            result, lines = self.run(scene, options)
        except CommandError:
            raise
        except VALIDATION_ERRORS as e:
            logger.error(f"{self.command_name} on '{scene.name}': {e}")
            RunRecord.record(self.command_name, scene, to_jsonable(parameters), started=started, status='invalid', error=str(e))
            raise CommandError(str(e), returncode=EXIT_INVALID) from e
        except KernelError as e:
            logger.error(f"{self.command_name} on '{scene.name}' failed: {e}")
            RunRecord.record(self.command_name, scene, to_jsonable(parameters), started=started, status='numeric', error=str(e))
            raise CommandError(str(e), returncode=EXIT_NUMERIC) from e
        result = to_jsonable(result)
        RunRecord.record(self.command_name, scene, to_jsonable(parameters), result, started)
        if options.get('json'):
            self.stdout.write(json.dumps({'scene': scene.name, **result}, indent=2, sort_keys=True))
        else:
            for line in lines:
                self.stdout.write(line)
        logger.info(f"{self.command_name} on '{scene.name}' done in {time.perf_counter() - started:.2f}s")

    def run(self, scene, options):
        """Return ``(result, lines)``: a JSON-able dict and the plain text output."""
        raise NotImplementedError
