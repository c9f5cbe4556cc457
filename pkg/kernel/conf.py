"""
Effective kernel settings.

Library modules read their defaults from here instead of from
``django.conf.settings`` directly, so the geometry code still works when it is
imported outside a configured project (it then falls back to the built-in
defaults below).
"""
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

DEFAULTS = {
    'THREADS': 1,
    'ALPHA_EXPONENT': 8.0,
    'PARTITION_DEPTH': 4,
    'VOLUME_GAUSS_ORDER': 2,
    'CURVE_SAMPLES_PER_SPAN': 16,
    'SKETCH_QUADTREE_DEPTH': 6,
    'LOFT_ARC_SAMPLES': 256,
    'DIRECT_SOLVER_MAX_DOFS': 200000,
    'ITERATIVE_TOL': 1e-10,
    'RECORD_RUNS': False,
}


def get(name):
    try:
        return getattr(settings, f'KERNEL_{name}', DEFAULTS[name])
    except ImproperlyConfigured:
        # settings not configured (plain library use)
        return DEFAULTS[name]
