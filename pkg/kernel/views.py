import json
import logging
import time

import numpy as np
from django.http import JsonResponse
from django.views.decorators.csrf import csrf_exempt
from django.views.decorators.http import require_http_methods

from . import __version__, conf
from .exceptions import KernelError, SceneError
from .integrate import volume
from .models import RunRecord
from .scene import parse_scene_data

logger = logging.getLogger(__name__)

SETTINGS_SHOWN = ('THREADS', 'ALPHA_EXPONENT', 'PARTITION_DEPTH', 'VOLUME_GAUSS_ORDER', 'RECORD_RUNS')
MAX_DEPTH = 8


def index(request):
    return JsonResponse({
        'status': 'ok',
        'kernel': __version__,
        'settings': {name.lower(): conf.get(name) for name in SETTINGS_SHOWN},
    })


def _load(request):
    """Decode the request body; returns (payload, scene) or raises ValueError / SceneError."""
    try:
        payload = json.loads(request.body)
    except json.JSONDecodeError as e:
        raise ValueError(f"Invalid JSON: {e}") from e
    if not isinstance(payload, dict) or 'scene' not in payload:
        raise ValueError("Request needs a 'scene' document")
    return payload, parse_scene_data(payload['scene'], default_name='request')


@csrf_exempt
@require_http_methods(["POST"])
def classify_points(request):
    """
    Point membership for a posted scene

    Expected JSON payload:
    {
        "scene": {... scene document ...},
        "points": [[x, y, z], ...]
    }
    """
    started = time.perf_counter()
    try:
        payload, scene = _load(request)
        points = np.asarray(payload.get('points', []), dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("'points' must be a list of [x, y, z] triples")
    except (ValueError, SceneError) as e:
        logger.error(f"pmc request rejected: {e}")
        return JsonResponse({'error': str(e)}, status=400)

    inside = scene.root.contains_many(points)
    result = ['inside' if flag else 'outside' for flag in inside]
    RunRecord.record('api_pmc', scene, {'points': len(points)}, {'inside': int(inside.sum())}, started)
    return JsonResponse({'scene': scene.name, 'result': result})


@csrf_exempt
@require_http_methods(["POST"])
def scene_volume(request):
    """
    Composed-integration volume of a posted scene

    Expected JSON payload:
    {
        "scene": {... scene document ...},
        "depth": 4,
        "order": 2
    }
    """
    started = time.perf_counter()
    try:
        payload, scene = _load(request)
        depth = int(payload.get('depth', conf.get('PARTITION_DEPTH')))
        order = int(payload.get('order', conf.get('VOLUME_GAUSS_ORDER')))
        if not 0 <= depth <= MAX_DEPTH or order < 1:
            raise ValueError(f"depth must be in 0..{MAX_DEPTH} and order at least 1")
    except (ValueError, TypeError, SceneError) as e:
        logger.error(f"volume request rejected: {e}")
        return JsonResponse({'error': str(e)}, status=400)

    params = {'depth': depth, 'order': order}
    try:
        value = volume(scene.root, k_max=depth, gauss_order=order)
    except KernelError as e:
        logger.error(f"volume of '{scene.name}' failed: {e}")
        RunRecord.record('api_volume', scene, params, started=started, status='numeric', error=str(e))
        return JsonResponse({'error': str(e)}, status=422)
    RunRecord.record('api_volume', scene, params, {'volume': value}, started)
    return JsonResponse({'scene': scene.name, 'volume': value, 'depth': depth, 'order': order})
