import logging
import time

from django.db import models

from . import conf

logger = logging.getLogger(__name__)


class RunRecord(models.Model):
    """One batch command or API run, stored when KERNEL_RECORD_RUNS is on."""
    timestamp = models.DateTimeField(auto_now_add=True)
    command = models.CharField(max_length=30)
    scene_name = models.CharField(max_length=200, blank=True)
    scene_sha1 = models.CharField(max_length=40, blank=True)
    parameters = models.JSONField(default=dict, blank=True)
    summary = models.JSONField(default=dict, blank=True)
    duration_seconds = models.FloatField(blank=True, null=True)
    status = models.CharField(
        max_length=20,
        choices=[
            ('ok', 'OK'),
            ('invalid', 'Invalid input'),
            ('numeric', 'Numeric failure'),
        ],
        default='ok'
    )
    error_message = models.TextField(blank=True, null=True)

    class Meta:
        ordering = ['-timestamp']

    def __str__(self):
        return f"{self.command} {self.scene_name} ({self.status})"

    @classmethod
    def record(cls, command, scene=None, parameters=None, summary=None, started=None, status='ok', error=None):
        """Store a run if recording is enabled; never lets a database problem fail the run."""
        if not conf.get('RECORD_RUNS'):
            return None
        try:
            return cls.objects.create(
                command=command,
                scene_name=getattr(scene, 'name', '') or '',
                scene_sha1=scene.digest() if scene is not None else '',
                parameters=parameters or {},
                summary=summary or {},
                duration_seconds=None if started is None else time.perf_counter() - started,
                status=status,
                error_message=error,
            )
        except Exception as e:
            logger.warning(f"could not record {command} run: {e}")
            return None
