from django.contrib import admin

from .models import RunRecord


@admin.register(RunRecord)
class RunRecordAdmin(admin.ModelAdmin):
    list_display = ['timestamp', 'command', 'scene_name', 'status', 'duration_seconds', 'sha1_short']
    list_filter = ['command', 'status', 'timestamp']
    search_fields = ['scene_name', 'scene_sha1', 'error_message']
    readonly_fields = ['timestamp', 'scene_sha1', 'parameters', 'summary', 'duration_seconds']

    fieldsets = (
        ('Run', {
            'fields': ('timestamp', 'command', 'status', 'duration_seconds', 'error_message')
        }),
        ('Scene', {
            'fields': ('scene_name', 'scene_sha1')
        }),
        ('Data', {
            'fields': ('parameters', 'summary'),
            'classes': ('collapse',)
        }),
    )

    def sha1_short(self, obj):
        return obj.scene_sha1[:8]
    sha1_short.short_description = 'Scene SHA-1'
