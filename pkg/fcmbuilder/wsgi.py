"""
WSGI entry point for the fcmbuilder project, served by gunicorn
(``gunicorn fcmbuilder.wsgi:application``).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fcmbuilder.settings')

application = get_wsgi_application()
