"""
Django settings for the fcmbuilder project.

Kernel defaults (``KERNEL_*``) are read with python-decouple so that batch
runs can be tuned from the environment or a ``.env`` file without touching
scene files. See https://docs.djangoproject.com/en/5.2/ref/settings/ for the
Django part.
"""
from pathlib import Path
from decouple import config

import dj_database_url

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-fcmbuilder-local-only')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = [
    'localhost',
    '127.0.0.1',
    'testserver',
    '.railway.app',
    '.up.railway.app',
]

# Application definition
INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'kernel',
]

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'fcmbuilder.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'fcmbuilder.wsgi.application'

# Database
# SQLite next to the project unless DATABASE_URL points elsewhere (Postgres on Railway).
DATABASES = {
    'default': dj_database_url.config(
        default=f"sqlite:///{BASE_DIR / 'db.sqlite3'}",
        conn_max_age=600,
    )
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = True
USE_TZ = True

STATIC_URL = '/static/'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# === KERNEL DEFAULTS ===
KERNEL_THREADS = config('KERNEL_THREADS', default=1, cast=int)
KERNEL_ALPHA_EXPONENT = config('KERNEL_ALPHA_EXPONENT', default=8.0, cast=float)
KERNEL_PARTITION_DEPTH = config('KERNEL_PARTITION_DEPTH', default=4, cast=int)
KERNEL_VOLUME_GAUSS_ORDER = config('KERNEL_VOLUME_GAUSS_ORDER', default=2, cast=int)
KERNEL_CURVE_SAMPLES_PER_SPAN = config('KERNEL_CURVE_SAMPLES_PER_SPAN', default=16, cast=int)
KERNEL_SKETCH_QUADTREE_DEPTH = config('KERNEL_SKETCH_QUADTREE_DEPTH', default=6, cast=int)
KERNEL_LOFT_ARC_SAMPLES = config('KERNEL_LOFT_ARC_SAMPLES', default=256, cast=int)
KERNEL_DIRECT_SOLVER_MAX_DOFS = config('KERNEL_DIRECT_SOLVER_MAX_DOFS', default=200000, cast=int)
KERNEL_ITERATIVE_TOL = config('KERNEL_ITERATIVE_TOL', default=1e-10, cast=float)
KERNEL_RECORD_RUNS = config('KERNEL_RECORD_RUNS', default=False, cast=bool)
KERNEL_LOG_LEVEL = config('KERNEL_LOG_LEVEL', default='INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'kernel': {
            'handlers': ['console'],
            'level': KERNEL_LOG_LEVEL,
            'propagate': False,
        },
    },
}
