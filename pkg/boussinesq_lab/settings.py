"""
Django settings for boussinesq_lab project.

The project has no web surface: Django provides the ORM for run records,
management commands for the experiment harness and the test runner.
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables
load_dotenv(BASE_DIR / '.env')

SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'django-insecure-boussinesq-lab-local-only')

DEBUG = os.getenv('DJANGO_DEBUG', 'false').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'rest_framework',
    'experiments',
]


# Database

DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.getenv('BOUSSINESQ_DATABASE', str(BASE_DIR / 'db.sqlite3')),
    }
}


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Solver and harness defaults

BOUSSINESQ = {
    'OUTPUT_DIR': os.getenv('BOUSSINESQ_OUTPUT_DIR', str(BASE_DIR / 'runs')),
    'ITER_TOL': float(os.getenv('BOUSSINESQ_ITER_TOL', 1e-14)),
    'MAX_ITERS': int(os.getenv('BOUSSINESQ_MAX_ITERS', 100)),
    'EVAL_POINTS': int(os.getenv('BOUSSINESQ_EVAL_POINTS', 2048)),
    'SNAPSHOT_STRIDE': int(os.getenv('BOUSSINESQ_SNAPSHOT_STRIDE', 50)),
}


# Logging

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'experiments': {
            'handlers': ['console'],
            'level': LOG_LEVEL,
            'propagate': False,
        },
    },
}
