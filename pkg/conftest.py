# Mirrors the environment runtests.py sets up, so the suite runs under pytest.
import os

import django
from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tests.test_settings')
django.setup()
Celery().config_from_object({'task_always_eager': True})
