"""
Django test settings for the madf dialog-agent toolkit.
"""

import tempfile
from pathlib import Path

from .base import *  # noqa: F403
from .base import LOGGING

DEBUG = False

SECRET_KEY = "django-insecure-test-key-only"  # noqa: S105

# Tests never write into the real artifact root; fixtures override this per test.
MADF_RUN_DIR = Path(tempfile.gettempdir()) / "madf-test-runs"

MADF_EVAL_WORKERS = 2

LOGGING["loggers"]["apps"]["level"] = "WARNING"
