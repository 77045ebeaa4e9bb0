"""
Django development settings for the madf dialog-agent toolkit.
"""

from .base import *  # noqa: F403
from .base import LOGGING, env

DEBUG = True

SECRET_KEY = "django-insecure-dev-key-do-not-use-in-production"  # noqa: S105

# Chattier logs in development unless MADF_LOG_LEVEL says otherwise
LOGGING["loggers"]["apps"]["level"] = env("MADF_LOG_LEVEL", default="DEBUG").upper()
