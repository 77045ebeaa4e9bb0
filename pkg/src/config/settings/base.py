"""
Django base settings for the madf dialog-agent toolkit.
"""

from pathlib import Path

import environ

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

env = environ.Env(
    DEBUG=(bool, False),
    MADF_LOG_LEVEL=(str, "INFO"),
    MADF_EVAL_WORKERS=(int, 4),
)

# Read .env file from project root (parent of src/)
env_file = BASE_DIR.parent / ".env"
if env_file.exists():
    environ.Env.read_env(str(env_file))

SECRET_KEY = env("SECRET_KEY", default="django-insecure-madf-has-no-web-surface")

DEBUG = env("DEBUG")

ALLOWED_HOSTS: list[str] = []

# Application definition
INSTALLED_APPS = [
    "apps.numerics",
    "apps.world",
    "apps.agents",
    "apps.training",
    "apps.evaluation",
    "apps.cli",
]

# Runs live on disk; nothing is stored in a database.
DATABASES: dict[str, dict[str, str]] = {}

# Internationalization
LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

# Artifact root: datasets under <MADF_RUN_DIR>/<RUN_ID>/, trained systems under <RUN_ID>.<system>/
MADF_RUN_DIR = Path(env("MADF_RUN_DIR", default=str(BASE_DIR.parent / "runs")))

# Worker threads for scene-parallel evaluation
MADF_EVAL_WORKERS: int = env("MADF_EVAL_WORKERS")

MADF_LOG_LEVEL: str = env("MADF_LOG_LEVEL").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "console": {
            "format": "%(asctime)s %(levelname)-8s %(name)s: %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "console",
        },
    },
    "loggers": {
        "apps": {
            "handlers": ["console"],
            "level": MADF_LOG_LEVEL,
            "propagate": False,
        },
    },
    "root": {
        "handlers": ["console"],
        "level": "WARNING",
    },
}
