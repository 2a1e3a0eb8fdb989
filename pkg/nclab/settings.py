"""
Django settings for the nclab project.

The project has no web surface: Django provides the management commands,
the settings layer, logging configuration and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/4.2/ref/settings/
"""

import os

# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Only used by Django internals; nothing here is signed or served.
SECRET_KEY = os.environ.get("NCLAB_SECRET_KEY", "nclab-local-only")

DEBUG = os.environ.get("NCLAB_DEBUG", "") == "1"

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = [
    "collapse.apps.CollapseConfig",
]

MIDDLEWARE = []

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {},
    },
]

# Run logs live on disk as CSV/JSON, no database is used.
DATABASES = {}

# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True


# Lab configuration, read by the management commands only. Core modules
# receive every value as an explicit argument.

NCLAB = {
    "DATA_DIR": os.environ.get("NCLAB_DATA_DIR", os.path.join(BASE_DIR, "data")),
    "OUTPUT_DIR": os.environ.get("NCLAB_OUTPUT_DIR", os.path.join(BASE_DIR, "runs")),
    "FIXTURES_DIR": os.path.join(BASE_DIR, "fixtures"),
    "DEFAULT_BATCH_SIZE": 128,
    "DEFAULT_LEAD": 62,
    "DEFAULT_WORKERS": int(os.environ.get("NCLAB_WORKERS", "1")),
}

LOG_LEVEL = os.environ.get("NCLAB_LOG_LEVEL", "INFO")

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "verbose": {
            "format": "{levelname} {asctime} {name} {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "verbose",
        },
    },
    "loggers": {
        "collapse": {
            "handlers": ["console"],
            "level": LOG_LEVEL,
            "propagate": False,
        },
    },
}
