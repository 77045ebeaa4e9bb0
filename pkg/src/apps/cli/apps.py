"""CLI app configuration."""

from django.apps import AppConfig


class CliConfig(AppConfig):
    """Configuration for the madf management commands."""

    name = "apps.cli"
    verbose_name = "Command line"
