"""World app configuration."""

from django.apps import AppConfig


class WorldConfig(AppConfig):
    """Configuration for the synthetic scene world."""

    name = "apps.world"
    verbose_name = "World"
