"""Numerics app configuration."""

from django.apps import AppConfig


class NumericsConfig(AppConfig):
    """Configuration for the tensor/autodiff engine."""

    name = "apps.numerics"
    verbose_name = "Numerics"
