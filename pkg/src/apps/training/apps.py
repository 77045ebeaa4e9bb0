"""Training app configuration."""

from django.apps import AppConfig


class TrainingConfig(AppConfig):
    """Configuration for the training regimes."""

    name = "apps.training"
    verbose_name = "Training"
