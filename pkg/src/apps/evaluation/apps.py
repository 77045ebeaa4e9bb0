"""Evaluation app configuration."""

from django.apps import AppConfig


class EvaluationConfig(AppConfig):
    """Configuration for the metric suite."""

    name = "apps.evaluation"
    verbose_name = "Evaluation"
