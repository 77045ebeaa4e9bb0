"""Agents app configuration."""

from django.apps import AppConfig


class AgentsConfig(AppConfig):
    """Configuration for the dialog agent networks."""

    name = "apps.agents"
    verbose_name = "Agents"
